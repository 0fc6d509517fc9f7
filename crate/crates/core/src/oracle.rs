//! Brute-force verifier: discretized queries, grid-searched best responses
//! and damped best-response dynamics.
//!
//! The analytic solvers never call into this module; tests and the CLI
//! compare the two.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subgame::{AuctionFormat, BiddingMode, Market, SubgameSolution};
use crate::valuation::{Advertiser, AdvertiserPair, ValuationError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 400,
            lo: 1e-3,
            hi: 50.0,
        }
    }
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        geometric(self.lo, self.hi, self.points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n_queries: usize,
    pub multiplier_grid: GridSpec,
    pub damping: f64,
    pub max_rounds: usize,
    pub convergence_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_queries: 2000,
            multiplier_grid: GridSpec::default(),
            damping: 0.5,
            max_rounds: 500,
            convergence_tol: 1e-4,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        let g = &self.multiplier_grid;
        let bad = |m: &str| Err(OracleError::Config(m.to_string()));
        if self.n_queries < 100 {
            return bad("n_queries must be at least 100");
        }
        if g.points < 10 {
            return bad("multiplier grid needs at least 10 points");
        }
        if !(g.lo > 0.0 && g.lo <= 0.5 && g.hi >= 10.0 && g.hi.is_finite()) {
            return bad("multiplier grid must be positive and cover [0.5, 10]");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be positive");
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return bad("convergence_tol must be positive");
        }
        Ok(())
    }

    /// Threshold agreement bound, two query cells.
    pub fn threshold_tol(&self) -> f64 {
        2.0 / self.n_queries as f64
    }
}

pub const REVENUE_REL_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid oracle config: {0}")]
    Config(String),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error("valuations do not decay on the half-line; cannot truncate")]
    UnboundedDomain,
    #[error("the oracle does not handle {0:?} bidding")]
    UnsupportedMode(BiddingMode),
    #[error("best-response dynamics did not converge in {rounds} rounds (last change {change:.3e})")]
    NoConvergence {
        rounds: usize,
        change: f64,
        state: Box<OracleSolution>,
    },
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k + 1 == n {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Valuations sampled on a uniform query grid and joined by cubic Hermite
/// cells, with exact integrals over partial cells so outcomes stay
/// continuous in the bids.
#[derive(Debug, Clone)]
pub struct DiscreteMarket {
    lo: f64,
    step: f64,
    n: usize,
    v: [Vec<f64>; 2],
    dv: [Vec<f64>; 2],
    prefix: [Vec<f64>; 2],
}

/// Tail level below which the half-line is cut off.
const TAIL_CUTOFF: f64 = 1e-12;

impl DiscreteMarket {
    pub fn new(pair: &AdvertiserPair, n_queries: usize) -> Result<Self, OracleError> {
        let d = pair.domain();
        let lo = d.lo();
        let hi = if d.hi().is_finite() {
            d.hi()
        } else {
            let scale = (pair.v1.value(lo) + pair.v2.value(lo)).max(1.0);
            let mut q = 1.0;
            while pair.v1.value(q).max(pair.v2.value(q)) > TAIL_CUTOFF * scale {
                q *= 2.0;
                if q > 1e6 {
                    return Err(OracleError::UnboundedDomain);
                }
            }
            q
        };
        let n = n_queries;
        let step = (hi - lo) / n as f64;
        let mut v = [Vec::with_capacity(n + 1), Vec::with_capacity(n + 1)];
        let mut dv = [Vec::with_capacity(n + 1), Vec::with_capacity(n + 1)];
        for k in 0..=n {
            let q = lo + step * k as f64;
            v[0].push(pair.v1.eval(q)?);
            v[1].push(pair.v2.eval(q)?);
            dv[0].push(pair.v1.derivative(q));
            dv[1].push(pair.v2.derivative(q));
        }
        let prefix = [0, 1].map(|i| {
            let mut acc = 0.0;
            let mut p = Vec::with_capacity(n + 1);
            p.push(0.0);
            for k in 0..n {
                acc += step * (0.5 * (v[i][k] + v[i][k + 1]) + step * (dv[i][k] - dv[i][k + 1]) / 12.0);
                p.push(acc);
            }
            p
        });
        Ok(DiscreteMarket {
            lo,
            step,
            n,
            v,
            dv,
            prefix,
        })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.step * self.n as f64
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Interpolant of `v_i` in cell `k` at local coordinate `s`, and its slope in `s`.
    fn cell(&self, i: usize, k: usize, s: f64) -> (f64, f64) {
        let h = self.step;
        let (a, b) = (self.v[i][k], self.v[i][k + 1]);
        let (da, db) = (h * self.dv[i][k], h * self.dv[i][k + 1]);
        let (s2, s3) = (s * s, s * s * s);
        let val = (2.0 * s3 - 3.0 * s2 + 1.0) * a
            + (s3 - 2.0 * s2 + s) * da
            + (3.0 * s2 - 2.0 * s3) * b
            + (s3 - s2) * db;
        let slope = (6.0 * s2 - 6.0 * s) * (a - b) + (3.0 * s2 - 4.0 * s + 1.0) * da + (3.0 * s2 - 2.0 * s) * db;
        (val, slope)
    }

    /// `int_lo^t v_i` of the interpolant.
    fn cumulative(&self, i: usize, t: f64) -> f64 {
        let x = ((t - self.lo) / self.step).clamp(0.0, self.n as f64);
        let k = (x.floor() as usize).min(self.n - 1);
        let s = x - k as f64;
        let h = self.step;
        let (a, b) = (self.v[i][k], self.v[i][k + 1]);
        let (da, db) = (h * self.dv[i][k], h * self.dv[i][k + 1]);
        let (s2, s3, s4) = (s * s, s * s * s, s * s * s * s);
        let part = (0.5 * s4 - s3 + s) * a
            + (0.25 * s4 - 2.0 * s3 / 3.0 + 0.5 * s2) * da
            + (s3 - 0.5 * s4) * b
            + (0.25 * s4 - s3 / 3.0) * db;
        self.prefix[i][k] + h * part
    }

    /// Advertiser 1 wins `[t, hi]`, ties included.
    pub fn threshold(&self, mu1: f64, mu2: f64) -> f64 {
        let g = |k: usize| mu1 * self.v[0][k] - mu2 * self.v[1][k];
        // first node where advertiser 1 bids at least as much
        let (mut a, mut b) = (0usize, self.n + 1);
        while a < b {
            let m = (a + b) / 2;
            if g(m) >= 0.0 {
                b = m;
            } else {
                a = m + 1;
            }
        }
        match a {
            0 => self.lo,
            k if k > self.n => self.hi(),
            k => {
                let c = k - 1;
                let gs = |s: f64| {
                    let (p1, d1) = self.cell(0, c, s);
                    let (p2, d2) = self.cell(1, c, s);
                    (mu1 * p1 - mu2 * p2, mu1 * d1 - mu2 * d2)
                };
                // safeguarded Newton inside the bracketing cell
                let (g0, g1) = (g(c), g(k));
                let (mut lo, mut hi) = (0.0, 1.0);
                let mut s = g0 / (g0 - g1);
                for _ in 0..60 {
                    let (val, slope) = gs(s);
                    if val >= 0.0 {
                        hi = s;
                    } else {
                        lo = s;
                    }
                    let next = s - val / slope;
                    let next = if next > lo && next < hi && slope.is_finite() { next } else { 0.5 * (lo + hi) };
                    if (next - s).abs() <= 1e-15 || hi - lo <= 1e-15 {
                        s = next;
                        break;
                    }
                    s = next;
                }
                self.lo + self.step * c as f64 + self.step * s
            }
        }
    }

    /// Value and spend per unit of inventory for `adv` bidding `own` against `opp`.
    pub fn outcome(&self, format: AuctionFormat, adv: Advertiser, own: f64, opp: f64) -> (f64, f64) {
        let (t, i) = match adv {
            Advertiser::First => (self.threshold(own, opp), 0),
            Advertiser::Second => (self.threshold(opp, own), 1),
        };
        let hi = self.hi();
        let upper = |j: usize| self.cumulative(j, hi) - self.cumulative(j, t);
        let lower = |j: usize| self.cumulative(j, t);
        let (value, opposing) = if i == 0 { (upper(0), upper(1)) } else { (lower(1), lower(0)) };
        let spend = match format {
            AuctionFormat::Fpa => own * value,
            AuctionFormat::Spa => opp * opposing,
        };
        (value, spend)
    }
}

/// Platforms that share one multiplier of the responding advertiser.
#[derive(Debug, Clone)]
struct Group {
    /// `(format, weight, opponent multiplier)` per member platform.
    members: Vec<(AuctionFormat, f64, f64)>,
    platforms: Vec<usize>,
}

impl Group {
    fn eval(&self, dm: &DiscreteMarket, adv: Advertiser, mu: f64) -> (f64, f64) {
        self.members.iter().fold((0.0, 0.0), |(v, c), &(f, w, opp)| {
            let (dv, dc) = dm.outcome(f, adv, mu, opp);
            (v + w * dv, c + w * dc)
        })
    }
}

fn groups_for(
    market: &Market,
    mode: BiddingMode,
    opponent: &[f64],
) -> Vec<Group> {
    let mut out: Vec<Group> = Vec::new();
    for j in 0..market.len() {
        let m = (market.formats[j], market.weights[j], opponent[j]);
        let slot = match mode {
            BiddingMode::Uniform => out.first_mut(),
            _ => out.iter_mut().find(|g| {
                let (f, _, o) = g.members[0];
                f == m.0 && o == m.2
            }),
        };
        match slot {
            Some(g) => {
                g.members.push(m);
                g.platforms.push(j);
            }
            None => out.push(Group {
                members: vec![m],
                platforms: vec![j],
            }),
        }
    }
    out
}

/// Relative slack granted to the target constraint for rounding.
const FEAS_TOL: f64 = 1e-13;
const BISECT_STEPS: usize = 48;
const ZOOM_POINTS: usize = 41;
const ZOOM_CELLS: usize = 2;
const ZOOM_LOG_SPAN: f64 = 1e-9;

/// Largest multiplier whose surplus `V - C` reaches `need`, searching the
/// grid and then bisecting the last feasible cell.
struct SurplusSearch<'a, F: Fn(f64) -> (f64, f64)> {
    grid: &'a [f64],
    surplus: Vec<f64>,
    suffix_max: Vec<f64>,
    eval: F,
}

impl<'a, F: Fn(f64) -> (f64, f64)> SurplusSearch<'a, F> {
    fn new(grid: &'a [f64], eval: F) -> Self {
        let surplus: Vec<f64> = grid
            .iter()
            .map(|&mu| {
                let (v, c) = eval(mu);
                v - c
            })
            .collect();
        let mut suffix_max = surplus.clone();
        for k in (0..grid.len().saturating_sub(1)).rev() {
            suffix_max[k] = suffix_max[k].max(suffix_max[k + 1]);
        }
        SurplusSearch {
            grid,
            surplus,
            suffix_max,
            eval,
        }
    }

    fn ok(s: f64, need: f64, scale: f64) -> bool {
        s >= need - FEAS_TOL * scale
    }

    /// `(mu, value)` or `None` when nothing on the grid is feasible.
    fn largest(&self, need: f64, scale: f64) -> Option<(f64, f64)> {
        let n = self.grid.len();
        // suffix_max is non-increasing; find the last index still feasible
        let (mut a, mut b) = (0usize, n);
        while a < b {
            let m = (a + b) / 2;
            if Self::ok(self.suffix_max[m], need, scale) {
                a = m + 1;
            } else {
                b = m;
            }
        }
        if a == 0 {
            return None;
        }
        let mut k = a - 1;
        while !Self::ok(self.surplus[k], need, scale) {
            k -= 1;
        }
        if k + 1 == n {
            let mu = self.grid[k];
            return Some((mu, (self.eval)(mu).0));
        }
        let (mut lo, mut hi) = (self.grid[k].ln(), self.grid[k + 1].ln());
        for _ in 0..BISECT_STEPS {
            let mid = 0.5 * (lo + hi);
            let (v, c) = (self.eval)(mid.exp());
            if Self::ok(v - c, need, scale) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = lo.exp();
        Some((mu, (self.eval)(mu).0))
    }
}

fn better(f: f64, best: f64) -> bool {
    f >= best - 1e-13 * best.abs().max(1.0)
}

/// Best multiplier for one group given fixed value and spend elsewhere.
fn best_single(grid: &[f64], eval: impl Fn(f64) -> (f64, f64), v0: f64, c0: f64) -> f64 {
    let scale = v0.abs().max(c0.abs()).max(1.0);
    let search = SurplusSearch::new(grid, eval);
    search.largest(c0 - v0, scale).map(|(mu, _)| mu).unwrap_or(grid[0])
}

/// Joint best response over two groups: for each multiplier of the first the
/// second takes its largest feasible value; the first is grid-searched and
/// zoomed around the best cell.
fn best_pair(
    grid: &[f64],
    eval_a: impl Fn(f64) -> (f64, f64),
    eval_b: impl Fn(f64) -> (f64, f64),
    v0: f64,
    c0: f64,
) -> (f64, f64) {
    let scale = v0.abs().max(c0.abs()).max(1.0);
    let inner = SurplusSearch::new(grid, eval_b);
    let score = |mu_a: f64| -> Option<(f64, f64)> {
        let (va, ca) = eval_a(mu_a);
        let need = c0 - v0 - (va - ca);
        inner.largest(need, scale).map(|(mu_b, vb)| (mu_b, va + vb))
    };
    let mut cands: Vec<f64> = grid.to_vec();
    let mut best = (grid[0], grid[0], f64::NEG_INFINITY);
    loop {
        let mut level: Option<(usize, f64, f64)> = None;
        for (k, &mu_a) in cands.iter().enumerate() {
            if let Some((mu_b, f)) = score(mu_a) {
                if level.map_or(true, |(_, _, g)| better(f, g)) {
                    level = Some((k, mu_b, f));
                }
            }
        }
        let Some((k, mu_b, f)) = level else { break };
        if !better(f, best.2) {
            break;
        }
        best = (cands[k], mu_b, f);
        let lo = cands[k.saturating_sub(ZOOM_CELLS)];
        let hi = cands[(k + ZOOM_CELLS).min(cands.len() - 1)];
        if (hi / lo).ln() < ZOOM_LOG_SPAN {
            break;
        }
        cands = geometric(lo, hi, ZOOM_POINTS);
    }
    (best.0, best.1)
}

/// Best response of `adv` to the opponent's per-platform multipliers.
///
/// Platforms facing the same format and opponent bid share one multiplier
/// (one multiplier overall in uniform mode); among grid points with
/// discretized spend at most value the response maximizes value, breaking
/// ties toward larger multipliers.
pub fn best_response(
    dm: &DiscreteMarket,
    market: &Market,
    mode: BiddingMode,
    opponent: &[f64],
    adv: Advertiser,
    cfg: &OracleConfig,
) -> Vec<f64> {
    let grid = cfg.multiplier_grid.values();
    let groups = groups_for(market, mode, opponent);
    let mut mus = vec![1.0; groups.len()];
    match groups.len() {
        1 => mus[0] = best_single(&grid, |m| groups[0].eval(dm, adv, m), 0.0, 0.0),
        2 => {
            let (a, b) = best_pair(
                &grid,
                |m| groups[0].eval(dm, adv, m),
                |m| groups[1].eval(dm, adv, m),
                0.0,
                0.0,
            );
            mus = vec![a, b];
        }
        n => {
            // block coordinate ascent over pairs of groups
            for _ in 0..50 {
                let before = mus.clone();
                for a in 0..n {
                    for b in a + 1..n {
                        let (v0, c0) = (0..n)
                            .filter(|&g| g != a && g != b)
                            .map(|g| groups[g].eval(dm, adv, mus[g]))
                            .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
                        let (x, y) = best_pair(
                            &grid,
                            |m| groups[a].eval(dm, adv, m),
                            |m| groups[b].eval(dm, adv, m),
                            v0,
                            c0,
                        );
                        mus[a] = x;
                        mus[b] = y;
                    }
                }
                if before.iter().zip(&mus).all(|(x, y)| (x - y).abs() <= 1e-12 * x) {
                    break;
                }
            }
        }
    }
    let mut out = vec![0.0; market.len()];
    for (g, mu) in groups.iter().zip(mus) {
        for &j in &g.platforms {
            out[j] = mu;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub multipliers: [Vec<f64>; 2],
    pub thresholds: Vec<f64>,
    pub revenue: Vec<f64>,
    pub value: [f64; 2],
    pub spend: [f64; 2],
    /// `spend - value` per advertiser.
    pub slack: [f64; 2],
    pub rounds: usize,
    pub converged: bool,
    /// Upper end of the discretized domain (the truncation point on the half-line).
    pub domain_hi: f64,
}

impl OracleSolution {
    pub fn total_revenue(&self) -> f64 {
        self.revenue.iter().sum()
    }
}

fn assemble(dm: &DiscreteMarket, market: &Market, mus: &[Vec<f64>; 2], rounds: usize, converged: bool) -> OracleSolution {
    let n = market.len();
    let mut revenue = vec![0.0; n];
    let mut value = [0.0; 2];
    let mut spend = [0.0; 2];
    let mut thresholds = Vec::with_capacity(n);
    for j in 0..n {
        let w = market.weights[j];
        thresholds.push(dm.threshold(mus[0][j], mus[1][j]));
        for adv in Advertiser::BOTH {
            let i = adv.index();
            let (v, c) = dm.outcome(market.formats[j], adv, mus[i][j], mus[1 - i][j]);
            value[i] += w * v;
            spend[i] += w * c;
            revenue[j] += w * c;
        }
    }
    OracleSolution {
        multipliers: mus.clone(),
        thresholds,
        revenue,
        value,
        spend,
        slack: [spend[0] - value[0], spend[1] - value[1]],
        rounds,
        converged,
        domain_hi: dm.hi(),
    }
}

/// Damped alternating best responses from all multipliers at one.
pub fn equilibrium_by_dynamics(
    pair: &AdvertiserPair,
    market: &Market,
    mode: BiddingMode,
    cfg: &OracleConfig,
) -> Result<OracleSolution, OracleError> {
    cfg.validate()?;
    if mode == BiddingMode::SingleStrategic {
        return Err(OracleError::UnsupportedMode(mode));
    }
    let dm = DiscreteMarket::new(pair, cfg.n_queries)?;
    let n = market.len();
    let mut mus = [vec![1.0; n], vec![1.0; n]];
    let mut change = f64::INFINITY;
    for round in 1..=cfg.max_rounds {
        change = 0.0f64;
        for adv in Advertiser::BOTH {
            let i = adv.index();
            let br = best_response(&dm, market, mode, &mus[1 - i], adv, cfg);
            for j in 0..n {
                let cur = mus[i][j];
                change = change.max((br[j] - cur).abs() / cur.max(1e-12));
                mus[i][j] = cur + cfg.damping * (br[j] - cur);
            }
        }
        if change < cfg.convergence_tol {
            return Ok(assemble(&dm, market, &mus, round, true));
        }
    }
    Err(OracleError::NoConvergence {
        rounds: cfg.max_rounds,
        change,
        state: Box::new(assemble(&dm, market, &mus, cfg.max_rounds, false)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub threshold_delta: Vec<f64>,
    pub revenue_rel_delta: Vec<f64>,
    pub multiplier_rel_delta: [Vec<f64>; 2],
    pub threshold_tol: f64,
    pub revenue_tol: f64,
    pub pass: bool,
}

/// Per-platform deltas between an analytic solution and the oracle. A
/// threshold beyond the truncated half-line counts as the truncation point.
pub fn compare(analytic: &SubgameSolution, oracle: &OracleSolution, cfg: &OracleConfig) -> OracleComparison {
    let threshold_delta: Vec<f64> = analytic
        .thresholds
        .iter()
        .zip(&oracle.thresholds)
        .map(|(&a, &o)| {
            (a.min(oracle.domain_hi) - o).abs()
        })
        .collect();
    let revenue_rel_delta: Vec<f64> = analytic
        .revenue
        .iter()
        .zip(&oracle.revenue)
        .map(|(&a, &o)| (a - o).abs() / a.abs().max(1e-12))
        .collect();
    let multiplier_rel_delta = [0, 1].map(|i: usize| {
        analytic.multipliers[i]
            .iter()
            .zip(&oracle.multipliers[i])
            .map(|(&a, &o)| (a - o).abs() / a.abs().max(1e-12))
            .collect::<Vec<f64>>()
    });
    let threshold_tol = cfg.threshold_tol();
    let pass = threshold_delta.iter().all(|d| *d <= threshold_tol)
        && revenue_rel_delta.iter().all(|d| *d <= REVENUE_REL_TOL);
    OracleComparison {
        threshold_delta,
        revenue_rel_delta,
        multiplier_rel_delta,
        threshold_tol,
        revenue_tol: REVENUE_REL_TOL,
        pass,
    }
}
