//! Advertiser equilibria for a fixed vector of platform auction formats.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, NumericsConfig, NumericsError};
use crate::valuation::{Advertiser, AdvertiserPair, ElasticityRule, ValuationError, ValuationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuctionFormat {
    #[serde(rename = "SPA")]
    Spa,
    #[serde(rename = "FPA")]
    Fpa,
}

impl AuctionFormat {
    pub const ALL: [AuctionFormat; 2] = [AuctionFormat::Spa, AuctionFormat::Fpa];
}

impl fmt::Display for AuctionFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuctionFormat::Spa => "SPA",
            AuctionFormat::Fpa => "FPA",
        })
    }
}

impl FromStr for AuctionFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SPA" => Ok(AuctionFormat::Spa),
            "FPA" => Ok(AuctionFormat::Fpa),
            other => Err(format!("unknown auction format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuctionProfile {
    pub formats: Vec<AuctionFormat>,
}

impl AuctionProfile {
    pub fn new(formats: Vec<AuctionFormat>) -> Self {
        AuctionProfile { formats }
    }

    pub fn len(&self) -> usize {
        self.formats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formats.is_empty()
    }

    /// Every format vector over `n` platforms; bit `j` set means FPA on `j`.
    pub fn enumerate(n: usize) -> Vec<AuctionProfile> {
        (0..1usize << n)
            .map(|mask| {
                AuctionProfile::new(
                    (0..n)
                        .map(|j| {
                            if mask >> j & 1 == 1 {
                                AuctionFormat::Fpa
                            } else {
                                AuctionFormat::Spa
                            }
                        })
                        .collect(),
                )
            })
            .collect()
    }
}

impl fmt::Display for AuctionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.formats.iter().map(|x| x.to_string()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for AuctionProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let formats = s
            .split(',')
            .map(AuctionFormat::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        if formats.is_empty() {
            return Err("empty profile".into());
        }
        Ok(AuctionProfile { formats })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiddingMode {
    #[default]
    PerPlatform,
    Uniform,
    SingleStrategic,
}

/// Platform formats plus the inventory weight each platform carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub formats: Vec<AuctionFormat>,
    pub weights: Vec<f64>,
}

impl Market {
    pub fn new(formats: Vec<AuctionFormat>, weights: Vec<f64>) -> Result<Self, SubgameError> {
        if formats.is_empty() {
            return Err(SubgameError::InvalidMarket("at least one platform is required".into()));
        }
        if formats.len() != weights.len() {
            return Err(SubgameError::InvalidMarket(
                "one weight per platform is required".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(SubgameError::InvalidMarket("weights must be positive".into()));
        }
        Ok(Market { formats, weights })
    }

    /// Full-inventory platforms, each of weight one.
    pub fn symmetric(formats: &[AuctionFormat]) -> Self {
        Market {
            formats: formats.to_vec(),
            weights: vec![1.0; formats.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.formats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formats.is_empty()
    }

    pub fn total_weight(&self, format: AuctionFormat) -> f64 {
        self.formats
            .iter()
            .zip(&self.weights)
            .filter(|(f, _)| **f == format)
            .map(|(_, w)| w)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub numerics: NumericsConfig,
    pub elasticity: ElasticityRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionFlag {
    UniquenessUnverified,
    DegenerateAllocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `(spend - value) / max(1, value)` per advertiser.
    pub target: [f64; 2],
    /// Relative spread of marginal costs across platforms with positive wins.
    pub marginal_spread: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgameSolution {
    pub mode: BiddingMode,
    pub formats: Vec<AuctionFormat>,
    pub weights: Vec<f64>,
    /// `multipliers[i][j]` for advertiser `i` on platform `j`.
    pub multipliers: [Vec<f64>; 2],
    pub thresholds: Vec<f64>,
    pub revenue: Vec<f64>,
    pub value: [f64; 2],
    pub spend: [f64; 2],
    pub platform_value: [Vec<f64>; 2],
    pub platform_spend: [Vec<f64>; 2],
    pub marginal_costs: [Vec<Option<f64>>; 2],
    pub flags: Vec<SolutionFlag>,
    pub residuals: Residuals,
}

impl SubgameSolution {
    pub fn total_revenue(&self) -> f64 {
        self.revenue.iter().sum()
    }

    pub fn has_flag(&self, flag: SolutionFlag) -> bool {
        self.flags.contains(&flag)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubgameError {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("no interior equilibrium: {0}")]
    NoInteriorEquilibrium(String),
    #[error("degenerate solution: {0}")]
    DegenerateSolution(String),
    #[error("landscape is saturated at multiplier {mu}")]
    SaturatedLandscape { mu: f64 },
    #[error("invalid market: {0}")]
    InvalidMarket(String),
    #[error("best-response iteration did not converge after {0} rounds")]
    NoConvergence(usize),
}

/// Value and cost an advertiser obtains on one platform as its multiplier
/// varies, holding the opponent's multiplier fixed.
#[derive(Debug, Clone, Copy)]
pub struct LandscapeView<'a> {
    pub pair: &'a AdvertiserPair,
    pub advertiser: Advertiser,
    pub opponent_multiplier: f64,
    pub weight: f64,
}

impl<'a> LandscapeView<'a> {
    pub fn new(pair: &'a AdvertiserPair, advertiser: Advertiser, opponent_multiplier: f64) -> Self {
        LandscapeView {
            pair,
            advertiser,
            opponent_multiplier,
            weight: 1.0,
        }
    }

    pub fn threshold(&self, mu: f64) -> f64 {
        match self.advertiser {
            Advertiser::First => self.pair.threshold(mu, self.opponent_multiplier),
            Advertiser::Second => self.pair.threshold(self.opponent_multiplier, mu),
        }
    }

    pub fn value(&self, mu: f64) -> f64 {
        let t = self.threshold(mu);
        self.weight * self.pair.won_value(self.advertiser, t).unwrap_or(f64::NAN)
    }

    pub fn cost(&self, format: AuctionFormat, mu: f64) -> f64 {
        match format {
            AuctionFormat::Fpa => mu * self.value(mu),
            AuctionFormat::Spa => {
                let t = self.threshold(mu);
                self.weight
                    * self.opponent_multiplier
                    * self.pair.opposing_value(self.advertiser, t).unwrap_or(f64::NAN)
            }
        }
    }

    /// Second-price cost in Myerson form, `mu V(mu) - int_0^mu V`.
    pub fn myerson_cost(&self, mu: f64, cfg: &NumericsConfig) -> Result<f64, NumericsError> {
        let area = numerics::integrate(|z| self.value(z), 0.0, mu, cfg)?;
        Ok(mu * self.value(mu) - area)
    }

    /// Smallest multiplier that wins every query; infinite if none does.
    pub fn saturation_bid(&self) -> f64 {
        let d = self.pair.domain();
        let m = self.opponent_multiplier;
        match self.advertiser {
            Advertiser::First => {
                let h = self.pair.h(d.lo());
                if h > 0.0 {
                    m / h
                } else {
                    f64::INFINITY
                }
            }
            Advertiser::Second => {
                if d.hi().is_infinite() {
                    return f64::INFINITY;
                }
                let h = self.pair.h(d.hi());
                if h.is_finite() {
                    m * h
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Whether the advertiser wins a set of positive measure at `mu`.
    pub fn wins_some(&self, mu: f64) -> bool {
        let t = self.threshold(mu);
        let d = self.pair.domain();
        match self.advertiser {
            Advertiser::First => t < d.hi(),
            Advertiser::Second => t > d.lo(),
        }
    }

    pub fn wins_all(&self, mu: f64) -> bool {
        let t = self.threshold(mu);
        let d = self.pair.domain();
        match self.advertiser {
            Advertiser::First => t <= d.lo(),
            Advertiser::Second => t >= d.hi(),
        }
    }

    /// `V'(mu)` from the implicit threshold relation.
    pub fn value_derivative(&self, mu: f64) -> Result<f64, SubgameError> {
        if !self.wins_some(mu) || self.wins_all(mu) {
            return Ok(0.0);
        }
        let t = self.threshold(mu);
        let slope = self.pair.log_ratio_slope(t)?;
        let vi = self.pair.valuation(self.advertiser).value(t);
        Ok(self.weight * vi / (mu * slope))
    }
}

/// `MC = mu` under SPA and `mu + V/V'` under FPA.
pub fn marginal_cost(
    format: AuctionFormat,
    mu: f64,
    landscape: &LandscapeView<'_>,
) -> Result<f64, SubgameError> {
    match format {
        AuctionFormat::Spa => Ok(mu),
        AuctionFormat::Fpa => {
            if landscape.wins_all(mu) {
                return Err(SubgameError::SaturatedLandscape { mu });
            }
            if !landscape.wins_some(mu) {
                return Ok(mu);
            }
            let t = landscape.threshold(mu);
            Ok(mu * landscape.pair.landscape_elasticity(landscape.advertiser, t)?)
        }
    }
}

fn rule_marginal_cost(
    pair: &AdvertiserPair,
    adv: Advertiser,
    format: AuctionFormat,
    mu: f64,
    t: f64,
    rule: ElasticityRule,
) -> Option<f64> {
    let d = pair.domain();
    let wins_some = match adv {
        Advertiser::First => t < d.hi(),
        Advertiser::Second => t > d.lo(),
    };
    if !wins_some {
        return None;
    }
    match format {
        AuctionFormat::Spa => Some(mu),
        AuctionFormat::Fpa => {
            let wins_all = match adv {
                Advertiser::First => t <= d.lo(),
                Advertiser::Second => t >= d.hi(),
            };
            if wins_all {
                return None;
            }
            pair.elasticity_with(rule, adv, t).ok().map(|e| mu * e)
        }
    }
}

/// Assembles allocations, payments and diagnostics for given multipliers.
pub fn evaluate(
    pair: &AdvertiserPair,
    market: &Market,
    multipliers: [Vec<f64>; 2],
    mode: BiddingMode,
    rule: ElasticityRule,
) -> Result<SubgameSolution, SubgameError> {
    let n = market.len();
    let mut thresholds = Vec::with_capacity(n);
    let mut pv = [vec![0.0; n], vec![0.0; n]];
    let mut ps = [vec![0.0; n], vec![0.0; n]];
    let mut mc: [Vec<Option<f64>>; 2] = [vec![None; n], vec![None; n]];
    let mut degenerate = false;
    let d = pair.domain();
    for j in 0..n {
        let (m1, m2) = (multipliers[0][j], multipliers[1][j]);
        let w = market.weights[j];
        let t = pair.threshold(m1, m2);
        thresholds.push(t);
        if t <= d.lo() || t >= d.hi() {
            degenerate = true;
        }
        for adv in Advertiser::BOTH {
            let i = adv.index();
            let own = multipliers[i][j];
            let opp = multipliers[1 - i][j];
            let value = w * pair.won_value(adv, t)?;
            let spend = match market.formats[j] {
                AuctionFormat::Fpa => own * value,
                AuctionFormat::Spa => w * opp * pair.opposing_value(adv, t)?,
            };
            pv[i][j] = value;
            ps[i][j] = spend;
            mc[i][j] = rule_marginal_cost(pair, adv, market.formats[j], own, t, rule);
        }
    }
    let revenue: Vec<f64> = (0..n).map(|j| ps[0][j] + ps[1][j]).collect();
    let value = [pv[0].iter().sum(), pv[1].iter().sum()];
    let spend = [ps[0].iter().sum(), ps[1].iter().sum()];
    let target = [0, 1].map(|i: usize| (spend[i] - value[i]) / f64::max(1.0, value[i]));
    let marginal_spread = [0, 1].map(|i: usize| spread(mc[i].iter().flatten().copied()));
    let mut flags = Vec::new();
    if degenerate {
        flags.push(SolutionFlag::DegenerateAllocation);
    }
    Ok(SubgameSolution {
        mode,
        formats: market.formats.clone(),
        weights: market.weights.clone(),
        multipliers,
        thresholds,
        revenue,
        value,
        spend,
        platform_value: pv,
        platform_spend: ps,
        marginal_costs: mc,
        flags,
        residuals: Residuals {
            target,
            marginal_spread,
        },
    })
}

fn spread<I: Iterator<Item = f64>>(xs: I) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in xs {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if hi.is_finite() && lo.is_finite() && hi > 0.0 {
        (hi - lo) / hi
    } else {
        0.0
    }
}

/// Scan range in unit coordinates that keeps integrands well above underflow.
fn scan_range(pair: &AdvertiserPair) -> (f64, f64) {
    let d = pair.domain();
    let eps = 1e-6;
    let hi = if d.hi().is_infinite() {
        d.to_unit(64.0)
    } else {
        1.0 - eps
    };
    (eps, hi)
}

fn interior(pair: &AdvertiserPair, q: f64) -> bool {
    let d = pair.domain();
    q > d.lo() && q < d.hi() && q.is_finite()
}

/// Uniqueness hypotheses: `v2` non-increasing and `h` convex on a sample grid.
fn uniqueness_hypotheses(pair: &AdvertiserPair) -> bool {
    let d = pair.domain();
    let n = 256;
    let qs: Vec<f64> = (1..=n)
        .map(|k| d.from_unit(k as f64 / (n + 1) as f64))
        .collect();
    if qs.iter().any(|&q| pair.v2.derivative(q) > 1e-12) {
        return false;
    }
    let hs: Vec<f64> = qs.iter().map(|&q| pair.h(q)).collect();
    for k in 1..n - 1 {
        let (a, b, c) = (qs[k - 1], qs[k], qs[k + 1]);
        if !(hs[k - 1].is_finite() && hs[k].is_finite() && hs[k + 1].is_finite()) {
            continue;
        }
        let interp = hs[k - 1] + (hs[k + 1] - hs[k - 1]) * (b - a) / (c - a);
        if hs[k] > interp + 1e-9 * interp.abs().max(1.0) {
            return false;
        }
    }
    true
}

/// Closed form for all platforms running FPA: every multiplier is one.
fn all_fpa(pair: &AdvertiserPair, market: &Market, mode: BiddingMode, cfg: &SolverConfig) -> Result<SubgameSolution, SubgameError> {
    let n = market.len();
    evaluate(pair, market, [vec![1.0; n], vec![1.0; n]], mode, cfg.elasticity)
}

/// Multipliers `(mu1, mu2)` and threshold for the merged SPA platforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaPoint {
    pub mu1: f64,
    pub mu2: f64,
    pub q_s: f64,
}

fn spa_point_at(pair: &AdvertiserPair, q: f64) -> Option<SpaPoint> {
    let a1 = pair.won_value(Advertiser::First, q).ok()?;
    let a2 = pair.opposing_value(Advertiser::First, q).ok()?;
    let b2 = pair.won_value(Advertiser::Second, q).ok()?;
    let b1 = pair.opposing_value(Advertiser::Second, q).ok()?;
    let mu2 = a1 / a2;
    let mu1 = b2 / b1;
    if mu1.is_finite() && mu2.is_finite() && mu1 > 0.0 && mu2 > 0.0 {
        Some(SpaPoint { mu1, mu2, q_s: q })
    } else {
        None
    }
}

/// Interior roots of `v2 A1 B1 - v1 A2 B2` where `A` are upper and `B` lower
/// integrals; each root pins both second-price multipliers.
pub fn spa_group_points(pair: &AdvertiserPair, cfg: &SolverConfig) -> Vec<SpaPoint> {
    let d = pair.domain();
    let g = |s: f64| {
        let q = d.from_unit(s);
        let a1 = pair.won_value(Advertiser::First, q);
        let a2 = pair.opposing_value(Advertiser::First, q);
        let b2 = pair.won_value(Advertiser::Second, q);
        let b1 = pair.opposing_value(Advertiser::Second, q);
        match (a1, a2, b1, b2) {
            (Ok(a1), Ok(a2), Ok(b1), Ok(b2)) => {
                pair.v2.value(q) * a1 * b1 - pair.v1.value(q) * a2 * b2
            }
            _ => f64::NAN,
        }
    };
    let (lo, hi) = scan_range(pair);
    numerics::find_all_roots(g, lo, hi, cfg.numerics.grid_fallback_points, &cfg.numerics)
        .into_iter()
        .map(|s| d.from_unit(s))
        .filter(|&q| interior(pair, q))
        .filter_map(|q| spa_point_at(pair, q))
        .collect()
}

fn all_spa(
    pair: &AdvertiserPair,
    market: &Market,
    mode: BiddingMode,
    cfg: &SolverConfig,
) -> Result<SubgameSolution, SubgameError> {
    let points = spa_group_points(pair, cfg);
    let p = *points.first().ok_or_else(|| {
        SubgameError::NoInteriorEquilibrium("second-price threshold equation has no interior root".into())
    })?;
    let n = market.len();
    let mut sol = evaluate(pair, market, [vec![p.mu1; n], vec![p.mu2; n]], mode, cfg.elasticity)?;
    if points.len() > 1 || !uniqueness_hypotheses(pair) {
        sol.flags.push(SolutionFlag::UniquenessUnverified);
    }
    Ok(sol)
}

/// State of the one-dimensional first-price/second-price reduction at `q_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpaSpaPoint {
    pub q_f: f64,
    pub q_s: f64,
    pub mu1_f: f64,
    pub mu2_f: f64,
    pub mu1_s: f64,
    pub mu2_s: f64,
    /// Advertiser 2's normalized budget residual.
    pub residual: f64,
}

/// Evaluates the reduction at `q_f` for FPA weight `wf` and SPA weight `ws`.
pub fn fpa_spa_point(
    pair: &AdvertiserPair,
    wf: f64,
    ws: f64,
    q_f: f64,
    rule: ElasticityRule,
) -> Option<FpaSpaPoint> {
    if !interior(pair, q_f) {
        return None;
    }
    let e1 = pair.elasticity_with(rule, Advertiser::First, q_f).ok()?;
    let e2 = pair.elasticity_with(rule, Advertiser::Second, q_f).ok()?;
    let hf = pair.h(q_f);
    let ratio = e2 / e1 * hf;
    if !(ratio.is_finite() && ratio > 0.0 && e1 > 0.0 && e2 > 0.0) {
        return None;
    }
    let q_s = pair.threshold_for_ratio(ratio);
    if !interior(pair, q_s) {
        return None;
    }
    let a1f = pair.won_value(Advertiser::First, q_f).ok()?;
    let a2f = pair.won_value(Advertiser::Second, q_f).ok()?;
    let a1s = pair.won_value(Advertiser::First, q_s).ok()?;
    let a2s = pair.won_value(Advertiser::Second, q_s).ok()?;
    let b2s = pair.opposing_value(Advertiser::First, q_s).ok()?;
    let b1s = pair.opposing_value(Advertiser::Second, q_s).ok()?;
    let mu1_f = (wf * a1f + ws * a1s) / (wf * a1f + ws * e2 * hf * b2s);
    let mu2_f = hf * mu1_f;
    let mu1_s = e1 * mu1_f;
    let mu2_s = e2 * mu2_f;
    let scale = wf * a2f + ws * a2s;
    let residual = (wf * mu2_f * a2f + ws * mu1_s * b1s - scale) / scale;
    let ok = [mu1_f, mu2_f, mu1_s, mu2_s, residual]
        .iter()
        .all(|x| x.is_finite());
    ok.then_some(FpaSpaPoint {
        q_f,
        q_s,
        mu1_f,
        mu2_f,
        mu1_s,
        mu2_s,
        residual,
    })
}

/// All admissible roots of the reduction's residual.
pub fn fpa_spa_points(pair: &AdvertiserPair, wf: f64, ws: f64, cfg: &SolverConfig) -> Vec<FpaSpaPoint> {
    let d = pair.domain();
    let r = |s: f64| {
        fpa_spa_point(pair, wf, ws, d.from_unit(s), cfg.elasticity)
            .map(|p| p.residual)
            .unwrap_or(f64::NAN)
    };
    let (lo, hi) = scan_range(pair);
    numerics::find_all_roots(r, lo, hi, cfg.numerics.grid_fallback_points, &cfg.numerics)
        .into_iter()
        .filter_map(|s| fpa_spa_point(pair, wf, ws, d.from_unit(s), cfg.elasticity))
        .filter(|p| p.residual.abs() < 1e-6)
        .filter(|p| [p.mu1_f, p.mu2_f, p.mu1_s, p.mu2_s].iter().all(|m| *m > 0.0))
        .collect()
}

fn mixed(
    pair: &AdvertiserPair,
    market: &Market,
    mode: BiddingMode,
    cfg: &SolverConfig,
) -> Result<SubgameSolution, SubgameError> {
    let wf = market.total_weight(AuctionFormat::Fpa);
    let ws = market.total_weight(AuctionFormat::Spa);
    let points = fpa_spa_points(pair, wf, ws, cfg);
    let p = *points.first().ok_or_else(|| {
        SubgameError::NoInteriorEquilibrium("first-price/second-price reduction has no admissible root".into())
    })?;
    let pick = |f: AuctionFormat, a: f64, b: f64| if f == AuctionFormat::Fpa { a } else { b };
    let m1 = market.formats.iter().map(|&f| pick(f, p.mu1_f, p.mu1_s)).collect();
    let m2 = market.formats.iter().map(|&f| pick(f, p.mu2_f, p.mu2_s)).collect();
    let mut sol = evaluate(pair, market, [m1, m2], mode, cfg.elasticity)?;
    let d = pair.domain();
    let endpoints_vanish = pair.v1.value(d.lo()) == 0.0
        && (d.hi().is_infinite() || pair.v2.value(d.hi()) == 0.0);
    let hyp = endpoints_vanish
        && uniqueness_hypotheses(pair)
        && (0..64).all(|k| pair.v1.derivative(d.from_unit((k as f64 + 0.5) / 64.0)) >= -1e-12);
    if points.len() > 1 || !hyp {
        sol.flags.push(SolutionFlag::UniquenessUnverified);
    }
    Ok(sol)
}

/// Solves the advertiser subgame for the given market and bidding mode.
pub fn solve(
    pair: &AdvertiserPair,
    market: &Market,
    mode: BiddingMode,
    cfg: &SolverConfig,
) -> Result<SubgameSolution, SubgameError> {
    pair.validate()?;
    match mode {
        BiddingMode::PerPlatform => solve_per_platform(pair, market, cfg),
        BiddingMode::Uniform => solve_uniform(pair, market, cfg),
        BiddingMode::SingleStrategic => Err(SubgameError::InvalidMarket(
            "single-strategic mode needs static landscapes; use solve_single_strategic".into(),
        )),
    }
}

pub fn solve_per_platform(
    pair: &AdvertiserPair,
    market: &Market,
    cfg: &SolverConfig,
) -> Result<SubgameSolution, SubgameError> {
    let mode = BiddingMode::PerPlatform;
    let wf = market.total_weight(AuctionFormat::Fpa);
    let ws = market.total_weight(AuctionFormat::Spa);
    if ws == 0.0 {
        all_fpa(pair, market, mode, cfg)
    } else if wf == 0.0 {
        all_spa(pair, market, mode, cfg)
    } else {
        mixed(pair, market, mode, cfg)
    }
}

/// Two symmetric full-inventory platforms, both FPA.
pub fn solve_fpa_fpa(pair: &AdvertiserPair) -> Result<SubgameSolution, SubgameError> {
    let m = Market::symmetric(&[AuctionFormat::Fpa, AuctionFormat::Fpa]);
    solve_per_platform(pair, &m, &SolverConfig::default())
}

/// Two symmetric full-inventory platforms, both SPA.
pub fn solve_spa_spa(pair: &AdvertiserPair) -> Result<SubgameSolution, SubgameError> {
    let m = Market::symmetric(&[AuctionFormat::Spa, AuctionFormat::Spa]);
    solve_per_platform(pair, &m, &SolverConfig::default())
}

/// Two symmetric full-inventory platforms: platform 0 FPA, platform 1 SPA.
pub fn solve_fpa_spa(pair: &AdvertiserPair) -> Result<SubgameSolution, SubgameError> {
    let m = Market::symmetric(&[AuctionFormat::Fpa, AuctionFormat::Spa]);
    solve_per_platform(pair, &m, &SolverConfig::default())
}

const UNIFORM_MAX_ROUNDS: usize = 500;
const UNIFORM_TOL: f64 = 1e-13;

/// Largest multiplier `mu >= 1` keeping advertiser `adv` within target when
/// it must bid `mu` on every platform.
pub fn uniform_best_response(
    pair: &AdvertiserPair,
    market: &Market,
    adv: Advertiser,
    opponent: f64,
    cfg: &NumericsConfig,
) -> f64 {
    let wf = market.total_weight(AuctionFormat::Fpa);
    let ws = market.total_weight(AuctionFormat::Spa);
    let w = wf + ws;
    let view = LandscapeView::new(pair, adv, opponent);
    let slack = |mu: f64| {
        let t = view.threshold(mu);
        let won = pair.won_value(adv, t).unwrap_or(f64::NAN);
        let opp = pair.opposing_value(adv, t).unwrap_or(f64::NAN);
        won * (w - wf * mu) - ws * opponent * opp
    };
    let cap = view.saturation_bid().min(1e6).max(1.0);
    if slack(cap) >= 0.0 {
        return cap;
    }
    let n = 2000;
    let ratio = cap.ln() / n as f64;
    let grid: Vec<f64> = (0..=n).map(|k| (ratio * k as f64).exp()).collect();
    let vals: Vec<f64> = grid.iter().map(|&m| slack(m)).collect();
    let last = (0..n).rev().find(|&k| vals[k] >= 0.0).unwrap_or(0);
    numerics::brent(&slack, grid[last], grid[last + 1], vals[last], vals[last + 1], cfg)
        .unwrap_or(grid[last])
}

pub fn solve_uniform(
    pair: &AdvertiserPair,
    market: &Market,
    cfg: &SolverConfig,
) -> Result<SubgameSolution, SubgameError> {
    let mode = BiddingMode::Uniform;
    if market.total_weight(AuctionFormat::Spa) == 0.0 {
        return all_fpa(pair, market, mode, cfg);
    }
    let (mut mu1, mut mu2) = (1.0, 1.0);
    let mut converged = false;
    for _ in 0..UNIFORM_MAX_ROUNDS {
        let n1 = uniform_best_response(pair, market, Advertiser::First, mu2, &cfg.numerics);
        let n2 = uniform_best_response(pair, market, Advertiser::Second, n1, &cfg.numerics);
        let change = ((n1 - mu1) / n1).abs().max(((n2 - mu2) / n2).abs());
        mu1 = n1;
        mu2 = n2;
        if change < UNIFORM_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SubgameError::NoConvergence(UNIFORM_MAX_ROUNDS));
    }
    let n = market.len();
    evaluate(pair, market, [vec![mu1; n], vec![mu2; n]], mode, cfg.elasticity)
}

/// Whether an equilibrium with interior allocations can exist: buying a
/// second-price platform outright with an unbounded bid must violate the
/// buyer's target against the opponent's largest sustainable multiplier.
pub fn check_existence_condition(profile: &AuctionProfile, pair: &AdvertiserPair) -> bool {
    if profile.formats.iter().all(|f| *f == AuctionFormat::Fpa) {
        return true;
    }
    let market = Market::symmetric(&profile.formats);
    let d = pair.domain();
    for adv in Advertiser::BOTH {
        let probe = LandscapeView::new(pair, adv, 1.0);
        if probe.saturation_bid().is_finite() {
            continue;
        }
        // Opponent keeps a vanishing sliver at the far end of the domain.
        let sliver = match adv {
            Advertiser::First => d.lo() + 1e-7,
            Advertiser::Second => {
                if d.hi().is_infinite() {
                    40.0
                } else {
                    d.hi() - 1e-7
                }
            }
        };
        let opponent_max = match adv {
            Advertiser::First => {
                let own = pair.v2.integral(d.lo(), sliver).unwrap_or(f64::NAN);
                let other = pair.v1.integral(d.lo(), sliver).unwrap_or(f64::NAN);
                pair.h(sliver) * own / other
            }
            Advertiser::Second => {
                let own = pair.v1.integral(sliver, d.hi()).unwrap_or(f64::NAN);
                let other = pair.v2.integral(sliver, d.hi()).unwrap_or(f64::NAN);
                own / (pair.h(sliver) * other)
            }
        };
        let own_total = pair.won_value(adv, match adv {
            Advertiser::First => d.lo(),
            Advertiser::Second => d.hi(),
        });
        let opp_total = pair.opposing_value(adv, match adv {
            Advertiser::First => d.lo(),
            Advertiser::Second => d.hi(),
        });
        let (Ok(own_total), Ok(opp_total)) = (own_total, opp_total) else {
            continue;
        };
        let mut lhs = 0.0;
        for (f, w) in market.formats.iter().zip(&market.weights) {
            match f {
                AuctionFormat::Fpa => lhs += f64::INFINITY,
                AuctionFormat::Spa => lhs += w * opponent_max * opp_total,
            }
        }
        let rhs: f64 = market.weights.iter().sum::<f64>() * own_total;
        if !(lhs > rhs) {
            return false;
        }
    }
    true
}

/// One strategic advertiser against truthful single-query bidders whose
/// values on platform `j` follow `statics[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticMarket {
    pub strategic: ValuationSpec,
    pub statics: Vec<ValuationSpec>,
}

struct StaticPlatform {
    pair: AdvertiserPair,
    role: Advertiser,
}

impl StaticPlatform {
    fn new(strategic: &ValuationSpec, s: &ValuationSpec) -> Result<Self, SubgameError> {
        if let Ok(pair) = AdvertiserPair::new(strategic.clone(), s.clone()) {
            return Ok(StaticPlatform {
                pair,
                role: Advertiser::First,
            });
        }
        AdvertiserPair::new(s.clone(), strategic.clone())
            .map(|pair| StaticPlatform {
                pair,
                role: Advertiser::Second,
            })
            .map_err(SubgameError::from)
    }

    fn view(&self, w: f64) -> LandscapeView<'_> {
        LandscapeView {
            pair: &self.pair,
            advertiser: self.role,
            opponent_multiplier: 1.0,
            weight: w,
        }
    }
}

pub fn solve_single_strategic(
    market_curves: &StaticMarket,
    market: &Market,
    cfg: &SolverConfig,
) -> Result<SubgameSolution, SubgameError> {
    if market_curves.statics.len() != market.len() {
        return Err(SubgameError::InvalidMarket(
            "one static curve per platform is required".into(),
        ));
    }
    let platforms = market_curves
        .statics
        .iter()
        .map(|s| StaticPlatform::new(&market_curves.strategic, s))
        .collect::<Result<Vec<_>, _>>()?;
    let n = market.len();
    let views: Vec<LandscapeView<'_>> = platforms
        .iter()
        .zip(&market.weights)
        .map(|(p, &w)| p.view(w))
        .collect();
    let hm: Vec<f64> = views.iter().map(|v| v.saturation_bid()).collect();

    // Multiplier on platform j whose marginal cost equals `lambda`.
    let mu_at = |j: usize, lambda: f64| -> f64 {
        match market.formats[j] {
            AuctionFormat::Spa => lambda,
            AuctionFormat::Fpa => {
                let v = &views[j];
                let mc = |mu: f64| match marginal_cost(AuctionFormat::Fpa, mu, v) {
                    Ok(m) => m - lambda,
                    Err(_) => f64::INFINITY,
                };
                let top = if hm[j].is_finite() { hm[j] } else { 1e6 };
                let below = top * (1.0 - 1e-12);
                if mc(below) <= 0.0 {
                    return top;
                }
                numerics::find_root(mc, 0.0, below, &cfg.numerics).unwrap_or(top)
            }
        }
    };
    let excess = |mus: &[f64]| -> f64 {
        (0..n)
            .map(|j| views[j].cost(market.formats[j], mus[j]) - views[j].value(mus[j]))
            .sum()
    };
    let at_level = |lambda: f64| -> Vec<f64> { (0..n).map(|j| mu_at(j, lambda)).collect() };
    let b = |lambda: f64| excess(&at_level(lambda));

    let levels: Vec<f64> = (0..=120).map(|k| 10f64.powf(-6.0 + 12.0 * k as f64 / 120.0)).collect();
    let vals: Vec<f64> = levels.iter().map(|&l| b(l)).collect();
    let saturated = (0..n).all(|j| hm[j].is_finite());
    let mut slack = false;
    let mus = match (0..levels.len() - 1).rev().find(|&k| vals[k] <= 0.0 && vals[k + 1] > 0.0) {
        Some(k) => {
            let lambda = numerics::brent(&b, levels[k], levels[k + 1], vals[k], vals[k + 1], &cfg.numerics)?;
            at_level(lambda)
        }
        None if saturated => {
            // Everything is bought: spend remaining budget uniformly.
            let fixed: f64 = (0..n)
                .filter(|&j| market.formats[j] == AuctionFormat::Spa)
                .map(|j| views[j].cost(AuctionFormat::Spa, hm[j].max(1e-300)))
                .sum();
            let v_fpa: f64 = (0..n)
                .filter(|&j| market.formats[j] == AuctionFormat::Fpa)
                .map(|j| views[j].value(hm[j].max(1e-300) * (1.0 + 1e-12)))
                .sum();
            let v_all: f64 = (0..n).map(|j| views[j].value(hm[j].max(1e-300) * (1.0 + 1e-12))).sum();
            let mu = if v_fpa > 0.0 { (v_all - fixed) / v_fpa } else { 1.0 };
            (0..n).map(|j| mu.max(hm[j])).collect()
        }
        // The target never binds but winning everything needs an unbounded
        // bid (h has no finite top); bid at the largest level scanned.
        None if vals.iter().all(|v| *v <= 0.0) => {
            slack = true;
            at_level(levels[levels.len() - 1])
        }
        None => {
            return Err(SubgameError::NoInteriorEquilibrium(
                "marginal-cost level keeping the target tight not found".into(),
            ))
        }
    };

    // Strategic advertiser occupies the pair slot given by its role.
    let mut m = [vec![1.0; n], vec![1.0; n]];
    let mut thresholds = Vec::with_capacity(n);
    let mut pv = [vec![0.0; n], vec![0.0; n]];
    let mut ps = [vec![0.0; n], vec![0.0; n]];
    let mut mc: [Vec<Option<f64>>; 2] = [vec![None; n], vec![None; n]];
    let mut revenue = Vec::with_capacity(n);
    let mut degenerate = slack;
    for j in 0..n {
        let p = &platforms[j];
        let v = &views[j];
        let w = market.weights[j];
        m[0][j] = mus[j];
        let t = v.threshold(mus[j]);
        thresholds.push(t);
        let (s_val, s_spend) = (v.value(mus[j]), v.cost(market.formats[j], mus[j]));
        let static_adv = p.role.other();
        let other_value = w * p.pair.won_value(static_adv, t)?;
        let other_spend = match market.formats[j] {
            AuctionFormat::Fpa => other_value,
            AuctionFormat::Spa => w * mus[j] * p.pair.opposing_value(static_adv, t)?,
        };
        pv[0][j] = s_val;
        ps[0][j] = s_spend;
        pv[1][j] = other_value;
        ps[1][j] = other_spend;
        revenue.push(s_spend + other_spend);
        mc[0][j] = if v.wins_some(mus[j]) {
            marginal_cost(market.formats[j], mus[j], v).ok()
        } else {
            None
        };
        if !v.wins_some(mus[j]) || v.wins_all(mus[j]) {
            degenerate = true;
        }
    }
    let value = [pv[0].iter().sum(), pv[1].iter().sum()];
    let spend = [ps[0].iter().sum(), ps[1].iter().sum()];
    let target0 = (spend[0] - value[0]) / f64::max(1.0, value[0]);
    Ok(SubgameSolution {
        mode: BiddingMode::SingleStrategic,
        formats: market.formats.clone(),
        weights: market.weights.clone(),
        multipliers: m,
        thresholds,
        revenue,
        value,
        spend,
        platform_value: pv,
        platform_spend: ps,
        marginal_costs: mc.clone(),
        flags: if degenerate {
            vec![SolutionFlag::DegenerateAllocation]
        } else {
            Vec::new()
        },
        residuals: Residuals {
            target: [target0, (spend[1] - value[1]) / f64::max(1.0, value[1])],
            marginal_spread: [spread(mc[0].iter().flatten().copied()), 0.0],
        },
    })
}
