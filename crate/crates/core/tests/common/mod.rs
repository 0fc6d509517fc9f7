//! Scenario builders and invariant checks shared by the integration suites.
#![allow(dead_code)]

use bidwars::metrics;
use bidwars::subgame::{self, SolutionFlag, SolverConfig, SubgameSolution};
use bidwars::{AdvertiserPair, AuctionFormat, AuctionProfile, BiddingMode, Market, ValuationSpec};

pub use bidwars::AuctionFormat::{Fpa as F, Spa as S};

pub fn mirrored(v: ValuationSpec) -> AdvertiserPair {
    AdvertiserPair::mirrored(v).expect("mirrored pair")
}

pub fn linear() -> AdvertiserPair {
    mirrored(ValuationSpec::monomial(1.0))
}

pub fn fixed_crossing(a: f64) -> AdvertiserPair {
    mirrored(ValuationSpec::affine(a, (1.0 - a) / 2.0))
}

pub fn fixed_slope(b: f64) -> AdvertiserPair {
    mirrored(ValuationSpec::affine(1.0, b))
}

pub fn solve2(pair: &AdvertiserPair, formats: [AuctionFormat; 2]) -> SubgameSolution {
    solve_with(pair, formats, &SolverConfig::default())
}

pub fn solve_with(pair: &AdvertiserPair, formats: [AuctionFormat; 2], cfg: &SolverConfig) -> SubgameSolution {
    subgame::solve(pair, &Market::symmetric(&formats), BiddingMode::PerPlatform, cfg)
        .unwrap_or_else(|e| panic!("{formats:?}: {e}"))
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// `n` points strictly inside `(lo, hi)`, cell midpoints.
pub fn interior_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / n as f64).collect()
}

/// Random-family pair used by the invariant suites; `kind` picks the family
/// and `x` in [0, 1) its parameter.
pub fn family_pair(kind: u8, x: f64) -> AdvertiserPair {
    match kind % 5 {
        0 => mirrored(ValuationSpec::monomial(0.5 + 4.5 * x)),
        1 => mirrored(ValuationSpec::exp_growth(0.2 + 2.8 * x)),
        2 => fixed_crossing(0.1 + 0.9 * x),
        3 => fixed_slope(2.0 * x),
        _ => bidwars::casestudies::lincon_pair(2.05 + 1.9 * x),
    }
}

pub fn profile_of(bits: u8) -> [AuctionFormat; 2] {
    let f = |b: u8| if b & 1 == 1 { F } else { S };
    [f(bits), f(bits >> 1)]
}

/// Every structural invariant that should hold for a per-platform solution;
/// returns a description of the first violation.
pub fn check_solution(pair: &AdvertiserPair, sol: &SubgameSolution) -> Result<(), String> {
    let w_star = metrics::liquid_welfare(pair, &sol.weights).map_err(|e| e.to_string())?;
    if !sol.has_flag(SolutionFlag::DegenerateAllocation) {
        for (i, r) in sol.residuals.target.iter().enumerate() {
            if r.abs() > 1e-8 {
                return Err(format!("target of advertiser {} off by {r:e}", i + 1));
            }
        }
        for (i, r) in sol.residuals.marginal_spread.iter().enumerate() {
            if *r > 1e-6 {
                return Err(format!("marginal costs of advertiser {} spread {r:e}", i + 1));
            }
        }
    }
    let total = sol.total_revenue();
    if total > w_star + 1e-8 {
        return Err(format!("revenue {total} exceeds liquid welfare {w_star}"));
    }
    if sol.formats.iter().all(|f| *f == F) && !close(total, w_star, 1e-8) {
        return Err(format!("all-FPA revenue {total} differs from liquid welfare {w_star}"));
    }
    if metrics::is_inefficiency_free(pair) {
        for j in 0..sol.formats.len() {
            let (a, b) = (sol.multipliers[0][j], sol.multipliers[1][j]);
            if !rel_close(a, b, 1e-8) {
                return Err(format!("mirrored multipliers differ on platform {j}: {a} vs {b}"));
            }
        }
    }
    Ok(())
}

/// Q, competition and elasticities are unchanged when both curves scale by `c`.
pub fn check_scale_invariance(pair: &AdvertiserPair, c: f64) -> Result<(), String> {
    let scaled = pair.scaled(c);
    let rule = bidwars::ElasticityRule::Landscape;
    let a = metrics::market_metrics(pair, &[1.0, 1.0], rule).map_err(|e| e.to_string())?;
    let b = metrics::market_metrics(&scaled, &[1.0, 1.0], rule).map_err(|e| e.to_string())?;
    let same = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1.0);
    if !same(a.c_a, b.c_a) {
        return Err(format!("C_A {} vs {}", a.c_a, b.c_a));
    }
    match (a.q, b.q) {
        (Some(x), Some(y)) if !same(x, y) => return Err(format!("Q {x} vs {y}")),
        (Some(_), None) | (None, Some(_)) => return Err("Q defined for only one pair".into()),
        _ => {}
    }
    match (a.e_at_qeff, b.e_at_qeff) {
        (Some(x), Some(y)) if !(same(x[0], y[0]) && same(x[1], y[1])) => {
            return Err(format!("E {x:?} vs {y:?}"))
        }
        _ => {}
    }
    Ok(())
}

pub fn profile(formats: &[AuctionFormat]) -> AuctionProfile {
    AuctionProfile::new(formats.to_vec())
}
