//! Reduced-form solutions of the linear-vs-constant and exponential families.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{self, EquilibriumReport, PayoffMatrix};
use crate::numerics::{self, NumericsConfig};
use crate::subgame::AuctionFormat;
use crate::valuation::{AdvertiserPair, Domain, ValuationSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("parameter {value} outside ({lo}, {hi})")]
    Range { value: f64, lo: f64, hi: f64 },
    #[error("no admissible root: {0}")]
    NoRoot(String),
}

fn check_range(value: f64, lo: f64, hi: f64) -> Result<(), CaseError> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(CaseError::Range { value, lo, hi })
    }
}

/// Multipliers, thresholds and revenues of a two-platform subgame; platform 0
/// runs FPA in the mixed profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormSubgame {
    pub formats: [AuctionFormat; 2],
    /// `multipliers[i][j]` for advertiser `i` on platform `j`.
    pub multipliers: [[f64; 2]; 2],
    pub thresholds: [f64; 2],
    pub revenue: [f64; 2],
}

fn symmetric(format: AuctionFormat, mu1: f64, mu2: f64, q: f64, rev: f64) -> ClosedFormSubgame {
    ClosedFormSubgame {
        formats: [format; 2],
        multipliers: [[mu1; 2], [mu2; 2]],
        thresholds: [q; 2],
        revenue: [rev; 2],
    }
}

/// Payoff matrix from the three subgames of a symmetric two-platform family.
fn matrix_from(ff: &ClosedFormSubgame, ss: &ClosedFormSubgame, fs: &ClosedFormSubgame) -> PayoffMatrix {
    use AuctionFormat::{Fpa, Spa};
    PayoffMatrix::from_revenues(2, |p| match (p.formats[0], p.formats[1]) {
        (Fpa, Fpa) => ff.revenue.to_vec(),
        (Spa, Spa) => ss.revenue.to_vec(),
        (Fpa, Spa) => fs.revenue.to_vec(),
        (Spa, Fpa) => vec![fs.revenue[1], fs.revenue[0]],
    })
}

// ---------------------------------------------------------------------------
// Linear (alpha q) against constant (1) valuations on [0, 1].

pub const LINCON_ALPHA_RANGE: (f64, f64) = (2.0, 4.0);
/// Admissible first-price thresholds for alpha in (2, 4).
pub const LINCON_X1: f64 = 0.237818;
pub const LINCON_X5: f64 = 0.610502;

pub fn lincon_pair(alpha: f64) -> AdvertiserPair {
    AdvertiserPair {
        v1: ValuationSpec::affine(alpha, 0.0),
        v2: ValuationSpec::constant(1.0),
    }
}

/// `17 a x^7 - 17 x^6 + 4 x^5 - 17 x^4 + (8 - 3a) x^3 + x^2 + (4 - 2a) x + 1`
pub fn lincon_septic(x: f64, alpha: f64) -> f64 {
    let a = alpha;
    ((((((17.0 * a * x - 17.0) * x + 4.0) * x - 17.0) * x + (8.0 - 3.0 * a)) * x + 1.0) * x
        + (4.0 - 2.0 * a))
        * x
        + 1.0
}

/// Alpha for which `x` is the first-price threshold.
pub fn lincon_alpha_of_x(x: f64) -> f64 {
    let num = 17.0 * x.powi(6) - 4.0 * x.powi(5) + 17.0 * x.powi(4) - 8.0 * x.powi(3) - x * x - 4.0 * x - 1.0;
    let den = 17.0 * x.powi(7) - 3.0 * x.powi(3) - 2.0 * x;
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinConSolution {
    pub alpha: f64,
    pub q_f: f64,
    pub q_s: f64,
    pub fpa_fpa: ClosedFormSubgame,
    pub spa_spa: ClosedFormSubgame,
    /// Platform 0 FPA, platform 1 SPA.
    pub fpa_spa: ClosedFormSubgame,
}

/// Root of the septic inside the admissible band (slightly widened so the
/// band ends stay reachable near alpha = 2 and 4).
pub fn lincon_q_f(alpha: f64) -> Result<f64, CaseError> {
    check_range(alpha, LINCON_ALPHA_RANGE.0, LINCON_ALPHA_RANGE.1)?;
    let cfg = NumericsConfig::default();
    let (lo, hi) = (LINCON_X1 - 1e-3, LINCON_X5 + 1e-3);
    let roots = numerics::find_all_roots(|x| lincon_septic(x, alpha), lo, hi, 512, &cfg);
    roots
        .into_iter()
        .min_by(|a, b| {
            let da = (lincon_alpha_of_x(*a) - alpha).abs();
            let db = (lincon_alpha_of_x(*b) - alpha).abs();
            da.total_cmp(&db)
        })
        .ok_or_else(|| CaseError::NoRoot(format!("septic has no root for alpha = {alpha}")))
}

pub fn lincon_solve(alpha: f64) -> Result<LinConSolution, CaseError> {
    let x = lincon_q_f(alpha)?;
    let a = alpha;
    let fpa_fpa = symmetric(AuctionFormat::Fpa, 1.0, 1.0, 1.0 / a, (a * a + 1.0) / (2.0 * a));
    let spa_spa = symmetric(AuctionFormat::Spa, 2.0 / (4.0 - a), 2.0, 4.0 / a - 1.0, 3.0 - 4.0 / a);
    let q_s = 4.0 * x.powi(3) / (1.0 + x * x);
    let fpa_spa = ClosedFormSubgame {
        formats: [AuctionFormat::Fpa, AuctionFormat::Spa],
        multipliers: [
            [1.0 / (a * x), (1.0 + x * x) / (2.0 * a * x.powi(3))],
            [1.0, 2.0],
        ],
        thresholds: [x, q_s],
        revenue: [(1.0 + x * x) / (2.0 * x), 2.0 - q_s],
    };
    Ok(LinConSolution {
        alpha,
        q_f: x,
        q_s,
        fpa_fpa,
        spa_spa,
        fpa_spa,
    })
}

pub fn lincon_matrix(alpha: f64) -> Result<PayoffMatrix, CaseError> {
    let s = lincon_solve(alpha)?;
    Ok(matrix_from(&s.fpa_fpa, &s.spa_spa, &s.fpa_spa))
}

pub fn lincon_equilibria(alpha: f64) -> Result<EquilibriumReport, CaseError> {
    let m = lincon_matrix(alpha)?;
    Ok(game::find_equilibria(&m).expect("closed-form matrix is complete"))
}

/// `(x - z, w - y)` sign conditions; the first positive means (SPA, SPA) is
/// an equilibrium, the second that (FPA, FPA) is.
pub fn lincon_conditions(alpha: f64) -> Result<(f64, f64), CaseError> {
    let s = lincon_solve(alpha)?;
    let x = 3.0 - 4.0 / alpha;
    let y = 2.0 - s.q_s;
    let z = (1.0 + s.q_f * s.q_f) / (2.0 * s.q_f);
    let w = (alpha * alpha + 1.0) / (2.0 * alpha);
    Ok((x - z, w - y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinConThresholds {
    pub alpha_1: f64,
    pub alpha_2: f64,
    pub alpha_3: f64,
}

/// Alphas where the equilibrium set changes: `x - z` changes sign at
/// `alpha_1` and `alpha_3`, `w - y` at `alpha_2`.
pub fn lincon_thresholds() -> LinConThresholds {
    let cfg = NumericsConfig::default();
    let xz = |a: f64| lincon_conditions(a).map(|c| c.0).unwrap_or(f64::NAN);
    let wy = |a: f64| lincon_conditions(a).map(|c| c.1).unwrap_or(f64::NAN);
    let (lo, hi) = (2.0 + 1e-4, 4.0 - 1e-4);
    let xz_roots = numerics::find_all_roots(xz, lo, hi, 400, &cfg);
    let wy_roots = numerics::find_all_roots(wy, lo, hi, 400, &cfg);
    LinConThresholds {
        alpha_1: xz_roots.first().copied().unwrap_or(f64::NAN),
        alpha_2: wy_roots.first().copied().unwrap_or(f64::NAN),
        alpha_3: xz_roots.last().copied().unwrap_or(f64::NAN),
    }
}

/// Equilibrium regimes of the linear-vs-constant platform game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinConBand {
    /// (FPA, SPA), (SPA, FPA) and their mixture.
    OffDiagonal,
    SpaOnly,
    /// (SPA, SPA), (FPA, FPA) and their mixture.
    BothDiagonal,
    FpaOnly,
}

pub fn lincon_band(alpha: f64) -> Result<LinConBand, CaseError> {
    let (xz, wy) = lincon_conditions(alpha)?;
    Ok(match (xz > 0.0, wy > 0.0) {
        (true, true) => LinConBand::BothDiagonal,
        (true, false) => LinConBand::SpaOnly,
        (false, true) => LinConBand::FpaOnly,
        (false, false) => LinConBand::OffDiagonal,
    })
}

// ---------------------------------------------------------------------------
// Exponential decays alpha e^{-q} against e^{-2q} on [0, inf).

pub const EXP_ALPHA_RANGE: (f64, f64) = (0.25, 0.5);
pub const EXP_T_RANGE: (f64, f64) = (0.0, 0.7);
/// Range of `t` spanned by alpha in (1/4, 1/2).
pub const EXP_T_CERTIFICATE_RANGE: (f64, f64) = (0.36, 0.609);

pub fn exp_pair(alpha: f64) -> AdvertiserPair {
    AdvertiserPair {
        v1: ValuationSpec::exp_decay(alpha, 1.0).on(Domain::HalfLine),
        v2: ValuationSpec::exp_decay(1.0, 2.0).on(Domain::HalfLine),
    }
}

fn exp_u(t: f64) -> f64 {
    8.0 * t.powi(3) / (3.0 - t * t)
}

fn exp_w(t: f64, u: f64) -> f64 {
    (2.0 - u * u - t * t) / (1.0 - t * t + 8.0 * t - 8.0 * t * u)
}

pub fn exp_alpha_of_t(t: f64) -> Result<f64, CaseError> {
    check_range(t, EXP_T_RANGE.0, EXP_T_RANGE.1)?;
    let u = exp_u(t);
    Ok((2.0 - u * u - t * t) * (t * t + 2.0 * u * t) / ((1.0 - t * t + 8.0 * t - 8.0 * t * u) * (u + t)))
}

pub fn exp_t_of_alpha(alpha: f64) -> Result<f64, CaseError> {
    check_range(alpha, EXP_ALPHA_RANGE.0, EXP_ALPHA_RANGE.1)?;
    let cfg = NumericsConfig::default();
    numerics::find_root(
        |t| exp_alpha_of_t(t).unwrap_or(f64::NAN) - alpha,
        0.3,
        0.65,
        &cfg,
    )
    .map_err(|e| CaseError::NoRoot(e.to_string()))
}

/// Reduced variables of the first-price/second-price system:
/// `x = mu1^S, y = mu1^F, z = mu2^S, w = mu2^F, t = e^{-q_F}, u = e^{-q_S}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpVariables {
    pub t: f64,
    pub u: f64,
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpSolution {
    pub alpha: f64,
    pub vars: ExpVariables,
    pub fpa_fpa: ClosedFormSubgame,
    pub spa_spa: ClosedFormSubgame,
    /// Platform 0 FPA, platform 1 SPA.
    pub fpa_spa: ClosedFormSubgame,
    /// Residuals of the four first-price/second-price equations.
    pub residuals: [f64; 4],
}

/// Residuals of the system in `(x, y, z, w)`: the two multiplier ratios and
/// the two target identities.
pub fn exp_system_residuals(alpha: f64, x: f64, y: f64, z: f64, w: f64) -> [f64; 4] {
    let a = alpha;
    let r = y * y * a * a / (w * w);
    let s = x * x * a * a / (z * z);
    [
        x / y - 4.0,
        z / w - (1.0 + 1.5 * (1.0 - r) / r),
        (y - 1.0) * a * a * y / w - (a * a * x / z - z * s / 2.0),
        (w - 1.0) * (1.0 - r) / 2.0 - ((1.0 - s) / 2.0 - x * a * (1.0 - x * a / z)),
    ]
}

pub fn exp_solve(alpha: f64) -> Result<ExpSolution, CaseError> {
    check_range(alpha, EXP_ALPHA_RANGE.0, EXP_ALPHA_RANGE.1)?;
    let a = alpha;
    let fpa_fpa = symmetric(AuctionFormat::Fpa, 1.0, 1.0, -a.ln(), (a * a + 1.0) / 2.0);
    let spa_spa = symmetric(
        AuctionFormat::Spa,
        2.0,
        2.0 * a / (4.0 * a - 1.0),
        -(4.0 * a - 1.0).ln(),
        (3.0 - 4.0 * a) * a,
    );
    let t = exp_t_of_alpha(alpha)?;
    let u = exp_u(t);
    let w = exp_w(t, u);
    let z = 4.0 * w * t / u;
    let y = w * t / a;
    let x = 4.0 * y;
    let fpa_spa = ClosedFormSubgame {
        formats: [AuctionFormat::Fpa, AuctionFormat::Spa],
        multipliers: [[y, x], [w, z]],
        thresholds: [-t.ln(), -u.ln()],
        revenue: [w * (1.0 + t * t) / 2.0, x * a - x * x * a * a / (2.0 * z)],
    };
    Ok(ExpSolution {
        alpha,
        vars: ExpVariables { t, u, w, x, y, z },
        fpa_fpa,
        spa_spa,
        fpa_spa,
        residuals: exp_system_residuals(a, x, y, z, w),
    })
}

pub fn exp_matrix(alpha: f64) -> Result<PayoffMatrix, CaseError> {
    let s = exp_solve(alpha)?;
    Ok(matrix_from(&s.fpa_fpa, &s.spa_spa, &s.fpa_spa))
}

pub fn exp_equilibria(alpha: f64) -> Result<EquilibriumReport, CaseError> {
    let m = exp_matrix(alpha)?;
    Ok(game::find_equilibria(&m).expect("closed-form matrix is complete"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceCertificate {
    pub t: f64,
    pub f1: f64,
    pub f2: f64,
}

impl DominanceCertificate {
    pub fn holds(&self) -> bool {
        self.f1 < 0.0 && self.f2 > 0.0
    }
}

/// `F1(t) = w - 1/(1+t^2)` and `F2(t) = 4wt(1 - u/2) - 5/8`.
pub fn exp_dominance_certificates(grid: &[f64]) -> Vec<DominanceCertificate> {
    grid.iter()
        .map(|&t| {
            let u = exp_u(t);
            let w = exp_w(t, u);
            DominanceCertificate {
                t,
                f1: w - 1.0 / (1.0 + t * t),
                f2: 4.0 * w * t * (1.0 - u / 2.0) - 5.0 / 8.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn septic_round_trip() {
        let a = lincon_alpha_of_x(0.4);
        assert!((a - 2.912_551_1).abs() < 1e-6, "{a}");
        assert!((lincon_q_f(a).unwrap() - 0.4).abs() < 1e-10);
        assert!(lincon_septic(0.4, a).abs() < 1e-12);
    }

    #[test]
    fn lincon_revenues() {
        let s = lincon_solve(2.5).unwrap();
        assert!((s.fpa_fpa.revenue[0] - 1.45).abs() < 1e-14);
        assert!((s.spa_spa.revenue[0] - 1.4).abs() < 1e-14);
        assert!((s.spa_spa.thresholds[0] - 0.6).abs() < 1e-14);
        assert!(matches!(lincon_solve(4.5), Err(CaseError::Range { .. })));
    }

    #[test]
    fn thresholds_match_phase_diagram() {
        let t = lincon_thresholds();
        assert!((t.alpha_1 - 2.182_264_1).abs() < 1e-6, "{t:?}");
        assert!((t.alpha_2 - 3.527_529_9).abs() < 1e-6, "{t:?}");
        assert!((t.alpha_3 - 3.582_290_0).abs() < 1e-6, "{t:?}");
    }

    #[test]
    fn exp_reference_point() {
        let a = exp_alpha_of_t(0.5).unwrap();
        assert!((a - 0.348_803_8).abs() < 1e-6);
        let s = exp_solve(a).unwrap();
        assert!((s.vars.t - 0.5).abs() < 1e-10);
        assert!((s.fpa_spa.revenue[1] - 0.803_305_8).abs() < 1e-6);
        assert!((s.fpa_spa.revenue[0] - 0.306_818_2).abs() < 1e-6);
        assert!((s.spa_spa.revenue[0] - 0.559_755).abs() < 1e-6);
        assert!((s.fpa_fpa.revenue[0] - 0.560_832).abs() < 1e-6);
        assert!(s.residuals.iter().all(|r| r.abs() < 1e-12), "{:?}", s.residuals);
    }

    #[test]
    fn exp_revenue_matching_point() {
        let s = exp_solve(1.0 / 3.0).unwrap();
        assert!((s.fpa_fpa.revenue[0] - 5.0 / 9.0).abs() < 1e-15);
        assert!((s.spa_spa.revenue[0] - 5.0 / 9.0).abs() < 1e-15);
        assert!((s.spa_spa.multipliers[1][0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn certificates() {
        let c = exp_dominance_certificates(&[0.37, 0.5, 0.6]);
        assert!(c.iter().all(|c| c.holds()));
        assert!((c[1].f1 + 0.309_090_9).abs() < 1e-6);
        assert!(exp_alpha_of_t(0.75).is_err());
    }
}
