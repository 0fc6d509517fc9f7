//! The platforms' format-choice game built on top of subgame solutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError};
use crate::subgame::{
    self, AuctionFormat, AuctionProfile, BiddingMode, Market, Residuals, SolverConfig,
    StaticMarket, SubgameError, SubgameSolution,
};
use crate::valuation::{Advertiser, AdvertiserPair};

/// Payoff differences below this are treated as ties.
pub const PAYOFF_TOL: f64 = 1e-9;
pub const MAX_PLATFORMS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("{0}")]
    InvalidShares(String),
    #[error("payoff matrix is incomplete: {0}")]
    IncompleteMatrix(String),
    #[error("at most {MAX_PLATFORMS} platforms are supported, got {0}")]
    TooManyPlatforms(usize),
    #[error("closed form requires a mirrored (inefficiency-free) pair")]
    ModeError,
    #[error(transparent)]
    Subgame(#[from] SubgameError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Every platform owns the whole query space at unscaled values.
    #[default]
    FullCopy,
    /// Platform `j` holds share `gamma_j` of the inventory.
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShares {
    pub gamma: Vec<f64>,
    pub normalization: Normalization,
}

impl MarketShares {
    pub fn full_copy(n: usize) -> Self {
        MarketShares {
            gamma: vec![1.0; n],
            normalization: Normalization::FullCopy,
        }
    }

    pub fn scaled(gamma: Vec<f64>) -> Result<Self, GameError> {
        let s = MarketShares {
            gamma,
            normalization: Normalization::Scaled,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.gamma.is_empty() {
            return Err(GameError::InvalidShares("at least one platform is required".into()));
        }
        if self.gamma.len() > MAX_PLATFORMS {
            return Err(GameError::TooManyPlatforms(self.gamma.len()));
        }
        match self.normalization {
            Normalization::FullCopy => {
                if self.gamma.iter().any(|g| *g != 1.0) {
                    return Err(GameError::InvalidShares(
                        "full-copy platforms must all have share 1".into(),
                    ));
                }
            }
            Normalization::Scaled => {
                if self.gamma.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
                    return Err(GameError::InvalidShares("shares must lie in (0, 1]".into()));
                }
                let sum: f64 = self.gamma.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(GameError::InvalidShares("shares must sum to 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.gamma.clone()
    }

    pub fn market(&self, profile: &AuctionProfile) -> Market {
        Market {
            formats: profile.formats.clone(),
            weights: self.weights(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffCell {
    pub profile: AuctionProfile,
    pub revenue: Option<Vec<f64>>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<SubgameSolution>,
}

/// Revenue of every platform under every format vector. Cell `k` holds the
/// profile whose bit `j` marks FPA on platform `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub platforms: usize,
    pub cells: Vec<PayoffCell>,
}

fn mask_of(formats: &[AuctionFormat]) -> usize {
    formats
        .iter()
        .enumerate()
        .filter(|(_, f)| **f == AuctionFormat::Fpa)
        .map(|(j, _)| 1 << j)
        .sum()
}

impl PayoffMatrix {
    /// Builds a matrix by calling `solve` on every profile (in parallel).
    pub fn from_solver<F>(n: usize, solve: F) -> Result<Self, GameError>
    where
        F: Fn(&AuctionProfile) -> Result<SubgameSolution, String> + Sync,
    {
        if n == 0 {
            return Err(GameError::InvalidShares("at least one platform is required".into()));
        }
        if n > MAX_PLATFORMS {
            return Err(GameError::TooManyPlatforms(n));
        }
        let cells: Vec<PayoffCell> = AuctionProfile::enumerate(n)
            .into_par_iter()
            .map(|profile| match solve(&profile) {
                Ok(sol) => PayoffCell {
                    revenue: Some(sol.revenue.clone()),
                    error: None,
                    solution: Some(sol),
                    profile,
                },
                Err(e) => PayoffCell {
                    revenue: None,
                    error: Some(e),
                    solution: None,
                    profile,
                },
            })
            .collect();
        if cells.iter().all(|c| c.revenue.is_none()) {
            let first = cells[0].error.clone().unwrap_or_default();
            return Err(GameError::IncompleteMatrix(format!("no cell could be solved: {first}")));
        }
        Ok(PayoffMatrix {
            platforms: n,
            cells,
        })
    }

    /// Builds a matrix from known revenue vectors.
    pub fn from_revenues<F>(n: usize, revenue: F) -> Self
    where
        F: Fn(&AuctionProfile) -> Vec<f64>,
    {
        let cells = AuctionProfile::enumerate(n)
            .into_iter()
            .map(|profile| PayoffCell {
                revenue: Some(revenue(&profile)),
                error: None,
                solution: None,
                profile,
            })
            .collect();
        PayoffMatrix {
            platforms: n,
            cells,
        }
    }

    pub fn cell(&self, formats: &[AuctionFormat]) -> &PayoffCell {
        &self.cells[mask_of(formats)]
    }

    pub fn revenue(&self, formats: &[AuctionFormat]) -> Option<&[f64]> {
        self.cell(formats).revenue.as_deref()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.revenue.is_some())
    }

    /// Whether swapping platforms 0 and 1 swaps their revenues (two platforms).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.platforms != 2 {
            return false;
        }
        AuctionProfile::enumerate(2).iter().all(|p| {
            let swapped = [p.formats[1], p.formats[0]];
            match (self.revenue(&p.formats), self.revenue(&swapped)) {
                (Some(a), Some(b)) => (a[0] - b[1]).abs() <= tol && (a[1] - b[0]).abs() <= tol,
                _ => false,
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    SpaDominant,
    FpaDominant,
    Degenerate,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationBasis {
    PayoffComparison,
    QTest,
}

/// Probability each platform of a 2x2 game puts on SPA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedEquilibrium {
    pub p_spa: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub pure_ne: Vec<AuctionProfile>,
    pub mixed_ne_2x2: Option<MixedEquilibrium>,
    pub dominance: Dominance,
    pub classification_basis: ClassificationBasis,
}

fn flip(formats: &[AuctionFormat], j: usize) -> Vec<AuctionFormat> {
    let mut f = formats.to_vec();
    f[j] = match f[j] {
        AuctionFormat::Fpa => AuctionFormat::Spa,
        AuctionFormat::Spa => AuctionFormat::Fpa,
    };
    f
}

/// Pure equilibria, dominance, and the 2x2 mixed equilibrium.
pub fn find_equilibria(matrix: &PayoffMatrix) -> Result<EquilibriumReport, GameError> {
    if let Some(c) = matrix.cells.iter().find(|c| c.revenue.is_none()) {
        return Err(GameError::IncompleteMatrix(format!(
            "profile ({}) has no solution: {}",
            c.profile,
            c.error.clone().unwrap_or_default()
        )));
    }
    let rev = |f: &[AuctionFormat], j: usize| matrix.revenue(f).expect("complete")[j];
    let n = matrix.platforms;
    let mut pure_ne = Vec::new();
    for cell in &matrix.cells {
        let f = &cell.profile.formats;
        let stable = (0..n).all(|j| rev(f, j) >= rev(&flip(f, j), j) - PAYOFF_TOL);
        if stable {
            pure_ne.push(cell.profile.clone());
        }
    }

    let all_equal = (0..n).all(|j| {
        let first = rev(&matrix.cells[0].profile.formats, j);
        matrix
            .cells
            .iter()
            .all(|c| (rev(&c.profile.formats, j) - first).abs() <= PAYOFF_TOL)
    });
    let mut diffs = Vec::new();
    for cell in &matrix.cells {
        let f = &cell.profile.formats;
        for j in 0..n {
            if f[j] == AuctionFormat::Spa {
                diffs.push(rev(f, j) - rev(&flip(f, j), j));
            }
        }
    }
    let dominance = if all_equal {
        Dominance::Degenerate
    } else if diffs.iter().all(|d| *d >= -PAYOFF_TOL) && diffs.iter().any(|d| *d > PAYOFF_TOL) {
        Dominance::SpaDominant
    } else if diffs.iter().all(|d| *d <= PAYOFF_TOL) && diffs.iter().any(|d| *d < -PAYOFF_TOL) {
        Dominance::FpaDominant
    } else {
        Dominance::None
    };

    let mixed_ne_2x2 = if n == 2 && !all_equal {
        mixed_2x2(matrix)
    } else {
        None
    };
    Ok(EquilibriumReport {
        pure_ne,
        mixed_ne_2x2,
        dominance,
        classification_basis: ClassificationBasis::PayoffComparison,
    })
}

fn mixed_2x2(matrix: &PayoffMatrix) -> Option<MixedEquilibrium> {
    use AuctionFormat::{Fpa as F, Spa as S};
    let r = |a: AuctionFormat, b: AuctionFormat, j: usize| matrix.revenue(&[a, b]).expect("complete")[j];
    let strict = |a: AuctionFormat, b: AuctionFormat| {
        let f = [a, b];
        (0..2).all(|j| r(f[0], f[1], j) > matrix.revenue(&flip(&f, j)).expect("complete")[j] + PAYOFF_TOL)
    };
    let diagonal = strict(S, S) && strict(F, F);
    let off = strict(S, F) && strict(F, S);
    if !(diagonal || off) {
        return None;
    }
    // p: platform 0's SPA probability, leaving platform 1 indifferent.
    let den_p = r(S, S, 1) - r(F, S, 1) - r(S, F, 1) + r(F, F, 1);
    let p = (r(F, F, 1) - r(F, S, 1)) / den_p;
    let den_q = r(S, S, 0) - r(S, F, 0) - r(F, S, 0) + r(F, F, 0);
    let q = (r(F, F, 0) - r(S, F, 0)) / den_q;
    let inside = |x: f64| x.is_finite() && x > 0.0 && x < 1.0;
    (inside(p) && inside(q)).then_some(MixedEquilibrium { p_spa: [p, q] })
}

/// Solves every profile with the general subgame solver.
pub fn build_matrix(
    pair: &AdvertiserPair,
    shares: &MarketShares,
    mode: BiddingMode,
    cfg: &SolverConfig,
) -> Result<PayoffMatrix, GameError> {
    shares.validate()?;
    PayoffMatrix::from_solver(shares.len(), |profile| {
        subgame::solve(pair, &shares.market(profile), mode, cfg).map_err(|e| e.to_string())
    })
}

/// Matrix for one strategic advertiser facing static per-platform curves.
pub fn build_static_matrix(
    curves: &StaticMarket,
    shares: &MarketShares,
    cfg: &SolverConfig,
) -> Result<PayoffMatrix, GameError> {
    shares.validate()?;
    PayoffMatrix::from_solver(shares.len(), |profile| {
        subgame::solve_single_strategic(curves, &shares.market(profile), cfg).map_err(|e| e.to_string())
    })
}

/// Scalars the mirrored closed forms are built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirroredConstants {
    pub l: f64,
    pub h: f64,
    pub e: f64,
    pub q: f64,
}

pub fn mirrored_constants(pair: &AdvertiserPair) -> Result<MirroredConstants, GameError> {
    if !metrics::is_inefficiency_free(pair) {
        return Err(GameError::ModeError);
    }
    let l = pair.v1.integral(0.0, 0.5).map_err(MetricsError::from)?;
    let h = pair.v1.integral(0.5, 1.0).map_err(MetricsError::from)?;
    let e = pair.elasticity(Advertiser::First, 0.5).map_err(MetricsError::from)?;
    Ok(MirroredConstants {
        l,
        h,
        e,
        q: e * l / h,
    })
}

/// FPA and SPA multipliers when a fraction `gamma` of inventory runs SPA.
pub fn mirrored_multipliers(c: &MirroredConstants, gamma: f64) -> (f64, f64) {
    let mu_f = 1.0 / (c.q * gamma + 1.0 - gamma);
    (mu_f, c.e * mu_f)
}

/// Closed-form equilibrium for a mirrored pair over any number of platforms.
pub fn mirrored_profile_solution(
    pair: &AdvertiserPair,
    shares: &MarketShares,
    profile: &AuctionProfile,
) -> Result<SubgameSolution, GameError> {
    shares.validate()?;
    if profile.len() != shares.len() {
        return Err(GameError::InvalidShares("profile and shares differ in length".into()));
    }
    let c = mirrored_constants(pair)?;
    let market = shares.market(profile);
    let w_total: f64 = market.weights.iter().sum();
    let gamma = market.total_weight(AuctionFormat::Spa) / w_total;
    let (mu_f, mu_s) = mirrored_multipliers(&c, gamma);
    let n = market.len();
    let mut mu = Vec::with_capacity(n);
    let mut spend = Vec::with_capacity(n);
    let mut mc = Vec::with_capacity(n);
    for (f, w) in market.formats.iter().zip(&market.weights) {
        match f {
            AuctionFormat::Fpa => {
                mu.push(mu_f);
                spend.push(w * mu_f * c.h);
                mc.push(Some(mu_f * c.e));
            }
            AuctionFormat::Spa => {
                mu.push(mu_s);
                spend.push(w * mu_s * c.l);
                mc.push(Some(mu_s));
            }
        }
    }
    let value: Vec<f64> = market.weights.iter().map(|w| w * c.h).collect();
    let total_value: f64 = value.iter().sum();
    let total_spend: f64 = spend.iter().sum();
    let target = (total_spend - total_value) / total_value.max(1.0);
    let spread = {
        let xs: Vec<f64> = mc.iter().flatten().copied().collect();
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi - lo) / hi
    };
    Ok(SubgameSolution {
        mode: BiddingMode::PerPlatform,
        formats: market.formats.clone(),
        weights: market.weights.clone(),
        multipliers: [mu.clone(), mu],
        thresholds: vec![0.5; n],
        revenue: spend.iter().map(|s| 2.0 * s).collect(),
        value: [total_value; 2],
        spend: [total_spend; 2],
        platform_value: [value.clone(), value],
        platform_spend: [spend.clone(), spend],
        marginal_costs: [mc.clone(), mc],
        flags: Vec::new(),
        residuals: Residuals {
            target: [target; 2],
            marginal_spread: [spread; 2],
        },
    })
}

/// `R_S / R_F` for platform `j` of share `gamma_j` when the other platforms
/// running SPA hold share `gamma_other`.
pub fn deviation_ratio(q: f64, gamma_other: f64, gamma_j: f64) -> f64 {
    q * (q * gamma_other + 1.0 - gamma_other)
        / (q * (gamma_other + gamma_j) + 1.0 - gamma_other - gamma_j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShareAnalysis {
    pub q: f64,
    pub report: EquilibriumReport,
    pub profiles_checked: usize,
    pub deviation_checks: usize,
    pub violations: usize,
}

/// Q-test classification, confirmed by every unilateral deviation.
pub fn market_share_dominance(
    pair: &AdvertiserPair,
    shares: &MarketShares,
) -> Result<MarketShareAnalysis, GameError> {
    shares.validate()?;
    let c = mirrored_constants(pair)?;
    let n = shares.len();
    let dominance = if (c.q - 1.0).abs() <= PAYOFF_TOL {
        Dominance::Degenerate
    } else if c.q > 1.0 {
        Dominance::SpaDominant
    } else {
        Dominance::FpaDominant
    };
    let profiles = AuctionProfile::enumerate(n);
    let revenue = |p: &AuctionProfile| -> Result<Vec<f64>, GameError> {
        Ok(mirrored_profile_solution(pair, shares, p)?.revenue)
    };
    let mut checks = 0;
    let mut violations = 0;
    for p in &profiles {
        let base = revenue(p)?;
        for j in 0..n {
            if p.formats[j] != AuctionFormat::Spa {
                continue;
            }
            let other = revenue(&AuctionProfile::new(flip(&p.formats, j)))?;
            let d = base[j] - other[j];
            checks += 1;
            let ok = match dominance {
                Dominance::SpaDominant => d > 0.0,
                Dominance::FpaDominant => d < 0.0,
                _ => d.abs() <= PAYOFF_TOL,
            };
            if !ok {
                violations += 1;
            }
        }
    }
    let pure_ne = match dominance {
        Dominance::SpaDominant => vec![AuctionProfile::new(vec![AuctionFormat::Spa; n])],
        Dominance::FpaDominant => vec![AuctionProfile::new(vec![AuctionFormat::Fpa; n])],
        _ => profiles.clone(),
    };
    Ok(MarketShareAnalysis {
        q: c.q,
        report: EquilibriumReport {
            pure_ne,
            mixed_ne_2x2: None,
            dominance,
            classification_basis: ClassificationBasis::QTest,
        },
        profiles_checked: profiles.len(),
        deviation_checks: checks,
        violations,
    })
}
