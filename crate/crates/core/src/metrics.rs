//! Welfare, competition and elasticity diagnostics of a valuation pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::valuation::{Advertiser, AdvertiserPair, ElasticityRule, ValuationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error("both valuations integrate to zero")]
    ZeroMarket,
    #[error("Q is only defined for mirrored (inefficiency-free) pairs")]
    ModeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketMetrics {
    pub w_star: f64,
    pub l: f64,
    pub h: f64,
    pub c_a: f64,
    pub q_eff: f64,
    /// `E_1(q_eff)` and `E_2(q_eff)`; absent when a valuation vanishes there.
    pub e_at_qeff: Option<[f64; 2]>,
    /// Only reported for mirrored pairs.
    pub q: Option<f64>,
}

/// Tolerance for recognising `v2(q) = v1(1 - q)` numerically.
const MIRROR_TOL: f64 = 1e-12;

/// Whether `v2(q) = v1(1 - q)` on a sample grid.
pub fn is_inefficiency_free(pair: &AdvertiserPair) -> bool {
    if pair.domain().hi().is_infinite() {
        return false;
    }
    (0..=256).all(|k| {
        let q = k as f64 / 256.0;
        let (a, b) = (pair.v2.value(q), pair.v1.value(1.0 - q));
        (a - b).abs() <= MIRROR_TOL * a.abs().max(b.abs()).max(1.0)
    })
}

/// Crossing point used for the efficient allocation; `1/2` for mirrored pairs.
fn efficient_point(pair: &AdvertiserPair) -> f64 {
    if is_inefficiency_free(pair) {
        0.5
    } else {
        pair.threshold(1.0, 1.0)
    }
}

/// `(L1, L2, H1, H2)`: each advertiser's value on the opponent's and its own
/// side of the efficient threshold.
fn split_values(pair: &AdvertiserPair) -> Result<(f64, f64, f64, f64), ValuationError> {
    let d = pair.domain();
    let q = efficient_point(pair);
    let l1 = pair.v1.integral(d.lo(), q)?;
    let l2 = pair.v2.integral(q, d.hi())?;
    let h1 = pair.v1.integral(q, d.hi())?;
    let h2 = pair.v2.integral(d.lo(), q)?;
    Ok((l1, l2, h1, h2))
}

/// `sum_j w_j * int max(v1, v2)`.
pub fn liquid_welfare(pair: &AdvertiserPair, weights: &[f64]) -> Result<f64, MetricsError> {
    let (_, _, h1, h2) = split_values(pair)?;
    Ok(weights.iter().sum::<f64>() * (h1 + h2))
}

/// `1 - int (v_(1) - v_(2)) / int v_(1)`.
pub fn competition(pair: &AdvertiserPair) -> Result<f64, MetricsError> {
    let (l1, l2, h1, h2) = split_values(pair)?;
    let top = h1 + h2;
    if top <= 0.0 {
        return Err(MetricsError::ZeroMarket);
    }
    Ok(((l1 + l2) / top).clamp(0.0, 1.0))
}

/// `Q = E(q_eff) * L / H` for mirrored pairs.
pub fn q_parameter(pair: &AdvertiserPair) -> Result<f64, MetricsError> {
    if !is_inefficiency_free(pair) {
        return Err(MetricsError::ModeError);
    }
    let (l1, l2, h1, h2) = split_values(pair)?;
    let (l, h) = (0.5 * (l1 + l2), 0.5 * (h1 + h2));
    if h <= 0.0 {
        return Err(MetricsError::ZeroMarket);
    }
    let e = pair.elasticity(Advertiser::First, 0.5)?;
    Ok(e * l / h)
}

/// `L/H + 2 v'(1/2) / v(1/2)^2 * L`, the mirrored-pair shortcut.
pub fn q_parameter_closed_form(pair: &AdvertiserPair) -> Result<f64, MetricsError> {
    if !is_inefficiency_free(pair) {
        return Err(MetricsError::ModeError);
    }
    let l = pair.v1.integral(0.0, 0.5)?;
    let h = pair.v1.integral(0.5, 1.0)?;
    if h <= 0.0 {
        return Err(MetricsError::ZeroMarket);
    }
    let v = pair.v1.value(0.5);
    if v <= 0.0 {
        return Err(ValuationError::SingularElasticity { q: 0.5 }.into());
    }
    Ok(l / h + 2.0 * pair.v1.derivative(0.5) / (v * v) * l)
}

pub fn market_metrics(
    pair: &AdvertiserPair,
    weights: &[f64],
    rule: ElasticityRule,
) -> Result<MarketMetrics, MetricsError> {
    let (l1, l2, h1, h2) = split_values(pair)?;
    let q_eff = efficient_point(pair);
    let e_at_qeff = match (
        pair.elasticity_with(rule, Advertiser::First, q_eff),
        pair.elasticity_with(rule, Advertiser::Second, q_eff),
    ) {
        (Ok(a), Ok(b)) => Some([a, b]),
        _ => None,
    };
    let q = if is_inefficiency_free(pair) {
        q_parameter(pair).ok()
    } else {
        None
    };
    Ok(MarketMetrics {
        w_star: liquid_welfare(pair, weights)?,
        l: 0.5 * (l1 + l2),
        h: 0.5 * (h1 + h2),
        c_a: competition(pair)?,
        q_eff,
        e_at_qeff,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::ValuationSpec;

    fn mirrored(alpha: f64) -> AdvertiserPair {
        AdvertiserPair::mirrored(ValuationSpec::monomial(alpha)).unwrap()
    }

    #[test]
    fn linear_mirrored_metrics() {
        let p = mirrored(1.0);
        assert!((liquid_welfare(&p, &[1.0, 1.0]).unwrap() - 1.5).abs() < 1e-14);
        assert!((competition(&p).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((q_parameter(&p).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_q() {
        let p = mirrored(2.0);
        assert!((q_parameter(&p).unwrap() - 31.0 / 21.0).abs() < 1e-12);
        assert!((q_parameter_closed_form(&p).unwrap() - 31.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn competition_extremes() {
        let same = AdvertiserPair::new(ValuationSpec::constant(1.0), ValuationSpec::constant(1.0))
            .unwrap();
        assert!((competition(&same).unwrap() - 1.0).abs() < 1e-14);
        let alone = AdvertiserPair::new(ValuationSpec::monomial(1.0), ValuationSpec::constant(0.0))
            .unwrap();
        assert_eq!(competition(&alone).unwrap(), 0.0);
    }

    #[test]
    fn linear_constant_welfare() {
        let a: f64 = 2.7;
        let p = AdvertiserPair::new(ValuationSpec::affine(a, 0.0), ValuationSpec::constant(1.0))
            .unwrap();
        let want = (a * a + 1.0) / (2.0 * a);
        assert!((liquid_welfare(&p, &[1.0]).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn q_requires_mirrored_pair() {
        let p = AdvertiserPair::new(ValuationSpec::affine(3.0, 0.0), ValuationSpec::constant(1.0))
            .unwrap();
        assert_eq!(q_parameter(&p), Err(MetricsError::ModeError));
    }

    #[test]
    fn exponential_growth_q_exceeds_one() {
        let p = AdvertiserPair::mirrored(ValuationSpec::exp_growth(1.0)).unwrap();
        assert!(q_parameter(&p).unwrap() > 1.0);
    }
}
