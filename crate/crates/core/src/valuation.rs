//! Valuation curves for the two advertisers and the quantities derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Query domain shared by both curves of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    #[default]
    Unit,
    HalfLine,
}

impl Domain {
    pub fn lo(self) -> f64 {
        0.0
    }

    pub fn hi(self) -> f64 {
        match self {
            Domain::Unit => 1.0,
            Domain::HalfLine => f64::INFINITY,
        }
    }

    pub fn contains(self, q: f64) -> bool {
        q >= 0.0 && q <= self.hi()
    }

    /// Maps `s` in `[0, 1]` onto the domain; identity on the unit interval.
    pub fn from_unit(self, s: f64) -> f64 {
        match self {
            Domain::Unit => s,
            Domain::HalfLine => {
                if s >= 1.0 {
                    f64::INFINITY
                } else {
                    s / (1.0 - s)
                }
            }
        }
    }

    pub fn to_unit(self, q: f64) -> f64 {
        match self {
            Domain::Unit => q,
            Domain::HalfLine => {
                if q.is_infinite() {
                    1.0
                } else {
                    q / (1.0 + q)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `q^alpha`
    Monomial { alpha: f64 },
    /// `slope * q + intercept`
    Affine { slope: f64, intercept: f64 },
    Constant { level: f64 },
    /// `scale * exp(-rate * q)`
    ScaledExponentialDecay { scale: f64, rate: f64 },
    /// `exp(alpha * q) - 1`
    ExponentialGrowth { alpha: f64 },
    /// `of(1 - q)`
    MirrorOf { of: Box<ValuationSpec> },
    /// `factor * of(q)`
    Scaled { factor: f64, of: Box<ValuationSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValuationError {
    #[error("query {q} lies outside the domain")]
    Domain { q: f64 },
    #[error("elasticity undefined at q = {q}: valuation vanishes")]
    SingularElasticity { q: f64 },
    #[error("elasticity integral diverges at q = {q}")]
    DivergentElasticity { q: f64 },
    #[error("integral over [{a}, {b}] diverges")]
    DivergentIntegral { a: f64, b: f64 },
    #[error("invalid valuation parameters: {0}")]
    InvalidParameter(String),
    #[error("valuations do not cross in the interior of the domain")]
    NoInteriorCrossing,
    #[error("value ratio v1/v2 decreases near q = {q}")]
    NonMonotoneRatio { q: f64 },
    #[error("both valuations must share one domain")]
    DomainMismatch,
}

impl ValuationSpec {
    pub fn new(family: Family, domain: Domain) -> Self {
        ValuationSpec { family, domain }
    }

    pub fn monomial(alpha: f64) -> Self {
        Self::new(Family::Monomial { alpha }, Domain::Unit)
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        Self::new(Family::Affine { slope, intercept }, Domain::Unit)
    }

    pub fn constant(level: f64) -> Self {
        Self::new(Family::Constant { level }, Domain::Unit)
    }

    pub fn exp_decay(scale: f64, rate: f64) -> Self {
        Self::new(Family::ScaledExponentialDecay { scale, rate }, Domain::Unit)
    }

    pub fn exp_growth(alpha: f64) -> Self {
        Self::new(Family::ExponentialGrowth { alpha }, Domain::Unit)
    }

    pub fn mirror_of(of: ValuationSpec) -> Self {
        Self::new(Family::MirrorOf { of: Box::new(of) }, Domain::Unit)
    }

    pub fn scaled(factor: f64, of: ValuationSpec) -> Self {
        let domain = of.domain;
        Self::new(
            Family::Scaled {
                factor,
                of: Box::new(of),
            },
            domain,
        )
    }

    pub fn on(mut self, domain: Domain) -> Self {
        self.domain = domain;
        if let Family::Scaled { of, .. } = &mut self.family {
            of.domain = domain;
        }
        self
    }

    pub fn validate(&self) -> Result<(), ValuationError> {
        let bad = |msg: &str| Err(ValuationError::InvalidParameter(msg.to_string()));
        let half = self.domain == Domain::HalfLine;
        match &self.family {
            Family::Monomial { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return bad("monomial exponent must be positive");
                }
            }
            Family::Affine { slope, intercept } => {
                if !slope.is_finite() || !intercept.is_finite() {
                    return bad("affine coefficients must be finite");
                }
                let end = if half { *slope } else { slope + intercept };
                if *intercept < 0.0 || end < 0.0 {
                    return bad("affine valuation must be nonnegative on its domain");
                }
            }
            Family::Constant { level } => {
                if !(level.is_finite() && *level >= 0.0) {
                    return bad("constant level must be nonnegative");
                }
            }
            Family::ScaledExponentialDecay { scale, rate } => {
                if !(scale.is_finite() && *scale >= 0.0 && rate.is_finite() && *rate >= 0.0) {
                    return bad("exponential decay needs nonnegative scale and rate");
                }
            }
            Family::ExponentialGrowth { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return bad("exponential growth rate must be positive");
                }
            }
            Family::MirrorOf { of } => {
                if half || of.domain != Domain::Unit {
                    return bad("mirrored valuations are only defined on [0, 1]");
                }
                of.validate()?;
            }
            Family::Scaled { factor, of } => {
                if !(factor.is_finite() && *factor >= 0.0) {
                    return bad("scale factor must be nonnegative");
                }
                if of.domain != self.domain {
                    return Err(ValuationError::DomainMismatch);
                }
                of.validate()?;
            }
        }
        Ok(())
    }

    /// Value at `q` with a domain check.
    pub fn eval(&self, q: f64) -> Result<f64, ValuationError> {
        if !self.domain.contains(q) || q.is_infinite() {
            return Err(ValuationError::Domain { q });
        }
        Ok(self.value(q))
    }

    /// Value at `q` without a domain check.
    pub fn value(&self, q: f64) -> f64 {
        match &self.family {
            Family::Monomial { alpha } => q.powf(*alpha),
            Family::Affine { slope, intercept } => slope * q + intercept,
            Family::Constant { level } => *level,
            Family::ScaledExponentialDecay { scale, rate } => scale * (-rate * q).exp(),
            Family::ExponentialGrowth { alpha } => (alpha * q).exp_m1(),
            Family::MirrorOf { of } => of.value(1.0 - q),
            Family::Scaled { factor, of } => factor * of.value(q),
        }
    }

    pub fn derivative(&self, q: f64) -> f64 {
        match &self.family {
            Family::Monomial { alpha } => {
                if *alpha == 1.0 {
                    1.0
                } else {
                    alpha * q.powf(alpha - 1.0)
                }
            }
            Family::Affine { slope, .. } => *slope,
            Family::Constant { .. } => 0.0,
            Family::ScaledExponentialDecay { scale, rate } => -rate * scale * (-rate * q).exp(),
            Family::ExponentialGrowth { alpha } => alpha * (alpha * q).exp(),
            Family::MirrorOf { of } => -of.derivative(1.0 - q),
            Family::Scaled { factor, of } => factor * of.derivative(q),
        }
    }

    /// Exact integral over `[a, b]`; `b` may be infinite on the half-line.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64, ValuationError> {
        if b < a {
            return self.integral(b, a).map(|v| -v);
        }
        if a == b {
            return Ok(0.0);
        }
        let infinite = b.is_infinite();
        let divergent = Err(ValuationError::DivergentIntegral { a, b });
        let v = match &self.family {
            Family::Monomial { alpha } => {
                if infinite {
                    return divergent;
                }
                (b.powf(alpha + 1.0) - a.powf(alpha + 1.0)) / (alpha + 1.0)
            }
            Family::Affine { slope, intercept } => {
                if infinite {
                    if *slope == 0.0 && *intercept == 0.0 {
                        return Ok(0.0);
                    }
                    return divergent;
                }
                0.5 * slope * (b - a) * (b + a) + intercept * (b - a)
            }
            Family::Constant { level } => {
                if infinite {
                    if *level == 0.0 {
                        return Ok(0.0);
                    }
                    return divergent;
                }
                level * (b - a)
            }
            Family::ScaledExponentialDecay { scale, rate } => {
                if *rate == 0.0 {
                    if infinite {
                        if *scale == 0.0 {
                            return Ok(0.0);
                        }
                        return divergent;
                    }
                    scale * (b - a)
                } else if infinite {
                    scale / rate * (-rate * a).exp()
                } else {
                    -scale / rate * (-rate * a).exp() * (-rate * (b - a)).exp_m1()
                }
            }
            Family::ExponentialGrowth { alpha } => {
                if infinite {
                    return divergent;
                }
                (alpha * a).exp() * (alpha * (b - a)).exp_m1() / alpha - (b - a)
            }
            Family::MirrorOf { of } => of.integral(1.0 - b, 1.0 - a)?,
            Family::Scaled { factor, of } => {
                if *factor == 0.0 {
                    return Ok(0.0);
                }
                factor * of.integral(a, b)?
            }
        };
        Ok(v)
    }

    /// `|v'(q) / v(q)|`
    pub fn eta(&self, q: f64) -> Result<f64, ValuationError> {
        let v = self.eval(q)?;
        if v <= 0.0 {
            return Err(ValuationError::SingularElasticity { q });
        }
        Ok((self.derivative(q) / v).abs())
    }

    /// Signed logarithmic derivative `v'(q) / v(q)`.
    pub fn log_slope(&self, q: f64) -> Result<f64, ValuationError> {
        let v = self.eval(q)?;
        if v <= 0.0 {
            return Err(ValuationError::SingularElasticity { q });
        }
        Ok(self.derivative(q) / v)
    }

    /// Mirrored pairs in the sense of `v2(q) = v1(1 - q)`.
    pub fn is_mirror_of(&self, other: &ValuationSpec) -> bool {
        match &self.family {
            Family::MirrorOf { of } => **of == *other,
            _ => false,
        }
    }
}

/// Which slope enters the elasticity multiplying the remaining value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElasticityRule {
    /// `(ln h)'(q) = v1'/v1 - v2'/v2`, the slope of the bid landscape.
    #[default]
    Landscape,
    /// `|v1'/v1| + |v2'/v2|`.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Advertiser {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
}

impl Advertiser {
    pub fn index(self) -> usize {
        match self {
            Advertiser::First => 0,
            Advertiser::Second => 1,
        }
    }

    pub fn other(self) -> Advertiser {
        match self {
            Advertiser::First => Advertiser::Second,
            Advertiser::Second => Advertiser::First,
        }
    }

    pub const BOTH: [Advertiser; 2] = [Advertiser::First, Advertiser::Second];
}

const MONOTONE_SAMPLES: usize = 256;
const HALF_LINE_SEARCH_CAP: f64 = 512.0;

/// Two advertisers with unit targets; advertiser 1 wins the high-ratio queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertiserPair {
    pub v1: ValuationSpec,
    pub v2: ValuationSpec,
}

impl AdvertiserPair {
    pub fn new(v1: ValuationSpec, v2: ValuationSpec) -> Result<Self, ValuationError> {
        let pair = AdvertiserPair { v1, v2 };
        pair.validate()?;
        Ok(pair)
    }

    /// `v1 = v`, `v2 = v(1 - q)`.
    pub fn mirrored(v: ValuationSpec) -> Result<Self, ValuationError> {
        Self::new(v.clone(), ValuationSpec::mirror_of(v))
    }

    pub fn validate(&self) -> Result<(), ValuationError> {
        self.v1.validate()?;
        self.v2.validate()?;
        if self.v1.domain != self.v2.domain {
            return Err(ValuationError::DomainMismatch);
        }
        let n = MONOTONE_SAMPLES;
        let mut prev: Option<f64> = None;
        for k in 1..=n {
            let q = self.domain().from_unit(k as f64 / (n + 1) as f64);
            let (a, b) = (self.v1.value(q), self.v2.value(q));
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let r = if b == 0.0 { f64::INFINITY } else { a / b };
            if let Some(p) = prev {
                if r < p && (p - r) > 1e-10 * p.abs().max(1e-300) {
                    return Err(ValuationError::NonMonotoneRatio { q });
                }
            }
            prev = Some(r);
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        self.v1.domain
    }

    pub fn valuation(&self, adv: Advertiser) -> &ValuationSpec {
        match adv {
            Advertiser::First => &self.v1,
            Advertiser::Second => &self.v2,
        }
    }

    pub fn is_mirrored(&self) -> bool {
        self.v2.is_mirror_of(&self.v1)
    }

    pub fn scaled(&self, c: f64) -> Self {
        AdvertiserPair {
            v1: ValuationSpec::scaled(c, self.v1.clone()),
            v2: ValuationSpec::scaled(c, self.v2.clone()),
        }
    }

    pub fn h(&self, q: f64) -> f64 {
        self.v1.value(q) / self.v2.value(q)
    }

    /// Signed `(ln h)'(q)`.
    pub fn log_ratio_slope(&self, q: f64) -> Result<f64, ValuationError> {
        Ok(self.v1.log_slope(q)? - self.v2.log_slope(q)?)
    }

    /// Threshold query `q(mu1, mu2)`: advertiser 2 wins below, advertiser 1
    /// at and above. Returns the domain end when one side wins everything.
    pub fn threshold(&self, mu1: f64, mu2: f64) -> f64 {
        let g = |q: f64| mu1 * self.v1.value(q) - mu2 * self.v2.value(q);
        let lo = self.domain().lo();
        let mut hi = self.domain().hi();
        if hi.is_infinite() {
            let mut b = 1.0;
            while g(b) < 0.0 {
                if b >= HALF_LINE_SEARCH_CAP {
                    return f64::INFINITY;
                }
                b *= 2.0;
            }
            hi = b;
        } else if g(hi) < 0.0 {
            return hi;
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if g(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        if a == lo && g(lo) >= 0.0 {
            return lo;
        }
        b
    }

    /// Threshold at which `h(q) = ratio`.
    pub fn threshold_for_ratio(&self, ratio: f64) -> f64 {
        self.threshold(1.0, ratio)
    }

    pub fn efficient_threshold(&self) -> Result<f64, ValuationError> {
        let q = self.threshold(1.0, 1.0);
        let d = self.domain();
        if !(q > d.lo() && q < d.hi()) {
            return Err(ValuationError::NoInteriorCrossing);
        }
        let below = self.v1.value(0.5 * (d.lo() + q)) - self.v2.value(0.5 * (d.lo() + q));
        if below >= 0.0 {
            return Err(ValuationError::NoInteriorCrossing);
        }
        Ok(q)
    }

    /// Value advertiser `adv` collects from a threshold `t` on a unit-weight
    /// platform.
    pub fn won_value(&self, adv: Advertiser, t: f64) -> Result<f64, ValuationError> {
        let d = self.domain();
        match adv {
            Advertiser::First => self.v1.integral(t, d.hi()),
            Advertiser::Second => self.v2.integral(d.lo(), t),
        }
    }

    /// Opponent value over advertiser `adv`'s winning set at threshold `t`.
    pub fn opposing_value(&self, adv: Advertiser, t: f64) -> Result<f64, ValuationError> {
        let d = self.domain();
        match adv {
            Advertiser::First => self.v2.integral(t, d.hi()),
            Advertiser::Second => self.v1.integral(d.lo(), t),
        }
    }

    /// `E_i(q) = 1 + (eta1 + eta2) * remaining value / v_i(q)`.
    pub fn elasticity(&self, adv: Advertiser, q: f64) -> Result<f64, ValuationError> {
        self.elasticity_with(ElasticityRule::Absolute, adv, q)
    }

    /// Elasticity whose slope factor is the signed `(ln h)'`.
    pub fn landscape_elasticity(&self, adv: Advertiser, q: f64) -> Result<f64, ValuationError> {
        self.elasticity_with(ElasticityRule::Landscape, adv, q)
    }

    pub fn elasticity_with(
        &self,
        rule: ElasticityRule,
        adv: Advertiser,
        q: f64,
    ) -> Result<f64, ValuationError> {
        let slope = match rule {
            ElasticityRule::Absolute => self.v1.eta(q)? + self.v2.eta(q)?,
            ElasticityRule::Landscape => self.log_ratio_slope(q)?,
        };
        let vi = self.valuation(adv).value(q);
        let remaining = self
            .won_value(adv, q)
            .map_err(|_| ValuationError::DivergentElasticity { q })?;
        Ok(1.0 + slope * remaining / vi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_families() {
        assert_eq!(ValuationSpec::monomial(1.0).eval(0.5).unwrap(), 0.5);
        assert_eq!(ValuationSpec::constant(1.0).eval(0.3).unwrap(), 1.0);
        let d = ValuationSpec::exp_decay(1.0 / 3.0, 1.0).on(Domain::HalfLine);
        assert!((d.eval(0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(ValuationSpec::monomial(1.0).eval(1.5).is_err());
    }

    #[test]
    fn efficient_thresholds() {
        let m = AdvertiserPair::mirrored(ValuationSpec::monomial(1.0)).unwrap();
        assert!((m.efficient_threshold().unwrap() - 0.5).abs() < 1e-14);
        let l = AdvertiserPair::new(ValuationSpec::affine(2.5, 0.0), ValuationSpec::constant(1.0))
            .unwrap();
        assert!((l.efficient_threshold().unwrap() - 0.4).abs() < 1e-14);
        let e = AdvertiserPair::new(
            ValuationSpec::exp_decay(1.0 / 3.0, 1.0).on(Domain::HalfLine),
            ValuationSpec::exp_decay(1.0, 2.0).on(Domain::HalfLine),
        )
        .unwrap();
        assert!((e.efficient_threshold().unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identical_curves_do_not_cross() {
        let p = AdvertiserPair::new(ValuationSpec::constant(0.5), ValuationSpec::constant(0.5))
            .unwrap();
        assert_eq!(p.efficient_threshold(), Err(ValuationError::NoInteriorCrossing));
    }

    #[test]
    fn eta_values() {
        assert!((ValuationSpec::monomial(1.0).eta(0.5).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(ValuationSpec::constant(1.0).eta(0.7).unwrap(), 0.0);
        let d = ValuationSpec::exp_decay(0.3, 1.0).on(Domain::HalfLine);
        assert!((d.eta(2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            ValuationSpec::monomial(1.0).eta(0.0),
            Err(ValuationError::SingularElasticity { .. })
        ));
    }

    #[test]
    fn elasticity_examples() {
        let m = AdvertiserPair::mirrored(ValuationSpec::monomial(1.0)).unwrap();
        assert!((m.elasticity(Advertiser::First, 0.5).unwrap() - 4.0).abs() < 1e-12);
        assert!((m.elasticity(Advertiser::Second, 0.5).unwrap() - 4.0).abs() < 1e-12);
        let qf: f64 = 0.4;
        let l = AdvertiserPair::new(ValuationSpec::affine(2.9, 0.0), ValuationSpec::constant(1.0))
            .unwrap();
        let want = (1.0 + qf * qf) / (2.0 * qf * qf);
        assert!((l.elasticity(Advertiser::First, qf).unwrap() - want).abs() < 1e-12);
        let e = AdvertiserPair::new(
            ValuationSpec::exp_decay(0.4, 1.0).on(Domain::HalfLine),
            ValuationSpec::exp_decay(1.0, 2.0).on(Domain::HalfLine),
        )
        .unwrap();
        assert!((e.elasticity(Advertiser::First, 0.7).unwrap() - 4.0).abs() < 1e-12);
        assert!((e.landscape_elasticity(Advertiser::First, 0.7).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_decreasing_ratio_and_bad_mirror() {
        let bad = AdvertiserPair::new(ValuationSpec::constant(1.0), ValuationSpec::monomial(1.0));
        assert!(matches!(bad, Err(ValuationError::NonMonotoneRatio { .. })));
        let m = ValuationSpec::mirror_of(ValuationSpec::monomial(1.0)).on(Domain::HalfLine);
        assert!(m.validate().is_err());
    }

    #[test]
    fn threshold_orientation() {
        let l = AdvertiserPair::new(ValuationSpec::affine(2.5, 0.0), ValuationSpec::constant(1.0))
            .unwrap();
        // alpha * q = mu2 / mu1 = 2 / (4/3) gives q = 0.6
        assert!((l.threshold(4.0 / 3.0, 2.0) - 0.6).abs() < 1e-14);
        assert_eq!(l.threshold(1.0, 10.0), 1.0);
        assert_eq!(l.threshold(1.0, 0.0), 0.0);
    }

    #[test]
    fn config_roundtrip() {
        let v = ValuationSpec::mirror_of(ValuationSpec::monomial(2.0));
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<ValuationSpec>(&s).unwrap(), v);
        let parsed: ValuationSpec =
            serde_json::from_str(r#"{"family":"monomial","alpha":2.0}"#).unwrap();
        assert_eq!(parsed, ValuationSpec::monomial(2.0));
    }
}
