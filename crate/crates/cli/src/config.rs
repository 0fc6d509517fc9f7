//! Scenario documents: which advertisers, how many platforms, which solver knobs.

use std::path::Path;

use bidwars::casestudies;
use bidwars::game::{MarketShares, Normalization};
use bidwars::numerics::NumericsConfig;
use bidwars::oracle::OracleConfig;
use bidwars::subgame::{StaticMarket, SolverConfig};
use bidwars::{AdvertiserPair, AuctionProfile, BiddingMode, ElasticityRule, ValuationSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// Parametric families that can be swept over `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `alpha q` against the constant 1.
    LinearConstant,
    /// `alpha e^{-q}` against `e^{-2q}` on the half-line.
    Exponential,
    /// `q^alpha` against its mirror.
    MirroredMonomial,
    /// `e^{alpha q} - 1` against its mirror.
    MirroredExpGrowth,
    /// `alpha q + (1 - alpha)/2` against its mirror.
    FixedCrossing,
    /// `q + alpha` against its mirror.
    FixedSlope,
}

impl ScenarioKind {
    /// Admissible parameter range and whether each end is included.
    pub fn range(self) -> (f64, bool, f64, bool) {
        match self {
            ScenarioKind::LinearConstant => (2.0, false, 4.0, false),
            ScenarioKind::Exponential => (0.25, false, 0.5, false),
            ScenarioKind::MirroredMonomial | ScenarioKind::MirroredExpGrowth => (0.0, false, f64::INFINITY, false),
            ScenarioKind::FixedCrossing => (0.0, true, 1.0, true),
            ScenarioKind::FixedSlope => (0.0, true, f64::INFINITY, false),
        }
    }

    pub fn check(self, alpha: f64) -> Result<(), ConfigError> {
        let (lo, lo_in, hi, hi_in) = self.range();
        let above = if lo_in { alpha >= lo } else { alpha > lo };
        let below = if hi_in { alpha <= hi } else { alpha < hi };
        if alpha.is_finite() && above && below {
            Ok(())
        } else {
            let (l, r) = (if lo_in { '[' } else { '(' }, if hi_in { ']' } else { ')' });
            invalid(format!("alpha = {alpha} outside {l}{lo}, {hi}{r} for {self:?}"))
        }
    }

    pub fn pair(self, alpha: f64) -> Result<AdvertiserPair, ConfigError> {
        self.check(alpha)?;
        let mirrored = |v: ValuationSpec| AdvertiserPair::mirrored(v).map_err(|e| ConfigError::Invalid(e.to_string()));
        match self {
            ScenarioKind::LinearConstant => Ok(casestudies::lincon_pair(alpha)),
            ScenarioKind::Exponential => Ok(casestudies::exp_pair(alpha)),
            ScenarioKind::MirroredMonomial => mirrored(ValuationSpec::monomial(alpha)),
            ScenarioKind::MirroredExpGrowth => mirrored(ValuationSpec::exp_growth(alpha)),
            ScenarioKind::FixedCrossing => mirrored(ValuationSpec::affine(alpha, (1.0 - alpha) / 2.0)),
            ScenarioKind::FixedSlope => mirrored(ValuationSpec::affine(1.0, alpha)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Platforms {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<f64>>,
    #[serde(default)]
    pub normalization: Normalization,
}

impl Default for Platforms {
    fn default() -> Self {
        Platforms {
            count: 2,
            shares: None,
            normalization: Normalization::FullCopy,
        }
    }
}

/// Single-strategic setup: the strategic curve and one static curve per platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticSetup {
    pub strategic: ValuationSpec,
    pub static_competitors: Vec<ValuationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advertisers: Option<Vec<ValuationSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_strategic: Option<StaticSetup>,
    #[serde(default)]
    pub platforms: Platforms,
    #[serde(default)]
    pub mode: BiddingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<AuctionProfile>,
    #[serde(default)]
    pub elasticity: ElasticityRule,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

/// What the advertiser side of a config resolves to.
#[derive(Debug, Clone)]
pub enum Bidders {
    Pair(AdvertiserPair),
    Static(StaticMarket),
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.shares()?;
        self.bidders()?;
        self.numerics
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.oracle
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(p) = &self.profile {
            self.check_profile(p)?;
        }
        Ok(())
    }

    pub fn check_profile(&self, p: &AuctionProfile) -> Result<(), ConfigError> {
        if p.len() != self.platforms.count {
            return invalid(format!(
                "profile has {} entries but there are {} platforms",
                p.len(),
                self.platforms.count
            ));
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            numerics: self.numerics,
            elasticity: self.elasticity,
        }
    }

    pub fn shares(&self) -> Result<MarketShares, ConfigError> {
        let n = self.platforms.count;
        if n == 0 {
            return invalid("platforms.count must be positive");
        }
        let shares = match (self.platforms.normalization, &self.platforms.shares) {
            (Normalization::FullCopy, None) => MarketShares::full_copy(n),
            (norm, Some(g)) => {
                if g.len() != n {
                    return invalid(format!("expected {n} shares, got {}", g.len()));
                }
                MarketShares {
                    gamma: g.clone(),
                    normalization: norm,
                }
            }
            (Normalization::Scaled, None) => return invalid("scaled platforms need shares"),
        };
        shares
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(shares)
    }

    pub fn bidders(&self) -> Result<Bidders, ConfigError> {
        let sources = [
            self.scenario.is_some(),
            self.advertisers.is_some(),
            self.single_strategic.is_some(),
        ];
        if sources.iter().filter(|x| **x).count() != 1 {
            return invalid("give exactly one of scenario, advertisers, single_strategic");
        }
        let strategic_mode = self.mode == BiddingMode::SingleStrategic;
        if strategic_mode != self.single_strategic.is_some() {
            return invalid("single_strategic setup and mode single_strategic go together");
        }
        if let Some(s) = &self.single_strategic {
            if s.static_competitors.len() != self.platforms.count {
                return invalid("one static competitor curve per platform is required");
            }
            for v in std::iter::once(&s.strategic).chain(&s.static_competitors) {
                v.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            return Ok(Bidders::Static(StaticMarket {
                strategic: s.strategic.clone(),
                statics: s.static_competitors.clone(),
            }));
        }
        if let Some(s) = &self.scenario {
            return s.kind.pair(s.alpha).map(Bidders::Pair);
        }
        match self.advertisers.as_deref() {
            Some([v1, v2]) => AdvertiserPair::new(v1.clone(), v2.clone())
                .map(Bidders::Pair)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            _ => invalid("advertisers must list exactly two valuations"),
        }
    }

    /// Copy with the scenario parameter replaced.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, ConfigError> {
        let Some(s) = self.scenario else {
            return invalid("sweeping alpha needs a scenario block");
        };
        s.kind.check(alpha)?;
        let mut out = self.clone();
        out.scenario = Some(Scenario { kind: s.kind, alpha });
        Ok(out)
    }
}
