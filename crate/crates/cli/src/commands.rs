//! The four subcommands. Each returns a JSON value or CSV text plus the
//! exit status; nothing here touches stdout.

use bidwars::game::{self, Dominance, EquilibriumReport, PayoffMatrix};
use bidwars::metrics::{self, MarketMetrics};
use bidwars::oracle::{self, OracleComparison, OracleError, OracleSolution};
use bidwars::subgame::{self, Residuals, SubgameSolution};
use bidwars::{AdvertiserPair, AuctionProfile, BiddingMode};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Bidders, ConfigError, ScenarioConfig};

pub const TOOL: &str = "bidwars";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("oracle mismatch on {0} profile(s)")]
    Mismatch(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => 1,
            CliError::Config(_) => 2,
            CliError::Mismatch(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Solver(_) => "solver_failure",
            CliError::Config(_) => "config_invalid",
            CliError::Mismatch(_) => "oracle_mismatch",
        }
    }
}

/// Wraps a command result in the common report envelope.
pub fn envelope(
    command: &str,
    config: Option<&ScenarioConfig>,
    result: Value,
    residuals: Value,
    warnings: Vec<String>,
    error: Option<&CliError>,
) -> Value {
    json!({
        "tool": {"name": TOOL, "version": VERSION},
        "command": command,
        "config": config,
        "status": match error { None => "ok", Some(e) => e.kind() },
        "result": result,
        "residuals": residuals,
        "warnings": warnings,
        "error": error.map(|e| json!({
            "kind": e.kind(),
            "exit_code": e.exit_code(),
            "message": e.to_string(),
        })),
    })
}

/// A finished command: the report body and an optional failure that decides
/// the exit status while still letting the report be printed.
pub struct Outcome {
    pub result: Value,
    pub residuals: Value,
    pub warnings: Vec<String>,
    pub failure: Option<CliError>,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn pair_of(cfg: &ScenarioConfig) -> Result<Option<AdvertiserPair>, CliError> {
    Ok(match cfg.bidders()? {
        Bidders::Pair(p) => Some(p),
        Bidders::Static(_) => None,
    })
}

fn solve_profile(cfg: &ScenarioConfig, profile: &AuctionProfile) -> Result<SubgameSolution, String> {
    let shares = cfg.shares().map_err(|e| e.to_string())?;
    let market = shares.market(profile);
    let scfg = cfg.solver();
    match cfg.bidders().map_err(|e| e.to_string())? {
        Bidders::Pair(p) => subgame::solve(&p, &market, cfg.mode, &scfg).map_err(|e| e.to_string()),
        Bidders::Static(s) => subgame::solve_single_strategic(&s, &market, &scfg).map_err(|e| e.to_string()),
    }
}

fn metrics_of(cfg: &ScenarioConfig, pair: &AdvertiserPair) -> Option<MarketMetrics> {
    let weights = cfg.shares().ok()?.weights();
    metrics::market_metrics(pair, &weights, cfg.elasticity).ok()
}

fn residual_summary(r: &Residuals) -> Value {
    let max_target = r.target.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let max_spread = r.marginal_spread.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    json!({
        "target": r.target,
        "marginal_spread": r.marginal_spread,
        "max_abs_target": max_target,
        "max_marginal_spread": max_spread,
    })
}

pub fn solve(cfg: &ScenarioConfig, profile: Option<AuctionProfile>) -> Result<Outcome, CliError> {
    let profile = match profile.or_else(|| cfg.profile.clone()) {
        Some(p) => p,
        None => return Err(ConfigError::Invalid("solve needs --profile or a profile in the config".into()).into()),
    };
    cfg.check_profile(&profile)?;
    let pair = pair_of(cfg)?;
    let sol = solve_profile(cfg, &profile).map_err(CliError::Solver)?;
    let mut warnings = Vec::new();
    let existence = pair.as_ref().map(|p| subgame::check_existence_condition(&profile, p));
    if existence == Some(false) {
        warnings.push("existence condition fails for this profile".to_string());
    }
    for f in &sol.flags {
        warnings.push(format!("solution flag: {}", to_value(f).as_str().unwrap_or_default()));
    }
    let metrics = pair.as_ref().and_then(|p| metrics_of(cfg, p));
    Ok(Outcome {
        residuals: residual_summary(&sol.residuals),
        result: json!({
            "profile": profile,
            "solution": sol,
            "metrics": metrics,
            "existence_condition": existence,
        }),
        warnings,
        failure: None,
    })
}

fn build(cfg: &ScenarioConfig) -> Result<PayoffMatrix, CliError> {
    let shares = cfg.shares()?;
    let scfg = cfg.solver();
    let m = match cfg.bidders()? {
        Bidders::Pair(p) => game::build_matrix(&p, &shares, cfg.mode, &scfg),
        Bidders::Static(s) => game::build_static_matrix(&s, &shares, &scfg),
    };
    m.map_err(|e| CliError::Solver(e.to_string()))
}

fn matrix_residuals(m: &PayoffMatrix) -> Value {
    let (mut target, mut spread) = (0.0f64, 0.0f64);
    for c in m.cells.iter().filter_map(|c| c.solution.as_ref()) {
        target = c.residuals.target.iter().fold(target, |a, x| a.max(x.abs()));
        spread = c.residuals.marginal_spread.iter().fold(spread, |a, x| a.max(x.abs()));
    }
    json!({"max_abs_target": target, "max_marginal_spread": spread})
}

/// Short label used in sweep tables: the dominance class when there is
/// one, otherwise the pure equilibria (`+mixed` when the 2x2 mixed one exists).
pub fn classify(r: &EquilibriumReport) -> String {
    match r.dominance {
        Dominance::SpaDominant => "spa_dominant".into(),
        Dominance::FpaDominant => "fpa_dominant".into(),
        Dominance::Degenerate => "degenerate".into(),
        Dominance::None => {
            let mut parts: Vec<String> = r.pure_ne.iter().map(profile_label).collect();
            if r.mixed_ne_2x2.is_some() {
                parts.push("mixed".into());
            }
            if parts.is_empty() {
                "none".into()
            } else {
                parts.join("|")
            }
        }
    }
}

pub fn profile_label(p: &AuctionProfile) -> String {
    p.formats.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("/")
}

pub fn game(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let matrix = build(cfg)?;
    let mut warnings = Vec::new();
    for c in matrix.cells.iter().filter(|c| c.error.is_some()) {
        warnings.push(format!("profile {}: {}", c.profile, c.error.as_deref().unwrap_or_default()));
    }
    let (equilibria, failure) = match game::find_equilibria(&matrix) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(CliError::Solver(e.to_string()))),
    };
    let pair = pair_of(cfg)?;
    let q_test = match (&pair, &equilibria) {
        (Some(p), Some(eq)) if metrics::is_inefficiency_free(p) => {
            let shares = cfg.shares()?;
            game::market_share_dominance(p, &shares).ok().map(|a| {
                json!({
                    "q": a.q,
                    "dominance": a.report.dominance,
                    "deviation_checks": a.deviation_checks,
                    "violations": a.violations,
                    "agrees_with_payoffs": a.report.dominance == eq.dominance,
                })
            })
        }
        _ => None,
    };
    let metrics = pair.as_ref().and_then(|p| metrics_of(cfg, p));
    Ok(Outcome {
        residuals: matrix_residuals(&matrix),
        result: json!({
            "matrix": matrix,
            "equilibria": equilibria,
            "classification": equilibria.as_ref().map(classify),
            "q_test": q_test,
            "metrics": metrics,
        }),
        warnings,
        failure,
    })
}

#[derive(Serialize)]
struct VerifyEntry {
    profile: AuctionProfile,
    analytic: Option<SubgameSolution>,
    oracle: Option<OracleSolution>,
    comparison: Option<OracleComparison>,
    warning: Option<String>,
    error: Option<String>,
}

pub fn verify(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let Some(pair) = pair_of(cfg)? else {
        return Err(ConfigError::Invalid("verify needs two strategic advertisers".into()).into());
    };
    if cfg.mode == BiddingMode::SingleStrategic {
        return Err(ConfigError::Invalid("verify does not support single_strategic mode".into()).into());
    }
    let shares = cfg.shares()?;
    let profiles = match &cfg.profile {
        Some(p) => vec![p.clone()],
        None => AuctionProfile::enumerate(shares.len()),
    };
    let ocfg = cfg.oracle;
    let entries: Vec<VerifyEntry> = profiles
        .into_par_iter()
        .map(|profile| {
            let market = shares.market(&profile);
            let analytic = match subgame::solve(&pair, &market, cfg.mode, &cfg.solver()) {
                Ok(s) => s,
                Err(e) => {
                    return VerifyEntry {
                        profile,
                        analytic: None,
                        oracle: None,
                        comparison: None,
                        warning: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            let (state, warning) = match oracle::equilibrium_by_dynamics(&pair, &market, cfg.mode, &ocfg) {
                Ok(s) => (Some(s), None),
                Err(OracleError::NoConvergence { state, .. }) => {
                    let msg = format!("oracle did not converge within {} rounds", ocfg.max_rounds);
                    (Some(*state), Some(msg))
                }
                Err(e) => (None, Some(e.to_string())),
            };
            let comparison = state.as_ref().map(|s| oracle::compare(&analytic, s, &ocfg));
            VerifyEntry {
                profile,
                analytic: Some(analytic),
                oracle: state,
                comparison,
                warning,
                error: None,
            }
        })
        .collect();
    let warnings: Vec<String> = entries
        .iter()
        .filter_map(|e| e.warning.as_ref().map(|w| format!("profile {}: {w}", e.profile)))
        .collect();
    let solver_errors: Vec<String> = entries
        .iter()
        .filter_map(|e| e.error.as_ref().map(|w| format!("profile {}: {w}", e.profile)))
        .collect();
    // non-converged runs are warnings, not mismatches
    let mismatches = entries
        .iter()
        .filter(|e| e.warning.is_none())
        .filter(|e| e.comparison.as_ref().is_some_and(|c| !c.pass))
        .count();
    let max = |f: &dyn Fn(&OracleComparison) -> f64| {
        entries
            .iter()
            .filter_map(|e| e.comparison.as_ref())
            .map(f)
            .fold(0.0f64, f64::max)
    };
    let residuals = json!({
        "max_threshold_delta": max(&|c| c.threshold_delta.iter().copied().fold(0.0, f64::max)),
        "max_revenue_rel_delta": max(&|c| c.revenue_rel_delta.iter().copied().fold(0.0, f64::max)),
        "threshold_tol": ocfg.threshold_tol(),
        "revenue_tol": oracle::REVENUE_REL_TOL,
    });
    let failure = if !solver_errors.is_empty() {
        Some(CliError::Solver(solver_errors.join("; ")))
    } else if mismatches > 0 {
        Some(CliError::Mismatch(mismatches))
    } else {
        None
    };
    Ok(Outcome {
        result: json!({
            "pass": failure.is_none(),
            "profiles": entries,
        }),
        residuals,
        warnings,
        failure,
    })
}

pub struct SweepSpec {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn points(&self) -> Vec<f64> {
        match self.steps {
            1 => vec![self.from],
            n => (0..n)
                .map(|k| {
                    if k + 1 == n {
                        self.to
                    } else {
                        self.from + (self.to - self.from) * k as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

pub fn sweep_header(n: usize) -> Vec<String> {
    let mut h = vec!["alpha".to_string(), "profile".to_string()];
    let series = |prefix: &str, h: &mut Vec<String>| {
        for j in 1..=n {
            h.push(format!("{prefix}_{j}"));
        }
    };
    series("rev", &mut h);
    series("q", &mut h);
    series("mu1", &mut h);
    series("mu2", &mut h);
    for c in ["w_star", "c_a", "e1", "e2", "q_param", "classification", "error"] {
        h.push(c.to_string());
    }
    h
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.12e}")
    } else {
        String::new()
    }
}

/// One CSV row per (step, profile), steps evaluated concurrently and
/// written in input order.
pub fn sweep(cfg: &ScenarioConfig, spec: &SweepSpec) -> Result<String, CliError> {
    if spec.steps == 0 {
        return Err(ConfigError::Invalid("--steps must be positive".into()).into());
    }
    let alphas = spec.points();
    let configs = alphas
        .iter()
        .map(|&a| cfg.with_alpha(a))
        .collect::<Result<Vec<_>, _>>()?;
    let n = cfg.platforms.count;
    let blocks: Vec<Vec<Vec<String>>> = configs
        .par_iter()
        .zip(&alphas)
        .map(|(c, &alpha)| sweep_rows(c, alpha, n))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Solver(e.to_string());
    w.write_record(sweep_header(n)).map_err(io)?;
    for row in blocks.iter().flatten() {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Solver(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn sweep_rows(cfg: &ScenarioConfig, alpha: f64, n: usize) -> Vec<Vec<String>> {
    let pair = pair_of(cfg).ok().flatten();
    let m = pair.as_ref().and_then(|p| metrics_of(cfg, p));
    let tail_metrics = match &m {
        Some(m) => vec![
            num(m.w_star),
            num(m.c_a),
            m.e_at_qeff.map(|e| num(e[0])).unwrap_or_default(),
            m.e_at_qeff.map(|e| num(e[1])).unwrap_or_default(),
            m.q.map(num).unwrap_or_default(),
        ],
        None => vec![String::new(); 5],
    };
    let (matrix, class) = match build(cfg) {
        Ok(mx) => {
            let class = game::find_equilibria(&mx).map(|r| classify(&r)).unwrap_or_else(|_| "incomplete".into());
            (Some(mx), class)
        }
        Err(_) => (None, "incomplete".into()),
    };
    AuctionProfile::enumerate(n)
        .into_iter()
        .map(|p| {
            let mut row = vec![num(alpha), profile_label(&p)];
            let cell = matrix.as_ref().map(|mx| mx.cell(&p.formats));
            match cell.and_then(|c| c.solution.as_ref()) {
                Some(s) => {
                    row.extend(s.revenue.iter().map(|x| num(*x)));
                    row.extend(s.thresholds.iter().map(|x| num(*x)));
                    row.extend(s.multipliers[0].iter().map(|x| num(*x)));
                    row.extend(s.multipliers[1].iter().map(|x| num(*x)));
                }
                None => row.extend(std::iter::repeat(String::new()).take(4 * n)),
            }
            row.extend(tail_metrics.iter().cloned());
            row.push(class.clone());
            let err = match cell {
                Some(c) => c.error.clone().unwrap_or_default(),
                None => "matrix could not be built".into(),
            };
            row.push(err);
            row
        })
        .collect()
}

pub fn parse_profile(s: &str) -> Result<AuctionProfile, CliError> {
    s.parse::<AuctionProfile>()
        .map_err(|e| ConfigError::Invalid(format!("bad --profile: {e}")).into())
}

