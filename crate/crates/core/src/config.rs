//! JSON problem files with a strict schema.
//!
//! Every section is optional; commands check for the ones they need. Unknown
//! sections and keys are rejected, numeric fields are checked against the
//! model invariants, and expression strings are parsed at load time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::continuous::{ContinuousProblem, Objective, SaddleConfig};
use crate::discrete::{CostScaling, DiscreteProblem, Mode, StageBounds};
use crate::dynamics::DynamicsSpec;
use crate::econ::{CareerTail, EconParams, MarketAccounts, NeedBreakdown, Population};
use crate::grid::{Interval, UniformGrid};
use crate::oracle::OracleBudget;

pub const DEFAULT_GRID_NODES: usize = 33;
pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_BASE_PARTITION: usize = 4;

const SECTIONS: [&str; 5] = ["econ", "dynamics", "discrete", "continuous", "output"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violation: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

fn one() -> f64 {
    1.0
}

fn default_nodes() -> usize {
    DEFAULT_GRID_NODES
}

fn default_levels() -> usize {
    DEFAULT_LEVELS
}

fn default_base_partition() -> usize {
    DEFAULT_BASE_PARTITION
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    educated: u64,
    teachers: u64,
    students: u64,
    unskilled: u64,
    total: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    #[serde(default)]
    aggregate_supply: f64,
    #[serde(default)]
    aggregate_demand: f64,
    satisfied_demand: f64,
    aggregate_market: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNeed {
    econ_need: f64,
    society_need: f64,
    #[serde(default)]
    year: i32,
    #[serde(default)]
    specialty: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEcon {
    beta: f64,
    career_len: u32,
    study_len: u32,
    wage_unskilled: f64,
    wage_skilled: f64,
    #[serde(default)]
    tuition: f64,
    #[serde(default = "one")]
    alpha_pref: f64,
    #[serde(default)]
    fixed_cost: f64,
    #[serde(default)]
    var_cost: f64,
    #[serde(default)]
    graduates: f64,
    #[serde(default)]
    career_tail: CareerTail,
    population: Option<RawPopulation>,
    market: Option<RawMarket>,
    need: Option<RawNeed>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDynamics {
    f: String,
    cost: String,
    control: Interval,
    disturbance: Interval,
    state_domain: Option<Interval>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    lo: f64,
    hi: f64,
    #[serde(default = "default_nodes")]
    nodes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDt {
    Shared(f64),
    PerStage(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStageBounds {
    control: Interval,
    disturbance: Interval,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscrete {
    stages: usize,
    dt: RawDt,
    x0: f64,
    state_grid: RawGrid,
    #[serde(default = "default_nodes")]
    control_nodes: usize,
    #[serde(default = "default_nodes")]
    disturbance_nodes: usize,
    terminal_set: Option<Interval>,
    #[serde(default)]
    mode: Mode,
    #[serde(default)]
    cost_scaling: CostScaling,
    stage_bounds: Option<Vec<RawStageBounds>>,
    disturbances: Option<Vec<f64>>,
    oracle_budget: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContinuous {
    horizon: f64,
    x0: f64,
    terminal_set: Option<Interval>,
    #[serde(default)]
    objective: Objective,
    #[serde(default = "default_base_partition")]
    base_partition: usize,
    #[serde(default = "default_levels")]
    levels: usize,
    state_grid: RawGrid,
    #[serde(default = "default_nodes")]
    control_nodes: usize,
    #[serde(default = "default_nodes")]
    disturbance_nodes: usize,
    #[serde(default)]
    saddle: SaddleConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EconConfig {
    pub params: EconParams,
    pub career_tail: CareerTail,
    pub population: Option<Population>,
    pub market: Option<MarketAccounts>,
    pub need: Option<NeedBreakdown>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteConfig {
    pub problem: DiscreteProblem,
    /// Disturbances to play for the exported trajectory; worst case when absent.
    pub disturbances: Option<Vec<f64>>,
    pub oracle_budget: OracleBudget,
}

/// A validated problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub econ: Option<EconConfig>,
    pub dynamics: Option<DynamicsSpec>,
    pub discrete: Option<DiscreteConfig>,
    pub continuous: Option<ContinuousProblem>,
    pub output: OutputSection,
    /// SHA-256 of the file contents, hex encoded.
    pub hash: String,
}

pub fn load_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn section<T: DeserializeOwned>(name: &str, value: &Value) -> Result<T, ConfigError> {
    serde_json::from_value(value.clone())
        .map_err(|e| ConfigError::Schema(format!("section `{name}`: {e}")))
}

fn invalid(msg: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(msg.to_string())
}

fn grid(raw: &RawGrid, what: &str) -> Result<UniformGrid, ConfigError> {
    UniformGrid::new(raw.lo, raw.hi, raw.nodes).map_err(|e| invalid(format!("{what}: {e}")))
}

pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let Value::Object(map) = root else {
        return Err(ConfigError::Schema("top level must be an object".into()));
    };
    if let Some(unknown) = map.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(ConfigError::Schema(format!("unknown section: {unknown}")));
    }

    let econ = map
        .get("econ")
        .map(|v| section::<RawEcon>("econ", v).and_then(econ_config))
        .transpose()?;

    let raw_discrete = map
        .get("discrete")
        .map(|v| section::<RawDiscrete>("discrete", v))
        .transpose()?;
    let raw_continuous = map
        .get("continuous")
        .map(|v| section::<RawContinuous>("continuous", v))
        .transpose()?;

    let dynamics = match map.get("dynamics") {
        Some(v) => {
            let raw: RawDynamics = section("dynamics", v)?;
            let fallback = raw_discrete
                .as_ref()
                .map(|d| &d.state_grid)
                .or(raw_continuous.as_ref().map(|c| &c.state_grid));
            let domain = raw.state_domain.unwrap_or_else(|| default_domain(fallback));
            let f = raw.f.parse().map_err(|e| invalid(format!("dynamics.f: {e}")))?;
            let cost = raw.cost.parse().map_err(|e| invalid(format!("dynamics.cost: {e}")))?;
            Some(
                DynamicsSpec::new(f, cost, raw.control, raw.disturbance, domain)
                    .map_err(|e| invalid(format!("dynamics: {e}")))?,
            )
        }
        None => None,
    };

    let needs_dynamics = |name: &str| {
        dynamics
            .clone()
            .ok_or_else(|| ConfigError::Schema(format!("section `{name}` requires section `dynamics`")))
    };

    let discrete = match raw_discrete {
        Some(raw) => Some(discrete_config(raw, needs_dynamics("discrete")?)?),
        None => None,
    };
    let continuous = match raw_continuous {
        Some(raw) => Some(continuous_problem(raw, needs_dynamics("continuous")?)?),
        None => None,
    };
    let output = map
        .get("output")
        .map(|v| section::<OutputSection>("output", v))
        .transpose()?
        .unwrap_or_default();

    Ok(ConfigFile {
        econ,
        dynamics,
        discrete,
        continuous,
        output,
        hash: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

/// Education levels are non-negative; without an explicit domain, sample the
/// non-negative part of the problem's state grid.
fn default_domain(grid: Option<&RawGrid>) -> Interval {
    match grid {
        Some(g) => {
            let lo = g.lo.max(0.0);
            let hi = if g.hi > lo { g.hi } else { lo + 1.0 };
            Interval { lo, hi }
        }
        None => Interval { lo: 0.0, hi: 1.0 },
    }
}

fn econ_config(raw: RawEcon) -> Result<EconConfig, ConfigError> {
    let params = EconParams {
        beta: raw.beta,
        career_len: raw.career_len,
        study_len: raw.study_len,
        wage_unskilled: raw.wage_unskilled,
        wage_skilled: raw.wage_skilled,
        tuition: raw.tuition,
        alpha_pref: raw.alpha_pref,
        fixed_cost: raw.fixed_cost,
        var_cost: raw.var_cost,
        graduates: raw.graduates,
    };
    params.validate().map_err(invalid)?;
    let population = raw
        .population
        .map(|p| Population::new(p.educated, p.teachers, p.students, p.unskilled, p.total))
        .transpose()
        .map_err(invalid)?;
    let market = raw.market.map(|m| MarketAccounts {
        aggregate_supply: m.aggregate_supply,
        aggregate_demand: m.aggregate_demand,
        satisfied_demand: m.satisfied_demand,
        aggregate_market: m.aggregate_market,
        current_market: 0.0,
    });
    if let Some(m) = &market {
        crate::econ::market_balance(m).map_err(invalid)?;
    }
    let need = raw.need.map(|n| NeedBreakdown {
        econ_need: n.econ_need,
        society_need: n.society_need,
        total_need: 0.0,
        year: n.year,
        specialty: n.specialty,
    });
    if let Some(n) = &need {
        if !(n.econ_need >= 0.0 && n.society_need >= 0.0) {
            return Err(invalid("econ_need and society_need must be non-negative"));
        }
    }
    Ok(EconConfig {
        params,
        career_tail: raw.career_tail,
        population,
        market,
        need,
    })
}

fn discrete_config(raw: RawDiscrete, dynamics: DynamicsSpec) -> Result<DiscreteConfig, ConfigError> {
    let problem = DiscreteProblem {
        stages: raw.stages,
        dynamics,
        stage_bounds: raw
            .stage_bounds
            .unwrap_or_default()
            .into_iter()
            .map(|b| StageBounds {
                control: b.control,
                disturbance: b.disturbance,
            })
            .collect(),
        dt: match raw.dt {
            RawDt::Shared(d) => vec![d],
            RawDt::PerStage(v) => v,
        },
        x0: raw.x0,
        state_grid: grid(&raw.state_grid, "discrete.state_grid")?,
        control_nodes: raw.control_nodes,
        disturbance_nodes: raw.disturbance_nodes,
        terminal_set: raw.terminal_set,
        mode: raw.mode,
        cost_scaling: raw.cost_scaling,
    };
    problem.validate().map_err(|e| invalid(format!("discrete: {e}")))?;
    if let Some(d) = &raw.disturbances {
        if d.len() != problem.stages {
            return Err(invalid(format!(
                "discrete.disturbances has {} entries, expected {}",
                d.len(),
                problem.stages
            )));
        }
    }
    let oracle_budget = match raw.oracle_budget {
        Some(0) => return Err(invalid("discrete.oracle_budget must be positive")),
        Some(max_nodes) => OracleBudget { max_nodes },
        None => OracleBudget::default(),
    };
    Ok(DiscreteConfig {
        problem,
        disturbances: raw.disturbances,
        oracle_budget,
    })
}

fn continuous_problem(raw: RawContinuous, dynamics: DynamicsSpec) -> Result<ContinuousProblem, ConfigError> {
    let problem = ContinuousProblem {
        horizon: raw.horizon,
        dynamics,
        x0: raw.x0,
        terminal_set: raw.terminal_set,
        objective: raw.objective,
        base_partition: raw.base_partition,
        levels: raw.levels,
        state_grid: grid(&raw.state_grid, "continuous.state_grid")?,
        control_nodes: raw.control_nodes,
        disturbance_nodes: raw.disturbance_nodes,
        saddle: raw.saddle,
    };
    problem.validate().map_err(|e| invalid(format!("continuous: {e}")))?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ECON: &str = r#""beta": 0.9, "career_len": 40, "study_len": 5,
        "wage_unskilled": 1.0, "wage_skilled": 2.5"#;

    #[test]
    fn minimal_econ_loads_with_defaults() {
        let cfg = parse_config(&format!(r#"{{"econ": {{{ECON}}}}}"#)).unwrap();
        let econ = cfg.econ.unwrap();
        assert_eq!(econ.params.alpha_pref, 1.0);
        assert_eq!(econ.params.tuition, 0.0);
        assert!(cfg.dynamics.is_none() && cfg.discrete.is_none());
        assert_eq!(cfg.hash.len(), 64);
    }

    #[test]
    fn beta_out_of_range() {
        let text = r#"{"econ": {"beta": 1.5, "career_len": 40, "study_len": 5,
            "wage_unskilled": 1.0, "wage_skilled": 2.5}}"#;
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
        assert!(err.to_string().contains("beta must lie in (0,1)"), "{err}");
    }

    #[test]
    fn unknown_section_and_key() {
        let err = parse_config(&format!(r#"{{"ecom": {{{ECON}}}}}"#)).unwrap_err();
        assert_eq!(err.to_string(), "schema error: unknown section: ecom");
        let err = parse_config(&format!(r#"{{"econ": {{{ECON}, "betta": 0.5}}}}"#)).unwrap_err();
        assert!(matches!(err, ConfigError::Schema(ref m) if m.contains("betta")), "{err}");
    }

    #[test]
    fn parse_error_has_position() {
        match parse_config("{\n  \"econ\": {,\n}") {
            Err(ConfigError::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn discrete_defaults_and_dependencies() {
        let text = r#"{
            "dynamics": {"f": "t - a", "cost": "x^2 + t", "control": [0, 1], "disturbance": [0, 1]},
            "discrete": {"stages": 2, "dt": 1, "x0": 0, "state_grid": {"lo": -2, "hi": 2, "nodes": 5}}
        }"#;
        let cfg = parse_config(text).unwrap();
        let d = cfg.discrete.unwrap();
        assert_eq!(d.problem.control_nodes, 33);
        assert_eq!(d.problem.dt, vec![1.0]);
        assert_eq!(d.problem.mode, Mode::MinCost);
        assert_eq!(cfg.dynamics.unwrap().state_domain, Interval { lo: 0.0, hi: 2.0 });

        let text = r#"{"discrete": {"stages": 2, "dt": 1, "x0": 0, "state_grid": {"lo": -2, "hi": 2}}}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("requires section `dynamics`"), "{err}");
    }

    #[test]
    fn bad_expression_names_the_field() {
        let text = r#"{"dynamics": {"f": "t -", "cost": "0", "control": [0, 1], "disturbance": [0, 1]}}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("dynamics.f"), "{err}");
        let text = r#"{"dynamics": {"f": "y", "cost": "0", "control": [0, 1], "disturbance": [0, 1]}}"#;
        assert!(parse_config(text).unwrap_err().to_string().contains("unknown identifier"));
    }

    #[test]
    fn continuous_defaults() {
        let text = r#"{
            "dynamics": {"f": "t - a", "cost": "t", "control": [0, 2], "disturbance": [0, 1]},
            "continuous": {"horizon": 2, "x0": 0, "terminal_set": [1, 2], "objective": "reach-time",
                           "state_grid": {"lo": -2, "hi": 2, "nodes": 129}}
        }"#;
        let c = parse_config(text).unwrap().continuous.unwrap();
        assert_eq!(c.levels, 4);
        assert_eq!(c.base_partition, 4);
        assert_eq!(c.saddle, SaddleConfig::default());
        assert_eq!(c.objective, Objective::ReachTime);
    }

    #[test]
    fn population_identity_checked_at_load() {
        let text = format!(
            r#"{{"econ": {{{ECON}, "population": {{"educated": 1, "teachers": 1, "students": 1, "unskilled": 1, "total": 5}}}}}}"#
        );
        assert!(matches!(parse_config(&text), Err(ConfigError::Invalid(_))));
    }
}
