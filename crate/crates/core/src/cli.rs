//! Command runner behind the `training-planner` binary.
//!
//! `run` never panics on bad input: failures end up in the report's `error`
//! field, and `report.json` is written either way.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::config::{load_config, ConfigFile, Format};
use crate::continuous::{solve_refined, Outcome};
use crate::discrete::{self, Mode, UNREACHABLE};
use crate::dynamics::{estimate_lipschitz, regularity_report, SamplingPlan};
use crate::econ;
use crate::export;
use crate::oracle::exhaustive_value;

pub const OUT_ENV: &str = "TRAINING_PLANNER_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Econ,
    Validate,
    SolveDiscrete,
    SolveContinuous,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Econ => "econ",
            Command::Validate => "validate",
            Command::SolveDiscrete => "solve-discrete",
            Command::SolveContinuous => "solve-continuous",
            Command::Oracle => "oracle",
        }
    }
}

/// Overrides from the command line. `None` defers to the config file, then
/// to the defaults (`./out`, both formats).
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: Command,
    /// SHA-256 of the config file; empty when it could not be read.
    pub config_hash: String,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
    /// Files written, including `report.json` itself.
    pub artifacts: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
    pub error: Option<String>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

struct Ctx {
    out: PathBuf,
    format: Format,
    artifacts: Vec<PathBuf>,
    warnings: Vec<String>,
    summary: Vec<String>,
}

impl Ctx {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), String> {
        fs::create_dir_all(&self.out).map_err(|e| format!("cannot create {}: {e}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, contents: impl FnOnce() -> String) -> Result<(), String> {
        if self.format.csv() {
            self.write(name, &contents())?;
        }
        Ok(())
    }

    fn json(&mut self, name: &str, value: impl Serialize) -> Result<(), String> {
        if self.format.json() {
            let text = serde_json::to_string_pretty(&value).map_err(|e| e.to_string())?;
            self.write(name, &(text + "\n"))?;
        }
        Ok(())
    }

    fn say(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }
}

/// Load `config` and execute `command`, writing artifacts to the resolved
/// output directory.
pub fn run(command: Command, config: &Path, opts: &RunOptions) -> RunReport {
    let start = Instant::now();
    let loaded = load_config(config);
    let (out, format, hash) = match &loaded {
        Ok(cfg) => (
            opts.out_dir.clone().or_else(|| cfg.output.dir.clone()),
            opts.format.or(cfg.output.format),
            cfg.hash.clone(),
        ),
        Err(_) => (opts.out_dir.clone(), opts.format, hash_file(config)),
    };
    let mut ctx = Ctx {
        out: out.unwrap_or_else(|| PathBuf::from("out")),
        format: format.unwrap_or_default(),
        artifacts: Vec::new(),
        warnings: Vec::new(),
        summary: Vec::new(),
    };
    let result = loaded
        .map_err(|e| e.to_string())
        .and_then(|cfg| dispatch(command, &cfg, &mut ctx));
    let mut report = RunReport {
        command,
        config_hash: hash,
        wall_time_s: 0.0,
        warnings: std::mem::take(&mut ctx.warnings),
        artifacts: std::mem::take(&mut ctx.artifacts),
        summary: std::mem::take(&mut ctx.summary),
        error: result.err(),
    };
    let path = ctx.out.join("report.json");
    report.artifacts.push(path.clone());
    report.wall_time_s = start.elapsed().as_secs_f64();
    let written = fs::create_dir_all(&ctx.out)
        .and_then(|_| fs::write(&path, serde_json::to_string_pretty(&report).unwrap_or_default() + "\n"));
    if let Err(e) = written {
        report.artifacts.pop();
        report
            .error
            .get_or_insert_with(|| format!("cannot write {}: {e}", path.display()));
    }
    report
}

fn hash_file(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    fs::read(path)
        .map(|bytes| hex::encode(Sha256::digest(bytes)))
        .unwrap_or_default()
}

fn dispatch(command: Command, cfg: &ConfigFile, ctx: &mut Ctx) -> Result<(), String> {
    match command {
        Command::Econ => run_econ(cfg, ctx),
        Command::Validate => run_validate(cfg, ctx),
        Command::SolveDiscrete => run_discrete(cfg, ctx),
        Command::SolveContinuous => run_continuous(cfg, ctx),
        Command::Oracle => run_oracle(cfg, ctx),
    }
}

fn missing(section: &str) -> String {
    format!("config has no `{section}` section")
}

fn fmt6(v: f64) -> String {
    if v == UNREACHABLE {
        "UNREACHABLE".into()
    } else {
        format!("{v:.6}")
    }
}

fn run_econ(cfg: &ConfigFile, ctx: &mut Ctx) -> Result<(), String> {
    let e = cfg.econ.as_ref().ok_or_else(|| missing("econ"))?;
    let p = &e.params;
    let err = |e: econ::EconError| e.to_string();
    let price = econ::tuition_price(p).map_err(err)?;
    let mut rows = vec![
        ("pv_unskilled".to_string(), econ::pv_unskilled(p)),
        ("pv_skilled".to_string(), econ::pv_skilled_with(p, e.career_tail)),
        ("tuition_price".to_string(), price),
        ("enrollment_surplus".to_string(), econ::enrollment_surplus(p, p.tuition)),
        ("university_profit".to_string(), econ::university_profit(p)),
    ];
    let viable = econ::education_viable(p).map_err(err)?;
    if let Some(pop) = &e.population {
        rows.push(("required_graduates".into(), econ::required_graduates(pop, p).map_err(err)?));
    }
    let mut market = None;
    if let Some(m) = &e.market {
        let m = econ::market_balance(m).map_err(err)?;
        rows.push(("current_market".into(), m.current_market));
        market = Some(m);
    }
    let mut need = None;
    if let Some(n) = &e.need {
        let mut n = n.clone();
        rows.push(("total_need".into(), econ::total_need(&mut n).map_err(err)?));
        need = Some(n);
    }
    for (k, v) in &rows {
        ctx.say(format!("{k} = {v:.6}"));
    }
    ctx.say(format!("education_viable = {viable}"));

    let mut json = serde_json::Map::new();
    for (k, v) in &rows {
        json.insert(k.clone(), json!(v));
    }
    json.insert("education_viable".into(), json!(viable));
    json.insert("career_tail".into(), json!(e.career_tail));
    if let Some(m) = market {
        json.insert("market".into(), json!(m));
    }
    if let Some(n) = need {
        json.insert("need".into(), json!(n));
    }
    rows.push(("education_viable".into(), if viable { 1.0 } else { 0.0 }));
    ctx.csv("econ.csv", || export::pairs_csv(&rows))?;
    ctx.json("econ.json", json)
}

/// Warn when a step is long against the estimated Lipschitz constant.
fn check_step(ctx: &mut Ctx, what: &str, dt: f64, k: f64) {
    if dt * k > 1.0 {
        ctx.warnings
            .push(format!("{what}: dt * K = {:.3} > 1; the Euler scheme may be inaccurate", dt * k));
    }
}

fn lipschitz(cfg: &ConfigFile) -> Result<Option<f64>, String> {
    cfg.dynamics
        .as_ref()
        .map(|d| estimate_lipschitz(d, &SamplingPlan::default_for(d)).map_err(|e| e.to_string()))
        .transpose()
}

fn run_validate(cfg: &ConfigFile, ctx: &mut Ctx) -> Result<(), String> {
    let spec = cfg.dynamics.as_ref().ok_or_else(|| missing("dynamics"))?;
    let report = regularity_report(spec, &SamplingPlan::default_for(spec)).map_err(|e| e.to_string())?;
    ctx.say(format!("Lipschitz estimate K = {:.6}", report.lipschitz_k));
    ctx.say(format!("growth bound |f| <= {:.6} + {:.6} * x", report.growth_m, report.growth_n));
    ctx.say(format!("vectogram max gap = {:.6}", report.vectogram_max_gap));
    if let Some(d) = &cfg.discrete {
        let dt = d.problem.dt.iter().cloned().fold(0.0, f64::max);
        check_step(ctx, "discrete", dt, report.lipschitz_k);
    }
    if let Some(c) = &cfg.continuous {
        check_step(ctx, "continuous", c.horizon / c.cells(0) as f64, report.lipschitz_k);
    }
    ctx.csv("regularity.csv", || {
        export::pairs_csv(&[
            ("lipschitz_k".into(), report.lipschitz_k),
            ("growth_m".into(), report.growth_m),
            ("growth_n".into(), report.growth_n),
            ("vectogram_max_gap".into(), report.vectogram_max_gap),
            ("sample_count".into(), report.sample_count as f64),
        ])
    })?;
    ctx.json("regularity.json", &report)
}

fn run_discrete(cfg: &ConfigFile, ctx: &mut Ctx) -> Result<(), String> {
    let d = cfg.discrete.as_ref().ok_or_else(|| missing("discrete"))?;
    let p = &d.problem;
    if let Some(k) = lipschitz(cfg)? {
        let dt = p.dt.iter().cloned().fold(0.0, f64::max);
        check_step(ctx, "discrete", dt, k);
    }
    let solution = discrete::solve(p).map_err(|e| e.to_string())?;
    let n = p.stages;
    let value = solution.value_at(p.x0).ok_or_else(|| p.grid_exit().to_string())?;
    let symbol = match p.mode {
        Mode::MinCost => "F",
        Mode::MinTime => "G",
    };
    ctx.say(format!("{symbol}_{n}(x0={}) = {}", p.x0, fmt6(value)));
    if let Some(a) = solution.policy.lookup(n, p.x0) {
        ctx.say(format!("first step: t* = {:.6}, a* = {:.6}", a.control, a.disturbance));
    }
    let disturbances = match &d.disturbances {
        Some(seq) => Some(seq.clone()),
        None if value.is_finite() => Some(discrete::worst_case_disturbance(p, &solution).map_err(|e| e.to_string())?.0),
        None => None,
    };
    let trajectory = disturbances
        .map(|seq| discrete::simulate(p, &solution.policy, &seq))
        .transpose()
        .map_err(|e| e.to_string())?;
    if let Some(t) = &trajectory {
        ctx.say(format!(
            "trajectory: final x = {:.6}, total cost = {:.6}",
            t.final_state(),
            t.total_cost
        ));
    }

    ctx.csv("value.csv", || export::value_csv(&solution.table))?;
    ctx.csv("policy.csv", || export::policy_csv(&solution.policy))?;
    if let Some(t) = &trajectory {
        ctx.csv("trajectory.csv", || export::trajectory_csv(t))?;
    }
    ctx.json(
        "solution.json",
        json!({
            "value": if value.is_finite() { json!(value) } else { json!("UNREACHABLE") },
            "table": solution.table.layers.iter().map(|l| l.iter().map(|v| match v {
                Some(v) if *v == UNREACHABLE => json!("UNREACHABLE"),
                v => json!(v),
            }).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "grid": solution.table.grid,
            "policy": solution.policy.layers,
            "trajectory": trajectory,
        }),
    )
}

fn run_continuous(cfg: &ConfigFile, ctx: &mut Ctx) -> Result<(), String> {
    let c = cfg.continuous.as_ref().ok_or_else(|| missing("continuous"))?;
    if let Some(k) = lipschitz(cfg)? {
        check_step(ctx, "continuous (coarsest level)", c.horizon / c.cells(0) as f64, k);
    }
    let refinement = solve_refined(c).map_err(|e| e.to_string())?;
    let r = &refinement.report;
    for l in &r.levels {
        let cost = l.cost.map(|c| format!(", cost = {c:.6}")).unwrap_or_default();
        ctx.say(format!("level {} ({} cells): value = {}{cost}", l.level, l.cells, fmt6(l.value)));
        if l.widened {
            ctx.warnings.push(format!(
                "level {}: state grid widened to [{}, {}]",
                l.level, l.state_grid.lo, l.state_grid.hi
            ));
        }
    }
    ctx.say(format!("epsilon_hat = {:.6}", r.epsilon_hat));
    let outcome = match r.saddle_check.outcome {
        Outcome::Pass => "pass",
        Outcome::Fail => "FAIL",
        Outcome::Inconclusive => "inconclusive",
    };
    ctx.say(format!(
        "saddle check at epsilon = {:.6}: {outcome} ({} deviations)",
        r.saddle_check.epsilon, r.saddle_check.candidates
    ));
    if r.saddle_check.outcome == Outcome::Inconclusive {
        ctx.warnings.push("saddle check budget exhausted".into());
    }
    ctx.csv("refinement.csv", || export::refinement_csv(&r.levels))?;
    ctx.json("refinement.json", r)
}

fn run_oracle(cfg: &ConfigFile, ctx: &mut Ctx) -> Result<(), String> {
    let d = cfg.discrete.as_ref().ok_or_else(|| missing("discrete"))?;
    let r = exhaustive_value(&d.problem, d.oracle_budget).map_err(|e| e.to_string())?;
    ctx.say(format!("oracle value = {} (nodes: {})", fmt6(r.value), r.nodes));
    ctx.csv("oracle.csv", || {
        export::pairs_csv(&[("value".into(), r.value), ("nodes".into(), r.nodes as f64)])
    })?;
    ctx.json(
        "oracle.json",
        json!({
            "value": if r.value.is_finite() { json!(r.value) } else { json!("UNREACHABLE") },
            "nodes": r.nodes,
        }),
    )
}
