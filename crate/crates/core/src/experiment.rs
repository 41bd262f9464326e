//! Reproducible experiment runs: training, evaluation, comparison tables and
//! green-duration traces.
//!
//! Every run is described by a [`Plan`]. Executing a plan writes its CSV
//! outputs plus a lockfile that embeds the fully resolved plan (scenario with
//! all defaults, checkpoints, input tables), so [`replay`] can regenerate the
//! same bytes later.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marl::checkpoint::Checkpoint;
use crate::marl::{self, check_policy, PolicyController};
use crate::network::IntersectionId;
use crate::scenario::{read_json, Env, Scenario};
use crate::seeding::{derive_seed, tag};
use crate::signal::{fixed_time_controller, max_pressure_controller, Controller};
use crate::sim::{run_episode_with, DemandSpec, Interval, MetricsReport};

pub const LOCK_FORMAT: &str = "greenwave-lock";
pub const LOCK_VERSION: u32 = 1;
pub const DEFAULT_REPLICATIONS: usize = 15;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const COMPARE_TEXT_FILE: &str = "compare.txt";
pub const TRACE_FILE: &str = "trace.csv";

/// A controller taking part in an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControllerSpec {
    Fixtime,
    Maxpressure,
    Checkpoint { label: String, checkpoint: Checkpoint },
}

impl ControllerSpec {
    /// `fixtime`, `maxpressure`, or a path to a checkpoint file (labelled by
    /// its file stem, or `label=path`).
    pub fn parse(arg: &str) -> Result<Self> {
        match arg {
            "fixtime" => Ok(Self::Fixtime),
            "maxpressure" => Ok(Self::Maxpressure),
            _ => {
                let (label, path) = match arg.split_once('=') {
                    Some((label, path)) => (label.to_string(), Path::new(path)),
                    None => {
                        let path = Path::new(arg);
                        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("rl");
                        (stem.to_string(), path)
                    }
                };
                Ok(Self::Checkpoint {
                    label,
                    checkpoint: Checkpoint::load(path)?,
                })
            }
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Self::Fixtime => "fixtime",
            Self::Maxpressure => "maxpressure",
            Self::Checkpoint { label, .. } => label,
        }
    }

    /// Instantiates the controller for `env`, checking checkpoint shapes.
    pub fn build(&self, env: &Env) -> Result<Box<dyn Controller>> {
        Ok(match self {
            Self::Fixtime => Box::new(fixed_time_controller(&env.actions)),
            Self::Maxpressure => Box::new(max_pressure_controller()),
            Self::Checkpoint { label, checkpoint } => {
                let agents = checkpoint.agents()?;
                check_policy(env, &agents.policy, checkpoint.scope)?;
                if checkpoint.action_set != env.actions.values {
                    return Err(Error::Dimension(format!(
                        "checkpoint trained with action set {:?}, scenario uses {:?}",
                        checkpoint.action_set, env.actions.values
                    )));
                }
                Box::new(PolicyController::greedy(agents.policy, checkpoint.scope, label.clone()))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDemand {
    pub name: String,
    pub demand: DemandSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPlan {
    pub scenario: Scenario,
    pub controllers: Vec<ControllerSpec>,
    pub demands: Vec<NamedDemand>,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePlan {
    pub scenario: Scenario,
    pub controller: ControllerSpec,
    pub intersection: IntersectionId,
    pub phase: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareInput {
    pub name: String,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePlan {
    pub inputs: Vec<CompareInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Plan {
    Train(TrainPlan),
    Eval(EvalPlan),
    Compare(ComparePlan),
    Trace(TracePlan),
}

impl Plan {
    pub fn command(&self) -> &'static str {
        match self {
            Plan::Train(_) => "train",
            Plan::Eval(_) => "eval",
            Plan::Compare(_) => "compare",
            Plan::Trace(_) => "trace",
        }
    }

    pub fn lockfile_name(&self) -> String {
        format!("{}.lock.json", self.command())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lockfile {
    pub format: String,
    pub version: u32,
    pub plan: Plan,
}

impl Lockfile {
    pub fn new(plan: Plan) -> Self {
        Self {
            format: LOCK_FORMAT.to_string(),
            version: LOCK_VERSION,
            plan,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lockfile serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lock: Lockfile = read_json(path)?;
        if lock.format != LOCK_FORMAT || lock.version != LOCK_VERSION {
            return Err(Error::config(
                format!("{}:format", path.display()),
                format!("unsupported lockfile {} v{}", lock.format, lock.version),
            ));
        }
        Ok(lock)
    }
}

/// One `eval.csv` row; `seed == None` marks the mean over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub controller: String,
    pub demand: String,
    pub seed: Option<u64>,
    pub att: Option<f64>,
    pub awt: Option<f64>,
    pub ad: Option<f64>,
    pub vc: f64,
}

impl EvalRow {
    fn from_report(controller: &str, demand: &str, seed: u64, r: &MetricsReport) -> Self {
        Self {
            controller: controller.to_string(),
            demand: demand.to_string(),
            seed: Some(seed),
            att: r.att,
            awt: r.awt,
            ad: r.ad,
            vc: r.vc,
        }
    }

    fn metrics(&self) -> [Option<f64>; 4] {
        [self.att, self.awt, self.ad, Some(self.vc)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub cycle: usize,
    pub green_s: u64,
    pub vehicle_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub source: String,
    pub controller: String,
    pub demand: String,
    pub n: usize,
    pub means: [Option<f64>; 4],
    pub deltas: [Option<f64>; 4],
    /// Metric columns on which this row is best for its demand.
    pub best: Vec<&'static str>,
}

const METRICS: [&str; 4] = ["ATT", "AWT", "AD", "VC"];

/// Two-decimal metric formatting; missing values print as `NA`.
pub fn fmt_metric(x: Option<f64>) -> String {
    match x {
        None => "NA".to_string(),
        Some(v) => {
            let s = format!("{v:.2}");
            if s == "-0.00" {
                "0.00".to_string()
            } else {
                s
            }
        }
    }
}

fn parse_metric(s: &str, what: &str) -> Result<Option<f64>> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::config(what, format!("`{s}` is not a number")))
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

pub fn curve_csv(curve: &[marl::CurvePoint]) -> String {
    let mut out = String::from("iteration,mean_reward,eval_awt\n");
    for p in curve {
        writeln!(out, "{},{},{}", p.iteration, p.mean_reward, p.eval_awt).unwrap();
    }
    out
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("controller,demand,seed,ATT,AWT,AD,VC\n");
    for r in rows {
        let seed = r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.controller,
            r.demand,
            seed,
            fmt_metric(r.att),
            fmt_metric(r.awt),
            fmt_metric(r.ad),
            fmt_metric(Some(r.vc))
        )
        .unwrap();
    }
    out
}

pub fn parse_eval_csv(text: &str, origin: &str) -> Result<Vec<EvalRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "controller,demand,seed,ATT,AWT,AD,VC" {
        return Err(Error::config(format!("{origin}:1"), "not an eval table"));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let at = format!("{origin}:{}", k + 2);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::config(at, format!("expected 7 fields, found {}", f.len())));
        }
        let seed = match f[2] {
            "mean" => None,
            s => Some(s.parse().map_err(|_| Error::config(&at, format!("bad seed `{s}`")))?),
        };
        rows.push(EvalRow {
            controller: f[0].to_string(),
            demand: f[1].to_string(),
            seed,
            att: parse_metric(f[3], &at)?,
            awt: parse_metric(f[4], &at)?,
            ad: parse_metric(f[5], &at)?,
            vc: parse_metric(f[6], &at)?.ok_or_else(|| Error::config(&at, "VC missing"))?,
        });
    }
    Ok(rows)
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("cycle,green_s,vehicle_count\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.cycle, r.green_s, r.vehicle_count).unwrap();
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.is_empty()) {
        let bad = || Error::config(format!("trace:{}", k + 1), format!("malformed row `{line}`"));
        let f: Vec<u64> = line
            .split(',')
            .map(|x| x.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if f.len() != 3 {
            return Err(bad());
        }
        rows.push(TraceRow {
            cycle: f[0] as usize,
            green_s: f[1],
            vehicle_count: f[2],
        });
    }
    Ok(rows)
}

/// Ranks with ties sharing their average rank, 1-based.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson on average ranks). A constant series
/// has no rank order and yields exactly 0.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let (rx, ry) = (ranks(&x[..n]), ranks(&y[..n]));
    let m = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m) * (a - m);
        syy += (b - m) * (b - m);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn trace_correlation(rows: &[TraceRow]) -> f64 {
    let g: Vec<f64> = rows.iter().map(|r| r.green_s as f64).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.vehicle_count as f64).collect();
    spearman(&g, &v)
}

/// Evaluation seed of replication `r`.
pub fn replication_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, &[tag::EVAL, r as u64])
}

fn eval_env(scenario: &Scenario) -> Result<Env> {
    let mut env = scenario.compile()?;
    env.randomization = env.randomization.with_enabled(false);
    Ok(env)
}

/// Trains on the plan's scenario; returns the checkpoint and curve CSV.
pub fn run_train(plan: &TrainPlan) -> Result<(Checkpoint, String)> {
    let env = plan.scenario.compile()?;
    let cfg = &plan.scenario.training;
    let outcome = marl::train(&env, cfg)?;
    let checkpoint = Checkpoint::new(&outcome.agents, cfg.scope, cfg.algo, &env.actions.values);
    Ok((checkpoint, curve_csv(&outcome.curve)))
}

/// Greedy, randomization-free replications of every controller on every
/// demand. Rows are ordered by controller, demand, replication, with a mean
/// row closing each group.
pub fn run_eval(plan: &EvalPlan) -> Result<Vec<EvalRow>> {
    if plan.replications == 0 {
        return Err(Error::config("replications", "must be at least 1"));
    }
    if plan.controllers.is_empty() || plan.demands.is_empty() {
        return Err(Error::config("controllers", "need at least one controller and one demand"));
    }
    let base = eval_env(&plan.scenario)?;
    let envs = plan
        .demands
        .iter()
        .map(|d| base.with_demand(d.demand.clone()).map_err(|e| e.in_run(format!("demand {}", d.name))))
        .collect::<Result<Vec<_>>>()?;
    let controllers = plan
        .controllers
        .iter()
        .map(|c| c.build(&base).map_err(|e| e.in_run(c.label())))
        .collect::<Result<Vec<_>>>()?;

    let (nd, nr) = (plan.demands.len(), plan.replications);
    let jobs = controllers.len() * nd * nr;
    let reports = marl::run_parallel(jobs, |job| {
        let (c, d, r) = (job / (nd * nr), job / nr % nd, job % nr);
        let seed = replication_seed(plan.seed, r);
        marl::evaluate(&envs[d], controllers[c].as_ref(), seed).map_err(|e| {
            e.in_run(format!(
                "{} on {} with seed {seed}",
                plan.controllers[c].label(),
                plan.demands[d].name
            ))
        })
    })?;

    let mut rows = Vec::with_capacity(jobs + controllers.len() * nd);
    for (c, spec) in plan.controllers.iter().enumerate() {
        for (d, demand) in plan.demands.iter().enumerate() {
            let group: Vec<EvalRow> = (0..nr)
                .map(|r| {
                    let report = &reports[(c * nd + d) * nr + r];
                    EvalRow::from_report(spec.label(), &demand.name, replication_seed(plan.seed, r), report)
                })
                .collect();
            let mean_row = EvalRow {
                controller: spec.label().to_string(),
                demand: demand.name.clone(),
                seed: None,
                att: mean(group.iter().map(|g| g.att)),
                awt: mean(group.iter().map(|g| g.awt)),
                ad: mean(group.iter().map(|g| g.ad)),
                vc: mean(group.iter().map(|g| Some(g.vc))).unwrap_or(0.0),
            };
            rows.extend(group);
            rows.push(mean_row);
        }
    }
    Ok(rows)
}

/// Per-cycle executed green of `phase` at `agent` and the stop-line
/// arrivals on the phase's movements during that cycle. A cycle runs from
/// one start of the phase's green to the next; the unfinished last cycle is
/// dropped.
pub fn trace(env: &Env, controller: &dyn Controller, agent: usize, phase: usize, seed: u64) -> Result<Vec<TraceRow>> {
    let movements = env.network.intersections[agent].phases[phase].clone();
    let arrivals = |state: &crate::sim::SimState| -> u64 { movements.iter().map(|&m| state.movement_arrivals()[m]).sum() };
    let state = env.reset(seed)?;

    let mut rows = Vec::new();
    // (arrivals at cycle start, executed green so far)
    let mut open: Option<(u64, u64)> = None;
    let mut was_green = false;
    let mut visit = |state: &crate::sim::SimState| {
        let sig = state.signal(agent);
        let green = sig.phase == phase && sig.interval == Interval::Green;
        if green && !was_green {
            let now = arrivals(state);
            if let Some((start, green_s)) = open.take() {
                rows.push(TraceRow {
                    cycle: rows.len() + 1,
                    green_s,
                    vehicle_count: now - start,
                });
            }
            open = Some((now, 0));
        }
        if green {
            if let Some((_, g)) = open.as_mut() {
                *g = sig.green_target.max(0) as u64;
            }
        }
        was_green = green;
    };
    visit(&state);
    let state = run_episode_with(state, controller, env.horizon(), &env.actions, &env.observer, |s, _| visit(s))?;
    drop(state);
    Ok(rows)
}

pub fn run_trace(plan: &TracePlan) -> Result<Vec<TraceRow>> {
    let env = eval_env(&plan.scenario)?;
    let agent = env
        .network
        .intersection_index(plan.intersection)
        .ok_or_else(|| Error::Lookup(plan.intersection.to_string()))?;
    let phases = env.network.intersections[agent].phases.len();
    if plan.phase >= phases {
        return Err(Error::Lookup(format!(
            "phase {} at {} (it has {phases} phases)",
            plan.phase, plan.intersection
        )));
    }
    let controller = plan.controller.build(&env)?;
    trace(&env, controller.as_ref(), agent, plan.phase, plan.seed)
}

/// Joins evaluation tables by `(controller, demand)`.
///
/// Each row reports means over the table's replications and seed-paired
/// mean differences against the reference: the same controller and demand
/// in the first input when present, otherwise the first input's first
/// controller on that demand. All inputs must cover the same demands and
/// the same seeds.
pub fn compare(inputs: &[(String, Vec<EvalRow>)]) -> Result<Vec<CompareRow>> {
    if inputs.len() < 2 {
        return Err(Error::Join("need at least two evaluation tables".into()));
    }
    type Group = (String, String, BTreeMap<u64, EvalRow>);
    let grouped: Vec<Vec<Group>> = inputs
        .iter()
        .map(|(name, rows)| {
            let mut groups: Vec<Group> = Vec::new();
            for row in rows {
                let Some(seed) = row.seed else { continue };
                let pos = groups
                    .iter()
                    .position(|(c, d, _)| *c == row.controller && *d == row.demand)
                    .unwrap_or_else(|| {
                        groups.push((row.controller.clone(), row.demand.clone(), BTreeMap::new()));
                        groups.len() - 1
                    });
                if groups[pos].2.insert(seed, row.clone()).is_some() {
                    return Err(Error::Join(format!("{name}: seed {seed} repeated for {}/{}", row.controller, row.demand)));
                }
            }
            if groups.is_empty() {
                return Err(Error::Join(format!("{name}: no replication rows")));
            }
            Ok(groups)
        })
        .collect::<Result<_>>()?;

    let demands = |groups: &[Group]| groups.iter().map(|g| g.1.clone()).collect::<BTreeSet<_>>();
    let reference_demands = demands(&grouped[0]);
    for (k, groups) in grouped.iter().enumerate().skip(1) {
        let these = demands(groups);
        if these != reference_demands {
            return Err(Error::Join(format!(
                "{} covers demands {:?} but {} covers {:?}",
                inputs[k].0, these, inputs[0].0, reference_demands
            )));
        }
    }

    let mut out = Vec::new();
    for (k, groups) in grouped.iter().enumerate() {
        for (controller, demand, by_seed) in groups {
            let reference = grouped[0]
                .iter()
                .find(|(c, d, _)| c == controller && d == demand)
                .or_else(|| grouped[0].iter().find(|(_, d, _)| d == demand))
                .expect("demand sets checked");
            let seeds: Vec<&u64> = by_seed.keys().collect();
            if seeds != reference.2.keys().collect::<Vec<_>>() {
                return Err(Error::Join(format!(
                    "{}: {controller}/{demand} is not paired by seed with {}/{} in {}",
                    inputs[k].0, reference.0, reference.1, inputs[0].0
                )));
            }
            let mut means = [None; 4];
            let mut deltas = [None; 4];
            for i in 0..4 {
                means[i] = mean(by_seed.values().map(|r| r.metrics()[i]));
                deltas[i] = mean(by_seed.iter().map(|(s, r)| {
                    let other = reference.2[s].metrics()[i];
                    r.metrics()[i].zip(other).map(|(a, b)| a - b)
                }));
            }
            out.push(CompareRow {
                source: inputs[k].0.clone(),
                controller: controller.clone(),
                demand: demand.clone(),
                n: by_seed.len(),
                means,
                deltas,
                best: Vec::new(),
            });
        }
    }

    // Best per demand and column on the printed (rounded) values.
    let rounded = |x: Option<f64>| x.map(|v| (v * 100.0).round() as i64);
    for demand in &reference_demands {
        for (i, metric) in METRICS.iter().enumerate() {
            let values = out.iter().filter(|r| &r.demand == demand).filter_map(|r| rounded(r.means[i]));
            let best = if *metric == "VC" { values.max() } else { values.min() };
            for row in out.iter_mut().filter(|r| &r.demand == demand) {
                if best.is_some() && rounded(row.means[i]) == best {
                    row.best.push(metric);
                }
            }
        }
    }
    Ok(out)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("source,controller,demand,n,ATT,AWT,AD,VC,dATT,dAWT,dAD,dVC,best\n");
    for r in rows {
        let mut fields = vec![r.source.clone(), r.controller.clone(), r.demand.clone(), r.n.to_string()];
        fields.extend(r.means.iter().map(|m| fmt_metric(*m)));
        fields.extend(r.deltas.iter().map(|m| fmt_metric(*m)));
        fields.push(r.best.join(";"));
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
    out
}

/// Column-aligned rendering with `*` after the best value per demand.
pub fn compare_text(rows: &[CompareRow]) -> String {
    let mut table: Vec<Vec<String>> = vec![["source", "controller", "demand", "n", "ATT", "AWT", "AD", "VC", "dATT", "dAWT", "dAD", "dVC"]
        .iter()
        .map(|s| s.to_string())
        .collect()];
    for r in rows {
        let mut line = vec![r.source.clone(), r.controller.clone(), r.demand.clone(), r.n.to_string()];
        for (i, m) in r.means.iter().enumerate() {
            let star = if r.best.contains(&METRICS[i]) { "*" } else { "" };
            line.push(format!("{}{star}", fmt_metric(*m)));
        }
        line.extend(r.deltas.iter().map(|m| fmt_metric(*m)));
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| if c < 3 { format!("{cell:<w$}", w = widths[c]) } else { format!("{cell:>w$}", w = widths[c]) })
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
    }
    out
}

pub fn run_compare(plan: &ComparePlan) -> Result<Vec<CompareRow>> {
    let inputs = plan
        .inputs
        .iter()
        .map(|i| Ok((i.name.clone(), parse_eval_csv(&i.csv, &i.name)?)))
        .collect::<Result<Vec<_>>>()?;
    compare(&inputs)
}

fn write(out: &Path, name: &str, content: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    let path = out.join(name);
    std::fs::write(&path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

/// Runs a plan, writes its outputs and lockfile into `out`, and returns the
/// written paths (lockfile last).
pub fn execute(plan: &Plan, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match plan {
        Plan::Train(p) => {
            let (checkpoint, curve) = run_train(p)?;
            written.push(write(out, CHECKPOINT_FILE, &checkpoint.to_json())?);
            written.push(write(out, CURVE_FILE, &curve)?);
        }
        Plan::Eval(p) => {
            let rows = run_eval(p)?;
            written.push(write(out, EVAL_FILE, &eval_csv(&rows))?);
        }
        Plan::Compare(p) => {
            let rows = run_compare(p)?;
            written.push(write(out, COMPARE_FILE, &compare_csv(&rows))?);
            written.push(write(out, COMPARE_TEXT_FILE, &compare_text(&rows))?);
        }
        Plan::Trace(p) => {
            let rows = run_trace(p)?;
            written.push(write(out, TRACE_FILE, &trace_csv(&rows))?);
        }
    }
    written.push(write(out, &plan.lockfile_name(), &Lockfile::new(plan.clone()).to_json())?);
    Ok(written)
}

/// Re-executes the plan recorded in a lockfile.
pub fn replay(lockfile: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let lock = Lockfile::load(lockfile)?;
    execute(&lock.plan, out)
}

/// Demand named `name` read from a JSON file holding either a bare demand
/// block or a whole scenario.
pub fn load_demand(name: &str, path: &Path) -> Result<NamedDemand> {
    let value: serde_json::Value = read_json(path)?;
    let demand = if value.get("network").is_some() {
        crate::scenario::from_json_str::<Scenario>(&value.to_string(), &path.display().to_string())?.demand
    } else {
        crate::scenario::from_json_str::<DemandSpec>(&value.to_string(), &path.display().to_string())?
    };
    Ok(NamedDemand {
        name: name.to_string(),
        demand,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(spearman(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]), 0.0);
        // Ties share ranks: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3).
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        let expected = 1.5 / (1.5f64 * 2.0).sqrt();
        assert!((r - expected).abs() < 1e-12);
    }

    #[test]
    fn metric_formatting() {
        assert_eq!(fmt_metric(Some(1.005)), "1.00");
        assert_eq!(fmt_metric(Some(-0.001)), "0.00");
        assert_eq!(fmt_metric(Some(265.789)), "265.79");
        assert_eq!(fmt_metric(None), "NA");
    }

    fn row(c: &str, d: &str, seed: u64, awt: f64) -> EvalRow {
        EvalRow {
            controller: c.into(),
            demand: d.into(),
            seed: Some(seed),
            att: Some(awt + 30.0),
            awt: Some(awt),
            ad: Some(awt),
            vc: 1000.0,
        }
    }

    #[test]
    fn eval_csv_round_trip() {
        let rows = vec![row("fixtime", "peak", 7, 12.5), row("fixtime", "peak", 8, 13.25)];
        let text = eval_csv(&rows);
        assert_eq!(parse_eval_csv(&text, "t").unwrap(), rows);
    }

    #[test]
    fn compare_two_by_two() {
        let a = vec![row("fixtime", "peak", 1, 50.0), row("fixtime", "off", 1, 20.0)];
        let b = vec![row("mp", "peak", 1, 40.0), row("mp", "off", 1, 25.0)];
        let rows = compare(&[("a".into(), a.clone()), ("b".into(), b)]).unwrap();
        assert_eq!(rows.len(), 4);
        let mp_peak = rows.iter().find(|r| r.controller == "mp" && r.demand == "peak").unwrap();
        assert_eq!(mp_peak.deltas[1], Some(-10.0));
        assert!(mp_peak.best.contains(&"AWT"));
        let ft_off = rows.iter().find(|r| r.controller == "fixtime" && r.demand == "off").unwrap();
        assert!(ft_off.best.contains(&"AWT"));

        let same = compare(&[("a".into(), a.clone()), ("a2".into(), a)]).unwrap();
        assert!(same.iter().all(|r| r.deltas.iter().all(|d| *d == Some(0.0))));
    }

    #[test]
    fn compare_rejects_mismatched_demands() {
        let a = vec![row("fixtime", "peak", 1, 50.0)];
        let b = vec![row("mp", "off", 1, 40.0)];
        assert!(matches!(compare(&[("a".into(), a), ("b".into(), b)]), Err(Error::Join(_))));
    }

    #[test]
    fn compare_rejects_unpaired_seeds() {
        let a = vec![row("fixtime", "peak", 1, 50.0)];
        let b = vec![row("mp", "peak", 2, 40.0)];
        assert!(matches!(compare(&[("a".into(), a), ("b".into(), b)]), Err(Error::Join(_))));
    }
}
