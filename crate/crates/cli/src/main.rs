//! `greenwave` experiment driver: training, evaluation, comparison tables,
//! duration/demand traces and network lints. Every run writes its outputs
//! plus a lockfile that `greenwave replay` re-executes byte-identically.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use greenwave::experiment::{
    self, CompareInput, ComparePlan, ControllerSpec, EvalPlan, NamedDemand, Plan, TracePlan, TrainPlan,
    DEFAULT_REPLICATIONS,
};
use greenwave::marl::Algo;
use greenwave::network::validate_network;
use greenwave::{fixtures, IntersectionId, Scenario, Scope};

const DEFAULT_EVAL_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "greenwave", version, about = "Multi-agent RL traffic signal experiments")]
struct Cli {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Training seed for `train`, base evaluation seed otherwise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Evaluation replications per controller and demand.
    #[arg(long, global = true)]
    replications: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a shared policy and write checkpoint.json and curve.csv.
    Train(TrainArgs),
    /// Evaluate controllers over replications and write eval.csv.
    Eval(EvalArgs),
    /// Join eval.csv files into compare.csv and an aligned table.
    Compare(CompareArgs),
    /// Per-cycle green duration and demand of one phase, as trace.csv.
    Trace(TraceArgs),
    /// Lint the scenario's network and configuration.
    Validate,
    /// Re-run the plan recorded in a lockfile.
    Replay {
        lockfile: PathBuf,
    },
    /// Write a built-in scenario as JSON.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    scope: Option<Scope>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Enable episode-level turning-ratio randomization.
    #[arg(long, conflicts_with = "no_randomize")]
    randomize: bool,
    /// Disable randomization even if the scenario enables it.
    #[arg(long)]
    no_randomize: bool,
    /// Randomization magnitude δ.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// `fixtime`, `maxpressure`, a checkpoint path or `label=path`. Repeatable.
    #[arg(long = "controller", required = true)]
    controllers: Vec<String>,
    /// `name=path` of a demand or scenario JSON. Repeatable; defaults to the
    /// scenario's own demand.
    #[arg(long = "demand")]
    demands: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// eval.csv files, optionally as `name=path`. The first is the reference.
    #[arg(required = true, num_args = 2..)]
    inputs: Vec<String>,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    controller: String,
    #[arg(long, default_value_t = 0)]
    intersection: u32,
    #[arg(long, default_value_t = 0)]
    phase: usize,
}

#[derive(Args)]
struct FixtureArgs {
    /// corridor, saturated, off-peak, stepped or grid.
    name: String,
    /// Intersections in a corridor, or rows and columns of a grid.
    #[arg(long, num_args = 1..=2, default_values_t = [2])]
    size: Vec<usize>,
}

fn load_scenario(cli: &Cli) -> anyhow::Result<Scenario> {
    let path = cli.scenario.as_ref().context("--scenario is required")?;
    Ok(Scenario::load(path)?)
}

fn named(arg: &str, fallback: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) => (name.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(arg);
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(fallback).to_string();
            (name, path)
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("base").to_string()
}

fn train_plan(cli: &Cli, args: &TrainArgs) -> anyhow::Result<Plan> {
    let mut scenario = load_scenario(cli)?;
    let t = &mut scenario.training;
    if let Some(seed) = cli.seed {
        t.seed = seed;
    }
    if let Some(scope) = args.scope {
        t.scope = scope;
    }
    if let Some(algo) = args.algo {
        t.algo = algo;
    }
    if let Some(n) = args.iterations {
        t.iterations = n;
    }
    if args.randomize {
        scenario.randomization.enabled = true;
    }
    if args.no_randomize {
        scenario.randomization.enabled = false;
    }
    if let Some(delta) = args.delta {
        scenario.randomization.delta = delta;
    }
    scenario.compile()?;
    scenario.training.check()?;
    Ok(Plan::Train(TrainPlan { scenario }))
}

fn eval_plan(cli: &Cli, args: &EvalArgs) -> anyhow::Result<Plan> {
    let scenario = load_scenario(cli)?;
    let controllers = args
        .controllers
        .iter()
        .map(|c| ControllerSpec::parse(c))
        .collect::<greenwave::Result<Vec<_>>>()?;
    let demands = if args.demands.is_empty() {
        vec![NamedDemand {
            name: stem(cli.scenario.as_deref().unwrap_or(Path::new("base"))),
            demand: scenario.demand.clone(),
        }]
    } else {
        args.demands
            .iter()
            .map(|d| {
                let (name, path) = named(d, "demand");
                experiment::load_demand(&name, &path)
            })
            .collect::<greenwave::Result<Vec<_>>>()?
    };
    Ok(Plan::Eval(EvalPlan {
        scenario,
        controllers,
        demands,
        replications: cli.replications.unwrap_or(DEFAULT_REPLICATIONS),
        seed: cli.seed.unwrap_or(DEFAULT_EVAL_SEED),
    }))
}

fn compare_plan(args: &CompareArgs) -> anyhow::Result<Plan> {
    let named_inputs: Vec<(String, PathBuf)> = args.inputs.iter().map(|arg| named(arg, "eval")).collect();
    let inputs = named_inputs
        .iter()
        .enumerate()
        .map(|(k, (name, path))| {
            // Unlabelled inputs sharing a file name are told apart by path.
            let clash = named_inputs.iter().filter(|(n, _)| n == name).count() > 1;
            let name = if clash && !args.inputs[k].contains('=') {
                path.with_extension("").display().to_string()
            } else {
                name.clone()
            };
            let csv = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            Ok(CompareInput { name, csv })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Plan::Compare(ComparePlan { inputs }))
}

fn trace_plan(cli: &Cli, args: &TraceArgs) -> anyhow::Result<Plan> {
    Ok(Plan::Trace(TracePlan {
        scenario: load_scenario(cli)?,
        controller: ControllerSpec::parse(&args.controller)?,
        intersection: IntersectionId(args.intersection),
        phase: args.phase,
        seed: cli.seed.unwrap_or(DEFAULT_EVAL_SEED),
    }))
}

fn fixture(args: &FixtureArgs) -> anyhow::Result<Scenario> {
    let size = |k: usize| args.size.get(k).copied().unwrap_or(args.size[0]);
    Ok(match args.name.as_str() {
        "corridor" => fixtures::corridor(size(0)),
        "saturated" => fixtures::saturated_corridor(),
        "off-peak" => fixtures::off_peak_corridor(),
        "stepped" => fixtures::stepped_demand(),
        "grid" => fixtures::grid(&fixtures::GridParams::grid(size(0), size(1))),
        other => bail!("unknown fixture `{other}`"),
    })
}

fn validate(cli: &Cli) -> anyhow::Result<bool> {
    let scenario = load_scenario(cli)?;
    let report = validate_network(&scenario.network);
    if !report.is_ok() {
        println!("{report}");
        return Ok(false);
    }
    scenario.compile()?;
    scenario.training.check()?;
    println!("{report}");
    Ok(true)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let plan = match &cli.command {
        Command::Train(args) => train_plan(cli, args)?,
        Command::Eval(args) => eval_plan(cli, args)?,
        Command::Compare(args) => compare_plan(args)?,
        Command::Trace(args) => trace_plan(cli, args)?,
        Command::Validate => return validate(cli),
        Command::Replay { lockfile } => {
            create_out(&cli.out)?;
            report(&experiment::replay(lockfile, &cli.out)?);
            return Ok(true);
        }
        Command::Fixture(args) => {
            let json = fixture(args)?.to_json();
            create_out(&cli.out)?;
            let path = cli.out.join(format!("{}.json", args.name));
            std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            report(&[path]);
            return Ok(true);
        }
    };
    create_out(&cli.out)?;
    let written = experiment::execute(&plan, &cli.out)?;
    if matches!(plan, Plan::Compare(_)) {
        let text = std::fs::read_to_string(cli.out.join(experiment::COMPARE_TEXT_FILE))?;
        print!("{text}");
    }
    report(&written);
    Ok(true)
}

fn create_out(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
