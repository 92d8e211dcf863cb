use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::graph::synth::preferential_attachment;
use crate::graph::{p_schedule, parse_graph, random_walk_sample, serialize_graph, serialize_mapping, LabeledGraph};
use crate::model::{EncoderConfig, NeuralPolicy, PolicyModel};
use crate::search::{
    brute_force_oracle, format_match, format_stats, solve, DegreePolicy, FilterMode, IdentityPolicy, Policy,
    RandomPolicy, RestartConfig, SearchBudget,
};
use crate::train::{gradcheck_fixture, total_loss_gradient_check, TrainLog, Trainer};

use super::{
    aggregate_curves, config_load, load_model, load_query_dir, parse_override, read_records, run_eval_harness,
    write_curves, write_records, BenchError, EvalSettings, PolicyKind,
};

/// Largest relative error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "submatch", version, about = "Exact subgraph matching with a learned search policy")]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled preferential-attachment target graph.
    Synth(SynthArgs),
    /// Sample a connected query and its ground-truth mapping from a target.
    Sample(SampleArgs),
    /// Search one query/target pair and print matches and stats.
    Solve(SolveArgs),
    /// Train a policy model on one target graph.
    Train(TrainArgs),
    /// Evaluate a policy on a directory of queries and write a CSV.
    Eval(EvalArgs),
    /// Count matches by exhaustive enumeration.
    Oracle(OracleArgs),
    /// Finite-difference check of the training loss gradient.
    Gradcheck(GradcheckArgs),
    /// Cumulative solved-pairs curve from an evaluation CSV.
    Curves(CurvesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FilterArg {
    Ldf,
    #[value(name = "ldf+nlf")]
    LdfNlf,
}

impl From<FilterArg> for FilterMode {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Ldf => FilterMode::Ldf,
            FilterArg::LdfNlf => FilterMode::LdfNlf,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Random,
    Degree,
    Identity,
    Neural,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Random => PolicyKind::Random,
            PolicyArg::Degree => PolicyKind::Degree,
            PolicyArg::Identity => PolicyKind::Identity,
            PolicyArg::Neural => PolicyKind::Neural,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub attach: usize,
    #[arg(long, default_value_t = 4)]
    pub labels: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub size: usize,
    /// Walk return parameter; overrides --p-index.
    #[arg(long)]
    pub p: Option<f64>,
    /// Index into the log-uniform schedule of --p-levels values.
    #[arg(long, default_value_t = 25)]
    pub p_index: usize,
    #[arg(long, default_value_t = 50)]
    pub p_levels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Query output; stdout when absent.
    #[arg(long)]
    pub query_out: Option<PathBuf>,
    /// Mapping output; stdout when absent.
    #[arg(long)]
    pub mapping_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Recursive-call limit.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Wall-clock limit in milliseconds.
    #[arg(long)]
    pub time_ms: Option<u64>,
    /// Stop after this many matches.
    #[arg(long)]
    pub max_solutions: Option<u64>,
    #[arg(long, value_enum, default_value = "ldf+nlf")]
    pub filter: FilterArg,
    /// Always backtrack to the parent.
    #[arg(long)]
    pub no_restart: bool,
}

impl BudgetArgs {
    fn restart(&self) -> RestartConfig {
        if self.no_restart {
            RestartConfig::disabled()
        } else {
            RestartConfig::default()
        }
    }

    fn budget(&self) -> SearchBudget {
        SearchBudget {
            time_limit: self.time_ms.map(Duration::from_millis),
            step_limit: self.steps,
            solution_cap: self.max_solutions,
            restart: self.restart(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "degree")]
    pub policy: PolicyArg,
    /// Checkpoint for the neural policy.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` override applied after the config file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Queries kept out of training and validation (e.g. a test set).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Where the best model is written.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-iteration CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `.graph` query files.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "degree")]
    pub policy: PolicyArg,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub coords: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Evaluation CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Bucket width in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub bucket: f64,
    /// Last bucket edge; defaults to the latest solve time.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_graph(path: &Path) -> Result<LabeledGraph, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_graph(&text).map_err(|e| BenchError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), BenchError> {
    fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, BenchError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| BenchError::io(path, e))?))
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (program name first) and runs the subcommand, writing its
/// results to `out`. Returns the process exit status: 2 for usage errors,
/// 1 for runtime failures.
pub fn cli_dispatch<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Sample(a) => sample(a, out),
        Command::Solve(a) => solve_cmd(a, out),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a, out),
        Command::Oracle(a) => oracle(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Curves(a) => curves(a, out),
    };
    match result.and_then(|code| out.flush().map(|_| code).map_err(BenchError::from)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, BenchError::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<i32, BenchError> {
    if a.nodes == 0 || a.labels == 0 {
        return Err(BenchError::Usage("--nodes and --labels must be positive".into()));
    }
    let text = serialize_graph(&preferential_attachment(a.nodes, a.attach, a.labels, a.seed));
    match a.out {
        Some(p) => write_file(&p, &text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}

fn sample(a: SampleArgs, out: &mut dyn Write) -> Result<i32, BenchError> {
    let g = read_graph(&a.target)?;
    let p = match a.p {
        Some(p) => p,
        None => p_schedule(a.p_index, a.p_levels)?,
    };
    let s = random_walk_sample(&g, a.size, p, a.seed)?;
    let q = serialize_graph(&s.query);
    let m = serialize_mapping(&s.truth_mapping);
    match a.query_out {
        Some(path) => write_file(&path, &q)?,
        None => out.write_all(q.as_bytes())?,
    }
    match a.mapping_out {
        Some(path) => write_file(&path, &m)?,
        None => out.write_all(m.as_bytes())?,
    }
    log::info!("sampled {} nodes with p = {p} (seed {})", a.size, a.seed);
    Ok(0)
}

fn solve_cmd(a: SolveArgs, out: &mut dyn Write) -> Result<i32, BenchError> {
    let q = read_graph(&a.query)?;
    let g = read_graph(&a.target)?;
    let model = match (a.policy, &a.model) {
        (PolicyArg::Neural, Some(p)) => Some(load_model(p)?),
        (PolicyArg::Neural, None) => return Err(BenchError::Usage("policy neural requires --model".into())),
        _ => None,
    };
    let mut policy: Box<dyn Policy + '_> = match a.policy {
        PolicyArg::Random => Box::new(RandomPolicy::new(a.seed)),
        PolicyArg::Degree => Box::new(DegreePolicy),
        PolicyArg::Identity => Box::new(IdentityPolicy),
        PolicyArg::Neural => Box::new(NeuralPolicy::new(model.as_ref().expect("checked above"))),
    };
    let outcome = solve(&q, &g, a.budget.filter.into(), policy.as_mut(), &a.budget.budget())?;
    for m in &outcome.matches {
        writeln!(out, "{}", format_match(m))?;
    }
    writeln!(out, "{}", format_stats(&outcome))?;
    Ok(0)
}

fn train(a: TrainArgs) -> Result<i32, BenchError> {
    let overrides = a
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cfg = config_load(a.config.as_deref(), &overrides)?;
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    let target = Arc::new(read_graph(&a.target)?);
    let model = match &a.init {
        Some(p) => load_model(p)?,
        None => PolicyModel::new(cfg.encoder.clone(), cfg.train.seed)?,
    };
    let excluded = match &a.exclude {
        Some(dir) => load_query_dir(dir)?
            .into_iter()
            .filter_map(|p| p.query.ok())
            .collect(),
        None => Vec::new(),
    };
    let mut trainer = Trainer::new(target, model, cfg.train.clone(), excluded)?;
    match &a.log {
        Some(path) => {
            let mut log = TrainLog::new(create(path)?);
            trainer.run(cfg.iterations, Some(&mut log))?;
            log.into_inner()?.flush()?;
        }
        None => trainer.run::<std::io::Sink>(cfg.iterations, None)?,
    }
    let best = trainer.best().reward;
    write_file(&a.checkpoint, &trainer.into_best_model().save())?;
    log::info!("best validation reward {best:.4}; wrote {}", a.checkpoint.display());
    Ok(0)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<i32, BenchError> {
    let step_limit = match (a.budget.steps, a.budget.time_ms) {
        (None, None) => Some(super::RunConfig::default().eval_steps),
        (s, _) => s,
    };
    let settings = EvalSettings {
        policy: a.policy.into(),
        step_limit,
        time_limit: a.budget.time_ms.map(Duration::from_millis),
        solution_cap: a.budget.max_solutions,
        filter: a.budget.filter.into(),
        restart: a.budget.restart(),
        seed: a.seed,
    };
    let run = run_eval_harness(&a.queries, &a.target, a.model.as_deref(), &settings)?;
    match &a.out {
        Some(p) => write_records(create(p)?, &run.records)?,
        None => write_records(&mut *out, &run.records)?,
    }
    log::info!(
        "{} of {} pairs solved, {} errors",
        run.solved(),
        run.records.len(),
        run.errors.len()
    );
    Ok(0)
}

fn oracle(a: OracleArgs, out: &mut dyn Write) -> Result<i32, BenchError> {
    let q = read_graph(&a.query)?;
    let g = read_graph(&a.target)?;
    writeln!(out, "{}", brute_force_oracle(&q, &g).count())?;
    Ok(0)
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<i32, BenchError> {
    let config = EncoderConfig {
        layers: a.layers,
        dim: a.dim,
        ..EncoderConfig::default()
    };
    let (model, sample) = gradcheck_fixture(a.seed, config)?;
    let r = total_loss_gradient_check(&model, &sample, 1.0, a.h, a.coords, a.seed)?;
    writeln!(out, "max_rel_error {:e}", r.max_rel_error)?;
    log::info!(
        "worst {}[{}]: analytic {:e} numeric {:e}; {} coordinates; resolved max {:e} over {}",
        r.worst_param,
        r.worst_index,
        r.analytic,
        r.numeric,
        r.coordinates_checked,
        r.resolved_max_rel_error,
        r.resolved_coordinates
    );
    Ok(if r.max_rel_error < GRADCHECK_TOLERANCE { 0 } else { 1 })
}

fn curves(a: CurvesArgs, out: &mut dyn Write) -> Result<i32, BenchError> {
    if !(a.bucket > 0.0 && a.bucket.is_finite()) {
        return Err(BenchError::Usage("--bucket must be a positive number of seconds".into()));
    }
    let file = File::open(&a.input).map_err(|e| BenchError::io(&a.input, e))?;
    let records = read_records(file)?;
    let points = aggregate_curves(&records, a.bucket, a.horizon);
    match &a.out {
        Some(p) => write_curves(create(p)?, &points)?,
        None => write_curves(&mut *out, &points)?,
    }
    Ok(0)
}
