use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{parse_graph, LabeledGraph};
use crate::model::{NeuralPolicy, PolicyModel};
use crate::search::{
    solve, DegreePolicy, FilterMode, IdentityPolicy, Policy, RandomPolicy, RestartConfig, SearchBudget,
};

use super::BenchError;

/// Milliseconds charged per recursive call when the budget is a step limit.
/// Keeps `first_ms` independent of the machine so step-mode output is
/// reproducible byte for byte.
pub const VIRTUAL_MS_PER_STEP: f64 = 0.01;

/// Extension of query files picked up from a query directory.
pub const QUERY_EXTENSION: &str = "graph";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Random,
    Degree,
    Identity,
    Neural,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Degree => "degree",
            Self::Identity => "identity",
            Self::Neural => "neural",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "degree" => Ok(Self::Degree),
            "identity" => Ok(Self::Identity),
            "neural" => Ok(Self::Neural),
            other => Err(BenchError::Usage(format!(
                "unknown policy `{other}` (expected random, degree, identity or neural)"
            ))),
        }
    }
}

/// Budget and policy for every pair of one harness run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub policy: PolicyKind,
    pub step_limit: Option<u64>,
    pub time_limit: Option<Duration>,
    /// Stop a pair after this many matches.
    pub solution_cap: Option<u64>,
    pub filter: FilterMode,
    pub restart: RestartConfig,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Random,
            step_limit: Some(50_000),
            time_limit: None,
            solution_cap: None,
            filter: FilterMode::LdfNlf,
            restart: RestartConfig::default(),
            seed: 0,
        }
    }
}

impl EvalSettings {
    /// Step-limit runs report virtual time; otherwise wall-clock time.
    pub fn virtual_clock(&self) -> bool {
        self.step_limit.is_some() && self.time_limit.is_none()
    }

    fn budget(&self) -> SearchBudget {
        SearchBudget {
            time_limit: self.time_limit,
            step_limit: self.step_limit,
            solution_cap: self.solution_cap,
            restart: self.restart,
        }
    }

    /// Seed of the random policy on pair `id`.
    pub fn pair_seed(&self, id: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(id as u64)
            .rotate_left(17)
    }
}

/// One row of the evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_id: usize,
    pub query_file: String,
    pub policy: String,
    pub solved: bool,
    pub first_ms: Option<f64>,
    pub num_solutions: u64,
    pub steps: u64,
}

impl EvalRecord {
    fn failed(pair_id: usize, query_file: String, policy: PolicyKind) -> Self {
        Self {
            pair_id,
            query_file,
            policy: policy.name().to_owned(),
            solved: false,
            first_ms: None,
            num_solutions: 0,
            steps: 0,
        }
    }
}

/// A query waiting to be evaluated. `query` holds the load error when the
/// file could not be read or parsed.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub id: usize,
    pub name: String,
    pub query: Result<LabeledGraph, String>,
}

/// Records in pair order plus the per-pair errors that occurred.
#[derive(Debug, Clone, Default)]
pub struct EvalRun {
    pub records: Vec<EvalRecord>,
    pub errors: Vec<(usize, String)>,
}

impl EvalRun {
    pub fn solved(&self) -> usize {
        self.records.iter().filter(|r| r.solved).count()
    }
}

/// All `*.graph` files of `dir`, sorted by file name, with ids in that order.
pub fn load_query_dir(dir: &Path) -> Result<Vec<EvalPair>, BenchError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| BenchError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == QUERY_EXTENSION))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .enumerate()
        .map(|(id, path)| {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let query = fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|text| parse_graph(&text).map_err(|e| e.to_string()));
            EvalPair { id, name, query }
        })
        .collect())
}

fn evaluate_one(
    pair: &EvalPair,
    target: &LabeledGraph,
    model: Option<&PolicyModel>,
    settings: &EvalSettings,
) -> Result<EvalRecord, String> {
    let q = pair.query.as_ref().map_err(Clone::clone)?;
    let mut policy: Box<dyn Policy + '_> = match settings.policy {
        PolicyKind::Random => Box::new(RandomPolicy::new(settings.pair_seed(pair.id))),
        PolicyKind::Degree => Box::new(DegreePolicy),
        PolicyKind::Identity => Box::new(IdentityPolicy),
        PolicyKind::Neural => Box::new(NeuralPolicy::new(model.ok_or("neural policy needs a model")?)),
    };
    let out = solve(q, target, settings.filter, policy.as_mut(), &settings.budget()).map_err(|e| e.to_string())?;
    let first_ms = out.first_solution.map(|f| {
        if settings.virtual_clock() {
            f.step as f64 * VIRTUAL_MS_PER_STEP
        } else {
            f.elapsed_ms
        }
    });
    Ok(EvalRecord {
        pair_id: pair.id,
        query_file: pair.name.clone(),
        policy: settings.policy.name().to_owned(),
        solved: out.solved(),
        first_ms,
        num_solutions: out.matches.len() as u64,
        steps: out.steps,
    })
}

/// Searches every pair on the worker pool. A pair that fails still gets an
/// unsolved record; its error is reported alongside.
pub fn evaluate_pairs(
    pairs: &[EvalPair],
    target: &LabeledGraph,
    model: Option<&PolicyModel>,
    settings: &EvalSettings,
) -> EvalRun {
    let results: Vec<(EvalRecord, Option<String>)> = pairs
        .par_iter()
        .map(|pair| match evaluate_one(pair, target, model, settings) {
            Ok(r) => (r, None),
            Err(e) => (EvalRecord::failed(pair.id, pair.name.clone(), settings.policy), Some(e)),
        })
        .collect();
    let mut run = EvalRun::default();
    for (record, err) in results {
        if let Some(e) = err {
            log::warn!("pair {} ({}): {e}", record.pair_id, record.query_file);
            run.errors.push((record.pair_id, e));
        }
        run.records.push(record);
    }
    run
}

/// Loads the target, the optional model and the query directory, then
/// evaluates every pair.
pub fn run_eval_harness(
    query_dir: &Path,
    target_path: &Path,
    model_path: Option<&Path>,
    settings: &EvalSettings,
) -> Result<EvalRun, BenchError> {
    let text = fs::read_to_string(target_path).map_err(|e| BenchError::io(target_path, e))?;
    let target = parse_graph(&text).map_err(|e| BenchError::Input(format!("{}: {e}", target_path.display())))?;
    let model = match (settings.policy, model_path) {
        (PolicyKind::Neural, Some(p)) => Some(load_model(p)?),
        (PolicyKind::Neural, None) => return Err(BenchError::Usage("policy neural requires --model".into())),
        _ => None,
    };
    let pairs = load_query_dir(query_dir)?;
    if pairs.is_empty() {
        log::warn!("no .{QUERY_EXTENSION} files in {}", query_dir.display());
    }
    Ok(evaluate_pairs(&pairs, &target, model.as_ref(), settings))
}

pub fn load_model(path: &Path) -> Result<PolicyModel, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    PolicyModel::load(&text).map_err(|e| BenchError::Input(format!("{}: {e}", path.display())))
}

pub fn write_records<W: Write>(out: W, records: &[EvalRecord]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["pair_id", "query_file", "policy", "solved", "first_ms", "num_solutions", "steps"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<EvalRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let records = r.deserialize().collect::<Result<Vec<EvalRecord>, _>>()?;
    for rec in &records {
        if rec.solved != (rec.num_solutions >= 1) || rec.solved != rec.first_ms.is_some() {
            return Err(BenchError::Input(format!("pair {} has inconsistent solved fields", rec.pair_id)));
        }
    }
    Ok(records)
}
