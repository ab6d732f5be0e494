//! Experiment orchestration: flat `key = value` configs, seeded repetitions,
//! trace output and comparison metrics.
//!
//! Recognized keys (all optional unless noted):
//!
//! ```text
//! dataset = synth | files
//! synth.nodes  synth.p  synth.cells  synth.samples  synth.cell_std  synth.noise_std
//! files.graph  files.flows  files.cells            (graph and flows required for `files`)
//! algo = mfci | sph | random
//! k = <cell budget>
//! mfci.l  mfci.l_prime  mfci.rank  mfci.method = svd|ica
//! mfci.discretization = deterministic|random_walk
//! mfci.evaluate = true|false  mfci.projection = exact|approximate
//! ica.max_iterations  ica.tolerance
//! sph.candidates
//! solver.tolerance  solver.max_iterations
//! seeds = 1,2,3
//! output.dir  output.record_time = true|false
//! ```
//!
//! Each seed drives both the synthetic data (stream 0) and the algorithm's
//! randomness (stream 1), so a repetition is fully determined by its seed.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::{infer_random, infer_sph, SphConfig};
use crate::complex::{CellComplex, OrientedGraph};
use crate::factorize::{svd_tail_norm, FactorizationMethod};
use crate::hodge::{loss, remove_gradient, FlowMatrix, SolverConfig};
use crate::io::{self, IoError, TraceRecord};
use crate::mfci::{infer_mfci, Discretization, Inference, InferenceConfig, MfciError, ProjectionMode};
use crate::synth::{Dataset, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Inference(#[from] MfciError),
    #[error("random baseline error {random} does not exceed reference error {reference}")]
    DegenerateReference { random: f64, reference: f64 },
}

fn config_err(field: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgoKind {
    Mfci,
    Sph,
    Random,
}

impl FromStr for AlgoKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mfci" => Ok(Self::Mfci),
            "sph" => Ok(Self::Sph),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown algorithm `{other}` (mfci|sph|random)")),
        }
    }
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mfci => "mfci",
            Self::Sph => "sph",
            Self::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth(SynthConfig),
    Files {
        graph: PathBuf,
        flows: PathBuf,
        cells: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub algo: AlgoKind,
    /// Cell budget shared by all algorithms; overrides `mfci.total_cells`.
    pub total_cells: usize,
    pub mfci: InferenceConfig,
    pub sph_candidates: usize,
    pub solver: SolverConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// When `false`, traces carry `0` seconds so reruns are byte-identical.
    pub record_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth(SynthConfig::default()),
            algo: AlgoKind::Mfci,
            total_cells: 50,
            mfci: InferenceConfig::best_of(50, 1, 8),
            sph_candidates: 11,
            solver: SolverConfig::default(),
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            record_time: true,
        }
    }
}

fn parse_value<T: FromStr>(field: &str, value: &str) -> Result<T, ExperimentError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| config_err(field, format!("cannot parse `{value}`: {e}")))
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut cfg = Self::default();
        let mut synth = SynthConfig::default();
        let mut dataset = "synth".to_string();
        let (mut graph, mut flows, mut cells) = (None, None, None);
        let mut seen = BTreeSet::new();
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err(
                    &format!("line {}", lineno + 1),
                    format!("expected `key = value`, found `{line}`"),
                )
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(config_err(key, "set more than once"));
            }
            match key {
                "dataset" => dataset = value.to_string(),
                "synth.nodes" => synth.nodes = parse_value(key, value)?,
                "synth.p" => synth.edge_probability = parse_value(key, value)?,
                "synth.cells" => synth.cells = parse_value(key, value)?,
                "synth.samples" => synth.samples = parse_value(key, value)?,
                "synth.cell_std" => synth.cell_std = parse_value(key, value)?,
                "synth.noise_std" => synth.noise_std = parse_value(key, value)?,
                "files.graph" => graph = Some(resolve(value)),
                "files.flows" => flows = Some(resolve(value)),
                "files.cells" => cells = Some(resolve(value)),
                "algo" => cfg.algo = parse_value(key, value)?,
                "k" => cfg.total_cells = parse_value(key, value)?,
                "mfci.l" => cfg.mfci.candidates = parse_value(key, value)?,
                "mfci.l_prime" => cfg.mfci.added_per_iteration = parse_value(key, value)?,
                "mfci.rank" => cfg.mfci.rank = Some(parse_value(key, value)?),
                "mfci.method" => cfg.mfci.method = parse_value::<FactorizationMethod>(key, value)?,
                "mfci.discretization" => {
                    cfg.mfci.discretization = parse_value::<Discretization>(key, value)?
                }
                "mfci.evaluate" => cfg.mfci.evaluate_candidates = parse_value(key, value)?,
                "mfci.projection" => cfg.mfci.projection = parse_value::<ProjectionMode>(key, value)?,
                "ica.max_iterations" => cfg.mfci.ica.max_iterations = parse_value(key, value)?,
                "ica.tolerance" => cfg.mfci.ica.tolerance = parse_value(key, value)?,
                "sph.candidates" => cfg.sph_candidates = parse_value(key, value)?,
                "solver.tolerance" => cfg.solver.residual_tolerance = parse_value(key, value)?,
                "solver.max_iterations" => cfg.solver.max_iterations = Some(parse_value(key, value)?),
                "seeds" => {
                    cfg.seeds = value
                        .split(',')
                        .map(|s| parse_value::<u64>(key, s.trim()))
                        .collect::<Result<_, _>>()?
                }
                "output.dir" => cfg.output_dir = resolve(value),
                "output.record_time" => cfg.record_time = parse_value(key, value)?,
                other => return Err(config_err(other, "unknown key")),
            }
        }
        cfg.source = match dataset.as_str() {
            "synth" => DataSource::Synth(synth),
            "files" => DataSource::Files {
                graph: graph.ok_or_else(|| config_err("files.graph", "required for dataset = files"))?,
                flows: flows.ok_or_else(|| config_err("files.flows", "required for dataset = files"))?,
                cells,
            },
            other => return Err(config_err("dataset", format!("unknown source `{other}` (synth|files)"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks seeds, budgets and referenced files.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "at least one seed is required"));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(config_err("seeds", "seeds must be distinct"));
        }
        if self.total_cells == 0 {
            return Err(config_err("k", "must be at least 1"));
        }
        if self.sph_candidates == 0 {
            return Err(config_err("sph.candidates", "must be at least 1"));
        }
        self.solver
            .validate()
            .map_err(|e| config_err("solver", e.to_string()))?;
        match &self.source {
            DataSource::Synth(s) => s
                .validate()
                .map_err(|e| config_err("synth", e.to_string()))?,
            DataSource::Files { graph, flows, cells } => {
                for (field, path) in [("files.graph", Some(graph)), ("files.flows", Some(flows)), ("files.cells", cells.as_ref())] {
                    if let Some(path) = path {
                        if !path.exists() {
                            return Err(config_err(field, format!("{} does not exist", path.display())));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The MFCI settings with the shared budget and solver applied.
    pub fn mfci_config(&self) -> InferenceConfig {
        InferenceConfig {
            total_cells: self.total_cells,
            solver: self.solver,
            ..self.mfci
        }
    }
}

/// Graph, flows and optional ground truth for one repetition.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Arc<OrientedGraph>,
    pub flows: FlowMatrix,
    pub truth: Option<CellComplex>,
}

pub fn load_instance(source: &DataSource, seed: u64) -> Result<Instance, ExperimentError> {
    match source {
        DataSource::Synth(cfg) => {
            let d = Dataset::generate(&SynthConfig { seed, ..*cfg })?;
            Ok(Instance {
                graph: d.graph().clone(),
                flows: d.flows,
                truth: Some(d.truth),
            })
        }
        DataSource::Files { graph, flows, cells } => {
            let d = io::load_dataset(graph, flows, cells.as_deref())?;
            Ok(Instance {
                graph: d.graph,
                flows: d.flows,
                truth: d.truth,
            })
        }
    }
}

/// Algorithm rng for `seed`, on a stream separate from data generation.
pub fn algorithm_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn run_algorithm(
    cfg: &ExperimentConfig,
    algo: AlgoKind,
    instance: &Instance,
    seed: u64,
) -> Result<Inference, ExperimentError> {
    let mut rng = algorithm_rng(seed);
    let graph = instance.graph.clone();
    let out = match algo {
        AlgoKind::Mfci => infer_mfci(graph, &instance.flows, &cfg.mfci_config(), &mut rng)?,
        AlgoKind::Sph => infer_sph(
            graph,
            &instance.flows,
            &SphConfig {
                total_cells: cfg.total_cells,
                candidates: cfg.sph_candidates,
                solver: cfg.solver,
            },
        )?,
        AlgoKind::Random => {
            infer_random(graph, &instance.flows, cfg.total_cells, &cfg.solver, &mut rng)?
        }
    };
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RepetitionResult {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub inference: Inference,
    /// Loss of the ground-truth complex, when one is known.
    pub reference_loss: Option<f64>,
    /// Rank-`k` SVD residual of the gradient-free flows (continuous optimum).
    pub svd_bound: f64,
    pub trace_path: PathBuf,
}

impl RepetitionResult {
    pub fn summary_fields(&self, algo: AlgoKind) -> String {
        let last = self.records.last().expect("nonempty trace");
        format!(
            "{algo},{},{},{},{},{},{},{}",
            self.seed,
            last.cells_total,
            io::format_float(last.loss),
            self.reference_loss
                .map(io::format_float)
                .unwrap_or_default(),
            io::format_float(self.svd_bound),
            io::format_float(last.cumulative_seconds),
            last.cumulative_solver_calls
        )
    }
}

pub const SUMMARY_HEADER: &str =
    "algo,seed,cells_total,final_loss,reference_loss,svd_bound,cumulative_seconds,cumulative_solver_calls";

pub fn trace_file_name(algo: AlgoKind, seed: u64) -> String {
    format!("trace_{algo}_seed{seed}.csv")
}

fn run_repetition(
    cfg: &ExperimentConfig,
    algo: AlgoKind,
    seed: u64,
) -> Result<RepetitionResult, ExperimentError> {
    let instance = load_instance(&cfg.source, seed)?;
    let inference = run_algorithm(cfg, algo, &instance, seed)?;
    let mut records = TraceRecord::from_trace(&inference.trace);
    if !cfg.record_time {
        records.iter_mut().for_each(|r| r.cumulative_seconds = 0.0);
    }
    let (gradient_free, _) = remove_gradient(&instance.graph, &instance.flows, &cfg.solver)
        .map_err(MfciError::from)?;
    let reference_loss = instance
        .truth
        .as_ref()
        .map(|t| loss(t, &gradient_free, &cfg.solver).map(|(l, _)| l))
        .transpose()
        .map_err(MfciError::from)?;
    let max_rank = gradient_free.edge_count().min(gradient_free.sample_count());
    let svd_bound = svd_tail_norm(&gradient_free, cfg.total_cells.min(max_rank));
    let trace_path = cfg.output_dir.join(trace_file_name(algo, seed));
    io::write_trace(&trace_path, &records)?;
    Ok(RepetitionResult {
        seed,
        records,
        inference,
        reference_loss,
        svd_bound,
        trace_path,
    })
}

/// Runs `cfg.algo` once per seed, writing one trace CSV per repetition and a
/// `summary.csv` with one line per repetition.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RepetitionResult>, ExperimentError> {
    cfg.validate()?;
    let results = cfg
        .seeds
        .iter()
        .map(|&seed| run_repetition(cfg, cfg.algo, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for r in &results {
        summary.push_str(&r.summary_fields(cfg.algo));
        summary.push('\n');
    }
    io::write_text(&cfg.output_dir.join("summary.csv"), &summary)?;
    Ok(results)
}

/// Runs every algorithm in `algos` on every seed and writes `bench.csv`:
/// the trace columns prefixed by `algo,seed`.
pub fn run_bench(
    cfg: &ExperimentConfig,
    algos: &[AlgoKind],
) -> Result<Vec<(AlgoKind, RepetitionResult)>, ExperimentError> {
    cfg.validate()?;
    let mut out = Vec::new();
    let mut combined = format!("algo,seed,{}\n", io::TRACE_HEADER);
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for &algo in algos {
        for &seed in &cfg.seeds {
            let r = run_repetition(cfg, algo, seed)?;
            for rec in &r.records {
                combined.push_str(&format!("{algo},{seed},{}\n", rec.to_csv_fields()));
            }
            summary.push_str(&r.summary_fields(algo));
            summary.push('\n');
            out.push((algo, r));
        }
    }
    for (name, text) in [("bench.csv", combined), ("summary.csv", summary)] {
        io::write_text(&cfg.output_dir.join(name), &text)?;
    }
    Ok(out)
}

/// `(r − a) / (r − b)`: 0 matches the random baseline `r`, 1 matches the
/// reference algorithm `b`, above 1 beats it.
pub fn relative_performance(
    random_err: f64,
    algo_err: f64,
    reference_err: f64,
) -> Result<f64, ExperimentError> {
    if !(random_err > reference_err) {
        return Err(ExperimentError::DegenerateReference {
            random: random_err,
            reference: reference_err,
        });
    }
    Ok((random_err - algo_err) / (random_err - reference_err))
}

/// Median of a nonempty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_performance_examples() {
        assert_eq!(relative_performance(10., 4., 6.).unwrap(), 1.5);
        assert_eq!(relative_performance(10., 10., 6.).unwrap(), 0.0);
        assert_eq!(relative_performance(10., 6., 6.).unwrap(), 1.0);
        assert!(matches!(
            relative_performance(5., 1., 5.),
            Err(ExperimentError::DegenerateReference { .. })
        ));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3., 1., 2.]), 2.);
        assert_eq!(median(&[4., 1., 2., 3.]), 2.5);
    }

    #[test]
    fn parses_full_config() {
        let text = "\
            # comment\n\
            dataset = synth\n\
            synth.nodes = 20\n\
            synth.p = 0.9\n\
            synth.cells = 30\n\
            synth.noise_std = 2.0\n\
            algo = sph\n\
            k = 30\n\
            mfci.l = 5\n\
            mfci.l_prime = 1\n\
            mfci.method = ica\n\
            mfci.discretization = random_walk\n\
            mfci.projection = approximate\n\
            sph.candidates = 7\n\
            solver.tolerance = 1e-10\n\
            seeds = 1, 2, 3\n\
            output.dir = results\n\
            output.record_time = false\n";
        let cfg = ExperimentConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.algo, AlgoKind::Sph);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.output_dir, PathBuf::from("/base/results"));
        assert_eq!(cfg.mfci.method, FactorizationMethod::Ica);
        assert_eq!(cfg.mfci.projection, ProjectionMode::Approximate);
        assert_eq!(cfg.mfci_config().total_cells, 30);
        assert_eq!(cfg.solver.residual_tolerance, 1e-10);
        assert!(!cfg.record_time);
        match cfg.source {
            DataSource::Synth(s) => {
                assert_eq!((s.nodes, s.cells), (20, 30));
                assert_eq!(s.noise_std, 2.0);
            }
            other => panic!("unexpected source {other:?}"),
        }
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = ExperimentConfig::parse("mfci.l = many\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("mfci.l"), "{err}");
        let err = ExperimentConfig::parse("bogus = 1\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = ExperimentConfig::parse("seeds = 1,1\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("seeds"));
        let err = ExperimentConfig::parse(
            "dataset = files\nfiles.graph = /nonexistent/g.txt\nfiles.flows = /nonexistent/f.csv\n",
            Path::new("."),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/g.txt"), "{err}");
    }
}
