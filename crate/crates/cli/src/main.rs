use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mfci_core::experiment::{run_bench, run_experiment, AlgoKind, DataSource, ExperimentConfig};
use mfci_core::hodge::{loss, remove_gradient, SolverConfig};
use mfci_core::io;
use mfci_core::synth::{Dataset, SynthConfig};

/// Infer 2-cells on a graph from edge flows.
#[derive(Debug, Parser)]
#[command(name = "mfci", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (graph.txt, flows.csv, cells.txt, meta.txt).
    Synth(SynthArgs),
    /// Run one algorithm per configured seed and write traces.
    Infer(RunArgs),
    /// Report the loss of a cell file against a flow file.
    Eval(EvalArgs),
    /// Sweep algorithms and seeds into a combined bench.csv.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single seed (overrides `seeds`).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct DataOverrides {
    /// Edge-list file (switches the dataset source to files).
    #[arg(long, requires = "flows")]
    graph: Option<PathBuf>,
    /// Flow CSV file.
    #[arg(long, requires = "graph")]
    flows: Option<PathBuf>,
    /// Optional ground-truth cell file.
    #[arg(long, requires = "graph")]
    cells: Option<PathBuf>,
    /// Write 0 for elapsed seconds so reruns produce identical traces.
    #[arg(long)]
    no_timing: bool,
}

impl DataOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let (Some(graph), Some(flows)) = (&self.graph, &self.flows) {
            cfg.source = DataSource::Files {
                graph: graph.clone(),
                flows: flows.clone(),
                cells: self.cells.clone(),
            };
        }
        if self.no_timing {
            cfg.record_time = false;
        }
        cfg.validate()?;
        Ok(())
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataOverrides,
    /// Algorithm (overrides `algo`).
    #[arg(long)]
    algo: Option<AlgoKind>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataOverrides,
    /// Algorithms to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "mfci,sph,random")]
    algo: Vec<AlgoKind>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    flows: PathBuf,
    #[arg(long)]
    cells: PathBuf,
    /// Relative solver tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
}

fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = args.common.load()?;
    let DataSource::Synth(base) = cfg.source else {
        bail!("`synth` needs `dataset = synth` in the config");
    };
    for &seed in &cfg.seeds {
        let data = Dataset::generate(&SynthConfig { seed, ..base })?;
        let dir = if cfg.seeds.len() == 1 {
            cfg.output_dir.clone()
        } else {
            cfg.output_dir.join(format!("seed{seed}"))
        };
        io::write_dataset(&dir, &data)?;
        println!(
            "seed {seed}: {} nodes, {} edges, {} cells, {} samples -> {}",
            data.graph().node_count(),
            data.graph().edge_count(),
            data.truth.cell_count(),
            data.flows.sample_count(),
            dir.display()
        );
    }
    Ok(())
}

fn infer(args: &RunArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(algo) = args.algo {
        cfg.algo = algo;
    }
    args.data.apply(&mut cfg)?;
    let results = run_experiment(&cfg)?;
    println!("{}", mfci_core::experiment::SUMMARY_HEADER);
    for r in &results {
        println!("{}", r.summary_fields(cfg.algo));
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    args.data.apply(&mut cfg)?;
    let results = run_bench(&cfg, &args.algo)?;
    println!("{}", mfci_core::experiment::SUMMARY_HEADER);
    for (algo, r) in &results {
        println!("{}", r.summary_fields(*algo));
    }
    println!("wrote {}", cfg.output_dir.join("bench.csv").display());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let solver = SolverConfig {
        residual_tolerance: args.tolerance,
        ..SolverConfig::default()
    };
    solver.validate()?;
    let data = io::load_dataset(&args.graph, &args.flows, Some(&args.cells))?;
    let complex = data.truth.context("cell file produced no complex")?;
    let (gradient_free, _) = remove_gradient(&data.graph, &data.flows, &solver)?;
    let (value, stats) = loss(&complex, &gradient_free, &solver)?;
    let total = data.flows.frobenius_norm();
    let fraction = if total > 0.0 { value / total } else { 0.0 };
    println!("cells {}", complex.cell_count());
    println!("loss {}", io::format_float(value));
    println!("harmonic_fraction {}", io::format_float(fraction));
    if !stats.converged {
        eprintln!("warning: solver did not converge");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
