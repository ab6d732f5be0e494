//! Synthetic benchmark data: random graphs with planted 2-cells and flows
//! `f_i = B₂ c_i + ε_i`.
//!
//! Graphs are Erdős–Rényi draws restricted to their largest component. Cells
//! are planted by closing a random non-tree edge over a random spanning tree,
//! repeated until enough distinct cells exist.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::baselines::random_tree_cycle;
use crate::complex::{add_cells, CellComplex, ComplexError, OrientedGraph};
use crate::hodge::{loss, remove_gradient, FlowMatrix, HodgeError, SolverConfig};
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
    #[error("could not plant {cells} distinct cells after {retries} retries")]
    GenerationFailed { cells: usize, retries: usize },
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Hodge(#[from] HodgeError),
}

/// Total failed draws tolerated while planting cells.
pub const MAX_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub nodes: usize,
    pub edge_probability: f64,
    pub cells: usize,
    pub samples: usize,
    pub cell_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nodes: 40,
            edge_probability: 0.9,
            cells: 50,
            samples: 64,
            cell_std: 1.0,
            noise_std: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: &str| Err(SynthError::InvalidConfig(msg.into()));
        if self.nodes < 3 {
            return fail("nodes must be at least 3");
        }
        if !(self.edge_probability > 0.0 && self.edge_probability <= 1.0) {
            return fail("edge_probability must lie in (0, 1]");
        }
        if self.cells == 0 {
            return fail("cells must be at least 1");
        }
        if self.samples == 0 {
            return fail("samples must be at least 1");
        }
        if !(self.cell_std >= 0.0 && self.cell_std.is_finite()) {
            return fail("cell_std must be finite and nonnegative");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise_std must be finite and nonnegative");
        }
        Ok(())
    }
}

/// `G(n, p)` over node pairs in lexicographic order, oriented low → high,
/// reduced to its largest component (smallest node wins ties) with nodes
/// relabeled contiguously in their original order.
pub fn erdos_renyi<R: Rng + ?Sized>(nodes: usize, p: f64, rng: &mut R) -> OrientedGraph {
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let mut uf = UnionFind::new(nodes);
    for &(a, b) in &edges {
        uf.union(a, b);
    }
    let mut sizes = vec![0usize; nodes];
    for v in 0..nodes {
        sizes[uf.find(v)] += 1;
    }
    let root = (0..nodes)
        .map(|v| uf.find(v))
        .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .expect("at least one node");
    let mut label = vec![usize::MAX; nodes];
    let mut next = 0;
    for v in 0..nodes {
        if uf.find(v) == root {
            label[v] = next;
            next += 1;
        }
    }
    let kept = edges
        .into_iter()
        .filter(|&(a, _)| label[a] != usize::MAX)
        .map(|(a, b)| (label[a], label[b]))
        .collect();
    OrientedGraph::new(next, kept).expect("relabeled ER graph is simple")
}

/// Random graph with `cfg.cells` distinct planted cells.
pub fn random_complex<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<CellComplex, SynthError> {
    cfg.validate()?;
    let mut retries = 0;
    'graph: loop {
        let graph = Arc::new(erdos_renyi(cfg.nodes, cfg.edge_probability, rng));
        let mut complex = CellComplex::empty(graph.clone());
        while complex.cell_count() < cfg.cells {
            if retries > MAX_RETRIES {
                return Err(SynthError::GenerationFailed {
                    cells: cfg.cells,
                    retries: MAX_RETRIES,
                });
            }
            let Ok(cell) = random_tree_cycle(&graph, rng) else {
                retries += 1;
                continue 'graph;
            };
            if complex.contains(&cell) {
                retries += 1;
                continue;
            }
            complex = add_cells(&complex, &[cell])?.complex;
        }
        return Ok(complex);
    }
}

/// Columns `B₂ c_i + ε_i` with `c_i ~ N(0, cell_std²)` per cell and
/// `ε_i ~ N(0, noise_std²)` per edge, drawn column by column.
pub fn sample_flows<R: Rng + ?Sized>(
    complex: &CellComplex,
    samples: usize,
    cell_std: f64,
    noise_std: f64,
    rng: &mut R,
) -> Result<FlowMatrix, SynthError> {
    let cell_dist = Normal::new(0.0, cell_std)
        .map_err(|e| SynthError::InvalidConfig(format!("cell_std: {e}")))?;
    let noise_dist = Normal::new(0.0, noise_std)
        .map_err(|e| SynthError::InvalidConfig(format!("noise_std: {e}")))?;
    let m = complex.graph().edge_count();
    let mut f = DMatrix::zeros(m, samples);
    for i in 0..samples {
        for cell in complex.cells() {
            let c: f64 = cell_dist.sample(rng);
            for &(e, s) in cell.entries() {
                f[(e, i)] += c * f64::from(s);
            }
        }
        for e in 0..m {
            f[(e, i)] += noise_dist.sample(rng);
        }
    }
    Ok(FlowMatrix::new(f)?)
}

/// A generated benchmark instance with its planted ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: SynthConfig,
    pub truth: CellComplex,
    pub flows: FlowMatrix,
}

impl Dataset {
    /// Generates the complex, then the flows, from one rng seeded with
    /// `cfg.seed`.
    pub fn generate(cfg: &SynthConfig) -> Result<Self, SynthError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let truth = random_complex(cfg, &mut rng)?;
        let flows = sample_flows(&truth, cfg.samples, cfg.cell_std, cfg.noise_std, &mut rng)?;
        Ok(Self {
            config: *cfg,
            truth,
            flows,
        })
    }

    pub fn graph(&self) -> &Arc<OrientedGraph> {
        self.truth.shared_graph()
    }

    /// Loss of the planted complex on the gradient-free flows.
    pub fn reference_loss(&self, solver: &SolverConfig) -> Result<f64, SynthError> {
        let (gradient_free, _) = remove_gradient(self.truth.graph(), &self.flows, solver)?;
        Ok(loss(&self.truth, &gradient_free, solver)?.0)
    }
}
