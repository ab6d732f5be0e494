//! Inference of 2-cells on a graph from observed edge flows.
//!
//! Given a graph and a matrix of edge flows, the goal is to attach a small
//! number of 2-cells (polygons bounded by simple cycles) such that as little
//! flow as possible remains harmonic, i.e. unexplained by gradients of node
//! potentials or by circulation around the attached cells.
//!
//! The main algorithm ([`mfci::infer_mfci`]) factors the unexplained flow as
//! `B · C`, turns columns of `B` into cycles, and adds the best of them.
//! [`baselines`] provides a spanning-tree heuristic with greedy selection and
//! a random placement baseline; [`synth`] generates planted benchmark data;
//! [`experiment`] ties everything into seeded, file-backed runs.
//!
//! ```
//! use std::sync::Arc;
//! use mfci_core::prelude::*;
//! use rand::SeedableRng;
//!
//! let graph = Arc::new(OrientedGraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap());
//! let flows = FlowMatrix::new(nalgebra::DMatrix::from_column_slice(3, 1, &[1., 1., -1.])).unwrap();
//! let cfg = InferenceConfig::best_of(1, 1, 1);
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let out = infer_mfci(graph, &flows, &cfg, &mut rng).unwrap();
//! assert_eq!(out.complex.cell_count(), 1);
//! assert!(out.trace.final_loss().unwrap() < 1e-8);
//! ```

pub mod baselines;
pub mod complex;
pub mod experiment;
pub mod factorize;
pub mod hodge;
pub mod io;
pub mod lsmr;
pub mod mfci;
pub mod synth;
pub mod trace;
pub mod unionfind;

pub use nalgebra;

pub mod prelude {
    pub use crate::baselines::{infer_random, infer_sph, max_spanning_tree, sph_candidates, EdgeWeights, SphConfig};
    pub use crate::complex::{
        add_cells, boundary_from_edge_set, build_incidence, tree_cycle, validate_cycle,
        CellBoundary, CellComplex, ComplexError, OrientedGraph, SignedIncidence,
    };
    pub use crate::experiment::{relative_performance, AlgoKind, ExperimentConfig};
    pub use crate::factorize::{
        column_scores, fast_ica, select_columns, truncated_svd, Factorization,
        FactorizationMethod, IcaConfig,
    };
    pub use crate::hodge::{
        approx_harmonic_update, harmonic_projection, least_squares, loss, remove_gradient,
        FlowMatrix, SolveStats, SolverConfig,
    };
    pub use crate::mfci::{
        candidate_search, discretize_deterministic, discretize_random_walk, evaluate_and_select,
        infer_mfci, Discretization, Inference, InferenceConfig, MfciError, ProjectionMode,
    };
    pub use crate::synth::{Dataset, SynthConfig};
    pub use crate::trace::{InferenceTrace, IterationRecord};
}
