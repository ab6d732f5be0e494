//! Shared fixtures for the benchmarks.

use mfci_core::hodge::{remove_gradient, FlowMatrix, SolverConfig};
use mfci_core::synth::{Dataset, SynthConfig};

/// Erdős–Rényi instance with planted cells at the given size.
pub fn planted(nodes: usize, cells: usize, samples: usize, seed: u64) -> Dataset {
    Dataset::generate(&SynthConfig {
        nodes,
        edge_probability: 0.9,
        cells,
        samples,
        cell_std: 1.0,
        noise_std: 0.3,
        seed,
    })
    .expect("dense graphs support the requested cells")
}

/// The planted instance together with its gradient-free flows.
pub fn gradient_free(data: &Dataset) -> FlowMatrix {
    remove_gradient(data.graph(), &data.flows, &SolverConfig::default())
        .expect("flows match the graph")
        .0
}
