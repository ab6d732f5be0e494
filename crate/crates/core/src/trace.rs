//! Per-iteration records produced by every inference algorithm.

use std::time::{Duration, Instant};

use crate::complex::CellBoundary;
use crate::hodge::SolveStats;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 is the state after preprocessing, before any cell is added.
    pub iteration: usize,
    pub cells_added: Vec<CellBoundary>,
    pub cells_total: usize,
    /// Exact harmonic loss of the complex after this iteration.
    pub loss: f64,
    pub cumulative_seconds: f64,
    pub cumulative_solver_calls: usize,
    pub cumulative_solver_iterations: usize,
    /// Candidates lost to discretization failures or duplicates.
    pub candidates_dropped: usize,
    /// Set when an approximate update met linearly dependent boundaries or a
    /// solve hit its iteration cap.
    pub flagged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InferenceTrace {
    pub records: Vec<IterationRecord>,
}

impl InferenceTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.loss)
    }

    /// `true` if no loss exceeds its predecessor by more than
    /// `tolerance · max(1, previous)`.
    pub fn is_non_increasing(&self, tolerance: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].loss <= w[0].loss + tolerance * w[0].loss.max(1.0))
    }
}

/// Accumulates wall time over the algorithmic sections of a run only.
#[derive(Debug, Default)]
pub(crate) struct Stopwatch {
    elapsed: Duration,
    started: Option<Instant>,
}

impl Stopwatch {
    pub fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub fn pause(&mut self) {
        if let Some(t) = self.started.take() {
            self.elapsed += t.elapsed();
        }
    }

    pub fn seconds(&self) -> f64 {
        self.elapsed.as_secs_f64()
    }
}

/// Builds trace records from running totals.
pub(crate) struct TraceBuilder {
    pub trace: InferenceTrace,
    pub clock: Stopwatch,
    pub stats: SolveStats,
}

impl TraceBuilder {
    pub fn new() -> Self {
        Self {
            trace: InferenceTrace::default(),
            clock: Stopwatch::default(),
            stats: SolveStats::default(),
        }
    }

    pub fn record(
        &mut self,
        cells_added: Vec<CellBoundary>,
        cells_total: usize,
        loss: f64,
        candidates_dropped: usize,
        flagged: bool,
    ) {
        let iteration = self.trace.records.len();
        self.trace.records.push(IterationRecord {
            iteration,
            cells_added,
            cells_total,
            loss,
            cumulative_seconds: self.clock.seconds(),
            cumulative_solver_calls: self.stats.calls,
            cumulative_solver_iterations: self.stats.iterations,
            candidates_dropped,
            flagged: flagged || !self.stats.converged,
        });
    }
}
