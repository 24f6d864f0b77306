use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::relation::FrameId;
use crate::simulation::trace::FrameTrace;

/// Accurate but expensive ground-truth scorer.
///
/// Implementations must be deterministic per frame id and keep monotone counters.
pub trait Oracle {
    /// Ground-truth scores for `frame_ids`, in the same order.
    fn score(&self, frame_ids: &[FrameId]) -> Result<Vec<f64>>;

    /// Frames scored so far.
    fn invocations(&self) -> u64;

    /// Number of `score` calls with a non-empty batch.
    fn batches(&self) -> u64 {
        0
    }

    /// Speculative read-ahead hint; the default ignores it.
    fn prefetch(&self, _frame_ids: &[FrameId]) {}
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn score(&self, frame_ids: &[FrameId]) -> Result<Vec<f64>> {
        (**self).score(frame_ids)
    }

    fn invocations(&self) -> u64 {
        (**self).invocations()
    }

    fn batches(&self) -> u64 {
        (**self).batches()
    }

    fn prefetch(&self, frame_ids: &[FrameId]) {
        (**self).prefetch(frame_ids)
    }
}

/// Oracle that reveals the hidden truth recorded in a trace.
#[derive(Debug)]
pub struct SimulatedOracle {
    truth: HashMap<FrameId, f64>,
    cost_per_frame: f64,
    frames: u64,
    invocations: AtomicU64,
    batches: AtomicU64,
    prefetched: AtomicU64,
}

impl SimulatedOracle {
    pub fn new(traces: &[FrameTrace], cost_per_frame: f64) -> Self {
        Self::from_scores(traces.iter().map(|t| (t.frame_id, t.truth)), cost_per_frame)
    }

    pub fn from_scores(scores: impl IntoIterator<Item = (FrameId, f64)>, cost_per_frame: f64) -> Self {
        let truth: HashMap<_, _> = scores.into_iter().collect();
        Self {
            frames: truth.len() as u64,
            truth,
            cost_per_frame,
            invocations: AtomicU64::new(0),
            batches: AtomicU64::new(0),
            prefetched: AtomicU64::new(0),
        }
    }

    /// Total cost of the scan-and-test baseline that scores every frame once.
    pub fn scan_cost(&self) -> f64 {
        self.frames as f64 * self.cost_per_frame
    }

    pub fn cost(&self) -> f64 {
        self.invocations() as f64 * self.cost_per_frame
    }

    pub fn prefetched(&self) -> u64 {
        self.prefetched.load(Ordering::Relaxed)
    }
}

impl Oracle for SimulatedOracle {
    fn score(&self, frame_ids: &[FrameId]) -> Result<Vec<f64>> {
        let scores = frame_ids
            .iter()
            .map(|id| self.truth.get(id).copied().ok_or(Error::UnknownFrame(*id)))
            .collect::<Result<Vec<_>>>()?;
        if !frame_ids.is_empty() {
            self.invocations.fetch_add(frame_ids.len() as u64, Ordering::Relaxed);
            self.batches.fetch_add(1, Ordering::Relaxed);
        }
        Ok(scores)
    }

    fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::Relaxed)
    }

    fn batches(&self) -> u64 {
        self.batches.load(Ordering::Relaxed)
    }

    fn prefetch(&self, frame_ids: &[FrameId]) {
        self.prefetched.fetch_add(frame_ids.len() as u64, Ordering::Relaxed);
    }
}
