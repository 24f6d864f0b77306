//! Top-K over tumbling windows scored by their mean frame score.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{mixture_moments, quantize_with, Bin, GaussianMixture, Redistribution, ScoreGrid};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::relation::{FrameId, RelationEntry, UncertainRelation};
use crate::simulation::{FrameTrace, Oracle};

pub type WindowId = u64;

/// Variance term used when collapsing segments into one window normal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowVariance {
    /// `(1/L) Σ |s_t| σ̄²`.
    #[default]
    Literal,
    /// `(1/L²) Σ |s_t|² σ̄²`, the variance of a mean of independent segments.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub length: usize,
    pub sample_fraction: f64,
    pub variance: WindowVariance,
}

impl WindowConfig {
    pub fn new(length: usize) -> Self {
        Self { length, sample_fraction: 0.1, variance: WindowVariance::Literal }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidParams("window length must be at least 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "sample fraction must lie in (0, 1], got {}",
                self.sample_fraction
            )));
        }
        Ok(())
    }

    pub fn sample_size(&self) -> usize {
        sample_size(self.sample_fraction, self.length)
    }
}

fn sample_size(fraction: f64, length: usize) -> usize {
    // the epsilon keeps 0.3 * 10 from rounding up to 4
    ((fraction * length as f64 - 1e-9).ceil() as usize).clamp(1, length)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_id: WindowId,
    /// Position of the first frame in the timeline.
    pub start: usize,
    /// The window's frames in timeline order.
    pub frames: Vec<FrameId>,
    /// Consecutive runs `(retained frame, run length)` covering the window.
    pub segments: Vec<(FrameId, usize)>,
}

impl WindowSpec {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Tiles the timeline into windows of `length` frames; a shorter tail is dropped.
pub fn tile_windows(
    frames: &[FrameTrace],
    representative: &BTreeMap<FrameId, FrameId>,
    length: usize,
) -> Result<Vec<WindowSpec>> {
    if length == 0 {
        return Err(Error::InvalidParams("window length must be at least 1".into()));
    }
    let mut windows = Vec::with_capacity(frames.len() / length);
    for (w, chunk) in frames.chunks_exact(length).enumerate() {
        let mut segments: Vec<(FrameId, usize)> = Vec::new();
        for f in chunk {
            let rep = *representative.get(&f.frame_id).ok_or(Error::UnknownFrame(f.frame_id))?;
            match segments.last_mut() {
                Some((r, n)) if *r == rep => *n += 1,
                _ => segments.push((rep, 1)),
            }
        }
        windows.push(WindowSpec {
            window_id: w as WindowId,
            start: w * length,
            frames: chunk.iter().map(|f| f.frame_id).collect(),
            segments,
        });
    }
    Ok(windows)
}

/// Normal approximation of the window mean from the retained frames' mixtures.
pub fn window_distribution(w: &WindowSpec, mixtures: &HashMap<FrameId, GaussianMixture>) -> Result<GaussianMixture> {
    window_distribution_with(w, mixtures, WindowVariance::Literal)
}

pub fn window_distribution_with(
    w: &WindowSpec,
    mixtures: &HashMap<FrameId, GaussianMixture>,
    variance: WindowVariance,
) -> Result<GaussianMixture> {
    let length = w.len() as f64;
    let mut means = Vec::with_capacity(w.segments.len());
    let mut vars = Vec::with_capacity(w.segments.len());
    for &(retained, size) in &w.segments {
        let mix = mixtures.get(&retained).ok_or(Error::MissingRetainedFrame(w.window_id))?;
        let (m, v) = mixture_moments(mix);
        let size = size as f64;
        means.push(size * m);
        vars.push(match variance {
            WindowVariance::Literal => size * v,
            WindowVariance::Independent => size * size * v / length,
        });
    }
    let mean = compensated_sum(means) / length;
    let var = compensated_sum(vars) / length;
    GaussianMixture::normal(mean, var.sqrt().max(1e-12))
}

/// Grid step that makes the mean of `length` integer counts land exactly on a grid point.
pub fn counting_window_grid(length: usize, max_score: f64) -> Result<ScoreGrid> {
    let step = 1.0 / length as f64;
    let bins = (max_score.max(0.0) / step).ceil() as usize + 2;
    ScoreGrid::non_negative(step, bins)
}

/// One uncertain x-tuple per window, keyed by window id.
pub fn build_window_relation(
    windows: &[WindowSpec],
    mixtures: &HashMap<FrameId, GaussianMixture>,
    grid: &ScoreGrid,
    variance: WindowVariance,
    redistribution: Redistribution,
) -> Result<UncertainRelation> {
    let entries = windows
        .iter()
        .map(|w| {
            let normal = window_distribution_with(w, mixtures, variance)?;
            let dist = quantize_with(&normal, grid, redistribution)?;
            Ok(RelationEntry::uncertain(w.window_id, w.start as i64, dist))
        })
        .collect::<Result<Vec<_>>>()?;
    UncertainRelation::build(entries, *grid)
}

fn window_rng(seed: u64, window: WindowId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ window.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Positions (within the window) that `clean_window` samples, in ascending order.
pub fn sampled_positions(w: &WindowSpec, sample_fraction: f64, seed: u64) -> Vec<usize> {
    let n = sample_size(sample_fraction, w.len());
    let mut rng = window_rng(seed, w.window_id);
    let mut picks = rand::seq::index::sample(&mut rng, w.len(), n).into_vec();
    picks.sort_unstable();
    picks
}

/// Scores a seeded uniform sample of the window's frames with the oracle and
/// returns the sample mean on the window grid.
pub fn clean_window<O: Oracle + ?Sized>(
    w: &WindowSpec,
    oracle: &O,
    sample_fraction: f64,
    seed: u64,
    grid: &ScoreGrid,
) -> Result<Bin> {
    if w.is_empty() {
        return Err(Error::InvalidParams(format!("window {} is empty", w.window_id)));
    }
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::InvalidParams(format!("sample fraction {sample_fraction} outside (0, 1]")));
    }
    let ids: Vec<FrameId> = sampled_positions(w, sample_fraction, seed).into_iter().map(|p| w.frames[p]).collect();
    let scores = oracle.score(&ids)?;
    let mean = compensated_sum(scores.iter().copied()) / scores.len() as f64;
    Ok(grid.bin_of(mean))
}

/// Presents windows as oracle-scorable tuples by sampling frames from a frame oracle.
pub struct WindowOracle<'a, O: Oracle + ?Sized> {
    windows: HashMap<WindowId, &'a WindowSpec>,
    frames: &'a O,
    sample_fraction: f64,
    seed: u64,
    grid: ScoreGrid,
    cleaned: AtomicU64,
}

impl<'a, O: Oracle + ?Sized> WindowOracle<'a, O> {
    pub fn new(windows: &'a [WindowSpec], frames: &'a O, sample_fraction: f64, seed: u64, grid: ScoreGrid) -> Self {
        Self {
            windows: windows.iter().map(|w| (w.window_id, w)).collect(),
            frames,
            sample_fraction,
            seed,
            grid,
            cleaned: AtomicU64::new(0),
        }
    }

    /// Frame-level oracle calls spent on window samples.
    pub fn frame_invocations(&self) -> u64 {
        self.frames.invocations()
    }
}

impl<O: Oracle + ?Sized> Oracle for WindowOracle<'_, O> {
    fn score(&self, ids: &[FrameId]) -> Result<Vec<f64>> {
        let scores = ids
            .iter()
            .map(|id| {
                let w = self.windows.get(id).ok_or(Error::UnknownFrame(*id))?;
                let bin = clean_window(w, self.frames, self.sample_fraction, self.seed, &self.grid)?;
                Ok(self.grid.score_of(bin))
            })
            .collect::<Result<Vec<_>>>()?;
        self.cleaned.fetch_add(ids.len() as u64, Ordering::Relaxed);
        Ok(scores)
    }

    fn invocations(&self) -> u64 {
        self.cleaned.load(Ordering::Relaxed)
    }
}

/// Exact window score: the mean truth over all of the window's frames.
pub fn window_truth(w: &WindowSpec, truth: &HashMap<FrameId, f64>) -> Result<f64> {
    let scores = w
        .frames
        .iter()
        .map(|id| truth.get(id).copied().ok_or(Error::UnknownFrame(*id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(scores) / w.len() as f64)
}
