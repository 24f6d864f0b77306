//! End-to-end experiment pipeline: trace, difference detection, relation,
//! query, and quality metrics.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{quantize_with, GaussianMixture, Redistribution, ScoreGrid, TRUNCATION_SIGMAS};
use crate::engine::{run_query, QueryConfig, QueryOutcome, QueryStats};
use crate::error::{Error, Result};
use crate::relation::{FrameId, RelationEntry, TopKAnswer, UncertainRelation};
use crate::simulation::{
    diff_detect, generate_trace, read_trace, DiffConfig, FrameTrace, Oracle, SimulatedOracle, TraceParams,
};
use crate::window::{build_window_relation, tile_windows, window_truth, WindowConfig, WindowOracle, WindowVariance};

/// Salt that separates the seed-label sampler from the trace generator.
const SEED_LABEL_SALT: u64 = 0x5EED_1ABE;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Frame,
    Window,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(Mode::Frame),
            "window" => Ok(Mode::Window),
            other => Err(Error::InvalidParams(format!("unknown mode {other:?}, expected frame or window"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub k: usize,
    pub thres: f64,
    pub window_size: usize,
    pub sample_fraction: f64,
    pub window_variance: WindowVariance,
    pub batch: usize,
    /// Drives trace generation, seed-label sampling and window sampling.
    pub seed: u64,
    /// JSON-lines trace to load; a trace is generated when absent.
    pub trace: Option<PathBuf>,
    /// Generator parameters; `seed` here is replaced by the experiment seed.
    pub generator: TraceParams,
    /// Oracle-labelled frames that start certain. Defaults to
    /// `min(ceil(0.005 n), 30000)` over retained frames; windows get none.
    pub seed_labels: Option<usize>,
    pub diff: DiffConfig,
    /// Score grid step for frames. Counting traces use 1 and windows `1 / L`.
    pub grid_step: Option<f64>,
    /// Where the mass cut off by truncation goes when quantizing.
    pub redistribution: Redistribution,
    pub cost_per_frame: f64,
    pub report: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Frame,
            k: 50,
            thres: 0.9,
            window_size: 30,
            sample_fraction: 0.1,
            window_variance: WindowVariance::Literal,
            batch: 8,
            seed: 0,
            trace: None,
            generator: TraceParams::default(),
            seed_labels: None,
            diff: DiffConfig::default(),
            grid_step: None,
            redistribution: Redistribution::Uniform,
            cost_per_frame: 1.0,
            report: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParams(format!("config: {e}")))
    }

    pub fn query_config(&self) -> QueryConfig {
        QueryConfig::new(self.k, self.thres).with_batch(self.batch)
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig { length: self.window_size, sample_fraction: self.sample_fraction, variance: self.window_variance }
    }

    pub fn validate(&self) -> Result<()> {
        self.query_config().validate()?;
        if self.mode == Mode::Window {
            self.window_config().validate()?;
        }
        self.diff.validate()?;
        if self.trace.is_none() {
            self.generator.validate()?;
        }
        if let Some(step) = self.grid_step {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::InvalidParams(format!("grid step must be positive, got {step}")));
            }
        }
        if !(self.cost_per_frame > 0.0) || !self.cost_per_frame.is_finite() {
            return Err(Error::InvalidParams("cost per frame must be positive".into()));
        }
        Ok(())
    }
}

/// Default seed-label budget for `n` retained frames.
pub fn default_seed_labels(n: usize) -> usize {
    ((0.005 * n as f64).ceil() as usize).min(30_000)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub precision: f64,
    /// Counts a returned item as correct when its truth reaches the K-th true score.
    pub tie_aware_precision: f64,
    pub rank_distance: f64,
    pub score_error: f64,
}

/// First iteration at which the confidence reached each level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Milestones {
    pub half: Option<u64>,
    pub thres: Option<u64>,
    pub p99: Option<u64>,
}

impl Milestones {
    pub fn from_trajectory(trajectory: &[(u64, f64)], thres: f64) -> Self {
        let first = |level: f64| trajectory.iter().find(|&&(_, p)| p >= level).map(|&(i, _)| i);
        Self { half: first(0.5), thres: first(thres), p99: first(0.99) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub frames_total: usize,
    pub frames_retained: usize,
    pub windows: Option<usize>,
    pub seed_invocations: u64,
    pub bootstrap_invocations: u64,
    pub selection_invocations: u64,
    /// Frame-level oracle calls spent on window samples.
    pub window_sample_invocations: u64,
    pub iterations: u64,
    pub oracle_batches: u64,
    pub expectation_evaluations: u64,
    pub eq2_fallbacks: u64,
    pub order_rebuilds: u64,
    /// Tuples cleaned by the query over all tuples of the relation.
    pub cleaned_fraction: f64,
    pub milestones: Milestones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub k: usize,
    pub thres: f64,
    pub seed: u64,
    pub precision: f64,
    pub tie_aware_precision: f64,
    pub rank_distance: f64,
    pub score_error: f64,
    pub confidence: f64,
    pub oracle_invocations: u64,
    pub scan_baseline_invocations: u64,
    pub speedup: f64,
    pub breakdown: Breakdown,
    /// Returned `(id, score)` pairs by rank.
    pub answer: Vec<(FrameId, f64)>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Exact Top-K ids by descending truth, ties by id.
pub fn true_topk(truth: &BTreeMap<FrameId, f64>, k: usize) -> Vec<FrameId> {
    let mut ranked: Vec<(FrameId, f64)> = truth.iter().map(|(&id, &s)| (id, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(id, _)| id).collect()
}

/// Quality of `answer` against exact Top-K over `truth`.
pub fn evaluate(answer: &TopKAnswer, truth: &BTreeMap<FrameId, f64>, k: usize) -> Result<Quality> {
    if answer.k() != k {
        return Err(Error::InvalidParams(format!("answer has {} members, expected {k}", answer.k())));
    }
    if truth.len() < k {
        return Err(Error::InsufficientFrames { k, available: truth.len() });
    }
    let returned = answer.ids();
    let exact = true_topk(truth, k);
    let rank_in_exact: HashMap<FrameId, usize> = exact.iter().enumerate().map(|(i, &id)| (id, i + 1)).collect();
    let score = |id: &FrameId| truth.get(id).copied().ok_or(Error::UnknownFrame(*id));
    let kth = score(&exact[k - 1])?;

    let mut hits = 0usize;
    let mut tie_hits = 0usize;
    let mut displacement = 0usize;
    let mut abs_error = 0.0;
    for (i, id) in returned.iter().enumerate() {
        let rank = rank_in_exact.get(id).copied();
        hits += usize::from(rank.is_some());
        let s = score(id)?;
        tie_hits += usize::from(s >= kth);
        displacement += (i + 1).abs_diff(rank.unwrap_or(k + 1));
        abs_error += (s - score(&exact[i])?).abs();
    }
    let k_f = k as f64;
    Ok(Quality {
        precision: hits as f64 / k_f,
        tie_aware_precision: tie_hits as f64 / k_f,
        rank_distance: displacement as f64 / (k_f * (k_f + 1.0) / 2.0),
        score_error: abs_error / k_f,
    })
}

fn load_trace(cfg: &ExperimentConfig) -> Result<Vec<FrameTrace>> {
    match &cfg.trace {
        Some(path) => read_trace(BufReader::new(File::open(path)?)),
        None => {
            let params = TraceParams { seed: cfg.seed, ..cfg.generator.clone() };
            generate_trace(&params)
        }
    }
}

fn is_counting(frames: &[FrameTrace]) -> bool {
    frames.iter().all(|f| f.truth >= 0.0 && f.truth.fract() == 0.0)
}

/// Range of scores the proxies and truths can take.
fn score_span<'a>(mixtures: impl Iterator<Item = &'a GaussianMixture>, truths: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for mix in mixtures {
        for c in mix.components() {
            lo = lo.min(c.mean - TRUNCATION_SIGMAS * c.sd);
            hi = hi.max(c.mean + TRUNCATION_SIGMAS * c.sd);
        }
    }
    for t in truths {
        lo = lo.min(t);
        hi = hi.max(t);
    }
    (lo, hi)
}

fn grid_for(counting: bool, step: f64, lo: f64, hi: f64) -> Result<ScoreGrid> {
    if counting {
        let bins = (hi.max(0.0) / step).ceil() as usize + 2;
        ScoreGrid::non_negative(step, bins)
    } else {
        let origin = (lo / step).floor() * step;
        let bins = ((hi - origin) / step).ceil() as usize + 2;
        ScoreGrid::new(origin, step, bins)
    }
}

fn sample_seed_labels(retained: &[FrameId], n: usize, seed: u64) -> Vec<FrameId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SEED_LABEL_SALT);
    let mut picks: Vec<FrameId> =
        rand::seq::index::sample(&mut rng, retained.len(), n).into_iter().map(|i| retained[i]).collect();
    picks.sort_unstable();
    picks
}

/// Everything a frame-mode query needs, before running it.
pub struct FrameSetup {
    pub frames: Vec<FrameTrace>,
    pub retained: Vec<FrameId>,
    pub relation: UncertainRelation,
    pub oracle: SimulatedOracle,
    pub seed_invocations: u64,
}

/// Builds the frame relation: seeds are scored by the oracle and start certain,
/// every other retained frame carries its quantized proxy mixture.
pub fn prepare_frames(cfg: &ExperimentConfig, frames: Vec<FrameTrace>) -> Result<FrameSetup> {
    let diff = diff_detect(&frames, &cfg.diff)?;
    let by_id: HashMap<FrameId, &FrameTrace> = frames.iter().map(|f| (f.frame_id, f)).collect();
    let retained_traces: Vec<&FrameTrace> = diff.retained.iter().map(|id| by_id[id]).collect();

    let counting = is_counting(&frames);
    let step = cfg.grid_step.unwrap_or(if counting { 1.0 } else { 0.05 });
    let (lo, hi) = score_span(
        retained_traces.iter().map(|f| &f.proxy_mixture),
        retained_traces.iter().map(|f| f.truth),
    );
    let grid = grid_for(counting, step, lo, hi)?;

    let oracle = SimulatedOracle::new(&frames, cfg.cost_per_frame);
    let budget = cfg.seed_labels.unwrap_or_else(|| default_seed_labels(diff.retained.len())).min(diff.retained.len());
    let seeds = sample_seed_labels(&diff.retained, budget, cfg.seed);
    let seed_scores: BTreeMap<FrameId, f64> = seeds.iter().copied().zip(oracle.score(&seeds)?).collect();

    let entries = retained_traces
        .iter()
        .map(|f| match seed_scores.get(&f.frame_id) {
            Some(&s) => Ok(RelationEntry::certain(f.frame_id, f.timestamp, grid.bin_of(s))),
            None => Ok(RelationEntry::uncertain(f.frame_id, f.timestamp, quantize_with(&f.proxy_mixture, &grid, cfg.redistribution)?)),
        })
        .collect::<Result<Vec<_>>>()?;
    let relation = UncertainRelation::build(entries, grid)?;
    Ok(FrameSetup { retained: diff.retained, frames, relation, oracle, seed_invocations: seeds.len() as u64 })
}

fn answer_scores(answer: &TopKAnswer, grid: &ScoreGrid) -> Vec<(FrameId, f64)> {
    answer.members.iter().map(|&(id, bin)| (id, grid.score_of(bin))).collect()
}

fn breakdown_from(stats: &QueryStats, thres: f64, relation_len: usize) -> Breakdown {
    Breakdown {
        bootstrap_invocations: stats.bootstrap_cleaned,
        selection_invocations: stats.frames_cleaned - stats.bootstrap_cleaned,
        iterations: stats.iterations,
        oracle_batches: stats.oracle_batches,
        expectation_evaluations: stats.expectation_evaluations,
        eq2_fallbacks: stats.eq2_fallbacks,
        order_rebuilds: stats.order_rebuilds,
        cleaned_fraction: stats.frames_cleaned as f64 / relation_len.max(1) as f64,
        milestones: Milestones::from_trajectory(&stats.confidence_trajectory, thres),
        ..Breakdown::default()
    }
}

/// Report plus the raw query outcome, for callers that need the trajectory.
pub struct ExperimentRun {
    pub report: MetricsReport,
    pub outcome: QueryOutcome,
}

fn run_frame(cfg: &ExperimentConfig, frames: Vec<FrameTrace>, progress: &mut dyn FnMut(&str)) -> Result<ExperimentRun> {
    let mut setup = prepare_frames(cfg, frames)?;
    progress(&format!(
        "frame mode: {} of {} frames retained, {} seed labels",
        setup.retained.len(),
        setup.frames.len(),
        setup.seed_invocations
    ));
    let relation_len = setup.relation.len();
    let outcome = run_query(&mut setup.relation, &setup.oracle, &cfg.query_config())?;
    progress(&format!(
        "query done after {} iterations, {} frames cleaned",
        outcome.stats.iterations, outcome.stats.frames_cleaned
    ));

    let truth_by_id: HashMap<FrameId, f64> = setup.frames.iter().map(|f| (f.frame_id, f.truth)).collect();
    let truth: BTreeMap<FrameId, f64> = setup.retained.iter().map(|id| (*id, truth_by_id[id])).collect();
    let quality = evaluate(&outcome.answer, &truth, cfg.k)?;

    let mut breakdown = breakdown_from(&outcome.stats, cfg.thres, relation_len);
    breakdown.frames_total = setup.frames.len();
    breakdown.frames_retained = setup.retained.len();
    breakdown.seed_invocations = setup.seed_invocations;
    let oracle_invocations = setup.oracle.invocations();
    let scan = setup.retained.len() as u64;
    let report = assemble(cfg, quality, &outcome, oracle_invocations, scan, breakdown, setup.relation.grid());
    Ok(ExperimentRun { report, outcome })
}

fn run_window(cfg: &ExperimentConfig, frames: Vec<FrameTrace>, progress: &mut dyn FnMut(&str)) -> Result<ExperimentRun> {
    let wcfg = cfg.window_config();
    let diff = diff_detect(&frames, &cfg.diff)?;
    let windows = tile_windows(&frames, &diff.representative, wcfg.length)?;
    progress(&format!(
        "window mode: {} windows of {} frames, {} of {} frames retained",
        windows.len(),
        wcfg.length,
        diff.retained.len(),
        frames.len()
    ));

    let by_id: HashMap<FrameId, &FrameTrace> = frames.iter().map(|f| (f.frame_id, f)).collect();
    let mixtures: HashMap<FrameId, GaussianMixture> =
        diff.retained.iter().map(|id| (*id, by_id[id].proxy_mixture.clone())).collect();
    let counting = is_counting(&frames);
    let frame_step = cfg.grid_step.unwrap_or(if counting { 1.0 } else { 0.05 });
    let step = if counting { frame_step / wcfg.length as f64 } else { frame_step };
    let (lo, hi) = score_span(mixtures.values(), frames.iter().map(|f| f.truth));
    let grid = grid_for(counting, step, lo, hi)?;

    let mut relation = build_window_relation(&windows, &mixtures, &grid, wcfg.variance, cfg.redistribution)?;
    let frame_oracle = SimulatedOracle::new(&frames, cfg.cost_per_frame);
    let oracle = WindowOracle::new(&windows, &frame_oracle, wcfg.sample_fraction, cfg.seed, grid);
    let outcome = run_query(&mut relation, &oracle, &cfg.query_config())?;
    progress(&format!(
        "query done after {} iterations, {} windows cleaned",
        outcome.stats.iterations, outcome.stats.frames_cleaned
    ));

    let truth_by_id: HashMap<FrameId, f64> = frames.iter().map(|f| (f.frame_id, f.truth)).collect();
    let truth = windows
        .iter()
        .map(|w| Ok((w.window_id, window_truth(w, &truth_by_id)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let quality = evaluate(&outcome.answer, &truth, cfg.k)?;

    let mut breakdown = breakdown_from(&outcome.stats, cfg.thres, relation.len());
    breakdown.frames_total = frames.len();
    breakdown.frames_retained = diff.retained.len();
    breakdown.windows = Some(windows.len());
    breakdown.window_sample_invocations = oracle.frame_invocations();
    let scan = (windows.len() * wcfg.length) as u64;
    let report = assemble(cfg, quality, &outcome, oracle.frame_invocations(), scan, breakdown, &grid);
    Ok(ExperimentRun { report, outcome })
}

fn assemble(
    cfg: &ExperimentConfig,
    quality: Quality,
    outcome: &QueryOutcome,
    oracle_invocations: u64,
    scan: u64,
    breakdown: Breakdown,
    grid: &ScoreGrid,
) -> MetricsReport {
    MetricsReport {
        mode: cfg.mode,
        k: cfg.k,
        thres: cfg.thres,
        seed: cfg.seed,
        precision: quality.precision,
        tie_aware_precision: quality.tie_aware_precision,
        rank_distance: quality.rank_distance,
        score_error: quality.score_error,
        confidence: outcome.answer.confidence.unwrap_or(0.0),
        oracle_invocations,
        scan_baseline_invocations: scan,
        speedup: scan as f64 / oracle_invocations.max(1) as f64,
        breakdown,
        answer: answer_scores(&outcome.answer, grid),
    }
}

/// Runs the configured experiment on an already loaded trace.
pub fn run_on_trace(
    cfg: &ExperimentConfig,
    frames: Vec<FrameTrace>,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentRun> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Frame => run_frame(cfg, frames, progress),
        Mode::Window => run_window(cfg, frames, progress),
    }
}

pub fn run_experiment_with(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<MetricsReport> {
    cfg.validate()?;
    let frames = load_trace(cfg)?;
    progress(&format!("loaded {} frames", frames.len()));
    Ok(run_on_trace(cfg, frames, progress)?.report)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    run_experiment_with(cfg, &mut |_| {})
}
