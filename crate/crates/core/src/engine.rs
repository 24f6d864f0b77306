//! Phase-2 query processing: confidence of the certain Top-K, expected
//! confidence after cleaning one more frame, bound-pruned candidate selection
//! and the oracle-in-the-loop cleaning loop.
//!
//! All probabilities that can underflow (joint CDFs over tens of thousands of
//! frames) are carried as natural logarithms and only exponentiated at the API
//! surface.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::distribution::Bin;
use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sum_exp};
use crate::relation::{FrameId, TopKAnswer, UncertainRelation};
use crate::simulation::Oracle;

/// Relative slack on the early-stop comparison so rounding in the bound never
/// prunes a frame whose exact value ties the current b-th best.
const STOP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryConfig {
    pub k: usize,
    pub thres: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_resort_period")]
    pub resort_period: u64,
    #[serde(default = "default_resort_warmup")]
    pub resort_warmup_iters: u64,
}

fn default_batch() -> usize {
    8
}

fn default_resort_period() -> u64 {
    10
}

fn default_resort_warmup() -> u64 {
    100
}

impl QueryConfig {
    pub fn new(k: usize, thres: f64) -> Self {
        Self {
            k,
            thres,
            batch: default_batch(),
            resort_period: default_resort_period(),
            resort_warmup_iters: default_resort_warmup(),
        }
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("K must be at least 1".into()));
        }
        if !(self.thres > 0.0 && self.thres <= 1.0) {
            return Err(Error::InvalidParams(format!("thres must lie in (0, 1], got {}", self.thres)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParams("batch size must be at least 1".into()));
        }
        if self.resort_period == 0 {
            return Err(Error::InvalidParams("re-sort period must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    /// Selection rounds, not counting bootstrap.
    pub iterations: u64,
    pub frames_cleaned: u64,
    pub bootstrap_cleaned: u64,
    /// Frames sent to the oracle by this query.
    pub oracle_invocations: u64,
    pub oracle_batches: u64,
    pub expectation_evaluations: u64,
    pub eq2_fallbacks: u64,
    pub order_rebuilds: u64,
    /// `(iteration, confidence)` at every confidence check.
    pub confidence_trajectory: Vec<(u64, f64)>,
}

/// `ln p̂` for `answer` on the current state of `rel`.
pub fn log_topk_prob(rel: &UncertainRelation, answer: &TopKAnswer) -> f64 {
    rel.log_joint_uncertain_cdf(answer.threshold)
}

/// Probability that `answer` is the exact Top-K: every uncertain frame scores at
/// most the threshold score (ties allowed).
pub fn topk_prob(rel: &UncertainRelation, answer: &TopKAnswer) -> f64 {
    log_topk_prob(rel, answer).exp().clamp(0.0, 1.0)
}

/// Direct product over the uncertain frames, bypassing the frozen joint CDF.
pub fn topk_prob_direct(rel: &UncertainRelation, answer: &TopKAnswer) -> f64 {
    rel.log_joint_direct(answer.threshold, None).exp().clamp(0.0, 1.0)
}

/// Per-iteration quantities shared by every expected-confidence evaluation.
#[derive(Debug)]
pub struct ExpectationView<'a> {
    rel: &'a UncertainRelation,
    threshold: Bin,
    penultimate: Option<Bin>,
    log_p: f64,
    /// `ln γ = ln Π_{D_u} F(S_p)`; 0 when S_p is +∞.
    log_gamma: f64,
    /// `ln Π_{D_u} F(s)` for `s` in `(threshold, threshold + len]`.
    log_joint: Vec<f64>,
}

impl<'a> ExpectationView<'a> {
    pub fn new(rel: &'a UncertainRelation, answer: &TopKAnswer) -> Self {
        let threshold = answer.threshold;
        let penultimate = answer.penultimate;
        let log_p = log_topk_prob(rel, answer);
        let log_gamma = penultimate.map_or(0.0, |p| rel.log_joint_uncertain_cdf(p));
        // beyond the top uncertain bin no frame has mass
        let top = rel.uncertain().map(|(_, d)| d.max_bin()).max().unwrap_or(threshold);
        let upper = penultimate.map_or(top, |p| p.min(top));
        let log_joint = (threshold + 1..=upper).map(|s| rel.log_joint_uncertain_cdf(s)).collect();
        Self { rel, threshold, penultimate, log_p, log_gamma, log_joint }
    }

    pub fn relation(&self) -> &'a UncertainRelation {
        self.rel
    }

    pub fn log_confidence(&self) -> f64 {
        self.log_p
    }

    pub fn confidence(&self) -> f64 {
        self.log_p.exp().clamp(0.0, 1.0)
    }

    pub fn log_gamma(&self) -> f64 {
        self.log_gamma
    }

    fn joint_at(&self, s: Bin) -> f64 {
        let i = (s - self.threshold - 1) as usize;
        match self.log_joint.get(i) {
            Some(&v) => v,
            None => self.rel.log_joint_uncertain_cdf(s),
        }
    }

    /// `ln E[X_f]`: the expected log-free confidence after cleaning `frame`.
    pub fn log_expected_conf(&self, frame: FrameId) -> Result<f64> {
        let dist = self.rel.dist(frame).ok_or(Error::NotUncertain(frame))?;
        let mut terms = Vec::with_capacity(8);
        // s <= S_k: the answer keeps its threshold, f's own factor drops out
        terms.push(self.log_p);
        for (s, p) in dist.support() {
            if s <= self.threshold {
                continue;
            }
            if self.penultimate.is_some_and(|sp| s > sp) {
                break;
            }
            // F_f(s) >= Pr(S_f = s) > 0 here
            terms.push(p.ln() + self.joint_at(s) - dist.cdf(s).ln());
        }
        if let Some(sp) = self.penultimate {
            let tail = dist.sf(sp);
            if tail > 0.0 {
                let f_sp = dist.cdf(sp);
                let rest = if f_sp > 0.0 {
                    (self.log_gamma - f_sp.ln()).min(0.0)
                } else {
                    self.rel.log_joint_direct(sp, Some(frame))
                };
                terms.push(tail.ln() + rest);
            }
        }
        Ok(log_sum_exp(&terms).min(0.0))
    }

    pub fn expected_conf(&self, frame: FrameId) -> Result<f64> {
        Ok(self.log_expected_conf(frame)?.exp().clamp(0.0, 1.0))
    }

    /// `ln U(X_f) = ln(p̂ + γ ψ)` for a sort factor given as `ln ψ`.
    pub fn log_upper_bound(&self, log_psi: f64) -> f64 {
        if log_psi == f64::INFINITY {
            return f64::INFINITY;
        }
        log_add_exp(self.log_p, self.log_gamma + log_psi)
    }
}

/// Expected confidence of the next iteration if `frame` were cleaned.
pub fn expected_conf(rel: &UncertainRelation, answer: &TopKAnswer, frame: FrameId) -> Result<f64> {
    ExpectationView::new(rel, answer).expected_conf(frame)
}

/// Uncertain frames sorted by descending sort factor `ψ = (1 - F_f(S_k)) / F_f(S_p)`
/// at a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOrder {
    pub snapshot_iteration: u64,
    pub threshold: Bin,
    pub penultimate: Option<Bin>,
    /// `(frame_id, ln ψ)`, descending by ψ, ties by frame id.
    entries: Vec<(FrameId, f64)>,
}

impl CandidateOrder {
    pub fn build(rel: &UncertainRelation, answer: &TopKAnswer, iteration: u64) -> Self {
        let mut entries: Vec<_> = rel
            .uncertain()
            .map(|(id, d)| {
                let denom = answer.penultimate.map_or(1.0, |sp| d.cdf(sp));
                let log_psi = if denom == 0.0 {
                    f64::INFINITY
                } else {
                    d.sf(answer.threshold).ln() - denom.ln()
                };
                (id, log_psi)
            })
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self { snapshot_iteration: iteration, threshold: answer.threshold, penultimate: answer.penultimate, entries }
    }

    pub fn entries(&self) -> &[(FrameId, f64)] {
        &self.entries
    }

    /// `(frame_id, ψ)` pairs.
    pub fn psi(&self) -> impl Iterator<Item = (FrameId, f64)> + '_ {
        self.entries.iter().map(|&(id, l)| (id, l.exp()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen frames, best first.
    pub frames: Vec<FrameId>,
    /// `ln E[X_f]` of each chosen frame.
    pub log_values: Vec<f64>,
    pub evaluations: u64,
}

/// Candidate key `(ln E[X_f], mean bin, frame id)`.
type Scored = (f64, f64, FrameId);

/// Higher expectation first. Equal expectations, which happen whenever the
/// confidence is stuck at zero, fall back to the bootstrap order.
fn rank(a: &Scored, b: &Scored) -> Ordering {
    b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2))
}

fn push_best(best: &mut Vec<Scored>, item: Scored, b: usize) {
    let pos = best.partition_point(|x| rank(x, &item) == Ordering::Less);
    if pos < b {
        best.insert(pos, item);
        best.truncate(b);
    }
}

fn score(view: &ExpectationView<'_>, id: FrameId) -> Result<Scored> {
    let mean = view.relation().dist(id).ok_or(Error::NotUncertain(id))?.mean_bin();
    Ok((view.log_expected_conf(id)?, mean, id))
}

fn into_selection(best: Vec<Scored>, evaluations: u64) -> Selection {
    Selection {
        frames: best.iter().map(|s| s.2).collect(),
        log_values: best.iter().map(|s| s.0).collect(),
        evaluations,
    }
}

/// The `b` uncertain frames with the highest expected confidence, scanning
/// `order` and stopping once the next frame's upper bound falls below the
/// b-th best exact value.
pub fn select_candidates(view: &ExpectationView<'_>, order: &CandidateOrder, b: usize) -> Result<Selection> {
    let b = b.max(1);
    let rel = view.relation();
    let mut best: Vec<Scored> = Vec::with_capacity(b + 1);
    let mut evaluations = 0;
    for &(id, log_psi) in &order.entries {
        if !rel.is_uncertain(id) {
            continue;
        }
        if best.len() == b {
            let floor = best[b - 1].0;
            let bound = view.log_upper_bound(log_psi);
            if bound + STOP_SLACK < floor {
                break;
            }
        }
        evaluations += 1;
        push_best(&mut best, score(view, id)?, b);
    }
    Ok(into_selection(best, evaluations))
}

/// Reference selection that evaluates every uncertain frame.
pub fn select_exhaustive(view: &ExpectationView<'_>, b: usize) -> Result<Selection> {
    let b = b.max(1);
    let mut all = view.relation().uncertain().map(|(id, _)| score(view, id)).collect::<Result<Vec<_>>>()?;
    let evaluations = all.len() as u64;
    all.sort_by(rank);
    all.truncate(b);
    Ok(into_selection(all, evaluations))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub answer: TopKAnswer,
    pub stats: QueryStats,
}

fn clean_batch<O: Oracle + ?Sized>(
    rel: &mut UncertainRelation,
    oracle: &O,
    frames: &[FrameId],
    stats: &mut QueryStats,
) -> Result<()> {
    if frames.is_empty() {
        return Ok(());
    }
    let scores = oracle.score(frames)?;
    if scores.len() != frames.len() {
        return Err(Error::Oracle(format!("asked for {} scores, got {}", frames.len(), scores.len())));
    }
    stats.oracle_invocations += frames.len() as u64;
    stats.oracle_batches += 1;
    for (&id, &score) in frames.iter().zip(&scores) {
        if !score.is_finite() {
            return Err(Error::Oracle(format!("non-finite score for frame {id}")));
        }
        let bin = rel.grid().bin_of(score);
        rel.clean(id, bin)?;
        stats.frames_cleaned += 1;
    }
    Ok(())
}

/// Cleans frames chosen by expected confidence until the certain Top-K reaches
/// `cfg.thres` confidence.
pub fn run_query<O: Oracle + ?Sized>(
    rel: &mut UncertainRelation,
    oracle: &O,
    cfg: &QueryConfig,
) -> Result<QueryOutcome> {
    cfg.validate()?;
    if rel.len() < cfg.k {
        return Err(Error::InsufficientFrames { k: cfg.k, available: rel.len() });
    }
    let mut stats = QueryStats::default();
    let fallbacks_before = rel.counters().direct_fallbacks();

    if rel.certain_len() < cfg.k {
        let needed = cfg.k - rel.certain_len();
        let picks: Vec<_> = rel.bootstrap_order().into_iter().take(needed).collect();
        clean_batch(rel, oracle, &picks, &mut stats)?;
        stats.bootstrap_cleaned = picks.len() as u64;
    }

    let mut order: Option<CandidateOrder> = None;
    let mut iteration = 0u64;
    loop {
        let mut answer = rel.topk_certain(cfg.k)?;
        let view = ExpectationView::new(rel, &answer);
        let confidence = view.confidence();
        stats.confidence_trajectory.push((iteration, confidence));
        if confidence >= cfg.thres || rel.uncertain_len() == 0 {
            answer.confidence = Some(confidence);
            stats.iterations = iteration;
            stats.eq2_fallbacks = rel.counters().direct_fallbacks() - fallbacks_before;
            return Ok(QueryOutcome { answer, stats });
        }

        let rebuild = match &order {
            None => true,
            Some(_) if iteration < cfg.resort_warmup_iters => iteration.is_multiple_of(cfg.resort_period),
            Some(o) => o.threshold != answer.threshold || o.penultimate != answer.penultimate,
        };
        if rebuild {
            order = Some(CandidateOrder::build(rel, &answer, iteration));
            stats.order_rebuilds += 1;
        }
        let order_ref = order.as_ref().expect("order built above");
        let selection = select_candidates(&view, order_ref, cfg.batch)?;
        stats.expectation_evaluations += selection.evaluations;
        if selection.frames.is_empty() {
            return Err(Error::Oracle("no candidate frame left to clean".into()));
        }
        let ahead: Vec<_> = order_ref
            .entries()
            .iter()
            .map(|&(id, _)| id)
            .filter(|id| rel.is_uncertain(*id) && !selection.frames.contains(id))
            .take(cfg.batch)
            .collect();
        drop(view);
        oracle.prefetch(&ahead);
        clean_batch(rel, oracle, &selection.frames, &mut stats)?;
        iteration += 1;
    }
}
