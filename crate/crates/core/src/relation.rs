//! The uncertain relation: x-tuples partitioned into certain and uncertain
//! frames, the frozen joint log-CDF over the initially uncertain frames, and
//! the cached prior rows of frames cleaned since.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::distribution::{Bin, DiscreteScoreDist, ScoreGrid};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

pub type FrameId = u64;

#[derive(Debug, Clone, PartialEq)]
pub enum TupleState {
    Uncertain(DiscreteScoreDist),
    Certain(Bin),
}

#[derive(Debug, Clone, PartialEq)]
pub struct XTuple {
    pub frame_id: FrameId,
    pub timestamp: i64,
    pub state: TupleState,
}

impl XTuple {
    pub fn is_certain(&self) -> bool {
        matches!(self.state, TupleState::Certain(_))
    }
}

/// Input row for [`UncertainRelation::build`].
#[derive(Debug, Clone)]
pub struct RelationEntry {
    pub frame_id: FrameId,
    pub timestamp: i64,
    pub state: TupleState,
}

impl RelationEntry {
    pub fn uncertain(frame_id: FrameId, timestamp: i64, dist: DiscreteScoreDist) -> Self {
        Self { frame_id, timestamp, state: TupleState::Uncertain(dist) }
    }

    pub fn certain(frame_id: FrameId, timestamp: i64, score: Bin) -> Self {
        Self { frame_id, timestamp, state: TupleState::Certain(score) }
    }
}

/// `ln F_f(t)` for a frame that was uncertain at build time and has since been cleaned.
#[derive(Debug, Clone)]
struct CleanedPrior {
    lo: Bin,
    /// `ln F_f(lo + i)` for `lo + i` below the prior's top bin.
    log_cdf: Vec<f64>,
}

impl CleanedPrior {
    fn new(prior: &DiscreteScoreDist) -> Self {
        let lo = prior.min_bin();
        let log_cdf = (lo..prior.max_bin()).map(|t| prior.cdf(t).ln()).collect();
        Self { lo, log_cdf }
    }

    fn top(&self) -> Bin {
        self.lo + self.log_cdf.len() as Bin
    }

    fn ln_cdf(&self, t: Bin) -> f64 {
        if t < self.lo {
            f64::NEG_INFINITY
        } else if t >= self.top() {
            0.0
        } else {
            self.log_cdf[(t - self.lo) as usize]
        }
    }

    /// `F_f(t) < 1`.
    fn below_one(&self, t: Bin) -> bool {
        t < self.top()
    }
}

/// Instrumentation shared by readers of a relation.
#[derive(Debug, Default)]
pub struct RelationCounters {
    log_lookups: AtomicU64,
    direct_fallbacks: AtomicU64,
}

impl RelationCounters {
    pub fn log_lookups(&self) -> u64 {
        self.log_lookups.load(Ordering::Relaxed)
    }

    pub fn direct_fallbacks(&self) -> u64 {
        self.direct_fallbacks.load(Ordering::Relaxed)
    }

    fn lookup(&self, n: u64) {
        self.log_lookups.fetch_add(n, Ordering::Relaxed);
    }

    fn fallback(&self) {
        self.direct_fallbacks.fetch_add(1, Ordering::Relaxed);
    }
}

impl Clone for RelationCounters {
    fn clone(&self) -> Self {
        Self {
            log_lookups: AtomicU64::new(self.log_lookups()),
            direct_fallbacks: AtomicU64::new(self.direct_fallbacks()),
        }
    }
}

/// Ordered certain Top-K result with its threshold scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKAnswer {
    /// `(frame_id, score bin)` by descending score, then ascending frame id.
    pub members: Vec<(FrameId, Bin)>,
    /// Score of the rank-K member.
    pub threshold: Bin,
    /// Score of the rank-(K-1) member; `None` stands for +∞ when K = 1.
    pub penultimate: Option<Bin>,
    pub confidence: Option<f64>,
}

impl TopKAnswer {
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn ids(&self) -> Vec<FrameId> {
        self.members.iter().map(|&(id, _)| id).collect()
    }
}

#[derive(Debug, Clone)]
pub struct UncertainRelation {
    grid: ScoreGrid,
    /// Sorted by frame id.
    tuples: Vec<XTuple>,
    index: HashMap<FrameId, usize>,
    /// `Σ_{f ∈ D_0^u} ln F_f(t)` for every grid bin.
    log_h: Vec<f64>,
    /// Number of frames in `D_0^u` with `F_f(t) < 1`.
    h_below_one: Vec<u32>,
    initially_uncertain: usize,
    cleaned: Vec<CleanedPrior>,
    certain_rank: BTreeSet<(Reverse<Bin>, FrameId)>,
    uncertain: usize,
    counters: RelationCounters,
}

impl UncertainRelation {
    pub fn build(entries: Vec<RelationEntry>, grid: ScoreGrid) -> Result<Self> {
        let mut entries = entries;
        entries.sort_by_key(|e| e.frame_id);
        for pair in entries.windows(2) {
            if pair[0].frame_id == pair[1].frame_id {
                return Err(Error::DuplicateFrame(pair[0].frame_id));
            }
        }

        let bins = grid.bins;
        let mut acc = vec![CompensatedSum::new(); bins];
        let mut top_counts = vec![0u32; bins + 1];
        let mut zero_below: Bin = 0;
        let mut initially_uncertain = 0;
        let mut certain_rank = BTreeSet::new();

        for e in &entries {
            match &e.state {
                TupleState::Uncertain(dist) => {
                    if dist.grid() != &grid {
                        return Err(Error::GridMismatch(e.frame_id));
                    }
                    initially_uncertain += 1;
                    zero_below = zero_below.max(dist.min_bin());
                    for t in dist.min_bin()..dist.max_bin() {
                        acc[t as usize].add(dist.cdf(t).ln());
                    }
                    top_counts[dist.max_bin() as usize] += 1;
                }
                TupleState::Certain(score) => {
                    certain_rank.insert((Reverse(*score), e.frame_id));
                }
            }
        }

        let mut log_h: Vec<f64> = acc.iter().map(CompensatedSum::value).collect();
        for v in log_h.iter_mut().take(zero_below as usize) {
            *v = f64::NEG_INFINITY;
        }
        // frames whose top bin lies above t
        let mut h_below_one = vec![0u32; bins];
        let mut running = 0u32;
        for t in (0..bins).rev() {
            running += top_counts[t + 1];
            h_below_one[t] = running;
        }

        let index = entries.iter().enumerate().map(|(i, e)| (e.frame_id, i)).collect();
        let tuples = entries
            .into_iter()
            .map(|e| XTuple { frame_id: e.frame_id, timestamp: e.timestamp, state: e.state })
            .collect();

        Ok(Self {
            grid,
            tuples,
            index,
            log_h,
            h_below_one,
            initially_uncertain,
            cleaned: Vec::new(),
            certain_rank,
            uncertain: initially_uncertain,
            counters: RelationCounters::default(),
        })
    }

    pub fn grid(&self) -> &ScoreGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn certain_len(&self) -> usize {
        self.certain_rank.len()
    }

    pub fn uncertain_len(&self) -> usize {
        self.uncertain
    }

    /// `|D_c ∩ D_0^u|`.
    pub fn cleaned_len(&self) -> usize {
        self.cleaned.len()
    }

    pub fn counters(&self) -> &RelationCounters {
        &self.counters
    }

    pub fn tuples(&self) -> &[XTuple] {
        &self.tuples
    }

    pub fn tuple(&self, frame_id: FrameId) -> Option<&XTuple> {
        self.index.get(&frame_id).map(|&i| &self.tuples[i])
    }

    /// Distribution of an uncertain frame.
    pub fn dist(&self, frame_id: FrameId) -> Option<&DiscreteScoreDist> {
        match self.tuple(frame_id)?.state {
            TupleState::Uncertain(ref d) => Some(d),
            TupleState::Certain(_) => None,
        }
    }

    pub fn certain_score(&self, frame_id: FrameId) -> Option<Bin> {
        match self.tuple(frame_id)?.state {
            TupleState::Certain(s) => Some(s),
            TupleState::Uncertain(_) => None,
        }
    }

    pub fn is_uncertain(&self, frame_id: FrameId) -> bool {
        self.dist(frame_id).is_some()
    }

    /// Uncertain frames in ascending frame-id order.
    pub fn uncertain(&self) -> impl Iterator<Item = (FrameId, &DiscreteScoreDist)> + '_ {
        self.tuples.iter().filter_map(|t| match t.state {
            TupleState::Uncertain(ref d) => Some((t.frame_id, d)),
            TupleState::Certain(_) => None,
        })
    }

    /// Certain frames by descending score, then ascending frame id.
    pub fn certain_ranked(&self) -> impl Iterator<Item = (FrameId, Bin)> + '_ {
        self.certain_rank.iter().map(|&(Reverse(s), id)| (id, s))
    }

    /// Uncertain frames by descending distribution mean, ties by frame id.
    pub fn bootstrap_order(&self) -> Vec<FrameId> {
        let mut order: Vec<_> = self.uncertain().map(|(id, d)| (d.mean_bin(), id)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        order.into_iter().map(|(_, id)| id).collect()
    }

    /// Marks `frame_id` certain with oracle score `true_score`. The score may lie
    /// outside the frame's prior support.
    pub fn clean(&mut self, frame_id: FrameId, true_score: Bin) -> Result<()> {
        let &pos = self.index.get(&frame_id).ok_or(Error::UnknownFrame(frame_id))?;
        let tuple = &mut self.tuples[pos];
        let prior = match std::mem::replace(&mut tuple.state, TupleState::Certain(true_score)) {
            TupleState::Uncertain(d) => d,
            TupleState::Certain(prev) => {
                tuple.state = TupleState::Certain(prev);
                return Err(Error::AlreadyCertain(frame_id));
            }
        };
        self.cleaned.push(CleanedPrior::new(&prior));
        self.certain_rank.insert((Reverse(true_score), frame_id));
        self.uncertain -= 1;
        Ok(())
    }

    pub fn topk_certain(&self, k: usize) -> Result<TopKAnswer> {
        if k == 0 {
            return Err(Error::InvalidParams("K must be at least 1".into()));
        }
        if self.certain_len() < k {
            return Err(Error::InsufficientCertain { needed: k, available: self.certain_len() });
        }
        let members: Vec<_> = self.certain_ranked().take(k).collect();
        let threshold = members[k - 1].1;
        let penultimate = (k >= 2).then(|| members[k - 2].1);
        Ok(TopKAnswer { members, threshold, penultimate, confidence: None })
    }

    /// Frozen `ln H(t)` over the initially uncertain frames.
    pub fn log_h(&self, t: Bin) -> f64 {
        if self.initially_uncertain == 0 || t >= self.grid.max_bin() {
            0.0
        } else if t < 0 {
            f64::NEG_INFINITY
        } else {
            self.log_h[t as usize]
        }
    }

    fn h_below_one(&self, t: Bin) -> u32 {
        if self.initially_uncertain == 0 || t >= self.grid.max_bin() {
            0
        } else if t < 0 {
            self.initially_uncertain as u32
        } else {
            self.h_below_one[t as usize]
        }
    }

    /// `ln Π_{f ∈ D_u} F_f(t)` from the frozen joint CDF divided by the cleaned
    /// frames' priors, falling back to the direct product when a cleaned prior has
    /// `F_f(t) = 0`. Returns exactly 0 when every uncertain frame has `F_f(t) = 1`.
    pub fn log_joint_uncertain_cdf(&self, t: Bin) -> f64 {
        if self.uncertain == 0 {
            return 0.0;
        }
        self.counters.lookup(1);
        let log_h = self.log_h(t);
        let mut below_one = self.h_below_one(t);
        let mut denom = CompensatedSum::new();
        for c in &self.cleaned {
            self.counters.lookup(1);
            let v = c.ln_cdf(t);
            if v == f64::NEG_INFINITY {
                self.counters.fallback();
                return self.log_joint_direct(t, None);
            }
            if c.below_one(t) {
                below_one -= 1;
            }
            denom.add(v);
        }
        if below_one == 0 {
            return 0.0;
        }
        if log_h == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        (log_h - denom.value()).min(0.0)
    }

    /// `ln Π F_f(t)` over the current uncertain frames, optionally skipping one.
    pub fn log_joint_direct(&self, t: Bin, skip: Option<FrameId>) -> f64 {
        let mut acc = CompensatedSum::new();
        for (id, d) in self.uncertain() {
            if Some(id) == skip {
                continue;
            }
            let f = d.cdf(t);
            if f == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc.add(f.ln());
        }
        acc.value().min(0.0)
    }
}
