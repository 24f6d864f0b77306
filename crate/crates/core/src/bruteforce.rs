//! Exponential-cost reference semantics: explicit possible-world enumeration.
//! Only meant for small relations in tests.

use crate::distribution::Bin;
use crate::error::{Error, Result};
use crate::relation::{FrameId, TopKAnswer, TupleState, UncertainRelation};

pub const MAX_WORLDS: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PossibleWorld {
    /// Score of every frame, ascending by frame id.
    pub assignment: Vec<(FrameId, Bin)>,
    pub probability: f64,
}

impl PossibleWorld {
    pub fn score(&self, frame: FrameId) -> Option<Bin> {
        self.assignment
            .binary_search_by_key(&frame, |&(id, _)| id)
            .ok()
            .map(|i| self.assignment[i].1)
    }
}

/// Odometer over the supports of the uncertain frames.
#[derive(Debug)]
pub struct Worlds {
    frames: Vec<(FrameId, Vec<(Bin, f64)>)>,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for Worlds {
    type Item = PossibleWorld;

    fn next(&mut self) -> Option<PossibleWorld> {
        if self.done {
            return None;
        }
        let mut probability = 1.0;
        let assignment = self
            .frames
            .iter()
            .zip(&self.digits)
            .map(|((id, alts), &d)| {
                probability *= alts[d].1;
                (*id, alts[d].0)
            })
            .collect();
        // advance
        self.done = true;
        for (digit, (_, alts)) in self.digits.iter_mut().zip(&self.frames) {
            *digit += 1;
            if *digit < alts.len() {
                self.done = false;
                break;
            }
            *digit = 0;
        }
        Some(PossibleWorld { assignment, probability })
    }
}

pub fn world_count(rel: &UncertainRelation) -> u128 {
    rel.tuples()
        .iter()
        .map(|t| match &t.state {
            TupleState::Uncertain(d) => d.support_len() as u128,
            TupleState::Certain(_) => 1,
        })
        .fold(1u128, |acc, n| acc.saturating_mul(n))
}

pub fn enumerate_worlds(rel: &UncertainRelation) -> Result<Worlds> {
    let count = world_count(rel);
    if count > MAX_WORLDS {
        return Err(Error::TooManyWorlds(count));
    }
    let frames: Vec<_> = rel
        .tuples()
        .iter()
        .map(|t| match &t.state {
            TupleState::Uncertain(d) => (t.frame_id, d.support().collect()),
            TupleState::Certain(s) => (t.frame_id, vec![(*s, 1.0)]),
        })
        .collect();
    let digits = vec![0; frames.len()];
    Ok(Worlds { frames, digits, done: false })
}

/// Probability that `members` are exactly the Top-|members| frames: every other
/// frame scores at most the lowest member score (ties allowed). Members may be
/// uncertain, which lets a hypothetical answer be scored before cleaning.
pub fn bf_topk_prob_members(rel: &UncertainRelation, members: &[FrameId]) -> Result<f64> {
    for &m in members {
        if rel.tuple(m).is_none() {
            return Err(Error::UnknownFrame(m));
        }
    }
    let mut total = crate::numeric::CompensatedSum::new();
    for world in enumerate_worlds(rel)? {
        let floor = members.iter().map(|&m| world.score(m).unwrap_or(Bin::MIN)).min().unwrap_or(Bin::MIN);
        let is_topk = world
            .assignment
            .iter()
            .filter(|(id, _)| !members.contains(id))
            .all(|&(_, s)| s <= floor);
        if is_topk {
            total.add(world.probability);
        }
    }
    Ok(total.value())
}

pub fn bf_topk_prob(rel: &UncertainRelation, answer: &TopKAnswer) -> Result<f64> {
    bf_topk_prob_members(rel, &answer.ids())
}

/// `Σ_s Pr(S_f = s) · p̂'` where `p̂'` is the enumerated confidence of the
/// recomputed certain Top-K after cleaning `frame` to `s`.
pub fn bf_expected_conf(rel: &UncertainRelation, answer: &TopKAnswer, frame: FrameId) -> Result<f64> {
    let dist = rel.dist(frame).ok_or(Error::NotUncertain(frame))?;
    let k = answer.k();
    let mut total = crate::numeric::CompensatedSum::new();
    for (s, p) in dist.support() {
        let mut next = rel.clone();
        next.clean(frame, s)?;
        let next_answer = next.topk_certain(k)?;
        total.add(p * bf_topk_prob(&next, &next_answer)?);
    }
    Ok(total.value())
}
