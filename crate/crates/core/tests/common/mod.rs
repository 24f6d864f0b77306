#![allow(dead_code)]

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use utopk::distribution::{Bin, DiscreteScoreDist, ScoreGrid};
use utopk::relation::{FrameId, RelationEntry, TopKAnswer, UncertainRelation};

pub struct Shape {
    pub max_frames: usize,
    pub max_support: usize,
    pub bins: usize,
    /// Chance that a frame starts certain.
    pub certain_prob: f64,
}

pub const SMALL: Shape = Shape { max_frames: 8, max_support: 4, bins: 6, certain_prob: 0.3 };

pub fn random_dist<R: Rng>(rng: &mut R, grid: ScoreGrid, max_support: usize) -> DiscreteScoreDist {
    let mut bins: Vec<Bin> = (0..grid.bins as Bin).collect();
    bins.shuffle(rng);
    let n = rng.random_range(1..=max_support.min(grid.bins));
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let pairs: Vec<(Bin, f64)> = bins[..n].iter().zip(&weights).map(|(&b, &w)| (b, w / total)).collect();
    DiscreteScoreDist::from_pairs(grid, &pairs).expect("normalized weights")
}

pub fn random_relation<R: Rng>(rng: &mut R, shape: &Shape) -> UncertainRelation {
    let grid = ScoreGrid::counting(shape.bins).unwrap();
    let n = rng.random_range(1..=shape.max_frames);
    let entries = (0..n as FrameId)
        .map(|id| {
            if rng.random_bool(shape.certain_prob) {
                RelationEntry::certain(id, id as i64, rng.random_range(0..shape.bins as Bin))
            } else {
                RelationEntry::uncertain(id, id as i64, random_dist(rng, grid, shape.max_support))
            }
        })
        .collect();
    UncertainRelation::build(entries, grid).unwrap()
}

/// Cleans `count` random uncertain frames; scores may fall outside the prior support.
pub fn clean_random<R: Rng>(rng: &mut R, rel: &mut UncertainRelation, count: usize) {
    let bins = rel.grid().bins as Bin;
    for _ in 0..count {
        let ids: Vec<FrameId> = rel.uncertain().map(|(id, _)| id).collect();
        let Some(&id) = ids.choose(rng) else { return };
        let score = if rng.random_bool(0.8) {
            let d = rel.dist(id).unwrap();
            let support: Vec<Bin> = d.support().map(|(b, _)| b).collect();
            *support.choose(rng).unwrap()
        } else {
            rng.random_range(0..bins)
        };
        rel.clean(id, score).unwrap();
    }
}

/// A relation with at least one certain and one uncertain frame, plus a valid K.
pub fn random_state<R: Rng>(rng: &mut R, shape: &Shape) -> (UncertainRelation, usize) {
    loop {
        let mut rel = random_relation(rng, shape);
        if rel.len() < 2 {
            continue;
        }
        if rel.certain_len() == 0 {
            clean_random(rng, &mut rel, 1);
        }
        let extra = rng.random_range(0..=rel.uncertain_len().saturating_sub(1));
        clean_random(rng, &mut rel, extra);
        if rel.uncertain_len() == 0 {
            continue;
        }
        let k = rng.random_range(1..=rel.certain_len());
        return (rel, k);
    }
}

pub fn answer(rel: &UncertainRelation, k: usize) -> TopKAnswer {
    rel.topk_certain(k).unwrap()
}
