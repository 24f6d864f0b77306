//! Probabilistic Top-K over uncertain score relations, cleaned by an
//! expensive oracle until the answer's confidence reaches a threshold.
//!
//! Each frame carries a discrete score distribution (an x-tuple) derived from a
//! proxy model. The engine repeatedly asks the oracle for the exact scores of
//! the frames that most raise the expected confidence of the certain Top-K.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bruteforce;
pub mod distribution;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod numeric;
pub mod relation;
pub mod simulation;
pub mod window;

pub use distribution::{quantize, Bin, Component, DiscreteScoreDist, GaussianMixture, ScoreGrid};
pub use engine::{
    expected_conf, run_query, select_candidates, select_exhaustive, topk_prob, CandidateOrder, ExpectationView,
    QueryConfig, QueryOutcome, QueryStats,
};
pub use error::{Error, Result};
pub use experiment::{evaluate, run_experiment, ExperimentConfig, MetricsReport, Mode};
pub use relation::{FrameId, RelationEntry, TopKAnswer, UncertainRelation};
pub use simulation::{Oracle, SimulatedOracle};
