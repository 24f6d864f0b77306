//! Desk-scale stand-ins for the video stack: synthetic traces, a difference
//! detector over feature vectors, proxy scorers and a cost-accounted oracle.

mod diff;
mod oracle;
mod proxy;
mod trace;

pub use diff::{diff_detect, mse, DiffConfig, DiffResult};
pub use oracle::{Oracle, SimulatedOracle};
pub use proxy::{DistortedProxy, ProxyScorer, TraceProxy};
pub use trace::{generate_trace, read_trace, write_trace, FrameTrace, TraceParams};
