use crate::distribution::{Component, GaussianMixture};
use crate::error::Result;
use crate::simulation::trace::FrameTrace;

/// Cheap model that predicts a score distribution for a frame.
pub trait ProxyScorer {
    fn predict(&self, frame: &FrameTrace) -> Result<GaussianMixture>;
}

/// Replays the mixture recorded in the trace.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceProxy;

impl ProxyScorer for TraceProxy {
    fn predict(&self, frame: &FrameTrace) -> Result<GaussianMixture> {
        Ok(frame.proxy_mixture.clone())
    }
}

/// Distorts the recorded mixture: shifts every mean and scales every stddev.
#[derive(Debug, Clone, Copy)]
pub struct DistortedProxy {
    pub shift: f64,
    pub sd_scale: f64,
}

impl ProxyScorer for DistortedProxy {
    fn predict(&self, frame: &FrameTrace) -> Result<GaussianMixture> {
        GaussianMixture::new(
            frame
                .proxy_mixture
                .components()
                .iter()
                .map(|c| Component::new(c.weight, c.mean + self.shift, c.sd * self.sd_scale))
                .collect(),
        )
    }
}
