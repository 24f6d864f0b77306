use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::FrameId;
use crate::simulation::trace::FrameTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffConfig {
    pub mse_threshold: f64,
    pub clip_size: usize,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self { mse_threshold: 1e-4, clip_size: 30 }
    }
}

impl DiffConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mse_threshold >= 0.0) || !self.mse_threshold.is_finite() {
            return Err(Error::InvalidParams(format!("MSE threshold {} is invalid", self.mse_threshold)));
        }
        if self.clip_size == 0 {
            return Err(Error::InvalidParams("clip size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffResult {
    /// Retained frames in timestamp order.
    pub retained: Vec<FrameId>,
    /// Every frame mapped to the retained frame that stands in for it.
    pub representative: BTreeMap<FrameId, FrameId>,
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Splits frames into clips of `clip_size` and drops every frame whose feature
/// MSE to the clip's middle frame is below the threshold.
pub fn diff_detect(frames: &[FrameTrace], cfg: &DiffConfig) -> Result<DiffResult> {
    cfg.validate()?;
    let mut retained = Vec::new();
    let mut representative = BTreeMap::new();
    for clip in frames.chunks(cfg.clip_size) {
        let middle = &clip[clip.len() / 2];
        for f in clip {
            let keep = std::ptr::eq(f, middle) || mse(&f.features, &middle.features) >= cfg.mse_threshold;
            if keep {
                retained.push(f.frame_id);
                representative.insert(f.frame_id, f.frame_id);
            } else {
                representative.insert(f.frame_id, middle.frame_id);
            }
        }
    }
    Ok(DiffResult { retained, representative })
}
