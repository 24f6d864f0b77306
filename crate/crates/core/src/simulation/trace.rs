use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::distribution::{Component, GaussianMixture, TRUNCATION_SIGMAS};
use crate::error::{Error, Result};
use crate::relation::FrameId;

/// One simulated frame. Field order is the JSON-lines wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameTrace {
    pub frame_id: FrameId,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    /// Hidden ground-truth score, only revealed through an oracle.
    pub truth: f64,
    #[serde(rename = "mixture")]
    pub proxy_mixture: GaussianMixture,
    pub features: Vec<f64>,
}

/// Parameters of the synthetic score process and proxy noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceParams {
    pub seed: u64,
    pub frames: usize,
    /// Typical score level of an ordinary scene.
    pub base_level: f64,
    /// Log-normal spread of ordinary scene levels.
    pub level_spread: f64,
    pub mean_segment_len: f64,
    /// Probability that a scene is a burst.
    pub burst_prob: f64,
    pub burst_scale: f64,
    /// Pareto shape of burst heights; smaller is heavier.
    pub burst_tail: f64,
    pub burst_len_factor: f64,
    pub proxy_sd: f64,
    /// Proxy stddev grows by this fraction per unit of level.
    pub proxy_sd_growth: f64,
    pub components: usize,
    /// Truth is drawn from the emitted mixture when true.
    pub calibrated: bool,
    /// Additive bias on truth when not calibrated.
    pub bias: f64,
    pub outlier_prob: f64,
    /// Round truth to non-negative integers.
    pub counting: bool,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub feature_scale: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 10_000,
            base_level: 3.0,
            level_spread: 0.35,
            mean_segment_len: 40.0,
            burst_prob: 0.03,
            burst_scale: 5.0,
            burst_tail: 1.8,
            burst_len_factor: 0.5,
            proxy_sd: 0.6,
            proxy_sd_growth: 0.04,
            components: 2,
            calibrated: true,
            bias: 0.0,
            outlier_prob: 0.0,
            counting: true,
            feature_dim: 4,
            feature_noise: 0.002,
            feature_scale: 0.1,
        }
    }
}

impl TraceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.into()));
        if self.frames == 0 {
            return bad("trace needs at least one frame");
        }
        if !(self.base_level >= 0.0) || !(self.level_spread >= 0.0) {
            return bad("base level and spread must be non-negative");
        }
        if !(self.mean_segment_len >= 1.0) {
            return bad("mean segment length must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.burst_prob) || !(0.0..=1.0).contains(&self.outlier_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.burst_tail > 0.0) || !(self.burst_scale >= 0.0) || !(self.burst_len_factor > 0.0) {
            return bad("burst parameters must be positive");
        }
        if !(self.proxy_sd > 0.0) || !(self.proxy_sd_growth >= 0.0) {
            return bad("proxy stddev must be positive");
        }
        if self.components == 0 || self.feature_dim == 0 {
            return bad("need at least one component and one feature");
        }
        if !(self.feature_noise >= 0.0) || !(self.feature_scale > 0.0) || !self.bias.is_finite() {
            return bad("feature noise, scale and bias must be finite");
        }
        Ok(())
    }
}

struct Scene {
    level: f64,
    remaining: usize,
    anchor: Vec<f64>,
}

fn mixture_at(level: f64, p: &TraceParams, rng: &mut ChaCha8Rng) -> GaussianMixture {
    let sd = p.proxy_sd * (1.0 + p.proxy_sd_growth * level);
    let jitter = Normal::new(0.0, 0.5 * sd).expect("positive sd");
    let raw: Vec<f64> = (0..p.components).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut comps: Vec<Component> = raw
        .iter()
        .map(|w| Component::new(w / total, level + jitter.sample(rng), sd * rng.random_range(0.8..1.25)))
        .collect();
    let head: f64 = comps[..comps.len() - 1].iter().map(|c| c.weight).sum();
    let last = comps.len() - 1;
    comps[last].weight = 1.0 - head;
    GaussianMixture::new(comps).expect("generator emits valid mixtures")
}

/// Draws from the mixture restricted to each component's 3σ interval.
fn sample_truncated(mix: &GaussianMixture, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let comps = mix.components();
    let mut chosen = comps[comps.len() - 1];
    for c in comps {
        acc += c.weight;
        if u < acc {
            chosen = *c;
            break;
        }
    }
    let normal = Normal::new(chosen.mean, chosen.sd).expect("positive sd");
    loop {
        let x = normal.sample(rng);
        if (x - chosen.mean).abs() <= TRUNCATION_SIGMAS * chosen.sd {
            return x;
        }
    }
}

/// Deterministic synthetic trace: a piecewise-constant scene level with rare
/// heavy-tailed bursts, a proxy mixture per frame, and features that move with
/// the truth so that near-duplicate frames have near-zero MSE.
pub fn generate_trace(params: &TraceParams) -> Result<Vec<FrameTrace>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let level_noise = Normal::new(0.0, params.level_spread.max(f64::MIN_POSITIVE)).expect("finite");
    let burst = Pareto::new(1.0, params.burst_tail).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let feature_noise = Normal::new(0.0, params.feature_noise.max(f64::MIN_POSITIVE)).expect("finite");
    let dim = params.feature_dim;
    let direction: Vec<f64> = {
        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.iter().map(|x| x / norm * (dim as f64).sqrt()).collect()
    };

    let mut scene = Scene { level: 0.0, remaining: 0, anchor: vec![0.0; dim] };
    let mut out = Vec::with_capacity(params.frames);
    for i in 0..params.frames {
        if scene.remaining == 0 {
            let is_burst = rng.random_bool(params.burst_prob);
            let level = if is_burst {
                params.base_level + params.burst_scale * burst.sample(&mut rng)
            } else {
                params.base_level * level_noise.sample(&mut rng).exp()
            };
            let mean_len = if is_burst {
                params.mean_segment_len * params.burst_len_factor
            } else {
                params.mean_segment_len
            };
            // geometric length with the requested mean
            let stop = 1.0 / mean_len;
            let mut len = 1;
            while !rng.random_bool(stop) {
                len += 1;
            }
            scene = Scene { level, remaining: len, anchor: (0..dim).map(|_| rng.random_range(0.0..1.0)).collect() };
        }
        scene.remaining -= 1;

        let mixture = mixture_at(scene.level, params, &mut rng);
        let mut truth = if params.calibrated {
            sample_truncated(&mixture, &mut rng)
        } else if rng.random_bool(params.outlier_prob) {
            scene.level * rng.random_range(1.5..3.0) + params.bias
        } else {
            sample_truncated(&mixture, &mut rng) + params.bias
        };
        if params.counting {
            truth = truth.round().max(0.0);
        }
        let features = (0..dim)
            .map(|k| scene.anchor[k] + params.feature_scale * truth * direction[k] + feature_noise.sample(&mut rng))
            .collect();
        out.push(FrameTrace {
            frame_id: i as FrameId,
            timestamp: i as i64,
            truth,
            proxy_mixture: mixture,
            features,
        });
    }
    Ok(out)
}

pub fn write_trace<W: Write>(mut out: W, frames: &[FrameTrace]) -> Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a JSON-lines trace. Blank lines are skipped; errors carry 1-based line numbers.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<FrameTrace>> {
    let mut frames: Vec<FrameTrace> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: FrameTrace =
            serde_json::from_str(&line).map_err(|e| Error::Format { line: line_no, message: e.to_string() })?;
        if !frame.truth.is_finite() {
            return Err(Error::Format { line: line_no, message: "truth must be finite".into() });
        }
        if let Some(first) = frames.first() {
            if first.features.len() != frame.features.len() {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("expected {} features, found {}", first.features.len(), frame.features.len()),
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_process_centres_mixtures() {
        let p = TraceParams {
            frames: 5,
            base_level: 3.0,
            level_spread: 0.0,
            burst_prob: 0.0,
            proxy_sd: 0.01,
            proxy_sd_growth: 0.0,
            ..TraceParams::default()
        };
        let t = generate_trace(&p).unwrap();
        assert_eq!(t.len(), 5);
        for f in &t {
            assert_eq!(f.truth, 3.0);
            let (mean, _) = f.proxy_mixture.moments();
            assert!((mean - 3.0).abs() < 0.05, "{mean}");
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let p = TraceParams { seed: 42, frames: 500, ..TraceParams::default() };
        let a = generate_trace(&p).unwrap();
        let b = generate_trace(&p).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_trace(&mut ba, &a).unwrap();
        write_trace(&mut bb, &b).unwrap();
        assert_eq!(ba, bb);
        let c = generate_trace(&TraceParams { seed: 43, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(generate_trace(&TraceParams { frames: 0, ..TraceParams::default() }).is_err());
        assert!(generate_trace(&TraceParams { proxy_sd: 0.0, ..TraceParams::default() }).is_err());
        assert!(generate_trace(&TraceParams { burst_prob: 1.5, ..TraceParams::default() }).is_err());
    }

    #[test]
    fn calibrated_truth_lies_in_truncated_support() {
        let p = TraceParams { seed: 3, frames: 100_000, counting: false, ..TraceParams::default() };
        let t = generate_trace(&p).unwrap();
        let inside = t
            .iter()
            .filter(|f| {
                f.proxy_mixture
                    .components()
                    .iter()
                    .any(|c| (f.truth - c.mean).abs() <= TRUNCATION_SIGMAS * c.sd)
            })
            .count();
        assert!(inside as f64 / t.len() as f64 >= 0.995);
    }

    #[test]
    fn wire_format_field_order() {
        let f = FrameTrace {
            frame_id: 7,
            timestamp: 7,
            truth: 2.0,
            proxy_mixture: GaussianMixture::normal(2.0, 0.5).unwrap(),
            features: vec![0.25, 1.0],
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, std::slice::from_ref(&f)).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"frame_id\":7,\"ts\":7,\"truth\":2.0,\"mixture\":[{\"pi\":1.0,\"mu\":2.0,\"sigma\":0.5}],\"features\":[0.25,1.0]}\n"
        );
        assert_eq!(read_trace(&buf[..]).unwrap(), vec![f]);
    }

    #[test]
    fn read_errors_carry_line_numbers() {
        let good = "{\"frame_id\":0,\"ts\":0,\"truth\":1,\"mixture\":[{\"pi\":1,\"mu\":1,\"sigma\":1}],\"features\":[0]}";
        let input = format!("{good}\n\n{{\"frame_id\":1,\"ts\":1}}\n");
        match read_trace(input.as_bytes()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let input = format!("{good}\n{}\n", good.replace("[0]", "[0,1]"));
        assert!(matches!(read_trace(input.as_bytes()), Err(Error::Format { line: 2, .. })));
    }
}
