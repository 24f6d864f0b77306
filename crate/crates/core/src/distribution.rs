//! Gaussian mixtures, 3σ truncation, quantization onto a score grid and
//! discrete score distributions with cached CDFs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, norm_interval, norm_interval_from_tails, norm_sf, norm_tail, CompensatedSum};

/// Index of a grid bin. Signed so that oracle scores below the grid origin stay representable.
pub type Bin = i64;

/// Half-width of the truncation interval in standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

const MASS_TOLERANCE: f64 = 1e-9;

/// Equally spaced score values `origin + i * step` for `i` in `[0, bins)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub origin: f64,
    pub step: f64,
    pub bins: usize,
    /// Scores cannot fall below the origin; mass below bin 0 folds into bin 0.
    #[serde(default)]
    pub counting: bool,
}

impl ScoreGrid {
    pub fn new(origin: f64, step: f64, bins: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
        }
        if bins == 0 {
            return Err(Error::InvalidGrid("grid needs at least one bin".into()));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidGrid(format!("origin must be finite, got {origin}")));
        }
        Ok(Self { origin, step, bins, counting: false })
    }

    /// Non-negative integer grid `{0, 1, ..., bins - 1}` used for counting scores.
    pub fn counting(bins: usize) -> Result<Self> {
        let mut grid = Self::new(0.0, 1.0, bins)?;
        grid.counting = true;
        Ok(grid)
    }

    /// Non-negative grid with a custom step; mass below zero folds into bin 0.
    pub fn non_negative(step: f64, bins: usize) -> Result<Self> {
        let mut grid = Self::new(0.0, step, bins)?;
        grid.counting = true;
        Ok(grid)
    }

    pub fn max_bin(&self) -> Bin {
        self.bins as Bin - 1
    }

    pub fn score_of(&self, bin: Bin) -> f64 {
        self.origin + bin as f64 * self.step
    }

    /// Nearest grid point; may lie outside `[0, bins)`.
    pub fn bin_of(&self, score: f64) -> Bin {
        ((score - self.origin) / self.step).round() as Bin
    }

    /// Lower edge of bin `i`, the midpoint between grid points `i - 1` and `i`.
    pub fn lower_edge(&self, bin: Bin) -> f64 {
        self.origin + (bin as f64 - 0.5) * self.step
    }

    pub fn contains(&self, bin: Bin) -> bool {
        bin >= 0 && bin <= self.max_bin()
    }
}

/// One weighted normal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(rename = "pi")]
    pub weight: f64,
    #[serde(rename = "mu")]
    pub mean: f64,
    #[serde(rename = "sigma")]
    pub sd: f64,
}

impl Component {
    pub fn new(weight: f64, mean: f64, sd: f64) -> Self {
        Self { weight, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct GaussianMixture {
    components: Vec<Component>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        for c in &components {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::InvalidMixture(format!("weight {} is not a probability", c.weight)));
            }
            if !(c.sd > 0.0) || !c.sd.is_finite() {
                return Err(Error::InvalidMixture(format!("stddev {} must be positive", c.sd)));
            }
            if !c.mean.is_finite() {
                return Err(Error::InvalidMixture(format!("mean {} is not finite", c.mean)));
            }
        }
        let total = compensated_sum(components.iter().map(|c| c.weight));
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![Component::new(1.0, mean, sd)])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Mixture mean and total variance (law of total variance).
    pub fn moments(&self) -> (f64, f64) {
        mixture_moments(self)
    }
}

impl TryFrom<Vec<Component>> for GaussianMixture {
    type Error = Error;

    fn try_from(components: Vec<Component>) -> Result<Self> {
        Self::new(components)
    }
}

impl From<GaussianMixture> for Vec<Component> {
    fn from(mix: GaussianMixture) -> Self {
        mix.components
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedComponent {
    pub component: Component,
    pub lower: f64,
    pub upper: f64,
    /// Probability of the untruncated component outside `[lower, upper]`.
    pub truncated_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMixture {
    pub components: Vec<TruncatedComponent>,
    /// `Σ_j π_j · truncated_mass_j`.
    pub excess_mass: f64,
}

pub fn truncate_mixture(mix: &GaussianMixture) -> TruncatedMixture {
    let tail = 2.0 * norm_sf(TRUNCATION_SIGMAS);
    let components: Vec<_> = mix
        .components
        .iter()
        .map(|&c| TruncatedComponent {
            component: c,
            lower: c.mean - TRUNCATION_SIGMAS * c.sd,
            upper: c.mean + TRUNCATION_SIGMAS * c.sd,
            truncated_mass: tail,
        })
        .collect();
    let excess_mass = compensated_sum(components.iter().map(|t| t.component.weight * t.truncated_mass));
    TruncatedMixture { components, excess_mass }
}

pub fn mixture_moments(mix: &GaussianMixture) -> (f64, f64) {
    let mean = compensated_sum(mix.components.iter().map(|c| c.weight * c.mean));
    // Σπ(σ² + (μ - μ̄)²) equals Σπ(σ² + μ² - μ̄²) and avoids cancellation.
    let var = compensated_sum(
        mix.components
            .iter()
            .map(|c| c.weight * (c.sd * c.sd + (c.mean - mean) * (c.mean - mean))),
    );
    (mean, var.max(0.0))
}

/// How the truncated tail mass returns to the quantized support.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Redistribution {
    /// Equal absolute increment on every occupied bin.
    #[default]
    Uniform,
    /// Rescale occupied bins so they sum to one.
    Proportional,
}

pub fn quantize(mix: &GaussianMixture, grid: &ScoreGrid) -> Result<DiscreteScoreDist> {
    quantize_with(mix, grid, Redistribution::Uniform)
}

pub fn quantize_with(
    mix: &GaussianMixture,
    grid: &ScoreGrid,
    redistribution: Redistribution,
) -> Result<DiscreteScoreDist> {
    let truncated = truncate_mixture(mix);

    // Bin range touched by any truncation interval, clipped to the grid.
    let bin_containing = |x: f64| ((x - grid.origin) / grid.step + 0.5).floor();
    let max_bin = grid.max_bin() as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in &truncated.components {
        let mut a = bin_containing(t.lower);
        let b = bin_containing(t.upper);
        if grid.counting && a < 0.0 && b >= 0.0 {
            a = 0.0;
        }
        lo = lo.min(a.max(0.0));
        hi = hi.max(b.min(max_bin));
    }
    if lo > hi {
        return Err(Error::EmptySupport);
    }
    let (lo, hi) = (lo as Bin, hi as Bin);
    let width = (hi - lo + 1) as usize;
    let mut acc = vec![CompensatedSum::new(); width];

    for t in &truncated.components {
        let c = t.component;
        if c.weight == 0.0 {
            continue;
        }
        let z = |x: f64| (x - c.mean) / c.sd;
        let first = (bin_containing(t.lower) as Bin).max(lo);
        let last = (bin_containing(t.upper) as Bin).min(hi);
        // adjacent bins share an edge, so each edge's tail is evaluated once
        let mut za = z(grid.lower_edge(first).max(t.lower));
        let mut tail_a = norm_tail(za);
        for bin in first..=last {
            let zb = z(grid.lower_edge(bin + 1).min(t.upper));
            let tail_b = norm_tail(zb);
            let mass = norm_interval_from_tails(za, tail_a, zb, tail_b);
            if mass > 0.0 {
                acc[(bin - lo) as usize].add(c.weight * mass);
            }
            (za, tail_a) = (zb, tail_b);
        }
        if grid.counting {
            let edge = grid.lower_edge(0);
            if t.lower < edge {
                let mass = norm_interval(z(t.lower), z(edge.min(t.upper)));
                if mass > 0.0 {
                    acc[(0 - lo) as usize].add(c.weight * mass);
                }
            }
        }
    }

    let mut probs: Vec<f64> = acc.iter().map(CompensatedSum::value).collect();
    let occupied = probs.iter().filter(|&&p| p > 0.0).count();
    if occupied == 0 {
        return Err(Error::EmptySupport);
    }
    let kept = compensated_sum(probs.iter().copied());
    match redistribution {
        Redistribution::Uniform => {
            // Includes mass that fell outside the grid, so the result still sums to one.
            let excess = (1.0 - kept).max(0.0);
            let share = excess / occupied as f64;
            for p in probs.iter_mut().filter(|p| **p > 0.0) {
                *p += share;
            }
        }
        Redistribution::Proportional => {
            for p in probs.iter_mut() {
                *p /= kept;
            }
        }
    }
    DiscreteScoreDist::from_dense(*grid, lo, probs)
}

/// Probability mass over grid bins with cached cumulative arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScoreDist {
    grid: ScoreGrid,
    /// Bin of `probs[0]`.
    lo: Bin,
    probs: Vec<f64>,
    /// `cdf[i] = Pr(S <= lo + i)`.
    cdf: Vec<f64>,
    /// `sf[i] = Pr(S > lo + i)`, accumulated from the top to keep small tails exact.
    sf: Vec<f64>,
    mean_bin: f64,
}

impl DiscreteScoreDist {
    /// Builds a distribution from `(bin, probability)` pairs. Zero entries are dropped.
    pub fn from_pairs(grid: ScoreGrid, pairs: &[(Bin, f64)]) -> Result<Self> {
        let support: Vec<_> = pairs.iter().copied().filter(|&(_, p)| p != 0.0).collect();
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let lo = support.iter().map(|&(b, _)| b).min().unwrap_or(0);
        let hi = support.iter().map(|&(b, _)| b).max().unwrap_or(0);
        let mut probs = vec![0.0; (hi - lo + 1) as usize];
        for (bin, p) in support {
            probs[(bin - lo) as usize] += p;
        }
        Self::from_dense(grid, lo, probs)
    }

    /// Point mass at `bin`.
    pub fn point(grid: ScoreGrid, bin: Bin) -> Self {
        Self::from_dense(grid, bin, vec![1.0]).expect("point mass is valid")
    }

    /// `probs[i]` is the mass of bin `lo + i`.
    pub fn from_dense(grid: ScoreGrid, lo: Bin, mut probs: Vec<f64>) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidMixture(format!("probability {bad} out of range")));
        }
        let first = probs.iter().position(|&p| p > 0.0).ok_or(Error::EmptySupport)?;
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(first);
        probs.truncate(last + 1);
        probs.drain(..first);
        let lo = lo + first as Bin;
        if lo < 0 || lo + probs.len() as Bin - 1 > grid.max_bin() {
            return Err(Error::InvalidGrid(format!(
                "support [{lo}, {}] outside grid of {} bins",
                lo + probs.len() as Bin - 1,
                grid.bins
            )));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMixture(format!("probabilities sum to {total}")));
        }

        let n = probs.len();
        let mut cdf = Vec::with_capacity(n);
        let mut acc = CompensatedSum::new();
        for &p in &probs {
            acc.add(p);
            cdf.push(acc.value().min(1.0));
        }
        cdf[n - 1] = 1.0;
        let mut sf = vec![0.0; n];
        let mut acc = CompensatedSum::new();
        for i in (0..n - 1).rev() {
            acc.add(probs[i + 1]);
            sf[i] = acc.value().min(1.0);
        }
        let mean_bin = compensated_sum(probs.iter().enumerate().map(|(i, p)| (lo + i as Bin) as f64 * p));
        Ok(Self { grid, lo, probs, cdf, sf, mean_bin })
    }

    pub fn grid(&self) -> &ScoreGrid {
        &self.grid
    }

    pub fn min_bin(&self) -> Bin {
        self.lo
    }

    pub fn max_bin(&self) -> Bin {
        self.lo + self.probs.len() as Bin - 1
    }

    pub fn prob(&self, bin: Bin) -> f64 {
        if bin < self.lo || bin > self.max_bin() {
            0.0
        } else {
            self.probs[(bin - self.lo) as usize]
        }
    }

    /// `(bin, probability)` pairs with positive mass, ascending by bin.
    pub fn support(&self) -> impl Iterator<Item = (Bin, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(move |(i, &p)| (self.lo + i as Bin, p))
    }

    pub fn support_len(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// `Pr(S <= t)`.
    pub fn cdf(&self, t: Bin) -> f64 {
        if t < self.lo {
            0.0
        } else if t >= self.max_bin() {
            1.0
        } else {
            self.cdf[(t - self.lo) as usize]
        }
    }

    /// `Pr(S > t)`.
    pub fn sf(&self, t: Bin) -> f64 {
        if t < self.lo {
            1.0
        } else if t >= self.max_bin() {
            0.0
        } else {
            self.sf[(t - self.lo) as usize]
        }
    }

    /// Mean in bin units.
    pub fn mean_bin(&self) -> f64 {
        self.mean_bin
    }

    pub fn mean_score(&self) -> f64 {
        self.grid.origin + self.mean_bin() * self.grid.step
    }

    /// Variance in score units.
    pub fn variance_score(&self) -> f64 {
        let mean = self.mean_bin();
        let var = compensated_sum(self.support().map(|(b, p)| p * (b as f64 - mean).powi(2)));
        var * self.grid.step * self.grid.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI3_TAIL: f64 = 0.002_699_796_063_260_189;

    fn three_frames_f1() -> DiscreteScoreDist {
        DiscreteScoreDist::from_pairs(ScoreGrid::counting(3).unwrap(), &[(0, 0.78), (1, 0.21), (2, 0.01)])
            .unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(ScoreGrid::new(0.0, 0.0, 3).is_err());
        assert!(ScoreGrid::new(0.0, 1.0, 0).is_err());
        let g = ScoreGrid::new(-1.0, 0.5, 10).unwrap();
        assert_eq!(g.score_of(4), 1.0);
        assert_eq!(g.bin_of(1.0), 4);
        assert_eq!(g.lower_edge(0), -1.25);
    }

    #[test]
    fn truncation_of_standard_normal() {
        let t = truncate_mixture(&GaussianMixture::normal(0.0, 1.0).unwrap());
        assert_eq!(t.components[0].lower, -3.0);
        assert_eq!(t.components[0].upper, 3.0);
        assert!((t.components[0].truncated_mass - PHI3_TAIL).abs() < 1e-15);
        assert!((t.excess_mass - 0.0026998).abs() < 1e-7);
    }

    #[test]
    fn truncation_is_scale_invariant() {
        let mix = GaussianMixture::new(vec![Component::new(0.5, 0.0, 1e-9), Component::new(0.5, 4.0, 1e-9)]).unwrap();
        let t = truncate_mixture(&mix);
        for c in &t.components {
            assert!((c.upper - c.lower - 6e-9).abs() < 4e-15);
            assert!((c.truncated_mass - PHI3_TAIL).abs() < 1e-15);
        }
    }

    #[test]
    fn truncation_intervals_of_separated_mixture() {
        let mix = GaussianMixture::new(vec![Component::new(0.5, 1.0, 1.0), Component::new(0.5, 10.0, 1.0)]).unwrap();
        let t = truncate_mixture(&mix);
        assert_eq!((t.components[0].lower, t.components[0].upper), (-2.0, 4.0));
        assert_eq!((t.components[1].lower, t.components[1].upper), (7.0, 13.0));
    }

    #[test]
    fn mixture_validation() {
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(GaussianMixture::new(vec![Component::new(0.7, 0.0, 1.0)]).is_err());
        assert!(GaussianMixture::new(vec![Component::new(1.0, 0.0, 0.0)]).is_err());
        assert!(GaussianMixture::new(vec![Component::new(0.5, 0.0, 1.0), Component::new(0.5, 1.0, 2.0)]).is_ok());
    }

    #[test]
    fn quantize_point_mass() {
        let d = quantize(&GaussianMixture::normal(5.0, 1e-6).unwrap(), &ScoreGrid::counting(10).unwrap()).unwrap();
        let support: Vec<_> = d.support().collect();
        assert_eq!(support.len(), 1);
        assert_eq!(support[0].0, 5);
        assert!((support[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantize_standard_normal_centre_bin() {
        // grid points -3..=3
        let grid = ScoreGrid::new(-3.0, 1.0, 7).unwrap();
        let mix = GaussianMixture::normal(0.0, 1.0).unwrap();
        let d = quantize(&mix, &grid).unwrap();
        assert_eq!(d.support_len(), 7);
        let pre = 0.382_924_922_548_026; // Φ(0.5) - Φ(-0.5)
        let expected = pre + PHI3_TAIL / 7.0;
        assert!((d.prob(3) - expected).abs() < 1e-12, "{}", d.prob(3));
        let total: f64 = d.support().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let prop = quantize_with(&mix, &grid, Redistribution::Proportional).unwrap();
        assert!((prop.prob(3) - pre / (1.0 - PHI3_TAIL)).abs() < 1e-12);
    }

    #[test]
    fn quantize_two_point_masses() {
        let mix = GaussianMixture::new(vec![Component::new(0.5, 0.0, 1e-6), Component::new(0.5, 2.0, 1e-6)]).unwrap();
        let d = quantize(&mix, &ScoreGrid::counting(5).unwrap()).unwrap();
        let support: Vec<_> = d.support().collect();
        assert_eq!(support.len(), 2);
        assert_eq!((support[0].0, support[1].0), (0, 2));
        assert!((support[0].1 - 0.5).abs() < 1e-12 && (support[1].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn counting_grid_folds_negative_mass() {
        let mix = GaussianMixture::normal(0.0, 1.0).unwrap();
        let d = quantize(&mix, &ScoreGrid::counting(5).unwrap()).unwrap();
        assert_eq!(d.min_bin(), 0);
        // bin 0 holds everything in [-3, 0.5) plus its redistribution share
        let pre = crate::numeric::norm_interval(-3.0, 0.5);
        assert!((d.prob(0) - (pre + PHI3_TAIL / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn quantize_disjoint_grid_is_empty() {
        let grid = ScoreGrid::counting(5).unwrap();
        let mix = GaussianMixture::normal(100.0, 1.0).unwrap();
        assert!(matches!(quantize(&mix, &grid), Err(Error::EmptySupport)));
    }

    #[test]
    fn quantized_mean_converges_with_step() {
        let mix = GaussianMixture::new(vec![Component::new(0.3, 2.3, 0.7), Component::new(0.7, 5.7, 1.3)]).unwrap();
        // mean of the truncated mixture, by quadrature
        let truth = {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for c in mix.components() {
                let (a, b) = (c.mean - 3.0 * c.sd, c.mean + 3.0 * c.sd);
                let n = 200_000;
                let h = (b - a) / n as f64;
                for i in 0..n {
                    let x = a + (i as f64 + 0.5) * h;
                    let z = (x - c.mean) / c.sd;
                    let w = c.weight * (-0.5 * z * z).exp() / (c.sd * (2.0 * std::f64::consts::PI).sqrt()) * h;
                    acc += w * x;
                    mass += w;
                }
            }
            acc / mass
        };
        let mut errors = Vec::new();
        for step in [1.0, 0.1, 0.01] {
            let bins = (12.0 / step) as usize + 1;
            let grid = ScoreGrid::new(0.0, step, bins).unwrap();
            let d = quantize_with(&mix, &grid, Redistribution::Proportional).unwrap();
            errors.push((d.mean_score() - truth).abs());
        }
        assert!(errors[0] < 0.1 && errors[1] < 1e-2 && errors[2] < 1e-3, "{errors:?}");
        assert!(errors[2] < errors[0], "{errors:?}");
    }

    #[test]
    fn cdf_lookups() {
        let f1 = three_frames_f1();
        assert!((f1.cdf(1) - 0.99).abs() < 1e-12);
        assert_eq!(f1.cdf(-1), 0.0);
        assert_eq!(f1.cdf(2), 1.0);
        assert_eq!(f1.cdf(7), 1.0);
        assert!((f1.sf(0) - 0.22).abs() < 1e-12);
        assert_eq!(f1.sf(2), 0.0);
        let f3 = DiscreteScoreDist::from_pairs(ScoreGrid::counting(3).unwrap(), &[(0, 0.16), (1, 0.48), (2, 0.36)])
            .unwrap();
        assert_eq!(f3.cdf(2), 1.0);
        assert!((f3.mean_bin() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn discrete_dist_validation() {
        let grid = ScoreGrid::counting(3).unwrap();
        assert!(DiscreteScoreDist::from_pairs(grid, &[(0, 0.5), (1, 0.4)]).is_err());
        assert!(DiscreteScoreDist::from_pairs(grid, &[(0, 0.5), (5, 0.5)]).is_err());
        assert!(DiscreteScoreDist::from_pairs(grid, &[]).is_err());
        let d = DiscreteScoreDist::from_pairs(grid, &[(0, 0.5), (2, 0.5)]).unwrap();
        assert_eq!(d.support_len(), 2);
        assert_eq!(d.cdf(1), 0.5);
    }

    #[test]
    fn moments_examples() {
        let (m, v) = mixture_moments(&GaussianMixture::normal(2.0, 1.0).unwrap());
        assert_eq!((m, v), (2.0, 1.0));
        let mix = GaussianMixture::new(vec![Component::new(0.5, 0.0, 1.0), Component::new(0.5, 2.0, 1.0)]).unwrap();
        let (m, v) = mixture_moments(&mix);
        assert!((m - 1.0).abs() < 1e-15 && (v - 2.0).abs() < 1e-15);
        let mix = GaussianMixture::new(vec![Component::new(0.3, 0.0, 1e-9), Component::new(0.7, 10.0, 1e-9)]).unwrap();
        let (m, v) = mixture_moments(&mix);
        assert!((m - 7.0).abs() < 1e-12 && (v - 21.0).abs() < 1e-6);
    }

    #[test]
    fn moments_match_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mix = GaussianMixture::new(vec![
            Component::new(0.2, -1.0, 0.5),
            Component::new(0.5, 3.0, 1.5),
            Component::new(0.3, 8.0, 0.8),
        ])
        .unwrap();
        let (mean, var) = mixture_moments(&mix);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let u: f64 = rand::Rng::random(&mut rng);
            let c = if u < 0.2 { mix.components()[0] } else if u < 0.7 { mix.components()[1] } else { mix.components()[2] };
            let x = Normal::new(c.mean, c.sd).unwrap().sample(&mut rng);
            s += x;
            s2 += x * x;
        }
        let m = s / n as f64;
        let v = s2 / n as f64 - m * m;
        let se_mean = (var / n as f64).sqrt();
        assert!((m - mean).abs() < 4.0 * se_mean, "{m} vs {mean}");
        // fourth central moment bounds the variance estimator's standard error; 2σ² is a loose stand-in
        let se_var = var * (2.0 / n as f64).sqrt() * 2.0;
        assert!((v - var).abs() < 4.0 * se_var, "{v} vs {var}");
    }

    #[test]
    fn mixture_json_uses_wire_names() {
        let mix = GaussianMixture::normal(2.0, 0.5).unwrap();
        let json = serde_json::to_string(&mix).unwrap();
        assert_eq!(json, r#"[{"pi":1.0,"mu":2.0,"sigma":0.5}]"#);
        let bad: std::result::Result<GaussianMixture, _> = serde_json::from_str(r#"[{"pi":0.5,"mu":2.0,"sigma":0.5}]"#);
        assert!(bad.is_err());
    }
}
