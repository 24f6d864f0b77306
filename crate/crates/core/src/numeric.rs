//! Small numeric helpers shared by the probability code.

use std::f64::consts::SQRT_2;

use libm::erfc;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail, `1 - norm_cdf(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// The smaller of `norm_cdf(z)` and `norm_sf(z)`, picked by sign so it keeps full precision.
pub fn norm_tail(z: f64) -> f64 {
    if z >= 0.0 {
        norm_sf(z)
    } else {
        norm_cdf(z)
    }
}

/// Mass on `[a, b]` from precomputed `norm_tail(a)` and `norm_tail(b)`.
pub fn norm_interval_from_tails(a: f64, tail_a: f64, b: f64, tail_b: f64) -> f64 {
    if b <= a {
        0.0
    } else if a >= 0.0 {
        tail_a - tail_b
    } else if b <= 0.0 {
        tail_b - tail_a
    } else {
        1.0 - tail_a - tail_b
    }
}

/// Mass of the standard normal on `[a, b]`, evaluated on the tail that keeps precision.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    norm_interval_from_tails(a, norm_tail(a), b, norm_tail(b))
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Stable `ln Σ exp(x_i)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + compensated_sum(values.iter().map(|&v| (v - max).exp())).ln()
}
