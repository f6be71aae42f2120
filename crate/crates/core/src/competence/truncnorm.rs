//! Normal distribution truncated to `[0, 1]`, parameterized by the mean it
//! must have *after* truncation.
//!
//! The location of the underlying normal is solved numerically so that the
//! truncated variable has exactly the requested mean, which keeps the
//! randomized model's supports unbiased near the interval ends.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Beyond this many standard deviations from both ends the truncation is
/// invisible in double precision.
const NEGLIGIBLE_TRUNCATION: f64 = 40.0;

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Mills ratio `Φc(x)/φ(x)` for `x >= 0`.
fn mills(x: f64) -> f64 {
    if x < 5.0 {
        sf(x) / pdf(x)
    } else {
        // Laplace continued fraction, evaluated bottom-up
        let mut t = x;
        for k in (1..=80).rev() {
            t = x + k as f64 / t;
        }
        1.0 / t
    }
}

/// `1/mills(x) - x` for `x >= 0`, without cancellation for large `x`.
fn inverse_mills_excess(x: f64) -> f64 {
    if x < 5.0 {
        1.0 / mills(x) - x
    } else {
        let mut t = x;
        for k in (2..=80).rev() {
            t = x + k as f64 / t;
        }
        1.0 / t
    }
}

/// `E[Z] - a` for a standard normal truncated to `[a, b]`, `0 <= a < b`.
fn excess_over_lower(a: f64, b: f64) -> f64 {
    let ratio = (-(b - a) * (b + a) / 2.0).exp();
    let (ma, mb) = (mills(a), mills(b));
    let numerator = ma * inverse_mills_excess(a) - ratio * mb * (inverse_mills_excess(b) + b - a);
    numerator / (ma - mb * ratio)
}

/// Mean of a standard normal truncated to `[a, b]`.
pub(crate) fn standard_truncated_mean(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        let ratio = (-(b - a) * (b + a) / 2.0).exp();
        (1.0 - ratio) / (mills(a) - mills(b) * ratio)
    } else if b <= 0.0 {
        -standard_truncated_mean(-b, -a)
    } else {
        (pdf(a) - pdf(b)) / (cdf(b) - cdf(a))
    }
}

/// A normal variable truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub location: f64,
    pub scale: f64,
    lower: f64,
    upper: f64,
}

impl TruncatedNormal {
    /// Truncation of `N(location, scale²)` to `[0, 1]`; `scale > 0`.
    pub fn new(location: f64, scale: f64) -> Self {
        TruncatedNormal {
            location,
            scale,
            lower: -location / scale,
            upper: (1.0 - location) / scale,
        }
    }

    /// The truncation to `[0, 1]` whose mean equals `mean` (in `(0, 1)`).
    pub fn with_mean(mean: f64, scale: f64) -> Self {
        if mean / scale > NEGLIGIBLE_TRUNCATION && (1.0 - mean) / scale > NEGLIGIBLE_TRUNCATION {
            return TruncatedNormal::new(mean, scale);
        }
        let mean_at = |loc: f64| TruncatedNormal::new(loc, scale).mean();
        let mut step = scale;
        let mut lo = mean - step;
        while mean_at(lo) > mean {
            step *= 2.0;
            lo = mean - step;
        }
        step = scale;
        let mut hi = mean + step;
        while mean_at(hi) < mean {
            step *= 2.0;
            hi = mean + step;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mean_at(mid) < mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        TruncatedNormal::new(0.5 * (lo + hi), scale)
    }

    pub fn mean(&self) -> f64 {
        // near an end, measure from that end to avoid cancellation
        if self.lower >= 0.0 {
            self.scale * excess_over_lower(self.lower, self.upper)
        } else if self.upper <= 0.0 {
            1.0 - self.scale * excess_over_lower(-self.upper, -self.lower)
        } else {
            self.location + self.scale * standard_truncated_mean(self.lower, self.upper)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = sample_standard(self.lower, self.upper, rng);
        (self.location + self.scale * z).clamp(0.0, 1.0)
    }
}

/// Draws from a standard normal truncated to `[a, b]`.
fn sample_standard<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a <= -2.0 && b >= 2.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if (a..=b).contains(&z) {
                return z;
            }
        }
    } else if a >= 0.0 {
        upper_tail(a, b, rng)
    } else if b <= 0.0 {
        -upper_tail(-b, -a, rng)
    } else {
        let (pa, pb) = (cdf(a), cdf(b));
        let u: f64 = rng.random();
        quantile(pa + u * (pb - pa)).clamp(a, b)
    }
}

/// `0 <= a < b`.
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a < 3.0 {
        let (pa, pb) = (sf(a), sf(b));
        let u: f64 = rng.random();
        return (-quantile(pa - u * (pa - pb))).clamp(a, b);
    }
    if (b - a) * a < 1.0 {
        // narrow window: uniform proposal under the density's value at `a`
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            // factored so huge `a` does not overflow
            if rng.random::<f64>() <= (-(z - a) * (z + a) / 2.0).exp() {
                return z;
            }
        }
    }
    // exponential proposal with the optimal rate for a one-sided tail
    let rate = (a + a.hypot(2.0)) / 2.0;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let z = a - u.ln() / rate;
        if z <= b && rng.random::<f64>() <= (-(z - rate).powi(2) / 2.0).exp() {
            return z;
        }
    }
}
