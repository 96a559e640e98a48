//! Seeded random streams, the distribution samplers used by the policies,
//! and the small divergence helpers that go with them.
//!
//! Every sampler draws exclusively from a [`RandomStream`], so a run is
//! reproducible from its seed alone. Draw budgets per call:
//!
//! | sampler              | uniforms consumed            |
//! |----------------------|------------------------------|
//! | [`sample_uniform`]   | 1                            |
//! | [`sample_gaussian`]  | 2 (Box–Muller, cosine branch)|
//! | [`sample_j`]         | 2 (radius, then sign)        |
//! | [`sample_beta`]      | variable (gamma rejection)   |

use std::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{invalid, Result};

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

/// A deterministic random stream.
///
/// Backed by ChaCha8; two streams built from the same `(seed, stream_id)`
/// produce identical draw sequences, and distinct stream ids on one seed
/// give independent sequences.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { rng, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw strictly inside `(0, 1)`: 53 random bits centred in
    /// their dyadic cell, so neither endpoint is reachable.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / TWO_POW_53
    }

    /// Standard normal draw; always consumes exactly two uniforms.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }
}

pub fn sample_uniform(stream: &mut RandomStream) -> f64 {
    stream.uniform()
}

/// Draw from `Normal(mean, variance)` as `mean + sqrt(variance) * z`.
#[inline]
pub fn sample_gaussian(stream: &mut RandomStream, mean: f64, variance: f64) -> Result<f64> {
    if !variance.is_finite() || variance <= 0.0 {
        return Err(invalid(
            "variance",
            format!("must be finite and > 0, got {variance}"),
        ));
    }
    Ok(mean + variance.sqrt() * stream.standard_normal())
}

/// Marsaglia–Tsang gamma sampler, valid for `shape >= 1`.
fn sample_gamma_ge1(stream: &mut RandomStream, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = stream.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = stream.uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Draw from `Beta(alpha, beta)` via the ratio of two gamma variates.
///
/// Only `alpha, beta >= 1` is supported; posterior parameters here are
/// always integer counts plus one.
pub fn sample_beta(stream: &mut RandomStream, alpha: f64, beta: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha < 1.0 {
        return Err(invalid(
            "alpha",
            format!("must be finite and >= 1, got {alpha}"),
        ));
    }
    if !beta.is_finite() || beta < 1.0 {
        return Err(invalid(
            "beta",
            format!("must be finite and >= 1, got {beta}"),
        ));
    }
    let x = sample_gamma_ge1(stream, alpha);
    let y = sample_gamma_ge1(stream, beta);
    let r = x / (x + y);
    // Extreme shapes can round onto an endpoint.
    Ok(r.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Deterministic core of [`sample_j`]: maps a radius uniform and a sign to
/// a draw `mu ± sigma * sqrt(-2 ln u)`.
#[inline]
pub fn j_from_uniform(mu: f64, sigma2: f64, u: f64, positive: bool) -> f64 {
    let r = (sigma2 * -2.0 * u.ln()).sqrt();
    if positive {
        mu + r
    } else {
        mu - r
    }
}

/// Draw from the two-sided Rayleigh law with density
/// `|x - mu| / (2 sigma2) * exp(-(x - mu)^2 / (2 sigma2))`.
///
/// The first uniform sets the radius by inverse transform, the second the
/// sign (`< 1/2` means positive).
#[inline]
pub fn sample_j(stream: &mut RandomStream, mu: f64, sigma2: f64) -> Result<f64> {
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(invalid(
            "sigma2",
            format!("must be finite and > 0, got {sigma2}"),
        ));
    }
    let u = stream.uniform();
    let positive = stream.uniform() < 0.5;
    Ok(j_from_uniform(mu, sigma2, u, positive))
}

/// Bernoulli relative entropy `d(p, q)`, with `0 ln 0 = 0` and `+inf` when
/// `q` sits on a boundary that `p` does not.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("must lie in [0, 1], got {p}")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid("q", format!("must lie in [0, 1], got {q}")));
    }
    if p == q {
        return Ok(0.0);
    }
    fn term(a: f64, b: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    }
    Ok((term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0))
}

/// `max(0, ln x)`.
pub fn log_plus(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(invalid("x", format!("must be > 0, got {x}")));
    }
    Ok(x.ln().max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_deterministic_and_open() {
        let mut a = RandomStream::new(42);
        let mut b = RandomStream::new(42);
        for _ in 0..100 {
            let (x, y) = (sample_uniform(&mut a), sample_uniform(&mut b));
            assert_eq!(x.to_bits(), y.to_bits());
            assert!(x > 0.0 && x < 1.0);
        }
    }

    #[test]
    fn distinct_stream_ids_diverge() {
        let mut a = RandomStream::with_stream(7, 0);
        let mut b = RandomStream::with_stream(7, 1);
        let same = (0..32).filter(|_| a.uniform() == b.uniform()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn uniform_mean_is_half() {
        let mut s = RandomStream::new(1);
        let n = 1_000_000;
        let mean = (0..n).map(|_| s.uniform()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn gaussian_rejects_bad_variance() {
        let mut s = RandomStream::new(1);
        assert!(sample_gaussian(&mut s, 0.0, 0.0).is_err());
        assert!(sample_gaussian(&mut s, 0.0, -1.0).is_err());
        assert!(sample_gaussian(&mut s, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_is_location_scale_of_standard_draw() {
        let mut a = RandomStream::new(3);
        let mut b = a.clone();
        let z = sample_gaussian(&mut a, 0.0, 1.0).unwrap();
        let x = sample_gaussian(&mut b, 2.5, 4.0).unwrap();
        assert!((x - (2.5 + 2.0 * z)).abs() < 1e-12);
        // Both consumed the same two uniforms.
        assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
    }

    #[test]
    fn gaussian_tiny_variance_concentrates() {
        let mut s = RandomStream::new(5);
        for _ in 0..10_000 {
            let x = sample_gaussian(&mut s, 3.0, 1e-12).unwrap();
            assert!((x - 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn gaussian_unit_variance() {
        let mut s = RandomStream::new(11);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_gaussian(&mut s, 0.0, 1.0).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn beta_rejects_small_shapes() {
        let mut s = RandomStream::new(1);
        assert!(sample_beta(&mut s, 0.5, 1.0).is_err());
        assert!(sample_beta(&mut s, 1.0, 0.99).is_err());
    }

    #[test]
    fn beta_tail_heavy_failure_posterior() {
        let mut s = RandomStream::new(9);
        let below = (0..10_000)
            .filter(|_| sample_beta(&mut s, 1.0, 101.0).unwrap() < 0.2)
            .count();
        assert!(below >= 9_900, "{below}");
    }

    #[test]
    fn j_forced_unit_draw() {
        let u = (-0.5f64).exp();
        assert_eq!(j_from_uniform(0.0, 1.0, u, true), 1.0);
        assert_eq!(j_from_uniform(0.0, 1.0, u, false), -1.0);
    }

    #[test]
    fn j_rejects_bad_variance() {
        let mut s = RandomStream::new(1);
        assert!(sample_j(&mut s, 0.0, 0.0).is_err());
    }

    #[test]
    fn kl_worked_values() {
        assert_eq!(kl_bernoulli(0.3, 0.3).unwrap(), 0.0);
        let v = kl_bernoulli(0.5, 0.25).unwrap();
        assert!((v - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((kl_bernoulli(0.0, 0.5).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(kl_bernoulli(0.5, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(kl_bernoulli(0.5, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(kl_bernoulli(1.0, 1.0).unwrap(), 0.0);
        assert!(kl_bernoulli(-0.1, 0.5).is_err());
        assert!(kl_bernoulli(0.5, 1.1).is_err());
    }

    #[test]
    fn log_plus_values() {
        assert_eq!(log_plus(1.0).unwrap(), 0.0);
        assert_eq!(log_plus(0.5).unwrap(), 0.0);
        assert!((log_plus(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!(log_plus(0.0).is_err());
        assert!(log_plus(-2.0).is_err());
    }
}
