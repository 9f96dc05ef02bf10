//! Random sampling for component lifetimes, trip thresholds and demand noise.
//!
//! All times are in hours. Per-year rates are converted with
//! [`per_year_to_per_hour`] before sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Open01};

use crate::error::{Error, Result};

pub const HOURS_PER_YEAR: f64 = 8760.0;

pub fn per_year_to_per_hour(rate: f64) -> f64 {
    rate / HOURS_PER_YEAR
}

/// Reproducible random stream for one replication.
///
/// Every `(seed, stream_id)` pair maps to its own ChaCha stream, so
/// replications can run on any thread in any order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        Open01.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

/// Inverse-CDF transform of `u` in (0, 1) for `F(t) = 1 - exp(-rate t)`.
pub fn exponential_from_uniform(rate: f64, u: f64) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(Error::Parameter(format!("exponential rate must be >= 0, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-(1.0 - u).ln() / rate)
}

/// Exponential holding time; `rate == 0` never fires.
pub fn sample_exponential(rate: f64, rng: &mut RngStream) -> Result<f64> {
    let u = rng.open01();
    exponential_from_uniform(rate, u)
}

/// Stationary probability that a two-state component is up.
pub fn steady_state_up_probability(failure_rate: f64, repair_rate: f64) -> f64 {
    repair_rate / (failure_rate + repair_rate)
}

/// Protection trip level, uniform in `[rating, beta * rating]`.
pub fn sample_outage_threshold(rating: f64, beta: f64, rng: &mut RngStream) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(Error::Parameter(format!("beta must be > 1, got {beta}")));
    }
    Ok(rating * (1.0 + (beta - 1.0) * rng.uniform()))
}

/// Relative demand deviation drawn from N(0, sigma^2).
pub fn sample_demand_deviation(sigma: f64, rng: &mut RngStream) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma)
        .expect("sigma validated non-negative")
        .sample(rng.rng())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_never_fires() {
        let mut rng = RngStream::new(1, 1);
        assert_eq!(sample_exponential(0.0, &mut rng).unwrap(), f64::INFINITY);
        assert!(sample_exponential(-1.0, &mut rng).is_err());
    }

    #[test]
    fn median_draw_maps_to_ln2_over_rate() {
        let t = exponential_from_uniform(4.0, 0.5).unwrap();
        assert!((t - std::f64::consts::LN_2 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_mean_matches_inverse_rate() {
        let mut rng = RngStream::new(42, 0);
        let rate = 4.42;
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sample_exponential(rate, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let expected = 1.0 / rate;
        assert!((mean / expected - 1.0).abs() < 0.02, "mean {mean} vs {expected}");
    }

    #[test]
    fn steady_state_probabilities() {
        assert_eq!(steady_state_up_probability(0.3, 0.3), 0.5);
        assert_eq!(steady_state_up_probability(0.0, 0.3), 1.0);
        let p = steady_state_up_probability(per_year_to_per_hour(3.0), 0.027);
        assert!((p - 0.98748).abs() < 1e-5, "{p}");
    }

    #[test]
    fn thresholds_stay_inside_interval() {
        let mut rng = RngStream::new(3, 9);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let t = sample_outage_threshold(100.0, 1.4, &mut rng).unwrap();
            assert!((100.0..=140.0).contains(&t));
            sum += t;
        }
        assert!((sum / n as f64 / 120.0 - 1.0).abs() < 0.01);
        let t = sample_outage_threshold(100.0, 1.0 + 1e-12, &mut rng).unwrap();
        assert!((t - 100.0).abs() < 1e-9);
        assert!(sample_outage_threshold(100.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn demand_deviation_spread() {
        let mut rng = RngStream::new(5, 2);
        assert_eq!(sample_demand_deviation(0.0, &mut rng), 0.0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_demand_deviation(0.0192, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() / 0.0192 - 1.0).abs() < 0.02);
    }

    #[test]
    fn consecutive_area_draws_are_uncorrelated() {
        let mut rng = RngStream::new(11, 4);
        let n = 50_000;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (sample_demand_deviation(1.0, &mut rng), sample_demand_deviation(1.0, &mut rng)))
            .collect();
        let corr = pairs.iter().map(|(a, b)| a * b).sum::<f64>() / n as f64;
        assert!(corr.abs() < 0.02, "{corr}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |s, id| {
            let mut r = RngStream::new(s, id);
            (0..8).map(|_| r.uniform()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
    }
}
