use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Waits beyond this are treated as "no event" during sampling.
pub const MAX_WAIT: f64 = 1e7;

/// Intensity of a process whose history is frozen at some time `t_now`;
/// must be nonincreasing after `t_now`.
pub trait ForwardIntensity {
    fn intensity(&self, t: f64) -> f64;
}

/// `constant + excitation * exp(-decay * (t - t0))`, the frozen-history form
/// of every model in this crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayingIntensity {
    pub t0: f64,
    pub constant: f64,
    pub excitation: f64,
    pub decay: f64,
}

impl ForwardIntensity for DecayingIntensity {
    fn intensity(&self, t: f64) -> f64 {
        self.constant + self.excitation * (-self.decay * (t - self.t0)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextTimeEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Samples that produced an event within [`MAX_WAIT`].
    pub fired: usize,
    pub samples: usize,
}

fn sample_next<R: Rng + ?Sized>(model: &impl ForwardIntensity, t_now: f64, rng: &mut R) -> Option<f64> {
    let mut t = t_now;
    loop {
        let bound = model.intensity(t);
        if !(bound > 0.0) {
            return None;
        }
        let wait: f64 = Exp1.sample(rng);
        t += wait / bound;
        if t - t_now > MAX_WAIT {
            return None;
        }
        if rng.random::<f64>() * bound <= model.intensity(t) {
            return Some(t);
        }
    }
}

/// Monte Carlo mean of the next event time after `t_now`, sampled by thinning.
pub fn predict_next_time<R: Rng + ?Sized>(
    model: &impl ForwardIntensity,
    t_now: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<NextTimeEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if !(model.intensity(t_now) > 0.0) {
        return Err(Error::NoEventExpected);
    }
    let (mut sum, mut sum_sq, mut fired) = (0.0, 0.0, 0usize);
    for _ in 0..n_samples {
        if let Some(t) = sample_next(model, t_now, rng) {
            let d = t - t_now;
            sum += d;
            sum_sq += d * d;
            fired += 1;
        }
    }
    if fired == 0 {
        return Err(Error::NoEventExpected);
    }
    let n = fired as f64;
    let mean = sum / n;
    let var = if fired > 1 { (sum_sq - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
    Ok(NextTimeEstimate { mean: t_now + mean, std_error: (var / n).sqrt(), fired, samples: n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant(rate: f64) -> DecayingIntensity {
        DecayingIntensity { t0: 0.0, constant: rate, excitation: 0.0, decay: 1.0 }
    }

    #[test]
    fn constant_rate_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = predict_next_time(&constant(2.0), 0.0, 100_000, &mut rng).unwrap();
        assert!((e.mean - 0.5).abs() < 0.005, "{e:?}");
        let e = predict_next_time(&DecayingIntensity { t0: 3.0, ..constant(0.25) }, 3.0, 1000, &mut rng).unwrap();
        assert!((e.mean - 7.0).abs() < 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn doubling_rate_halves_wait() {
        let a = predict_next_time(&constant(1.0), 0.0, 1000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = predict_next_time(&constant(2.0), 0.0, 1000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!((a.mean - 2.0 * b.mean).abs() < 1e-12);
    }

    #[test]
    fn standard_error_shrinks_with_samples() {
        let m = DecayingIntensity { t0: 0.0, constant: 0.5, excitation: 2.0, decay: 1.5 };
        let small = predict_next_time(&m, 0.0, 100, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let large = predict_next_time(&m, 0.0, 10_000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!(ratio > 5.0 && ratio < 20.0, "{ratio}");
    }

    #[test]
    fn zero_intensity_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(predict_next_time(&constant(0.0), 1.0, 10, &mut rng), Err(Error::NoEventExpected)));
        assert!(predict_next_time(&constant(1.0), 0.0, 0, &mut rng).is_err());
    }
}
