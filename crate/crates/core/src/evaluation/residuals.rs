use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this many residuals the KS test has little power and is flagged.
pub const LOW_POWER_N: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub low_power: bool,
}

/// Kolmogorov distribution tail `P(K > x)`.
pub fn kolmogorov_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // small-x form converges faster here
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        let s: f64 = (0..20).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF with the asymptotic
/// distribution and the Stephens small-sample correction.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsTest> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("KS test needs at least one sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    let p_value = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);
    Ok(KsTest { statistic: d, p_value, n: xs.len(), low_power: xs.len() < LOW_POWER_N })
}

pub fn ks_exp1(samples: &[f64]) -> Result<KsTest> {
    ks_test(samples, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub ks: KsTest,
    /// `(theoretical Exp(1) quantile, empirical quantile)` pairs.
    pub qq_points: Vec<(f64, f64)>,
}

pub fn qq_points(residuals: &[f64]) -> Vec<(f64, f64)> {
    let mut xs = residuals.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let q = (i as f64 + 0.5) / n;
            (-(-q).ln_1p(), *x)
        })
        .collect()
}

/// Time-rescaled residuals `Lambda(t_i, t_{i+1})` between consecutive events.
pub fn rescaled_residuals(times: &[f64], compensator: impl Fn(f64, f64) -> f64) -> Result<ResidualReport> {
    if times.len() < 2 {
        return Err(Error::InsufficientData(format!("residuals need at least 2 events, got {}", times.len())));
    }
    let residuals: Vec<f64> = times.windows(2).map(|w| compensator(w[0], w[1])).collect();
    residual_report(residuals)
}

pub fn residual_report(residuals: Vec<f64>) -> Result<ResidualReport> {
    let ks = ks_exp1(&residuals)?;
    let qq = qq_points(&residuals);
    Ok(ResidualReport { residuals, ks, qq_points: qq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    #[test]
    fn kolmogorov_tail_reference_points() {
        // classic critical values of the limiting distribution
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_tail(0.8276) - 0.5).abs() < 1e-3);
        // the two series agree where they meet
        let x = 1.18;
        let a = kolmogorov_tail(x - 1e-9);
        let b = kolmogorov_tail(x + 1e-9);
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn poisson_residuals_are_scaled_gaps() {
        let times = [0.5, 1.25, 3.0, 3.5];
        let r = rescaled_residuals(&times, |a, b| 2.0 * (b - a)).unwrap();
        assert_eq!(r.residuals, vec![1.5, 3.5, 1.0]);
        assert!(r.ks.low_power);
        assert!(rescaled_residuals(&[1.0], |a, b| b - a).is_err());
    }

    #[test]
    fn exp_samples_pass_and_halved_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..2000).map(|_| Exp1.sample(&mut rng)).collect();
        assert!(ks_exp1(&xs).unwrap().p_value > 0.01);
        let halved: Vec<f64> = xs.iter().map(|x| 0.5 * x).collect();
        assert!(ks_exp1(&halved).unwrap().p_value < 0.01);
    }
}
