use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximizer of `sum_k F_k log(eta_k) - sum_k H_k eta_k` over the simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaSolution {
    pub eta: Vec<f64>,
    /// The Lagrange multiplier of the simplex constraint.
    pub lambda: f64,
    /// `F` carried no mass; `eta` is uniform.
    pub degenerate: bool,
}

/// Solve the simplex-constrained expertise update.
///
/// Stationarity gives `eta_k = F_k / (H_k + lambda)` for every `k` with
/// `F_k > 0`; `lambda` is the unique root of `sum_k F_k / (H_k + lambda) = 1`
/// above `-min H_k`, found by bisection on the shift `s = lambda + min H_k` to
/// keep the smallest denominator exact. Entries with `F_k = 0` stay at zero
/// unless the cheapest of them, `H_z`, lies below every `H_k` and
/// `sum_k F_k / (H_k - H_z) < 1`; then `lambda = -H_z` and `eta_z` absorbs the
/// remaining mass.
pub fn solve_eta(f: &[f64], h: &[f64]) -> Result<EtaSolution> {
    if f.len() != h.len() || f.is_empty() {
        return Err(Error::InvalidArgument(format!("F has {} entries, H has {}", f.len(), h.len())));
    }
    if f.iter().chain(h).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidArgument("F and H must be finite and nonnegative".into()));
    }
    let k = f.len();
    let f_total: f64 = f.iter().sum();
    if !(f_total > 0.0) {
        return Ok(EtaSolution { eta: vec![1.0 / k as f64; k], lambda: f64::NAN, degenerate: true });
    }
    let h_min = f.iter().zip(h).filter(|(fk, _)| **fk > 0.0).map(|(_, hk)| *hk).fold(f64::INFINITY, f64::min);
    let cheapest_empty = (0..k).filter(|&j| f[j] == 0.0).min_by(|&a, &b| h[a].total_cmp(&h[b]));
    if let Some(z) = cheapest_empty {
        if h[z] < h_min {
            let eta: Vec<f64> = f.iter().zip(h).map(|(fk, hk)| if *fk > 0.0 { fk / (hk - h[z]) } else { 0.0 }).collect();
            let used: f64 = eta.iter().sum();
            if used < 1.0 {
                let mut eta = eta;
                eta[z] = 1.0 - used;
                return Ok(EtaSolution { eta, lambda: -h[z], degenerate: false });
            }
        }
    }
    let shares = |s: f64| -> f64 {
        f.iter().zip(h).filter(|(fk, _)| **fk > 0.0).map(|(fk, hk)| fk / ((hk - h_min) + s)).sum()
    };
    // shares(0+) is infinite and shares(f_total) <= 1.
    let (mut lo, mut hi) = (0.0, f_total);
    let mut s = hi;
    for _ in 0..400 {
        s = 0.5 * (lo + hi);
        let g = shares(s);
        if (g - 1.0).abs() <= 1e-10 {
            break;
        }
        if g > 1.0 {
            lo = s;
        } else {
            hi = s;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let mut eta: Vec<f64> = f.iter().zip(h).map(|(fk, hk)| if *fk > 0.0 { fk / ((hk - h_min) + s) } else { 0.0 }).collect();
    let total: f64 = eta.iter().sum();
    eta.iter_mut().for_each(|e| *e /= total);
    Ok(EtaSolution { eta, lambda: s - h_min, degenerate: false })
}
