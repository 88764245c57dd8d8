use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UserParams;

/// Mean absolute error and mean error relative to the true waiting time.
pub fn time_errors(predicted: &[f64], actual: &[f64], reference: &[f64]) -> Result<(f64, f64)> {
    if predicted.len() != actual.len() || actual.len() != reference.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predicted, {} actual, {} reference",
            predicted.len(),
            actual.len(),
            reference.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InsufficientData("no predictions to score".into()));
    }
    let n = predicted.len() as f64;
    let mut mae = 0.0;
    let mut mre = 0.0;
    for ((p, a), r) in predicted.iter().zip(actual).zip(reference) {
        let wait = a - r;
        if !(wait > 0.0) {
            return Err(Error::InvalidArgument(format!("actual time {a} does not follow reference {r}")));
        }
        mae += (p - a).abs();
        mre += (p - a).abs() / wait;
    }
    Ok((mae / n, mre / n))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankScore {
    pub precision: f64,
    pub ndcg: f64,
}

/// Precision@k and single-relevant NDCG@k. A truth missing from its ranking
/// counts as a miss at every k.
pub fn rank_metrics(rankings: &[Vec<usize>], truths: &[usize], ks: &[usize]) -> Result<BTreeMap<usize, RankScore>> {
    if rankings.len() != truths.len() {
        return Err(Error::InvalidArgument(format!("{} rankings for {} truths", rankings.len(), truths.len())));
    }
    if let Some(k) = ks.iter().find(|k| **k < 1) {
        return Err(Error::InvalidArgument(format!("k must be at least 1, got {k}")));
    }
    let ranks: Vec<Option<usize>> =
        rankings.iter().zip(truths).map(|(r, t)| r.iter().position(|c| c == t).map(|p| p + 1)).collect();
    let n = ranks.len().max(1) as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let mut s = RankScore::default();
            for r in ranks.iter().flatten().filter(|r| **r <= k) {
                s.precision += 1.0;
                s.ndcg += 1.0 / ((*r + 1) as f64).log2();
            }
            s.precision /= n;
            s.ndcg /= n;
            (k, s)
        })
        .collect())
}

/// Kendall's tau-b. Zero when either input is constant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("Kendall tau needs at least two pairs".into()));
    }
    let (mut concordant, mut discordant, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = a[i].partial_cmp(&a[j]).unwrap_or(std::cmp::Ordering::Equal);
            let db = b[i].partial_cmp(&b[j]).unwrap_or(std::cmp::Ordering::Equal);
            use std::cmp::Ordering::Equal;
            match (da, db) {
                (Equal, Equal) => {}
                (Equal, _) => tie_a += 1,
                (_, Equal) => tie_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n_a = (concordant + discordant + tie_b) as f64;
    let n_b = (concordant + discordant + tie_a) as f64;
    if n_a == 0.0 || n_b == 0.0 {
        return Ok(0.0);
    }
    Ok((concordant - discordant) as f64 / (n_a * n_b).sqrt())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupRecovery {
    pub mre: f64,
    /// Mean over parameter types of the rank correlation between true and fitted values.
    pub kendall_tau: f64,
    /// Entries left out of the MRE because the true value is essentially zero.
    pub skipped: usize,
    pub per_type: BTreeMap<String, TypeRecovery>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeRecovery {
    pub mre: f64,
    pub kendall_tau: f64,
    pub entries: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub temporal: GroupRecovery,
    pub content: GroupRecovery,
}

const RECOVERY_FLOOR: f64 = 1e-12;

fn group(types: Vec<(&str, Vec<f64>, Vec<f64>)>) -> Result<GroupRecovery> {
    let mut g = GroupRecovery::default();
    let mut total_err = 0.0;
    let mut counted = 0usize;
    let mut tau_sum = 0.0;
    let n_types = types.len();
    for (name, truth, fitted) in types {
        let mut t = TypeRecovery { entries: truth.len(), ..Default::default() };
        let mut err = 0.0;
        for (a, b) in truth.iter().zip(&fitted) {
            if *a < RECOVERY_FLOOR {
                t.skipped += 1;
            } else {
                err += (a - b).abs() / a;
            }
        }
        let used = truth.len() - t.skipped;
        t.mre = if used > 0 { err / used as f64 } else { 0.0 };
        t.kendall_tau = kendall_tau(&truth, &fitted)?;
        total_err += err;
        counted += used;
        g.skipped += t.skipped;
        tau_sum += t.kendall_tau;
        g.per_type.insert(name.to_string(), t);
    }
    g.mre = if counted > 0 { total_err / counted as f64 } else { 0.0 };
    g.kendall_tau = tau_sum / n_types as f64;
    Ok(g)
}

/// Parameter-recovery errors for the temporal parameters
/// `{mu_q, mu_a, rho_q, rho_a}` and the content parameters `{alpha, eta}`.
/// Rank correlations are taken across users per scalar type, and across all
/// (user, tag) entries for the vector types.
pub fn recovery_report(truth: &[UserParams], fitted: &[UserParams]) -> Result<RecoveryReport> {
    if truth.len() != fitted.len() || truth.len() < 2 {
        return Err(Error::InvalidArgument(format!("need matching user sets of size >= 2, got {} and {}", truth.len(), fitted.len())));
    }
    let k = truth[0].alpha.len();
    if truth.iter().chain(fitted).any(|p| p.alpha.len() != k || p.eta.len() != k) {
        return Err(Error::InvalidArgument("tag dimensions differ".into()));
    }
    let scalar = |f: fn(&UserParams) -> f64| -> (Vec<f64>, Vec<f64>) {
        (truth.iter().map(f).collect(), fitted.iter().map(f).collect())
    };
    let vector = |f: fn(&UserParams) -> &Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        (truth.iter().flat_map(|p| f(p).iter().copied()).collect(), fitted.iter().flat_map(|p| f(p).iter().copied()).collect())
    };
    let (a, b) = scalar(|p| p.mu_q);
    let (c, d) = scalar(|p| p.mu_a);
    let (e, f) = scalar(|p| p.rho_q);
    let (g, h) = scalar(|p| p.rho_a);
    let temporal = group(vec![("mu_q", a, b), ("mu_a", c, d), ("rho_q", e, f), ("rho_a", g, h)])?;
    let (a, b) = vector(|p| &p.alpha);
    let (c, d) = vector(|p| &p.eta);
    let content = group(vec![("alpha", a, b), ("eta", c, d)])?;
    Ok(RecoveryReport { temporal, content })
}
