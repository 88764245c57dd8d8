//! Intensities, mark distributions, compensators and the observed-data
//! log-likelihood, exposed as standalone functions over a dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Action, Dataset, Horizons};
use super::index::ModelIndex;
use super::params::{validate_all, ModelConfig, UserParams};
use crate::error::{Error, Result};

fn check_time(dataset: &Dataset, t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0 && t <= dataset.horizon()) {
        return Err(Error::InvalidArgument(format!("t={t} outside [0, {}]", dataset.horizon())));
    }
    Ok(())
}

fn check_user(dataset: &Dataset, user: usize) -> Result<()> {
    if user >= dataset.num_users() {
        return Err(Error::InvalidArgument(format!("user {user} out of range (U={})", dataset.num_users())));
    }
    Ok(())
}

fn check_interval(dataset: &Dataset, t0: f64, t1: f64) -> Result<()> {
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!("interval end {t1} precedes start {t0}")));
    }
    check_time(dataset, t0)?;
    check_time(dataset, t1)
}

pub fn question_intensity(user: usize, t: f64, dataset: &Dataset, params: &UserParams, cfg: &ModelConfig) -> Result<f64> {
    check_user(dataset, user)?;
    check_time(dataset, t)?;
    Ok(ModelIndex::new(dataset, cfg).question_intensity(user, t, params))
}

pub fn answer_intensity(user: usize, t: f64, dataset: &Dataset, params: &UserParams, cfg: &ModelConfig) -> Result<f64> {
    check_user(dataset, user)?;
    check_time(dataset, t)?;
    Ok(ModelIndex::new(dataset, cfg).answer_intensity(user, t, params))
}

/// Tag distribution of the user's questions: `alpha` normalized.
pub fn question_mark_pmf(params: &UserParams) -> Result<Vec<f64>> {
    let total: f64 = params.alpha.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateParameter("alpha has no positive mass".into()));
    }
    Ok(params.alpha.iter().map(|a| a / total).collect())
}

/// Distribution over which earlier question an answer at `t` responds to,
/// as `(event index, probability)` pairs in time order.
pub fn answer_parent_pmf(
    user: usize,
    t: f64,
    dataset: &Dataset,
    params: &UserParams,
    cfg: &ModelConfig,
) -> Result<Vec<(usize, f64)>> {
    check_user(dataset, user)?;
    check_time(dataset, t)?;
    let window = dataset.question_window(t, cfg.max_lag());
    if window.is_empty() {
        return Err(Error::NoCandidate { t });
    }
    let qs = dataset.questions();
    let weights: Vec<(usize, f64)> = window
        .map(|pos| {
            let e = dataset.event(qs[pos]);
            (qs[pos], params.eta[e.tag().unwrap_or(0)] * (-cfg.decay_w * (t - e.time)).exp())
        })
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateParameter(format!("all parent weights vanish at t={t}")));
    }
    Ok(weights.into_iter().map(|(i, w)| (i, w / total)).collect())
}

pub fn question_compensator(
    user: usize,
    dataset: &Dataset,
    params: &UserParams,
    cfg: &ModelConfig,
    t0: f64,
    t1: f64,
) -> Result<f64> {
    check_user(dataset, user)?;
    check_interval(dataset, t0, t1)?;
    Ok(ModelIndex::new(dataset, cfg).question_compensator(user, params, t0, t1))
}

pub fn answer_compensator(
    user: usize,
    dataset: &Dataset,
    params: &UserParams,
    cfg: &ModelConfig,
    t0: f64,
    t1: f64,
) -> Result<f64> {
    check_user(dataset, user)?;
    check_interval(dataset, t0, t1)?;
    Ok(ModelIndex::new(dataset, cfg).answer_compensator(user, params, t0, t1))
}

/// Log-likelihood terms of one user, split by process and component.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserLikelihood {
    /// Sum of log question intensities at the user's questions.
    pub question_events: f64,
    pub question_marks: f64,
    pub question_compensator: f64,
    pub answer_events: f64,
    pub answer_marks: f64,
    pub answer_compensator: f64,
}

impl UserLikelihood {
    pub fn temporal(&self) -> f64 {
        self.question_events - self.question_compensator + self.answer_events - self.answer_compensator
    }

    pub fn total(&self) -> f64 {
        self.temporal() + self.question_marks + self.answer_marks
    }
}

/// Per-user breakdown of the log-likelihood with per-user observation windows.
pub fn log_likelihood_breakdown(
    dataset: &Dataset,
    params: &[UserParams],
    cfg: &ModelConfig,
    horizons: &Horizons,
) -> Result<Vec<UserLikelihood>> {
    cfg.validate()?;
    validate_all(params, dataset.num_users(), dataset.num_tags())?;
    horizons.validate(dataset)?;
    let index = ModelIndex::new(dataset, cfg);
    (0..dataset.num_users())
        .into_par_iter()
        .map(|u| user_log_likelihood(&index, u, &params[u], horizons))
        .collect()
}

fn user_log_likelihood(index: &ModelIndex<'_>, user: usize, p: &UserParams, horizons: &Horizons) -> Result<UserLikelihood> {
    let data = index.dataset();
    let mut out = UserLikelihood::default();
    let alpha_total: f64 = p.alpha.iter().sum();
    for &i in horizons.observed(data, user, Action::Question) {
        let e = data.event(i);
        let lambda = index.question_intensity(user, e.time, p);
        if !(lambda > 0.0) {
            return Err(Error::ZeroLikelihood { event: i, reason: "question intensity is zero".into() });
        }
        let prob = p.alpha[e.tag().unwrap_or(0)] / alpha_total;
        if !(prob > 0.0) {
            return Err(Error::ZeroLikelihood { event: i, reason: "tag probability is zero".into() });
        }
        out.question_events += lambda.ln();
        out.question_marks += prob.ln();
    }
    out.question_compensator = index.question_compensator(user, p, 0.0, horizons.end(user, Action::Question));

    for &j in horizons.observed(data, user, Action::Answer) {
        let e = data.event(j);
        let terms = index.answer_terms(j);
        let cross: f64 = terms.tag_mass.iter().zip(&p.eta).map(|(m, h)| m * h).sum();
        let lambda = p.mu_a + p.rho_a * index.badge_sum(user, Action::Answer, e.time) + cross;
        if !(lambda > 0.0) {
            return Err(Error::ZeroLikelihood { event: j, reason: "answer intensity is zero".into() });
        }
        let numer = p.eta[terms.parent_tag] * terms.parent_decay;
        if !(numer > 0.0 && cross > 0.0) {
            return Err(Error::ZeroLikelihood { event: j, reason: "parent probability is zero".into() });
        }
        out.answer_events += lambda.ln();
        out.answer_marks += numer.ln() - cross.ln();
    }
    out.answer_compensator = index.answer_compensator(user, p, 0.0, horizons.end(user, Action::Answer));
    Ok(out)
}

/// Observed-data log-likelihood of the whole log over `[0, T]`.
pub fn dataset_log_likelihood(dataset: &Dataset, params: &[UserParams], cfg: &ModelConfig) -> Result<f64> {
    let horizons = Horizons::uniform(dataset.num_users(), dataset.horizon());
    Ok(log_likelihood_breakdown(dataset, params, cfg, &horizons)?.iter().map(UserLikelihood::total).sum())
}
