use serde::{Deserialize, Serialize};

use super::problem::{FitProblem, UserStats};
use crate::error::{Error, Result};
use crate::model::{Action, Dataset, ModelConfig, ModelIndex, UserParams};

/// Responsibilities of one answer: exogenous, badge, and the candidate
/// questions aggregated by tag as `(tag, share)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponsibility {
    pub exogenous: f64,
    pub badge: f64,
    pub tags: Vec<(usize, f64)>,
}

impl AnswerResponsibility {
    pub fn total(&self) -> f64 {
        self.exogenous + self.badge + self.tags.iter().map(|(_, p)| p).sum::<f64>()
    }
}

/// Variational state of one user, aligned with the user's observed events.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserEStep {
    /// `[exogenous, badge]` per question.
    pub phi_q: Vec<[f64; 2]>,
    pub phi_a: Vec<AnswerResponsibility>,
    pub zeta: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EStepState {
    pub users: Vec<UserEStep>,
}

fn event_user(dataset: &Dataset, event: usize, action: Action) -> Result<usize> {
    let e = dataset
        .events()
        .get(event)
        .ok_or_else(|| Error::InvalidArgument(format!("event {event} out of range")))?;
    if e.action() != action {
        return Err(Error::InvalidArgument(format!("event {event} is not a {action:?}")));
    }
    Ok(e.user)
}

fn user_params(params: &[UserParams], user: usize) -> Result<&UserParams> {
    params.get(user).ok_or_else(|| Error::InvalidArgument(format!("no parameters for user {user}")))
}

/// Responsibilities `[exogenous, badge]` of a question.
pub fn e_step_question(event: usize, dataset: &Dataset, params: &[UserParams], cfg: &ModelConfig) -> Result<[f64; 2]> {
    let user = event_user(dataset, event, Action::Question)?;
    let p = user_params(params, user)?;
    let g = ModelIndex::new(dataset, cfg).badge_sum(user, Action::Question, dataset.event(event).time);
    question_shares(event, p, g)
}

fn question_shares(event: usize, p: &UserParams, badge: f64) -> Result<[f64; 2]> {
    let parts = [p.mu_q, p.rho_q * badge];
    let lambda = parts[0] + parts[1];
    if !(lambda > 0.0) {
        return Err(Error::ZeroLikelihood { event, reason: "question intensity is zero".into() });
    }
    Ok([parts[0] / lambda, parts[1] / lambda])
}

/// Responsibilities of an answer over exogenous, badge, then each candidate
/// question in time order.
pub fn e_step_answer(event: usize, dataset: &Dataset, params: &[UserParams], cfg: &ModelConfig) -> Result<Vec<f64>> {
    let user = event_user(dataset, event, Action::Answer)?;
    let p = user_params(params, user)?;
    let index = ModelIndex::new(dataset, cfg);
    let t = dataset.event(event).time;
    let weights = candidate_weights(dataset, cfg, event, p);
    let mut out = vec![p.mu_a, p.rho_a * index.badge_sum(user, Action::Answer, t)];
    out.extend(weights);
    let lambda: f64 = out.iter().sum();
    if !(lambda > 0.0) {
        return Err(Error::ZeroLikelihood { event, reason: "answer intensity is zero".into() });
    }
    out.iter_mut().for_each(|x| *x /= lambda);
    Ok(out)
}

/// `eta f` for every candidate question of an answer, the answered question included.
fn candidate_weights(dataset: &Dataset, cfg: &ModelConfig, event: usize, p: &UserParams) -> Vec<f64> {
    let e = dataset.event(event);
    let qs = dataset.questions();
    let window = dataset.question_window(e.time, cfg.max_lag());
    let mut out = Vec::with_capacity(window.len() + 1);
    let weight = |qi: usize| {
        let q = dataset.event(qi);
        p.eta[q.tag().unwrap_or(0)] * (-cfg.decay_w * (e.time - q.time)).exp()
    };
    if let Some(parent) = e.parent() {
        if e.time - dataset.event(parent).time > cfg.max_lag() {
            out.push(weight(parent));
        }
    }
    out.extend(window.map(|pos| weight(qs[pos])));
    out
}

/// Variational parameter that makes the linearized log-normalizer of the
/// answer's parent distribution tight: the reciprocal of its normalizer.
pub fn update_zeta(event: usize, dataset: &Dataset, params: &[UserParams], cfg: &ModelConfig) -> Result<f64> {
    let user = event_user(dataset, event, Action::Answer)?;
    let p = user_params(params, user)?;
    let x: f64 = candidate_weights(dataset, cfg, event, p).iter().sum();
    if !(x > 0.0) {
        return Err(Error::DegenerateParameter(format!("answer {event} has no candidate of positive weight")));
    }
    Ok(1.0 / x)
}

pub(crate) fn user_e_step(stats: &UserStats, p: &UserParams) -> Result<UserEStep> {
    let phi_q = stats
        .question_events
        .iter()
        .zip(&stats.question_badges)
        .map(|(&i, &g)| question_shares(i, p, g))
        .collect::<Result<_>>()?;
    let mut phi_a = Vec::with_capacity(stats.answer_events.len());
    let mut zeta = Vec::with_capacity(stats.answer_events.len());
    for (j, &event) in stats.answer_events.iter().enumerate() {
        let exo = p.mu_a;
        let badge = p.rho_a * stats.answer_badges[j];
        let tags: Vec<(usize, f64)> = stats.answer_mass[j].iter().map(|&(k, m)| (k, p.eta[k] * m)).collect();
        let x: f64 = tags.iter().map(|(_, v)| v).sum();
        let lambda = exo + badge + x;
        if !(lambda > 0.0) {
            return Err(Error::ZeroLikelihood { event, reason: "answer intensity is zero".into() });
        }
        if !(x > 0.0) {
            return Err(Error::DegenerateParameter(format!("answer {event} has no candidate of positive weight")));
        }
        phi_a.push(AnswerResponsibility {
            exogenous: exo / lambda,
            badge: badge / lambda,
            tags: tags.into_iter().map(|(k, v)| (k, v / lambda)).collect(),
        });
        zeta.push(1.0 / x);
    }
    Ok(UserEStep { phi_q, phi_a, zeta })
}

/// Exact coordinate update of all responsibilities and `zeta` at `params`.
pub fn e_step(problem: &FitProblem<'_>, params: &[UserParams]) -> Result<EStepState> {
    use rayon::prelude::*;
    if params.len() != problem.num_users() {
        return Err(Error::InvalidArgument(format!("{} parameter sets for {} users", params.len(), problem.num_users())));
    }
    let users = problem.users().par_iter().zip(params).map(|(s, p)| user_e_step(s, p)).collect::<Result<_>>()?;
    Ok(EStepState { users })
}
