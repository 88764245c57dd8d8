use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Action, Dataset, Horizons, ModelConfig, ModelIndex};

/// Parameter-free statistics of one user's observed events.
#[derive(Clone, Debug, Default)]
pub struct UserStats {
    pub question_events: Vec<usize>,
    pub question_tags: Vec<usize>,
    /// Badge-kernel sum at each observed question.
    pub question_badges: Vec<f64>,
    pub question_end: f64,
    pub question_badge_integral: f64,
    pub answer_events: Vec<usize>,
    pub answer_badges: Vec<f64>,
    /// Nonzero per-tag candidate masses at each observed answer.
    pub answer_mass: Vec<Vec<(usize, f64)>>,
    pub answer_parent_tag: Vec<usize>,
    pub answer_parent_decay: Vec<f64>,
    pub answer_end: f64,
    pub answer_badge_integral: f64,
    /// Per-tag integral of question-triggered decay over the answer window.
    pub excitation_integral: Vec<f64>,
}

impl UserStats {
    fn build(index: &ModelIndex<'_>, horizons: &Horizons, user: usize) -> Self {
        let data = index.dataset();
        let question_events = horizons.observed(data, user, Action::Question).to_vec();
        let question_end = horizons.end(user, Action::Question);
        let question_tags = question_events.iter().map(|&i| data.event(i).tag().unwrap_or(0)).collect();
        let question_badges =
            question_events.iter().map(|&i| index.badge_sum(user, Action::Question, data.event(i).time)).collect();

        let answer_events = horizons.observed(data, user, Action::Answer).to_vec();
        let answer_end = horizons.end(user, Action::Answer);
        let mut answer_badges = Vec::with_capacity(answer_events.len());
        let mut answer_mass = Vec::with_capacity(answer_events.len());
        let mut answer_parent_tag = Vec::with_capacity(answer_events.len());
        let mut answer_parent_decay = Vec::with_capacity(answer_events.len());
        for &j in &answer_events {
            let terms = index.answer_terms(j);
            answer_badges.push(index.badge_sum(user, Action::Answer, data.event(j).time));
            answer_mass.push(terms.tag_mass.iter().enumerate().filter(|(_, m)| **m > 0.0).map(|(k, m)| (k, *m)).collect());
            answer_parent_tag.push(terms.parent_tag);
            answer_parent_decay.push(terms.parent_decay);
        }
        UserStats {
            question_events,
            question_tags,
            question_badges,
            question_end,
            question_badge_integral: index.badge_integral(user, Action::Question, 0.0, question_end),
            answer_events,
            answer_badges,
            answer_mass,
            answer_parent_tag,
            answer_parent_decay,
            answer_end,
            answer_badge_integral: index.badge_integral(user, Action::Answer, 0.0, answer_end),
            excitation_integral: index.excitation_integral_by_tag(0.0, answer_end),
        }
    }
}

/// A dataset, model configuration and observation windows with all
/// parameter-independent quantities of the likelihood precomputed.
#[derive(Clone, Debug)]
pub struct FitProblem<'a> {
    dataset: &'a Dataset,
    cfg: &'a ModelConfig,
    users: Vec<UserStats>,
}

impl<'a> FitProblem<'a> {
    pub fn new(dataset: &'a Dataset, cfg: &'a ModelConfig, horizons: &Horizons) -> Result<Self> {
        cfg.validate()?;
        horizons.validate(dataset)?;
        let index = ModelIndex::new(dataset, cfg);
        let users = (0..dataset.num_users()).into_par_iter().map(|u| UserStats::build(&index, horizons, u)).collect();
        Ok(FitProblem { dataset, cfg, users })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn config(&self) -> &'a ModelConfig {
        self.cfg
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn user(&self, user: usize) -> Result<&UserStats> {
        self.users.get(user).ok_or_else(|| Error::InvalidArgument(format!("user {user} out of range")))
    }

    pub fn users(&self) -> &[UserStats] {
        &self.users
    }
}
