use serde::{Deserialize, Serialize};

use super::dataset::Action;
use super::kernel::KernelKind;
use crate::error::{Error, Result};

/// Summary of a user's history that a badge criterion is measured on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressFeature {
    /// Number of qualifying events so far.
    EventCount,
    /// Number of distinct day buckets containing a qualifying event.
    ActiveDays,
}

fn default_day_length() -> f64 {
    1.0
}

/// One threshold badge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BadgeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub action: Action,
    pub threshold: f64,
    pub feature: ProgressFeature,
    pub kernel: KernelKind,
    pub bandwidth: f64,
    #[serde(default = "default_day_length")]
    pub day_length: f64,
}

impl BadgeSpec {
    pub fn new(action: Action, threshold: f64, feature: ProgressFeature, kernel: KernelKind, bandwidth: f64) -> Self {
        BadgeSpec { name: None, action, threshold, feature, kernel, bandwidth, day_length: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.threshold) || !ok(self.bandwidth) || !ok(self.day_length) {
            return Err(Error::InvalidArgument(format!(
                "badge {:?}: threshold, bandwidth and day_length must be positive (got {}, {}, {})",
                self.name, self.threshold, self.bandwidth, self.day_length
            )));
        }
        Ok(())
    }

    /// Kernel response at progress `x`; inputs are assumed validated.
    #[inline]
    pub fn response(&self, x: f64) -> f64 {
        self.kernel.eval(x, self.threshold, self.bandwidth)
    }
}

fn default_cutoff() -> f64 {
    1e-12
}

fn default_time_unit() -> String {
    "days".to_string()
}

/// Model structure shared by all users: badge sets and the question-to-answer decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub badges_q: Vec<BadgeSpec>,
    pub badges_a: Vec<BadgeSpec>,
    /// Rate of the exponential decay between a question and the answers it triggers.
    pub decay_w: f64,
    /// Question terms whose decay factor falls below this are dropped.
    #[serde(default = "default_cutoff")]
    pub cross_cutoff: f64,
    #[serde(default = "default_time_unit")]
    pub time_unit: String,
}

impl ModelConfig {
    pub fn new(badges_q: Vec<BadgeSpec>, badges_a: Vec<BadgeSpec>, decay_w: f64) -> Self {
        ModelConfig { badges_q, badges_a, decay_w, cross_cutoff: default_cutoff(), time_unit: default_time_unit() }
    }

    pub fn badges(&self, action: Action) -> &[BadgeSpec] {
        match action {
            Action::Question => &self.badges_q,
            Action::Answer => &self.badges_a,
        }
    }

    /// Largest question-to-answer lag whose decay factor stays at or above the cutoff.
    pub fn max_lag(&self) -> f64 {
        (1.0 / self.cross_cutoff).ln() / self.decay_w
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay_w.is_finite() && self.decay_w > 0.0) {
            return Err(Error::InvalidArgument(format!("decay_w must be positive, got {}", self.decay_w)));
        }
        if !(self.cross_cutoff > 0.0 && self.cross_cutoff < 1.0) {
            return Err(Error::InvalidArgument(format!("cross_cutoff must lie in (0,1), got {}", self.cross_cutoff)));
        }
        for (action, list) in [(Action::Question, &self.badges_q), (Action::Answer, &self.badges_a)] {
            for b in list {
                b.validate()?;
                if b.action != action {
                    return Err(Error::InvalidArgument(format!(
                        "badge {:?} declared for {:?} but listed under {:?}",
                        b.name, b.action, action
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-user parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserParams {
    pub mu_q: f64,
    pub mu_a: f64,
    pub rho_q: f64,
    pub rho_a: f64,
    /// Interest over tags, used for question marks.
    pub alpha: Vec<f64>,
    /// Expertise over tags, weighting question-triggered answering.
    pub eta: Vec<f64>,
}

const SIMPLEX_TOL: f64 = 1e-9;

impl UserParams {
    /// Exogenous-only parameters with uniform simplices.
    pub fn uniform(num_tags: usize, mu_q: f64, mu_a: f64) -> Self {
        let u = 1.0 / num_tags as f64;
        UserParams { mu_q, mu_a, rho_q: 0.0, rho_a: 0.0, alpha: vec![u; num_tags], eta: vec![u; num_tags] }
    }

    pub fn mu(&self, action: Action) -> f64 {
        match action {
            Action::Question => self.mu_q,
            Action::Answer => self.mu_a,
        }
    }

    pub fn rho(&self, action: Action) -> f64 {
        match action {
            Action::Question => self.rho_q,
            Action::Answer => self.rho_a,
        }
    }

    pub fn validate(&self, num_tags: usize) -> Result<()> {
        for (name, v) in [("mu_q", self.mu_q), ("mu_a", self.mu_a), ("rho_q", self.rho_q), ("rho_a", self.rho_a)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        for (name, v) in [("alpha", &self.alpha), ("eta", &self.eta)] {
            if v.len() != num_tags {
                return Err(Error::InvalidArgument(format!("{name} has length {}, expected {num_tags}", v.len())));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidArgument(format!("{name} has a negative or non-finite entry")));
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidArgument(format!("{name} sums to {s}, not 1")));
            }
        }
        Ok(())
    }
}

pub fn validate_all(params: &[UserParams], num_users: usize, num_tags: usize) -> Result<()> {
    if params.len() != num_users {
        return Err(Error::InvalidArgument(format!("{} parameter sets for {num_users} users", params.len())));
    }
    for (u, p) in params.iter().enumerate() {
        p.validate(num_tags).map_err(|e| Error::InvalidArgument(format!("user {u}: {e}")))?;
    }
    Ok(())
}
