//! Synthetic parameter generation and event simulation by Ogata thinning.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Action, BadgeSpec, Dataset, Event, KernelKind, ModelConfig, ProgressFeature, ProgressTracker, UserParams,
};

/// Bandwidths of comparable reach for the two badge kernels at desk scale:
/// both respond over roughly forty events around a threshold.
pub const DESK_GAUSSIAN_OMEGA: f64 = 20.0;
pub const DESK_EXPONENTIAL_OMEGA: f64 = 0.05;

/// Hard time cap for count-based stop rules.
pub const TIME_CAP: f64 = 1e7;

/// When a simulation run ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Simulate over `[0, horizon]`.
    Horizon { horizon: f64 },
    /// Run until every user has at least `target` events.
    EventsPerUser { target: usize },
    /// Run until `total` events have been generated.
    TotalEvents { total: usize },
}

fn default_feature() -> ProgressFeature {
    ProgressFeature::EventCount
}

/// Recipe for drawing a synthetic population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_tags: usize,
    pub n_badges_q: usize,
    pub n_badges_a: usize,
    pub tau_range: (f64, f64),
    pub dirichlet_concentration: f64,
    pub mu_q_range: (f64, f64),
    pub mu_a_range: (f64, f64),
    pub rho_range: (f64, f64),
    pub kernel: KernelKind,
    pub omega: f64,
    #[serde(default = "default_feature")]
    pub feature: ProgressFeature,
    pub decay_w: f64,
    #[serde(default)]
    pub seed: u64,
    pub stop: StopRule,
}

impl SyntheticConfig {
    /// The population of the original synthetic study: 100 users, 50 tags,
    /// five badges per action with thresholds in `U(0, 500)`.
    pub fn full() -> Self {
        SyntheticConfig {
            num_users: 100,
            num_tags: 50,
            n_badges_q: 5,
            n_badges_a: 5,
            tau_range: (0.0, 500.0),
            dirichlet_concentration: 0.1,
            mu_q_range: (0.0, 0.01),
            mu_a_range: (0.0, 0.05),
            rho_range: (0.0, 1.0),
            kernel: KernelKind::Gaussian,
            omega: 25.0,
            feature: ProgressFeature::EventCount,
            decay_w: 1.0,
            seed: 0,
            stop: StopRule::EventsPerUser { target: 1400 },
        }
    }

    /// A laptop-sized population used by the test suites and the CLI example.
    ///
    /// Thresholds stay within reach of a few hundred events per user so every
    /// badge weight is identifiable from the data; rates are bounded away
    /// from zero for the same reason.
    pub fn desk() -> Self {
        SyntheticConfig {
            num_users: 20,
            num_tags: 10,
            n_badges_q: 3,
            n_badges_a: 3,
            tau_range: (0.0, 100.0),
            dirichlet_concentration: 0.1,
            mu_q_range: (0.05, 0.5),
            mu_a_range: (0.05, 0.5),
            rho_range: (0.05, 1.0),
            kernel: KernelKind::Gaussian,
            omega: DESK_GAUSSIAN_OMEGA,
            feature: ProgressFeature::EventCount,
            decay_w: 2.0,
            seed: 0,
            stop: StopRule::TotalEvents { total: 20 * 500 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_users == 0 || self.num_tags == 0 {
            return bad("num_users and num_tags must be positive".into());
        }
        for (name, (lo, hi)) in [
            ("tau_range", self.tau_range),
            ("mu_q_range", self.mu_q_range),
            ("mu_a_range", self.mu_a_range),
            ("rho_range", self.rho_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return bad(format!("{name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})"));
            }
        }
        if !(self.dirichlet_concentration > 0.0 && self.omega > 0.0 && self.decay_w > 0.0) {
            return bad("dirichlet_concentration, omega and decay_w must be positive".into());
        }
        match self.stop {
            StopRule::Horizon { horizon } if !(horizon > 0.0 && horizon.is_finite()) => bad("horizon must be positive".into()),
            StopRule::EventsPerUser { target: 0 } | StopRule::TotalEvents { total: 0 } => bad("event targets must be positive".into()),
            _ => Ok(()),
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draw from a symmetric Dirichlet through normalized Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, k: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        // every Gamma draw underflowed: the mass sits on a single corner
        let hot = rng.random_range(0..k);
        v = (0..k).map(|i| if i == hot { 1.0 } else { 0.0 }).collect();
    }
    v
}

/// Draw badge thresholds and per-user parameters.
pub fn sample_synthetic_params<R: Rng + ?Sized>(cfg: &SyntheticConfig, rng: &mut R) -> Result<(Vec<UserParams>, ModelConfig)> {
    cfg.validate()?;
    let make_badges = |action: Action, n: usize, rng: &mut R| -> Vec<BadgeSpec> {
        (0..n)
            .map(|_| {
                // thresholds must stay positive
                let tau = uniform(rng, cfg.tau_range).max(f64::MIN_POSITIVE);
                BadgeSpec::new(action, tau, cfg.feature, cfg.kernel, cfg.omega)
            })
            .collect()
    };
    let badges_q = make_badges(Action::Question, cfg.n_badges_q, rng);
    let badges_a = make_badges(Action::Answer, cfg.n_badges_a, rng);
    let model = ModelConfig::new(badges_q, badges_a, cfg.decay_w);
    let params = (0..cfg.num_users)
        .map(|_| {
            let alpha = sample_dirichlet(rng, cfg.num_tags, cfg.dirichlet_concentration);
            let eta = sample_dirichlet(rng, cfg.num_tags, cfg.dirichlet_concentration);
            let mu_q = uniform(rng, cfg.mu_q_range);
            let mu_a = uniform(rng, cfg.mu_a_range);
            let rho_q = uniform(rng, cfg.rho_range);
            let rho_a = uniform(rng, cfg.rho_range);
            UserParams { mu_q, mu_a, rho_q, rho_a, alpha, eta }
        })
        .collect();
    Ok((params, model))
}

/// Result of one simulation run.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub dataset: Dataset,
    /// A count-based stop rule hit [`TIME_CAP`] before its target.
    pub cap_reached: bool,
    pub proposals: usize,
    /// Answer proposals dropped because no question could serve as parent.
    pub orphan_answers: usize,
}

struct UserState {
    question_progress: Vec<ProgressTracker>,
    answer_progress: Vec<ProgressTracker>,
    question_badges: f64,
    answer_badges: f64,
    events: usize,
}

impl UserState {
    fn new(cfg: &ModelConfig) -> Self {
        let mut s = UserState {
            question_progress: cfg.badges_q.iter().map(ProgressTracker::new).collect(),
            answer_progress: cfg.badges_a.iter().map(ProgressTracker::new).collect(),
            question_badges: 0.0,
            answer_badges: 0.0,
            events: 0,
        };
        s.refresh(cfg);
        s
    }

    fn refresh(&mut self, cfg: &ModelConfig) {
        self.question_badges = cfg.badges_q.iter().zip(&self.question_progress).map(|(b, p)| b.response(p.value())).sum();
        self.answer_badges = cfg.badges_a.iter().zip(&self.answer_progress).map(|(b, p)| b.response(p.value())).sum();
    }

    fn base_rate(&self, p: &UserParams) -> f64 {
        p.mu_q + p.rho_q * self.question_badges + p.mu_a + p.rho_a * self.answer_badges
    }
}

/// Sample an event log from the model by thinning.
///
/// Between accepted events every badge term is constant and every
/// question-triggered term decays, so the total intensity at the current time
/// dominates the process until the next accepted event. The bound is
/// refreshed after every proposal.
pub fn simulate<R: Rng + ?Sized>(params: &[UserParams], cfg: &ModelConfig, stop: StopRule, rng: &mut R) -> Result<Simulation> {
    cfg.validate()?;
    let num_users = params.len();
    if num_users == 0 {
        return Err(Error::InvalidArgument("no users to simulate".into()));
    }
    let num_tags = params[0].alpha.len();
    crate::model::validate_all(params, num_users, num_tags)?;

    let w = cfg.decay_w;
    let max_lag = cfg.max_lag();
    let eta_column: Vec<f64> = (0..num_tags).map(|k| params.iter().map(|p| p.eta[k]).sum()).collect();

    let mut users: Vec<UserState> = (0..num_users).map(|_| UserState::new(cfg)).collect();
    let mut events: Vec<Event> = Vec::new();
    // (time, tag, event index) of every question, in time order
    let mut questions: Vec<(f64, usize, usize)> = Vec::new();
    let mut window_start = 0usize;
    let mut tag_mass = vec![0.0; num_tags];
    let mut mass_time = 0.0;

    let mut base: f64 = users.iter().zip(params).map(|(s, p)| s.base_rate(p)).sum();
    let mut cross = 0.0;
    let mut t = 0.0;
    let mut last_event = f64::NEG_INFINITY;
    let mut proposals = 0usize;
    let mut orphan_answers = 0usize;
    let mut cap_reached = false;
    let mut done_users = 0usize;

    let limit = match stop {
        StopRule::Horizon { horizon } => horizon,
        _ => TIME_CAP,
    };

    let end_time = loop {
        match stop {
            StopRule::TotalEvents { total } if events.len() >= total => break last_event,
            StopRule::EventsPerUser { .. } if done_users == num_users => break last_event,
            _ => {}
        }
        let bound = base + cross * (-w * (t - mass_time)).exp();
        if !(bound > 0.0) {
            match stop {
                StopRule::Horizon { horizon } => break horizon,
                _ => return Err(Error::InsufficientData("total intensity vanished before the event target".into())),
            }
        }
        let wait: f64 = Exp1.sample(rng);
        let s = t + wait / bound;
        proposals += 1;
        if s > limit {
            if !matches!(stop, StopRule::Horizon { .. }) {
                cap_reached = true;
            }
            break limit;
        }
        let decay = (-w * (s - mass_time)).exp();
        let current = base + cross * decay;
        if current > bound * (1.0 + 1e-9) {
            return Err(Error::InternalInvariant(format!("thinning ratio {} exceeds one at t={s}", current / bound)));
        }
        t = s;
        if rng.random::<f64>() * bound > current {
            continue;
        }

        // Bring the question masses to the accepted time.
        tag_mass.iter_mut().for_each(|m| *m *= decay);
        mass_time = s;

        let mut pick = rng.random::<f64>() * current;
        let mut chosen: Option<(usize, Action)> = None;
        let mut last_positive = (num_users - 1, Action::Answer);
        for (u, (state, p)) in users.iter().zip(params).enumerate() {
            let q = p.mu_q + p.rho_q * state.question_badges;
            if q > 0.0 {
                last_positive = (u, Action::Question);
            }
            if pick < q {
                chosen = Some((u, Action::Question));
                break;
            }
            pick -= q;
            let a = p.mu_a
                + p.rho_a * state.answer_badges
                + p.eta.iter().zip(&tag_mass).map(|(e, m)| e * m).sum::<f64>();
            if a > 0.0 {
                last_positive = (u, Action::Answer);
            }
            if pick < a {
                chosen = Some((u, Action::Answer));
                break;
            }
            pick -= a;
        }
        // Rounding can leave a sliver of mass past the last user.
        let (user, action) = chosen.unwrap_or(last_positive);
        let p = &params[user];

        let time = if s <= last_event { last_event + 1e-12 } else { s };
        let event = match action {
            Action::Question => {
                let total: f64 = p.alpha.iter().sum();
                let mut v = rng.random::<f64>() * total;
                let mut tag = num_tags - 1;
                for (k, a) in p.alpha.iter().enumerate() {
                    if v < *a {
                        tag = k;
                        break;
                    }
                    v -= a;
                }
                Event::question(time, user, tag)
            }
            Action::Answer => {
                while window_start < questions.len() && time - questions[window_start].0 > max_lag {
                    window_start += 1;
                }
                let candidates = &questions[window_start..];
                let weight = |&(qt, tag, _): &(f64, usize, usize)| p.eta[tag] * (-w * (time - qt)).exp();
                let total: f64 = candidates.iter().map(weight).sum();
                if !(total > 0.0) {
                    orphan_answers += 1;
                    continue;
                }
                let mut v = rng.random::<f64>() * total;
                let mut parent = candidates[candidates.len() - 1].2;
                for c in candidates {
                    let x = weight(c);
                    if v < x {
                        parent = c.2;
                        break;
                    }
                    v -= x;
                }
                Event::answer(time, user, parent)
            }
        };

        let state = &mut users[user];
        match action {
            Action::Question => {
                let tag = event.tag().unwrap_or(0);
                questions.push((time, tag, events.len()));
                tag_mass[tag] += 1.0;
                state.question_progress.iter_mut().for_each(|tr| tr.observe(time));
            }
            Action::Answer => state.answer_progress.iter_mut().for_each(|tr| tr.observe(time)),
        }
        state.refresh(cfg);
        state.events += 1;
        if let StopRule::EventsPerUser { target } = stop {
            if state.events == target {
                done_users += 1;
            }
        }
        events.push(event);
        last_event = time;
        base = users.iter().zip(params).map(|(s, p)| s.base_rate(p)).sum();
        cross = eta_column.iter().zip(&tag_mass).map(|(e, m)| e * m).sum();
    };

    let horizon = if end_time > 0.0 { end_time } else { f64::MIN_POSITIVE };
    let dataset = Dataset::new(events, horizon, num_users, num_tags)?;
    Ok(Simulation { dataset, cap_reached, proposals, orphan_answers })
}
