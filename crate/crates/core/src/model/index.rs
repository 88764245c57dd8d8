//! Precomputed views that make intensity and compensator queries cheap.

use super::dataset::{Action, Dataset};
use super::params::{ModelConfig, UserParams};

/// Badge-qualifying event times of one user and type, with the badge sum
/// after each prefix of those events.
#[derive(Clone, Debug, Default)]
struct BadgeTrack {
    times: Vec<f64>,
    /// `sums[i]` is the badge-kernel sum once the first `i` events have happened.
    sums: Vec<f64>,
}

impl BadgeTrack {
    fn build(dataset: &Dataset, cfg: &ModelConfig, user: usize, action: Action) -> Self {
        let badges = cfg.badges(action);
        let times: Vec<f64> = dataset
            .user_events(user, action)
            .iter()
            .map(|&i| dataset.event(i))
            .filter(|e| e.counts_toward_badge)
            .map(|e| e.time)
            .collect();
        let mut trackers: Vec<_> = badges.iter().map(super::kernel::ProgressTracker::new).collect();
        let sum_now = |trs: &[super::kernel::ProgressTracker]| -> f64 {
            badges.iter().zip(trs).map(|(b, tr)| b.response(tr.value())).sum()
        };
        let mut sums = Vec::with_capacity(times.len() + 1);
        sums.push(sum_now(&trackers));
        for &t in &times {
            for tr in &mut trackers {
                tr.observe(t);
            }
            sums.push(sum_now(&trackers));
        }
        BadgeTrack { times, sums }
    }

    #[inline]
    fn sum_at(&self, t: f64) -> f64 {
        self.sums[self.times.partition_point(|&s| s < t)]
    }

    /// Integral of the piecewise-constant badge sum over `[t0, t1]`.
    fn integral(&self, t0: f64, t1: f64) -> f64 {
        let n = self.times.len();
        let mut i = self.times.partition_point(|&s| s <= t0);
        let mut cur = t0;
        let mut acc = 0.0;
        while i < n && self.times[i] < t1 {
            let next = self.times[i];
            acc += (next - cur) * self.sums[i];
            cur = next;
            while i < n && self.times[i] == next {
                i += 1;
            }
        }
        acc + (t1 - cur) * self.sums[i]
    }
}

/// Read-only index over a dataset and model configuration.
#[derive(Clone, Debug)]
pub struct ModelIndex<'a> {
    data: &'a Dataset,
    cfg: &'a ModelConfig,
    max_lag: f64,
    question_tracks: Vec<BadgeTrack>,
    answer_tracks: Vec<BadgeTrack>,
}

/// Answer-side quantities for one observed answer.
#[derive(Clone, Debug, PartialEq)]
pub struct AnswerTerms {
    /// Per-tag sum of decay factors over candidate questions.
    pub tag_mass: Vec<f64>,
    pub parent_tag: usize,
    pub parent_decay: f64,
}

impl<'a> ModelIndex<'a> {
    pub fn new(data: &'a Dataset, cfg: &'a ModelConfig) -> Self {
        let u = data.num_users();
        let question_tracks = (0..u).map(|user| BadgeTrack::build(data, cfg, user, Action::Question)).collect();
        let answer_tracks = (0..u).map(|user| BadgeTrack::build(data, cfg, user, Action::Answer)).collect();
        ModelIndex { data, cfg, max_lag: cfg.max_lag(), question_tracks, answer_tracks }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    pub fn config(&self) -> &'a ModelConfig {
        self.cfg
    }

    fn track(&self, user: usize, action: Action) -> &BadgeTrack {
        match action {
            Action::Question => &self.question_tracks[user],
            Action::Answer => &self.answer_tracks[user],
        }
    }

    /// Sum of badge kernels for the user's progress strictly before `t`.
    pub fn badge_sum(&self, user: usize, action: Action, t: f64) -> f64 {
        self.track(user, action).sum_at(t)
    }

    /// Integral of [`ModelIndex::badge_sum`] over `[t0, t1]`.
    pub fn badge_integral(&self, user: usize, action: Action, t0: f64, t1: f64) -> f64 {
        self.track(user, action).integral(t0, t1)
    }

    pub fn question_intensity(&self, user: usize, t: f64, p: &UserParams) -> f64 {
        p.mu_q + p.rho_q * self.badge_sum(user, Action::Question, t)
    }

    /// Per-tag decayed mass of questions asked strictly before `t`, within the cutoff window.
    pub fn tag_mass(&self, t: f64) -> Vec<f64> {
        let mut mass = vec![0.0; self.data.num_tags()];
        self.accumulate_window(t, &mut mass);
        mass
    }

    fn accumulate_window(&self, t: f64, mass: &mut [f64]) {
        let w = self.cfg.decay_w;
        let qs = self.data.questions();
        for pos in self.data.question_window(t, self.max_lag) {
            let e = self.data.event(qs[pos]);
            if let Some(tag) = e.tag() {
                mass[tag] += (-w * (t - e.time)).exp();
            }
        }
    }

    /// Question-triggered part of the user's answer intensity at `t`.
    pub fn excitation(&self, t: f64, p: &UserParams) -> f64 {
        let w = self.cfg.decay_w;
        let qs = self.data.questions();
        self.data
            .question_window(t, self.max_lag)
            .map(|pos| {
                let e = self.data.event(qs[pos]);
                p.eta[e.tag().unwrap_or(0)] * (-w * (t - e.time)).exp()
            })
            .sum()
    }

    pub fn answer_intensity(&self, user: usize, t: f64, p: &UserParams) -> f64 {
        p.mu_a + p.rho_a * self.badge_sum(user, Action::Answer, t) + self.excitation(t, p)
    }

    pub fn question_compensator(&self, user: usize, p: &UserParams, t0: f64, t1: f64) -> f64 {
        p.mu_q * (t1 - t0) + p.rho_q * self.badge_integral(user, Action::Question, t0, t1)
    }

    /// Per-tag integral over `[t0, t1]` of the decay factors of questions asked
    /// before `t1`. Questions whose factor already fell below the cutoff at `t0`
    /// are skipped; each carries at most `cutoff / w` of remaining mass.
    pub fn excitation_integral_by_tag(&self, t0: f64, t1: f64) -> Vec<f64> {
        let w = self.cfg.decay_w;
        let qs = self.data.questions();
        let first = self.data.questions_before(t0 - self.max_lag);
        let n = self.data.questions_before(t1).max(first);
        let mut out = vec![0.0; self.data.num_tags()];
        for &qi in &qs[first..n] {
            let e = self.data.event(qi);
            let start = t0.max(e.time);
            let v = (-w * (start - e.time)).exp() * -(-w * (t1 - start)).exp_m1() / w;
            out[e.tag().unwrap_or(0)] += v;
        }
        out
    }

    pub fn answer_compensator(&self, user: usize, p: &UserParams, t0: f64, t1: f64) -> f64 {
        let cross: f64 = self
            .excitation_integral_by_tag(t0, t1)
            .iter()
            .zip(&p.eta)
            .map(|(c, e)| c * e)
            .sum();
        p.mu_a * (t1 - t0) + p.rho_a * self.badge_integral(user, Action::Answer, t0, t1) + cross
    }

    /// Intensity of a user after `t_now` with the history frozen at `t_now`
    /// (events at `t_now` included): `(constant part, decaying part at t_now)`.
    /// The decaying part falls at rate `decay_w`.
    pub fn frozen_intensity(&self, user: usize, action: Action, t_now: f64, p: &UserParams) -> (f64, f64) {
        let track = self.track(user, action);
        let badge = track.sums[track.times.partition_point(|&s| s <= t_now)];
        match action {
            Action::Question => (p.mu_q + p.rho_q * badge, 0.0),
            Action::Answer => {
                let w = self.cfg.decay_w;
                let qs = self.data.questions();
                let times = self.data.question_times();
                let end = times.partition_point(|&q| q <= t_now);
                let start = times[..end].partition_point(|&q| t_now - q > self.max_lag);
                let cross = (start..end)
                    .map(|pos| {
                        let e = self.data.event(qs[pos]);
                        p.eta[e.tag().unwrap_or(0)] * (-w * (t_now - e.time)).exp()
                    })
                    .sum();
                (p.mu_a + p.rho_a * badge, cross)
            }
        }
    }

    /// Candidate masses for an observed answer. The answered question is always
    /// a candidate even if it lies outside the cutoff window.
    pub fn answer_terms(&self, answer: usize) -> AnswerTerms {
        let e = self.data.event(answer);
        let parent = e.parent().expect("answer_terms called on a question");
        let pe = self.data.event(parent);
        let parent_tag = pe.tag().expect("parent is a question");
        let parent_decay = (-self.cfg.decay_w * (e.time - pe.time)).exp();
        let mut tag_mass = self.tag_mass(e.time);
        if e.time - pe.time > self.max_lag {
            tag_mass[parent_tag] += parent_decay;
        }
        AnswerTerms { tag_mass, parent_tag, parent_decay }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BadgeSpec, Event, KernelKind, ProgressFeature};

    #[test]
    fn integral_handles_ties_and_interior_bounds() {
        let b = BadgeSpec::new(Action::Question, 2.0, ProgressFeature::EventCount, KernelKind::Exponential, 1.0);
        let cfg = ModelConfig::new(vec![b], vec![], 1.0);
        let d = Dataset::new(
            vec![Event::question(1.0, 0, 0), Event::question(1.0, 0, 0), Event::question(2.5, 0, 0)],
            4.0,
            1,
            1,
        )
        .unwrap();
        let idx = ModelIndex::new(&d, &cfg);
        // progress 0 on [0,1], 2 on (1,2.5], 3 after
        let g0 = (-2.0f64).exp();
        let full = idx.badge_integral(0, Action::Question, 0.0, 4.0);
        assert!((full - (g0 * 1.0 + 1.0 * 1.5)).abs() < 1e-14);
        let part = idx.badge_integral(0, Action::Question, 1.0, 2.0);
        assert!((part - 1.0).abs() < 1e-14);
        assert_eq!(idx.badge_sum(0, Action::Question, 1.0), g0);
        assert_eq!(idx.badge_sum(0, Action::Question, 1.0 + 1e-9), 1.0);
    }

    #[test]
    fn parent_outside_window_is_kept() {
        let mut cfg = ModelConfig::new(vec![], vec![], 1.0);
        cfg.cross_cutoff = 1e-3;
        let d = Dataset::new(vec![Event::question(0.0, 0, 1), Event::question(9.0, 0, 0), Event::answer(10.0, 0, 0)], 10.0, 1, 2)
            .unwrap();
        let idx = ModelIndex::new(&d, &cfg);
        let terms = idx.answer_terms(2);
        assert_eq!(terms.parent_tag, 1);
        assert!((terms.tag_mass[1] - (-10.0f64).exp()).abs() < 1e-18);
        assert!((terms.tag_mass[0] - (-1.0f64).exp()).abs() < 1e-15);
    }
}
