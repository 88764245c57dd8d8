//! Badge kernels, the question-to-answer decay, and badge progress features.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::params::{BadgeSpec, ProgressFeature};
use crate::error::{ensure_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-((tau - x) / (2 omega))^2)`
    Gaussian,
    /// `exp(-omega (tau - x))` while `x <= tau`, zero once the threshold is passed.
    Exponential,
}

impl KernelKind {
    #[inline]
    pub fn eval(self, x: f64, tau: f64, omega: f64) -> f64 {
        match self {
            KernelKind::Gaussian => {
                let z = (tau - x) / (2.0 * omega);
                (-z * z).exp()
            }
            KernelKind::Exponential => {
                if tau >= x {
                    (-omega * (tau - x)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Response of a badge kernel to progress `x` toward threshold `tau`. Always in `[0, 1]`.
pub fn badge_kernel(kind: KernelKind, x: f64, tau: f64, omega: f64) -> Result<f64> {
    ensure_finite("x", x)?;
    ensure_finite("tau", tau)?;
    ensure_finite("omega", omega)?;
    if omega <= 0.0 {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {omega}")));
    }
    Ok(kind.eval(x, tau, omega))
}

/// Decay factor `exp(-w (t_j - t_i))` between a question at `t_i` and a later time `t_j`.
pub fn time_decay(t_i: f64, t_j: f64, w: f64) -> Result<f64> {
    ensure_finite("t_i", t_i)?;
    ensure_finite("t_j", t_j)?;
    if t_j < t_i {
        return Err(Error::InvalidArgument(format!("t_j={t_j} precedes t_i={t_i}")));
    }
    if !(w > 0.0) {
        return Err(Error::InvalidArgument(format!("decay rate must be positive, got {w}")));
    }
    Ok((-w * (t_j - t_i)).exp())
}

#[inline]
pub(crate) fn day_bucket(t: f64, day_length: f64) -> i64 {
    (t / day_length).floor() as i64
}

/// Incremental progress of one user toward one badge. Events must be observed
/// in nondecreasing time order.
#[derive(Clone, Debug)]
pub struct ProgressTracker {
    feature: ProgressFeature,
    day_length: f64,
    count: usize,
    days: usize,
    last_day: Option<i64>,
}

impl ProgressTracker {
    pub fn new(badge: &BadgeSpec) -> Self {
        ProgressTracker { feature: badge.feature, day_length: badge.day_length, count: 0, days: 0, last_day: None }
    }

    pub fn observe(&mut self, t: f64) {
        self.count += 1;
        let d = day_bucket(t, self.day_length);
        if self.last_day != Some(d) {
            self.days += 1;
            self.last_day = Some(d);
        }
    }

    pub fn value(&self) -> f64 {
        match self.feature {
            ProgressFeature::EventCount => self.count as f64,
            ProgressFeature::ActiveDays => self.days as f64,
        }
    }
}

/// Progress of `user` toward `badge` from the badge-qualifying events of the
/// badge's action type that happened strictly before `t`.
pub fn history_feature(badge: &BadgeSpec, dataset: &Dataset, user: usize, t: f64) -> Result<f64> {
    if user >= dataset.num_users() {
        return Err(Error::InvalidArgument(format!("user {user} out of range")));
    }
    if t > dataset.horizon() {
        return Err(Error::InvalidArgument(format!("t={t} beyond horizon {}", dataset.horizon())));
    }
    let mut days = std::collections::BTreeSet::new();
    let mut count = 0usize;
    for &i in dataset.user_events(user, badge.action) {
        let e = dataset.event(i);
        if e.time >= t {
            break;
        }
        if e.counts_toward_badge {
            count += 1;
            days.insert(day_bucket(e.time, badge.day_length));
        }
    }
    Ok(match badge.feature {
        ProgressFeature::EventCount => count as f64,
        ProgressFeature::ActiveDays => days.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, Event};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_examples() {
        assert_eq!(badge_kernel(KernelKind::Gaussian, 10.0, 10.0, 2.0).unwrap(), 1.0);
        assert_eq!(badge_kernel(KernelKind::Exponential, 12.0, 10.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(badge_kernel(KernelKind::Gaussian, 8.0, 10.0, 2.0).unwrap(), (-0.25f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(badge_kernel(KernelKind::Gaussian, 8.0, 10.0, 2.0).unwrap(), 0.7788, epsilon = 1e-4);
        assert_eq!(badge_kernel(KernelKind::Exponential, 10.0, 10.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(badge_kernel(KernelKind::Gaussian, f64::NAN, 1.0, 1.0).is_err());
        assert!(badge_kernel(KernelKind::Gaussian, 1.0, f64::INFINITY, 1.0).is_err());
        assert!(badge_kernel(KernelKind::Exponential, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn decay_examples() {
        assert_eq!(time_decay(5.0, 5.0, 3.0).unwrap(), 1.0);
        assert_abs_diff_eq!(time_decay(0.0, 1.0, 1.0).unwrap(), 0.36787944117144233, epsilon = 1e-15);
        let far = time_decay(0.0, 100.0, 1.0).unwrap();
        assert!((far / 3.720075976020836e-44 - 1.0).abs() < 1e-12);
        assert!(time_decay(2.0, 1.0, 1.0).is_err());
    }

    fn dataset_with_times(times: &[f64], horizon: f64) -> Dataset {
        let events = times.iter().map(|&t| Event::question(t, 0, 0)).collect();
        Dataset::new(events, horizon, 2, 1).unwrap()
    }

    #[test]
    fn feature_examples() {
        let count = BadgeSpec::new(Action::Question, 3.0, ProgressFeature::EventCount, KernelKind::Gaussian, 1.0);
        let days = BadgeSpec::new(Action::Question, 3.0, ProgressFeature::ActiveDays, KernelKind::Gaussian, 1.0);
        let d = dataset_with_times(&[1.0, 2.0, 5.0], 10.0);
        assert_eq!(history_feature(&count, &d, 1, 10.0).unwrap(), 0.0);
        assert_eq!(history_feature(&count, &d, 0, 5.0).unwrap(), 2.0);
        let d = dataset_with_times(&[0.1, 0.2, 3.7], 10.0);
        assert_eq!(history_feature(&days, &d, 0, 10.0).unwrap(), 2.0);
    }

    #[test]
    fn day_buckets_are_half_open() {
        let days = BadgeSpec::new(Action::Question, 3.0, ProgressFeature::ActiveDays, KernelKind::Gaussian, 1.0);
        let d = dataset_with_times(&[0.999, 1.0, 1.999, 2.0], 10.0);
        assert_eq!(history_feature(&days, &d, 0, 10.0).unwrap(), 3.0);
    }

    #[test]
    fn non_counting_events_are_skipped() {
        let count = BadgeSpec::new(Action::Question, 3.0, ProgressFeature::EventCount, KernelKind::Gaussian, 1.0);
        let mut e = Event::question(1.0, 0, 0);
        e.counts_toward_badge = false;
        let d = Dataset::new(vec![e, Event::question(2.0, 0, 0)], 5.0, 1, 1).unwrap();
        assert_eq!(history_feature(&count, &d, 0, 5.0).unwrap(), 1.0);
    }

    #[test]
    fn tracker_matches_scan() {
        let days = BadgeSpec { day_length: 0.5, ..BadgeSpec::new(Action::Question, 3.0, ProgressFeature::ActiveDays, KernelKind::Gaussian, 1.0) };
        let times = [0.1, 0.2, 0.6, 0.7, 2.4, 2.6];
        let d = dataset_with_times(&times, 3.0);
        let mut tr = ProgressTracker::new(&days);
        for &t in &times {
            assert_eq!(tr.value(), history_feature(&days, &d, 0, t).unwrap());
            tr.observe(t);
        }
        assert_eq!(tr.value(), 4.0);
    }

    proptest! {
        #[test]
        fn kernel_in_unit_interval(x in -1e3f64..1e3, tau in 1e-3f64..1e3, omega in 1e-3f64..1e2) {
            for kind in [KernelKind::Gaussian, KernelKind::Exponential] {
                let g = badge_kernel(kind, x, tau, omega).unwrap();
                prop_assert!((0.0..=1.0).contains(&g));
            }
        }

        #[test]
        fn gaussian_symmetric_exponential_cut(d in 0.0f64..50.0, tau in 1.0f64..100.0, omega in 0.1f64..10.0) {
            let lo = badge_kernel(KernelKind::Gaussian, tau - d, tau, omega).unwrap();
            let hi = badge_kernel(KernelKind::Gaussian, tau + d, tau, omega).unwrap();
            prop_assert!((lo - hi).abs() <= 1e-15);
            if d > 0.0 {
                prop_assert_eq!(badge_kernel(KernelKind::Exponential, tau + d, tau, omega).unwrap(), 0.0);
            }
        }
    }
}
