//! Reference models: homogeneous Poisson and unit-decay univariate Hawkes
//! processes per user and action, plus most-popular and most-recent mark
//! rankers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, Dataset};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    pub rate: f64,
    /// No events were observed; the rate is zero.
    pub zero_rate: bool,
}

fn check_window(times: &[f64], horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("observation window must be positive, got {horizon}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0 && *t <= horizon)) {
        return Err(Error::InvalidArgument("event times must be sorted and inside the window".into()));
    }
    Ok(())
}

/// Maximum-likelihood constant rate `n / T`.
pub fn fit_poisson(times: &[f64], horizon: f64) -> Result<PoissonFit> {
    check_window(times, horizon)?;
    Ok(PoissonFit { rate: times.len() as f64 / horizon, zero_rate: times.is_empty() })
}

pub fn poisson_log_likelihood(n: usize, horizon: f64, rate: f64) -> f64 {
    if n == 0 {
        -rate * horizon
    } else {
        n as f64 * rate.ln() - rate * horizon
    }
}

/// `lambda(t) = mu + beta * sum_{t_i < t} exp(-(t - t_i))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub mu: f64,
    pub beta: f64,
}

impl HawkesParams {
    /// The branching ratio of the unit-decay kernel is `beta`.
    pub fn is_stationary(&self) -> bool {
        self.beta < 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesFit {
    pub params: HawkesParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// No events were observed; both parameters are zero.
    pub empty: bool,
    /// `beta >= 1`: the fitted process is explosive.
    pub nonstationary: bool,
}

/// `A_i = sum_{t_j < t_i} exp(-(t_i - t_j))`, with tied times excluded from each other.
fn excitation_sums(times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    let mut group = 0usize;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let prev = times[i - 1];
            if t > prev {
                acc = (-(t - prev)).exp() * (acc + group as f64);
                group = 0;
            }
        }
        out.push(acc);
        group += 1;
    }
    out
}

fn tail_mass(times: &[f64], horizon: f64) -> f64 {
    times.iter().map(|t| -(-(horizon - t)).exp_m1()).sum()
}

fn hawkes_ll_with(a: &[f64], tail: f64, horizon: f64, p: HawkesParams) -> f64 {
    let events: f64 = a.iter().map(|ai| (p.mu + p.beta * ai).ln()).sum();
    events - p.mu * horizon - p.beta * tail
}

/// Log-likelihood of a univariate unit-decay Hawkes process over `[0, T]`.
pub fn hawkes_log_likelihood(times: &[f64], horizon: f64, p: HawkesParams) -> Result<f64> {
    check_window(times, horizon)?;
    Ok(hawkes_ll_with(&excitation_sums(times), tail_mass(times, horizon), horizon, p))
}

pub fn hawkes_intensity(times: &[f64], p: HawkesParams, t: f64) -> f64 {
    let n = times.partition_point(|&s| s < t);
    p.mu + p.beta * times[..n].iter().map(|s| (-(t - s)).exp()).sum::<f64>()
}

/// Integral of the intensity over `[t0, t1]` given the events in `times`.
pub fn hawkes_compensator(times: &[f64], p: HawkesParams, t0: f64, t1: f64) -> f64 {
    let n = times.partition_point(|&s| s < t1);
    let cross: f64 = times[..n]
        .iter()
        .map(|&s| {
            let start = t0.max(s);
            (-(start - s)).exp() * -(-(t1 - start)).exp_m1()
        })
        .sum();
    p.mu * (t1 - t0) + p.beta * cross
}

/// Maximum-likelihood fit by EM over the branching structure, polished with
/// Newton steps so the result is a stationary point to working precision.
pub fn fit_hawkes(times: &[f64], horizon: f64) -> Result<HawkesFit> {
    check_window(times, horizon)?;
    let n = times.len();
    if n == 0 {
        let params = HawkesParams { mu: 0.0, beta: 0.0 };
        return Ok(HawkesFit { params, log_likelihood: 0.0, iterations: 0, converged: true, empty: true, nonstationary: false });
    }
    let a = excitation_sums(times);
    let tail = tail_mass(times, horizon);
    let ll = |p: HawkesParams| hawkes_ll_with(&a, tail, horizon, p);

    let mut p = HawkesParams { mu: 0.5 * n as f64 / horizon, beta: 0.5 };
    let mut prev = ll(p);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 500 {
        iterations += 1;
        let (mut bg, mut trig) = (0.0, 0.0);
        for &ai in &a {
            let lambda = p.mu + p.beta * ai;
            bg += p.mu / lambda;
            trig += p.beta * ai / lambda;
        }
        p = HawkesParams { mu: bg / horizon, beta: if tail > 0.0 { trig / tail } else { 0.0 } };
        let cur = ll(p);
        if (cur - prev).abs() <= 1e-6 * prev.abs().max(1.0) {
            converged = true;
            break;
        }
        prev = cur;
    }
    p = newton_polish(&a, tail, horizon, p);
    let log_likelihood = ll(p);
    Ok(HawkesFit { params: p, log_likelihood, iterations, converged, empty: false, nonstationary: !p.is_stationary() })
}

fn newton_polish(a: &[f64], tail: f64, horizon: f64, start: HawkesParams) -> HawkesParams {
    let ll = |p: HawkesParams| hawkes_ll_with(a, tail, horizon, p);
    let mut p = start;
    for _ in 0..100 {
        let (mut g_mu, mut g_beta) = (-horizon, -tail);
        let (mut h_mm, mut h_mb, mut h_bb) = (0.0, 0.0, 0.0);
        for &ai in a {
            let lambda = p.mu + p.beta * ai;
            let l2 = lambda * lambda;
            g_mu += 1.0 / lambda;
            g_beta += ai / lambda;
            h_mm -= 1.0 / l2;
            h_mb -= ai / l2;
            h_bb -= ai * ai / l2;
        }
        // Coordinates pinned at zero with an outward gradient stay there.
        let mu_free = p.mu > 0.0 || g_mu > 0.0;
        let beta_free = p.beta > 0.0 || g_beta > 0.0;
        let (d_mu, d_beta) = match (mu_free, beta_free) {
            (true, true) => {
                let det = h_mm * h_bb - h_mb * h_mb;
                if !(det > 0.0) {
                    break;
                }
                ((-h_bb * g_mu + h_mb * g_beta) / det, (h_mb * g_mu - h_mm * g_beta) / det)
            }
            (true, false) if h_mm < 0.0 => (-g_mu / h_mm, 0.0),
            (false, true) if h_bb < 0.0 => (0.0, -g_beta / h_bb),
            _ => break,
        };
        let base = ll(p);
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-12 {
            let cand = HawkesParams { mu: (p.mu + step * d_mu).max(0.0), beta: (p.beta + step * d_beta).max(0.0) };
            let v = ll(cand);
            if v.is_finite() && v >= base {
                moved = cand != p;
                p = cand;
                break;
            }
            step *= 0.5;
        }
        let g_free = f64::max(if mu_free { g_mu.abs() } else { 0.0 }, if beta_free { g_beta.abs() } else { 0.0 });
        if !moved || g_free < 1e-10 {
            break;
        }
    }
    p
}

/// Candidate universe for mark ranking.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSpace {
    /// All tag ids.
    Tags,
    /// Questions asked before the query time, at most `max_lag` earlier.
    Questions { max_lag: f64 },
}

/// Causal popularity and recency statistics of a dataset.
#[derive(Clone, Debug)]
pub struct MarkRanker<'a> {
    data: &'a Dataset,
    tag_times: Vec<Vec<f64>>,
    /// Answer times per question, indexed by question position.
    answer_times: Vec<Vec<f64>>,
    position: Vec<Option<usize>>,
}

impl<'a> MarkRanker<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let mut tag_times = vec![Vec::new(); data.num_tags()];
        let mut answer_times = vec![Vec::new(); data.questions().len()];
        let mut position = vec![None; data.len()];
        for (pos, &qi) in data.questions().iter().enumerate() {
            position[qi] = Some(pos);
        }
        for e in data.events() {
            match (e.tag(), e.parent()) {
                (Some(k), _) => tag_times[k].push(e.time),
                (_, Some(p)) => {
                    if let Some(pos) = position[p] {
                        answer_times[pos].push(e.time);
                    }
                }
                _ => {}
            }
        }
        MarkRanker { data, tag_times, answer_times, position }
    }

    fn candidates(&self, t: f64, space: CandidateSpace) -> Vec<usize> {
        match space {
            CandidateSpace::Tags => (0..self.data.num_tags()).collect(),
            CandidateSpace::Questions { max_lag } => {
                let qs = self.data.questions();
                self.data.question_window(t, max_lag).map(|pos| qs[pos]).collect()
            }
        }
    }

    fn history_is_empty(&self, t: f64, space: CandidateSpace) -> bool {
        match space {
            CandidateSpace::Tags => self.data.questions_before(t) == 0,
            CandidateSpace::Questions { .. } => self.candidates(t, space).is_empty(),
        }
    }

    /// Most-popular ranking: tags by questions asked before `t`, questions by
    /// answers received before `t`; ties by smaller id.
    pub fn popularity(&self, t: f64, space: CandidateSpace) -> Vec<usize> {
        if self.history_is_empty(t, space) {
            return Vec::new();
        }
        let mut scored: Vec<(usize, usize)> = self
            .candidates(t, space)
            .into_iter()
            .map(|c| {
                let times = match space {
                    CandidateSpace::Tags => &self.tag_times[c],
                    CandidateSpace::Questions { .. } => &self.answer_times[self.position[c].unwrap_or(0)],
                };
                (c, times.partition_point(|&s| s < t))
            })
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.into_iter().map(|(c, _)| c).collect()
    }

    /// Most-recent ranking: by latest activity before `t`, descending;
    /// candidates never seen go last by id.
    pub fn recency(&self, t: f64, space: CandidateSpace) -> Vec<usize> {
        if self.history_is_empty(t, space) {
            return Vec::new();
        }
        let last = |times: &[f64]| {
            let n = times.partition_point(|&s| s < t);
            if n == 0 {
                None
            } else {
                Some(times[n - 1])
            }
        };
        let mut scored: Vec<(usize, Option<f64>)> = self
            .candidates(t, space)
            .into_iter()
            .map(|c| {
                let seen = match space {
                    CandidateSpace::Tags => last(&self.tag_times[c]),
                    CandidateSpace::Questions { .. } => {
                        let asked = self.data.event(c).time;
                        Some(last(&self.answer_times[self.position[c].unwrap_or(0)]).map_or(asked, |a| a.max(asked)))
                    }
                };
                (c, seen)
            })
            .collect();
        scored.sort_by(|a, b| match (a.1, b.1) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.0.cmp(&b.0)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.0.cmp(&b.0),
        });
        scored.into_iter().map(|(c, _)| c).collect()
    }
}

pub fn popularity_rank(dataset: &Dataset, t: f64, space: CandidateSpace) -> Result<Vec<usize>> {
    check_query(dataset, t)?;
    Ok(MarkRanker::new(dataset).popularity(t, space))
}

pub fn recency_rank(dataset: &Dataset, t: f64, space: CandidateSpace) -> Result<Vec<usize>> {
    check_query(dataset, t)?;
    Ok(MarkRanker::new(dataset).recency(t, space))
}

fn check_query(dataset: &Dataset, t: f64) -> Result<()> {
    if !(t.is_finite() && t <= dataset.horizon()) {
        return Err(Error::InvalidArgument(format!("query time {t} beyond horizon {}", dataset.horizon())));
    }
    Ok(())
}

/// Event times of one user and action, for fitting the temporal baselines.
pub fn user_times(dataset: &Dataset, user: usize, action: Action) -> Vec<f64> {
    dataset.user_events(user, action).iter().map(|&i| dataset.event(i).time).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Event;

    #[test]
    fn poisson_mle() {
        let times: Vec<f64> = (0..10).map(|i| 0.4 * i as f64).collect();
        assert_eq!(fit_poisson(&times, 5.0).unwrap(), PoissonFit { rate: 2.0, zero_rate: false });
        assert_eq!(fit_poisson(&[], 5.0).unwrap(), PoissonFit { rate: 0.0, zero_rate: true });
        assert!(fit_poisson(&[1.0], 0.0).is_err());
    }

    #[test]
    fn excitation_sums_skip_ties() {
        let a = excitation_sums(&[1.0, 1.0, 2.0]);
        assert_eq!(a[0], 0.0);
        assert_eq!(a[1], 0.0);
        assert!((a[2] - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn compensator_matches_closed_form() {
        let times = [0.5, 1.0, 2.5];
        let p = HawkesParams { mu: 0.3, beta: 0.7 };
        let full = hawkes_compensator(&times, p, 0.0, 4.0);
        let closed = 0.3 * 4.0 + 0.7 * times.iter().map(|t| 1.0 - (-(4.0 - t)).exp()).sum::<f64>();
        assert!((full - closed).abs() < 1e-14);
        let split = hawkes_compensator(&times, p, 0.0, 1.7) + hawkes_compensator(&times, p, 1.7, 4.0);
        assert!((split - full).abs() < 1e-14);
    }

    #[test]
    fn hawkes_beats_nested_poisson() {
        let times = [0.1, 0.3, 0.35, 2.0, 2.1, 2.15, 5.0, 7.5, 7.6];
        let h = fit_hawkes(&times, 8.0).unwrap();
        let p = fit_poisson(&times, 8.0).unwrap();
        assert!(h.log_likelihood >= poisson_log_likelihood(9, 8.0, p.rate) - 1e-8);
        assert!(fit_hawkes(&[], 1.0).unwrap().empty);
    }

    fn ranking_log() -> Dataset {
        Dataset::new(
            vec![
                Event::question(1.0, 0, 2),
                Event::question(2.0, 0, 7),
                Event::answer(3.0, 1, 0),
                Event::question(4.0, 1, 1),
                Event::question(5.0, 0, 7),
                Event::question(6.0, 1, 2),
                Event::answer(7.0, 1, 1),
                Event::question(9.0, 1, 3),
                Event::question(9.5, 0, 2),
            ],
            10.0,
            2,
            8,
        )
        .unwrap()
    }

    #[test]
    fn popularity_orders_by_count_then_id() {
        let d = ranking_log();
        let r = popularity_rank(&d, 10.0, CandidateSpace::Tags).unwrap();
        assert_eq!(&r[..4], &[2, 7, 1, 3]);
        let r = popularity_rank(&d, 5.5, CandidateSpace::Tags).unwrap();
        assert_eq!(&r[..3], &[7, 1, 2]);
        assert!(popularity_rank(&d, 0.5, CandidateSpace::Tags).unwrap().is_empty());
        let all = CandidateSpace::Questions { max_lag: f64::INFINITY };
        assert_eq!(popularity_rank(&d, 10.0, all).unwrap()[..2], [0, 1]);
    }

    #[test]
    fn recency_orders_by_latest_activity() {
        let d = ranking_log();
        let r = recency_rank(&d, 10.0, CandidateSpace::Tags).unwrap();
        assert_eq!(&r[..3], &[2, 3, 7]);
        // unseen tags trail by id
        assert_eq!(&r[4..], &[0, 4, 5, 6]);
        let all = CandidateSpace::Questions { max_lag: f64::INFINITY };
        let r = recency_rank(&d, 10.0, all).unwrap();
        assert_eq!(r[0], 8);
        // question 1 was answered at 7, after question 5 was asked
        let pos = |q| r.iter().position(|&x| x == q).unwrap();
        assert!(pos(1) < pos(5));
    }

    #[test]
    fn rankers_are_causal() {
        let d = ranking_log();
        let cut = d.truncate(5.5).unwrap();
        for space in [CandidateSpace::Tags, CandidateSpace::Questions { max_lag: 100.0 }] {
            assert_eq!(popularity_rank(&d, 5.5, space).unwrap(), popularity_rank(&cut, 5.5, space).unwrap());
            assert_eq!(recency_rank(&d, 5.5, space).unwrap(), recency_rank(&cut, 5.5, space).unwrap());
        }
    }
}
