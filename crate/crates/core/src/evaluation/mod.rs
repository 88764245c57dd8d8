//! Held-out likelihood, next-event time prediction, mark ranking, residual
//! analysis and parameter recovery.

mod metrics;
mod predict;
mod residuals;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{kendall_tau, rank_metrics, recovery_report, time_errors, GroupRecovery, RankScore, RecoveryReport, TypeRecovery};
pub use predict::{predict_next_time, DecayingIntensity, ForwardIntensity, NextTimeEstimate, MAX_WAIT};
pub use residuals::{
    kolmogorov_tail, ks_exp1, ks_test, qq_points, rescaled_residuals, residual_report, KsTest, ResidualReport, LOW_POWER_N,
};

use crate::baselines::{fit_hawkes, fit_poisson, hawkes_compensator, hawkes_intensity, CandidateSpace, HawkesParams, MarkRanker};
use crate::error::{Error, Result};
use crate::io::Split;
use crate::model::{validate_all, Action, Dataset, ModelConfig, ModelIndex, UserParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Monte Carlo samples per next-time prediction; zero skips prediction.
    pub n_samples: usize,
    pub ks: Vec<usize>,
    /// Parent candidates are questions at most this much older than the
    /// answer; `None` uses the model's cutoff window.
    pub candidate_lag: Option<f64>,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { n_samples: 1000, ks: (1..=20).collect(), candidate_lag: None, seed: 0 }
    }
}

/// Log-likelihood of the test events over their test windows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestLikelihood {
    pub temporal: f64,
    pub marks: f64,
    pub events: usize,
    /// Test marks the model gives zero probability, scored at [`MARK_FLOOR`].
    pub floored_marks: usize,
}

/// Probability floor for held-out marks unseen in training.
pub const MARK_FLOOR: f64 = 1e-12;

impl TestLikelihood {
    pub fn per_event_temporal(&self) -> f64 {
        self.temporal / self.events.max(1) as f64
    }

    pub fn per_event(&self) -> f64 {
        (self.temporal + self.marks) / self.events.max(1) as f64
    }
}

fn test_indices(dataset: &Dataset, split: &Split, user: usize, action: Action) -> Vec<usize> {
    let end = split.train.end(user, action);
    dataset.user_events(user, action).iter().copied().filter(|&i| dataset.event(i).time > end).collect()
}

/// Per-(user, action) test blocks: the events past the training end.
fn test_blocks(dataset: &Dataset, split: &Split) -> Vec<(usize, Action, Vec<usize>)> {
    let mut out = Vec::new();
    for u in 0..dataset.num_users() {
        for a in [Action::Question, Action::Answer] {
            let idx = test_indices(dataset, split, u, a);
            if !idx.is_empty() {
                out.push((u, a, idx));
            }
        }
    }
    out
}

/// Held-out log-likelihood of the full model: for every user and action,
/// the test events' log intensities and marks minus the compensator over
/// `(train end, T]`.
pub fn test_log_likelihood(dataset: &Dataset, params: &[UserParams], cfg: &ModelConfig, split: &Split) -> Result<TestLikelihood> {
    validate_all(params, dataset.num_users(), dataset.num_tags())?;
    cfg.validate()?;
    split.train.validate(dataset)?;
    let index = ModelIndex::new(dataset, cfg);
    let t_end = dataset.horizon();
    let parts: Vec<TestLikelihood> = test_blocks(dataset, split)
        .into_par_iter()
        .map(|(u, a, idx)| -> Result<TestLikelihood> {
            let p = &params[u];
            let start = split.train.end(u, a);
            let mut out = TestLikelihood { events: idx.len(), ..Default::default() };
            for &i in &idx {
                let e = dataset.event(i);
                let (lambda, mark) = match a {
                    Action::Question => (index.question_intensity(u, e.time, p), p.alpha[e.tag().unwrap_or(0)]),
                    Action::Answer => {
                        let terms = index.answer_terms(i);
                        let cross: f64 = terms.tag_mass.iter().zip(&p.eta).map(|(m, h)| m * h).sum();
                        let lambda = p.mu_a + p.rho_a * index.badge_sum(u, Action::Answer, e.time) + cross;
                        (lambda, p.eta[terms.parent_tag] * terms.parent_decay / cross)
                    }
                };
                if !(lambda > 0.0) {
                    return Err(Error::ZeroLikelihood { event: i, reason: "intensity is zero at a test event".into() });
                }
                if !(mark >= MARK_FLOOR) {
                    out.floored_marks += 1;
                }
                out.temporal += lambda.ln();
                out.marks += mark.max(MARK_FLOOR).ln();
            }
            out.temporal -= match a {
                Action::Question => index.question_compensator(u, p, start, t_end),
                Action::Answer => index.answer_compensator(u, p, start, t_end),
            };
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().fold(TestLikelihood::default(), |acc, x| TestLikelihood {
        temporal: acc.temporal + x.temporal,
        marks: acc.marks + x.marks,
        events: acc.events + x.events,
        floored_marks: acc.floored_marks + x.floored_marks,
    }))
}

/// Held-out temporal log-likelihood of the Poisson and Hawkes baselines,
/// each fitted per user and action on the training window. `None` when some
/// test block has no training data to fit on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineLikelihood {
    pub poisson: Option<f64>,
    pub hawkes: Option<f64>,
    pub events: usize,
}

pub fn baseline_test_log_likelihood(dataset: &Dataset, split: &Split) -> Result<BaselineLikelihood> {
    split.train.validate(dataset)?;
    let t_end = dataset.horizon();
    let parts: Vec<Option<(f64, f64, usize)>> = test_blocks(dataset, split)
        .into_par_iter()
        .map(|(u, a, idx)| -> Result<Option<(f64, f64, usize)>> {
            let end = split.train.end(u, a);
            let all: Vec<f64> = dataset.user_events(u, a).iter().map(|&i| dataset.event(i).time).collect();
            let n_train = all.partition_point(|&t| t <= end);
            if n_train == 0 || !(end > 0.0) {
                return Ok(None);
            }
            let poisson = fit_poisson(&all[..n_train], end)?;
            let hawkes = fit_hawkes(&all[..n_train], end)?.params;
            let test = &all[n_train..];
            let p_ll = test.len() as f64 * poisson.rate.ln() - poisson.rate * (t_end - end);
            let h_ll = test.iter().map(|&t| hawkes_intensity(&all, hawkes, t).ln()).sum::<f64>()
                - hawkes_compensator(&all, hawkes, end, t_end);
            Ok(Some((p_ll, h_ll, idx.len())))
        })
        .collect::<Result<_>>()?;
    let mut out = BaselineLikelihood { poisson: Some(0.0), hawkes: Some(0.0), events: 0 };
    for part in parts {
        match part {
            Some((p, h, n)) => {
                out.poisson = out.poisson.map(|x| x + p);
                out.hawkes = out.hawkes.map(|x| x + h);
                out.events += n;
            }
            None => {
                out.poisson = None;
                out.hawkes = None;
            }
        }
    }
    let n = out.events.max(1) as f64;
    out.poisson = out.poisson.map(|x| x / n);
    out.hawkes = out.hawkes.map(|x| x / n);
    Ok(out)
}

/// Candidates ordered by the model's mark probabilities, ties by smaller id.
fn ranked(mut scored: Vec<(usize, f64)>) -> Vec<usize> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(c, _)| c).collect()
}

pub fn rank_tags(p: &UserParams) -> Vec<usize> {
    ranked(p.alpha.iter().copied().enumerate().collect())
}

/// Questions before `t` within `max_lag`, by `eta f` under the user's parameters.
pub fn rank_parents(dataset: &Dataset, cfg: &ModelConfig, p: &UserParams, t: f64, max_lag: f64) -> Vec<usize> {
    let qs = dataset.questions();
    ranked(
        dataset
            .question_window(t, max_lag)
            .map(|pos| {
                let e = dataset.event(qs[pos]);
                (qs[pos], p.eta[e.tag().unwrap_or(0)] * (-cfg.decay_w * (t - e.time)).exp())
            })
            .collect(),
    )
}

/// Frozen-history forward intensity of a user after `t_now`.
pub fn forward_intensity(index: &ModelIndex<'_>, user: usize, action: Action, t_now: f64, p: &UserParams) -> DecayingIntensity {
    let (constant, excitation) = index.frozen_intensity(user, action, t_now, p);
    DecayingIntensity { t0: t_now, constant, excitation, decay: index.config().decay_w }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub tags: BTreeMap<usize, RankScore>,
    pub parents: BTreeMap<usize, RankScore>,
    /// Tag and parent predictions pooled.
    pub pooled: BTreeMap<usize, RankScore>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub poisson_per_event_loglik: Option<f64>,
    pub hawkes_per_event_loglik: Option<f64>,
    pub popularity: RankingReport,
    pub recency: RankingReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_test_events: usize,
    /// Temporal and mark terms of the held-out log-likelihood, per test event.
    pub per_event_loglik: f64,
    pub per_event_temporal_loglik: f64,
    pub total_loglik: f64,
    pub floored_marks: usize,
    pub time_mae: Option<f64>,
    pub time_mre: Option<f64>,
    /// Test events whose forward intensity never fired.
    pub unpredictable_times: usize,
    pub precision_at_k: BTreeMap<usize, f64>,
    pub ndcg_at_k: BTreeMap<usize, f64>,
    pub ranking: RankingReport,
    /// Parent candidates were questions at most this much older than the answer.
    pub candidate_lag: f64,
    /// Parent truths that fell outside the candidate window (scored as misses).
    pub parents_outside_window: usize,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub ks_low_power: bool,
    pub baselines: BaselineReport,
    pub notes: Vec<String>,
}

fn ranking_report(tag_rankings: &[Vec<usize>], tag_truth: &[usize], parent_rankings: &[Vec<usize>], parent_truth: &[usize], ks: &[usize]) -> Result<RankingReport> {
    let tags = rank_metrics(tag_rankings, tag_truth, ks)?;
    let parents = rank_metrics(parent_rankings, parent_truth, ks)?;
    let all_r: Vec<Vec<usize>> = tag_rankings.iter().chain(parent_rankings).cloned().collect();
    let all_t: Vec<usize> = tag_truth.iter().chain(parent_truth).copied().collect();
    let pooled = rank_metrics(&all_r, &all_t, ks)?;
    Ok(RankingReport { tags, parents, pooled })
}

/// Time-rescaled residuals: compensator increments between consecutive test
/// events of each user and action, starting at the end of training.
pub fn model_residuals(index: &ModelIndex<'_>, params: &[UserParams], split: &Split) -> Vec<f64> {
    let dataset = index.dataset();
    let mut residuals = Vec::new();
    for u in 0..dataset.num_users() {
        for a in [Action::Question, Action::Answer] {
            let p = &params[u];
            let mut prev = split.train.end(u, a);
            for &i in &test_indices(dataset, split, u, a) {
                let t = dataset.event(i).time;
                residuals.push(match a {
                    Action::Question => index.question_compensator(u, p, prev, t),
                    Action::Answer => index.answer_compensator(u, p, prev, t),
                });
                prev = t;
            }
        }
    }
    residuals
}

/// Score a fitted model and the baselines on the test part of a split.
pub fn evaluate(dataset: &Dataset, params: &[UserParams], cfg: &ModelConfig, split: &Split, options: &EvalOptions) -> Result<EvalReport> {
    if split.test_events.is_empty() {
        return Err(Error::InsufficientData("the split has no test events".into()));
    }
    let ll = test_log_likelihood(dataset, params, cfg, split)?;
    let index = ModelIndex::new(dataset, cfg);
    let lag = options.candidate_lag.unwrap_or_else(|| cfg.max_lag());
    if !(lag > 0.0) {
        return Err(Error::InvalidArgument(format!("candidate lag must be positive, got {lag}")));
    }

    // Next-event times with independent random streams per event.
    let mut time_mae = None;
    let mut time_mre = None;
    let mut unpredictable = 0;
    if options.n_samples > 0 {
        let preds: Vec<Option<(f64, f64, f64)>> = split
            .test_events
            .par_iter()
            .map(|&i| -> Result<Option<(f64, f64, f64)>> {
                let e = dataset.event(i);
                let (u, a) = (e.user, e.action());
                let own = dataset.user_events(u, a);
                let pos = own.partition_point(|&j| j < i);
                let t_now = if pos > 0 { dataset.event(own[pos - 1]).time } else { split.train.end(u, a) };
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                rng.set_stream(i as u64);
                match predict_next_time(&forward_intensity(&index, u, a, t_now, &params[u]), t_now, options.n_samples, &mut rng) {
                    Ok(est) if e.time > t_now => Ok(Some((est.mean, e.time, t_now))),
                    Ok(_) => Ok(None),
                    Err(Error::NoEventExpected) => Ok(None),
                    Err(err) => Err(err),
                }
            })
            .collect::<Result<_>>()?;
        let ok: Vec<(f64, f64, f64)> = preds.iter().flatten().copied().collect();
        unpredictable = preds.len() - ok.len();
        if !ok.is_empty() {
            let p: Vec<f64> = ok.iter().map(|x| x.0).collect();
            let a: Vec<f64> = ok.iter().map(|x| x.1).collect();
            let r: Vec<f64> = ok.iter().map(|x| x.2).collect();
            let (mae, mre) = time_errors(&p, &a, &r)?;
            time_mae = Some(mae);
            time_mre = Some(mre);
        }
    }

    // Mark rankings for the model and both heuristics.
    let ranker = MarkRanker::new(dataset);
    let question_space = CandidateSpace::Questions { max_lag: lag };
    let mut tag_truth = Vec::new();
    let mut parent_truth = Vec::new();
    let mut model_tags = Vec::new();
    let mut model_parents = Vec::new();
    let (mut pop_tags, mut pop_parents, mut rec_tags, mut rec_parents) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut outside = 0;
    for &i in &split.test_events {
        let e = dataset.event(i);
        let p = &params[e.user];
        if let Some(tag) = e.tag() {
            tag_truth.push(tag);
            model_tags.push(rank_tags(p));
            pop_tags.push(ranker.popularity(e.time, CandidateSpace::Tags));
            rec_tags.push(ranker.recency(e.time, CandidateSpace::Tags));
        } else if let Some(parent) = e.parent() {
            if e.time - dataset.event(parent).time > lag {
                outside += 1;
            }
            parent_truth.push(parent);
            model_parents.push(rank_parents(dataset, cfg, p, e.time, lag));
            pop_parents.push(ranker.popularity(e.time, question_space));
            rec_parents.push(ranker.recency(e.time, question_space));
        }
    }
    let ranking = ranking_report(&model_tags, &tag_truth, &model_parents, &parent_truth, &options.ks)?;
    let popularity = ranking_report(&pop_tags, &tag_truth, &pop_parents, &parent_truth, &options.ks)?;
    let recency = ranking_report(&rec_tags, &tag_truth, &rec_parents, &parent_truth, &options.ks)?;

    let residuals = model_residuals(&index, params, split);
    let ks = if residuals.is_empty() { None } else { Some(ks_exp1(&residuals)?) };

    let base = baseline_test_log_likelihood(dataset, split)?;
    Ok(EvalReport {
        n_test_events: ll.events,
        per_event_loglik: ll.per_event(),
        per_event_temporal_loglik: ll.per_event_temporal(),
        total_loglik: ll.temporal + ll.marks,
        floored_marks: ll.floored_marks,
        time_mae,
        time_mre,
        unpredictable_times: unpredictable,
        precision_at_k: ranking.pooled.iter().map(|(k, s)| (*k, s.precision)).collect(),
        ndcg_at_k: ranking.pooled.iter().map(|(k, s)| (*k, s.ndcg)).collect(),
        ranking,
        candidate_lag: lag,
        parents_outside_window: outside,
        ks_statistic: ks.as_ref().map(|k| k.statistic),
        ks_p_value: ks.as_ref().map(|k| k.p_value),
        ks_low_power: ks.as_ref().is_none_or(|k| k.low_power),
        baselines: BaselineReport {
            poisson_per_event_loglik: base.poisson,
            hawkes_per_event_loglik: base.hawkes,
            popularity,
            recency,
        },
        notes: vec![
            "time MRE is relative to the true waiting time since the previous event of the same user and action".into(),
            "baseline log-likelihoods cover temporal terms only; compare them with per_event_temporal_loglik".into(),
            "NDCG uses a single relevant item per event".into(),
            format!("marks with zero model probability are scored at {MARK_FLOOR:e}"),
        ],
    })
}

/// Unit-decay Hawkes forward intensity with the history frozen at `t_now`.
pub fn hawkes_forward(times: &[f64], p: HawkesParams, t_now: f64) -> DecayingIntensity {
    let n = times.partition_point(|&s| s <= t_now);
    let excitation = p.beta * times[..n].iter().map(|s| (-(t_now - s)).exp()).sum::<f64>();
    DecayingIntensity { t0: t_now, constant: p.mu, excitation, decay: 1.0 }
}
