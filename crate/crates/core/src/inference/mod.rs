//! Variational EM for the badge-aware question/answer model.
//!
//! Each event is attributed to the component of its intensity that generated
//! it (exogenous rate, badge kernels, or a specific earlier question), and
//! the log-normalizer of the answer parent distribution is replaced by its
//! tangent bound. The E-step makes the bound tight; every M-step update is
//! closed form except the expertise vector, which is a separable concave
//! program on the simplex.

mod estep;
mod eta;
mod problem;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use estep::{e_step, e_step_answer, e_step_question, update_zeta, AnswerResponsibility, EStepState, UserEStep};
pub use eta::{solve_eta, EtaSolution};
pub use problem::{FitProblem, UserStats};

use crate::error::{Error, Result};
use crate::model::{Dataset, Horizons, ModelConfig, UserParams};
use crate::simulator::sample_dirichlet;

/// Floor applied to expertise entries inside logarithms of the bound.
const ETA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Relative change of the bound below which the fit stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iters: 100, tol: 1e-4, seed: 0 }
    }
}

/// Users whose updates could not use data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFitFlags {
    /// No observed questions: question parameters kept from initialization.
    pub retained_question: bool,
    /// No observed answers: answer parameters kept from initialization.
    pub retained_answer: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: Vec<UserParams>,
    /// Bound after each E-step; equal to the log-likelihood at that iterate.
    pub lower_bound_trace: Vec<f64>,
    /// Number of M-steps performed.
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<UserFitFlags>,
}

impl FitReport {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "lower_bound"])?;
        for (i, b) in self.lower_bound_trace.iter().enumerate() {
            w.write_record([i.to_string(), format!("{b:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Terms of the bound that depend on a single user.
fn plogq(phi: f64, lambda: f64) -> Option<f64> {
    if phi == 0.0 {
        Some(0.0)
    } else if lambda > 0.0 {
        Some(phi * (lambda / phi).ln())
    } else {
        None
    }
}

fn zero(event: usize, reason: &str) -> Error {
    Error::ZeroLikelihood { event, reason: reason.into() }
}

fn user_lower_bound(stats: &UserStats, p: &UserParams, st: &UserEStep) -> Result<f64> {
    let mut b = 0.0;
    let alpha_total: f64 = p.alpha.iter().sum();
    for (i, &event) in stats.question_events.iter().enumerate() {
        let phi = st.phi_q[i];
        b += plogq(phi[0], p.mu_q).ok_or_else(|| zero(event, "exogenous question share on a zero rate"))?;
        b += plogq(phi[1], p.rho_q * stats.question_badges[i])
            .ok_or_else(|| zero(event, "badge question share on a zero rate"))?;
        let a = p.alpha[stats.question_tags[i]] / alpha_total;
        if !(a > 0.0) {
            return Err(zero(event, "tag probability is zero"));
        }
        b += a.ln();
    }
    b -= p.mu_q * stats.question_end + p.rho_q * stats.question_badge_integral;

    let log_eta = |k: usize| p.eta[k].max(ETA_FLOOR).ln();
    for (j, &event) in stats.answer_events.iter().enumerate() {
        let phi = &st.phi_a[j];
        let zeta = st.zeta[j];
        b += plogq(phi.exogenous, p.mu_a).ok_or_else(|| zero(event, "exogenous answer share on a zero rate"))?;
        b += plogq(phi.badge, p.rho_a * stats.answer_badges[j]).ok_or_else(|| zero(event, "badge answer share on a zero rate"))?;
        let mass = &stats.answer_mass[j];
        let mut x = 0.0;
        for (&(k, m), &(k2, share)) in mass.iter().zip(&phi.tags) {
            debug_assert_eq!(k, k2);
            x += p.eta[k] * m;
            if share > 0.0 {
                b += share * (log_eta(k) + m.ln() - share.ln());
            }
        }
        b += log_eta(stats.answer_parent_tag[j]) + stats.answer_parent_decay[j].ln();
        b += -zeta * x + 1.0 + zeta.ln();
    }
    let cross: f64 = stats.excitation_integral.iter().zip(&p.eta).map(|(c, e)| c * e).sum();
    b -= p.mu_a * stats.answer_end + p.rho_a * stats.answer_badge_integral + cross;
    Ok(b)
}

/// Evidence lower bound at `params` under the variational state `estep`.
pub fn lower_bound(problem: &FitProblem<'_>, params: &[UserParams], estep: &EStepState) -> Result<f64> {
    if params.len() != problem.num_users() || estep.users.len() != problem.num_users() {
        return Err(Error::InvalidArgument("parameters, state and problem disagree on the number of users".into()));
    }
    let parts: Vec<f64> = problem
        .users()
        .par_iter()
        .zip(params)
        .zip(&estep.users)
        .map(|((s, p), st)| user_lower_bound(s, p, st))
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// Sufficient statistics `(F, H)` of the expertise update of one user.
pub fn eta_statistics(stats: &UserStats, st: &UserEStep, num_tags: usize) -> (Vec<f64>, Vec<f64>) {
    let mut f = vec![0.0; num_tags];
    let mut h = stats.excitation_integral.clone();
    for (j, phi) in st.phi_a.iter().enumerate() {
        f[stats.answer_parent_tag[j]] += 1.0;
        for &(k, share) in &phi.tags {
            f[k] += share;
        }
        for &(k, m) in &stats.answer_mass[j] {
            h[k] += st.zeta[j] * m;
        }
    }
    (f, h)
}

/// Closed-form maximization of the bound over one user's parameters.
pub fn m_step_user(problem: &FitProblem<'_>, user: usize, estep: &EStepState, current: &UserParams) -> Result<(UserParams, UserFitFlags)> {
    let stats = problem.user(user)?;
    let st = estep.users.get(user).ok_or_else(|| Error::InvalidArgument(format!("no state for user {user}")))?;
    Ok(user_m_step(stats, st, current, problem.dataset().num_tags()))
}

fn user_m_step(stats: &UserStats, st: &UserEStep, current: &UserParams, num_tags: usize) -> (UserParams, UserFitFlags) {
    let mut p = current.clone();
    let mut flags = UserFitFlags::default();

    if stats.question_events.is_empty() || !(stats.question_end > 0.0) {
        flags.retained_question = true;
    } else {
        let exo: f64 = st.phi_q.iter().map(|f| f[0]).sum();
        let badge: f64 = st.phi_q.iter().map(|f| f[1]).sum();
        p.mu_q = exo / stats.question_end;
        if stats.question_badge_integral > 0.0 {
            p.rho_q = badge / stats.question_badge_integral;
        }
        let mut alpha = vec![0.0; num_tags];
        for &k in &stats.question_tags {
            alpha[k] += 1.0;
        }
        let n = stats.question_tags.len() as f64;
        p.alpha = alpha.into_iter().map(|c| c / n).collect();
    }

    if stats.answer_events.is_empty() || !(stats.answer_end > 0.0) {
        flags.retained_answer = true;
    } else {
        let exo: f64 = st.phi_a.iter().map(|f| f.exogenous).sum();
        let badge: f64 = st.phi_a.iter().map(|f| f.badge).sum();
        p.mu_a = exo / stats.answer_end;
        if stats.answer_badge_integral > 0.0 {
            p.rho_a = badge / stats.answer_badge_integral;
        }
        let (f, h) = eta_statistics(stats, st, num_tags);
        // F always counts the answered questions' tags, so it has positive mass here.
        if let Ok(sol) = solve_eta(&f, &h) {
            p.eta = sol.eta;
        }
    }
    (p, flags)
}

/// Random positive starting point, scaled to the user's event counts.
fn initialize(problem: &FitProblem<'_>, rng: &mut ChaCha8Rng) -> Vec<UserParams> {
    let k = problem.dataset().num_tags();
    problem
        .users()
        .iter()
        .map(|s| {
            let mut draw = |n: usize, exposure: f64| {
                let scale = if exposure > 0.0 { n.max(1) as f64 / exposure } else { 1.0 };
                rng.random_range(0.25..0.75) * scale
            };
            let mu_q = draw(s.question_events.len(), s.question_end);
            let rho_q = draw(s.question_events.len(), s.question_badge_integral);
            let mu_a = draw(s.answer_events.len(), s.answer_end);
            let rho_a = draw(s.answer_events.len(), s.answer_badge_integral);
            let alpha = sample_dirichlet(rng, k, 1.0);
            let eta = sample_dirichlet(rng, k, 1.0);
            UserParams { mu_q, mu_a, rho_q, rho_a, alpha, eta }
        })
        .collect()
}

/// Fit per-user parameters over the whole observation window.
pub fn fit(dataset: &Dataset, cfg: &ModelConfig, options: &FitOptions) -> Result<FitReport> {
    fit_with_horizons(dataset, cfg, &Horizons::uniform(dataset.num_users(), dataset.horizon()), options)
}

/// Fit per-user parameters, scoring each user's events only up to its own
/// observation ends.
pub fn fit_with_horizons(dataset: &Dataset, cfg: &ModelConfig, horizons: &Horizons, options: &FitOptions) -> Result<FitReport> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("cannot fit an empty event log".into()));
    }
    if !(options.tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be nonnegative, got {}", options.tol)));
    }
    let problem = FitProblem::new(dataset, cfg, horizons)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut params = initialize(&problem, &mut rng);
    let mut flags = vec![UserFitFlags::default(); problem.num_users()];
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let estep = e_step(&problem, &params)?;
        let bound = lower_bound(&problem, &params, &estep)?;
        if !bound.is_finite() {
            return Err(Error::NonFiniteBound { iteration: iterations });
        }
        if let Some(&prev) = trace.last() {
            let rel = (bound - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            log::debug!("iteration {iterations}: bound {bound:.6} (relative change {rel:.3e})");
            trace.push(bound);
            if rel < options.tol {
                converged = true;
                break;
            }
        } else {
            log::debug!("initial bound {bound:.6}");
            trace.push(bound);
        }
        if iterations == options.max_iters {
            break;
        }
        let k = dataset.num_tags();
        let updated: Vec<(UserParams, UserFitFlags)> = problem
            .users()
            .par_iter()
            .zip(&estep.users)
            .zip(&params)
            .map(|((s, st), p)| user_m_step(s, st, p, k))
            .collect();
        for (u, (p, f)) in updated.into_iter().enumerate() {
            params[u] = p;
            flags[u] = f;
        }
        iterations += 1;
    }
    log::info!("fit finished after {iterations} iterations (converged: {converged})");
    Ok(FitReport { params, lower_bound_trace: trace, iterations, converged, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_likelihood_breakdown, Action, BadgeSpec, Event, KernelKind, ProgressFeature, UserLikelihood};

    fn toy() -> (Dataset, ModelConfig) {
        let b = BadgeSpec::new(Action::Question, 2.0, ProgressFeature::EventCount, KernelKind::Gaussian, 1.0);
        let c = BadgeSpec::new(Action::Answer, 1.0, ProgressFeature::EventCount, KernelKind::Exponential, 0.5);
        let cfg = ModelConfig::new(vec![b], vec![c], 1.5);
        let events = vec![
            Event::question(0.2, 0, 0),
            Event::question(0.9, 1, 1),
            Event::answer(1.1, 0, 1),
            Event::question(1.7, 0, 1),
            Event::answer(2.0, 1, 0),
            Event::answer(2.4, 1, 3),
            Event::question(3.0, 1, 0),
            Event::answer(3.5, 0, 6),
        ];
        (Dataset::new(events, 4.0, 2, 2).unwrap(), cfg)
    }

    fn some_params() -> Vec<UserParams> {
        vec![
            UserParams { mu_q: 0.4, mu_a: 0.3, rho_q: 0.5, rho_a: 0.2, alpha: vec![0.3, 0.7], eta: vec![0.6, 0.4] },
            UserParams { mu_q: 0.2, mu_a: 0.5, rho_q: 0.1, rho_a: 0.9, alpha: vec![0.5, 0.5], eta: vec![0.2, 0.8] },
        ]
    }

    #[test]
    fn bound_is_tight_after_e_step() {
        let (d, cfg) = toy();
        let params = some_params();
        let h = Horizons::uniform(2, 4.0);
        let problem = FitProblem::new(&d, &cfg, &h).unwrap();
        let st = e_step(&problem, &params).unwrap();
        let b = lower_bound(&problem, &params, &st).unwrap();
        let ll: f64 = log_likelihood_breakdown(&d, &params, &cfg, &h).unwrap().iter().map(UserLikelihood::total).sum();
        assert!((b - ll).abs() < 1e-10, "{b} vs {ll}");
    }

    #[test]
    fn responsibilities_are_distributions() {
        let (d, cfg) = toy();
        let problem = FitProblem::new(&d, &cfg, &Horizons::uniform(2, 4.0)).unwrap();
        let st = e_step(&problem, &some_params()).unwrap();
        for u in &st.users {
            for phi in &u.phi_q {
                assert!((phi[0] + phi[1] - 1.0).abs() < 1e-9 && phi.iter().all(|x| *x >= 0.0));
            }
            for phi in &u.phi_a {
                assert!((phi.total() - 1.0).abs() < 1e-9);
            }
            assert!(u.zeta.iter().all(|z| *z > 0.0));
        }
    }

    #[test]
    fn fit_trace_is_monotone_and_deterministic() {
        let (d, cfg) = toy();
        let opts = FitOptions { max_iters: 50, tol: 1e-10, seed: 3 };
        let a = fit(&d, &cfg, &opts).unwrap();
        for w in a.lower_bound_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{:?}", a.lower_bound_trace);
        }
        let b = fit(&d, &cfg, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fit_rejects_empty_log() {
        let cfg = ModelConfig::new(vec![], vec![], 1.0);
        let d = Dataset::empty(1.0, 1, 1).unwrap();
        assert!(matches!(fit(&d, &cfg, &FitOptions::default()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn users_without_events_keep_their_start() {
        let cfg = ModelConfig::new(vec![], vec![], 1.0);
        let d = Dataset::new(vec![Event::question(0.5, 0, 0), Event::question(1.0, 0, 1)], 2.0, 2, 2).unwrap();
        let r = fit(&d, &cfg, &FitOptions { max_iters: 5, tol: 0.0, seed: 1 }).unwrap();
        assert!(r.flags[0].retained_answer && !r.flags[0].retained_question);
        assert!(r.flags[1].retained_answer && r.flags[1].retained_question);
        assert!((r.params[0].mu_q - 1.0).abs() < 1e-12);
        assert_eq!(r.params[0].alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn fully_exogenous_m_step() {
        let cfg = ModelConfig::new(vec![], vec![], 1.0);
        let d = Dataset::new(
            vec![Event::question(0.5, 0, 0), Event::question(1.0, 0, 0), Event::question(1.5, 0, 1)],
            3.0,
            1,
            3,
        )
        .unwrap();
        let problem = FitProblem::new(&d, &cfg, &Horizons::uniform(1, 3.0)).unwrap();
        let p = UserParams::uniform(3, 0.2, 0.2);
        let st = e_step(&problem, &[p.clone()]).unwrap();
        let (next, _) = m_step_user(&problem, 0, &st, &p).unwrap();
        assert!((next.mu_q - 1.0).abs() < 1e-15);
        assert_eq!(next.rho_q, p.rho_q);
        assert!((next.alpha[0] - 2.0 / 3.0).abs() < 1e-15 && (next.alpha[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(next.alpha[2], 0.0);
    }

    #[test]
    fn trace_csv_has_header() {
        let report = FitReport {
            params: vec![],
            lower_bound_trace: vec![-3.0, -2.5],
            iterations: 1,
            converged: true,
            flags: vec![],
        };
        let mut buf = Vec::new();
        report.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,lower_bound\n0,"));
        assert_eq!(text.lines().count(), 3);
    }
}
