//! Domain types, intensities, kernels, mark distributions, compensators and
//! the observed-data log-likelihood.

mod dataset;
mod index;
mod kernel;
mod likelihood;
mod params;

pub use dataset::{Action, Dataset, Event, Horizons, Mark};
pub use index::{AnswerTerms, ModelIndex};
pub use kernel::{badge_kernel, history_feature, time_decay, KernelKind, ProgressTracker};
pub use likelihood::{
    answer_compensator, answer_intensity, answer_parent_pmf, dataset_log_likelihood, log_likelihood_breakdown,
    question_compensator, question_intensity, question_mark_pmf, UserLikelihood,
};
pub use params::{validate_all, BadgeSpec, ModelConfig, ProgressFeature, UserParams};
