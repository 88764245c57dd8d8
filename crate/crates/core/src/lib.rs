//! Badge-aware intertwined marked temporal point processes for question and
//! answer activity on community Q&A sites.
//!
//! Users ask questions at a rate driven by an exogenous term plus badge
//! kernels that respond to their progress toward threshold badges. They
//! answer at a rate that adds, on top of the same two components, an
//! excitation from every earlier question weighted by the user's expertise
//! in its tag and decaying exponentially with age. Question marks are tags;
//! answer marks are the question being answered.
//!
//! The crate covers simulation by thinning ([`simulator`]), variational EM
//! fitting ([`inference`]), reference models ([`baselines`]), metrics
//! ([`evaluation`]) and file formats ([`io`]).

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod io;
pub mod model;
pub mod simulator;

pub use error::{Error, Result};
