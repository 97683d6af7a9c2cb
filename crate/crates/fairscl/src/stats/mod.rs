//! Self-contained statistical inference: percentile bootstrap, paired
//! t-tests, and logistic regression with Wald odds-ratio intervals.
//!
//! Everything numeric here is hand-rolled on purpose — the distribution
//! functions, the resampling scheme, and the IRLS solver are small, frozen
//! by tests against closed-form oracles, and free of external numerical
//! dependencies, so results are reproducible bit-for-bit across builds.

pub mod bootstrap;
pub mod logistic;
pub mod special;
pub mod ttest;

pub use bootstrap::{bootstrap, draw_indices, percentile, replicate_rng, BootstrapResult};
pub use logistic::{logistic_fit, LogisticFit};
pub use special::{regularized_incomplete_beta, student_t_cdf, two_sided_t_pvalue};
pub use ttest::{paired_t_test, TTestResult};
