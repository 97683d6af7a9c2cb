//! Group-aware contrastive learning for subgroup-fair binary classification.
//!
//! This crate trains small feedforward classifiers whose representations are
//! shaped by a group-aware supervised contrastive objective: records with the
//! same label but different group memberships attract, records with different
//! labels inside the same group repel. The intended effect is a score function
//! whose ranking quality is uniform across subgroups instead of leaning on
//! group-correlated shortcuts.
//!
//! The pieces, bottom to top:
//!
//! - [`dataset`]: validated record tables with binary labels, named group
//!   attributes, and dense features; balanced resampling and splitting.
//! - [`synthetic`]: a generator for biased toy data with a tunable
//!   group-correlated shortcut feature.
//! - [`table`]: CSV ingestion and emission with exact float round-tripping.
//! - [`metrics`]: AUC, per-subgroup marginal AUC, TPR/FPR/Brier, and the
//!   max-minus-min subgroup gaps of each.
//! - [`stats`]: percentile bootstrap, paired t-tests, and logistic odds
//!   ratios, all self-contained.
//! - [`contrastive`]: pair construction and the contrastive loss with
//!   analytic gradients.
//! - [`nnet`]: the encoder/heads model, the optimizer, two-phase training,
//!   and four reference baselines.
//! - [`experiment`] / [`report`]: end-to-end orchestration with shared
//!   bootstrap resamples across methods, and report rendering.
//!
//! Every random decision flows from explicit 64-bit seeds; identical inputs
//! produce identical outputs, down to the serialized byte.

pub mod contrastive;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nnet;
pub mod report;
pub mod seeding;
pub mod stats;
pub mod synthetic;
pub mod table;

pub use contrastive::{
    build_pairs, contrastive_loss, contrastive_loss_grad, EmbeddingBatch, LossForm, PairIndex,
    PairMode, PairSet,
};
pub use dataset::{Dataset, Record, SubgroupView};
pub use error::{Error, Result};
pub use experiment::{run_experiment, DataConfig, ExperimentConfig};
pub use metrics::{
    auc, fairness_report, marginal_auc, relative_change, FairnessReport, ScoredSet,
};
pub use nnet::{
    predict, train, train_adv, train_balanced, train_erm, train_proposed, train_scl, Method,
    ModelState, TrainConfig, Trained,
};
pub use report::ExperimentReport;
pub use stats::{bootstrap, logistic_fit, paired_t_test, BootstrapResult, LogisticFit, TTestResult};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use table::{emit_table_dataset, ingest_table, TableSchema};
