//! End-to-end experiment orchestration.
//!
//! [`run_experiment`] drives the whole pipeline: load or generate data, split
//! it, train every configured method, score the held-out split, bootstrap the
//! ranking metrics on one shared set of resamples, compare the group-aware
//! two-phase method against each baseline with paired t-tests, and write the
//! output directory (`dataset.csv`, `checkpoints/`, report files,
//! `manifest.json`).
//!
//! Three rules keep runs comparable and reproducible:
//!
//! - **One master seed.** Every random stream (synthesis, split, training,
//!   bootstrap) uses a purpose-derived seed, so any stage can be replayed in
//!   isolation and no stage's draws shift another's.
//! - **Shared training seed.** All methods train from the same derived seed;
//!   score differences then reflect the methods, not their draws.
//! - **Shared resamples.** All methods are evaluated on the same bootstrap
//!   index vectors. A resample is accepted only if it keeps both classes
//!   overall and at least one positive in every category of every audited
//!   attribute — validity depends only on labels and groups, which the
//!   methods share, so one accept/reject decision covers the whole run and
//!   replicates stay paired for the t-tests.
//!
//! Failures in one (method, attribute) cell are recorded and the run
//! continues; the report's failure list plus its cells always cover the full
//! method × attribute grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{auc, fairness_report, marginal_auc, relative_change, FairnessReport, ScoredSet};
use crate::nnet::checkpoint::{load_checkpoint, save_checkpoint};
use crate::nnet::{predict, train, Method, TrainConfig, TrainLog, Trained};
use crate::report::{
    BootstrapInfo, CellReport, ChangeRow, Comparison, ExperimentReport, FailureNote, Provenance,
    REPORT_SCHEMA_VERSION,
};
use crate::seeding::{derive, fnv1a, purpose};
use crate::stats::{draw_indices, paired_t_test, replicate_rng, BootstrapResult};
use crate::synthetic::{generate_synthetic, SyntheticConfig};
use crate::table::{emit_table_dataset, ingest_table, TableSchema};

/// Probability cut used to binarize scores for the threshold metrics
/// (TPR/FPR). Scores are calibrated-ish probabilities, so one half is the
/// natural operating point; it is recorded in the report rather than
/// configurable, because every method must be read at the same point.
pub const CLASSIFICATION_THRESHOLD: f64 = 0.5;

/// Rejected-resample budget, as a multiple of the requested replicate count.
/// If a dataset is so unbalanced that drawing `b` usable resamples needs more
/// than `50·b` attempts in total, the bootstrap is declared infeasible rather
/// than silently biased by extreme selection.
const REDRAW_BUDGET_FACTOR: usize = 50;

/// Output renderings to write.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// `report.json`, full precision.
    Json,
    /// `report.md`, four-decimal tables.
    Markdown,
    /// `report.csv`, one row per (attribute, method, metric).
    Delimited,
}

impl ReportFormat {
    fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "report.json",
            ReportFormat::Markdown => "report.md",
            ReportFormat::Delimited => "report.csv",
        }
    }
}

/// Where the records come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    /// Generate records with a planted shortcut (seeded from the master
    /// seed).
    Synthetic {
        #[serde(default)]
        synthetic: SyntheticConfig,
    },
    /// Ingest a delimited file, optionally with a separate pre-split test
    /// file.
    File {
        path: PathBuf,
        /// When present, `path` is used for training as-is and this file for
        /// evaluation; no random split happens.
        #[serde(default)]
        test_path: Option<PathBuf>,
        /// Column roles; inferred from the header when omitted (`id` and
        /// `label` by name, `f<digits>` features, the rest group columns).
        #[serde(default)]
        schema: Option<TableSchema>,
    },
}

impl Default for DataConfig {
    fn default() -> DataConfig {
        DataConfig::Synthetic { synthetic: SyntheticConfig::default() }
    }
}

/// Full configuration of one run. Every field has a default, so `{}` is a
/// valid config file; unknown keys are rejected rather than ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    /// Group attributes to audit; empty means every attribute with ≥ 2
    /// categories in the test split.
    pub attributes: Vec<String>,
    /// Methods to run; report columns follow this order. Duplicates are
    /// collapsed, keeping first position.
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    /// Held-out share when the source is not pre-split.
    pub test_fraction: f64,
    pub bootstrap_replicates: usize,
    pub out: PathBuf,
    pub formats: Vec<ReportFormat>,
    /// Master seed; all stage seeds derive from it.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            data: DataConfig::default(),
            attributes: Vec::new(),
            methods: Method::all().to_vec(),
            train: TrainConfig::default(),
            test_fraction: 0.25,
            bootstrap_replicates: 200,
            out: PathBuf::from("out"),
            formats: vec![ReportFormat::Json, ReportFormat::Markdown],
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.bootstrap_replicates < 2 {
            return Err(Error::Config(format!(
                "bootstrap_replicates must be ≥ 2, got {}",
                self.bootstrap_replicates
            )));
        }
        if self.formats.is_empty() {
            return Err(Error::Config("at least one output format is required".into()));
        }
        Ok(())
    }

    /// Methods with duplicates collapsed, first occurrence wins.
    pub fn effective_methods(&self) -> Vec<Method> {
        let mut seen = BTreeSet::new();
        self.methods.iter().copied().filter(|m| seen.insert(*m)).collect()
    }
}

/// Hex SHA-256 of the configuration's JSON, with the output directory and
/// the format list removed first: those choose where results land and how
/// they are rendered, not what gets computed, so reruns of one experiment
/// hash identically wherever they are written.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut value = serde_json::to_value(cfg)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("out");
        map.remove("formats");
    }
    Ok(sha256_hex(&serde_json::to_vec(&value)?))
}

/// The data one run operates on.
pub struct LoadedData {
    /// What `dataset.csv` records: the generated set, or the ingested
    /// training table when the source is pre-split.
    pub full: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    /// Stage seeds actually consumed while loading.
    pub seeds: BTreeMap<String, u64>,
}

/// Load or generate the records and produce the train/test split.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let mut seeds = BTreeMap::new();
    match &cfg.data {
        DataConfig::Synthetic { synthetic } => {
            let synthesis_seed = derive(cfg.seed, purpose::SYNTHESIS);
            let split_seed = derive(cfg.seed, purpose::SPLIT);
            seeds.insert("synthesis".into(), synthesis_seed);
            seeds.insert("split".into(), split_seed);
            let full = generate_synthetic(synthetic, synthesis_seed)?;
            let (train, test) = full.split(cfg.test_fraction, split_seed)?;
            Ok(LoadedData { full, train, test, seeds })
        }
        DataConfig::File { path, test_path: Some(test_path), schema } => {
            let train_schema = match schema {
                Some(s) => s.clone(),
                None => TableSchema::infer(path)?,
            };
            let test_schema = match schema {
                Some(s) => s.clone(),
                None => TableSchema::infer(test_path)?,
            };
            let train = ingest_table(path, &train_schema)?;
            let test = ingest_table(test_path, &test_schema)?;
            if train.feature_dim() != test.feature_dim() {
                return Err(Error::Data(format!(
                    "training file has {} features but test file has {}",
                    train.feature_dim(),
                    test.feature_dim()
                )));
            }
            let full = train.clone();
            Ok(LoadedData { full, train, test, seeds })
        }
        DataConfig::File { path, test_path: None, schema } => {
            let schema = match schema {
                Some(s) => s.clone(),
                None => TableSchema::infer(path)?,
            };
            let split_seed = derive(cfg.seed, purpose::SPLIT);
            seeds.insert("split".into(), split_seed);
            let full = ingest_table(path, &schema)?;
            let (train, test) = full.split(cfg.test_fraction, split_seed)?;
            Ok(LoadedData { full, train, test, seeds })
        }
    }
}

/// The attributes the run audits, in configuration order (or every usable
/// attribute of the test split when none were named). Each must have ≥ 2
/// categories in the test split, otherwise its deltas are vacuous.
pub fn resolve_attributes(cfg: &ExperimentConfig, test: &Dataset) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    if cfg.attributes.is_empty() {
        out.extend(test.usable_attributes().iter().map(|a| a.to_string()));
    } else {
        for a in &cfg.attributes {
            if out.contains(a) {
                continue;
            }
            let categories = test.attribute_categories(a).map_err(|_| {
                Error::Config(format!(
                    "attribute `{a}` is not in the data; available: {}",
                    test.usable_attributes().join(", ")
                ))
            })?;
            if categories.len() < 2 {
                return Err(Error::Config(format!(
                    "attribute `{a}` has a single category in the test split; nothing to compare"
                )));
            }
            out.push(a.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Config(
            "no usable group attribute (need ≥ 2 categories in the test split)".into(),
        ));
    }
    Ok(out)
}

/// Cell key: attribute-independent methods are trained once and keyed with an
/// empty attribute.
fn model_key(method: Method, attribute: &str) -> (Method, String) {
    let attr = if method.uses_attribute() { attribute.to_string() } else { String::new() };
    (method, attr)
}

/// Provenance key for a trained model's log: the method name, qualified by
/// attribute only when the run audits several and the method depends on one.
fn log_key(method: Method, attr_key: &str, multi_attribute: bool) -> String {
    if multi_attribute && !attr_key.is_empty() {
        format!("{method}@{attr_key}")
    } else {
        method.to_string()
    }
}

fn sanitize_for_file_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Checkpoint file name for one trained model. Attribute-dependent methods
/// get an attribute-qualified name only when the run audits several
/// attributes; the common single-attribute case keeps plain `<method>.bin`.
pub fn checkpoint_file_name(method: Method, attr_key: &str, multi_attribute: bool) -> String {
    if multi_attribute && !attr_key.is_empty() {
        format!("{method}.{}.bin", sanitize_for_file_name(attr_key))
    } else {
        format!("{method}.bin")
    }
}

/// Models trained (or loaded) for the run, keyed by [`model_key`].
pub struct TrainedModels {
    pub models: BTreeMap<(Method, String), Trained>,
    pub failures: Vec<FailureNote>,
}

/// Train every configured method, sharing one derived training seed so the
/// methods differ only in what they do with the draws. A method that fails
/// becomes a failure note, not a run abort.
pub fn train_models(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    attributes: &[String],
) -> TrainedModels {
    let train_seed = derive(cfg.seed, purpose::TRAIN);
    let mut models = BTreeMap::new();
    let mut failures = Vec::new();
    let mut attempted = BTreeSet::new();
    for attribute in attributes {
        for method in cfg.effective_methods() {
            let key = model_key(method, attribute);
            if !attempted.insert(key.clone()) {
                continue;
            }
            let mut tc = cfg.train.clone();
            tc.attribute = attribute.clone();
            tc.seed = train_seed;
            match train(method, train_set, &tc) {
                Ok(t) => {
                    models.insert(key, t);
                }
                Err(e) => failures.push(FailureNote {
                    method: Some(method),
                    attribute: method.uses_attribute().then(|| attribute.clone()),
                    stage: "train".into(),
                    message: e.to_string(),
                }),
            }
        }
    }
    TrainedModels { models, failures }
}

/// Load previously saved checkpoints for the configured methods instead of
/// training (the `evaluate` entry point).
pub fn load_models(cfg: &ExperimentConfig, attributes: &[String]) -> TrainedModels {
    let multi = attributes.len() > 1;
    let mut models = BTreeMap::new();
    let mut failures = Vec::new();
    let mut attempted = BTreeSet::new();
    for attribute in attributes {
        for method in cfg.effective_methods() {
            let key = model_key(method, attribute);
            if !attempted.insert(key.clone()) {
                continue;
            }
            let path = cfg
                .out
                .join("checkpoints")
                .join(checkpoint_file_name(method, &key.1, multi));
            match load_checkpoint(&path) {
                Ok(model) => {
                    models.insert(key, Trained { model, log: TrainLog::default() });
                }
                Err(e) => failures.push(FailureNote {
                    method: Some(method),
                    attribute: method.uses_attribute().then(|| attribute.clone()),
                    stage: "train".into(),
                    message: format!("checkpoint {}: {e}", path.display()),
                }),
            }
        }
    }
    TrainedModels { models, failures }
}

/// Score the held-out split with every trained model.
pub fn score_models(
    trained: &TrainedModels,
    test: &Dataset,
) -> (BTreeMap<(Method, String), ScoredSet>, Vec<FailureNote>) {
    let mut scores = BTreeMap::new();
    let mut failures = Vec::new();
    for (key, t) in &trained.models {
        match predict(&t.model, test) {
            Ok(s) => {
                scores.insert(key.clone(), s);
            }
            Err(e) => failures.push(FailureNote {
                method: Some(key.0),
                attribute: (!key.1.is_empty()).then(|| key.1.clone()),
                stage: "predict".into(),
                message: e.to_string(),
            }),
        }
    }
    (scores, failures)
}

/// The shared resample index vectors, plus bookkeeping for the report.
#[derive(Debug)]
struct SharedDraws {
    indices: Vec<Vec<usize>>,
    redraws: usize,
    index_hash: String,
}

/// Draw `b` resamples usable by every metric of every method at once:
/// each must keep both classes overall and at least one positive in every
/// category of every audited attribute. Each replicate has its own RNG
/// stream, so replicate `k` is identical no matter how many rejections other
/// replicates needed.
fn draw_shared_replicates(
    test: &Dataset,
    attributes: &[String],
    b: usize,
    seed: u64,
) -> Result<SharedDraws> {
    let n = test.len();
    let labels = test.labels();
    let mut columns = Vec::with_capacity(attributes.len());
    for a in attributes {
        let (codes, categories) = test.group_codes(a)?;
        columns.push((codes, categories.len()));
    }
    let budget = REDRAW_BUDGET_FACTOR * b;
    let mut attempts = 0usize;
    let mut redraws = 0usize;
    let mut indices = Vec::with_capacity(b);
    let mut hash_bytes = Vec::with_capacity(b * n * 8);
    for rep in 0..b as u64 {
        let mut rng = replicate_rng(seed, rep);
        loop {
            attempts += 1;
            if attempts > budget {
                return Err(Error::BootstrapInfeasible {
                    attempts: budget,
                    replicates: b - indices.len(),
                });
            }
            let idx = draw_indices(&mut rng, n);
            if resample_supports_all_metrics(&idx, &labels, &columns) {
                for &i in &idx {
                    hash_bytes.extend_from_slice(&(i as u64).to_le_bytes());
                }
                indices.push(idx);
                break;
            }
            redraws += 1;
        }
    }
    let index_hash = format!("{:016x}", fnv1a(&hash_bytes));
    Ok(SharedDraws { indices, redraws, index_hash })
}

/// Overall AUC needs both classes; each category's marginal AUC needs that
/// category to keep at least one positive (negatives come from the whole
/// resample, which the class check covers).
fn resample_supports_all_metrics(
    idx: &[usize],
    labels: &[u8],
    columns: &[(Vec<usize>, usize)],
) -> bool {
    let mut pos = false;
    let mut neg = false;
    for &i in idx {
        if labels[i] == 1 {
            pos = true;
        } else {
            neg = true;
        }
    }
    if !pos || !neg {
        return false;
    }
    for (codes, n_categories) in columns {
        let mut seen = vec![false; *n_categories];
        let mut found = 0;
        for &i in idx {
            if labels[i] == 1 && !seen[codes[i]] {
                seen[codes[i]] = true;
                found += 1;
                if found == *n_categories {
                    break;
                }
            }
        }
        if found != *n_categories {
            return false;
        }
    }
    true
}

/// One cell's metrics: full-set points plus bootstrap intervals computed on
/// the shared resamples.
fn evaluate_cell(
    scored: &ScoredSet,
    attribute: &str,
    draws: &SharedDraws,
    seed: u64,
) -> Result<(FairnessReport, BootstrapResult, BTreeMap<String, BootstrapResult>, BootstrapResult)>
{
    let fairness = fairness_report(scored, attribute, CLASSIFICATION_THRESHOLD)?;
    let categories = scored.categories(attribute)?;
    let b = draws.indices.len();
    let mut auc_reps = Vec::with_capacity(b);
    let mut mauc_reps: BTreeMap<&str, Vec<f64>> =
        categories.iter().map(|c| (c.as_str(), Vec::with_capacity(b))).collect();
    let mut delta_reps = Vec::with_capacity(b);
    for idx in &draws.indices {
        let sub = scored.resample(idx)?;
        auc_reps.push(auc(&sub)?);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for cat in &categories {
            let v = marginal_auc(&sub, attribute, cat)?;
            mauc_reps.get_mut(cat.as_str()).expect("category seen above").push(v);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        delta_reps.push(hi - lo);
    }
    let overall =
        BootstrapResult::from_replicates(fairness.overall_auc, auc_reps, seed, draws.redraws)?;
    let mut marginal = BTreeMap::new();
    for cat in &categories {
        let point = fairness.per_group[cat].marginal_auc;
        let reps = mauc_reps.remove(cat.as_str()).expect("filled above");
        marginal.insert(
            cat.clone(),
            BootstrapResult::from_replicates(point, reps, seed, draws.redraws)?,
        );
    }
    let delta = BootstrapResult::from_replicates(
        fairness.deltas.marginal_auc,
        delta_reps,
        seed,
        draws.redraws,
    )?;
    Ok((fairness, overall, marginal, delta))
}

/// Everything the evaluation stage produces.
pub struct Evaluation {
    pub cells: Vec<CellReport>,
    pub comparisons: Vec<Comparison>,
    pub changes: Vec<ChangeRow>,
    pub bootstrap: BootstrapInfo,
    pub failures: Vec<FailureNote>,
}

/// Evaluate every scored cell on the shared resamples, then compare the
/// group-aware two-phase method against each baseline: a paired t-test on the
/// ΔmAUC replicate differences, and point-estimate change rows for the gap
/// and the overall AUC.
pub fn evaluate_scored(
    cfg: &ExperimentConfig,
    scores: &BTreeMap<(Method, String), ScoredSet>,
    test: &Dataset,
    attributes: &[String],
) -> Result<Evaluation> {
    let methods = cfg.effective_methods();
    let boot_seed = derive(cfg.seed, purpose::BOOTSTRAP);
    let draws = draw_shared_replicates(test, attributes, cfg.bootstrap_replicates, boot_seed)?;

    let mut cells: Vec<CellReport> = Vec::new();
    let mut failures = Vec::new();
    for attribute in attributes {
        for &method in &methods {
            let Some(scored) = scores.get(&model_key(method, attribute)) else {
                failures.push(FailureNote {
                    method: Some(method),
                    attribute: Some(attribute.clone()),
                    stage: "evaluate".into(),
                    message: "no scores for this cell; see the earlier failure".into(),
                });
                continue;
            };
            match evaluate_cell(scored, attribute, &draws, boot_seed) {
                Ok((fairness, overall_auc, marginal_auc, delta_marginal_auc)) => {
                    cells.push(CellReport {
                        method,
                        attribute: attribute.clone(),
                        fairness,
                        overall_auc,
                        marginal_auc,
                        delta_marginal_auc,
                    });
                }
                Err(e) => failures.push(FailureNote {
                    method: Some(method),
                    attribute: Some(attribute.clone()),
                    stage: "evaluate".into(),
                    message: e.to_string(),
                }),
            }
        }
    }

    let mut comparisons = Vec::new();
    let mut changes = Vec::new();
    let find = |cells: &[CellReport], m: Method, a: &str| -> Option<usize> {
        cells.iter().position(|c| c.method == m && c.attribute == a)
    };
    for attribute in attributes {
        let Some(p) = find(&cells, Method::Proposed, attribute) else {
            continue;
        };
        for &baseline in &methods {
            if baseline == Method::Proposed {
                continue;
            }
            let Some(b) = find(&cells, baseline, attribute) else {
                continue;
            };
            match paired_t_test(
                &cells[p].delta_marginal_auc.replicates,
                &cells[b].delta_marginal_auc.replicates,
            ) {
                Ok(t_test) => comparisons.push(Comparison {
                    attribute: attribute.clone(),
                    baseline,
                    t_test,
                }),
                Err(e) => failures.push(FailureNote {
                    method: Some(baseline),
                    attribute: Some(attribute.clone()),
                    stage: "compare".into(),
                    message: e.to_string(),
                }),
            }
            for (metric, base_value, prop_value) in [
                (
                    "delta_marginal_auc",
                    cells[b].fairness.deltas.marginal_auc,
                    cells[p].fairness.deltas.marginal_auc,
                ),
                ("overall_auc", cells[b].fairness.overall_auc, cells[p].fairness.overall_auc),
            ] {
                let change = relative_change(base_value, prop_value);
                changes.push(ChangeRow {
                    attribute: attribute.clone(),
                    baseline,
                    metric: metric.into(),
                    baseline_value: base_value,
                    proposed_value: prop_value,
                    absolute_change: change.absolute,
                    relative_change_pct: change.relative_pct,
                });
            }
        }
    }

    Ok(Evaluation {
        cells,
        comparisons,
        changes,
        bootstrap: BootstrapInfo {
            replicates: cfg.bootstrap_replicates,
            redraws: draws.redraws,
            seed: boot_seed,
            index_hash: draws.index_hash,
        },
        failures,
    })
}

/// Names for the self-contained numeric routines, recorded so report readers
/// can tell which conventions produced the numbers.
fn algorithm_versions() -> BTreeMap<String, String> {
    [
        ("crate", env!("CARGO_PKG_VERSION")),
        ("auc", "rank-midpoint-tie-half"),
        ("bootstrap_ci", "percentile-2.5-97.5-interpolated"),
        ("t_test", "paired-two-sided-student"),
        ("logistic", "irls-wald"),
        ("checkpoint", "FSCLNN01"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Choices this implementation makes that are not forced by the method
/// definitions; surfaced in every report so comparisons across runs are
/// honest about them.
fn assumptions(cfg: &ExperimentConfig) -> Vec<String> {
    vec![
        format!(
            "classification threshold {CLASSIFICATION_THRESHOLD} for TPR/FPR (ranking metrics \
             are threshold-free)"
        ),
        format!("batch size {}", cfg.train.batch_size),
        format!(
            "single-phase methods train for pretrain+finetune = {} epochs (same compute budget \
             as the two-phase methods)",
            cfg.train.pretrain_epochs + cfg.train.finetune_epochs
        ),
        format!("gradient-reversal weight {} for the adversarial method", cfg.train.adversary_weight),
        format!(
            "encoder hidden widths {:?}, embedding dimension {}",
            cfg.train.hidden, cfg.train.embed_dim
        ),
        "fixed epoch counts; no early stopping".into(),
    ]
}

/// Assemble the full report from the stage outputs.
pub fn assemble_report(
    cfg: &ExperimentConfig,
    data: &LoadedData,
    attributes: &[String],
    trained: &TrainedModels,
    predict_failures: Vec<FailureNote>,
    evaluation: Evaluation,
) -> Result<ExperimentReport> {
    let multi = attributes.len() > 1;
    let mut train_logs = BTreeMap::new();
    for ((method, attr_key), t) in &trained.models {
        train_logs.insert(log_key(*method, attr_key, multi), t.log.clone());
    }
    let mut derived_seeds = data.seeds.clone();
    derived_seeds.insert("train".into(), derive(cfg.seed, purpose::TRAIN));
    derived_seeds.insert("bootstrap".into(), derive(cfg.seed, purpose::BOOTSTRAP));

    let mut failures = trained.failures.clone();
    failures.extend(predict_failures);
    failures.extend(evaluation.failures);

    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        methods: cfg.effective_methods(),
        attributes: attributes.to_vec(),
        cells: evaluation.cells,
        comparisons: evaluation.comparisons,
        changes: evaluation.changes,
        provenance: Provenance {
            config_hash: config_hash(cfg)?,
            master_seed: cfg.seed,
            derived_seeds,
            bootstrap: evaluation.bootstrap,
            train_logs,
            versions: algorithm_versions(),
            assumptions: assumptions(cfg),
        },
        failures,
    })
}

/// File inventory of one output directory. Stage entry points merge into an
/// existing manifest (new file entries override same-named ones, others are
/// kept), so `train` followed by `evaluate` leaves a manifest covering the
/// whole directory; the header fields describe the most recent operation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generated_at: String,
    pub config_hash: String,
    pub master_seed: u64,
    /// Relative path → hex SHA-256. Report files are hashed with the
    /// `generated_at` value replaced by `TIMESTAMP`, so identical reruns
    /// produce identical hashes even though the stored bytes differ in the
    /// timestamp.
    pub files: BTreeMap<String, String>,
    pub failures: Vec<FailureNote>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Hash of a report rendering with the run timestamp masked out.
fn sha256_normalized(body: &str, generated_at: &str) -> String {
    sha256_hex(body.replace(generated_at, "TIMESTAMP").as_bytes())
}

/// Create the output directory (and `checkpoints/`) and verify it is
/// writable, so a doomed run fails before any training happens.
pub fn prepare_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out.join("checkpoints"))?;
    let probe = out.join(".write-probe");
    fs::write(&probe, b"probe")?;
    fs::remove_file(&probe)?;
    Ok(())
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn read_manifest(out: &Path) -> Option<Manifest> {
    let text = fs::read_to_string(out.join("manifest.json")).ok()?;
    serde_json::from_str(&text).ok()
}

/// Update (or create) `manifest.json`: new file entries are merged over the
/// existing inventory, the failure list and header fields are replaced by the
/// current operation's.
fn merge_manifest(
    cfg: &ExperimentConfig,
    generated_at: &str,
    files: BTreeMap<String, String>,
    failures: Vec<FailureNote>,
) -> Result<Manifest> {
    let mut manifest = read_manifest(&cfg.out).unwrap_or(Manifest {
        schema_version: REPORT_SCHEMA_VERSION,
        generated_at: String::new(),
        config_hash: String::new(),
        master_seed: 0,
        files: BTreeMap::new(),
        failures: Vec::new(),
    });
    manifest.schema_version = REPORT_SCHEMA_VERSION;
    manifest.generated_at = generated_at.to_string();
    manifest.config_hash = config_hash(cfg)?;
    manifest.master_seed = cfg.seed;
    manifest.files.extend(files);
    manifest.failures = failures;
    let body = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(cfg.out.join("manifest.json"), body)?;
    Ok(manifest)
}

/// Best-effort record of a run-level failure: keeps whatever the manifest
/// already lists and appends a `run`-stage note, so the output directory
/// explains what happened.
fn write_failure_manifest(cfg: &ExperimentConfig, err: &Error) {
    let mut failures = read_manifest(&cfg.out).map(|m| m.failures).unwrap_or_default();
    failures.push(FailureNote {
        method: None,
        attribute: None,
        stage: "run".into(),
        message: err.to_string(),
    });
    let _ = merge_manifest(cfg, &now_rfc3339(), BTreeMap::new(), failures);
}

fn write_dataset(out: &Path, data: &LoadedData) -> Result<(String, String)> {
    let path = out.join("dataset.csv");
    emit_table_dataset(&data.full, &path)?;
    Ok(("dataset.csv".to_string(), sha256_file(&path)?))
}

fn write_checkpoints(
    out: &Path,
    trained: &TrainedModels,
    multi_attribute: bool,
) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    for ((method, attr_key), t) in &trained.models {
        let name = checkpoint_file_name(*method, attr_key, multi_attribute);
        let path = out.join("checkpoints").join(&name);
        save_checkpoint(&t.model, &path)?;
        files.insert(format!("checkpoints/{name}"), sha256_file(&path)?);
    }
    Ok(files)
}

fn write_reports(
    cfg: &ExperimentConfig,
    report: &ExperimentReport,
) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    for format in &cfg.formats {
        let body = match format {
            ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
            ReportFormat::Markdown => report.render_markdown(),
            ReportFormat::Delimited => report.render_delimited()?,
        };
        let name = format.file_name();
        fs::write(cfg.out.join(name), &body)?;
        files.insert(name.to_string(), sha256_normalized(&body, &report.generated_at));
    }
    Ok(files)
}

/// Run the whole experiment and write the output directory.
///
/// Per-cell problems are recorded in the report's failure list and the run
/// continues; the run itself errors only when nothing could be evaluated or
/// a run-level stage (loading, resample drawing, writing) fails — and in
/// that case a manifest naming the failure is still written when possible.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    prepare_out_dir(&cfg.out)?;
    match run_pipeline(cfg) {
        Ok(report) => Ok(report),
        Err(e) => {
            write_failure_manifest(cfg, &e);
            Err(e)
        }
    }
}

fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let data = load_dataset(cfg)?;
    let attributes = resolve_attributes(cfg, &data.test)?;
    let trained = train_models(cfg, &data.train, &attributes);
    let (scores, predict_failures) = score_models(&trained, &data.test);
    let evaluation = evaluate_scored(cfg, &scores, &data.test, &attributes)?;
    let report = assemble_report(cfg, &data, &attributes, &trained, predict_failures, evaluation)?;
    let mut files = BTreeMap::new();
    let (name, hash) = write_dataset(&cfg.out, &data)?;
    files.insert(name, hash);
    files.extend(write_checkpoints(&cfg.out, &trained, report.attributes.len() > 1)?);
    files.extend(write_reports(cfg, &report)?);
    merge_manifest(cfg, &report.generated_at, files, report.failures.clone())?;
    if report.cells.is_empty() {
        return Err(Error::Training(
            "every (method, attribute) cell failed; see the failure list in manifest.json".into(),
        ));
    }
    Ok(report)
}

/// `generate` entry point: materialize `dataset.csv` alone.
pub fn generate_outputs(cfg: &ExperimentConfig) -> Result<Manifest> {
    fs::create_dir_all(&cfg.out)?;
    match generate_pipeline(cfg) {
        Ok(manifest) => Ok(manifest),
        Err(e) => {
            write_failure_manifest(cfg, &e);
            Err(e)
        }
    }
}

fn generate_pipeline(cfg: &ExperimentConfig) -> Result<Manifest> {
    let data = load_dataset(cfg)?;
    let mut files = BTreeMap::new();
    let (name, hash) = write_dataset(&cfg.out, &data)?;
    files.insert(name, hash);
    merge_manifest(cfg, &now_rfc3339(), files, Vec::new())
}

/// `train` entry point: train the configured methods and save their
/// checkpoints (plus `dataset.csv`, so the directory records what the
/// models were trained on). Errors only when no method trained at all.
pub fn train_outputs(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    prepare_out_dir(&cfg.out)?;
    match train_pipeline(cfg) {
        Ok(manifest) => Ok(manifest),
        Err(e) => {
            write_failure_manifest(cfg, &e);
            Err(e)
        }
    }
}

fn train_pipeline(cfg: &ExperimentConfig) -> Result<Manifest> {
    let data = load_dataset(cfg)?;
    let attributes = resolve_attributes(cfg, &data.test)?;
    let trained = train_models(cfg, &data.train, &attributes);
    let mut files = BTreeMap::new();
    let (name, hash) = write_dataset(&cfg.out, &data)?;
    files.insert(name, hash);
    files.extend(write_checkpoints(&cfg.out, &trained, attributes.len() > 1)?);
    let manifest = merge_manifest(cfg, &now_rfc3339(), files, trained.failures.clone())?;
    if trained.models.is_empty() {
        return Err(Error::Training(
            "no method trained successfully; see the failure list in manifest.json".into(),
        ));
    }
    Ok(manifest)
}

/// `evaluate` entry point: score saved checkpoints on the held-out split and
/// write the report files, without retraining.
pub fn evaluate_saved(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    match evaluate_pipeline(cfg) {
        Ok(report) => Ok(report),
        Err(e) => {
            write_failure_manifest(cfg, &e);
            Err(e)
        }
    }
}

fn evaluate_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let data = load_dataset(cfg)?;
    let attributes = resolve_attributes(cfg, &data.test)?;
    let trained = load_models(cfg, &attributes);
    let (scores, predict_failures) = score_models(&trained, &data.test);
    let evaluation = evaluate_scored(cfg, &scores, &data.test, &attributes)?;
    let report = assemble_report(cfg, &data, &attributes, &trained, predict_failures, evaluation)?;
    let files = write_reports(cfg, &report)?;
    merge_manifest(cfg, &report.generated_at, files, report.failures.clone())?;
    if report.cells.is_empty() {
        return Err(Error::Training(
            "every (method, attribute) cell failed; see the failure list in manifest.json".into(),
        ));
    }
    Ok(report)
}

/// `report` entry point: re-render an existing `report.json` into the
/// requested formats without recomputing anything.
pub fn rerender_report(cfg: &ExperimentConfig) -> Result<Manifest> {
    let path = cfg.out.join("report.json");
    let text = fs::read_to_string(&path).map_err(|_| {
        Error::Config(format!(
            "no report.json in {}; run the experiment first",
            cfg.out.display()
        ))
    })?;
    let report: ExperimentReport = serde_json::from_str(&text)?;
    let files = write_reports(cfg, &report)?;
    merge_manifest(cfg, &report.generated_at, files, report.failures.clone())
}
