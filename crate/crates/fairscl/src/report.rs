//! Report structure and rendering.
//!
//! An [`ExperimentReport`] is the complete, serializable result of one
//! experiment run: per-(method, attribute) fairness summaries with bootstrap
//! intervals, paired comparisons of the two-phase group-aware method against
//! each baseline, a change table, and a provenance block that pins down how
//! every number was produced.
//!
//! Rendering conventions:
//!
//! - JSON keeps full float precision and carries a schema version.
//! - Markdown shows four decimals, interval cells as
//!   `point (low-high)`, one metric table per attribute with one column per
//!   method (methods and attributes in configuration order), and `—` where a
//!   cell failed.
//! - The delimited form is CSV with one row per (attribute, method, metric),
//!   full precision, empty interval fields for point-only metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FairnessReport;
use crate::nnet::{Method, TrainLog};
use crate::stats::{BootstrapResult, TTestResult};

/// Version of the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One (method, attribute) evaluation: point estimates for everything, and
/// bootstrap intervals for the ranking metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub attribute: String,
    /// Point estimates on the full test set, including threshold metrics.
    pub fairness: FairnessReport,
    pub overall_auc: BootstrapResult,
    /// Keyed by category name.
    pub marginal_auc: BTreeMap<String, BootstrapResult>,
    pub delta_marginal_auc: BootstrapResult,
}

/// Paired comparison of the group-aware two-phase method against one
/// baseline on the shared ΔmAUC bootstrap replicates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub attribute: String,
    pub baseline: Method,
    /// Paired t-test of (proposed − baseline) replicate differences; a
    /// negative mean difference means the proposed method narrowed the gap.
    pub t_test: TTestResult,
}

/// One row of the change table: a metric moving from a baseline's point
/// estimate to the proposed method's.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChangeRow {
    pub attribute: String,
    pub baseline: Method,
    pub metric: String,
    pub baseline_value: f64,
    pub proposed_value: f64,
    pub absolute_change: f64,
    /// `100 · absolute / baseline`; absent when the baseline is exactly 0.
    pub relative_change_pct: Option<f64>,
}

/// How the shared bootstrap resamples were drawn.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapInfo {
    pub replicates: usize,
    /// Resamples rejected (some category lost all positives, or a class
    /// vanished) and redrawn before reaching `replicates` usable ones.
    pub redraws: usize,
    pub seed: u64,
    /// Hash of every replicate's index vector, in order. Two runs (or two
    /// methods within one run) paired replicate-by-replicate must agree on
    /// this value.
    pub index_hash: String,
}

/// Something that failed mid-run; the rest of the report is still valid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureNote {
    pub method: Option<Method>,
    pub attribute: Option<String>,
    /// Which stage failed: `train`, `predict`, `evaluate`, `compare`, `write`.
    pub stage: String,
    pub message: String,
}

/// Everything needed to reproduce or audit the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex SHA-256 of the effective configuration JSON (after flag
    /// overrides).
    pub config_hash: String,
    pub master_seed: u64,
    /// Purpose-derived seeds actually used (synthesis, split, train,
    /// bootstrap).
    pub derived_seeds: BTreeMap<String, u64>,
    pub bootstrap: BootstrapInfo,
    /// Training logs keyed by `method` or `method@attribute` for methods
    /// trained per attribute; includes anchor-drop counts.
    pub train_logs: BTreeMap<String, TrainLog>,
    /// Algorithm identities of the self-contained numeric routines.
    pub versions: BTreeMap<String, String>,
    /// Defaults this implementation chose where no external value exists.
    pub assumptions: Vec<String>,
}

/// The complete result of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    /// RFC 3339 UTC timestamp; the only field that varies between identical
    /// reruns.
    pub generated_at: String,
    /// Methods in configuration order; table columns follow this order.
    pub methods: Vec<Method>,
    /// Attributes in configuration order.
    pub attributes: Vec<String>,
    pub cells: Vec<CellReport>,
    pub comparisons: Vec<Comparison>,
    pub changes: Vec<ChangeRow>,
    pub provenance: Provenance,
    pub failures: Vec<FailureNote>,
}

/// Interval cell in the tables' presentation convention:
/// `0.0116 (0.0110-0.0123)`.
pub fn format_estimate(point: f64, low: f64, high: f64) -> String {
    format!("{point:.4} ({low:.4}-{high:.4})")
}

fn format_pct(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:+.2}%"),
        None => "n/a".into(),
    }
}

impl ExperimentReport {
    pub fn cell(&self, method: Method, attribute: &str) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.attribute == attribute)
    }

    /// Markdown rendering: header block, one metric table per attribute,
    /// comparison and change tables, assumptions, failures.
    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Subgroup fairness report\n");
        let _ = writeln!(out, "- Generated: {}", self.generated_at);
        let _ = writeln!(
            out,
            "- Methods: {}",
            self.methods
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(", ")
        );
        let _ = writeln!(out, "- Attributes: {}", self.attributes.join(", "));
        let _ = writeln!(
            out,
            "- Bootstrap: {} replicates, {} redraws, seed {}",
            self.provenance.bootstrap.replicates,
            self.provenance.bootstrap.redraws,
            self.provenance.bootstrap.seed
        );
        let _ = writeln!(out, "- Master seed: {}", self.provenance.master_seed);
        let _ = writeln!(out, "- Config hash: {}", self.provenance.config_hash);
        let _ = writeln!(out, "- Schema version: {}", self.schema_version);

        for attribute in &self.attributes {
            let _ = writeln!(out, "\n## Attribute `{attribute}`\n");
            self.metric_table(&mut out, attribute);

            let comparisons: Vec<&Comparison> = self
                .comparisons
                .iter()
                .filter(|c| &c.attribute == attribute)
                .collect();
            if !comparisons.is_empty() {
                let _ = writeln!(
                    out,
                    "\n### Paired ΔmAUC comparisons, `proposed` vs baseline\n"
                );
                let _ = writeln!(out, "| Baseline | Mean difference | t | p | df |");
                let _ = writeln!(out, "| --- | --- | --- | --- | --- |");
                for c in comparisons {
                    let _ = writeln!(
                        out,
                        "| {} | {:+.4} | {:.4} | {:.4} | {} |",
                        c.baseline, c.t_test.mean_diff, c.t_test.t, c.t_test.p, c.t_test.df
                    );
                }
            }

            let changes: Vec<&ChangeRow> = self
                .changes
                .iter()
                .filter(|c| &c.attribute == attribute)
                .collect();
            if !changes.is_empty() {
                let _ = writeln!(out, "\n### Change from baseline to `proposed`\n");
                let _ = writeln!(
                    out,
                    "| Baseline | Metric | Baseline value | Proposed value | Absolute | Relative |"
                );
                let _ = writeln!(out, "| --- | --- | --- | --- | --- | --- |");
                for c in changes {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {:.4} | {:.4} | {:+.4} | {} |",
                        c.baseline,
                        c.metric,
                        c.baseline_value,
                        c.proposed_value,
                        c.absolute_change,
                        format_pct(c.relative_change_pct)
                    );
                }
            }
        }

        if !self.provenance.assumptions.is_empty() {
            let _ = writeln!(out, "\n## Assumptions\n");
            for a in &self.provenance.assumptions {
                let _ = writeln!(out, "- {a}");
            }
        }

        if !self.failures.is_empty() {
            let _ = writeln!(out, "\n## Failures\n");
            let _ = writeln!(out, "| Method | Attribute | Stage | Message |");
            let _ = writeln!(out, "| --- | --- | --- | --- |");
            for f in &self.failures {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} |",
                    f.method.map_or("—".into(), |m| m.to_string()),
                    f.attribute.as_deref().unwrap_or("—"),
                    f.stage,
                    f.message.replace('|', "\\|").replace('\n', " ")
                );
            }
        }
        out
    }

    fn metric_table(&self, out: &mut String, attribute: &str) {
        let _ = write!(out, "| Metric |");
        for m in &self.methods {
            let _ = write!(out, " {m} |");
        }
        let _ = writeln!(out);
        let _ = write!(out, "| --- |");
        for _ in &self.methods {
            let _ = write!(out, " --- |");
        }
        let _ = writeln!(out);

        // Category rows come from whichever cell exists for this attribute;
        // every method shares the same test set, hence the same categories.
        let categories: Vec<String> = self
            .cells
            .iter()
            .find(|c| c.attribute == attribute)
            .map(|c| c.marginal_auc.keys().cloned().collect())
            .unwrap_or_default();

        let write_row =
            |label: String, value: &dyn Fn(&CellReport) -> String, out: &mut String| {
                let _ = write!(out, "| {label} |");
                for &m in &self.methods {
                    match self.cell(m, attribute) {
                        Some(cell) => {
                            let _ = write!(out, " {} |", value(cell));
                        }
                        None => {
                            let _ = write!(out, " — |");
                        }
                    }
                }
                let _ = writeln!(out);
            };

        write_row(
            "Overall AUC".into(),
            &|c| format_estimate(c.overall_auc.point, c.overall_auc.ci_low, c.overall_auc.ci_high),
            out,
        );
        for cat in &categories {
            write_row(
                format!("Marginal AUC `{cat}`"),
                &|c| match c.marginal_auc.get(cat) {
                    Some(b) => format_estimate(b.point, b.ci_low, b.ci_high),
                    None => "—".into(),
                },
                out,
            );
        }
        write_row(
            "ΔmAUC".into(),
            &|c| {
                format_estimate(
                    c.delta_marginal_auc.point,
                    c.delta_marginal_auc.ci_low,
                    c.delta_marginal_auc.ci_high,
                )
            },
            out,
        );
        write_row(
            "TPR gap".into(),
            &|c| format!("{:.4}", c.fairness.deltas.tpr),
            out,
        );
        write_row(
            "FPR gap".into(),
            &|c| format!("{:.4}", c.fairness.deltas.fpr),
            out,
        );
        write_row(
            "Brier gap".into(),
            &|c| format!("{:.4}", c.fairness.deltas.brier),
            out,
        );
    }

    /// CSV rendering: `attribute,method,metric,point,ci_low,ci_high`, full
    /// precision, one row per metric; interval fields empty for point-only
    /// metrics.
    pub fn render_delimited(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["attribute", "method", "metric", "point", "ci_low", "ci_high"])?;
        for attribute in &self.attributes {
            for &method in &self.methods {
                let Some(cell) = self.cell(method, attribute) else {
                    continue;
                };
                let mut row = |metric: String, point: f64, ci: Option<(f64, f64)>| {
                    let (lo, hi) = match ci {
                        Some((l, h)) => (l.to_string(), h.to_string()),
                        None => (String::new(), String::new()),
                    };
                    w.write_record([
                        attribute.as_str(),
                        method.name(),
                        metric.as_str(),
                        &point.to_string(),
                        &lo,
                        &hi,
                    ])
                };
                row(
                    "overall_auc".into(),
                    cell.overall_auc.point,
                    Some((cell.overall_auc.ci_low, cell.overall_auc.ci_high)),
                )?;
                for (cat, b) in &cell.marginal_auc {
                    row(
                        format!("marginal_auc:{cat}"),
                        b.point,
                        Some((b.ci_low, b.ci_high)),
                    )?;
                }
                row(
                    "delta_marginal_auc".into(),
                    cell.delta_marginal_auc.point,
                    Some((
                        cell.delta_marginal_auc.ci_low,
                        cell.delta_marginal_auc.ci_high,
                    )),
                )?;
                row("tpr_gap".into(), cell.fairness.deltas.tpr, None)?;
                row("fpr_gap".into(), cell.fairness.deltas.fpr, None)?;
                row("brier_gap".into(), cell.fairness.deltas.brier, None)?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("flushing in-memory CSV failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(format!("CSV was not UTF-8: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{FairnessDeltas, GroupMetrics};
    use crate::stats::BootstrapResult;

    fn boot(point: f64, spread: f64) -> BootstrapResult {
        BootstrapResult::from_replicates(
            point,
            vec![point - spread, point - spread / 2.0, point, point + spread / 2.0, point + spread],
            7,
            0,
        )
        .unwrap()
    }

    fn fairness(attribute: &str, auc: f64, delta: f64) -> FairnessReport {
        let group = GroupMetrics {
            n: 50,
            n_positive: 25,
            marginal_auc: auc,
            tpr: 0.8,
            fpr: 0.1,
            brier: 0.15,
        };
        FairnessReport {
            attribute: attribute.into(),
            threshold: 0.5,
            overall_auc: auc,
            per_group: BTreeMap::from([("A".to_string(), group.clone()), ("B".to_string(), group)]),
            deltas: FairnessDeltas {
                marginal_auc: delta,
                tpr: 0.0714,
                fpr: 0.02,
                brier: 0.01,
            },
        }
    }

    fn cell(method: Method, auc: f64, delta: f64) -> CellReport {
        CellReport {
            method,
            attribute: "group".into(),
            fairness: fairness("group", auc, delta),
            overall_auc: boot(auc, 0.01),
            marginal_auc: BTreeMap::from([
                ("A".to_string(), boot(auc + 0.01, 0.01)),
                ("B".to_string(), boot(auc - 0.01, 0.01)),
            ]),
            delta_marginal_auc: boot(delta, 0.001),
        }
    }

    fn sample_report() -> ExperimentReport {
        let t = crate::stats::paired_t_test(&[0.010, 0.011, 0.012], &[0.016, 0.018, 0.017])
            .unwrap();
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            generated_at: "2026-01-01T00:00:00Z".into(),
            methods: vec![Method::Erm, Method::Proposed],
            attributes: vec!["group".into()],
            cells: vec![
                cell(Method::Erm, 0.8288, 0.0116),
                cell(Method::Proposed, 0.8241, 0.0037),
            ],
            comparisons: vec![Comparison {
                attribute: "group".into(),
                baseline: Method::Erm,
                t_test: t,
            }],
            changes: vec![ChangeRow {
                attribute: "group".into(),
                baseline: Method::Erm,
                metric: "delta_marginal_auc".into(),
                baseline_value: 0.0116,
                proposed_value: 0.0037,
                absolute_change: -0.0079,
                relative_change_pct: Some(-68.103_448_275_862_06),
            }],
            provenance: Provenance {
                config_hash: "cafe".into(),
                master_seed: 7,
                derived_seeds: BTreeMap::new(),
                bootstrap: BootstrapInfo {
                    replicates: 5,
                    redraws: 0,
                    seed: 7,
                    index_hash: "00".into(),
                },
                train_logs: BTreeMap::new(),
                versions: BTreeMap::new(),
                assumptions: vec!["batch size 32".into()],
            },
            failures: vec![],
        }
    }

    #[test]
    fn estimate_formatting_matches_the_presentation_convention() {
        assert_eq!(format_estimate(0.0116, 0.0110, 0.0123), "0.0116 (0.0110-0.0123)");
        assert_eq!(format_estimate(0.5, 0.25, 0.75), "0.5000 (0.2500-0.7500)");
    }

    #[test]
    fn markdown_has_one_column_per_method_in_order() {
        let md = sample_report().render_markdown();
        let report = sample_report();
        let header = md
            .lines()
            .find(|l| l.starts_with("| Metric |"))
            .expect("metric table header");
        assert_eq!(header, "| Metric | erm | proposed |");
        let erm = report.cell(Method::Erm, "group").unwrap();
        let proposed = report.cell(Method::Proposed, "group").unwrap();
        let expected = format!(
            "| ΔmAUC | {} | {} |",
            format_estimate(
                erm.delta_marginal_auc.point,
                erm.delta_marginal_auc.ci_low,
                erm.delta_marginal_auc.ci_high
            ),
            format_estimate(
                proposed.delta_marginal_auc.point,
                proposed.delta_marginal_auc.ci_low,
                proposed.delta_marginal_auc.ci_high
            )
        );
        assert!(md.contains(&expected), "missing row {expected:?} in:\n{md}");
        assert!(md.contains("-68.10%"));
        assert!(md.contains("-0.0079"));
    }

    #[test]
    fn markdown_marks_missing_cells_without_dropping_columns() {
        let mut report = sample_report();
        report.cells.retain(|c| c.method != Method::Erm);
        report.failures.push(FailureNote {
            method: Some(Method::Erm),
            attribute: Some("group".into()),
            stage: "train".into(),
            message: "diverged".into(),
        });
        let md = report.render_markdown();
        assert!(md.contains("| Overall AUC | — |"));
        assert!(md.contains("## Failures"));
        assert!(md.contains("| erm | group | train | diverged |"));
    }

    #[test]
    fn delimited_emits_one_row_per_metric() {
        let report = sample_report();
        let csv_text = report.render_delimited().unwrap();
        let lines: Vec<&str> = csv_text.lines().collect();
        // Header + 2 methods × (overall + 2 categories + delta + 3 gaps).
        assert_eq!(lines.len(), 1 + 2 * 7);
        assert_eq!(lines[0], "attribute,method,metric,point,ci_low,ci_high");
        assert!(lines[1].starts_with("group,erm,overall_auc,0.8288,"));
        let gap_row = lines
            .iter()
            .find(|l| l.contains("erm,tpr_gap"))
            .expect("tpr gap row");
        assert!(gap_row.ends_with(",,"), "point-only rows leave the CI empty: {gap_row}");
    }

    #[test]
    fn markdown_values_reparse_to_the_json_values_at_four_decimals() {
        let report = sample_report();
        let md = report.render_markdown();
        // Pull the ΔmAUC row back out of the table and compare at 4 decimals.
        let row = md
            .lines()
            .find(|l| l.starts_with("| ΔmAUC |"))
            .expect("delta row");
        let cells: Vec<&str> = row.split('|').map(str::trim).collect();
        // cells[0] is empty, [1] the label, then one entry per method.
        for (i, &method) in report.methods.iter().enumerate() {
            let text = cells[2 + i];
            let (point_s, rest) = text.split_once(" (").expect("point (low-high)");
            let (low_s, high_s) = rest
                .strip_suffix(')')
                .and_then(|r| r.split_once('-'))
                .expect("low-high");
            let cell = report.cell(method, "group").unwrap();
            let reparsed: f64 = point_s.parse().unwrap();
            assert!((reparsed - cell.delta_marginal_auc.point).abs() < 5e-5);
            let low: f64 = low_s.parse().unwrap();
            let high: f64 = high_s.parse().unwrap();
            assert!((low - cell.delta_marginal_auc.ci_low).abs() < 5e-5);
            assert!((high - cell.delta_marginal_auc.ci_high).abs() < 5e-5);
        }
    }

    #[test]
    fn json_round_trips_through_serde() {
        let report = sample_report();
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.schema_version, REPORT_SCHEMA_VERSION);
        assert_eq!(back.methods, report.methods);
        assert_eq!(back.cells.len(), report.cells.len());
        // Replicate vectors are deliberately not serialized.
        assert!(back.cells[0].overall_auc.replicates.is_empty());
        assert_eq!(back.cells[0].overall_auc.point, report.cells[0].overall_auc.point);
    }
}
