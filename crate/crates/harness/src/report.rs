//! Report schemas and writers. JSON keys and CSV column order are fixed;
//! bump [`SCHEMA_VERSION`] when either changes.

use std::path::Path;

use pie_core::{DiagnosticsReport, Strategy, UpdateTiming};
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, ReportFormat};
use crate::error::{Classify, CliResult, ExitKind};
use crate::pipeline::{mean, mean_columns, median, std_dev, Outcome};

pub const SCHEMA_VERSION: u32 = 1;

/// One (strategy, context length) cell aggregated over its trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub context_len: usize,
    pub trials: usize,
    pub update_ms_mean: f64,
    pub update_ms_std: f64,
    pub update_ms_median: f64,
    pub recomputed_tokens_mean: f64,
    pub rotated_keys_mean: f64,
    /// Mean over steps, then over trials.
    pub kl_mean: f64,
    pub kl_std: f64,
    /// Mean over layers and trials; `None` when no cosine applies (reuse).
    pub cosine_mean: Option<f64>,
    pub cosine_per_layer: Vec<f64>,
    pub em_pct: f64,
    pub es_mean: f64,
    pub es_std: f64,
    /// Fraction of trials whose updated cache was positionally consistent.
    pub consistent_frac: f64,
}

pub const BENCH_CSV_COLUMNS: [&str; 16] = [
    "strategy",
    "context_len",
    "trials",
    "update_ms_mean",
    "update_ms_std",
    "update_ms_median",
    "recomputed_tokens_mean",
    "rotated_keys_mean",
    "kl_mean",
    "kl_std",
    "cosine_mean",
    "cosine_per_layer",
    "em_pct",
    "es_mean",
    "es_std",
    "consistent_frac",
];

impl BenchRow {
    pub fn aggregate(strategy: Strategy, context_len: usize, outcomes: &[Outcome]) -> Self {
        let pick = |f: &dyn Fn(&Outcome) -> f64| outcomes.iter().map(f).collect::<Vec<f64>>();
        let ms = pick(&|o| o.report.timing.update_ms);
        let kl = pick(&|o| mean(&o.report.per_step_kl));
        let es = pick(&|o| o.report.es);
        let cosine_per_layer = mean_columns(
            &outcomes
                .iter()
                .map(|o| o.report.per_layer_cosine.clone())
                .collect::<Vec<_>>(),
        );
        Self {
            strategy,
            context_len,
            trials: outcomes.len(),
            update_ms_mean: mean(&ms),
            update_ms_std: std_dev(&ms),
            update_ms_median: median(&ms),
            recomputed_tokens_mean: mean(&pick(&|o| o.report.timing.recomputed_tokens as f64)),
            rotated_keys_mean: mean(&pick(&|o| o.report.timing.rotated_keys as f64)),
            kl_mean: mean(&kl),
            kl_std: std_dev(&kl),
            cosine_mean: (!cosine_per_layer.is_empty()).then(|| mean(&cosine_per_layer)),
            cosine_per_layer,
            em_pct: mean(&pick(&|o| o.report.em_pct)),
            es_mean: mean(&es),
            es_std: std_dev(&es),
            consistent_frac: mean(&pick(&|o| f64::from(u8::from(o.positionally_consistent)))),
        }
    }

    fn csv_line(&self) -> String {
        let layers: Vec<String> = self.cosine_per_layer.iter().map(f64::to_string).collect();
        [
            self.strategy.to_string(),
            self.context_len.to_string(),
            self.trials.to_string(),
            self.update_ms_mean.to_string(),
            self.update_ms_std.to_string(),
            self.update_ms_median.to_string(),
            self.recomputed_tokens_mean.to_string(),
            self.rotated_keys_mean.to_string(),
            self.kl_mean.to_string(),
            self.kl_std.to_string(),
            self.cosine_mean.map(|c| c.to_string()).unwrap_or_default(),
            layers.join(";"),
            self.em_pct.to_string(),
            self.es_mean.to_string(),
            self.es_std.to_string(),
            self.consistent_frac.to_string(),
        ]
        .join(",")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub command: String,
    /// False while cells are still running; a partial report on disk keeps
    /// every finished cell.
    pub complete: bool,
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = BENCH_CSV_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Plot-ready arrays for one (strategy, context length).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseEntry {
    pub strategy: Strategy,
    pub context_len: usize,
    /// Mean over trials, one entry per layer.
    pub per_layer_cosine: Vec<f64>,
    /// Mean over trials, one entry per generated step.
    pub per_step_kl: Vec<f64>,
    pub trials: Vec<DiagnosticsReport>,
}

impl DiagnoseEntry {
    pub fn aggregate(strategy: Strategy, context_len: usize, outcomes: &[Outcome]) -> Self {
        let col = |f: &dyn Fn(&Outcome) -> Vec<f64>| {
            mean_columns(&outcomes.iter().map(f).collect::<Vec<_>>())
        };
        Self {
            strategy,
            context_len,
            per_layer_cosine: col(&|o| o.report.per_layer_cosine.clone()),
            per_step_kl: col(&|o| o.report.per_step_kl.clone()),
            trials: outcomes.iter().map(|o| o.report.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub schema_version: u32,
    pub command: String,
    pub complete: bool,
    pub config: BenchConfig,
    pub entries: Vec<DiagnoseEntry>,
}

pub const DIAGNOSE_CSV_COLUMNS: [&str; 5] = ["strategy", "context_len", "field", "index", "value"];

impl DiagnoseReport {
    /// Long format: one row per array element.
    pub fn to_csv(&self) -> String {
        let mut out = DIAGNOSE_CSV_COLUMNS.join(",");
        out.push('\n');
        for e in &self.entries {
            for (field, values) in [
                ("per_layer_cosine", &e.per_layer_cosine),
                ("per_step_kl", &e.per_step_kl),
            ] {
                for (i, v) in values.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{field},{i},{v}\n",
                        e.strategy, e.context_len
                    ));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub command: String,
    pub strategy: Strategy,
    pub context_tokens: usize,
    pub edited_tokens: usize,
    pub ops: usize,
    pub prediction: String,
    /// What full recomputation predicts for the same inputs.
    pub reference_prediction: String,
    pub diverges: bool,
    pub em: u8,
    pub es: f64,
    pub kl_mean: f64,
    pub per_layer_cosine: Vec<f64>,
    pub generated_text: String,
    pub timing: UpdateTiming,
}

pub const SIMULATE_CSV_COLUMNS: [&str; 12] = [
    "strategy",
    "context_tokens",
    "edited_tokens",
    "ops",
    "prediction",
    "reference_prediction",
    "diverges",
    "em",
    "es",
    "kl_mean",
    "update_ms",
    "rotated_keys",
];

/// Quotes a CSV field when it needs it.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SimulateReport {
    pub fn to_csv(&self) -> String {
        let row = [
            self.strategy.to_string(),
            self.context_tokens.to_string(),
            self.edited_tokens.to_string(),
            self.ops.to_string(),
            csv_field(&self.prediction),
            csv_field(&self.reference_prediction),
            self.diverges.to_string(),
            self.em.to_string(),
            self.es.to_string(),
            self.kl_mean.to_string(),
            self.timing.update_ms.to_string(),
            self.timing.rotated_keys.to_string(),
        ];
        format!("{}\n{}\n", SIMULATE_CSV_COLUMNS.join(","), row.join(","))
    }
}

/// Writes through a sibling temp file and a rename, so an interrupted run
/// never leaves a half-written report.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .classify(ExitKind::Runtime, format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents)
        .classify(ExitKind::Runtime, format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).classify(
        ExitKind::Runtime,
        format!("renaming onto {}", path.display()),
    )
}

/// Serialises `report` as JSON or via `csv`.
pub fn write_report<R: Serialize>(
    path: &Path,
    format: ReportFormat,
    report: &R,
    csv: impl FnOnce(&R) -> String,
) -> CliResult<()> {
    let text = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .classify(ExitKind::Runtime, "serialising report")?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => csv(report),
    };
    write_atomic(path, &text)
}
