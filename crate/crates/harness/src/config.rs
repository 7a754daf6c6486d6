//! Benchmark configuration, loadable from JSON with every field optional.

use std::path::{Path, PathBuf};

use pie_core::scenario::tokenizer::ByteTokenizer;
use pie_core::{KlDirection, ModelConfig, ScenarioConfig, Strategy};
use serde::{Deserialize, Serialize};

use crate::error::{Classify, CliError, CliResult, ExitKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!(
                "unknown report format {s:?} (expected json or csv)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub model: ModelConfig,
    /// Load weights from this blob instead of initialising from `model`;
    /// the blob's own config then wins.
    pub weights: Option<PathBuf>,
    pub strategies: Vec<Strategy>,
    /// Target context lengths in tokens.
    pub context_lens: Vec<usize>,
    pub scenario: ScenarioConfig,
    pub trials: usize,
    pub n_generate: usize,
    /// Report path; when absent the command picks `<out dir>/<command>.<ext>`.
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
    /// Base seed; trial `t` uses `seed + t` for its corpus and scenario.
    pub seed: u64,
    /// Lines starting with this are skipped when picking the predicted line.
    pub comment_prefix: String,
    /// Text file or directory; a seeded synthetic Python corpus when absent.
    pub corpus: Option<PathBuf>,
    pub kl_direction: KlDirection,
    /// When set, every trial's scenario is written here as
    /// `n<context_len>_t<trial>.jsonl` plus `.manifest.json`.
    pub scenario_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            weights: None,
            strategies: Strategy::ALL.to_vec(),
            context_lens: vec![512],
            scenario: ScenarioConfig::default(),
            trials: 3,
            n_generate: 64,
            out: None,
            format: ReportFormat::Json,
            seed: 0,
            comment_prefix: "#".into(),
            corpus: None,
            kl_direction: KlDirection::default(),
            scenario_dir: None,
        }
    }
}

impl BenchConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).classify(
            ExitKind::Validation,
            format!("reading config {}", path.display()),
        )?;
        serde_json::from_str(&text).classify(
            ExitKind::Validation,
            format!("parsing config {}", path.display()),
        )
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::validation(format!("config: {msg}")));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.context_lens.is_empty() {
            return bad("context_lens must not be empty".into());
        }
        if let Some(&n) = self.context_lens.iter().find(|&&n| n < 16) {
            return bad(format!("context length {n} is too short (minimum 16)"));
        }
        if self.strategies.is_empty() {
            return bad("strategies must not be empty".into());
        }
        if self.n_generate == 0 {
            return bad("n_generate must be at least 1".into());
        }
        if self.weights.is_none() {
            self.model.validate()?;
            if self.model.vocab_size < ByteTokenizer::VOCAB_SIZE {
                return bad(format!(
                    "model.vocab_size {} is below the byte tokenizer's {}",
                    self.model.vocab_size,
                    ByteTokenizer::VOCAB_SIZE
                ));
            }
        }
        self.scenario.validate()?;
        Ok(())
    }
}
