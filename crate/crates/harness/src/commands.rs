//! The `bench`, `diagnose` and `simulate` commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pie_core::diagnostics::{kl_per_step, DEFAULT_KL_FLOOR};
use pie_core::model::weights::load_weights;
use pie_core::scenario::{ByteTokenizer, Document};
use pie_core::{
    apply_edit_tokens, edit_similarity, exact_match, first_non_comment_line, Decoder32, EditScript,
    KvCache32, Strategy, UpdateTiming,
};

use crate::config::BenchConfig;
use crate::error::{Classify, CliError, CliResult, ExitKind};
use crate::pipeline::{
    mean, run_strategy, timed_update, Case, Corpus, Outcome, Prepared, ScoreOptions,
};
use crate::report::{
    write_report, BenchReport, BenchRow, DiagnoseEntry, DiagnoseReport, SimulateReport,
    SCHEMA_VERSION,
};

/// Output directory used when neither `--out` nor `--out-dir` is given.
pub const DEFAULT_OUT_DIR: &str = "pie-out";

/// Resolved report path: explicit `out`, else `<out_dir>/<command>.<ext>`.
pub fn report_path(cfg: &BenchConfig, out_dir: Option<&Path>, command: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        out_dir
            .unwrap_or(Path::new(DEFAULT_OUT_DIR))
            .join(format!("{command}.{}", cfg.format.extension()))
    })
}

pub fn build_model(cfg: &BenchConfig) -> CliResult<Decoder32> {
    let model = match &cfg.weights {
        Some(path) => load_weights(path)
            .map_err(|e| CliError::from(e).context(format!("loading {}", path.display())))?,
        None => Decoder32::init(cfg.model.clone())?,
    };
    if model.config().vocab_size < ByteTokenizer::VOCAB_SIZE {
        return Err(CliError::validation(format!(
            "model vocabulary {} cannot hold byte tokens",
            model.config().vocab_size
        )));
    }
    Ok(model)
}

fn corpus(cfg: &BenchConfig) -> CliResult<Corpus> {
    match &cfg.corpus {
        None => Ok(Corpus::Synthetic),
        Some(path) => Document::load(path)
            .classify(
                ExitKind::Validation,
                format!("loading corpus {}", path.display()),
            )
            .map(Corpus::Text),
    }
}

fn score_options(cfg: &BenchConfig) -> ScoreOptions {
    ScoreOptions {
        n_generate: cfg.n_generate,
        comment_prefix: cfg.comment_prefix.clone(),
        kl_direction: cfg.kl_direction,
    }
}

/// Runs every trial of one context length for all strategies. Each
/// strategy gets one untimed warm-up update before its first timed trial.
/// Returns outcomes per strategy in trial order.
pub fn run_context_len(
    model: &Decoder32,
    cfg: &BenchConfig,
    corpus: &Corpus,
    context_len: usize,
) -> CliResult<BTreeMap<usize, Vec<Outcome>>> {
    let opts = score_options(cfg);
    let mut out: BTreeMap<usize, Vec<Outcome>> = BTreeMap::new();
    for trial in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let case = Case::build(corpus, context_len, &cfg.scenario, seed)?;
        if let Some(dir) = &cfg.scenario_dir {
            case.scenario
                .save(dir, &format!("n{context_len}_t{trial}"))
                .classify(
                    ExitKind::Runtime,
                    format!("saving scenario to {}", dir.display()),
                )?;
        }
        let prepared = Prepared::new(model, &case, &opts)?;
        for (i, &strategy) in cfg.strategies.iter().enumerate() {
            if trial == 0 {
                timed_update(model, &prepared, &case, strategy)?;
            }
            out.entry(i)
                .or_default()
                .push(run_strategy(model, &prepared, &case, strategy, &opts)?);
        }
    }
    Ok(out)
}

/// Aggregate timing and quality per (strategy, context length). The report
/// is rewritten after every context length with `complete: false`.
pub fn cmd_bench(cfg: &BenchConfig, path: &Path) -> CliResult<BenchReport> {
    cfg.validate()?;
    let model = build_model(cfg)?;
    let corpus = corpus(cfg)?;
    let mut report = BenchReport {
        schema_version: SCHEMA_VERSION,
        command: "bench".into(),
        complete: false,
        config: cfg.clone(),
        rows: Vec::new(),
    };
    let mut rows = Vec::new();
    for &n in &cfg.context_lens {
        let outcomes = run_context_len(&model, cfg, &corpus, n)?;
        for (i, o) in outcomes {
            rows.push((i, n, BenchRow::aggregate(cfg.strategies[i], n, &o)));
        }
        report.rows = ordered(&rows);
        write_report(path, cfg.format, &report, BenchReport::to_csv)?;
    }
    report.complete = true;
    write_report(path, cfg.format, &report, BenchReport::to_csv)?;
    Ok(report)
}

/// Rows sorted by strategy (config order), then context length (config order).
fn ordered<R: Clone>(rows: &[(usize, usize, R)]) -> Vec<R> {
    let mut v: Vec<&(usize, usize, R)> = rows.iter().collect();
    v.sort_by_key(|(i, _, _)| *i);
    v.into_iter().map(|(_, _, r)| r.clone()).collect()
}

/// Per-layer cosine and per-step KL arrays for each strategy.
pub fn cmd_diagnose(cfg: &BenchConfig, path: &Path) -> CliResult<DiagnoseReport> {
    cfg.validate()?;
    let model = build_model(cfg)?;
    let corpus = corpus(cfg)?;
    let mut report = DiagnoseReport {
        schema_version: SCHEMA_VERSION,
        command: "diagnose".into(),
        complete: false,
        config: cfg.clone(),
        entries: Vec::new(),
    };
    let mut entries = Vec::new();
    for &n in &cfg.context_lens {
        for (i, o) in run_context_len(&model, cfg, &corpus, n)? {
            entries.push((i, n, DiagnoseEntry::aggregate(cfg.strategies[i], n, &o)));
        }
        report.entries = ordered(&entries);
        write_report(path, cfg.format, &report, DiagnoseReport::to_csv)?;
    }
    report.complete = true;
    write_report(path, cfg.format, &report, DiagnoseReport::to_csv)?;
    Ok(report)
}

/// One strategy's run in `simulate`.
struct Replay {
    text: String,
    line: String,
    dists: Vec<Vec<f32>>,
    timing: UpdateTiming,
    cache: KvCache32,
}

/// Replays a user edit script over a corpus file with `cfg.strategies[0]`,
/// and compares its prediction with full recomputation's.
pub fn cmd_simulate(
    script_path: &Path,
    corpus_path: &Path,
    cfg: &BenchConfig,
    path: Option<&Path>,
) -> CliResult<SimulateReport> {
    cfg.validate()?;
    let strategy = cfg.strategies[0];
    let model = build_model(cfg)?;
    let text = std::fs::read_to_string(corpus_path).classify(
        ExitKind::Validation,
        format!("reading corpus {}", corpus_path.display()),
    )?;
    let original = ByteTokenizer.encode(&text);
    if original.is_empty() {
        return Err(CliError::validation(format!(
            "corpus {} is empty",
            corpus_path.display()
        )));
    }
    let in_script =
        |e: pie_core::Error| CliError::from(e).context(format!("in {}", script_path.display()));
    let script_text = std::fs::read_to_string(script_path).classify(
        ExitKind::Validation,
        format!("reading edit script {}", script_path.display()),
    )?;
    let script = EditScript::from_jsonl(&script_text).map_err(in_script)?;
    script.validate(original.len()).map_err(in_script)?;
    let edited = apply_edit_tokens(&original, &script)?;
    if edited.is_empty() {
        return Err(CliError::validation("the script deletes the whole context"));
    }

    let opts = score_options(cfg);
    let (pre_cache, _) = model.encode(&original)?;
    let run = |s: Strategy| -> CliResult<Replay> {
        let (cache, timing) = s.apply(&model, pre_cache.clone(), &original, &script)?;
        let mut work = cache.clone();
        let last = Decoder32::decode_entry(&mut work, s.context_sequence(&original, &edited))?;
        let g = model.generate_greedy(&mut work, last, opts.n_generate, true)?;
        let text = ByteTokenizer.decode(&g.tokens);
        Ok(Replay {
            line: first_non_comment_line(&text, &opts.comment_prefix).to_string(),
            text,
            dists: g.distributions.expect("recorded"),
            timing,
            cache,
        })
    };
    let ours = run(strategy)?;
    let reference = run(Strategy::Full)?;
    // Free-running KL: both sides follow their own greedy path.
    let kl = kl_per_step(
        &reference.dists,
        &ours.dists,
        opts.kl_direction,
        DEFAULT_KL_FLOOR,
    )?;
    let span = script
        .ops()
        .first()
        .map(|op| (op.start + op.tokens.len()).min(edited.len())..edited.len())
        .unwrap_or(edited.len()..edited.len());
    let per_layer_cosine = if ours.cache.len() == reference.cache.len() && !span.is_empty() {
        pie_core::key_cosine_by_layer(&ours.cache, &reference.cache, span)?
    } else {
        Vec::new()
    };
    let report = SimulateReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate".into(),
        strategy,
        context_tokens: original.len(),
        edited_tokens: edited.len(),
        ops: script.len(),
        diverges: ours.line != reference.line,
        em: exact_match(&ours.line, &reference.line),
        es: edit_similarity(&ours.line, &reference.line),
        kl_mean: mean(&kl),
        per_layer_cosine,
        prediction: ours.line,
        reference_prediction: reference.line,
        generated_text: ours.text,
        timing: ours.timing,
    };
    if let Some(p) = path {
        write_report(p, cfg.format, &report, SimulateReport::to_csv)?;
    }
    Ok(report)
}
