//! One measured case: build a context, pre-encode it, compute the
//! full-recompute reference, then update and score each strategy.

use pie_core::diagnostics::{kl_per_step, DEFAULT_KL_FLOOR};
use pie_core::scenario::{self, synthetic_python, ByteTokenizer, Document, Scenario};
use pie_core::{
    edit_similarity, exact_match, first_non_comment_line, key_cosine_by_layer, DiagnosticsReport,
    KlDirection, KvCache, Result, Scalar, ScenarioConfig, Strategy, TokenSequence, ToyDecoder,
    UpdateTiming,
};

/// Where context text comes from.
#[derive(Clone, Debug)]
pub enum Corpus {
    /// Seeded synthetic Python, regenerated per trial seed.
    Synthetic,
    Text(Document),
}

impl Corpus {
    /// A clean document of at most `context_len` byte tokens plus the line
    /// that follows it.
    pub fn context(&self, context_len: usize, seed: u64) -> Result<(Document, String)> {
        match self {
            // Lines average ~13 bytes; overshoot so the window is always full.
            Corpus::Synthetic => synthetic_python(seed, context_len / 4 + 16).window(context_len),
            Corpus::Text(doc) => {
                let start = (seed as usize).wrapping_mul(7919) % doc.len().max(1);
                doc.rotated(start).window(context_len)
            }
        }
    }
}

/// The edit scenario for one trial.
#[derive(Clone, Debug)]
pub struct Case {
    pub scenario: Scenario,
    pub target_line: String,
}

impl Case {
    pub fn build(
        corpus: &Corpus,
        context_len: usize,
        scenario_cfg: &ScenarioConfig,
        seed: u64,
    ) -> Result<Self> {
        let (doc, target_line) = corpus.context(context_len, seed)?;
        let cfg = ScenarioConfig {
            rng_seed: scenario_cfg.rng_seed.wrapping_add(seed),
            ..scenario_cfg.clone()
        };
        let scenario = scenario::generate(&doc, &target_line, &cfg)?;
        Ok(Self {
            scenario,
            target_line,
        })
    }
}

/// Scoring options shared by every strategy in a run.
#[derive(Clone, Debug)]
pub struct ScoreOptions {
    pub n_generate: usize,
    pub comment_prefix: String,
    pub kl_direction: KlDirection,
}

/// The pre-edit cache and everything the full-recompute reference produced.
pub struct Prepared<T: Scalar> {
    pub pre_cache: KvCache<T>,
    pub reference_cache: KvCache<T>,
    pub reference_tokens: TokenSequence,
    pub reference_dists: Vec<Vec<T>>,
    pub reference_text: String,
}

impl<T: Scalar> Prepared<T> {
    pub fn new(model: &ToyDecoder<T>, case: &Case, opts: &ScoreOptions) -> Result<Self> {
        let sc = &case.scenario;
        let (pre_cache, _) = model.encode(&sc.original)?;
        let (reference_cache, _) =
            Strategy::Full.apply(model, pre_cache.clone(), &sc.original, &sc.script)?;
        let mut work = reference_cache.clone();
        let last = ToyDecoder::decode_entry(&mut work, &sc.edited)?;
        let g = model.generate_greedy(&mut work, last, opts.n_generate, true)?;
        Ok(Self {
            pre_cache,
            reference_cache,
            reference_text: ByteTokenizer.decode(&g.tokens),
            reference_dists: g.distributions.expect("recorded"),
            reference_tokens: g.tokens,
        })
    }

    /// The reference's predicted line.
    pub fn reference_line(&self, opts: &ScoreOptions) -> &str {
        first_non_comment_line(&self.reference_text, &opts.comment_prefix)
    }
}

/// A strategy's updated cache, scored against the reference.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub strategy: Strategy,
    pub report: DiagnosticsReport,
    pub generated_text: String,
    pub prediction: String,
    pub positionally_consistent: bool,
}

/// Positions whose keys are compared: everything after the first op's new
/// tokens, in post-edit coordinates. Empty for a no-op script.
pub fn suffix_span(sc: &Scenario) -> std::ops::Range<usize> {
    match sc.script.ops().first() {
        Some(op) => (op.start + op.tokens.len()).min(sc.edited.len())..sc.edited.len(),
        None => sc.edited.len()..sc.edited.len(),
    }
}

/// Times one update. The pre-edit cache is cloned before the clock starts;
/// only the cache update itself is measured.
pub fn timed_update<T: Scalar>(
    model: &ToyDecoder<T>,
    prepared: &Prepared<T>,
    case: &Case,
    strategy: Strategy,
) -> Result<(KvCache<T>, UpdateTiming)> {
    let pre = prepared.pre_cache.clone();
    strategy.apply(model, pre, &case.scenario.original, &case.scenario.script)
}

/// Scores an updated cache: key cosine over the suffix, teacher-forced KL
/// along the reference continuation, and EM/ES of the free-running
/// prediction against the reference's.
pub fn score<T: Scalar>(
    model: &ToyDecoder<T>,
    prepared: &Prepared<T>,
    case: &Case,
    strategy: Strategy,
    cache: KvCache<T>,
    timing: UpdateTiming,
    opts: &ScoreOptions,
) -> Result<Outcome> {
    let sc = &case.scenario;
    let span = suffix_span(sc);
    // Reuse keeps the pre-edit layout, which no longer lines up with the
    // reference positions; it gets no key cosine.
    let per_layer_cosine = if cache.len() == prepared.reference_cache.len() && !span.is_empty() {
        key_cosine_by_layer(&cache, &prepared.reference_cache, span)?
    } else {
        Vec::new()
    };
    let positionally_consistent = cache.is_positionally_consistent();
    let context = strategy.context_sequence(&sc.original, &sc.edited);

    let mut forced = cache.clone();
    let last = ToyDecoder::decode_entry(&mut forced, context)?;
    let dists = model.forced_distributions(&mut forced, last, &prepared.reference_tokens)?;
    let per_step_kl = kl_per_step(
        &prepared.reference_dists,
        &dists,
        opts.kl_direction,
        DEFAULT_KL_FLOOR,
    )?;

    let mut free = cache;
    let last = ToyDecoder::decode_entry(&mut free, context)?;
    let g = model.generate_greedy(&mut free, last, opts.n_generate, false)?;
    let generated_text = ByteTokenizer.decode(&g.tokens);
    let prediction = first_non_comment_line(&generated_text, &opts.comment_prefix).to_string();
    let target = prepared.reference_line(opts);
    let em = exact_match(&prediction, target);
    let report = DiagnosticsReport {
        per_layer_cosine,
        per_step_kl,
        em: vec![em],
        em_pct: 100.0 * f64::from(em),
        es: edit_similarity(&prediction, target),
        timing,
    };
    report.check_invariants()?;
    Ok(Outcome {
        strategy,
        report,
        generated_text,
        prediction,
        positionally_consistent,
    })
}

/// Update plus scoring in one call.
pub fn run_strategy<T: Scalar>(
    model: &ToyDecoder<T>,
    prepared: &Prepared<T>,
    case: &Case,
    strategy: Strategy,
    opts: &ScoreOptions,
) -> Result<Outcome> {
    let (cache, timing) = timed_update(model, prepared, case, strategy)?;
    score(model, prepared, case, strategy, cache, timing, opts)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Elementwise mean of equally long rows; empty rows are skipped.
pub fn mean_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let rows: Vec<&Vec<f64>> = rows.iter().filter(|r| !r.is_empty()).collect();
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect()
}
