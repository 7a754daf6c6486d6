//! Acceptance suite: one numbered check per criterion, each printing a
//! PASS/FAIL line. Runs without the libtest harness so the checks execute
//! sequentially on one thread, which keeps the latency check clean.

use std::path::PathBuf;
use std::time::Instant;

use pie_core::diagnostics::levenshtein;
use pie_core::scenario::{self, synthetic_python, Scenario};
use pie_core::{
    apply_edit_tokens, edit_similarity, kl_divergence, update_conflict_fast, update_full_recompute,
    update_pie, Decoder32, EditOp, EditScript, KvCache32, ModelConfig, RotaryTable64,
    ScenarioConfig, ScenarioKind, Strategy, TokenId, TokenSequence,
};
use pie_harness::commands::cmd_diagnose;
use pie_harness::pipeline::{
    mean, median, run_strategy, timed_update, Case, Corpus, Prepared, ScoreOptions,
};
use pie_harness::BenchConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

fn model(seed: u64) -> Decoder32 {
    Decoder32::init(ModelConfig::default().with_seed(seed)).expect("default config is valid")
}

fn random_tokens(rng: &mut ChaCha8Rng, n: usize) -> Vec<TokenId> {
    (0..n).map(|_| rng.random_range(0..256)).collect()
}

/// A random valid script of 1..=`max_ops` ops over `n` tokens whose edited
/// sequence is non-empty.
fn random_script(rng: &mut ChaCha8Rng, n: usize, max_ops: usize) -> EditScript {
    loop {
        let k = rng.random_range(1..=max_ops);
        let mut cuts: Vec<usize> = (0..2 * k).map(|_| rng.random_range(0..=n)).collect();
        cuts.sort_unstable();
        let ops = cuts
            .chunks(2)
            .map(|c| {
                let min_new = usize::from(c[0] == c[1]);
                let m = rng.random_range(min_new..=24);
                EditOp::new(c[0], c[1], random_tokens(rng, m))
            })
            .collect();
        let script = EditScript::new(ops).expect("sorted, disjoint ops");
        if script.total_delta() + n as i64 > 0 {
            return script;
        }
    }
}

/// A random script whose ops all replace spans with equally many tokens.
fn same_length_script(rng: &mut ChaCha8Rng, n: usize) -> EditScript {
    let k = rng.random_range(1..=3);
    let mut cuts: Vec<usize> = (0..2 * k).map(|_| rng.random_range(0..=n)).collect();
    cuts.sort_unstable();
    let ops = cuts
        .chunks(2)
        .map(|c| EditOp::new(c[0], c[1], random_tokens(rng, c[1] - c[0])))
        .collect();
    EditScript::new(ops).expect("sorted, disjoint ops")
}

struct OracleCase {
    model: Decoder32,
    original: TokenSequence,
    script: EditScript,
    edited: TokenSequence,
    pre_cache: KvCache32,
}

/// The 200 cases shared by criteria 2 and 3.
fn oracle_cases() -> Vec<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..200)
        .map(|i| {
            let n = rng.random_range(16..=512);
            let original = TokenSequence::new(random_tokens(&mut rng, n));
            let script = random_script(&mut rng, n, 3);
            let edited = apply_edit_tokens(&original, &script).expect("valid script");
            let model = model(i);
            let (pre_cache, _) = model.encode(&original).expect("encode");
            OracleCase {
                model,
                original,
                script,
                edited,
                pre_cache,
            }
        })
        .collect()
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let table = RotaryTable64::new(64, 10_000.0, 64).map_err(err)?;
    let (mut worst_comp, mut worst_norm) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let v: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = rng.random_range(-4096..=4096);
        let b = rng.random_range(-4096..=4096);
        let once = table.rotate(&v, a + b).map_err(err)?;
        let twice = table
            .rotate(&table.rotate(&v, a).map_err(err)?, b)
            .map_err(err)?;
        let comp = once
            .iter()
            .zip(&twice)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let norm = |x: &[f64]| x.iter().map(|e| e * e).sum::<f64>().sqrt();
        worst_comp = worst_comp.max(comp);
        worst_norm = worst_norm.max((norm(&once) - norm(&v)).abs());
    }
    ensure(worst_comp < 1e-5, || {
        format!("composition error {worst_comp:e}")
    })?;
    ensure(worst_norm < 1e-6, || format!("norm drift {worst_norm:e}"))?;
    Ok(format!(
        "max composition err {worst_comp:.1e}, max norm drift {worst_norm:.1e}"
    ))
}

fn criterion_2(cases: &[OracleCase]) -> Check {
    let mut worst = 0.0f32;
    for (i, c) in cases.iter().enumerate() {
        let (updated, _) =
            update_full_recompute(&c.model, c.pre_cache.clone(), &c.original, &c.script)
                .map_err(err)?;
        let (fresh, fresh_logits) = c.model.encode(&c.edited).map_err(err)?;
        let mut a = updated;
        let last = Decoder32::decode_entry(&mut a, &c.edited).map_err(err)?;
        let mut b = fresh;
        Decoder32::decode_entry(&mut b, &c.edited).map_err(err)?;
        let la = c.model.decode_step(&mut a.clone(), last).map_err(err)?;
        worst = worst.max(max_abs_diff(&la, &fresh_logits));
        ensure(worst <= 1e-4, || {
            format!("case {i}: logits differ by {worst:e}")
        })?;
        let ga = c
            .model
            .generate_greedy(&mut a, last, 16, false)
            .map_err(err)?;
        let gb = c
            .model
            .generate_greedy(&mut b, last, 16, false)
            .map_err(err)?;
        ensure(ga.tokens == gb.tokens, || {
            format!("case {i}: continuations differ")
        })?;
    }
    Ok(format!(
        "{} cases, max logit diff {worst:.1e}, 16-token continuations equal",
        cases.len()
    ))
}

fn criterion_3(cases: &[OracleCase]) -> Check {
    let mut worst = 0.0f32;
    for (i, c) in cases.iter().enumerate() {
        let (full, _) =
            update_full_recompute(&c.model, c.pre_cache.clone(), &c.original, &c.script)
                .map_err(err)?;
        let (pie, _) =
            update_pie(&c.model, c.pre_cache.clone(), &c.original, &c.script).map_err(err)?;
        ensure(pie.len() == full.len(), || {
            format!("case {i}: lengths differ")
        })?;
        worst = worst.max(max_abs_diff(pie.layer_keys(0), full.layer_keys(0)));
        ensure(worst <= 1e-6, || {
            format!("case {i}: layer-0 keys differ by {worst:e}")
        })?;
    }
    Ok(format!(
        "{} cases, max layer-0 key diff {worst:.1e}",
        cases.len()
    ))
}

fn artifact_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn criterion_4() -> Check {
    let cfg = BenchConfig {
        strategies: vec![Strategy::Full, Strategy::ConflictFast, Strategy::Pie],
        context_lens: vec![512],
        trials: 20,
        scenario: ScenarioConfig {
            kind: ScenarioKind::Insertion,
            ..Default::default()
        },
        seed: 4,
        ..Default::default()
    };
    let path = artifact_dir().join("layer_cosine.json");
    let report = cmd_diagnose(&cfg, &path).map_err(err)?;
    let get = |s: Strategy| {
        report
            .entries
            .iter()
            .find(|e| e.strategy == s)
            .map(|e| e.per_layer_cosine.clone())
            .ok_or_else(|| format!("no {s} entry"))
    };
    let (pie, cfe) = (get(Strategy::Pie)?, get(Strategy::ConflictFast)?);
    ensure(pie.len() == 4 && cfe.len() == 4, || {
        "expected 4 layers".into()
    })?;
    for (l, (p, c)) in pie.iter().zip(&cfe).enumerate() {
        ensure(p > c, || format!("layer {l}: PIE {p} <= ConflictFast {c}"))?;
    }
    ensure(pie[0] >= 0.99, || format!("PIE layer-0 cosine {}", pie[0]))?;
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).map_err(err)?).map_err(err)?;
    ensure(
        json["entries"].as_array().is_some_and(|a| a.len() == 3),
        || "report JSON lacks entries".into(),
    )?;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok(format!(
        "PIE [{}] > CFE [{}]; JSON at {}",
        fmt(&pie),
        fmt(&cfe),
        path.display()
    ))
}

fn criterion_5() -> Check {
    let model = model(5);
    let opts = ScoreOptions {
        n_generate: 64,
        comment_prefix: "#".into(),
        kl_direction: Default::default(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut wins, mut ratios, mut losses) = (0, Vec::new(), Vec::new());
    for i in 0..100u64 {
        // Insertions at the very end retain no suffix, so every strategy
        // coincides; sites are drawn from the part of the context that
        // leaves one.
        let scenario = ScenarioConfig {
            kind: ScenarioKind::Insertion,
            position_frac: Some(rng.random_range(0.05..0.9)),
            ..Default::default()
        };
        let case = Case::build(&Corpus::Synthetic, 320, &scenario, 500 + i).map_err(err)?;
        let sc = &case.scenario;
        ensure(sc.edited.len() >= 256, || {
            format!("case {i}: context below 256 tokens")
        })?;
        ensure(sc.script.total_delta().abs() >= 8, || {
            format!("case {i}: |delta| < 8")
        })?;
        let prepared = Prepared::new(&model, &case, &opts).map_err(err)?;
        let kl = |s| -> Result<f64, String> {
            let o = run_strategy(&model, &prepared, &case, s, &opts).map_err(err)?;
            ensure(o.report.per_step_kl.len() == 64, || {
                "expected 64 KL steps".into()
            })?;
            Ok(mean(&o.report.per_step_kl))
        };
        let (pie, cfe) = (kl(Strategy::Pie)?, kl(Strategy::ConflictFast)?);
        if pie < cfe {
            wins += 1;
        } else {
            let suffix =
                sc.edited.len() - sc.script.ops()[0].start - sc.script.ops()[0].tokens.len();
            losses.push(format!("#{i} suffix {suffix} PIE {pie:.1e} CFE {cfe:.1e}"));
        }
        ratios.push(pie / cfe.max(1e-30));
    }
    ensure(wins >= 95, || {
        format!("PIE below ConflictFast on only {wins}/100 cases")
    })?;
    Ok(format!(
        "PIE KL < ConflictFast KL on {wins}/100 cases (median KL ratio {:.3}); others: [{}]",
        median(&ratios),
        losses.join(", ")
    ))
}

fn criterion_6() -> Check {
    let model = model(6);
    let opts = ScoreOptions {
        n_generate: 1,
        comment_prefix: "#".into(),
        kl_direction: Default::default(),
    };
    let scenario = ScenarioConfig {
        kind: ScenarioKind::Insertion,
        lines_per_edit: 5,
        position_frac: Some(0.1),
        ..Default::default()
    };
    let case = Case::build(&Corpus::Synthetic, 4096, &scenario, 6).map_err(err)?;
    let n = case.scenario.edited.len();
    let first = case.scenario.script.first_change().unwrap_or(0);
    ensure(n >= 4000, || format!("context only {n} tokens"))?;
    let prepared = Prepared::new(&model, &case, &opts).map_err(err)?;
    let times = |s| -> Result<f64, String> {
        timed_update(&model, &prepared, &case, s).map_err(err)?;
        let ms: Vec<f64> = (0..20)
            .map(|_| timed_update(&model, &prepared, &case, s).map(|(_, t)| t.update_ms))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        Ok(median(&ms))
    };
    let (full, pie) = (times(Strategy::Full)?, times(Strategy::Pie)?);
    let ratio = pie / full;
    ensure(ratio <= 0.15, || {
        format!("ratio {ratio:.3} (PIE {pie:.2} ms, full {full:.2} ms)")
    })?;
    Ok(format!(
        "{n} tokens, edit at {first}: median PIE {pie:.2} ms vs full {full:.1} ms, ratio {ratio:.4}"
    ))
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = model(7);
    for i in 0..100 {
        let n = rng.random_range(16..=384);
        let original = random_tokens(&mut rng, n);
        let script = same_length_script(&mut rng, n);
        ensure(script.total_delta() == 0, || "delta must be 0".into())?;
        let (pre, _) = model.encode(&original).map_err(err)?;
        let (pie, _) = update_pie(&model, pre.clone(), &original, &script).map_err(err)?;
        let (cfe, _) = update_conflict_fast(&model, pre, &original, &script).map_err(err)?;
        for l in 0..pie.n_layers() {
            ensure(pie.layer_keys(l) == cfe.layer_keys(l), || {
                format!("case {i}: keys differ")
            })?;
            ensure(pie.layer_values(l) == cfe.layer_values(l), || {
                format!("case {i}: values differ")
            })?;
        }
    }
    Ok("100 same-length cases: PIE and ConflictFast caches bit-identical".into())
}

/// Full-table Levenshtein, independent of the library's two-row version.
fn lev_table(a: &[char], b: &[char]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..=a.len() {
        for j in 0..=b.len() {
            t[i][j] = if i == 0 {
                j
            } else if j == 0 {
                i
            } else {
                let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1)
            };
        }
    }
    t[a.len()][b.len()]
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let alphabet: Vec<char> = "ab c=()_xé中".chars().collect();
    for i in 0..1000 {
        let mut s = || -> Vec<char> {
            let n = rng.random_range(0..=64);
            (0..n)
                .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                .collect()
        };
        let (a, b) = (s(), s());
        let longest = a.len().max(b.len());
        let expect = if longest == 0 {
            100.0
        } else {
            100.0 * (1.0 - lev_table(&a, &b) as f64 / longest as f64)
        };
        let (sa, sb): (String, String) = (a.iter().collect(), b.iter().collect());
        ensure(levenshtein(&sa, &sb) == lev_table(&a, &b), || {
            format!("pair {i}: distance")
        })?;
        let got = edit_similarity(&sa, &sb);
        ensure(got == expect, || {
            format!("pair {i}: ES {got} vs oracle {expect}")
        })?;
    }
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], 0.0),
        (
            &[0.5, 0.5],
            &[0.25, 0.75],
            0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln(),
        ),
        (&[1.0, 0.0], &[0.5, 0.5], 2f64.ln()),
    ];
    for (p, q, want) in cases {
        let got = kl_divergence(p, q).map_err(err)?;
        ensure((got - want).abs() < 1e-9, || {
            format!("KL({p:?}||{q:?}) = {got}, want {want}")
        })?;
    }
    Ok("1000 ES pairs exact; 3 closed-form KL values within 1e-9".into())
}

fn check_scenario(s: &Scenario) -> Result<(), String> {
    s.script.validate(s.original.len()).map_err(err)?;
    let replay = apply_edit_tokens(&s.original, &s.script).map_err(err)?;
    ensure(replay == s.edited, || "round trip mismatch".into())?;
    for w in s.script.ops().windows(2) {
        ensure(w[0].end < w[1].start, || {
            format!("ops touch: {:?} / {:?}", w[0].end, w[1].start)
        })?;
    }
    Ok(())
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut max_sites = 0;
    for kind in ScenarioKind::ALL {
        for i in 0..500u64 {
            let doc = synthetic_python(i, rng.random_range(40..200));
            let target = doc.lines()[rng.random_range(0..doc.len())].clone();
            let num_sites = if kind == ScenarioKind::MultiPlaceContextual {
                1 + (i as usize % 15)
            } else {
                1
            };
            let cfg = ScenarioConfig {
                kind,
                lines_per_edit: rng.random_range(1..=5),
                num_sites,
                rng_seed: i,
                position_frac: None,
            };
            let s = scenario::generate(&doc, &target, &cfg)
                .map_err(|e| format!("{kind:?} #{i}: {e}"))?;
            check_scenario(&s).map_err(|e| format!("{kind:?} #{i}: {e}"))?;
            if kind == ScenarioKind::MultiPlaceContextual {
                ensure(s.script.len() == num_sites, || {
                    format!("#{i}: {} ops for {num_sites} sites", s.script.len())
                })?;
                max_sites = max_sites.max(s.script.len());
            }
        }
    }
    Ok(format!("5 kinds x 500 scenarios round-trip; multi-place up to {max_sites} sites sorted and disjoint"))
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let model = model(10);
    let mut worst = 0.0f32;
    for i in 0..100 {
        let n = rng.random_range(32..=512);
        let original = random_tokens(&mut rng, n);
        let script = random_script(&mut rng, n, 5);
        let (pre, _) = model.encode(&original).map_err(err)?;
        let (single, _) = update_pie(&model, pre.clone(), &original, &script).map_err(err)?;
        let mut cache = pre;
        let mut seq = TokenSequence::new(original);
        for op in script.sequential() {
            let step = EditScript::single(op).map_err(err)?;
            cache = update_pie(&model, cache, &seq, &step).map_err(err)?.0;
            seq = apply_edit_tokens(&seq, &step).map_err(err)?;
        }
        ensure(cache.len() == single.len(), || {
            format!("case {i}: lengths differ")
        })?;
        for l in 0..single.n_layers() {
            worst = worst
                .max(max_abs_diff(cache.layer_keys(l), single.layer_keys(l)))
                .max(max_abs_diff(cache.layer_values(l), single.layer_values(l)));
        }
        ensure(worst <= 1e-5, || {
            format!("case {i}: fold differs by {worst:e}")
        })?;
    }
    Ok(format!(
        "100 scripts of 1-5 ops: fold vs single-shot max diff {worst:.1e}"
    ))
}

fn main() {
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let t = Instant::now();
    let cases = oracle_cases();
    let setup = t.elapsed();
    let checks: Vec<Criterion<'_>> = vec![
        (1, "rotation algebra", Box::new(criterion_1)),
        (
            2,
            "full recompute equals fresh encode",
            Box::new(|| criterion_2(&cases)),
        ),
        (3, "PIE layer-0 exactness", Box::new(|| criterion_3(&cases))),
        (4, "per-layer key cosine ordering", Box::new(criterion_4)),
        (5, "per-step KL ordering", Box::new(criterion_5)),
        (6, "latency ratio at 4096 tokens", Box::new(criterion_6)),
        (7, "delta-zero identity", Box::new(criterion_7)),
        (8, "metric oracles", Box::new(criterion_8)),
        (9, "scenario round trip", Box::new(criterion_9)),
        (10, "multi-op fold composition", Box::new(criterion_10)),
    ];
    println!(
        "acceptance: shared oracle cases built in {:.2}s",
        setup.as_secs_f64()
    );
    let mut failed = 0;
    for (n, name, check) in &checks {
        if !args.is_empty() && !args.iter().any(|a| a == &n.to_string()) {
            continue;
        }
        let t = Instant::now();
        let result = check();
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {n:>2}. {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {n:>2}. {name} ({secs:.2}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
