//! Command-level behaviour through the library and the `pie` binary.

use std::path::Path;
use std::process::Command;

use pie_core::scenario::ByteTokenizer;
use pie_core::{Decoder32, ModelConfig, Strategy};
use pie_harness::report::{BenchReport, BENCH_CSV_COLUMNS};
use pie_harness::{cmd_bench, cmd_diagnose, cmd_simulate, BenchConfig, ReportFormat};

fn tiny() -> BenchConfig {
    BenchConfig {
        model: ModelConfig {
            n_layers: 2,
            n_heads: 2,
            head_dim: 8,
            hidden_dim: 16,
            mlp_dim: 32,
            vocab_size: 258,
            seed: 1,
            ..Default::default()
        },
        context_lens: vec![128],
        trials: 2,
        n_generate: 16,
        ..Default::default()
    }
}

const CORPUS: &str = "def f(x):\n    y = x + 1\n    # bump\n    return y\n\nz = f(2)\nprint(z)\n";

fn pie(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pie"))
        .args(args)
        .current_dir(dir)
        .env_remove("PIE_OUT_DIR")
        .output()
        .unwrap()
}

#[test]
fn bench_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig {
        strategies: vec![Strategy::Full, Strategy::Pie, Strategy::Reuse],
        context_lens: vec![64, 128],
        ..tiny()
    };
    let path = dir.path().join("bench.json");
    let report = cmd_bench(&cfg, &path).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert!(report.complete);
    let on_disk: BenchReport =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(on_disk, report);
    let order: Vec<_> = report
        .rows
        .iter()
        .map(|r| (r.strategy, r.context_len))
        .collect();
    assert_eq!(order[0], (Strategy::Full, 64));
    assert_eq!(order[5], (Strategy::Reuse, 128));
}

#[test]
fn scenarios_can_be_saved() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig {
        strategies: vec![Strategy::Pie],
        scenario_dir: Some(dir.path().join("scen")),
        ..tiny()
    };
    cmd_bench(&cfg, &dir.path().join("b.json")).unwrap();
    for t in 0..cfg.trials {
        let script = dir.path().join(format!("scen/n128_t{t}.jsonl"));
        pie_core::EditScript::load(&script).unwrap();
        assert!(dir
            .path()
            .join(format!("scen/n128_t{t}.manifest.json"))
            .exists());
    }
}

#[test]
fn full_against_itself_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig {
        strategies: vec![Strategy::Full],
        ..tiny()
    };
    let r = &cmd_bench(&cfg, &dir.path().join("b.json")).unwrap().rows[0];
    assert_eq!(r.kl_mean, 0.0);
    assert!(r.cosine_per_layer.iter().all(|&c| (c - 1.0).abs() < 1e-9));
    assert_eq!(r.em_pct, 100.0);
    assert_eq!(r.es_mean, 100.0);
}

#[test]
fn csv_columns_are_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let cfg = BenchConfig {
        format: ReportFormat::Csv,
        trials: 1,
        ..tiny()
    };
    cmd_bench(&cfg, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), BENCH_CSV_COLUMNS.join(","));
    for l in lines {
        assert_eq!(l.split(',').count(), BENCH_CSV_COLUMNS.len(), "{l}");
    }
}

#[test]
fn timing_excludes_generation() {
    let dir = tempfile::tempdir().unwrap();
    let run = |n_generate| {
        let cfg = BenchConfig {
            strategies: vec![Strategy::Pie],
            context_lens: vec![256],
            trials: 7,
            n_generate,
            ..tiny()
        };
        cmd_bench(&cfg, &dir.path().join("t.json")).unwrap().rows[0].update_ms_median
    };
    let (short, long) = (run(1), run(256));
    let ratio = long / short;
    assert!(
        (0.2..5.0).contains(&ratio),
        "update time moved with n_generate: {short} vs {long} ms"
    );
}

#[test]
fn diagnose_arrays_have_expected_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig {
        strategies: vec![Strategy::ConflictFast, Strategy::Pie],
        ..tiny()
    };
    let report = cmd_diagnose(&cfg, &dir.path().join("d.json")).unwrap();
    assert_eq!(report.entries.len(), 2);
    for e in &report.entries {
        assert_eq!(e.per_step_kl.len(), cfg.n_generate);
        assert_eq!(e.per_layer_cosine.len(), cfg.model.n_layers);
        assert_eq!(e.trials.len(), cfg.trials);
    }
    let pie = &report.entries[1];
    assert!((pie.per_layer_cosine[0] - 1.0).abs() < 1e-6);
}

#[test]
fn simulate_empty_script_matches_plain_generation() {
    let dir = tempfile::tempdir().unwrap();
    let (script, corpus) = (dir.path().join("s.jsonl"), dir.path().join("c.py"));
    std::fs::write(&script, "").unwrap();
    std::fs::write(&corpus, CORPUS).unwrap();
    let cfg = tiny();
    let model = Decoder32::init(cfg.model.clone()).unwrap();
    let seq = ByteTokenizer.encode(CORPUS);
    let (mut cache, _) = model.encode(&seq).unwrap();
    let last = Decoder32::decode_entry(&mut cache, &seq).unwrap();
    let g = model
        .generate_greedy(&mut cache, last, cfg.n_generate, false)
        .unwrap();
    let expected = ByteTokenizer.decode(&g.tokens);
    for s in Strategy::ALL {
        let cfg = BenchConfig {
            strategies: vec![s],
            ..tiny()
        };
        let r = cmd_simulate(&script, &corpus, &cfg, None).unwrap();
        assert_eq!(r.generated_text, expected, "{s}");
        assert!(!r.diverges);
    }
}

#[test]
fn simulate_is_deterministic_and_flags_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let (script, corpus) = (dir.path().join("s.jsonl"), dir.path().join("c.py"));
    std::fs::write(
        &script,
        "{\"start\": 10, \"end\": 23, \"tokens\": [121, 32, 61, 32, 120, 42, 120, 10]}\n",
    )
    .unwrap();
    std::fs::write(&corpus, CORPUS).unwrap();
    let cfg = BenchConfig {
        strategies: vec![Strategy::Reuse],
        ..tiny()
    };
    let a = cmd_simulate(&script, &corpus, &cfg, None).unwrap();
    let b = cmd_simulate(&script, &corpus, &cfg, None).unwrap();
    assert_eq!(a.prediction, b.prediction);
    assert_eq!(a.generated_text, b.generated_text);
    assert_eq!(a.diverges, a.prediction != a.reference_prediction);
    let full = BenchConfig {
        strategies: vec![Strategy::Full],
        ..tiny()
    };
    let f = cmd_simulate(&script, &corpus, &full, None).unwrap();
    assert!(!f.diverges);
    assert_eq!(f.prediction, a.reference_prediction);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(pie(&["--help"], d).status.code(), Some(0));
    assert_eq!(pie(&["bench", "--no-such-flag"], d).status.code(), Some(1));
    assert_eq!(
        pie(&["bench", "--strategy", "magic"], d).status.code(),
        Some(1)
    );

    std::fs::write(d.join("zero.json"), r#"{"trials": 0}"#).unwrap();
    let out = pie(&["bench", "--config", "zero.json"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
    assert_eq!(
        pie(&["bench", "--config", "missing.json"], d).status.code(),
        Some(2)
    );

    std::fs::write(d.join("c.py"), CORPUS).unwrap();
    std::fs::write(
        d.join("bad.jsonl"),
        "{\"start\":0,\"end\":0,\"tokens\":[65]}\n{oops\n",
    )
    .unwrap();
    let out = pie(
        &["simulate", "--script", "bad.jsonl", "--corpus", "c.py"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    std::fs::write(
        d.join("far.jsonl"),
        "{\"start\":900,\"end\":901,\"tokens\":[]}\n",
    )
    .unwrap();
    let out = pie(
        &["simulate", "--script", "far.jsonl", "--corpus", "c.py"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_simulate_prints_prediction_and_honours_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.py"), CORPUS).unwrap();
    std::fs::write(
        d.join("s.jsonl"),
        "{\"start\":0,\"end\":0,\"tokens\":[35,10]}\n",
    )
    .unwrap();
    let cfg = serde_json::json!({"model": tiny().model, "n_generate": 8});
    std::fs::write(d.join("cfg.json"), cfg.to_string()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pie"))
        .args([
            "simulate",
            "--config",
            "cfg.json",
            "--strategy",
            "pie",
            "--script",
            "s.jsonl",
            "--corpus",
            "c.py",
        ])
        .current_dir(d)
        .env("PIE_OUT_DIR", d.join("reports"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("reports/simulate.json")).unwrap())
            .unwrap();
    let printed = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        printed.trim_end_matches('\n'),
        report["prediction"].as_str().unwrap()
    );
    assert_eq!(report["strategy"], "pie");
}
