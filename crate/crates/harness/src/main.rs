use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pie_core::{ScenarioKind, Strategy};
use pie_harness::commands::report_path;
use pie_harness::{
    cmd_bench, cmd_diagnose, cmd_simulate, BenchConfig, CliError, CliResult, ReportFormat,
};

/// Benchmarks and diagnoses KV-cache update strategies after context edits.
#[derive(Parser)]
#[command(name = "pie", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time every strategy's cache update and score it against full recompute.
    Bench(Common),
    /// Emit per-layer key cosine and per-step KL arrays for plotting.
    Diagnose(Common),
    /// Replay an edit script over a corpus file and print the prediction.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// JSONL edit script, one op per line.
        #[arg(long)]
        script: PathBuf,
        /// Text file the script applies to.
        #[arg(long)]
        corpus: PathBuf,
    },
}

/// Flags shared by every command; each overrides the matching config field.
#[derive(Args)]
struct Common {
    /// JSON config file (every field optional).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Strategy to run: full, conflict_fast, reuse, pie. Repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<Strategy>,
    /// Context length in tokens. Repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    context_len: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tokens generated per case.
    #[arg(long)]
    n_generate: Option<usize>,
    /// Scenario kind: insertion, deletion, edition, contextual, multi_place_contextual.
    #[arg(long)]
    kind: Option<ScenarioKind>,
    /// Report file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for reports when --out is not given.
    #[arg(long, env = "PIE_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    format: Option<ReportFormat>,
}

impl Common {
    fn resolve(&self) -> CliResult<BenchConfig> {
        let mut cfg = match &self.config {
            Some(p) => BenchConfig::load(p)?,
            None => BenchConfig::default(),
        };
        if !self.strategy.is_empty() {
            cfg.strategies = self.strategy.clone();
        }
        if !self.context_len.is_empty() {
            cfg.context_lens = self.context_len.clone();
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.model.seed = s;
        }
        if let Some(n) = self.n_generate {
            cfg.n_generate = n;
        }
        if let Some(k) = self.kind {
            cfg.scenario.kind = k;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Bench(c) => {
            let cfg = c.resolve()?;
            let path = report_path(&cfg, c.out_dir.as_deref(), "bench");
            let report = cmd_bench(&cfg, &path)?;
            for r in &report.rows {
                println!(
                    "{:<14} n={:<6} update {:>10.3} ms  kl {:.4}  es {:.1}",
                    r.strategy.name(),
                    r.context_len,
                    r.update_ms_median,
                    r.kl_mean,
                    r.es_mean
                );
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Diagnose(c) => {
            let cfg = c.resolve()?;
            let path = report_path(&cfg, c.out_dir.as_deref(), "diagnose");
            cmd_diagnose(&cfg, &path)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Simulate {
            common,
            script,
            corpus,
        } => {
            let cfg = common.resolve()?;
            let path = report_path(&cfg, common.out_dir.as_deref(), "simulate");
            let report = cmd_simulate(&script, &corpus, &cfg, Some(&path))?;
            println!("{}", report.prediction);
            if report.diverges {
                eprintln!(
                    "note: full recompute predicts {:?}",
                    report.reference_prediction
                );
            }
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &CliError) -> ExitCode {
    ExitCode::from(e.kind.code() as u8)
}
