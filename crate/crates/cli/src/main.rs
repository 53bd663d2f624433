use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use savetag::embedding::EncoderKind;
use savetag::fixture::{write_fixture, FixtureSpec};
use savetag::generation::{GeneratorKind, Variant};
use savetag::pipeline::{
    report_file_name, run_augment, run_stats, run_train_eval, Cell, EdgeStrategy, RunConfig, AUGMENT_REPORT_FILE,
};
use savetag::theory::run_checks;

#[derive(Parser)]
#[command(name = "savetag", version, about = "Vicinal text augmentation for long-tailed text-attributed graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; fields not given keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, global = true, value_enum)]
    edge: Option<EdgeArg>,
    #[arg(long, global = true, value_enum)]
    generator: Option<GeneratorArg>,
    #[arg(long, global = true, value_enum)]
    encoder: Option<EncoderArg>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset directory (overrides the config).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, embed and attach synthetic nodes; writes the augmented dataset.
    Augment,
    /// Train and evaluate the ablation grid from saved artifacts.
    TrainEval {
        /// Cells to evaluate, e.g. `origin,llm_C`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<String>>,
    },
    /// Run the numerical theory checks; exits nonzero if any fails.
    Verify {
        /// Scale one neighbor-weight row so the contraction check must fail.
        #[arg(long)]
        inject_bug: bool,
        /// Fixed self weight for the aggregation checks.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Print dataset and split statistics.
    Stats,
    /// Write the synthetic demo dataset.
    Fixture {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    #[value(name = "O", alias = "o")]
    O,
    #[value(name = "S", alias = "s")]
    S,
    #[value(name = "M", alias = "m")]
    M,
}

#[derive(Clone, Copy, ValueEnum)]
enum EdgeArg {
    Confidence,
    Duplicate,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Mock,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Hash,
    Remote,
}

fn build_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(v) = c.variant {
        cfg.variant = match v {
            VariantArg::O => Variant::O,
            VariantArg::S => Variant::S,
            VariantArg::M => Variant::M,
        };
    }
    if let Some(e) = c.edge {
        cfg.edge_strategy = match e {
            EdgeArg::Confidence => EdgeStrategy::Confidence,
            EdgeArg::Duplicate => EdgeStrategy::Duplicate,
            EdgeArg::None => EdgeStrategy::None,
        };
    }
    if let Some(g) = c.generator {
        cfg.generator.kind = match g {
            GeneratorArg::Mock => GeneratorKind::Mock,
            GeneratorArg::Remote => GeneratorKind::Remote,
        };
    }
    if let Some(e) = c.encoder {
        cfg.encoder.kind = match e {
            EncoderArg::Hash => EncoderKind::Hash,
            EncoderArg::Remote => EncoderKind::Remote,
        };
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(d) = &c.dataset {
        cfg.dataset = d.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = build_config(&cli.common)?;
    match cli.command {
        Command::Augment => {
            let report = run_augment(&cfg)?;
            println!(
                "augmented {} -> {} nodes ({} generated, {} cache hits, {} skipped); {} edges added, {} isolated",
                report.original.nodes,
                report.augmented.nodes,
                report.generation.pairs - report.generation.skipped.len(),
                report.generation.cache_hits,
                report.generation.skipped.len(),
                report.written_edges,
                report.written_isolated,
            );
            println!("report: {}", cfg.out.join(AUGMENT_REPORT_FILE).display());
        }
        Command::TrainEval { grid } => {
            if let Some(names) = grid {
                cfg.grid = names
                    .iter()
                    .map(|n| n.parse::<Cell>())
                    .collect::<savetag::Result<_>>()?;
            }
            let report = run_train_eval(&cfg)?;
            println!("{:<8} {:>17} {:>17} {:>17} {:>17}", "cell", "acc", "bacc", "macro_f1", "gmean");
            for c in &report.cells {
                let f = |m: &savetag::pipeline::MeanStd| format!("{:.4} ± {:.4}", m.mean, m.std);
                println!(
                    "{:<8} {:>17} {:>17} {:>17} {:>17}",
                    c.cell.as_str(),
                    f(&c.acc),
                    f(&c.bacc),
                    f(&c.macro_f1),
                    f(&c.gmean)
                );
            }
            println!("report: {}", cfg.out.join(report_file_name(&cfg.grid)).display());
        }
        Command::Verify { inject_bug, alpha } => {
            let mut v = cfg.verify.clone();
            v.seed = cli.common.seed.unwrap_or(v.seed);
            v.inject_unnormalized_beta |= inject_bug;
            v.alpha = alpha.or(v.alpha);
            let report = run_checks(&v)?;
            for c in &report.checks {
                println!(
                    "{} {:<24} {:>5}/{:<5} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.trials - c.failures,
                    c.trials,
                    c.detail
                );
            }
            if !report.all_passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Stats => {
            println!("{}", serde_json::to_string_pretty(&run_stats(&cfg)?)?);
        }
        Command::Fixture { dir } => {
            let graph = write_fixture(&dir, &FixtureSpec::default())?;
            println!("wrote {} nodes, {} edges to {}", graph.node_count(), graph.edge_count(), dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
