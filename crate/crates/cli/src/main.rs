use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tabaudit::attack::{scores_csv, FeatureSet};
use tabaudit::benchmark::write_quickstart;
use tabaudit::config::{LoadedConfig, RunConfig};
use tabaudit::metrics::DEFAULT_FPR_CAP;
use tabaudit::pipeline::{self, PipelineManifest};

/// Membership-inference auditing for synthetic tabular data.
#[derive(Parser)]
#[command(name = "tabaudit", version)]
struct Cli {
    /// Worker threads (defaults to one per core). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schema utilities.
    #[command(subcommand)]
    Schema(SchemaCommand),
    /// Shadow simulation.
    #[command(subcommand)]
    Shadow(ShadowCommand),
    /// Attack training and scoring.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Compute metrics for a scores file against labels.
    Evaluate(EvaluateArgs),
    /// Compare feature sets and classifiers on held-out shadows.
    Ablate(AblateArgs),
    /// Full end-to-end run.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Write the benchmark data and a ready-to-run config.
    Quickstart(QuickstartArgs),
}

#[derive(Subcommand)]
enum SchemaCommand {
    /// Infer a schema from a CSV file.
    Infer {
        csv: PathBuf,
        /// Write the schema here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration JSON.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long, env = "TABAUDIT_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ShadowCommand {
    /// Partition the auxiliary data and run the generator on every shadow.
    Run(RunArgs),
}

#[derive(Subcommand)]
enum AttackCommand {
    /// Train the attack and write the bundle.
    Train(RunArgs),
    /// Score challenge records with a saved bundle.
    Score {
        #[arg(long)]
        bundle: PathBuf,
        /// CSV with a `record_id` column plus the schema columns.
        #[arg(long)]
        challenge: PathBuf,
        /// Write scores here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvaluateArgs {
    /// `record_id,score` CSV.
    #[arg(long)]
    scores: PathBuf,
    /// `record_id,label` CSV.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FPR_CAP)]
    fpr_cap: f64,
    /// Also write metrics.json, roc.csv and roc.svg here.
    #[arg(long, env = "TABAUDIT_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Feature sets to compare, e.g. `actual+error`. All 31 when omitted.
    #[arg(long = "feature-set")]
    feature_sets: Vec<FeatureSet>,
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Shadows, selection, attack, scoring and metrics.
    Run(RunArgs),
}

#[derive(Args)]
struct QuickstartArgs {
    dir: PathBuf,
    /// Leakage of the generator that released the target table.
    #[arg(long, default_value_t = 1.0)]
    leakage: f64,
    #[arg(long, default_value_t = tabaudit::seed::DEFAULT_SEED)]
    seed: u64,
}

fn load(args: &RunArgs) -> Result<(LoadedConfig, PathBuf)> {
    let cfg = RunConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir());
    Ok((cfg, out))
}

fn summarize(manifest: &PipelineManifest, out: &Path) {
    eprintln!("wrote {} artifacts to {}", manifest.artifacts.len(), out.display());
    if let Some(sel) = &manifest.selected {
        eprintln!(
            "selected {} / {} (validation TPR {:.4}, AUC {:.4})",
            sel.classifier, sel.feature_set, sel.validation_tpr_at_fpr, sel.validation_auc_roc
        );
    }
}

fn print_metrics(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    println!("{text}");
    Ok(())
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Schema(SchemaCommand::Infer { csv, output }) => {
            let schema = pipeline::infer_schema_file(&csv)?;
            write_or_print(output.as_deref(), &(schema.to_json()? + "\n"))
        }
        Command::Shadow(ShadowCommand::Run(args)) => {
            let (cfg, out) = load(&args)?;
            let manifest = pipeline::run_shadow_stage(&cfg, &out)?;
            summarize(&manifest, &out);
            Ok(())
        }
        Command::Attack(AttackCommand::Train(args)) => {
            let (cfg, out) = load(&args)?;
            let manifest = pipeline::run_attack_training(&cfg, &out)?;
            summarize(&manifest, &out);
            print_metrics(&out.join("metrics_shadows.json"))
        }
        Command::Attack(AttackCommand::Score {
            bundle,
            challenge,
            output,
        }) => {
            let scores = pipeline::score_with_bundle(&bundle, &challenge)?;
            write_or_print(output.as_deref(), &scores_csv(&scores))
        }
        Command::Evaluate(args) => {
            let scores = pipeline::load_scores(&args.scores)?;
            let labels = pipeline::load_labels(&args.labels)?;
            let (report, roc) = pipeline::evaluate_scores(&scores, &labels, args.fpr_cap)?;
            if let Some(dir) = &args.out {
                pipeline::write_report(dir, "metrics", &report, &roc, "Challenge records")?;
            }
            println!("{}", report.to_json()?);
            Ok(())
        }
        Command::Ablate(args) => {
            let (cfg, out) = load(&args.run)?;
            let sets = (!args.feature_sets.is_empty()).then_some(args.feature_sets);
            let (manifest, selection) = pipeline::run_ablation(&cfg, &out, sets)?;
            summarize(&manifest, &out);
            eprintln!("{} candidates, report in {}", selection.report.len(), out.join("ablation.csv").display());
            Ok(())
        }
        Command::Pipeline(PipelineCommand::Run(args)) => {
            let (cfg, out) = load(&args)?;
            let manifest = pipeline::run_pipeline(&cfg, &out)?;
            summarize(&manifest, &out);
            print_metrics(&out.join("metrics.json"))
        }
        Command::Quickstart(args) => {
            let path = write_quickstart(&args.dir, args.leakage, args.seed)?;
            eprintln!("wrote {}", path.display());
            eprintln!("next: tabaudit pipeline run --config {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = pipeline::with_threads(cli.threads, || run(cli.command))
        .map_err(anyhow::Error::from)
        .and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
