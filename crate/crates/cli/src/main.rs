use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use leap_core::pipeline::{self, RunConfig};
use leap_core::Result;

#[derive(Parser)]
#[command(
    name = "leap",
    version,
    about = "Perturbation response prediction with layered ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "LEAP_WORKERS", default_value_t = default_workers())]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Knn,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus to the configured input paths.
    Synth(Common),
    /// Fit the standardization and write the standardized matrix.
    Preprocess(Common),
    /// Train the representation seed ensemble.
    TrainDamae(Common),
    /// Fit on all labelled samples and write the model bundle.
    Fit(Common),
    /// Predict responses from a bundle for raw expression.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        expression: PathBuf,
        /// Perturbations to predict; all when omitted.
        #[arg(long, value_delimiter = ',')]
        perturbations: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        representations_subset: Vec<usize>,
        #[arg(long, default_value = "predictions.csv")]
        out: PathBuf,
        #[arg(long, env = "LEAP_WORKERS", default_value_t = default_workers())]
        workers: usize,
    },
    /// Score a prediction file against the configured responses.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Evaluate on the configured challenge and write reports and manifest.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long, value_delimiter = ',')]
        representations_subset: Vec<usize>,
    },
    /// Compare pipeline variants on identical splits.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        steps: Vec<String>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(common) => {
            let cfg = load_config(&common)?;
            print_json(&pipeline::cmd_synth(&cfg)?)
        }
        Command::Preprocess(common) => {
            let cfg = load_config(&common)?;
            let pm = pipeline::with_workers(common.workers, || pipeline::cmd_preprocess(&cfg))??;
            info!(
                "standardization fitted on {} genes ({})",
                pm.n_genes(),
                pm.fit_population_tag
            );
            Ok(())
        }
        Command::TrainDamae(common) => {
            let cfg = load_config(&common)?;
            let models = pipeline::with_workers(common.workers, || pipeline::cmd_train_damae(&cfg))??;
            info!("trained {} representations", models.len());
            Ok(())
        }
        Command::Fit(common) => {
            let cfg = load_config(&common)?;
            let (ens, path) = pipeline::with_workers(common.workers, || pipeline::cmd_fit(&cfg))??;
            println!(
                "{} representations, {} perturbations -> {}",
                ens.representations.len(),
                ens.fits.len(),
                path.display()
            );
            Ok(())
        }
        Command::Predict {
            bundle,
            expression,
            perturbations,
            representations_subset,
            out,
            workers,
        } => {
            let preds = pipeline::with_workers(workers, || {
                pipeline::cmd_predict(
                    &bundle,
                    &expression,
                    non_empty(&perturbations),
                    non_empty(&representations_subset),
                )
            })??;
            preds.write_csv(&out)?;
            println!("{} predictions -> {}", preds.len(), out.display());
            Ok(())
        }
        Command::Evaluate { common, predictions } => {
            let cfg = load_config(&common)?;
            let scores = pipeline::cmd_evaluate(&cfg, &predictions)?;
            print_json(&serde_json::json!({
                "mean_per_perturbation_spearman": scores.mean_spearman(),
                "mean_per_perturbation_pearson": scores.mean_pearson(),
                "mean_per_perturbation_mse": scores.mean_mse(),
                "overall": scores.overall(),
            }))
        }
        Command::Run {
            common,
            baseline,
            representations_subset,
        } => {
            let mut cfg = load_config(&common)?;
            if matches!(baseline, Some(Baseline::Knn)) {
                cfg.baseline.knn = true;
            }
            if !representations_subset.is_empty() {
                cfg.ensemble.representations_subset = representations_subset;
            }
            let outcome = pipeline::cmd_run(&cfg, common.workers)?;
            for m in &outcome.report.models {
                println!(
                    "{}: per-perturbation Spearman {} over {} repeats",
                    m.model,
                    fmt_opt(m.summary.per_perturbation_spearman.mean),
                    m.repeats.len()
                );
            }
            Ok(())
        }
        Command::Ablate { common, steps } => {
            let cfg = load_config(&common)?;
            let steps = if steps.is_empty() {
                cfg.ablation.steps.clone()
            } else {
                steps
            };
            let outcome = pipeline::cmd_ablate(&cfg, &steps, common.workers)?;
            for r in &outcome.rows {
                println!(
                    "{:<32} {}  delta {}",
                    r.step,
                    fmt_opt(r.per_perturbation_spearman.mean),
                    fmt_opt(r.delta_spearman)
                );
            }
            Ok(())
        }
    }
}

fn non_empty<T>(v: &[T]) -> Option<&[T]> {
    (!v.is_empty()).then_some(v)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "NA".into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
