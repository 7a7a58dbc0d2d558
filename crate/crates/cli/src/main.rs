use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pathnet_core::harness::{self, CurveKind, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pathnet", version, about = "Evolve and transfer pathways through a modular supernetwork")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full transfer experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Stop after this many generations in total and leave a checkpoint.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Evolve on the source task only.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Continue a run from its checkpoint.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Render learning curves from a metrics CSV.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        kind: Kind,
    },
    /// Check a config, including its datasets, without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Kind {
    Accuracy,
    Loss,
    Both,
}

fn print_run(summary: &harness::RunSummary) {
    for row in &summary.report.iterations {
        let pct = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{:.1}%", 100.0 * v));
        println!(
            "iteration {}: source {} transfer {} scratch {}",
            row.iteration,
            pct(row.source_acc),
            pct(row.transfer_acc),
            pct(row.scratch_acc)
        );
    }
    if summary.finished {
        println!("finished after {} generations; outputs in {}", summary.generations_run, summary.out_dir.display());
    } else {
        println!(
            "stopped after {} generations; resume with --checkpoint {}",
            summary.generations_run,
            summary.out_dir.join(harness::run::CHECKPOINT_FILE).display()
        );
    }
}

fn execute(command: Command) -> pathnet_core::Result<()> {
    match command {
        Command::Run { config, out, seed, stop_after } => {
            let config = ExperimentConfig::load(&config)?;
            print_run(&harness::run_experiment(config, &out, seed, stop_after)?);
        }
        Command::Evolve { config, out, seed } => {
            let config = ExperimentConfig::load(&config)?;
            let outcome = harness::evolve_single_stage(config, &out, seed)?;
            println!(
                "best path {} fitness {:.4} eval accuracy {:.4}",
                outcome.best_genotype, outcome.best_fitness, outcome.final_eval_accuracy
            );
        }
        Command::Resume { checkpoint, out, stop_after } => {
            print_run(&harness::resume_experiment(&checkpoint, &out, stop_after)?);
        }
        Command::Plot { metrics, out, kind } => {
            let rows = harness::read_metrics_csv(&metrics)?;
            let kind = match kind {
                Kind::Accuracy => CurveKind::Accuracy,
                Kind::Loss => CurveKind::Loss,
                Kind::Both => CurveKind::Both,
            };
            harness::render_curves_to_file(&rows, kind, &out)?;
        }
        Command::ValidateConfig { config } => {
            let r = harness::validate_config(&config)?;
            println!(
                "ok: {}x{} modules of {} units, input {}, {} and {} classes, {} iterations",
                r.arch.num_layers,
                r.arch.modules_per_layer,
                r.arch.neurons_per_module,
                r.arch.input_dim,
                r.source.num_classes(),
                r.destination.num_classes(),
                r.plan.iterations
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
