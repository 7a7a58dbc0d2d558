//! Config-to-directory drivers used by the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::harness::config::{ExperimentConfig, Resolved};
use crate::harness::metrics_csv::write_metrics_csv;
use crate::harness::plot::{render_curves_to_file, CurveKind};
use crate::harness::report::report_summary;
use crate::harness::write_atomic;
use crate::metrics::{MetricsRecord, Phase, RecordContext};
use crate::rng::Rng;
use crate::supernet::SuperNetwork;
use crate::transfer::{run_stage, ExperimentReport, ExperimentRunner, StageOutcome, BUDGET_NOTE};

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const ACCURACY_SVG: &str = "curves_accuracy.svg";
pub const LOSS_SVG: &str = "curves_loss.svg";
pub const STAGE_FILE: &str = "stage.json";

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub finished: bool,
    pub generations_run: u64,
    pub report: ExperimentReport,
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_curves(dir: &Path, rows: &[MetricsRecord]) -> Result<()> {
    if rows.iter().all(|r| r.is_summary()) {
        return Ok(());
    }
    render_curves_to_file(rows, CurveKind::Accuracy, dir.join(ACCURACY_SVG))?;
    render_curves_to_file(rows, CurveKind::Loss, dir.join(LOSS_SVG))
}

fn drive(config: ExperimentConfig, mut runner: ExperimentRunner<'_>, out_dir: &Path, stop_after: Option<u64>) -> Result<RunSummary> {
    runner.run_until(stop_after)?;
    let report = runner.report();
    write_metrics_csv(out_dir.join(METRICS_FILE), &report.metrics)?;
    write_atomic(&out_dir.join(REPORT_FILE), report_summary(&report).as_bytes())?;
    write_curves(out_dir, &report.metrics)?;
    let finished = runner.is_finished();
    let generations_run = runner.state().generations_run;
    save_checkpoint(out_dir.join(CHECKPOINT_FILE), &Checkpoint::new(config, runner.into_state()))?;
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        finished,
        generations_run,
        report,
    })
}

/// Runs the experiment described by `config` and writes every output file.
/// With `stop_after`, stops once that many generations have run in total; the
/// checkpoint then continues the run via [`resume_experiment`].
pub fn run_experiment(
    mut config: ExperimentConfig,
    out_dir: &Path,
    seed: Option<u64>,
    stop_after: Option<u64>,
) -> Result<RunSummary> {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let Resolved { arch, params, plan, source, destination } = config.resolve()?;
    prepare_dir(out_dir)?;
    let runner = ExperimentRunner::new(plan, arch, params, &source, &destination, config.seed)?
        .with_wallclock(config.record_wallclock);
    drive(config, runner, out_dir, stop_after)
}

/// Continues a checkpointed run to completion.
pub fn resume_experiment(checkpoint: &Path, out_dir: &Path, stop_after: Option<u64>) -> Result<RunSummary> {
    let Checkpoint { config, state, .. } = load_checkpoint(checkpoint)?;
    let Resolved { arch, params, plan, source, destination } = config.resolve()?;
    if *state.network.arch() != arch {
        return Err(Error::Validation("checkpoint network does not match its config".into()));
    }
    prepare_dir(out_dir)?;
    let runner = ExperimentRunner::resume(plan, params, &source, &destination, state)?.with_wallclock(config.record_wallclock);
    drive(config, runner, out_dir, stop_after)
}

/// Summary written by [`evolve_single_stage`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub seed: u64,
    pub task_id: String,
    pub generations: usize,
    pub best_genotype: String,
    pub best_fitness: f64,
    pub eval_accuracy: f64,
    pub train_loss: f64,
    pub budget_note: String,
}

/// Evolves on the source task alone for `evolution.generations` generations.
pub fn evolve_single_stage(mut config: ExperimentConfig, out_dir: &Path, seed: Option<u64>) -> Result<StageOutcome> {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let Resolved { arch, params, source, .. } = config.resolve()?;
    prepare_dir(out_dir)?;
    let mut rng = Rng::new(config.seed);
    let mut net = SuperNetwork::new(arch, &mut rng)?;
    net.register_head(&source.task_id, source.num_classes(), &mut rng)?;
    let mut ctx = RecordContext::new(Phase::Source, 1, config.seed);
    ctx.record_wallclock = config.record_wallclock;
    let (_, outcome) = run_stage(&mut net, &source, &params, params.generations, &mut rng, &ctx)?;
    write_metrics_csv(out_dir.join(METRICS_FILE), &outcome.metrics)?;
    write_curves(out_dir, &outcome.metrics)?;
    let report = StageReport {
        seed: config.seed,
        task_id: outcome.task_id.clone(),
        generations: params.generations,
        best_genotype: outcome.best_genotype.to_string(),
        best_fitness: outcome.best_fitness,
        eval_accuracy: outcome.final_eval_accuracy,
        train_loss: outcome.final_train_loss,
        budget_note: BUDGET_NOTE.to_owned(),
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_atomic(&out_dir.join(STAGE_FILE), text.as_bytes())?;
    Ok(outcome)
}

/// Loads and fully resolves a config, including reading its datasets.
pub fn validate_config(path: &Path) -> Result<Resolved> {
    ExperimentConfig::load(path)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics_csv::read_metrics_csv;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "seed": 4,
                "architecture": {"num_layers": 2, "modules_per_layer": 4, "neurons_per_module": 3, "max_path_width": 2},
                "evolution": {"population_size": 4, "generations": 3, "epochs_per_eval": 1, "minibatches_per_epoch": 2, "batch_size": 4},
                "tasks": {
                    "source": {"type": "blobs", "classes": 3, "dim": 5, "per_class": 10, "spread": 0.3, "seed": 1},
                    "destination": {"type": "derived", "relation": "label-permutation", "seed": 2}
                },
                "plan": {"iterations": 2}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn run_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(tiny(), dir.path(), None, None).unwrap();
        assert!(summary.finished);
        assert_eq!(summary.generations_run, 2 * 3 * 3);
        for f in [METRICS_FILE, REPORT_FILE, CHECKPOINT_FILE, ACCURACY_SVG, LOSS_SVG] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let rows = read_metrics_csv(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(rows.len(), 2 * 3 * (2 * 3 + 1));
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.fitness) && r.mean_train_loss >= 0.0));
    }

    #[test]
    fn stop_then_resume_matches_straight_run() {
        let straight = tempfile::tempdir().unwrap();
        let split = tempfile::tempdir().unwrap();
        let resumed = tempfile::tempdir().unwrap();
        run_experiment(tiny(), straight.path(), None, None).unwrap();
        let partial = run_experiment(tiny(), split.path(), None, Some(5)).unwrap();
        assert!(!partial.finished);
        resume_experiment(&split.path().join(CHECKPOINT_FILE), resumed.path(), None).unwrap();
        for f in [METRICS_FILE, REPORT_FILE, ACCURACY_SVG, LOSS_SVG, CHECKPOINT_FILE] {
            assert_eq!(
                std::fs::read(straight.path().join(f)).unwrap(),
                std::fs::read(resumed.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn evolve_writes_stage_report() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = evolve_single_stage(tiny(), dir.path(), Some(9)).unwrap();
        assert_eq!(outcome.metrics.len(), 2 * 3 + 1);
        let text = std::fs::read_to_string(dir.path().join(STAGE_FILE)).unwrap();
        let report: StageReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report.seed, 9);
    }
}
