//! Freeze-and-reevolve transfer: evolve on a source task, fix the best path,
//! reinitialise everything else, then evolve a fresh population on the
//! destination task. A scratch baseline on an untouched network runs alongside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{microbial_tournament, tournament_records, EvolutionParams, EvolutionState};
use crate::genotype::Genotype;
use crate::metrics::{MetricsRecord, Phase, RecordContext};
use crate::rng::Rng;
use crate::supernet::{Architecture, SuperNetwork};
use crate::tasks::TaskSpec;

/// Stream ids carved out of the experiment seed.
const TRANSFER_STREAM: u64 = 0;
const SCRATCH_STREAM: u64 = 1;

pub const BUDGET_NOTE: &str =
    "training time is bounded by a generation budget per stage rather than wall-clock time";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub role: Phase,
    pub budget: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPlan {
    /// Stages run in order within every iteration.
    pub stages: Vec<StagePlan>,
    pub iterations: usize,
    /// Also freeze the destination's best path at the end of its stage.
    pub consolidate_destination: bool,
}

impl TransferPlan {
    pub fn standard(iterations: usize, source_budget: usize, destination_budget: usize, scratch: bool) -> Self {
        let mut stages = vec![
            StagePlan { role: Phase::Source, budget: source_budget },
            StagePlan { role: Phase::Destination, budget: destination_budget },
        ];
        if scratch {
            stages.push(StagePlan { role: Phase::Scratch, budget: destination_budget });
        }
        TransferPlan {
            stages,
            iterations,
            consolidate_destination: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Validation("a transfer plan needs at least one stage".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Validation("a transfer plan needs at least one iteration".into()));
        }
        if let Some(s) = self.stages.iter().find(|s| s.budget == 0) {
            return Err(Error::Validation(format!("{} stage has a zero generation budget", s.role)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub task_id: String,
    pub role: Phase,
    pub iteration: usize,
    pub best_genotype: Genotype,
    pub best_fitness: f64,
    /// Accuracy of the best path on the task's eval split.
    pub final_eval_accuracy: f64,
    /// Mean cross-entropy of the best path over the task's full training split.
    pub final_train_loss: f64,
    pub metrics: Vec<MetricsRecord>,
}

/// Fresh random population for a stage, seeded from `rng`.
pub fn start_stage(arch: &Architecture, params: &EvolutionParams, rng: &mut Rng) -> EvolutionState {
    EvolutionState::new(arch, params, rng.fork())
}

/// Scores the best path and appends the stage summary row.
pub fn finish_stage(
    net: &SuperNetwork,
    task: &TaskSpec,
    state: &EvolutionState,
    ctx: &RecordContext,
    mut metrics: Vec<MetricsRecord>,
) -> Result<StageOutcome> {
    let best = state
        .best_seen
        .clone()
        .ok_or_else(|| Error::Validation("stage finished without evaluating a path".into()))?;
    let eval = net.evaluate(&best.genotype, &task.task_id, &task.eval.features, &task.eval.labels)?;
    let train = net.evaluate(&best.genotype, &task.task_id, &task.train.features, &task.train.labels)?;
    metrics.push(MetricsRecord {
        phase: ctx.phase,
        iteration: ctx.iteration,
        generation: state.tournaments_completed,
        path_index: None,
        genotype: best.genotype.clone(),
        fitness: best.fitness,
        mean_train_loss: train.loss,
        eval_accuracy: Some(eval.accuracy()),
        wallclock_ms: None,
        seed: ctx.seed,
    });
    Ok(StageOutcome {
        task_id: task.task_id.clone(),
        role: ctx.phase,
        iteration: ctx.iteration,
        best_genotype: best.genotype,
        best_fitness: best.fitness,
        final_eval_accuracy: eval.accuracy(),
        final_train_loss: train.loss,
        metrics,
    })
}

/// Evolves a fresh population on `task` for `budget` generations.
pub fn run_stage(
    net: &mut SuperNetwork,
    task: &TaskSpec,
    params: &EvolutionParams,
    budget: usize,
    rng: &mut Rng,
    ctx: &RecordContext,
) -> Result<(EvolutionState, StageOutcome)> {
    if budget == 0 {
        return Err(Error::Validation("stage budget must be at least 1".into()));
    }
    let arch = *net.arch();
    let mut state = start_stage(&arch, params, rng);
    let rows = crate::evolution::evolve(net, task, params, &mut state, budget, ctx, |_| {})?;
    let outcome = finish_stage(net, task, &state, ctx, rows)?;
    Ok((state, outcome))
}

/// Freezes `best` and redraws every module that is still trainable.
pub fn consolidate(net: &mut SuperNetwork, best: &Genotype, rng: &mut Rng) -> Result<()> {
    net.freeze_path(best)?;
    for layer in net.fully_frozen_layers() {
        log::warn!("every module in layer {layer} is frozen; evolution there only selects among fixed modules");
    }
    net.reinit_unfrozen(rng);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub source_acc: Option<f64>,
    pub source_loss: Option<f64>,
    pub transfer_acc: Option<f64>,
    pub transfer_loss: Option<f64>,
    pub scratch_acc: Option<f64>,
    pub scratch_loss: Option<f64>,
    /// `transfer_acc − scratch_acc`.
    pub delta_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub iteration: usize,
    pub role: Phase,
    pub task_id: String,
    pub best_genotype: Genotype,
    pub best_fitness: f64,
    pub eval_accuracy: f64,
    pub train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub iterations: Vec<IterationSummary>,
    /// Iteration with the highest destination accuracy; earliest wins ties.
    pub best_iteration: Option<usize>,
    pub stages: Vec<StageSummary>,
    pub budget_note: String,
    /// Full learning-curve log; written to CSV separately.
    #[serde(skip)]
    pub metrics: Vec<MetricsRecord>,
}

impl ExperimentReport {
    pub fn from_outcomes(seed: u64, iterations: usize, outcomes: &[StageOutcome]) -> Self {
        let pick = |it: usize, role: Phase| outcomes.iter().rev().find(|o| o.iteration == it && o.role == role);
        let rows: Vec<IterationSummary> = (1..=iterations)
            .filter(|&it| outcomes.iter().any(|o| o.iteration == it))
            .map(|it| {
                let src = pick(it, Phase::Source);
                let dst = pick(it, Phase::Destination);
                let scr = pick(it, Phase::Scratch);
                IterationSummary {
                    iteration: it,
                    source_acc: src.map(|o| o.final_eval_accuracy),
                    source_loss: src.map(|o| o.final_train_loss),
                    transfer_acc: dst.map(|o| o.final_eval_accuracy),
                    transfer_loss: dst.map(|o| o.final_train_loss),
                    scratch_acc: scr.map(|o| o.final_eval_accuracy),
                    scratch_loss: scr.map(|o| o.final_train_loss),
                    delta_acc: dst.zip(scr).map(|(d, s)| d.final_eval_accuracy - s.final_eval_accuracy),
                }
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for r in &rows {
            if let Some(acc) = r.transfer_acc {
                if best.is_none_or(|(_, b)| acc > b) {
                    best = Some((r.iteration, acc));
                }
            }
        }
        ExperimentReport {
            seed,
            iterations: rows,
            best_iteration: best.map(|(it, _)| it),
            stages: outcomes
                .iter()
                .map(|o| StageSummary {
                    iteration: o.iteration,
                    role: o.role,
                    task_id: o.task_id.clone(),
                    best_genotype: o.best_genotype.clone(),
                    best_fitness: o.best_fitness,
                    eval_accuracy: o.final_eval_accuracy,
                    train_loss: o.final_train_loss,
                })
                .collect(),
            budget_note: BUDGET_NOTE.to_owned(),
            metrics: outcomes.iter().flat_map(|o| o.metrics.iter().cloned()).collect(),
        }
    }
}

/// A stage in progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveStage {
    pub role: Phase,
    pub budget: usize,
    /// The baseline's own network; `None` for stages on the transfer network.
    pub scratch_net: Option<SuperNetwork>,
    pub evolution: EvolutionState,
    pub rows: Vec<MetricsRecord>,
}

/// Everything needed to continue an experiment exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub seed: u64,
    /// 1-based.
    pub iteration: usize,
    pub stage_index: usize,
    pub network: SuperNetwork,
    pub transfer_rng: Rng,
    pub scratch_rng: Rng,
    pub active: Option<ActiveStage>,
    pub outcomes: Vec<StageOutcome>,
    pub generations_run: u64,
    pub finished: bool,
}

/// Drives a [`TransferPlan`] one unit of work at a time so it can be stopped
/// and resumed from a [`RunState`].
pub struct ExperimentRunner<'t> {
    plan: TransferPlan,
    params: EvolutionParams,
    source: &'t TaskSpec,
    destination: &'t TaskSpec,
    record_wallclock: bool,
    state: RunState,
}

impl<'t> ExperimentRunner<'t> {
    pub fn new(
        plan: TransferPlan,
        arch: Architecture,
        params: EvolutionParams,
        source: &'t TaskSpec,
        destination: &'t TaskSpec,
        seed: u64,
    ) -> Result<Self> {
        plan.validate()?;
        params.validate()?;
        arch.validate()?;
        for task in [source, destination] {
            if task.dim() != arch.input_dim {
                return Err(Error::Validation(format!(
                    "task `{}` has {} features but input_dim is {}",
                    task.task_id,
                    task.dim(),
                    arch.input_dim
                )));
            }
        }
        let mut transfer_rng = Rng::stream(seed, TRANSFER_STREAM);
        let scratch_rng = Rng::stream(seed, SCRATCH_STREAM);
        let mut network = SuperNetwork::new(arch, &mut transfer_rng)?;
        register_heads(&mut network, &[source, destination], &mut transfer_rng)?;
        Ok(ExperimentRunner {
            plan,
            params,
            source,
            destination,
            record_wallclock: false,
            state: RunState {
                seed,
                iteration: 1,
                stage_index: 0,
                network,
                transfer_rng,
                scratch_rng,
                active: None,
                outcomes: Vec::new(),
                generations_run: 0,
                finished: false,
            },
        })
    }

    pub fn resume(
        plan: TransferPlan,
        params: EvolutionParams,
        source: &'t TaskSpec,
        destination: &'t TaskSpec,
        state: RunState,
    ) -> Result<Self> {
        plan.validate()?;
        params.validate()?;
        state.network.check()?;
        for task in [source, destination] {
            if !state.network.has_head(&task.task_id) {
                return Err(Error::UnknownTask(task.task_id.clone()));
            }
        }
        if state.stage_index >= plan.stages.len() || state.iteration == 0 {
            return Err(Error::Validation("run state does not fit the plan".into()));
        }
        Ok(ExperimentRunner {
            plan,
            params,
            source,
            destination,
            record_wallclock: false,
            state,
        })
    }

    pub fn with_wallclock(mut self, on: bool) -> Self {
        self.record_wallclock = on;
        self
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn into_state(self) -> RunState {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    pub fn network(&self) -> &SuperNetwork {
        &self.state.network
    }

    fn task_for(&self, role: Phase) -> &'t TaskSpec {
        match role {
            Phase::Source => self.source,
            Phase::Destination | Phase::Scratch => self.destination,
        }
    }

    fn context(&self, role: Phase) -> RecordContext {
        RecordContext {
            phase: role,
            iteration: self.state.iteration,
            seed: self.state.seed,
            record_wallclock: self.record_wallclock,
        }
    }

    /// Advances by one unit: starting a stage, one tournament, or closing a
    /// stage. Returns `false` once the plan is complete.
    pub fn step(&mut self) -> Result<bool> {
        if self.state.finished {
            return Ok(false);
        }
        let arch = *self.state.network.arch();
        let Some(mut active) = self.state.active.take() else {
            let stage = self.plan.stages[self.state.stage_index];
            let scratch_net = if stage.role == Phase::Scratch {
                let rng = &mut self.state.scratch_rng;
                let mut net = SuperNetwork::new(arch, rng)?;
                register_heads(&mut net, &[self.destination], rng)?;
                Some(net)
            } else {
                None
            };
            let rng = if scratch_net.is_some() {
                &mut self.state.scratch_rng
            } else {
                &mut self.state.transfer_rng
            };
            let evolution = start_stage(&arch, &self.params, rng);
            self.state.active = Some(ActiveStage {
                role: stage.role,
                budget: stage.budget,
                scratch_net,
                evolution,
                rows: Vec::new(),
            });
            return Ok(true);
        };

        let task = self.task_for(active.role);
        let ctx = self.context(active.role);
        if (active.evolution.tournaments_completed as usize) < active.budget {
            let generation = active.evolution.tournaments_completed;
            let net = active.scratch_net.as_mut().unwrap_or(&mut self.state.network);
            let started = ctx.record_wallclock.then(std::time::Instant::now);
            let result = microbial_tournament(&mut active.evolution, net, task, &self.params)?;
            let wallclock = started.map(|t| t.elapsed().as_millis() as u64);
            active.rows.extend(tournament_records(&result, generation, &ctx, wallclock));
            self.state.generations_run += 1;
            self.state.active = Some(active);
            return Ok(true);
        }

        let net = active.scratch_net.as_ref().unwrap_or(&self.state.network);
        let outcome = finish_stage(net, task, &active.evolution, &ctx, active.rows)?;
        let freeze = match active.role {
            Phase::Source => true,
            Phase::Destination => self.plan.consolidate_destination,
            Phase::Scratch => false,
        };
        if freeze {
            consolidate(&mut self.state.network, &outcome.best_genotype, &mut self.state.transfer_rng)?;
        }
        self.state.outcomes.push(outcome);
        self.state.stage_index += 1;
        if self.state.stage_index == self.plan.stages.len() {
            self.state.stage_index = 0;
            self.state.iteration += 1;
            if self.state.iteration > self.plan.iterations {
                self.state.finished = true;
            }
        }
        Ok(true)
    }

    /// Runs until the plan completes or `limit` generations have run in total.
    pub fn run_until(&mut self, limit: Option<u64>) -> Result<()> {
        loop {
            if limit.is_some_and(|k| self.state.generations_run >= k) {
                return Ok(());
            }
            if !self.step()? {
                return Ok(());
            }
        }
    }

    pub fn run_to_end(mut self) -> Result<ExperimentReport> {
        self.run_until(None)?;
        Ok(self.report())
    }

    /// Every row emitted so far, in order.
    pub fn metrics(&self) -> Vec<MetricsRecord> {
        let mut rows: Vec<MetricsRecord> = self
            .state
            .outcomes
            .iter()
            .flat_map(|o| o.metrics.iter().cloned())
            .collect();
        if let Some(active) = &self.state.active {
            rows.extend(active.rows.iter().cloned());
        }
        rows
    }

    pub fn report(&self) -> ExperimentReport {
        let mut report = ExperimentReport::from_outcomes(self.state.seed, self.plan.iterations, &self.state.outcomes);
        report.metrics = self.metrics();
        report
    }
}

fn register_heads(net: &mut SuperNetwork, tasks: &[&TaskSpec], rng: &mut Rng) -> Result<()> {
    for task in tasks {
        if !net.has_head(&task.task_id) {
            net.register_head(&task.task_id, task.num_classes(), rng)?;
        }
    }
    Ok(())
}

/// Runs every iteration of `plan` from `seed` and reports transfer against scratch.
pub fn run_transfer_experiment(
    plan: &TransferPlan,
    arch: Architecture,
    params: &EvolutionParams,
    source: &TaskSpec,
    destination: &TaskSpec,
    seed: u64,
) -> Result<ExperimentReport> {
    ExperimentRunner::new(plan.clone(), arch, *params, source, destination, seed)?.run_to_end()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::make_blobs;

    fn setup() -> (Architecture, EvolutionParams, TaskSpec, TaskSpec) {
        let arch = Architecture::new(2, 4, 6, 2, 5).unwrap();
        let mut params = EvolutionParams::paper(&arch);
        params.population_size = 4;
        params.epochs_per_eval = 1;
        params.minibatches_per_epoch = 4;
        params.batch_size = 8;
        params.learning_rate = 0.1;
        let ds = make_blobs(3, 5, 20, 0.3, 3).unwrap();
        let a = TaskSpec::from_dataset("A", &ds, 0.25, 0).unwrap();
        let b = TaskSpec::from_dataset("B", &ds, 0.25, 1).unwrap();
        (arch, params, a, b)
    }

    #[test]
    fn single_generation_stage() {
        let (arch, params, a, _) = setup();
        let mut rng = Rng::new(0);
        let mut net = SuperNetwork::new(arch, &mut rng).unwrap();
        net.register_head("A", 3, &mut rng).unwrap();
        let ctx = RecordContext::new(Phase::Source, 1, 0);
        let (state, outcome) = run_stage(&mut net, &a, &params, 1, &mut rng, &ctx).unwrap();
        assert_eq!(state.tournaments_completed, 1);
        assert_eq!(outcome.metrics.iter().filter(|r| !r.is_summary()).count(), 2);
        assert!(outcome.metrics.last().unwrap().is_summary());
        assert!((0.0..=1.0).contains(&outcome.final_eval_accuracy));
        assert!(outcome.final_train_loss >= 0.0);
        assert!(run_stage(&mut net, &a, &params, 0, &mut rng, &ctx).is_err());
    }

    #[test]
    fn consolidate_freezes_and_protects() {
        let (arch, params, a, _) = setup();
        let mut rng = Rng::new(1);
        let mut net = SuperNetwork::new(arch, &mut rng).unwrap();
        net.register_head("A", 3, &mut rng).unwrap();
        let ctx = RecordContext::new(Phase::Source, 1, 0);
        let (_, outcome) = run_stage(&mut net, &a, &params, 2, &mut rng, &ctx).unwrap();
        consolidate(&mut net, &outcome.best_genotype, &mut rng).unwrap();
        let mask = net.frozen_mask();
        consolidate(&mut net, &outcome.best_genotype, &mut rng).unwrap();
        assert_eq!(net.frozen_mask(), mask);
        let frozen = net.clone();
        run_stage(&mut net, &a, &params, 3, &mut rng, &ctx).unwrap();
        for (l, m) in outcome.best_genotype.active() {
            assert_eq!(net.module(l, m), frozen.module(l, m));
        }
    }

    #[test]
    fn plan_validation() {
        assert!(TransferPlan::standard(0, 1, 1, true).validate().is_err());
        assert!(TransferPlan::standard(1, 0, 1, true).validate().is_err());
        let empty = TransferPlan { stages: vec![], iterations: 1, consolidate_destination: true };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn experiment_shape_and_determinism() {
        let (arch, params, a, b) = setup();
        let plan = TransferPlan::standard(2, 2, 2, true);
        let r1 = run_transfer_experiment(&plan, arch, &params, &a, &b, 5).unwrap();
        let r2 = run_transfer_experiment(&plan, arch, &params, &a, &b, 5).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.iterations.len(), 2);
        assert_eq!(r1.stages.len(), 6);
        for it in &r1.iterations {
            let delta = it.transfer_acc.unwrap() - it.scratch_acc.unwrap();
            assert_eq!(it.delta_acc, Some(delta));
        }
        // 3 stages x 2 iterations x (2 generations x 2 paths + 1 summary)
        assert_eq!(r1.metrics.len(), 30);
    }

    #[test]
    fn self_accumulation_shares_task() {
        let (arch, params, a, _) = setup();
        let plan = TransferPlan::standard(2, 1, 1, false);
        let report = run_transfer_experiment(&plan, arch, &params, &a, &a, 2).unwrap();
        assert_eq!(report.iterations.len(), 2);
        assert!(report.iterations.iter().all(|r| r.scratch_acc.is_none()));
    }

    #[test]
    fn resume_matches_straight_run() {
        let (arch, params, a, b) = setup();
        let plan = TransferPlan::standard(2, 2, 2, true);
        let straight = run_transfer_experiment(&plan, arch, &params, &a, &b, 8).unwrap();
        for k in [1u64, 3, 5] {
            let mut runner = ExperimentRunner::new(plan.clone(), arch, params, &a, &b, 8).unwrap();
            runner.run_until(Some(k)).unwrap();
            let text = serde_json::to_string(runner.state()).unwrap();
            let state: RunState = serde_json::from_str(&text).unwrap();
            let resumed = ExperimentRunner::resume(plan.clone(), params, &a, &b, state).unwrap();
            assert_eq!(resumed.run_to_end().unwrap(), straight);
        }
    }
}
