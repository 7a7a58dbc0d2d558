//! Browser playground: step a small transfer experiment, watch the module
//! grid freeze, try the genetic operators on hand-written genotypes, and
//! preview the blob tasks.

use pathnet_core::evolution::{mutate, recombine};
use pathnet_core::harness::{render_curves, CurveKind};
use pathnet_core::metrics::Phase;
use pathnet_core::transfer::{ExperimentRunner, RunState};
use pathnet_core::{
    derive_related_task, make_blobs, Architecture, Dataset, EvolutionParams, Genotype, Relation, Rng, TaskSpec,
    TransferPlan,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn relation(name: &str, classes: usize) -> Result<Relation, String> {
    match name {
        "label-permutation" => Ok(Relation::LabelPermutation),
        "fixed-rotation" => Ok(Relation::FixedRotation),
        "class-subset" => Ok(Relation::ClassSubset { classes: classes.saturating_sub(1).max(2) }),
        other => Err(format!("unknown relation `{other}`")),
    }
}

#[derive(Serialize)]
struct Cell {
    layer: usize,
    module: usize,
    frozen: bool,
    on_best_path: bool,
}

#[derive(Serialize)]
struct Status<'a> {
    iteration: usize,
    stage: Option<Phase>,
    generation: u64,
    generations_run: u64,
    finished: bool,
    best_genotype: Option<String>,
    best_fitness: Option<f64>,
    frozen_modules: usize,
    grid: Vec<Cell>,
    outcomes: Vec<OutcomeView<'a>>,
}

#[derive(Serialize)]
struct OutcomeView<'a> {
    iteration: usize,
    role: Phase,
    task_id: &'a str,
    best_genotype: String,
    eval_accuracy: f64,
    train_loss: f64,
}

/// Owns the tasks and the run state; a runner is rebuilt around them for
/// every call so nothing borrowed has to outlive a JS call.
pub struct Session {
    plan: TransferPlan,
    params: EvolutionParams,
    source: TaskSpec,
    destination: TaskSpec,
    state: Option<RunState>,
}

impl Session {
    pub fn new(seed: u64, spread: f64, relation_name: &str, iterations: usize, generations: usize) -> Result<Self, String> {
        let classes = 4;
        let data = make_blobs(classes, 8, 40, spread, seed).map_err(err)?;
        let related = derive_related_task(&data, relation(relation_name, classes)?, seed + 1).map_err(err)?;
        let source = TaskSpec::from_dataset("A", &data, 0.25, seed).map_err(err)?;
        let destination = TaskSpec::from_dataset("B", &related, 0.25, seed + 1).map_err(err)?;
        let arch = Architecture::new(3, 8, 6, 3, 8).map_err(err)?;
        let mut params = EvolutionParams::paper(&arch);
        params.population_size = 8;
        params.generations = generations;
        params.epochs_per_eval = 2;
        params.minibatches_per_epoch = 5;
        params.batch_size = 8;
        params.learning_rate = 0.05;
        let plan = TransferPlan::standard(iterations, generations, generations, true);
        let state = ExperimentRunner::new(plan.clone(), arch, params, &source, &destination, seed)
            .map_err(err)?
            .into_state();
        Ok(Session {
            plan,
            params,
            source,
            destination,
            state: Some(state),
        })
    }

    fn with_runner<T>(&mut self, f: impl FnOnce(&mut ExperimentRunner<'_>) -> Result<T, String>) -> Result<T, String> {
        let state = self.state.take().ok_or("session is poisoned by an earlier error")?;
        let mut runner =
            ExperimentRunner::resume(self.plan.clone(), self.params, &self.source, &self.destination, state).map_err(err)?;
        let out = f(&mut runner);
        self.state = Some(runner.into_state());
        out
    }

    /// Runs up to `units` steps (stage start, tournament or stage end).
    pub fn step(&mut self, units: usize) -> Result<bool, String> {
        self.with_runner(|r| {
            let mut progressed = false;
            for _ in 0..units {
                if !r.step().map_err(err)? {
                    break;
                }
                progressed = true;
            }
            Ok(progressed)
        })
    }

    pub fn status_json(&mut self) -> Result<String, String> {
        let state = self.state.as_ref().ok_or("session is poisoned by an earlier error")?;
        let net = &state.network;
        let arch = *net.arch();
        let active = state.active.as_ref();
        let best = active
            .and_then(|a| a.evolution.best_seen.as_ref())
            .map(|b| (b.genotype.clone(), b.fitness))
            .or_else(|| state.outcomes.last().map(|o| (o.best_genotype.clone(), o.best_fitness)));
        let grid = (0..arch.num_layers)
            .flat_map(|l| (0..arch.modules_per_layer).map(move |m| (l, m)))
            .map(|(l, m)| Cell {
                layer: l,
                module: m,
                frozen: net.is_frozen(l, m),
                on_best_path: best.as_ref().is_some_and(|(g, _)| g.contains(l, m)),
            })
            .collect();
        let status = Status {
            iteration: state.iteration,
            stage: active.map(|a| a.role),
            generation: active.map_or(0, |a| a.evolution.tournaments_completed),
            generations_run: state.generations_run,
            finished: state.finished,
            best_genotype: best.as_ref().map(|(g, _)| g.to_string()),
            best_fitness: best.map(|(_, f)| f),
            frozen_modules: net.frozen_count(),
            grid,
            outcomes: state
                .outcomes
                .iter()
                .map(|o| OutcomeView {
                    iteration: o.iteration,
                    role: o.role,
                    task_id: &o.task_id,
                    best_genotype: o.best_genotype.to_string(),
                    eval_accuracy: o.final_eval_accuracy,
                    train_loss: o.final_train_loss,
                })
                .collect(),
        };
        serde_json::to_string(&status).map_err(err)
    }

    pub fn curves_svg(&mut self, kind: &str) -> Result<String, String> {
        let kind = match kind {
            "accuracy" => CurveKind::Accuracy,
            "loss" => CurveKind::Loss,
            _ => CurveKind::Both,
        };
        let rows = self.with_runner(|r| Ok(r.metrics()))?;
        render_curves(&rows, kind).map_err(err)
    }
}

#[derive(Serialize)]
struct OperatorResult {
    infected: String,
    child: String,
    /// Per layer: `true` when the infected copy took the winner's layer.
    from_winner: Vec<bool>,
}

/// Infects `loser` with `winner` and mutates the result.
pub fn apply_operators(
    winner: &str,
    loser: &str,
    modules: usize,
    max_width: usize,
    infection_rate: f64,
    mutation_rate: f64,
    seed: u64,
) -> Result<String, String> {
    let winner: Genotype = winner.parse().map_err(err)?;
    let loser: Genotype = loser.parse().map_err(err)?;
    if winner.num_layers() != loser.num_layers() {
        return Err("winner and loser need the same number of layers".into());
    }
    let arch = Architecture::new(winner.num_layers(), modules, 1, max_width, 1).map_err(err)?;
    winner.validate(&arch).map_err(|e| format!("winner: {e}"))?;
    loser.validate(&arch).map_err(|e| format!("loser: {e}"))?;
    if !(0.0..=1.0).contains(&infection_rate) || !(0.0..=1.0).contains(&mutation_rate) {
        return Err("rates must lie in [0, 1]".into());
    }
    let mut rng = Rng::new(seed);
    let infected = recombine(&winner, &loser, infection_rate, &mut rng);
    let child = mutate(&infected, mutation_rate, &arch, &mut rng);
    let from_winner = (0..winner.num_layers())
        .map(|l| infected.layer(l) == winner.layer(l) && winner.layer(l) != loser.layer(l))
        .collect();
    serde_json::to_string(&OperatorResult {
        infected: infected.to_string(),
        child: child.to_string(),
        from_winner,
    })
    .map_err(err)
}

#[derive(Serialize)]
struct Points {
    x: Vec<f64>,
    y: Vec<f64>,
    label: Vec<usize>,
}

impl From<&Dataset> for Points {
    fn from(ds: &Dataset) -> Self {
        Points {
            x: (0..ds.len()).map(|i| ds.features.get(i, 0)).collect(),
            y: (0..ds.len()).map(|i| ds.features.get(i, 1)).collect(),
            label: ds.labels.clone(),
        }
    }
}

#[derive(Serialize)]
struct Preview {
    source: Points,
    destination: Points,
}

/// Two-dimensional blobs and their related task, for plotting.
pub fn preview_blobs(classes: usize, per_class: usize, spread: f64, relation_name: &str, seed: u64) -> Result<String, String> {
    let data = make_blobs(classes, 2, per_class, spread, seed).map_err(err)?;
    let related = derive_related_task(&data, relation(relation_name, classes)?, seed + 1).map_err(err)?;
    serde_json::to_string(&Preview {
        source: Points::from(&data),
        destination: Points::from(&related),
    })
    .map_err(err)
}

#[wasm_bindgen]
pub struct Playground {
    inner: Session,
}

#[wasm_bindgen]
impl Playground {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, spread: f64, relation: &str, iterations: u32, generations: u32) -> Result<Playground, JsError> {
        Session::new(u64::from(seed), spread, relation, iterations as usize, generations as usize)
            .map(|inner| Playground { inner })
            .map_err(|e| JsError::new(&e))
    }

    pub fn step(&mut self, units: u32) -> Result<bool, JsError> {
        self.inner.step(units as usize).map_err(|e| JsError::new(&e))
    }

    pub fn status(&mut self) -> Result<String, JsError> {
        self.inner.status_json().map_err(|e| JsError::new(&e))
    }

    pub fn curves(&mut self, kind: &str) -> Result<String, JsError> {
        self.inner.curves_svg(kind).map_err(|e| JsError::new(&e))
    }
}

#[wasm_bindgen(js_name = applyOperators)]
pub fn apply_operators_js(
    winner: &str,
    loser: &str,
    modules: u32,
    max_width: u32,
    infection_rate: f64,
    mutation_rate: f64,
    seed: u32,
) -> Result<String, JsError> {
    apply_operators(winner, loser, modules as usize, max_width as usize, infection_rate, mutation_rate, u64::from(seed))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = previewBlobs)]
pub fn preview_blobs_js(classes: u32, per_class: u32, spread: f64, relation: &str, seed: u32) -> Result<String, JsError> {
    preview_blobs(classes as usize, per_class as usize, spread, relation, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_runs_to_completion_and_freezes() {
        let mut s = Session::new(1, 0.3, "fixed-rotation", 2, 4).unwrap();
        let first: serde_json::Value = serde_json::from_str(&s.status_json().unwrap()).unwrap();
        assert_eq!(first["grid"].as_array().unwrap().len(), 24);
        assert_eq!(first["frozen_modules"], 0);
        while s.step(5).unwrap() {}
        let done: serde_json::Value = serde_json::from_str(&s.status_json().unwrap()).unwrap();
        assert_eq!(done["finished"], true);
        assert_eq!(done["outcomes"].as_array().unwrap().len(), 6);
        assert!(done["frozen_modules"].as_u64().unwrap() > 0);
        let svg = s.curves_svg("both").unwrap();
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn session_matches_the_native_runner() {
        let mut s = Session::new(2, 0.3, "label-permutation", 1, 3).unwrap();
        while s.step(1).unwrap() {}
        let state = s.state.take().unwrap();
        let fresh = Session::new(2, 0.3, "label-permutation", 1, 3).unwrap();
        let report = ExperimentRunner::new(
            fresh.plan.clone(),
            *fresh.state.as_ref().unwrap().network.arch(),
            fresh.params,
            &fresh.source,
            &fresh.destination,
            2,
        )
        .unwrap()
        .run_to_end()
        .unwrap();
        assert_eq!(state.outcomes.len(), report.stages.len());
        for (o, st) in state.outcomes.iter().zip(&report.stages) {
            assert_eq!(o.best_genotype, st.best_genotype);
            assert_eq!(o.final_eval_accuracy.to_bits(), st.eval_accuracy.to_bits());
        }
    }

    #[test]
    fn operators_at_extreme_rates() {
        let r: serde_json::Value =
            serde_json::from_str(&apply_operators("0:1,2|1:3", "0:4|1:5,6", 8, 3, 1.0, 0.0, 0).unwrap()).unwrap();
        assert_eq!(r["child"], "0:1,2|1:3");
        assert_eq!(r["from_winner"], serde_json::json!([true, true]));
        let r: serde_json::Value =
            serde_json::from_str(&apply_operators("0:1,2|1:3", "0:4|1:5,6", 8, 3, 0.0, 0.0, 0).unwrap()).unwrap();
        assert_eq!(r["child"], "0:4|1:5,6");
        assert!(apply_operators("0:1|1:2", "0:1", 8, 3, 0.5, 0.1, 0).is_err());
        assert!(apply_operators("0:1,2,3,4|1:2", "0:1|1:2", 8, 3, 0.5, 0.1, 0).is_err());
        assert!(apply_operators("0:x", "0:1", 8, 3, 0.5, 0.1, 0).is_err());
    }

    #[test]
    fn rotation_preview_keeps_radii() {
        let v: serde_json::Value =
            serde_json::from_str(&preview_blobs(3, 20, 0.2, "fixed-rotation", 5).unwrap()).unwrap();
        let radius = |p: &serde_json::Value, i: usize| {
            let x = p["x"][i].as_f64().unwrap();
            let y = p["y"][i].as_f64().unwrap();
            (x * x + y * y).sqrt()
        };
        for i in 0..60 {
            assert!((radius(&v["source"], i) - radius(&v["destination"], i)).abs() < 1e-9);
        }
        assert!(preview_blobs(3, 20, 0.2, "shear", 5).is_err());
    }
}
