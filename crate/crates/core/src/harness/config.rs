//! JSON experiment description. Every field has a default equal to the
//! reference PathNet settings except the task block, which must be given.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{default_mutation_rate, EvolutionParams};
use crate::supernet::Architecture;
use crate::tasks::{self, Dataset, Relation, TaskSpec};
use crate::transfer::TransferPlan;

pub const SOURCE_TASK_ID: &str = "A";
pub const DESTINATION_TASK_ID: &str = "B";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    pub tasks: TasksConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub record_wallclock: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub num_layers: usize,
    pub modules_per_layer: usize,
    pub neurons_per_module: usize,
    pub max_path_width: usize,
    /// Taken from the source dataset when absent.
    pub input_dim: Option<usize>,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            num_layers: 3,
            modules_per_layer: 20,
            neurons_per_module: 20,
            max_path_width: 5,
            input_dim: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub epochs_per_eval: usize,
    pub minibatches_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub infection_rate: f64,
    /// `1/(L·P)` when absent.
    pub mutation_rate: Option<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 20,
            generations: 1000,
            epochs_per_eval: 50,
            minibatches_per_epoch: 50,
            batch_size: 16,
            learning_rate: 0.02,
            infection_rate: 0.5,
            mutation_rate: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TasksConfig {
    pub source: DatasetSource,
    pub destination: DatasetSource,
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
}

fn default_eval_fraction() -> f64 {
    0.2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationKind {
    LabelPermutation,
    FixedRotation,
    ClassSubset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Blobs {
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        label_column: usize,
        #[serde(default)]
        has_header: bool,
    },
    /// Built from the source dataset; only valid as a destination.
    Derived {
        relation: RelationKind,
        #[serde(default)]
        classes: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    /// The source dataset itself; only valid as a destination.
    Same,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub iterations: usize,
    /// `evolution.generations` when absent.
    pub source_budget: Option<usize>,
    pub destination_budget: Option<usize>,
    pub scratch_baseline: bool,
    pub consolidate_destination: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            iterations: 4,
            source_budget: None,
            destination_budget: None,
            scratch_baseline: true,
            consolidate_destination: true,
        }
    }
}

/// Concrete objects built from a config.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub arch: Architecture,
    pub params: EvolutionParams,
    pub plan: TransferPlan,
    pub source: TaskSpec,
    pub destination: TaskSpec,
}

impl ExperimentConfig {
    /// Parses a config file. Relative CSV paths are made absolute against the
    /// file's directory so the config stays meaningful inside a checkpoint.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for source in [&mut config.tasks.source, &mut config.tasks.destination] {
            if let DatasetSource::Csv { path, .. } = source {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Field-level problems that can be found without reading any data.
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let mut check = |ok: bool, field: &str, msg: &str| {
            if !ok {
                issues.push(format!("{field}: {msg}"));
            }
        };
        let a = &self.architecture;
        check(a.num_layers >= 1, "architecture.num_layers", "must be at least 1");
        check(a.modules_per_layer >= 1, "architecture.modules_per_layer", "must be at least 1");
        check(a.neurons_per_module >= 1, "architecture.neurons_per_module", "must be at least 1");
        check(
            a.max_path_width >= 1 && a.max_path_width <= a.modules_per_layer,
            "architecture.max_path_width",
            "must lie in 1..=modules_per_layer",
        );
        check(a.input_dim != Some(0), "architecture.input_dim", "must be at least 1");

        let e = &self.evolution;
        check(e.population_size >= 2, "evolution.population_size", "must be at least 2");
        check(e.generations >= 1, "evolution.generations", "must be at least 1");
        check(e.epochs_per_eval >= 1, "evolution.epochs_per_eval", "must be at least 1");
        check(e.minibatches_per_epoch >= 1, "evolution.minibatches_per_epoch", "must be at least 1");
        check(e.batch_size >= 1, "evolution.batch_size", "must be at least 1");
        check(
            e.learning_rate.is_finite() && e.learning_rate >= 0.0,
            "evolution.learning_rate",
            "must be finite and non-negative",
        );
        check((0.0..=1.0).contains(&e.infection_rate), "evolution.infection_rate", "must lie in [0, 1]");
        check(
            e.mutation_rate.is_none_or(|r| (0.0..=1.0).contains(&r)),
            "evolution.mutation_rate",
            "must lie in [0, 1]",
        );

        let t = &self.tasks;
        check(
            t.eval_fraction > 0.0 && t.eval_fraction < 1.0,
            "tasks.eval_fraction",
            "must lie strictly between 0 and 1",
        );
        check(
            !matches!(t.source, DatasetSource::Derived { .. } | DatasetSource::Same),
            "tasks.source.type",
            "`derived` and `same` are only valid for the destination",
        );
        for (field, src) in [("tasks.source", &t.source), ("tasks.destination", &t.destination)] {
            match src {
                DatasetSource::Blobs { classes, dim, per_class, spread, .. } => {
                    check(*classes >= 2, &format!("{field}.classes"), "must be at least 2");
                    check(*dim >= 1, &format!("{field}.dim"), "must be at least 1");
                    check(*per_class >= 1, &format!("{field}.per_class"), "must be at least 1");
                    check(spread.is_finite() && *spread >= 0.0, &format!("{field}.spread"), "must be finite and non-negative");
                }
                DatasetSource::Derived { relation: RelationKind::ClassSubset, classes, .. } => {
                    check(classes.is_some_and(|c| c >= 2), &format!("{field}.classes"), "class-subset needs classes >= 2");
                }
                _ => {}
            }
        }

        let p = &self.plan;
        check(p.iterations >= 1, "plan.iterations", "must be at least 1");
        check(p.source_budget != Some(0), "plan.source_budget", "must be at least 1");
        check(p.destination_budget != Some(0), "plan.destination_budget", "must be at least 1");
        issues
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn plan(&self) -> TransferPlan {
        let gens = self.evolution.generations;
        let mut plan = TransferPlan::standard(
            self.plan.iterations,
            self.plan.source_budget.unwrap_or(gens),
            self.plan.destination_budget.unwrap_or(gens),
            self.plan.scratch_baseline,
        );
        plan.consolidate_destination = self.plan.consolidate_destination;
        plan
    }

    /// Validates, loads or generates both datasets, and splits them into tasks.
    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let source_data = load_source(&self.tasks.source)?;
        let destination_data = match &self.tasks.destination {
            DatasetSource::Same => source_data.clone(),
            DatasetSource::Derived { relation, classes, seed } => {
                let relation = match relation {
                    RelationKind::LabelPermutation => Relation::LabelPermutation,
                    RelationKind::FixedRotation => Relation::FixedRotation,
                    RelationKind::ClassSubset => Relation::ClassSubset { classes: classes.unwrap_or(0) },
                };
                tasks::derive_related_task(&source_data, relation, *seed)?
            }
            other => load_source(other)?,
        };
        let mut issues = Vec::new();
        if source_data.dim() != destination_data.dim() {
            issues.push(format!(
                "tasks.destination: {} features, source has {}",
                destination_data.dim(),
                source_data.dim()
            ));
        }
        let input_dim = self.architecture.input_dim.unwrap_or(source_data.dim());
        if input_dim != source_data.dim() {
            issues.push(format!(
                "architecture.input_dim: {input_dim} does not match the {} dataset features",
                source_data.dim()
            ));
        }
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        let a = &self.architecture;
        let arch = Architecture::new(a.num_layers, a.modules_per_layer, a.neurons_per_module, a.max_path_width, input_dim)?;
        let e = &self.evolution;
        let params = EvolutionParams {
            population_size: e.population_size,
            generations: e.generations,
            epochs_per_eval: e.epochs_per_eval,
            minibatches_per_epoch: e.minibatches_per_epoch,
            batch_size: e.batch_size,
            learning_rate: e.learning_rate,
            infection_rate: e.infection_rate,
            mutation_rate: e.mutation_rate.unwrap_or_else(|| default_mutation_rate(&arch)),
        };
        params.validate()?;
        let frac = self.tasks.eval_fraction;
        let source = TaskSpec::from_dataset(SOURCE_TASK_ID, &source_data, frac, self.seed)?;
        let destination = TaskSpec::from_dataset(DESTINATION_TASK_ID, &destination_data, frac, self.seed.wrapping_add(1))?;
        for (field, task) in [("tasks.source", &source), ("tasks.destination", &destination)] {
            if task.train.len() < params.batch_size {
                return Err(Error::Config(vec![format!(
                    "{field}: training split has {} samples, fewer than evolution.batch_size {}",
                    task.train.len(),
                    params.batch_size
                )]));
            }
        }
        Ok(Resolved {
            arch,
            params,
            plan: self.plan(),
            source,
            destination,
        })
    }
}

fn load_source(src: &DatasetSource) -> Result<Dataset> {
    match src {
        DatasetSource::Blobs { classes, dim, per_class, spread, seed } => {
            tasks::make_blobs(*classes, *dim, *per_class, *spread, *seed)
        }
        DatasetSource::Csv { path, label_column, has_header } => tasks::load_csv(path, *label_column, *has_header),
        DatasetSource::Derived { .. } | DatasetSource::Same => Err(Error::Config(vec![
            "tasks.source.type: `derived` and `same` are only valid for the destination".into(),
        ])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "tasks": {
            "source": {"type": "blobs", "classes": 6, "dim": 100, "per_class": 20, "spread": 0.5, "seed": 1},
            "destination": {"type": "derived", "relation": "fixed-rotation", "seed": 2}
        }
    }"#;

    #[test]
    fn defaults_match_reference_settings() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.arch, Architecture::paper(100));
        assert_eq!(r.params, EvolutionParams::paper(&r.arch));
        assert_eq!(r.plan.iterations, 4);
        assert_eq!(r.plan.stages.len(), 3);
        assert_eq!(r.source.num_classes(), 6);
        assert_eq!(r.destination.dim(), 100);
        assert_eq!(r.source.eval.len(), 24);
    }

    #[test]
    fn field_level_diagnostics() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.evolution.batch_size = 0;
        c.architecture.max_path_width = 30;
        c.tasks.eval_fraction = 1.5;
        let issues = c.issues();
        assert!(issues.iter().any(|i| i.starts_with("evolution.batch_size")));
        assert!(issues.iter().any(|i| i.starts_with("architecture.max_path_width")));
        assert!(issues.iter().any(|i| i.starts_with("tasks.eval_fraction")));
        assert!(matches!(c.resolve(), Err(Error::Config(v)) if v.len() == 3));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replace("\"tasks\"", "\"seeed\": 3, \"tasks\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn input_dim_mismatch() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.architecture.input_dim = Some(20);
        match c.resolve() {
            Err(Error::Config(v)) => assert!(v[0].starts_with("architecture.input_dim")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn derived_source_rejected() {
        let text = MINIMAL.replace(r#""type": "blobs", "classes": 6, "dim": 100, "per_class": 20, "spread": 0.5, "seed": 1"#, r#""type": "same""#);
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert!(c.issues().iter().any(|i| i.starts_with("tasks.source.type")));
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
