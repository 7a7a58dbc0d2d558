//! PathNet-style transfer learning on small dense networks.
//!
//! A [`SuperNetwork`] holds an `L × M` grid of ReLU modules. A [`Genotype`]
//! picks up to `P` modules per layer; a microbial genetic algorithm
//! ([`evolution`]) searches over genotypes while SGD trains whichever path is
//! being evaluated. [`transfer`] freezes the best path found on one task and
//! evolves again on another, alongside a baseline trained from scratch.

pub mod error;
pub mod evolution;
pub mod genotype;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod supernet;
pub mod tasks;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};
pub use evolution::{
    evaluate_fitness, microbial_tournament, microbial_tournament_with, mutate, random_genotype, recombine, Evaluation,
    EvolutionParams, EvolutionState, FitnessEvaluator,
};
pub use genotype::Genotype;
pub use metrics::{MetricsRecord, Phase};
pub use rng::Rng;
pub use supernet::{Architecture, SuperNetwork};
pub use tasks::{derive_related_task, make_blobs, Dataset, Relation, TaskSpec};
pub use tensor::{Mask, Matrix};
pub use transfer::{consolidate, run_stage, run_transfer_experiment, ExperimentReport, ExperimentRunner, TransferPlan};
