//! Pathway evolution with the microbial genetic algorithm.
//!
//! Each generation draws two distinct genotypes, trains and scores both on the
//! shared network, and overwrites the weaker one with a copy of the stronger
//! that has been partially infected by it and then mutated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::Genotype;
use crate::metrics::{MetricsRecord, RecordContext};
use crate::rng::Rng;
use crate::supernet::{Architecture, SuperNetwork};
use crate::tasks::{BatchStream, TaskSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub population_size: usize,
    pub generations: usize,
    pub epochs_per_eval: usize,
    pub minibatches_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub infection_rate: f64,
    pub mutation_rate: f64,
}

impl EvolutionParams {
    /// Population 20, 1000 generations, 50 epochs of 50 mini-batches of 16 at
    /// learning rate 0.02. Infection rate 0.5 and mutation rate `1/(L·P)`.
    pub fn paper(arch: &Architecture) -> Self {
        EvolutionParams {
            population_size: 20,
            generations: 1000,
            epochs_per_eval: 50,
            minibatches_per_epoch: 50,
            batch_size: 16,
            learning_rate: 0.02,
            infection_rate: 0.5,
            mutation_rate: default_mutation_rate(arch),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("population_size", self.population_size),
            ("generations", self.generations),
            ("epochs_per_eval", self.epochs_per_eval),
            ("minibatches_per_epoch", self.minibatches_per_epoch),
            ("batch_size", self.batch_size),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::Validation(format!("{name} must be at least 1")));
            }
        }
        for (name, p) in [("infection_rate", self.infection_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Validation(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

pub fn default_mutation_rate(arch: &Architecture) -> f64 {
    1.0 / (arch.num_layers * arch.max_path_width) as f64
}

/// Per layer: a width uniform in `1..=P`, then that many distinct modules.
pub fn random_genotype(arch: &Architecture, rng: &mut Rng) -> Genotype {
    let layers = (0..arch.num_layers)
        .map(|_| {
            let width = 1 + rng.below(arch.max_path_width);
            rng.distinct(arch.modules_per_layer, width)
        })
        .collect();
    Genotype::new(layers).expect("sampled indices are distinct")
}

/// Layer-granular infection: each layer of `loser` is replaced by the
/// winner's with probability `infection_rate`.
pub fn recombine(winner: &Genotype, loser: &Genotype, infection_rate: f64, rng: &mut Rng) -> Genotype {
    assert_eq!(winner.num_layers(), loser.num_layers(), "genotypes differ in depth");
    let layers = winner
        .layers()
        .iter()
        .zip(loser.layers())
        .map(|(w, l)| if rng.chance(infection_rate) { w.clone() } else { l.clone() })
        .collect();
    Genotype::new(layers).expect("layers come from valid genotypes")
}

/// Width-preserving point mutation. Each gene is redrawn with probability
/// `mutation_rate`; a draw that hits an index already in the layer is retried
/// up to `M` times, after which the gene is kept.
pub fn mutate(g: &Genotype, mutation_rate: f64, arch: &Architecture, rng: &mut Rng) -> Genotype {
    let m = arch.modules_per_layer;
    let layers = g
        .layers()
        .iter()
        .map(|genes| {
            let mut genes = genes.clone();
            for pos in 0..genes.len() {
                if !rng.chance(mutation_rate) {
                    continue;
                }
                for _ in 0..m {
                    let candidate = rng.below(m);
                    if !genes.contains(&candidate) {
                        genes[pos] = candidate;
                        break;
                    }
                }
            }
            genes
        })
        .collect();
    Genotype::new(layers).expect("mutation keeps indices distinct")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub loss: f64,
    pub accuracy: f64,
}

/// Outcome of training one path for its evaluation window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Fraction of training samples classified correctly, accumulated over every batch.
    pub fitness: f64,
    pub mean_loss: f64,
    pub trace: Vec<EpochTrace>,
}

/// Anything that can score a genotype. The network-backed implementation is
/// [`PathTrainer`]; tests plug in cheap deterministic stubs.
pub trait FitnessEvaluator {
    fn evaluate(&mut self, genotype: &Genotype, rng: &mut Rng) -> Result<Evaluation>;
}

impl<F> FitnessEvaluator for F
where
    F: FnMut(&Genotype, &mut Rng) -> Result<Evaluation>,
{
    fn evaluate(&mut self, genotype: &Genotype, rng: &mut Rng) -> Result<Evaluation> {
        self(genotype, rng)
    }
}

/// Trains paths in place on the shared network.
pub struct PathTrainer<'a> {
    pub net: &'a mut SuperNetwork,
    pub task: &'a TaskSpec,
    pub params: &'a EvolutionParams,
}

impl FitnessEvaluator for PathTrainer<'_> {
    fn evaluate(&mut self, genotype: &Genotype, rng: &mut Rng) -> Result<Evaluation> {
        evaluate_fitness(self.net, genotype, self.task, self.params, rng)
    }
}

/// Trains `genotype` for `epochs_per_eval × minibatches_per_epoch` SGD steps
/// and returns the accumulated training accuracy as its fitness.
pub fn evaluate_fitness(
    net: &mut SuperNetwork,
    genotype: &Genotype,
    task: &TaskSpec,
    params: &EvolutionParams,
    rng: &mut Rng,
) -> Result<Evaluation> {
    params.validate()?;
    let mut stream = BatchStream::new(&task.train, params.batch_size, rng)?;
    let mut correct = 0usize;
    let mut seen = 0usize;
    let mut loss_total = 0.0;
    let mut trace = Vec::with_capacity(params.epochs_per_eval);
    for _ in 0..params.epochs_per_eval {
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        let mut epoch_seen = 0usize;
        for _ in 0..params.minibatches_per_epoch {
            let (x, labels) = stream.next().expect("batch stream is endless");
            let stats = net.backward_and_update(genotype, &task.task_id, &x, &labels, params.learning_rate)?;
            epoch_loss += stats.loss;
            epoch_correct += stats.correct;
            epoch_seen += stats.batch;
        }
        trace.push(EpochTrace {
            loss: epoch_loss / params.minibatches_per_epoch as f64,
            accuracy: epoch_correct as f64 / epoch_seen as f64,
        });
        loss_total += epoch_loss;
        correct += epoch_correct;
        seen += epoch_seen;
    }
    Ok(Evaluation {
        fitness: correct as f64 / seen as f64,
        mean_loss: loss_total / (params.epochs_per_eval * params.minibatches_per_epoch) as f64,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestPath {
    pub genotype: Genotype,
    pub fitness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub population: Vec<Genotype>,
    pub rng: Rng,
    pub tournaments_completed: u64,
    pub paths_evaluated: u64,
    pub best_seen: Option<BestPath>,
}

impl EvolutionState {
    /// A random population of `params.population_size` genotypes. `rng` is
    /// moved into the state and drives everything the run does afterwards.
    pub fn new(arch: &Architecture, params: &EvolutionParams, mut rng: Rng) -> Self {
        let population = (0..params.population_size)
            .map(|_| random_genotype(arch, &mut rng))
            .collect();
        EvolutionState {
            population,
            rng,
            tournaments_completed: 0,
            paths_evaluated: 0,
            best_seen: None,
        }
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.best_seen.as_ref().map(|b| b.fitness)
    }

    fn observe(&mut self, genotype: &Genotype, fitness: f64) {
        if self.best_seen.as_ref().is_none_or(|b| fitness > b.fitness) {
            self.best_seen = Some(BestPath {
                genotype: genotype.clone(),
                fitness,
            });
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TournamentResult {
    /// Population indices in draw order.
    pub drawn: [usize; 2],
    pub winner_index: usize,
    pub loser_index: usize,
    pub winner_fitness: f64,
    pub loser_fitness: f64,
    pub new_loser: Genotype,
    /// Evaluations in draw order.
    pub evaluations: [Evaluation; 2],
    pub genotypes: [Genotype; 2],
}

/// One generation against an arbitrary fitness source. On equal fitness the
/// second-drawn genotype loses.
pub fn microbial_tournament_with(
    state: &mut EvolutionState,
    arch: &Architecture,
    params: &EvolutionParams,
    evaluator: &mut impl FitnessEvaluator,
) -> Result<TournamentResult> {
    let n = state.population.len();
    if n < 2 {
        return Err(Error::Validation(format!("a tournament needs two genotypes, population has {n}")));
    }
    let first = state.rng.below(n);
    let mut second = state.rng.below(n - 1);
    if second >= first {
        second += 1;
    }
    let genotypes = [state.population[first].clone(), state.population[second].clone()];
    let mut evaluations = Vec::with_capacity(2);
    for g in &genotypes {
        let eval = evaluator.evaluate(g, &mut state.rng)?;
        if !(0.0..=1.0).contains(&eval.fitness) {
            return Err(Error::Validation(format!("fitness {} outside [0, 1]", eval.fitness)));
        }
        state.paths_evaluated += 1;
        state.observe(g, eval.fitness);
        evaluations.push(eval);
    }
    let evaluations: [Evaluation; 2] = evaluations.try_into().expect("two evaluations");
    let (winner, loser) = if evaluations[0].fitness >= evaluations[1].fitness {
        (0, 1)
    } else {
        (1, 0)
    };
    let infected = recombine(&genotypes[winner], &genotypes[loser], params.infection_rate, &mut state.rng);
    let new_loser = mutate(&infected, params.mutation_rate, arch, &mut state.rng);
    let indices = [first, second];
    state.population[indices[loser]] = new_loser.clone();
    state.tournaments_completed += 1;
    Ok(TournamentResult {
        drawn: indices,
        winner_index: indices[winner],
        loser_index: indices[loser],
        winner_fitness: evaluations[winner].fitness,
        loser_fitness: evaluations[loser].fitness,
        new_loser,
        evaluations,
        genotypes,
    })
}

pub fn microbial_tournament(
    state: &mut EvolutionState,
    net: &mut SuperNetwork,
    task: &TaskSpec,
    params: &EvolutionParams,
) -> Result<TournamentResult> {
    let arch = *net.arch();
    let mut trainer = PathTrainer { net, task, params };
    microbial_tournament_with(state, &arch, params, &mut trainer)
}

/// Rows for the two path evaluations of a tournament.
pub fn tournament_records(result: &TournamentResult, generation: u64, ctx: &RecordContext, wallclock_ms: Option<u64>) -> [MetricsRecord; 2] {
    [0u8, 1].map(|i| MetricsRecord {
        phase: ctx.phase,
        iteration: ctx.iteration,
        generation,
        path_index: Some(i),
        genotype: result.genotypes[i as usize].clone(),
        fitness: result.evaluations[i as usize].fitness,
        mean_train_loss: result.evaluations[i as usize].mean_loss,
        eval_accuracy: None,
        wallclock_ms,
        seed: ctx.seed,
    })
}

/// Runs `budget` tournaments, reporting every path evaluation to `hook`.
pub fn evolve(
    net: &mut SuperNetwork,
    task: &TaskSpec,
    params: &EvolutionParams,
    state: &mut EvolutionState,
    budget: usize,
    ctx: &RecordContext,
    mut hook: impl FnMut(&MetricsRecord),
) -> Result<Vec<MetricsRecord>> {
    let mut rows = Vec::with_capacity(2 * budget);
    for _ in 0..budget {
        let generation = state.tournaments_completed;
        let started = ctx.record_wallclock.then(std::time::Instant::now);
        let result = microbial_tournament(state, net, task, params)?;
        let wallclock = started.map(|t| t.elapsed().as_millis() as u64);
        for row in tournament_records(&result, generation, ctx, wallclock) {
            hook(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}
