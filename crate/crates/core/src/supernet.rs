//! The layered supernetwork: an `L × M` grid of small ReLU modules, averaged
//! between layers, with one unshared linear readout head per task.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::Genotype;
use crate::rng::Rng;
use crate::tensor::{affine, relu, sgd_step_in_place, softmax_cross_entropy, Mask, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub num_layers: usize,
    pub modules_per_layer: usize,
    pub neurons_per_module: usize,
    pub max_path_width: usize,
    pub input_dim: usize,
}

impl Architecture {
    pub fn new(
        num_layers: usize,
        modules_per_layer: usize,
        neurons_per_module: usize,
        max_path_width: usize,
        input_dim: usize,
    ) -> Result<Self> {
        let arch = Architecture {
            num_layers,
            modules_per_layer,
            neurons_per_module,
            max_path_width,
            input_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Three layers of twenty 20-neuron modules, at most five active per layer.
    pub fn paper(input_dim: usize) -> Self {
        Architecture {
            num_layers: 3,
            modules_per_layer: 20,
            neurons_per_module: 20,
            max_path_width: 5,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::Architecture("num_layers must be at least 1".into()));
        }
        if self.modules_per_layer == 0 {
            return Err(Error::Architecture("modules_per_layer must be at least 1".into()));
        }
        if self.neurons_per_module == 0 {
            return Err(Error::Architecture("neurons_per_module must be at least 1".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Architecture("input_dim must be at least 1".into()));
        }
        if self.max_path_width == 0 || self.max_path_width > self.modules_per_layer {
            return Err(Error::Architecture(format!(
                "max_path_width must lie in 1..={}, got {}",
                self.modules_per_layer, self.max_path_width
            )));
        }
        Ok(())
    }

    /// Input width of the modules in `layer`.
    pub fn module_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.neurons_per_module
        }
    }

    pub fn num_modules(&self) -> usize {
        self.num_layers * self.modules_per_layer
    }
}

/// Uniform fan-based initialisation: `U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out)))`.
fn init_weights(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_in(-limit, limit))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleUnit {
    pub weights: Matrix,
    pub bias: Matrix,
}

impl ModuleUnit {
    pub fn fresh(input_dim: usize, neurons: usize, rng: &mut Rng) -> Self {
        ModuleUnit {
            weights: init_weights(input_dim, neurons, rng),
            bias: Matrix::zeros(1, neurons),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutHead {
    pub task_id: String,
    pub num_classes: usize,
    pub weights: Matrix,
    pub bias: Matrix,
}

/// Intermediate values kept by [`SuperNetwork::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `inputs[l]` feeds layer `l`; `inputs[L]` feeds the head.
    inputs: Vec<Matrix>,
    /// Pre-activations per layer, in the genotype's gene order.
    pre_activations: Vec<Vec<Matrix>>,
}

impl ForwardCache {
    pub fn layer_output(&self, layer: usize) -> &Matrix {
        &self.inputs[layer + 1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModuleGrad {
    pub layer: usize,
    pub module: usize,
    pub weights: Matrix,
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub correct: usize,
    pub batch: usize,
    pub modules: Vec<ModuleGrad>,
    pub head_weights: Matrix,
    pub head_bias: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    pub correct: usize,
    pub batch: usize,
}

impl BatchStats {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.batch as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperNetwork {
    arch: Architecture,
    /// Row-major by layer: module `m` of layer `l` sits at `l * M + m`.
    modules: Vec<ModuleUnit>,
    heads: BTreeMap<String, ReadoutHead>,
    frozen: Vec<bool>,
}

impl SuperNetwork {
    pub fn new(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let mut modules = Vec::with_capacity(arch.num_modules());
        for l in 0..arch.num_layers {
            for _ in 0..arch.modules_per_layer {
                modules.push(ModuleUnit::fresh(
                    arch.module_input_dim(l),
                    arch.neurons_per_module,
                    rng,
                ));
            }
        }
        Ok(SuperNetwork {
            arch,
            modules,
            heads: BTreeMap::new(),
            frozen: vec![false; arch.num_modules()],
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    fn index(&self, layer: usize, module: usize) -> usize {
        assert!(layer < self.arch.num_layers && module < self.arch.modules_per_layer);
        layer * self.arch.modules_per_layer + module
    }

    pub fn module(&self, layer: usize, module: usize) -> &ModuleUnit {
        &self.modules[self.index(layer, module)]
    }

    pub fn module_mut(&mut self, layer: usize, module: usize) -> &mut ModuleUnit {
        let i = self.index(layer, module);
        &mut self.modules[i]
    }

    pub fn register_head(&mut self, task_id: &str, num_classes: usize, rng: &mut Rng) -> Result<()> {
        if self.heads.contains_key(task_id) {
            return Err(Error::DuplicateTask(task_id.to_owned()));
        }
        if num_classes == 0 {
            return Err(Error::Validation("a head needs at least one class".into()));
        }
        let n = self.arch.neurons_per_module;
        self.heads.insert(
            task_id.to_owned(),
            ReadoutHead {
                task_id: task_id.to_owned(),
                num_classes,
                weights: init_weights(n, num_classes, rng),
                bias: Matrix::zeros(1, num_classes),
            },
        );
        Ok(())
    }

    pub fn has_head(&self, task_id: &str) -> bool {
        self.heads.contains_key(task_id)
    }

    pub fn head(&self, task_id: &str) -> Result<&ReadoutHead> {
        self.heads
            .get(task_id)
            .ok_or_else(|| Error::UnknownTask(task_id.to_owned()))
    }

    pub fn head_mut(&mut self, task_id: &str) -> Result<&mut ReadoutHead> {
        self.heads
            .get_mut(task_id)
            .ok_or_else(|| Error::UnknownTask(task_id.to_owned()))
    }

    pub fn heads(&self) -> impl Iterator<Item = &ReadoutHead> {
        self.heads.values()
    }

    pub fn is_frozen(&self, layer: usize, module: usize) -> bool {
        self.frozen[self.index(layer, module)]
    }

    /// `L × M` mask, true where a module is frozen.
    pub fn frozen_mask(&self) -> Mask {
        Mask::from_vec(
            self.arch.num_layers,
            self.arch.modules_per_layer,
            self.frozen.clone(),
        )
        .expect("frozen grid matches architecture")
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|&&f| f).count()
    }

    /// Layers in which every module is frozen.
    pub fn fully_frozen_layers(&self) -> Vec<usize> {
        let m = self.arch.modules_per_layer;
        (0..self.arch.num_layers)
            .filter(|&l| self.frozen[l * m..(l + 1) * m].iter().all(|&f| f))
            .collect()
    }

    /// Marks every module on `genotype` as frozen. Freezes accumulate.
    pub fn freeze_path(&mut self, genotype: &Genotype) -> Result<()> {
        genotype.validate(&self.arch)?;
        for (l, m) in genotype.active() {
            let i = self.index(l, m);
            self.frozen[i] = true;
        }
        Ok(())
    }

    /// Redraws every unfrozen module from the initialiser. Frozen modules and
    /// heads are left untouched.
    pub fn reinit_unfrozen(&mut self, rng: &mut Rng) {
        let arch = self.arch;
        for l in 0..arch.num_layers {
            for m in 0..arch.modules_per_layer {
                let i = l * arch.modules_per_layer + m;
                if !self.frozen[i] {
                    self.modules[i] =
                        ModuleUnit::fresh(arch.module_input_dim(l), arch.neurons_per_module, rng);
                }
            }
        }
    }

    /// Checks shapes and finiteness, e.g. after deserialisation.
    pub fn check(&self) -> Result<()> {
        self.arch.validate()?;
        if self.modules.len() != self.arch.num_modules() || self.frozen.len() != self.arch.num_modules() {
            return Err(Error::Validation("module grid does not match architecture".into()));
        }
        let n = self.arch.neurons_per_module;
        for l in 0..self.arch.num_layers {
            for m in 0..self.arch.modules_per_layer {
                let unit = self.module(l, m);
                if unit.weights.shape() != (self.arch.module_input_dim(l), n) || unit.bias.shape() != (1, n) {
                    return Err(Error::Validation(format!("module ({l}, {m}) has the wrong shape")));
                }
            }
        }
        for (id, head) in &self.heads {
            if id != &head.task_id
                || head.weights.shape() != (n, head.num_classes)
                || head.bias.shape() != (1, head.num_classes)
            {
                return Err(Error::Validation(format!("head `{id}` is inconsistent")));
            }
        }
        Ok(())
    }

    fn check_inputs(&self, genotype: &Genotype, task_id: &str, x: &Matrix) -> Result<()> {
        genotype.validate(&self.arch)?;
        self.head(task_id)?;
        if x.cols() != self.arch.input_dim {
            return Err(Error::Shape {
                op: "forward input",
                left: x.shape(),
                right: (self.arch.input_dim, self.arch.neurons_per_module),
            });
        }
        Ok(())
    }

    /// Logits of `task_id`'s head for the path `genotype`.
    pub fn forward(&self, genotype: &Genotype, task_id: &str, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_inputs(genotype, task_id, x)?;
        let mut inputs = Vec::with_capacity(self.arch.num_layers + 1);
        let mut pre_activations = Vec::with_capacity(self.arch.num_layers);
        inputs.push(x.clone());
        for l in 0..self.arch.num_layers {
            let genes = genotype.layer(l);
            let h = &inputs[l];
            let mut sum = Matrix::zeros(h.rows(), self.arch.neurons_per_module);
            let mut zs = Vec::with_capacity(genes.len());
            for &m in genes {
                let unit = self.module(l, m);
                let z = affine(h, &unit.weights, &unit.bias)?;
                sum.add_assign(&relu(&z))?;
                zs.push(z);
            }
            inputs.push(sum.scale(1.0 / genes.len() as f64));
            pre_activations.push(zs);
        }
        let head = self.head(task_id)?;
        let logits = affine(&inputs[self.arch.num_layers], &head.weights, &head.bias)?;
        Ok((logits, ForwardCache { inputs, pre_activations }))
    }

    /// Mean loss and correct count on a batch, without touching parameters.
    pub fn evaluate(&self, genotype: &Genotype, task_id: &str, x: &Matrix, labels: &[usize]) -> Result<BatchStats> {
        let (logits, _) = self.forward(genotype, task_id, x)?;
        let (loss, _) = softmax_cross_entropy(&logits, labels)?;
        Ok(BatchStats {
            loss,
            correct: count_correct(&logits, labels),
            batch: labels.len(),
        })
    }

    /// Loss gradients for every active module and the task head.
    pub fn gradients(&self, genotype: &Genotype, task_id: &str, x: &Matrix, labels: &[usize]) -> Result<Gradients> {
        let (logits, cache) = self.forward(genotype, task_id, x)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let correct = count_correct(&logits, labels);
        let head = self.head(task_id)?;
        let top = self.arch.num_layers;
        let head_weights = cache.inputs[top].t_matmul(&dlogits)?;
        let head_bias = dlogits.sum_rows();
        let mut upstream = dlogits.matmul_t(&head.weights)?;

        let mut modules = Vec::new();
        for l in (0..top).rev() {
            let genes = genotype.layer(l);
            let share = 1.0 / genes.len() as f64;
            let input = &cache.inputs[l];
            let mut below = if l > 0 {
                Some(Matrix::zeros(input.rows(), input.cols()))
            } else {
                None
            };
            for (&m, z) in genes.iter().zip(&cache.pre_activations[l]) {
                let mut dz = upstream.clone();
                for (d, &zv) in dz.data_mut().iter_mut().zip(z.data()) {
                    *d = if zv > 0.0 { *d * share } else { 0.0 };
                }
                let unit = self.module(l, m);
                if let Some(below) = below.as_mut() {
                    below.add_assign(&dz.matmul_t(&unit.weights)?)?;
                }
                modules.push(ModuleGrad {
                    layer: l,
                    module: m,
                    weights: input.t_matmul(&dz)?,
                    bias: dz.sum_rows(),
                });
            }
            match below {
                Some(b) => upstream = b,
                None => break,
            }
        }
        Ok(Gradients {
            loss,
            correct,
            batch: labels.len(),
            modules,
            head_weights,
            head_bias,
        })
    }

    /// One SGD step on the path. Frozen modules pass gradient signal through
    /// but are never updated; modules off the path are never touched.
    pub fn backward_and_update(
        &mut self,
        genotype: &Genotype,
        task_id: &str,
        x: &Matrix,
        labels: &[usize],
        lr: f64,
    ) -> Result<BatchStats> {
        let grads = self.gradients(genotype, task_id, x, labels)?;
        for g in &grads.modules {
            if self.is_frozen(g.layer, g.module) {
                continue;
            }
            let unit = self.module_mut(g.layer, g.module);
            sgd_step_in_place(&mut unit.weights, &g.weights, lr, None)?;
            sgd_step_in_place(&mut unit.bias, &g.bias, lr, None)?;
        }
        let head = self.head_mut(task_id)?;
        sgd_step_in_place(&mut head.weights, &grads.head_weights, lr, None)?;
        sgd_step_in_place(&mut head.bias, &grads.head_bias, lr, None)?;
        Ok(BatchStats {
            loss: grads.loss,
            correct: grads.correct,
            batch: grads.batch,
        })
    }
}

fn count_correct(logits: &Matrix, labels: &[usize]) -> usize {
    logits
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_arch() -> Architecture {
        Architecture::new(2, 3, 4, 2, 3).unwrap()
    }

    fn toy_net(seed: u64) -> SuperNetwork {
        let mut rng = Rng::new(seed);
        let mut net = SuperNetwork::new(toy_arch(), &mut rng).unwrap();
        net.register_head("a", 3, &mut rng).unwrap();
        net
    }

    fn toy_batch(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = Rng::new(seed);
        let x = Matrix::from_fn(5, 3, |_, _| rng.uniform_in(-1.0, 1.0));
        let labels = (0..5).map(|_| rng.below(3)).collect();
        (x, labels)
    }

    #[test]
    fn paper_shapes() {
        let mut rng = Rng::new(0);
        let net = SuperNetwork::new(Architecture::paper(100), &mut rng).unwrap();
        assert_eq!(net.module(0, 0).weights.shape(), (100, 20));
        assert_eq!(net.module(0, 19).weights.shape(), (100, 20));
        assert_eq!(net.module(1, 5).weights.shape(), (20, 20));
        assert_eq!(net.module(2, 19).bias.shape(), (1, 20));
        assert_eq!(net.frozen_count(), 0);
        assert_eq!(net.heads().count(), 0);
    }

    #[test]
    fn architecture_bounds() {
        assert!(Architecture::new(0, 20, 20, 5, 10).is_err());
        assert!(Architecture::new(3, 0, 20, 1, 10).is_err());
        assert!(Architecture::new(3, 4, 20, 5, 10).is_err());
        assert!(Architecture::new(3, 4, 20, 0, 10).is_err());
        assert!(Architecture::new(3, 4, 20, 4, 10).is_ok());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        assert_eq!(toy_net(4), toy_net(4));
        assert_ne!(toy_net(4), toy_net(5));
        let net = toy_net(4);
        let limit = (6.0f64 / 7.0).sqrt();
        assert!(net.module(0, 1).weights.data().iter().all(|w| w.abs() <= limit));
        assert!(net.module(0, 1).bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn heads_are_independent() {
        let mut net = toy_net(1);
        let before = net.clone();
        let mut rng = Rng::new(2);
        net.register_head("emotion", 6, &mut rng).unwrap();
        assert_eq!(net.head("emotion").unwrap().weights.shape(), (4, 6));
        assert_eq!(net.head("a").unwrap(), before.head("a").unwrap());
        assert_eq!(net.module(1, 2), before.module(1, 2));
        assert!(matches!(net.register_head("a", 2, &mut rng), Err(Error::DuplicateTask(_))));
    }

    #[test]
    fn forward_errors() {
        let net = toy_net(1);
        let g = Genotype::new(vec![vec![0], vec![1]]).unwrap();
        let (x, _) = toy_batch(0);
        assert!(matches!(net.forward(&g, "missing", &x), Err(Error::UnknownTask(_))));
        let wide = Genotype::new(vec![vec![0, 1, 2], vec![1]]).unwrap();
        assert!(matches!(net.forward(&wide, "a", &x), Err(Error::Genotype(_))));
        assert!(net.forward(&g, "a", &Matrix::zeros(2, 7)).is_err());
    }

    #[test]
    fn averaging_hand_example() {
        // One layer, one input, one neuron; modules compute relu(2x) and relu(4x).
        let mut rng = Rng::new(0);
        let arch = Architecture::new(1, 2, 1, 2, 1).unwrap();
        let mut net = SuperNetwork::new(arch, &mut rng).unwrap();
        net.register_head("t", 1, &mut rng).unwrap();
        net.module_mut(0, 0).weights = Matrix::from_rows(&[[2.0]]).unwrap();
        net.module_mut(0, 1).weights = Matrix::from_rows(&[[4.0]]).unwrap();
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        let both = Genotype::new(vec![vec![0, 1]]).unwrap();
        let (_, cache) = net.forward(&both, "t", &x).unwrap();
        assert_eq!(cache.layer_output(0).data(), &[3.0]);
        let single = Genotype::new(vec![vec![1]]).unwrap();
        let (_, cache) = net.forward(&single, "t", &x).unwrap();
        assert_eq!(cache.layer_output(0).data(), &[4.0]);
    }

    #[test]
    fn identical_modules_average_to_one() {
        let mut net = toy_net(3);
        let copy = net.module(0, 0).clone();
        *net.module_mut(0, 2) = copy;
        let (x, _) = toy_batch(1);
        let one = Genotype::new(vec![vec![0], vec![1]]).unwrap();
        let two = Genotype::new(vec![vec![0, 2], vec![1]]).unwrap();
        let (a, _) = net.forward(&one, "a", &x).unwrap();
        let (b, _) = net.forward(&two, "a", &x).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let mut net = toy_net(7);
        let before = net.clone();
        let g = Genotype::new(vec![vec![0, 2], vec![1]]).unwrap();
        let (x, y) = toy_batch(2);
        let stats = net.backward_and_update(&g, "a", &x, &y, 0.0).unwrap();
        assert_eq!(net, before);
        assert_eq!(stats.loss, net.evaluate(&g, "a", &x, &y).unwrap().loss);
    }

    #[test]
    fn frozen_path_only_head_moves() {
        let mut net = toy_net(7);
        let g = Genotype::new(vec![vec![0, 2], vec![1]]).unwrap();
        net.freeze_path(&g).unwrap();
        let before = net.clone();
        let (x, y) = toy_batch(2);
        net.backward_and_update(&g, "a", &x, &y, 0.5).unwrap();
        for l in 0..2 {
            for m in 0..3 {
                assert_eq!(net.module(l, m), before.module(l, m));
            }
        }
        assert_ne!(net.head("a").unwrap(), before.head("a").unwrap());
    }

    #[test]
    fn freeze_accumulates() {
        let mut net = toy_net(0);
        let a = Genotype::new(vec![vec![0], vec![1, 2]]).unwrap();
        let b = Genotype::new(vec![vec![1, 2], vec![2]]).unwrap();
        net.freeze_path(&a).unwrap();
        let once = net.frozen_mask();
        net.freeze_path(&a).unwrap();
        assert_eq!(net.frozen_mask(), once);
        net.freeze_path(&b).unwrap();
        assert_eq!(net.frozen_mask().data(), &[true, true, true, false, true, true]);
        assert_eq!(net.fully_frozen_layers(), vec![0]);
    }

    #[test]
    fn reinit_respects_freeze() {
        let mut net = toy_net(0);
        let g = Genotype::new(vec![vec![0], vec![1, 2]]).unwrap();
        net.freeze_path(&g).unwrap();
        let before = net.clone();
        net.reinit_unfrozen(&mut Rng::new(99));
        for l in 0..2 {
            for m in 0..3 {
                if g.contains(l, m) {
                    assert_eq!(net.module(l, m), before.module(l, m));
                } else {
                    assert_ne!(net.module(l, m).weights, before.module(l, m).weights);
                }
            }
        }
        assert_eq!(net.head("a").unwrap(), before.head("a").unwrap());

        let all = Genotype::new(vec![vec![0, 1], vec![2]]).unwrap();
        net.freeze_path(&all).unwrap();
        net.freeze_path(&Genotype::new(vec![vec![2], vec![0, 1]]).unwrap()).unwrap();
        let frozen = net.clone();
        net.reinit_unfrozen(&mut Rng::new(5));
        assert_eq!(net, frozen);
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let net = toy_net(12);
        let text = serde_json::to_string(&net).unwrap();
        let back: SuperNetwork = serde_json::from_str(&text).unwrap();
        back.check().unwrap();
        for l in 0..2 {
            for m in 0..3 {
                let a = net.module(l, m).weights.data().iter().map(|v| v.to_bits());
                let b = back.module(l, m).weights.data().iter().map(|v| v.to_bits());
                assert!(a.eq(b));
            }
        }
        assert_eq!(back, net);
    }
}
