use pathnet_core::tensor::finite_diff_grad;
use pathnet_core::{Architecture, Genotype, Matrix, Rng, SuperNetwork};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn two_layer_toy_net_matches_finite_differences() {
    let arch = Architecture::new(2, 2, 3, 2, 3).unwrap();
    let mut rng = Rng::new(41);
    let mut net = SuperNetwork::new(arch, &mut rng).unwrap();
    net.register_head("t", 3, &mut rng).unwrap();
    for l in 0..2 {
        for m in 0..2 {
            for v in net.module_mut(l, m).bias.data_mut() {
                *v = 0.2 * rng.normal();
            }
        }
    }
    let g: Genotype = "0:0,1|1:0,1".parse().unwrap();
    let x = Matrix::from_fn(4, 3, |_, _| rng.normal());
    let labels = [0, 2, 1, 2];
    let grads = net.gradients(&g, "t", &x, &labels).unwrap();
    let mut worst = 0.0f64;
    for mg in &grads.modules {
        let numeric = finite_diff_grad(
            |w| {
                let mut probe = net.clone();
                probe.module_mut(mg.layer, mg.module).weights = w.clone();
                probe.evaluate(&g, "t", &x, &labels).unwrap().loss
            },
            &net.module(mg.layer, mg.module).weights,
            1e-5,
        );
        for (a, n) in mg.weights.data().iter().zip(numeric.data()) {
            worst = worst.max(rel_err(*a, *n));
        }
        let numeric = finite_diff_grad(
            |b| {
                let mut probe = net.clone();
                probe.module_mut(mg.layer, mg.module).bias = b.clone();
                probe.evaluate(&g, "t", &x, &labels).unwrap().loss
            },
            &net.module(mg.layer, mg.module).bias,
            1e-5,
        );
        for (a, n) in mg.bias.data().iter().zip(numeric.data()) {
            worst = worst.max(rel_err(*a, *n));
        }
    }
    assert_eq!(grads.modules.len(), 4);
    assert!(worst < 1e-4, "max relative error {worst}");
}

/// Sample mean and variance of every weight against Glorot-uniform moments:
/// mean 0 and variance limit² / 3.
#[test]
fn reinitialised_network_is_statistically_fresh() {
    let arch = Architecture::paper(100);
    let mut rng = Rng::new(42);
    let mut net = SuperNetwork::new(arch, &mut rng).unwrap();
    for l in 0..3 {
        for m in 0..20 {
            for v in net.module_mut(l, m).weights.data_mut() {
                *v = 5.0;
            }
        }
    }
    net.reinit_unfrozen(&mut rng);
    for l in 0..3 {
        let fan_in = arch.module_input_dim(l) as f64;
        let limit = (6.0 / (fan_in + 20.0)).sqrt();
        let values: Vec<f64> = (0..20).flat_map(|m| net.module(l, m).weights.data().to_vec()).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected_var = limit * limit / 3.0;
        // Standard error of the mean is sqrt(var / n); allow five of them.
        assert!(mean.abs() < 5.0 * (expected_var / n).sqrt(), "layer {l} mean {mean}");
        // Uniform variance estimator has relative sd sqrt(0.8 / n).
        assert!((var / expected_var - 1.0).abs() < 5.0 * (0.8 / n).sqrt(), "layer {l} variance {var}");
        assert!(values.iter().all(|v| v.abs() <= limit));
        assert!((0..20).all(|m| net.module(l, m).bias.data().iter().all(|&b| b == 0.0)));
    }
}

#[test]
fn head_shape_for_six_classes() {
    let arch = Architecture::paper(100);
    let mut rng = Rng::new(43);
    let mut net = SuperNetwork::new(arch, &mut rng).unwrap();
    net.register_head("emotions", 6, &mut rng).unwrap();
    assert_eq!(net.head("emotions").unwrap().weights.shape(), (20, 6));
    assert_eq!(net.module(0, 0).weights.shape(), (100, 20));
    assert_eq!(net.module(2, 19).weights.shape(), (20, 20));
}
