//! Sampling statistics of the genotype operators against hand-derived
//! distributions.

use pathnet_core::evolution::{mutate, random_genotype, recombine};
use pathnet_core::{Architecture, Genotype, Rng};

/// Upper 1% point of the chi-square distribution for 4 and 18 degrees of freedom.
const CHI2_99_DF4: f64 = 13.277;
const CHI2_99_DF18: f64 = 34.805;

fn chi_square(counts: &[usize], expected: f64) -> f64 {
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

#[test]
fn path_width_is_uniform() {
    let arch = Architecture::new(1, 20, 20, 5, 4).unwrap();
    let mut rng = Rng::new(11);
    let mut counts = [0usize; 5];
    for _ in 0..10_000 {
        let g = random_genotype(&arch, &mut rng);
        counts[g.layer(0).len() - 1] += 1;
    }
    let stat = chi_square(&counts, 2000.0);
    assert!(stat < CHI2_99_DF4, "chi-square {stat} for widths {counts:?}");
}

#[test]
fn infection_picks_each_layer_independently() {
    let winner: Genotype = "0:0|1:0|2:0".parse().unwrap();
    let loser: Genotype = "0:1|1:1|2:1".parse().unwrap();
    let mut rng = Rng::new(12);
    let trials = 10_000;
    let mut from_winner = [0usize; 3];
    let mut joint = [0usize; 8];
    for _ in 0..trials {
        let child = recombine(&winner, &loser, 0.5, &mut rng);
        let mut code = 0;
        for (l, hits) in from_winner.iter_mut().enumerate() {
            if child.layer(l) == [0] {
                *hits += 1;
                code |= 1 << l;
            }
        }
        joint[code] += 1;
    }
    for hits in from_winner {
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 0.02, "layer source frequency {freq}");
    }
    // Independence: all eight winner/loser patterns are equally likely.
    let stat = chi_square(&joint, trials as f64 / 8.0);
    assert!(stat < 18.475, "chi-square {stat} over patterns {joint:?}");
}

#[test]
fn width_one_mutation_is_uniform_over_other_modules() {
    let arch = Architecture::new(1, 20, 4, 1, 4).unwrap();
    let mut rng = Rng::new(13);
    let start: Genotype = "0:7".parse().unwrap();
    let mut counts = [0usize; 20];
    let draws = 20_000;
    for _ in 0..draws {
        let g = mutate(&start, 1.0, &arch, &mut rng);
        counts[g.layer(0)[0]] += 1;
    }
    assert_eq!(counts[7], 0, "a draw equal to the current module counts as a collision");
    let others: Vec<usize> = counts.iter().enumerate().filter(|&(i, _)| i != 7).map(|(_, &c)| c).collect();
    let stat = chi_square(&others, draws as f64 / 19.0);
    assert!(stat < CHI2_99_DF18, "chi-square {stat} for {counts:?}");
}

#[test]
fn default_mutation_rate_changes_one_gene_per_genotype_on_average() {
    let arch = Architecture::paper(4);
    let rate = pathnet_core::evolution::default_mutation_rate(&arch);
    assert_eq!(rate, 1.0 / 15.0);
    let full: Genotype = "0:0,1,2,3,4|1:0,1,2,3,4|2:0,1,2,3,4".parse().unwrap();
    let mut rng = Rng::new(14);
    let trials = 20_000;
    let mut changed = 0usize;
    for _ in 0..trials {
        let g = mutate(&full, rate, &arch, &mut rng);
        changed += g
            .layers()
            .iter()
            .zip(full.layers())
            .map(|(a, b)| a.iter().filter(|v| !b.contains(v)).count())
            .sum::<usize>();
    }
    // Fifteen genes at rate 1/15: one expected change, minus the rare kept gene.
    let mean = changed as f64 / trials as f64;
    assert!((mean - 1.0).abs() < 0.03, "mean changed genes {mean}");
}
