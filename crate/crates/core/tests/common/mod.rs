#![allow(dead_code)]

pub mod dense_graphs;
pub mod gradients;
pub mod ridge;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ssimv_core::dataset::{generate_mask, generate_split, MaskSpec, MultiViewDataset, SplitSpec};
use ssimv_core::solver::{evaluate_objective, Trainer};

/// Three views of 12 instances, two classes, 30% of each view missing and
/// half of the instances labeled.
pub fn toy_dataset(seed: u64) -> MultiViewDataset {
    let n = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let views = [3usize, 2, 4]
        .iter()
        .map(|&d| {
            Array2::from_shape_fn((n, d), |(i, j)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + if j == labels[i] { 1.5 } else { 0.0 }
            })
        })
        .collect();
    let ds = MultiViewDataset::complete(views, labels, 2)
        .unwrap()
        .normalized();
    let ds = generate_mask(&ds, &MaskSpec::uniform(0.3, 3, seed)).unwrap();
    generate_split(
        &ds,
        &SplitSpec {
            labeled_rate: 0.5,
            seed,
            stratified: true,
        },
    )
    .unwrap()
}

pub fn total(trainer: &Trainer) -> f64 {
    evaluate_objective(
        &trainer.problem,
        &trainer.state,
        &trainer.graphs,
        &trainer.hp,
    )
    .unwrap()
    .total
}

pub fn accuracy(pred: &[usize], ds: &MultiViewDataset) -> f64 {
    let hits = pred
        .iter()
        .zip(ds.unlabeled_idx())
        .filter(|(p, &i)| Some(**p) == ds.truth()[i])
        .count();
    hits as f64 / pred.len() as f64
}
