use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssimv_core::dataset::{generate_mask, MaskSpec, MultiViewDataset};
use ssimv_core::impute::{knn_impute, ImputeSpec, Weighting};

/// Direct loop over every (instance, view) cell: rank all donors observed in
/// the view by mean squared difference over shared views, average the top k.
fn brute_force(ds: &MultiViewDataset, k: usize, weighting: Weighting) -> Vec<Array2<f64>> {
    let n = ds.n_instances();
    let nv = ds.n_views();
    let mut out: Vec<Array2<f64>> = ds.views().to_vec();
    for v in 0..nv {
        let x = ds.view(v);
        for i in 0..n {
            if ds.is_observed(i, v) {
                continue;
            }
            let mut donors = Vec::new();
            for j in 0..n {
                if j == i || !ds.is_observed(j, v) {
                    continue;
                }
                let mut dist = 0.0;
                let mut shared = 0;
                for u in 0..nv {
                    if ds.is_observed(i, u) && ds.is_observed(j, u) {
                        let xu = ds.view(u);
                        let mut s = 0.0;
                        for c in 0..xu.ncols() {
                            s += (xu[[i, c]] - xu[[j, c]]).powi(2);
                        }
                        dist += s / xu.ncols() as f64;
                        shared += 1;
                    }
                }
                if shared > 0 {
                    donors.push((dist, j));
                }
            }
            donors.sort_by(|a, b| a.partial_cmp(b).unwrap());
            donors.truncate(k);
            let row: Vec<f64> = if donors.is_empty() {
                (0..x.ncols())
                    .map(|c| {
                        let obs: Vec<f64> = (0..n)
                            .filter(|&r| ds.is_observed(r, v))
                            .map(|r| x[[r, c]])
                            .collect();
                        obs.iter().sum::<f64>() / obs.len() as f64
                    })
                    .collect()
            } else {
                let w: Vec<f64> = match weighting {
                    Weighting::Uniform => vec![1.0; donors.len()],
                    Weighting::InverseDistance if donors.iter().any(|d| d.0 == 0.0) => donors
                        .iter()
                        .map(|d| if d.0 == 0.0 { 1.0 } else { 0.0 })
                        .collect(),
                    Weighting::InverseDistance => donors.iter().map(|d| 1.0 / d.0.sqrt()).collect(),
                };
                let total: f64 = w.iter().sum();
                (0..x.ncols())
                    .map(|c| {
                        donors
                            .iter()
                            .zip(&w)
                            .map(|(d, w)| w * x[[d.1, c]])
                            .sum::<f64>()
                            / total
                    })
                    .collect()
            };
            for (c, val) in row.into_iter().enumerate() {
                out[v][[i, c]] = val;
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn knn_matches_brute_force(n in 4usize..30, rate in 0.1f64..0.6, k in 1usize..8, seed in 0u64..1000, inverse in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let views = [2usize, 3, 1]
            .iter()
            .map(|&d| Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0)))
            .collect();
        let ds = MultiViewDataset::complete(views, (0..n).map(|i| i % 2).collect(), 2).unwrap();
        let ds = generate_mask(&ds, &MaskSpec::uniform(rate, 3, seed)).unwrap();
        let weighting = if inverse { Weighting::InverseDistance } else { Weighting::Uniform };
        let got = knn_impute(&ds, &ImputeSpec { k, weighting }).unwrap();
        prop_assert!(got.is_complete());
        let expected = brute_force(&ds, k, weighting);
        for (a, b) in got.views().iter().zip(&expected) {
            prop_assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs())));
        }
    }
}

#[test]
fn rejects_zero_neighbours() {
    let ds = MultiViewDataset::complete(vec![Array2::zeros((3, 1))], vec![0, 1, 0], 2).unwrap();
    assert!(knn_impute(
        &ds,
        &ImputeSpec {
            k: 0,
            weighting: Weighting::Uniform
        }
    )
    .is_err());
}
