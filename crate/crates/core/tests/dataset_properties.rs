use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssimv_core::dataset::{
    generate_mask, generate_split, load_dataset, write_matrix, LoadOptions, MaskPolicy, MaskSpec,
    MultiViewDataset, SplitSpec,
};

fn random_complete(n: usize, dims: &[usize], classes: usize, seed: u64) -> MultiViewDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let views = dims
        .iter()
        .map(|&d| Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0)))
        .collect();
    MultiViewDataset::complete(views, (0..n).map(|i| i % classes).collect(), classes).unwrap()
}

/// `feasible[a][b]`: some pair of subsets of sizes a and b of ten instances
/// leaves every instance in at least one view, found by enumerating all of them.
fn brute_force_feasibility() -> Vec<Vec<bool>> {
    let n = 10;
    let mut feasible = vec![vec![false; n + 1]; n + 1];
    for m0 in 0u32..1 << n {
        for m1 in 0u32..1 << n {
            if m0 & m1 == 0 {
                feasible[m0.count_ones() as usize][m1.count_ones() as usize] = true;
            }
        }
    }
    feasible
}

#[test]
fn mask_feasibility_matches_exhaustive_search() {
    let feasible = brute_force_feasibility();
    let ds = random_complete(10, &[2, 3], 2, 0);
    for a in 0..10 {
        for b in 0..10 {
            let spec = MaskSpec {
                missing_rates: vec![a as f64 / 10.0, b as f64 / 10.0],
                seed: (a * 10 + b) as u64,
                policy: MaskPolicy::Sequential,
            };
            let out = generate_mask(&ds, &spec);
            assert_eq!(out.is_ok(), feasible[a][b], "{a} and {b} removals");
            if let Ok(m) = out {
                let mask = m.mask();
                assert_eq!(mask.column(0).iter().filter(|&&o| !o).count(), a);
                assert_eq!(mask.column(1).iter().filter(|&&o| !o).count(), b);
            }
        }
    }
    // the example from the protocol: 90% in both of two views is infeasible
    assert!(generate_mask(&ds, &MaskSpec::uniform(0.9, 2, 1)).is_err());
}

#[test]
fn half_missing_in_two_views_of_hundred() {
    let ds = random_complete(100, &[3, 3], 2, 1);
    let m = generate_mask(&ds, &MaskSpec::uniform(0.5, 2, 7)).unwrap();
    for v in 0..2 {
        assert_eq!(m.mask().column(v).iter().filter(|&&o| !o).count(), 50);
    }
    assert!(m.mask().rows().into_iter().all(|r| r.iter().any(|&o| o)));
}

#[test]
fn split_of_dermatology_sized_data() {
    let ds = random_complete(366, &[22, 12], 6, 2);
    let s = generate_split(
        &ds,
        &SplitSpec {
            labeled_rate: 0.3,
            seed: 3,
            stratified: true,
        },
    )
    .unwrap();
    assert_eq!(s.labeled_idx().len(), 110);
    assert_eq!(s.unlabeled_idx().len(), 256);
}

#[test]
fn load_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let ds = random_complete(366, &[22, 12], 6, 4);
    let paths: Vec<_> = (0..2)
        .map(|v| dir.path().join(format!("v{v}.csv")))
        .collect();
    for (v, p) in paths.iter().enumerate() {
        write_matrix(p, ds.view(v)).unwrap();
    }
    let labels = dir.path().join("y.csv");
    let text: String = ds
        .truth()
        .iter()
        .map(|t| format!("{}\n", t.unwrap()))
        .collect();
    std::fs::write(&labels, text).unwrap();
    let raw = load_dataset(
        &paths,
        &labels,
        None,
        &LoadOptions {
            class_count: None,
            raw: true,
        },
    )
    .unwrap();
    assert_eq!(
        (raw.n_views(), raw.n_instances(), raw.class_count()),
        (2, 366, 6)
    );
    assert_eq!(raw.view_dims(), vec![22, 12]);
    assert!(raw.is_complete());
    assert_eq!(raw.views(), ds.views());

    let norm = load_dataset(&paths, &labels, None, &LoadOptions::default()).unwrap();
    for v in 0..2 {
        for col in norm.view(v).columns() {
            let mean = col.sum() / 366.0;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 366.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        }
    }

    // mismatched row count and a non-numeric cell are rejected
    std::fs::write(&paths[1], "1,2\n3,4\n").unwrap();
    assert!(load_dataset(&paths, &labels, None, &LoadOptions::default()).is_err());
    std::fs::write(&paths[1], "1,x\n").unwrap();
    assert!(load_dataset(&paths, &labels, None, &LoadOptions::default()).is_err());
}

#[test]
fn unlabeled_marker_and_mask_file() {
    let dir = tempfile::tempdir().unwrap();
    let v0 = dir.path().join("a.csv");
    let v1 = dir.path().join("b.csv");
    std::fs::write(&v0, "1,2\n3,4\n5,6\n7,8\n").unwrap();
    std::fs::write(&v1, "1\n2\n3\n4\n").unwrap();
    let y = dir.path().join("y.csv");
    std::fs::write(&y, "0\n1\n-1\n-1\n").unwrap();
    let m = dir.path().join("m.csv");
    std::fs::write(&m, "1,1\n1,0\n0,1\n1,1\n").unwrap();
    let ds = load_dataset(&[&v0, &v1], &y, Some(&m), &LoadOptions::default()).unwrap();
    assert_eq!(ds.labeled_idx(), &[0, 1]);
    assert_eq!(ds.unlabeled_idx(), &[2, 3]);
    assert!(ds.view(1).row(1).iter().all(|&x| x == 0.0));
    assert!(ds.view(0).row(2).iter().all(|&x| x == 0.0));
    std::fs::write(&m, "1,1\n0,0\n1,1\n1,1\n").unwrap();
    assert!(load_dataset(&[&v0, &v1], &y, Some(&m), &LoadOptions::default()).is_err());
}

proptest! {
    #[test]
    fn masks_keep_every_instance_observed(
        n in 5usize..60,
        rates in prop::collection::vec(0.0f64..0.7, 2..4),
        seed in 0u64..1000,
        independent in any::<bool>(),
    ) {
        let dims = vec![2; rates.len()];
        let ds = random_complete(n, &dims, 2, seed);
        let spec = MaskSpec {
            missing_rates: rates.clone(),
            seed,
            policy: if independent { MaskPolicy::Independent } else { MaskPolicy::Sequential },
        };
        let total: usize = rates.iter().map(|r| (r * n as f64).floor() as usize).sum();
        match generate_mask(&ds, &spec) {
            Ok(m) => {
                prop_assert!(m.mask().rows().into_iter().all(|r| r.iter().any(|&o| o)));
                for (v, r) in rates.iter().enumerate() {
                    let missing = m.mask().column(v).iter().filter(|&&o| !o).count();
                    prop_assert_eq!(missing, (r * n as f64).floor() as usize);
                    for i in 0..n {
                        if !m.is_observed(i, v) {
                            prop_assert!(m.view(v).row(i).iter().all(|&x| x == 0.0));
                        }
                    }
                }
                prop_assert_eq!(&generate_mask(&ds, &spec).unwrap(), &m);
            }
            Err(_) => prop_assert!(independent || total > (rates.len() - 1) * n),
        }
    }

    #[test]
    fn splits_partition_and_cover_classes(n in 6usize..80, classes in 2usize..4, rate in 0.05f64..1.0, seed in 0u64..1000) {
        let ds = random_complete(n, &[2], classes, seed);
        let target = (rate * n as f64).round() as usize;
        match generate_split(&ds, &SplitSpec { labeled_rate: rate, seed, stratified: true }) {
            Ok(s) => {
                prop_assert_eq!(s.labeled_idx().len(), target);
                prop_assert_eq!(s.labeled_idx().len() + s.unlabeled_idx().len(), n);
                let mut all: Vec<usize> = s.labeled_idx().iter().chain(s.unlabeled_idx()).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                for c in 0..classes {
                    prop_assert!(s.labeled_idx().iter().any(|&i| s.truth()[i] == Some(c)));
                }
            }
            Err(_) => prop_assert!(target < classes),
        }
    }
}
