//! k-nearest-neighbour completion of missing views, used as a baseline.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{observed_column_means, MultiViewDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    InverseDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputeSpec {
    pub k: usize,
    pub weighting: Weighting,
}

impl Default for ImputeSpec {
    fn default() -> Self {
        Self {
            k: 7,
            weighting: Weighting::Uniform,
        }
    }
}

/// Squared distance between instances `i` and `j` over the views both observe,
/// each view's contribution divided by its feature count. `None` when they
/// share no view.
pub fn shared_view_distance(ds: &MultiViewDataset, i: usize, j: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut shared = false;
    for v in 0..ds.n_views() {
        if ds.is_observed(i, v) && ds.is_observed(j, v) {
            let x = ds.view(v);
            let d: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d / x.ncols() as f64;
            shared = true;
        }
    }
    shared.then_some(total)
}

/// Neighbours of `i` usable for filling view `v`, closest first (ties by index).
pub fn impute_neighbors(ds: &MultiViewDataset, i: usize, v: usize, k: usize) -> Vec<(usize, f64)> {
    let mut cands: Vec<(usize, f64)> = (0..ds.n_instances())
        .filter(|&j| j != i && ds.is_observed(j, v))
        .filter_map(|j| shared_view_distance(ds, i, j).map(|d| (j, d)))
        .collect();
    cands.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    cands.truncate(k);
    cands
}

fn fill_row(
    ds: &MultiViewDataset,
    i: usize,
    v: usize,
    spec: &ImputeSpec,
    fallback: &Array1<f64>,
) -> Array1<f64> {
    let nbrs = impute_neighbors(ds, i, v, spec.k);
    if nbrs.is_empty() {
        return fallback.clone();
    }
    let x = ds.view(v);
    let weights: Vec<f64> = match spec.weighting {
        Weighting::Uniform => vec![1.0; nbrs.len()],
        Weighting::InverseDistance => {
            if nbrs.iter().any(|&(_, d)| d == 0.0) {
                // Exact duplicates dominate any positive distance.
                nbrs.iter()
                    .map(|&(_, d)| if d == 0.0 { 1.0 } else { 0.0 })
                    .collect()
            } else {
                nbrs.iter().map(|&(_, d)| 1.0 / d.sqrt()).collect()
            }
        }
    };
    let total: f64 = weights.iter().sum();
    let mut row = Array1::zeros(x.ncols());
    for (&(j, _), &w) in nbrs.iter().zip(&weights) {
        row.scaled_add(w / total, &x.row(j));
    }
    row
}

/// Fills every missing (instance, view) cell from the instance's nearest
/// neighbours observed in that view. Instances with no usable neighbour get
/// the view's observed column means. The result is fully observed.
pub fn knn_impute(ds: &MultiViewDataset, spec: &ImputeSpec) -> Result<MultiViewDataset> {
    if spec.k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let n = ds.n_instances();
    let mut views: Vec<Array2<f64>> = ds.views().to_vec();
    for (v, x) in views.iter_mut().enumerate() {
        let fallback = observed_column_means(ds, v);
        let missing: Vec<usize> = (0..n).filter(|&i| !ds.is_observed(i, v)).collect();
        let rows: Vec<Array1<f64>> = missing
            .par_iter()
            .map(|&i| fill_row(ds, i, v, spec, &fallback))
            .collect();
        for (&i, r) in missing.iter().zip(rows) {
            x.row_mut(i).assign(&r);
        }
    }
    ds.with_views_complete(views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_view(mask: Array2<bool>) -> MultiViewDataset {
        let v0 = array![[0.0], [0.1], [0.2], [5.0]];
        let v1 = array![[9.0, 9.0], [1.0, 3.0], [3.0, 5.0], [100.0, 100.0]];
        MultiViewDataset::new(
            vec![v0, v1],
            mask,
            vec![Some(0), Some(1), Some(0), Some(1)],
            vec![0, 1],
            2,
        )
        .unwrap()
    }

    fn mask_first_in_view1() -> Array2<bool> {
        let mut m = Array2::from_elem((4, 2), true);
        m[[0, 1]] = false;
        m
    }

    #[test]
    fn averages_two_nearest() {
        let ds = two_view(mask_first_in_view1());
        let out = knn_impute(
            &ds,
            &ImputeSpec {
                k: 2,
                weighting: Weighting::Uniform,
            },
        )
        .unwrap();
        assert_eq!(out.view(1).row(0).to_vec(), vec![2.0, 4.0]);
        assert!(out.is_complete());
    }

    #[test]
    fn single_neighbor_copies() {
        let ds = two_view(mask_first_in_view1());
        let out = knn_impute(
            &ds,
            &ImputeSpec {
                k: 1,
                weighting: Weighting::Uniform,
            },
        )
        .unwrap();
        assert_eq!(out.view(1).row(0).to_vec(), vec![1.0, 3.0]);
    }

    #[test]
    fn complete_data_is_unchanged() {
        let ds = two_view(Array2::from_elem((4, 2), true));
        let out = knn_impute(&ds, &ImputeSpec::default()).unwrap();
        assert_eq!(out.views(), ds.views());
    }

    #[test]
    fn inverse_distance_prefers_closer() {
        let ds = two_view(mask_first_in_view1());
        let out = knn_impute(
            &ds,
            &ImputeSpec {
                k: 2,
                weighting: Weighting::InverseDistance,
            },
        )
        .unwrap();
        // distances 0.1 and 0.2: weights 10 and 5
        let r = out.view(1).row(0).to_vec();
        assert!((r[0] - (10.0 * 1.0 + 5.0 * 3.0) / 15.0).abs() < 1e-12);
        assert!((r[1] - (10.0 * 3.0 + 5.0 * 5.0) / 15.0).abs() < 1e-12);
    }

    #[test]
    fn no_shared_view_falls_back_to_means() {
        // instance 0 only has view 0; everyone observed in view 1 lacks view 0
        let v0 = array![[0.0], [0.0], [0.0]];
        let v1 = array![[0.0, 0.0], [2.0, 4.0], [4.0, 8.0]];
        let mask = array![[true, false], [false, true], [false, true]];
        let ds = MultiViewDataset::new(
            vec![v0, v1],
            mask,
            vec![Some(0), Some(1), Some(0)],
            vec![0, 1],
            2,
        )
        .unwrap();
        let out = knn_impute(&ds, &ImputeSpec::default()).unwrap();
        assert_eq!(out.view(1).row(0).to_vec(), vec![3.0, 6.0]);
    }
}
