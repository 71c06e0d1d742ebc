//! kNN similarity graphs over imputed fuzzy-space rows and over label vectors.
//!
//! All graphs use the Gaussian kernel `exp(-|a - b|^2 / (2 sigma^2))` with
//! `sigma` set to the median nonzero kNN distance of the graph (1 when every
//! such distance is zero), exclude self-edges, and are symmetrized by the
//! elementwise maximum.

use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K_NEIGHBORS: usize = 7;

/// Symmetric-by-construction sparse matrix stored as sorted adjacency rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGraph {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    /// Builds from `(i, j, value)` triplets; duplicates keep the maximum.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            rows[i].push((j, v));
        }
        for r in &mut rows {
            r.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
            r.dedup_by_key(|e| e.0);
        }
        Self { n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |p| self.rows[i][p].1)
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|e| e.1).sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for (i, j, v) in self.triplets() {
            m[[i, j]] = v;
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    /// `max(A, A^T)` elementwise.
    pub fn symmetrized_max(&self) -> Self {
        let both = self
            .triplets()
            .chain(self.triplets().map(|(i, j, v)| (j, i, v)))
            .collect::<Vec<_>>();
        Self::from_triplets(self.n, both)
    }

    /// `S X` for a dense `X` with `n` rows.
    pub fn mul_dense(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, x.ncols()));
        for (i, r) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, s) in r {
                o.scaled_add(s, &x.row(j));
            }
        }
        out
    }

    /// `sum_ij s_ij |f_i - f_j|^2` over ordered pairs.
    pub fn pairwise_energy(&self, f: ArrayView2<'_, f64>) -> f64 {
        self.triplets()
            .map(|(i, j, s)| s * sq_dist(f.row(i), f.row(j)))
            .sum()
    }

    /// Writes the graph as `i,j,value` coordinate-list CSV.
    pub fn write_coo_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = String::from("i,j,value\n");
        for (i, j, v) in self.triplets() {
            buf.push_str(&format!("{i},{j},{v}\n"));
        }
        f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest rows to each row (excluding itself), closest first;
/// ties go to the lower index. Returns `(neighbor, squared distance)` lists.
pub fn knn_lists(rows: ArrayView2<'_, f64>, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = rows.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} neighbors needs 0 < k < {n} rows"
        )));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|j| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&i| i != j)
                .map(|i| (sq_dist(rows.row(i), rows.row(j)), i))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
            cand.sort_by(cmp);
            cand.into_iter().map(|(d, i)| (i, d)).collect()
        })
        .collect())
}

/// Median of the nonzero kNN distances, or 1 when there are none.
pub fn median_bandwidth(lists: &[Vec<(usize, f64)>]) -> f64 {
    let mut d: Vec<f64> = lists
        .iter()
        .flatten()
        .map(|&(_, sq)| sq.sqrt())
        .filter(|&x| x > 0.0)
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

pub fn gaussian_kernel(sq_distance: f64, sigma: f64) -> f64 {
    (-sq_distance / (2.0 * sigma * sigma)).exp()
}

/// Which rows an instance graph is built over.
#[derive(Debug, Clone, Copy)]
pub enum GraphScope<'a> {
    All,
    Subset(&'a [usize]),
}

/// Instance graph of one view.
///
/// Entry `(i, j)` is the kernel value when `i` is among the `k` nearest
/// neighbors of `j` (or vice versa, after symmetrization) and at least one of
/// the two is observed in this view. Indices of the result refer to the
/// positions within `scope`.
pub fn build_instance_similarity(
    imputed: ArrayView2<'_, f64>,
    observed: &[bool],
    k: usize,
    scope: GraphScope<'_>,
) -> Result<SparseGraph> {
    if observed.len() != imputed.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} observation flags for {} rows",
            observed.len(),
            imputed.nrows()
        )));
    }
    let (rows, obs): (Array2<f64>, Vec<bool>) = match scope {
        GraphScope::All => (imputed.to_owned(), observed.to_vec()),
        GraphScope::Subset(idx) => (
            imputed.select(ndarray::Axis(0), idx),
            idx.iter().map(|&i| observed[i]).collect(),
        ),
    };
    let lists = knn_lists(rows.view(), k)?;
    let sigma = median_bandwidth(&lists);
    let triplets = lists.iter().enumerate().flat_map(|(j, nbrs)| {
        let obs = &obs;
        nbrs.iter()
            .filter(move |&&(i, _)| obs[i] || obs[j])
            .map(move |&(i, sq)| (j, i, gaussian_kernel(sq, sigma)))
    });
    Ok(SparseGraph::from_triplets(rows.nrows(), triplets).symmetrized_max())
}

/// Label graph over all instances.
///
/// Pairs of truly labeled instances of the same class get weight 1; pairs of
/// truly labeled instances never get a kernel edge; every other pair gets the
/// kernel value of their label vectors when one is a kNN of the other.
pub fn build_label_similarity(
    labels: ArrayView2<'_, f64>,
    true_class: &[Option<usize>],
    k: usize,
) -> Result<SparseGraph> {
    let n = labels.nrows();
    if true_class.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} label flags for {n} rows",
            true_class.len()
        )));
    }
    let lists = knn_lists(labels, k)?;
    let sigma = median_bandwidth(&lists);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (j, nbrs) in lists.iter().enumerate() {
        for &(i, sq) in nbrs {
            if true_class[i].is_some() && true_class[j].is_some() {
                continue;
            }
            let v = gaussian_kernel(sq, sigma);
            triplets.push((j, i, v));
            triplets.push((i, j, v));
        }
    }
    let mut by_class: Vec<Vec<usize>> = Vec::new();
    for (i, c) in true_class.iter().enumerate() {
        if let Some(c) = *c {
            if by_class.len() <= c {
                by_class.resize(c + 1, Vec::new());
            }
            by_class[c].push(i);
        }
    }
    for members in &by_class {
        for &a in members {
            for &b in members {
                if a != b {
                    triplets.push((a, b, 1.0));
                }
            }
        }
    }
    Ok(SparseGraph::from_triplets(n, triplets))
}

/// The three graph families consumed by the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraphs {
    /// Per view, over all instances.
    pub s_all: Vec<SparseGraph>,
    /// Per view, over unlabeled instances (indexed by unlabeled position).
    pub s_unlabeled: Vec<SparseGraph>,
    /// Label graph over all instances.
    pub z: SparseGraph,
    pub k_neighbors: usize,
}
