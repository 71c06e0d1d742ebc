//! Multinomial ridge classifier on the concatenated views, solved by plain
//! Gauss-Jordan elimination.

use ndarray::{concatenate, Array2, Axis};
use ssimv_core::dataset::MultiViewDataset;

/// Gauss-Jordan elimination with partial pivoting; `a` is square.
pub fn solve_dense(mut a: Array2<f64>, mut b: Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .unwrap();
        for k in 0..n {
            a.swap([col, k], [piv, k]);
        }
        for k in 0..b.ncols() {
            b.swap([col, k], [piv, k]);
        }
        for r in 0..n {
            if r != col {
                let f = a[[r, col]] / a[[col, col]];
                for k in 0..n {
                    a[[r, k]] -= f * a[[col, k]];
                }
                for k in 0..b.ncols() {
                    b[[r, k]] -= f * b[[col, k]];
                }
            }
        }
    }
    for r in 0..n {
        let d = a[[r, r]];
        b.row_mut(r).mapv_inplace(|x| x / d);
    }
    b
}

/// Fits one-hot targets of the labeled rows with an intercept and penalty
/// `lambda`, then scores the unlabeled rows.
pub fn ridge_oracle_accuracy(ds: &MultiViewDataset, lambda: f64) -> f64 {
    let views: Vec<_> = (0..ds.n_views()).map(|v| ds.view(v)).collect();
    let x = concatenate(Axis(1), &views).unwrap();
    let n = x.nrows();
    let x = concatenate(Axis(1), &[Array2::ones((n, 1)).view(), x.view()]).unwrap();
    let labeled = ds.labeled_idx();
    let xl = x.select(Axis(0), labeled);
    let mut y = Array2::zeros((labeled.len(), ds.class_count()));
    for (r, &i) in labeled.iter().enumerate() {
        y[[r, ds.truth()[i].unwrap()]] = 1.0;
    }
    let mut gram = xl.t().dot(&xl);
    for j in 0..gram.nrows() {
        gram[[j, j]] += lambda;
    }
    let w = solve_dense(gram, xl.t().dot(&y));
    let scores = x.dot(&w);
    let unl = ds.unlabeled_idx();
    let hits = unl
        .iter()
        .filter(|&&i| {
            let row = scores.row(i);
            let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            Some(best) == ds.truth()[i]
        })
        .count();
    hits as f64 / unl.len() as f64
}
