//! All-pairs evaluation of the neighbourhood rules, for comparison with the
//! sparse builders.

use ndarray::Array2;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// For every row j, its k nearest other rows (ties to the lower index) and
/// the full N x N squared-distance table.
fn dense_knn(rows: &Array2<f64>, k: usize) -> (Vec<Vec<usize>>, Array2<f64>) {
    let n = rows.nrows();
    let d = Array2::from_shape_fn((n, n), |(i, j)| {
        sq(&rows.row(i).to_vec(), &rows.row(j).to_vec())
    });
    let nbrs = (0..n)
        .map(|j| {
            let mut others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            others.sort_by(|&a, &b| d[[a, j]].partial_cmp(&d[[b, j]]).unwrap().then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect();
    (nbrs, d)
}

fn bandwidth(nbrs: &[Vec<usize>], d: &Array2<f64>) -> f64 {
    let mut dist: Vec<f64> = nbrs
        .iter()
        .enumerate()
        .flat_map(|(j, l)| l.iter().map(move |&i| d[[i, j]].sqrt()))
        .filter(|&x| x > 0.0)
        .collect();
    if dist.is_empty() {
        return 1.0;
    }
    dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dist.len();
    if m % 2 == 1 {
        dist[m / 2]
    } else {
        (dist[m / 2 - 1] + dist[m / 2]) / 2.0
    }
}

fn sym_max(a: Array2<f64>) -> Array2<f64> {
    let t = a.t().to_owned();
    ndarray::Zip::from(&a)
        .and(&t)
        .map_collect(|&x, &y| x.max(y))
}

pub fn instance_graph(rows: &Array2<f64>, observed: &[bool], k: usize) -> Array2<f64> {
    let n = rows.nrows();
    let (nbrs, d) = dense_knn(rows, k);
    let sigma = bandwidth(&nbrs, &d);
    let mut s = Array2::zeros((n, n));
    for (j, l) in nbrs.iter().enumerate() {
        for &i in l {
            if observed[i] || observed[j] {
                s[[j, i]] = (-d[[i, j]] / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    sym_max(s)
}

pub fn label_graph(labels: &Array2<f64>, truth: &[Option<usize>], k: usize) -> Array2<f64> {
    let n = labels.nrows();
    let (nbrs, d) = dense_knn(labels, k);
    let sigma = bandwidth(&nbrs, &d);
    let mut z = Array2::zeros((n, n));
    for (j, l) in nbrs.iter().enumerate() {
        for &i in l {
            if truth[i].is_none() || truth[j].is_none() {
                z[[j, i]] = (-d[[i, j]] / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    let mut z = sym_max(z);
    for a in 0..n {
        for b in 0..n {
            if a != b && truth[a].is_some() && truth[a] == truth[b] {
                z[[a, b]] = 1.0;
            }
        }
    }
    z
}
