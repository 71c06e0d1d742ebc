//! Exact block minimizers of the training objective.
//!
//! For view `v`, every term that touches `F_v = Q_v P_v` is a weighted sum of
//! squared row distances. Collecting them gives, per row `i`, a scalar
//! curvature and a target row (see [`view_quadratic`]); only the label-graph
//! term couples different rows of `F_v`.

use ndarray::{Array1, Array2, Axis};

use super::objective::{cross_view_sum, xlogx};
use super::{Hyperparams, ModelState, Problem};
use crate::error::{Error, Result};
use crate::graphs::SimilarityGraphs;
use crate::linalg::{project_simplex, solve_general, solve_spd};

/// Tikhonov damping of the rank-deficient error-row system.
pub const ERROR_ROW_DAMPING: f64 = 1e-8;

/// Fit loss of every view: `sum_i w_i^2 |F_v[i] - Y~_i|^2`.
pub fn view_losses(problem: &Problem, state: &ModelState) -> Vec<f64> {
    let y = state.label_matrix(problem);
    state
        .outputs(problem)
        .iter()
        .zip(&state.instance_weights)
        .map(|(f, w)| {
            let diff = f - &y;
            diff.rows()
                .into_iter()
                .zip(w.iter())
                .map(|(r, &wi)| wi * wi * r.dot(&r))
                .sum()
        })
        .collect()
}

/// Closed-form minimizer of `sum_v a_v L_v + beta2 sum_v a_v ln a_v` over the
/// simplex: a softmax of `-L / beta2`. With `beta2 = 0` all mass goes to the
/// smallest loss (lowest index on ties).
pub fn update_view_weights(losses: &[f64], beta2: f64) -> Vec<f64> {
    let n = losses.len();
    if beta2 == 0.0 {
        let best = (0..n).fold(0, |b, v| if losses[v] < losses[b] { v } else { b });
        let mut a = vec![0.0; n];
        a[best] = 1.0;
        return a;
    }
    let m = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = losses.iter().map(|&l| (-(l - m) / beta2).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Quadratic and linear coefficients of the alignment term as a function of
/// the view weights: `beta5 (a' M a - 2 b' a)` up to a constant.
fn alignment_in_weights(
    outputs: &[Array2<f64>],
    graphs: &SimilarityGraphs,
) -> (Array2<f64>, Array1<f64>) {
    let nv = outputs.len();
    let mut m = Array2::zeros((nv, nv));
    let mut b = Array1::zeros(nv);
    for v in 0..nv {
        let g = &graphs.s_all[v];
        if g.nnz() == 0 {
            continue;
        }
        let d = Array1::from(g.degrees());
        for t in 0..nv {
            if t == v {
                continue;
            }
            let sf = g.mul_dense(outputs[t].view());
            b[t] += (&outputs[v] * &sf).sum();
            let df = &outputs[t] * &d.view().insert_axis(Axis(1));
            for r in 0..nv {
                if r != v {
                    m[[t, r]] += (&df * &outputs[r]).sum();
                }
            }
        }
    }
    (m, b)
}

/// Minimizes the full objective over the view weights with everything else
/// fixed.
///
/// Without the alignment term this is the softmax of
/// [`update_view_weights`]. With it the problem is a strictly convex
/// entropy-regularized quadratic on the simplex, solved by damped Newton on
/// the KKT system starting from the softmax point.
pub fn update_view_weights_coupled(
    problem: &Problem,
    state: &mut ModelState,
    graphs: &SimilarityGraphs,
    hp: &Hyperparams,
) -> Result<()> {
    let b = hp.betas();
    let losses = view_losses(problem, state);
    let nv = losses.len();
    if b.b5 == 0.0 || nv == 1 {
        state.view_weights = Array1::from(update_view_weights(&losses, b.b2));
        return Ok(());
    }
    let outputs = state.outputs(problem);
    let (m, lin) = alignment_in_weights(&outputs, graphs);
    let l = Array1::from(losses);
    let phi = |a: &Array1<f64>| -> f64 {
        l.dot(a)
            + b.b5 * (a.dot(&m.dot(a)) - 2.0 * lin.dot(a))
            + b.b2 * a.iter().map(|&x| xlogx(x)).sum::<f64>()
    };

    if b.b2 == 0.0 {
        // Linear-plus-quadratic objective; we take the best vertex.
        let best = (0..nv)
            .map(|v| l[v] + b.b5 * (m[[v, v]] - 2.0 * lin[v]))
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (v, x)| if x < acc.1 { (v, x) } else { acc },
            )
            .0;
        let mut a = Array1::zeros(nv);
        a[best] = 1.0;
        state.view_weights = a;
        return Ok(());
    }

    let mut a = Array1::from(update_view_weights(&l.to_vec(), b.b2));
    for _ in 0..100 {
        let grad = &l + &(b.b5 * 2.0 * (&m.dot(&a) - &lin)) + &a.mapv(|x| b.b2 * (x.ln() + 1.0));
        let mut kkt = Array2::zeros((nv + 1, nv + 1));
        let mut rhs = vec![0.0; nv + 1];
        for t in 0..nv {
            for r in 0..nv {
                kkt[[t, r]] = b.b5 * (m[[t, r]] + m[[r, t]]);
            }
            kkt[[t, t]] += b.b2 / a[t];
            kkt[[t, nv]] = 1.0;
            kkt[[nv, t]] = 1.0;
            rhs[t] = -grad[t];
        }
        let sol = solve_general(kkt.view(), &rhs)?;
        let step = Array1::from(sol[..nv].to_vec());
        let decrement = -grad.dot(&step);
        if !(decrement > 1e-15 * (1.0 + phi(&a).abs())) {
            break;
        }
        let mut s = 1.0;
        while (0..nv).any(|t| a[t] + s * step[t] <= 0.0) {
            s *= 0.5;
        }
        let f0 = phi(&a);
        loop {
            let cand = &a + &(s * &step);
            if phi(&cand) <= f0 - 1e-4 * s * decrement || s < 1e-12 {
                a = cand;
                break;
            }
            s *= 0.5;
        }
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence("view weights became non-finite".into()));
    }
    let total = a.sum();
    a /= total;
    state.view_weights = a;
    Ok(())
}

/// Per-row curvature and target of view `v` from every term except the
/// label-graph term: the view's objective restricted to `F_v` equals
/// `sum_i alpha_i |F_v[i]|^2 - 2 F_v[i] . target_i` plus constants.
fn view_quadratic(
    problem: &Problem,
    state: &ModelState,
    graphs: &SimilarityGraphs,
    hp: &Hyperparams,
    v: usize,
) -> (Array1<f64>, Array2<f64>) {
    let b = hp.betas();
    let a = state
        .view_weights
        .as_slice()
        .expect("contiguous view weights");
    let w2 = state.instance_weights[v].mapv(|w| w * w);
    let mut alpha = &w2 * a[v];
    let mut target = state.label_matrix(problem) * &(&w2 * a[v]).insert_axis(Axis(1));
    if b.b5 > 0.0 {
        let outputs = state.outputs(problem);
        let own = &graphs.s_all[v];
        let bv = cross_view_sum(&outputs, a, v);
        alpha += &(Array1::from(own.degrees()) * b.b5);
        target.scaled_add(b.b5, &own.mul_dense(bv.view()));
        for t in 0..outputs.len() {
            if t == v || graphs.s_all[t].nnz() == 0 {
                continue;
            }
            let g = &graphs.s_all[t];
            let d = Array1::from(g.degrees());
            alpha.scaled_add(b.b5 * a[v] * a[v], &d);
            // R = sum of a_r F_r over views other than t and v
            let mut rest = Array2::zeros(outputs[t].dim());
            for (r, f) in outputs.iter().enumerate() {
                if r != t && r != v {
                    rest.scaled_add(a[r], f);
                }
            }
            let pull = g.mul_dense(outputs[t].view()) - rest * &d.insert_axis(Axis(1));
            target.scaled_add(b.b5 * a[v], &pull);
        }
    }
    (alpha, target)
}

/// Exact minimizer over `P_v` (a ridge-regularized weighted least squares
/// with a graph Laplacian penalty).
pub fn update_consequents(
    problem: &Problem,
    state: &mut ModelState,
    graphs: &SimilarityGraphs,
    hp: &Hyperparams,
    v: usize,
) -> Result<()> {
    let b = hp.betas();
    let (alpha, target) = view_quadratic(problem, state, graphs, hp, v);
    let q = state.imputed(problem, v);
    let weighted = &q * &alpha.view().insert_axis(Axis(1));
    let mut lhs = weighted.t().dot(&q);
    if b.b3 > 0.0 && graphs.z.nnz() > 0 {
        let dz = Array1::from(graphs.z.degrees());
        let lq = &q * &dz.insert_axis(Axis(1)) - graphs.z.mul_dense(q.view());
        lhs.scaled_add(2.0 * b.b3, &q.t().dot(&lq));
    }
    for j in 0..lhs.nrows() {
        lhs[[j, j]] += b.b1;
    }
    let sym = (&lhs + &lhs.t()) * 0.5;
    let rhs = q.t().dot(&target);
    state.consequents[v] = solve_spd(sym.view(), rhs.view())?;
    Ok(())
}

/// Exact minimizer over the error rows of view `v`'s missing instances.
///
/// Each missing row enters only through `f_i = h_i P_v`, which is confined to
/// the row space of `P_v`. Rows are coupled by the label graph, so the update
/// runs Gauss-Seidel sweeps over the missing rows until they stop moving.
pub fn update_error_rows(
    problem: &Problem,
    state: &mut ModelState,
    graphs: &SimilarityGraphs,
    hp: &Hyperparams,
    v: usize,
) -> Result<()> {
    let missing: Vec<usize> = (0..problem.n_instances())
        .filter(|&i| state.indicator[v][i])
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    let b = hp.betas();
    let c = problem.class_count;
    let (mut alpha, target) = view_quadratic(problem, state, graphs, hp, v);
    let coupled = b.b3 > 0.0 && graphs.z.nnz() > 0;
    if coupled {
        alpha += &(Array1::from(graphs.z.degrees()) * (2.0 * b.b3));
    }
    let x = &problem.design.matrices[v];
    let p = &state.consequents[v];
    let ptp = p.t().dot(p);
    let mut damped = ptp.clone();
    for j in 0..c {
        damped[[j, j]] += ERROR_ROW_DAMPING;
    }
    let inv = solve_spd(damped.view(), Array2::eye(c).view())?;
    let projector = inv.dot(&ptp);
    let lift = inv.dot(&p.t());

    // f_i = (x_i + h_i) P for missing rows; the observed part x_i P is fixed.
    let base = x.dot(p);
    let mut f = state.imputed(problem, v).dot(p);
    let mut coef = Array2::<f64>::zeros((missing.len(), c));
    let sweeps = if coupled {
        hp.max_inner_sweeps.max(1)
    } else {
        1
    };
    for _ in 0..sweeps {
        let mut change = 0.0f64;
        let mut scale = 0.0f64;
        for (k, &i) in missing.iter().enumerate() {
            if alpha[i] <= 0.0 {
                continue;
            }
            let mut g = target.row(i).to_owned();
            if coupled {
                for &(j, z) in graphs.z.row(i) {
                    g.scaled_add(2.0 * b.b3 * z, &f.row(j));
                }
            }
            // Desired output minus the fixed observed part, projected onto the
            // reachable row space.
            let u = g / alpha[i] - base.row(i);
            let new_f = &base.row(i) + &u.dot(&projector);
            for (o, n) in f.row(i).iter().zip(new_f.iter()) {
                change = change.max((o - n).abs());
                scale = scale.max(n.abs());
            }
            f.row_mut(i).assign(&new_f);
            coef.row_mut(k).assign(&u);
        }
        if change <= hp.inner_tolerance * (1.0 + scale) {
            break;
        }
    }
    for (k, &i) in missing.iter().enumerate() {
        let h = coef.row(k).dot(&lift);
        state.error_rows[v].row_mut(i).assign(&h);
    }
    Ok(())
}

/// Exact minimizer over the pseudo labels: each row is the simplex
/// projection of a weighted average of view outputs and neighbour labels,
/// iterated by Gauss-Seidel sweeps when the instance graphs couple rows.
pub fn update_pseudo_labels(
    problem: &Problem,
    state: &mut ModelState,
    graphs: &SimilarityGraphs,
    hp: &Hyperparams,
) -> Result<()> {
    let b = hp.betas();
    let nu = problem.unlabeled_idx.len();
    if nu == 0 {
        return Ok(());
    }
    let c = problem.class_count;
    let outputs = state.outputs(problem);
    let a = &state.view_weights;
    let mut theta = Array1::<f64>::zeros(nu);
    let mut fixed = Array2::<f64>::zeros((nu, c));
    for (p, &i) in problem.unlabeled_idx.iter().enumerate() {
        for (v, f) in outputs.iter().enumerate() {
            let w = state.instance_weights[v][i];
            theta[p] += a[v] * w * w;
            fixed.row_mut(p).scaled_add(a[v] * w * w, &f.row(i));
        }
    }
    let coupled = b.b4 > 0.0 && graphs.s_unlabeled.iter().any(|g| g.nnz() > 0);
    if coupled {
        for g in &graphs.s_unlabeled {
            theta += &(Array1::from(g.degrees()) * (2.0 * b.b4));
        }
    }
    let sweeps = if coupled {
        hp.max_inner_sweeps.max(1)
    } else {
        1
    };
    let y = &mut state.pseudo_labels;
    for _ in 0..sweeps {
        let mut change = 0.0f64;
        for p in 0..nu {
            if theta[p] <= 0.0 {
                continue;
            }
            let mut f = fixed.row(p).to_owned();
            if coupled {
                for g in &graphs.s_unlabeled {
                    for &(q, s) in g.row(p) {
                        f.scaled_add(2.0 * b.b4 * s, &y.row(q));
                    }
                }
            }
            let target: Vec<f64> = f.iter().map(|x| x / theta[p]).collect();
            let new = project_simplex(&target);
            for (o, n) in y.row(p).iter().zip(&new) {
                change = change.max((o - n).abs());
            }
            y.row_mut(p).assign(&Array1::from(new));
        }
        if change <= hp.inner_tolerance {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_weights_example() {
        let a = update_view_weights(&[1.0, 2.0], 1.0);
        let e = (-1.0f64).exp();
        assert!((a[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((a[1] - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn equal_losses_give_uniform_weights() {
        let a = update_view_weights(&[3.0, 3.0, 3.0], 0.7);
        assert!(a.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn zero_temperature_picks_smallest_loss() {
        assert_eq!(
            update_view_weights(&[2.0, 1.0, 1.0], 0.0),
            vec![0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn huge_losses_do_not_overflow() {
        let a = update_view_weights(&[1e6, 1e6 + 1.0], 1.0);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(a[0] > a[1]);
    }
}
