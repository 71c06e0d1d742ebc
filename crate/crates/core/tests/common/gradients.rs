//! Finite-difference checks of the block updates.

use ssimv_core::solver::{Hyperparams, Trainer};

use super::{total, toy_dataset};

pub fn central_difference(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

pub fn max_gradient_consequents(t: &Trainer, v: usize) -> f64 {
    let (r, c) = t.state.consequents[v].dim();
    let mut worst: f64 = 0.0;
    for i in 0..r {
        for k in 0..c {
            let g = central_difference(
                |h| {
                    let mut s = t.clone();
                    s.state.consequents[v][[i, k]] += h;
                    total(&s)
                },
                1e-5,
            );
            worst = worst.max(g.abs());
        }
    }
    worst
}

/// Every coordinate of every missing row. The objective sees a row only
/// through its product with the consequents, so the full gradient already
/// lies in their row space.
pub fn max_gradient_error_rows(t: &Trainer, v: usize) -> f64 {
    let cols = t.state.error_rows[v].ncols();
    let mut worst: f64 = 0.0;
    for i in (0..t.problem.n_instances()).filter(|&i| t.state.indicator[v][i]) {
        for k in 0..cols {
            let g = central_difference(
                |h| {
                    let mut s = t.clone();
                    s.state.error_rows[v][[i, k]] += h;
                    total(&s)
                },
                1e-5,
            );
            worst = worst.max(g.abs());
        }
    }
    worst
}

/// Largest descent rate along a feasible simplex direction `e_p - e_q`
/// (mass may only leave positive coordinates).
pub fn simplex_violation(values: &[f64], mut shifted: impl FnMut(usize, usize, f64) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for p in 0..values.len() {
        for q in 0..values.len() {
            if p == q || values[q] <= 1e-9 {
                continue;
            }
            let g = central_difference(|h| shifted(p, q, h), 1e-6);
            worst = worst.max(-g);
        }
    }
    worst
}

pub fn toy_hp(seed: u64) -> Hyperparams {
    Hyperparams {
        rule_count: 2,
        k_neighbors: 3,
        seed,
        beta1: 0.5,
        beta2: 0.7,
        beta3: 0.3,
        beta4: 0.4,
        beta5: 0.6,
        ..Default::default()
    }
}

/// Runs three sweeps on the toy problem of `seed`, checking after each block
/// update; returns the worst `gradient / (1 + |J|)` and which block it was.
pub fn stationarity_residual(seed: u64) -> (f64, String) {
    let ds = toy_dataset(seed);
    let mut t = Trainer::new(&ds, &toy_hp(seed)).unwrap();
    let mut worst = (0.0, String::new());
    let mut note = |g: f64, j: f64, what: String| {
        let r = g / (1.0 + j.abs());
        if r > worst.0 {
            worst = (r, what);
        }
    };
    for it in 0..3 {
        if it > 0 {
            t.rebuild_graphs().unwrap();
        }
        t.update_view_weights().unwrap();
        let a = t.state.view_weights.to_vec();
        let g = simplex_violation(&a, |p, q, h| {
            let mut s = t.clone();
            s.state.view_weights[p] += h;
            s.state.view_weights[q] -= h;
            total(&s)
        });
        note(g, total(&t), format!("a (sweep {it})"));
        for v in 0..t.problem.n_views() {
            t.update_consequents(v).unwrap();
            note(
                max_gradient_consequents(&t, v),
                total(&t),
                format!("P{v} (sweep {it})"),
            );
            t.update_error_rows(v).unwrap();
            note(
                max_gradient_error_rows(&t, v),
                total(&t),
                format!("H{v} (sweep {it})"),
            );
        }
        t.update_pseudo_labels().unwrap();
        let j = total(&t);
        for r in 0..t.state.pseudo_labels.nrows() {
            let row = t.state.pseudo_labels.row(r).to_vec();
            let g = simplex_violation(&row, |p, q, h| {
                let mut s = t.clone();
                s.state.pseudo_labels[[r, p]] += h;
                s.state.pseudo_labels[[r, q]] -= h;
                total(&s)
            });
            note(g, j, format!("Y row {r} (sweep {it})"));
        }
    }
    worst
}
