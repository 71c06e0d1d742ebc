use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Hyperparams, ModelState, Problem};
use crate::error::{Error, Result};
use crate::graphs::SimilarityGraphs;

/// The three groups of the training objective and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// Weighted fit, consequent ridge and view-weight entropy.
    pub gamma: f64,
    /// Graph smoothness of pseudo labels and of projected instances.
    pub delta: f64,
    /// Cross-view alignment with neighbours.
    pub theta: f64,
    pub total: f64,
}

/// `a ln a` with the continuous extension `0 ln 0 = 0`.
pub(crate) fn xlogx(a: f64) -> f64 {
    if a > 0.0 {
        a * a.ln()
    } else {
        0.0
    }
}

fn sq_row_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `B_v = sum_{t != v} a_t F_t`.
pub(crate) fn cross_view_sum(outputs: &[Array2<f64>], weights: &[f64], v: usize) -> Array2<f64> {
    let mut b = Array2::zeros(outputs[v].dim());
    for (t, f) in outputs.iter().enumerate() {
        if t != v {
            b.scaled_add(weights[t], f);
        }
    }
    b
}

/// Evaluates the full objective at the current state with the given graphs.
pub fn evaluate_objective(
    problem: &Problem,
    state: &ModelState,
    graphs: &SimilarityGraphs,
    hp: &Hyperparams,
) -> Result<ObjectiveBreakdown> {
    let b = hp.betas();
    let outputs = state.outputs(problem);
    let y = state.label_matrix(problem);
    let a = state
        .view_weights
        .as_slice()
        .expect("contiguous view weights");

    let mut fit = 0.0;
    for (v, f) in outputs.iter().enumerate() {
        let w = &state.instance_weights[v];
        let mut s = 0.0;
        for i in 0..f.nrows() {
            s += w[i] * w[i] * sq_row_dist(f.row(i), y.row(i));
        }
        fit += a[v] * s;
    }
    let ridge: f64 = state
        .consequents
        .iter()
        .map(|p| p.iter().map(|x| x * x).sum::<f64>())
        .sum();
    let entropy: f64 = a.iter().map(|&x| xlogx(x)).sum();
    let gamma = fit + b.b1 * ridge + b.b2 * entropy;

    let mut delta = 0.0;
    if b.b4 > 0.0 {
        let e: f64 = graphs
            .s_unlabeled
            .iter()
            .map(|g| g.pairwise_energy(state.pseudo_labels.view()))
            .sum();
        delta += b.b4 * e;
    }
    if b.b3 > 0.0 {
        let e: f64 = outputs
            .iter()
            .map(|f| graphs.z.pairwise_energy(f.view()))
            .sum();
        delta += b.b3 * e;
    }

    let mut theta = 0.0;
    if b.b5 > 0.0 {
        let mut e = 0.0;
        for (v, f) in outputs.iter().enumerate() {
            let bv = cross_view_sum(&outputs, a, v);
            for (i, j, s) in graphs.s_all[v].triplets() {
                e += s * sq_row_dist(f.row(i), bv.row(j));
            }
        }
        theta = b.b5 * e;
    }

    let total = gamma + delta + theta;
    if !total.is_finite() {
        return Err(Error::Divergence(format!(
            "objective is not finite at iteration {}",
            state.iteration
        )));
    }
    Ok(ObjectiveBreakdown {
        gamma,
        delta,
        theta,
        total,
    })
}
