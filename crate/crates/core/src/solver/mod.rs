//! Joint imputation, pseudo-labeling and TSK consequent learning.
//!
//! The objective couples four blocks: view weights `a`, per-view consequents
//! `P_v`, per-view error rows `H_v` (the fuzzy-space stand-ins for missing
//! instances), and the pseudo labels `Y_u` of the unlabeled instances. All
//! structural terms are squared Euclidean, which makes every block update an
//! exact minimizer of the full objective with the other blocks fixed.

mod objective;
mod updates;

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{MultiViewDataset, ViewScaling};
use crate::error::{Error, Result};
use crate::fuzzy::{
    estimate_antecedents, map_row, map_to_fuzzy_space, AntecedentOptions, FuzzyDesign,
    FuzzyRuleBase, DEFAULT_WIDTH_FLOOR,
};
use crate::graphs::{
    build_instance_similarity, build_label_similarity, GraphScope, SimilarityGraphs, SparseGraph,
    DEFAULT_K_NEIGHBORS,
};

pub use objective::{evaluate_objective, ObjectiveBreakdown};
pub use updates::{
    update_consequents, update_error_rows, update_pseudo_labels, update_view_weights,
    update_view_weights_coupled, view_losses, ERROR_ROW_DAMPING,
};

/// Which structural terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// Drops the cross-view alignment term (`beta5 = 0`).
    NoTheta,
    /// Drops both structural-preservation terms (`beta3 = beta4 = 0`).
    NoDelta,
}

impl Ablation {
    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoTheta => "no_theta",
            Ablation::NoDelta => "no_delta",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_theta" => Ok(Ablation::NoTheta),
            "no_delta" => Ok(Ablation::NoDelta),
            other => Err(Error::InvalidParameter(format!(
                "unknown ablation {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Ridge penalty on the consequents.
    pub beta1: f64,
    /// Entropy temperature of the view weights.
    pub beta2: f64,
    /// Label-graph preservation of projected instances.
    pub beta3: f64,
    /// Instance-graph smoothness of pseudo labels.
    pub beta4: f64,
    /// Cross-view alignment with similar instances.
    pub beta5: f64,
    pub rule_count: usize,
    pub max_iter: usize,
    pub k_neighbors: usize,
    /// Relative objective change that ends training early; 0 disables.
    pub tolerance: f64,
    pub seed: u64,
    pub ablation: Ablation,
    pub width_scale: f64,
    pub width_floor: f64,
    /// Build the graphs once from the initial state and never rebuild them.
    pub freeze_graphs: bool,
    /// Convergence threshold of the inner row sweeps in the H and Y blocks.
    pub inner_tolerance: f64,
    pub max_inner_sweeps: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            beta1: 8.0,
            beta2: 16.0,
            beta3: 0.0625,
            beta4: 0.0625,
            beta5: 0.0625,
            rule_count: 4,
            max_iter: 30,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            tolerance: 1e-6,
            seed: 0,
            ablation: Ablation::Full,
            width_scale: 1.0,
            width_floor: DEFAULT_WIDTH_FLOOR,
            freeze_graphs: false,
            inner_tolerance: 1e-13,
            max_inner_sweeps: 200,
        }
    }
}

/// The five regularization weights after applying the ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Betas {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub b5: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("beta4", self.beta4),
            ("beta5", self.beta5),
        ] {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {b} must be >= 0"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if self.rule_count == 0 {
            return Err(Error::InvalidParameter("rule_count must be >= 1".into()));
        }
        if self.k_neighbors == 0 {
            return Err(Error::InvalidParameter("k_neighbors must be >= 1".into()));
        }
        Ok(())
    }

    pub fn betas(&self) -> Betas {
        let mut b = Betas {
            b1: self.beta1,
            b2: self.beta2,
            b3: self.beta3,
            b4: self.beta4,
            b5: self.beta5,
        };
        match self.ablation {
            Ablation::Full => {}
            Ablation::NoTheta => b.b5 = 0.0,
            Ablation::NoDelta => {
                b.b3 = 0.0;
                b.b4 = 0.0;
            }
        }
        b
    }

    fn antecedent_options(&self) -> AntecedentOptions {
        AntecedentOptions {
            width_scale: self.width_scale,
            width_floor: self.width_floor,
        }
    }
}

/// Fixed inputs of the optimization: the fuzzy design and the visible labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub design: FuzzyDesign,
    /// One-hot rows for labeled instances, zero rows elsewhere.
    pub targets: Array2<f64>,
    /// Class of each instance whose label the learner sees.
    pub visible_class: Vec<Option<usize>>,
    pub unlabeled_idx: Vec<usize>,
    pub class_count: usize,
}

impl Problem {
    pub fn new(dataset: &MultiViewDataset, design: FuzzyDesign) -> Result<Self> {
        let n = dataset.n_instances();
        let c = dataset.class_count();
        if design.n_views() != dataset.n_views() {
            return Err(Error::DimensionMismatch("design/view count".into()));
        }
        let mut targets = Array2::zeros((n, c));
        let mut visible_class = vec![None; n];
        for &i in dataset.labeled_idx() {
            let y = dataset.truth()[i].expect("labeled instances carry a label");
            targets[[i, y]] = 1.0;
            visible_class[i] = Some(y);
        }
        Ok(Self {
            design,
            targets,
            visible_class,
            unlabeled_idx: dataset.unlabeled_idx().to_vec(),
            class_count: c,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.targets.nrows()
    }

    pub fn n_views(&self) -> usize {
        self.design.n_views()
    }
}

/// The four optimization blocks plus the per-view constants they are weighted by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// `P_v`, shape `K (d_v + 1) x C`.
    pub consequents: Vec<Array2<f64>>,
    /// View weights on the probability simplex.
    pub view_weights: Array1<f64>,
    /// `H_v`, shape `N x K (d_v + 1)`; nonzero only on missing rows.
    pub error_rows: Vec<Array2<f64>>,
    /// `Y_u`, one simplex row per unlabeled instance (in `unlabeled_idx` order).
    pub pseudo_labels: Array2<f64>,
    /// `w_v`: 1 for observed rows, the view's observed fraction for missing rows.
    pub instance_weights: Vec<Array1<f64>>,
    /// `e_v`: true where the instance is missing in the view.
    pub indicator: Vec<Vec<bool>>,
    pub iteration: usize,
}

impl ModelState {
    /// Imputed fuzzy-space rows `q_i = x_i + e_i h_i` of view `v`.
    pub fn imputed(&self, problem: &Problem, v: usize) -> Array2<f64> {
        let mut q = problem.design.matrices[v].clone();
        for (i, &missing) in self.indicator[v].iter().enumerate() {
            if missing {
                let mut row = q.row_mut(i);
                row += &self.error_rows[v].row(i);
            }
        }
        q
    }

    /// Per-view outputs `F_v = Q_v P_v`.
    pub fn outputs(&self, problem: &Problem) -> Vec<Array2<f64>> {
        (0..problem.n_views())
            .map(|v| self.imputed(problem, v).dot(&self.consequents[v]))
            .collect()
    }

    /// `Y~`: true one-hot rows for labeled instances, pseudo labels elsewhere.
    pub fn label_matrix(&self, problem: &Problem) -> Array2<f64> {
        let mut y = problem.targets.clone();
        for (p, &i) in problem.unlabeled_idx.iter().enumerate() {
            y.row_mut(i).assign(&self.pseudo_labels.row(p));
        }
        y
    }
}

/// `w_v` of every view: 1 where observed, `observed / N` where missing.
pub fn compute_instance_weights(mask: &Array2<bool>) -> Vec<Array1<f64>> {
    let n = mask.nrows();
    mask.columns()
        .into_iter()
        .map(|col| {
            let ratio = col.iter().filter(|&&o| o).count() as f64 / n as f64;
            col.mapv(|o| if o { 1.0 } else { ratio })
        })
        .collect()
}

/// Seeded initial state: zero consequents, uniform view weights, small
/// Gaussian error rows on missing entries and flat-Dirichlet pseudo labels.
pub fn initial_state(dataset: &MultiViewDataset, problem: &Problem, seed: u64) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = problem.n_views();
    let n = problem.n_instances();
    let c = problem.class_count;
    let indicator: Vec<Vec<bool>> = (0..nv)
        .map(|v| (0..n).map(|i| !dataset.is_observed(i, v)).collect())
        .collect();
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let error_rows = problem
        .design
        .matrices
        .iter()
        .zip(&indicator)
        .map(|(x, ind)| {
            let mut h = Array2::zeros(x.dim());
            for (i, &missing) in ind.iter().enumerate() {
                if missing {
                    h.row_mut(i).mapv_inplace(|_| noise.sample(&mut rng));
                }
            }
            h
        })
        .collect();
    let nu = problem.unlabeled_idx.len();
    // Normalized unit exponentials are a draw from the flat Dirichlet.
    let mut pseudo_labels = Array2::from_shape_fn((nu, c), |_| {
        let e: f64 = Exp1.sample(&mut rng);
        e + 1e-300
    });
    for mut row in pseudo_labels.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    ModelState {
        consequents: problem
            .design
            .matrices
            .iter()
            .map(|x| Array2::zeros((x.ncols(), c)))
            .collect(),
        view_weights: Array1::from_elem(nv, 1.0 / nv as f64),
        error_rows,
        pseudo_labels,
        instance_weights: compute_instance_weights(dataset.mask()),
        indicator,
        iteration: 0,
    }
}

/// Rebuilds the instance graphs from the current imputed rows and the label
/// graph from the current label matrix. Graphs whose weight is zero are left
/// empty.
pub fn build_graphs(
    problem: &Problem,
    state: &ModelState,
    hp: &Hyperparams,
) -> Result<SimilarityGraphs> {
    let b = hp.betas();
    let n = problem.n_instances();
    let nu = problem.unlabeled_idx.len();
    let k_all = hp.k_neighbors.min(n.saturating_sub(1));
    let k_unl = hp.k_neighbors.min(nu.saturating_sub(1));
    let mut s_all = Vec::with_capacity(problem.n_views());
    let mut s_unlabeled = Vec::with_capacity(problem.n_views());
    for v in 0..problem.n_views() {
        let need_all = b.b5 > 0.0 && k_all > 0;
        let need_unl = b.b4 > 0.0 && k_unl > 0;
        if !(need_all || need_unl) {
            s_all.push(SparseGraph::empty(n));
            s_unlabeled.push(SparseGraph::empty(nu));
            continue;
        }
        let q = state.imputed(problem, v);
        let observed: Vec<bool> = state.indicator[v].iter().map(|&m| !m).collect();
        s_all.push(if need_all {
            build_instance_similarity(q.view(), &observed, k_all, GraphScope::All)?
        } else {
            SparseGraph::empty(n)
        });
        s_unlabeled.push(if need_unl {
            build_instance_similarity(
                q.view(),
                &observed,
                k_unl,
                GraphScope::Subset(&problem.unlabeled_idx),
            )?
        } else {
            SparseGraph::empty(nu)
        });
    }
    let z = if b.b3 > 0.0 && k_all > 0 {
        build_label_similarity(
            state.label_matrix(problem).view(),
            &problem.visible_class,
            k_all,
        )?
    } else {
        SparseGraph::empty(n)
    };
    Ok(SimilarityGraphs {
        s_all,
        s_unlabeled,
        z,
        k_neighbors: hp.k_neighbors,
    })
}

/// One row of the objective trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: ObjectiveBreakdown,
    pub view_weights: Vec<f64>,
}

/// Everything needed to predict and to export rules after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub rules: Vec<FuzzyRuleBase>,
    pub state: ModelState,
    pub hyperparams: Hyperparams,
    pub unlabeled_idx: Vec<usize>,
    pub class_count: usize,
    /// Column scaling applied to the training views, reused for new inputs.
    pub scaling: Option<Vec<ViewScaling>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: TrainedModel,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

/// Stateful driver of the alternating updates; exposes each block so tests
/// and tools can step through a sweep.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub problem: Problem,
    pub state: ModelState,
    pub graphs: SimilarityGraphs,
    pub rules: Vec<FuzzyRuleBase>,
    pub hp: Hyperparams,
    scaling: Option<Vec<ViewScaling>>,
}

impl Trainer {
    /// Estimates antecedents, maps every view and initializes the blocks.
    pub fn new(dataset: &MultiViewDataset, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        let opts = hp.antecedent_options();
        let rules = (0..dataset.n_views())
            .map(|v| estimate_antecedents(dataset.observed_view(v).view(), hp.rule_count, &opts))
            .collect::<Result<Vec<_>>>()?;
        let design = map_to_fuzzy_space(dataset, &rules)?;
        let problem = Problem::new(dataset, design)?;
        let state = initial_state(dataset, &problem, hp.seed);
        let graphs = build_graphs(&problem, &state, hp)?;
        Ok(Self {
            problem,
            state,
            graphs,
            rules,
            hp: hp.clone(),
            scaling: dataset.scaling().map(|s| s.to_vec()),
        })
    }

    pub fn rebuild_graphs(&mut self) -> Result<()> {
        self.graphs = build_graphs(&self.problem, &self.state, &self.hp)?;
        Ok(())
    }

    pub fn objective(&self) -> Result<ObjectiveBreakdown> {
        evaluate_objective(&self.problem, &self.state, &self.graphs, &self.hp)
    }

    pub fn update_view_weights(&mut self) -> Result<()> {
        update_view_weights_coupled(&self.problem, &mut self.state, &self.graphs, &self.hp)
    }

    pub fn update_consequents(&mut self, v: usize) -> Result<()> {
        update_consequents(&self.problem, &mut self.state, &self.graphs, &self.hp, v)
    }

    pub fn update_error_rows(&mut self, v: usize) -> Result<()> {
        update_error_rows(&self.problem, &mut self.state, &self.graphs, &self.hp, v)
    }

    pub fn update_pseudo_labels(&mut self) -> Result<()> {
        update_pseudo_labels(&self.problem, &mut self.state, &self.graphs, &self.hp)
    }

    /// One outer iteration: a, then per view {P_v, H_v}, then Y_u.
    pub fn sweep(&mut self) -> Result<ObjectiveBreakdown> {
        self.update_view_weights()?;
        for v in 0..self.problem.n_views() {
            self.update_consequents(v)?;
            self.update_error_rows(v)?;
        }
        self.update_pseudo_labels()?;
        self.state.iteration += 1;
        self.objective()
    }

    /// Runs up to `max_iter` sweeps, rebuilding graphs at the top of every
    /// sweep after the first unless they are frozen.
    pub fn run(mut self) -> Result<FitResult> {
        let mut trace: Vec<TraceRow> = Vec::with_capacity(self.hp.max_iter);
        let mut converged = false;
        for t in 0..self.hp.max_iter {
            if t > 0 && !self.hp.freeze_graphs {
                self.rebuild_graphs()?;
            }
            let obj = self.sweep()?;
            let prev = trace.last().map(|r| r.objective.total);
            trace.push(TraceRow {
                iteration: t + 1,
                objective: obj,
                view_weights: self.state.view_weights.to_vec(),
            });
            if let Some(prev) = prev {
                let rel = (obj.total - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
                if self.hp.tolerance > 0.0 && rel < self.hp.tolerance {
                    converged = true;
                    break;
                }
            }
        }
        Ok(FitResult {
            model: TrainedModel {
                rules: self.rules,
                state: self.state,
                hyperparams: self.hp,
                unlabeled_idx: self.problem.unlabeled_idx,
                class_count: self.problem.class_count,
                scaling: self.scaling,
            },
            trace,
            converged,
        })
    }
}

/// Trains on a dataset with its labeled/unlabeled split.
pub fn fit(dataset: &MultiViewDataset, hp: &Hyperparams) -> Result<FitResult> {
    Trainer::new(dataset, hp)?.run()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = j;
        }
    }
    best
}

/// Class of every unlabeled instance, in `unlabeled_idx` order.
pub fn predict_transductive(state: &ModelState) -> Vec<usize> {
    state.pseudo_labels.rows().into_iter().map(argmax).collect()
}

/// Weighted TSK output `sum_v a_v x_g^v P_v` of a new, fully observed instance.
///
/// Inputs are in the raw feature scale of the training files; the stored
/// column scaling is applied first.
pub fn inductive_scores(model: &TrainedModel, views: &[Option<&[f64]>]) -> Result<Array1<f64>> {
    if views.len() != model.rules.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} views given, model has {}",
            views.len(),
            model.rules.len()
        )));
    }
    let mut scores = Array1::zeros(model.class_count);
    for (v, x) in views.iter().enumerate() {
        let x = x.ok_or_else(|| {
            Error::Unsupported(format!(
                "instance is missing view {v}; only complete instances can be predicted"
            ))
        })?;
        let mut x = Array1::from(x.to_vec());
        if let Some(scaling) = &model.scaling {
            scaling[v].apply(&mut x)?;
        }
        let row = map_row(x.view(), &model.rules[v])?;
        scores.scaled_add(
            model.state.view_weights[v],
            &row.dot(&model.state.consequents[v]),
        );
    }
    Ok(scores)
}

pub fn predict_inductive(model: &TrainedModel, views: &[Option<&[f64]>]) -> Result<usize> {
    Ok(argmax(inductive_scores(model, views)?.view()))
}

impl TrainedModel {
    /// Serializes to JSON; floats round-trip exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Writes `iteration,Gamma,Delta,Theta,J,a1..aV`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let nv = trace.first().map_or(0, |r| r.view_weights.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header: Vec<String> = ["iteration", "Gamma", "Delta", "Theta", "J"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=nv).map(|v| format!("a{v}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in trace {
        let mut rec = vec![
            r.iteration.to_string(),
            r.objective.gamma.to_string(),
            r.objective.delta.to_string(),
            r.objective.theta.to_string(),
            r.objective.total.to_string(),
        ];
        rec.extend(r.view_weights.iter().map(|a| a.to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn instance_weights_follow_observed_ratio() {
        let mut mask = Array2::from_elem((100, 2), true);
        for i in 0..20 {
            mask[[i, 0]] = false;
        }
        let w = compute_instance_weights(&mask);
        assert_eq!(w[0][0], 0.8);
        assert_eq!(w[0][50], 1.0);
        assert!(w[1].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(array![0.1, 0.8, 0.1].view()), 1);
        assert_eq!(argmax(array![0.5, 0.5].view()), 0);
    }

    #[test]
    fn ablation_zeroes_terms() {
        let hp = Hyperparams {
            ablation: Ablation::NoTheta,
            ..Default::default()
        };
        assert_eq!(hp.betas().b5, 0.0);
        let hp = Hyperparams {
            ablation: Ablation::NoDelta,
            ..Default::default()
        };
        let b = hp.betas();
        assert_eq!((b.b3, b.b4), (0.0, 0.0));
        assert!(b.b5 > 0.0);
    }

    #[test]
    fn ablation_parses() {
        assert_eq!("no_delta".parse::<Ablation>().unwrap(), Ablation::NoDelta);
        assert!("nope".parse::<Ablation>().is_err());
    }

    #[test]
    fn validate_rejects_bad_values() {
        let hp = Hyperparams {
            beta3: -1.0,
            ..Default::default()
        };
        assert!(hp.validate().is_err());
        let hp = Hyperparams {
            max_iter: 0,
            ..Default::default()
        };
        assert!(hp.validate().is_err());
    }
}
