//! Semi-supervised TSK fuzzy classification of incomplete multi-view data.
//!
//! Each view gets its own fuzzy rule base. Training alternates between
//! imputing missing views in the fuzzy feature space, propagating pseudo
//! labels over instance graphs, and fitting the rule consequents, with an
//! entropy-regularized weight per view.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fuzzy;
pub mod graphs;
pub mod impute;
pub mod linalg;
pub mod solver;
pub mod stats;
pub mod synthetic;

pub use dataset::{
    generate_mask, generate_split, load_dataset, LoadOptions, MaskPolicy, MaskSpec,
    MultiViewDataset, SplitSpec, ViewScaling,
};
pub use error::{Error, Result};
pub use experiment::{
    hyperparams_from_toml, run_experiment, run_stats, ExperimentConfig, ExperimentOutcome,
    StatsInput,
};
pub use fuzzy::{estimate_antecedents, map_to_fuzzy_space, FuzzyDesign, FuzzyRuleBase};
pub use graphs::{SimilarityGraphs, SparseGraph};
pub use solver::{
    fit, predict_inductive, predict_transductive, Ablation, FitResult, Hyperparams, ModelState,
    TrainedModel, Trainer,
};
