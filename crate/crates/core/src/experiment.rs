//! Repeated masked/split trials over a grid, with CSV reports.
//!
//! Every random draw derives from the base seed and the trial coordinates, and
//! results are written in grid order, so re-running a config reproduces every
//! deterministic output file byte for byte. Wall times go to a separate file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    generate_mask, generate_split, load_dataset, LoadOptions, MaskPolicy, MaskSpec,
    MultiViewDataset, SplitSpec,
};
use crate::error::{Error, Result};
use crate::solver::{fit, predict_transductive, write_trace_csv, Ablation, FitResult, Hyperparams};
use crate::stats::{FriedmanReport, TrialMatrix};
use crate::synthetic::{gaussian_blobs, BlobSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Headerless CSV views and a label file; relative paths are resolved
    /// against the config file's directory.
    Files {
        views: Vec<PathBuf>,
        labels: PathBuf,
        #[serde(default)]
        raw: bool,
    },
    Synthetic(BlobSpec),
}

/// Lists of candidate values; an empty list keeps the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct HyperGrid {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
    pub beta4: Vec<f64>,
    pub beta5: Vec<f64>,
    pub rule_count: Vec<usize>,
}

impl HyperGrid {
    /// Cartesian product over the non-empty lists, first key varying slowest.
    pub fn expand(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        let pick = |v: &[f64], b: f64| if v.is_empty() { vec![b] } else { v.to_vec() };
        let rules = if self.rule_count.is_empty() {
            vec![base.rule_count]
        } else {
            self.rule_count.clone()
        };
        let mut out = Vec::new();
        for &b1 in &pick(&self.beta1, base.beta1) {
            for &b2 in &pick(&self.beta2, base.beta2) {
                for &b3 in &pick(&self.beta3, base.beta3) {
                    for &b4 in &pick(&self.beta4, base.beta4) {
                        for &b5 in &pick(&self.beta5, base.beta5) {
                            for &k in &rules {
                                out.push(Hyperparams {
                                    beta1: b1,
                                    beta2: b2,
                                    beta3: b3,
                                    beta4: b4,
                                    beta5: b5,
                                    rule_count: k,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// How the grid is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Selection {
    /// Every grid point is reported as its own configuration.
    #[default]
    None,
    /// Per trial, hold out a stratified fraction of the labeled instances,
    /// pick the grid point with the best held-out accuracy, then refit on all
    /// labeled instances.
    Holdout { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataSource,
    pub missing_rates: Vec<f64>,
    pub labeled_rates: Vec<f64>,
    pub mask_policy: MaskPolicy,
    pub repeats: usize,
    pub seed: u64,
    pub ablations: Vec<Ablation>,
    pub hyperparams: Hyperparams,
    pub grid: HyperGrid,
    pub selection: Selection,
    pub out_dir: PathBuf,
    /// Also write one objective trace CSV per trial.
    pub write_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            data: DataSource::Synthetic(BlobSpec::default()),
            missing_rates: vec![0.5],
            labeled_rates: vec![0.3],
            mask_policy: MaskPolicy::Sequential,
            repeats: 20,
            seed: 0,
            ablations: vec![Ablation::Full],
            hyperparams: Hyperparams::default(),
            grid: HyperGrid::default(),
            selection: Selection::None,
            out_dir: PathBuf::from("results"),
            write_traces: false,
        }
    }
}

/// Sets `dotted.key = value` in a TOML table; `value` is parsed as a TOML
/// value and falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{part} in {key} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_with_overrides<T: DeserializeOwned>(text: &str, overrides: &[String]) -> Result<T> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    apply_overrides(table, overrides)
}

fn apply_overrides<T: DeserializeOwned>(mut table: toml::Table, overrides: &[String]) -> Result<T> {
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Hyperparameters from a TOML table (missing keys take defaults) plus
/// `key=value` overrides.
pub fn hyperparams_from_toml(text: &str, overrides: &[String]) -> Result<Hyperparams> {
    let hp: Hyperparams = parse_with_overrides(text, overrides)?;
    hp.validate()?;
    Ok(hp)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        // `--set data.x=..` without a [data] table tweaks the default source
        if !table.contains_key("data")
            && overrides
                .iter()
                .any(|o| o.trim_start().starts_with("data."))
        {
            let default = toml::Table::try_from(Self::default().data)
                .map_err(|e| Error::Config(e.to_string()))?;
            table.insert("data".into(), toml::Value::Table(default));
        }
        let cfg: Self = apply_overrides(table, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data paths become relative to its directory.
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataSource::Files { views, labels, .. } = &mut cfg.data {
            for p in views.iter_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if labels.is_relative() {
                *labels = base.join(&*labels);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.missing_rates.is_empty()
            || self.labeled_rates.is_empty()
            || self.ablations.is_empty()
        {
            return Err(Error::Config(
                "missing_rates, labeled_rates and ablations must be nonempty".into(),
            ));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if let Selection::Holdout { fraction } = self.selection {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Config(format!(
                    "holdout fraction {fraction} outside (0, 1)"
                )));
            }
        }
        self.hyperparams.validate()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn load_data(&self) -> Result<MultiViewDataset> {
        match &self.data {
            DataSource::Files { views, labels, raw } => load_dataset(
                views,
                labels,
                None,
                &LoadOptions {
                    class_count: None,
                    raw: *raw,
                },
            ),
            DataSource::Synthetic(spec) => Ok(gaussian_blobs(spec)?.normalized()),
        }
    }
}

/// Deterministic 64-bit seed from a tag and trial coordinates.
pub fn derive_seed(
    base: u64,
    tag: &str,
    missing_rate: f64,
    labeled_rate: f64,
    repeat: usize,
    extra: &str,
) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0u8]);
    h.update(missing_rate.to_bits().to_le_bytes());
    h.update(labeled_rate.to_bits().to_le_bytes());
    h.update((repeat as u64).to_le_bytes());
    h.update(extra.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub missing_rate: f64,
    pub labeled_rate: f64,
    pub ablation: Ablation,
    /// Index into the expanded grid (the selected one under holdout selection).
    pub config: usize,
    pub repeat: usize,
    pub data_seed: u64,
    pub model_seed: u64,
    pub accuracy: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gamma: f64,
    pub delta: f64,
    pub theta: f64,
    pub objective: f64,
    pub error: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub missing_rate: f64,
    pub labeled_rate: f64,
    pub ablation: Ablation,
    pub config: Option<usize>,
    pub n: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
    pub grid: Vec<Hyperparams>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.error.is_some()).count()
    }
}

#[derive(Debug, Clone)]
struct TrialSpec {
    missing_rate: f64,
    labeled_rate: f64,
    ablation: Ablation,
    config: Option<usize>,
    repeat: usize,
}

/// Accuracy over the unlabeled instances that carry a ground-truth label.
pub fn transductive_accuracy(ds: &MultiViewDataset, fit: &FitResult) -> Result<f64> {
    let pred = predict_transductive(&fit.model.state);
    let (mut hits, mut total) = (0usize, 0usize);
    for (p, &i) in pred.iter().zip(ds.unlabeled_idx()) {
        if let Some(t) = ds.truth()[i] {
            total += 1;
            hits += usize::from(*p == t);
        }
    }
    if total == 0 {
        return Err(Error::InvalidDataset(
            "no unlabeled instance has a ground-truth label".into(),
        ));
    }
    Ok(hits as f64 / total as f64)
}

/// Stratified holdout of the labeled set: per class, a shuffled `fraction`
/// (at least one instance kept for training).
fn holdout_split(ds: &MultiViewDataset, fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in ds.labeled_idx() {
        by_class
            .entry(ds.truth()[i].expect("labeled"))
            .or_default()
            .push(i);
    }
    let mut train = Vec::new();
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let held = ((fraction * members.len() as f64).floor() as usize).min(members.len() - 1);
        train.extend_from_slice(&members[held..]);
    }
    train.sort_unstable();
    train
}

fn run_trial(
    cfg: &ExperimentConfig,
    base: &MultiViewDataset,
    grid: &[Hyperparams],
    spec: &TrialSpec,
    trace_dir: Option<&Path>,
) -> TrialResult {
    let data_seed = derive_seed(
        cfg.seed,
        "data",
        spec.missing_rate,
        spec.labeled_rate,
        spec.repeat,
        "",
    );
    let model_seed = derive_seed(
        cfg.seed,
        "model",
        spec.missing_rate,
        spec.labeled_rate,
        spec.repeat,
        spec.ablation.name(),
    );
    let mut out = TrialResult {
        missing_rate: spec.missing_rate,
        labeled_rate: spec.labeled_rate,
        ablation: spec.ablation,
        config: spec.config.unwrap_or(0),
        repeat: spec.repeat,
        data_seed,
        model_seed,
        accuracy: None,
        iterations: 0,
        converged: false,
        gamma: f64::NAN,
        delta: f64::NAN,
        theta: f64::NAN,
        objective: f64::NAN,
        error: None,
        wall_seconds: 0.0,
    };
    let start = Instant::now();
    let result = (|| -> Result<()> {
        let masked = if spec.missing_rate > 0.0 {
            let mut m = MaskSpec::uniform(spec.missing_rate, base.n_views(), data_seed);
            m.policy = cfg.mask_policy;
            generate_mask(base, &m)?
        } else {
            base.clone()
        };
        let ds = generate_split(
            &masked,
            &SplitSpec {
                labeled_rate: spec.labeled_rate,
                seed: data_seed ^ 0x5eed,
                stratified: true,
            },
        )?;
        let prepare = |hp: &Hyperparams| Hyperparams {
            seed: model_seed,
            ablation: spec.ablation,
            ..hp.clone()
        };
        let chosen = match (spec.config, cfg.selection) {
            (Some(c), _) => c,
            (None, Selection::Holdout { fraction }) => {
                let train = holdout_split(&ds, fraction, data_seed ^ 0x401d);
                let inner = ds.with_labeled(train)?;
                let mut best = (0, f64::NEG_INFINITY);
                for (c, hp) in grid.iter().enumerate() {
                    let f = fit(&inner, &prepare(hp))?;
                    let pred = predict_transductive(&f.model.state);
                    let (mut hits, mut total) = (0, 0);
                    for (p, &i) in pred.iter().zip(inner.unlabeled_idx()) {
                        if ds.labeled_idx().binary_search(&i).is_ok() {
                            total += 1;
                            hits += usize::from(Some(*p) == ds.truth()[i]);
                        }
                    }
                    let acc = hits as f64 / total.max(1) as f64;
                    if acc > best.1 {
                        best = (c, acc);
                    }
                }
                best.0
            }
            (None, Selection::None) => 0,
        };
        out.config = chosen;
        let f = fit(&ds, &prepare(&grid[chosen]))?;
        out.accuracy = Some(transductive_accuracy(&ds, &f)?);
        out.iterations = f.trace.len();
        out.converged = f.converged;
        if let Some(last) = f.trace.last() {
            out.gamma = last.objective.gamma;
            out.delta = last.objective.delta;
            out.theta = last.objective.theta;
            out.objective = last.objective.total;
        }
        if let Some(dir) = trace_dir {
            let name = format!(
                "trace_m{}_l{}_{}_c{}_r{}.csv",
                spec.missing_rate, spec.labeled_rate, spec.ablation, out.config, spec.repeat
            );
            write_trace_csv(&dir.join(name), &f.trace)?;
        }
        Ok(())
    })();
    out.wall_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    out
}

fn trial_specs(cfg: &ExperimentConfig, grid_len: usize) -> Vec<TrialSpec> {
    let configs: Vec<Option<usize>> = match cfg.selection {
        Selection::None => (0..grid_len).map(Some).collect(),
        Selection::Holdout { .. } => vec![None],
    };
    let mut specs = Vec::new();
    for &m in &cfg.missing_rates {
        for &l in &cfg.labeled_rates {
            for &a in &cfg.ablations {
                for &c in &configs {
                    for r in 0..cfg.repeats {
                        specs.push(TrialSpec {
                            missing_rate: m,
                            labeled_rate: l,
                            ablation: a,
                            config: c,
                            repeat: r,
                        });
                    }
                }
            }
        }
    }
    specs
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn summarize(cfg: &ExperimentConfig, trials: &[TrialResult]) -> Vec<SummaryRow> {
    // Trials are laid out cell by cell, `repeats` consecutive rows each.
    trials
        .chunks(cfg.repeats)
        .map(|cell| {
            let accs: Vec<f64> = cell.iter().filter_map(|t| t.accuracy).collect();
            let (mean, std) = mean_std(&accs);
            let first = &cell[0];
            SummaryRow {
                missing_rate: first.missing_rate,
                labeled_rate: first.labeled_rate,
                ablation: first.ablation,
                config: match cfg.selection {
                    Selection::None => Some(first.config),
                    Selection::Holdout { .. } => None,
                },
                n: accs.len(),
                mean_accuracy: mean,
                std_accuracy: std,
                failures: cell.len() - accs.len(),
            }
        })
        .collect()
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn series_name(row: &SummaryRow, multi_config: bool) -> String {
    match (row.config, multi_config) {
        (Some(c), true) => format!("{}#{c}", row.ablation),
        _ => row.ablation.to_string(),
    }
}

/// Writes `trials.csv`, `timings.csv`, `summary.csv`, `plot_data.csv`,
/// `grid.csv` and `config.toml` under `dir`.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let key = |t: &TrialResult| {
        vec![
            t.missing_rate.to_string(),
            t.labeled_rate.to_string(),
            t.ablation.to_string(),
            t.config.to_string(),
            t.repeat.to_string(),
        ]
    };
    write_rows(
        &dir.join("trials.csv"),
        &[
            "missing_rate",
            "labeled_rate",
            "ablation",
            "config",
            "repeat",
            "data_seed",
            "model_seed",
            "accuracy",
            "iterations",
            "converged",
            "gamma",
            "delta",
            "theta",
            "objective",
            "status",
            "error",
        ],
        outcome.trials.iter().map(|t| {
            let mut r = key(t);
            r.extend([
                t.data_seed.to_string(),
                t.model_seed.to_string(),
                fmt_opt(&t.accuracy),
                t.iterations.to_string(),
                t.converged.to_string(),
                t.gamma.to_string(),
                t.delta.to_string(),
                t.theta.to_string(),
                t.objective.to_string(),
                if t.error.is_some() { "error" } else { "ok" }.to_string(),
                fmt_opt(&t.error),
            ]);
            r
        }),
    )?;
    write_rows(
        &dir.join("timings.csv"),
        &[
            "missing_rate",
            "labeled_rate",
            "ablation",
            "config",
            "repeat",
            "wall_seconds",
        ],
        outcome.trials.iter().map(|t| {
            let mut r = key(t);
            r.push(t.wall_seconds.to_string());
            r
        }),
    )?;
    write_rows(
        &dir.join("summary.csv"),
        &[
            "missing_rate",
            "labeled_rate",
            "ablation",
            "config",
            "n",
            "mean_accuracy",
            "std_accuracy",
            "failures",
        ],
        outcome.summary.iter().map(|s| {
            vec![
                s.missing_rate.to_string(),
                s.labeled_rate.to_string(),
                s.ablation.to_string(),
                s.config
                    .map_or_else(|| "selected".to_string(), |c| c.to_string()),
                s.n.to_string(),
                s.mean_accuracy.to_string(),
                s.std_accuracy.to_string(),
                s.failures.to_string(),
            ]
        }),
    )?;
    let multi = outcome.grid.len() > 1 && cfg.selection == Selection::None;
    write_rows(
        &dir.join("plot_data.csv"),
        &["series", "missing_rate", "labeled_rate", "mean_accuracy"],
        outcome.summary.iter().map(|s| {
            vec![
                series_name(s, multi),
                s.missing_rate.to_string(),
                s.labeled_rate.to_string(),
                s.mean_accuracy.to_string(),
            ]
        }),
    )?;
    write_rows(
        &dir.join("grid.csv"),
        &[
            "config",
            "beta1",
            "beta2",
            "beta3",
            "beta4",
            "beta5",
            "rule_count",
        ],
        outcome.grid.iter().enumerate().map(|(c, h)| {
            vec![
                c.to_string(),
                h.beta1.to_string(),
                h.beta2.to_string(),
                h.beta3.to_string(),
                h.beta4.to_string(),
                h.beta5.to_string(),
                h.rule_count.to_string(),
            ]
        }),
    )?;
    let resolved = dir.join("config.toml");
    std::fs::write(&resolved, cfg.to_toml_string()?).map_err(|e| Error::io(&resolved, e))
}

/// Runs every trial (in parallel), then writes the reports to `cfg.out_dir`.
/// Failed trials are recorded, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let base = cfg.load_data()?;
    let grid = cfg.grid.expand(&cfg.hyperparams);
    let specs = trial_specs(cfg, grid.len());
    let trace_dir = cfg.write_traces.then(|| cfg.out_dir.join("traces"));
    if let Some(d) = &trace_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let trials: Vec<TrialResult> = specs
        .par_iter()
        .map(|s| run_trial(cfg, &base, &grid, s, trace_dir.as_deref()))
        .collect();
    let summary = summarize(cfg, &trials);
    let outcome = ExperimentOutcome {
        trials,
        summary,
        grid,
    };
    write_outputs(cfg, &outcome, &cfg.out_dir)?;
    Ok(outcome)
}

/// Input layouts accepted by [`run_stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatsInput {
    /// Algorithms x datasets accuracy table.
    Accuracies,
    /// `algorithm,average_rank` rows over the given number of datasets.
    Ranks { n_datasets: usize },
}

fn read_ranks(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let (mut names, mut ranks) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line + 2,
                value: rec.iter().collect::<Vec<_>>().join(","),
            });
        }
        names.push(rec[0].to_string());
        ranks.push(rec[1].parse::<f64>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: line + 2,
            value: rec[1].to_string(),
        })?);
    }
    Ok((names, ranks))
}

/// Friedman + Holm on a CSV table; writes `friedman.csv`, `holm.csv` and
/// `report.txt` into `out_dir`. The control is the best-ranked algorithm
/// unless named.
pub fn run_stats(
    input: &Path,
    layout: StatsInput,
    out_dir: &Path,
    control: Option<&str>,
    alpha: f64,
) -> Result<FriedmanReport> {
    let (names, report) = match layout {
        StatsInput::Accuracies => {
            let m = TrialMatrix::from_csv(input)?;
            let c = control.map(|n| find_name(&m.algorithms, n)).transpose()?;
            (
                m.algorithms.clone(),
                FriedmanReport::from_trials(&m, c, alpha)?,
            )
        }
        StatsInput::Ranks { n_datasets } => {
            let (names, ranks) = read_ranks(input)?;
            let c = control.map(|n| find_name(&names, n)).transpose()?;
            let r = FriedmanReport::from_ranks(names.clone(), &ranks, n_datasets, c, alpha)?;
            (names, r)
        }
    };
    debug_assert_eq!(names, report.algorithms);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    report.write_csv(&out_dir.join("friedman.csv"), &out_dir.join("holm.csv"))?;
    let txt = out_dir.join("report.txt");
    std::fs::write(&txt, report.to_text()).map_err(|e| Error::io(&txt, e))?;
    Ok(report)
}

fn find_name(names: &[String], wanted: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == wanted)
        .ok_or_else(|| Error::InvalidParameter(format!("no algorithm named {wanted:?}")))
}
