//! Multi-view tables with an observation mask and a labeled/unlabeled split.
//!
//! Missing (instance, view) cells are stored as zero rows. The solver learns
//! their fuzzy-space representation through the error rows, so the zero
//! placeholder never leaks into the fit as a real observation.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of resampling attempts before mask generation gives up.
pub const MASK_RETRY_BUDGET: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewDataset {
    views: Vec<Array2<f64>>,
    mask: Array2<bool>,
    truth: Vec<Option<usize>>,
    labeled_idx: Vec<usize>,
    unlabeled_idx: Vec<usize>,
    class_count: usize,
    #[serde(default)]
    scaling: Option<Vec<ViewScaling>>,
}

/// Affine column map `x -> (x - offset) * factor` recorded by normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScaling {
    pub offset: Vec<f64>,
    pub factor: Vec<f64>,
}

impl ViewScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            factor: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &mut Array1<f64>) -> Result<()> {
        if x.len() != self.offset.len() {
            return Err(Error::DimensionMismatch(format!(
                "instance has {} features, view expects {}",
                x.len(),
                self.offset.len()
            )));
        }
        for ((a, &o), &f) in x.iter_mut().zip(&self.offset).zip(&self.factor) {
            *a = (*a - o) * f;
        }
        Ok(())
    }

    /// The map that applies `self` first and `then` second.
    fn then(&self, then: &ViewScaling) -> Self {
        let mut offset = Vec::with_capacity(self.offset.len());
        let mut factor = Vec::with_capacity(self.offset.len());
        for j in 0..self.offset.len() {
            let f = self.factor[j] * then.factor[j];
            factor.push(f);
            // ((x - o1) f1 - o2) f2 = (x - (o1 + o2 / f1)) f1 f2
            offset.push(if self.factor[j] != 0.0 {
                self.offset[j] + then.offset[j] / self.factor[j]
            } else {
                self.offset[j]
            });
        }
        Self { offset, factor }
    }
}

impl MultiViewDataset {
    /// Builds and validates a dataset.
    ///
    /// `truth[i]` is the class of instance `i` when known. `labeled_idx` names
    /// the instances whose label the learner may see; every other instance is
    /// unlabeled. Rows with `mask[[i, v]] == false` are zeroed.
    pub fn new(
        views: Vec<Array2<f64>>,
        mask: Array2<bool>,
        truth: Vec<Option<usize>>,
        labeled_idx: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidDataset(
                "at least one view is required".into(),
            ));
        }
        let n = views[0].nrows();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no instances".into()));
        }
        for (v, x) in views.iter().enumerate() {
            if x.nrows() != n {
                return Err(Error::RowCountMismatch {
                    what: format!("view {v}"),
                    expected: n,
                    found: x.nrows(),
                });
            }
            if x.ncols() == 0 {
                return Err(Error::InvalidDataset(format!("view {v} has no columns")));
            }
            if x.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "view {v} has non-finite values"
                )));
            }
        }
        if mask.dim() != (n, views.len()) {
            return Err(Error::DimensionMismatch(format!(
                "mask is {:?}, expected ({n}, {})",
                mask.dim(),
                views.len()
            )));
        }
        if truth.len() != n {
            return Err(Error::RowCountMismatch {
                what: "labels".into(),
                expected: n,
                found: truth.len(),
            });
        }
        if class_count < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {class_count}"
            )));
        }
        for &c in truth.iter().flatten() {
            if c >= class_count {
                return Err(Error::ClassOutOfRange {
                    index: c,
                    class_count,
                });
            }
        }
        for (i, row) in mask.rows().into_iter().enumerate() {
            if !row.iter().any(|&o| o) {
                return Err(Error::UnobservedInstance(i));
            }
        }

        let labeled: BTreeSet<usize> = labeled_idx.iter().copied().collect();
        if labeled.len() != labeled_idx.len() {
            return Err(Error::InvalidDataset("duplicate labeled indices".into()));
        }
        if let Some(&bad) = labeled.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidDataset(format!(
                "labeled index {bad} out of range"
            )));
        }
        let mut seen = vec![false; class_count];
        for &i in &labeled {
            match truth[i] {
                Some(c) => seen[c] = true,
                None => {
                    return Err(Error::InvalidDataset(format!(
                        "instance {i} is in the labeled set but has no label"
                    )))
                }
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidDataset(format!(
                "class {c} has no labeled instance"
            )));
        }
        let labeled_idx: Vec<usize> = labeled.into_iter().collect();
        let unlabeled_idx: Vec<usize> = (0..n).filter(|i| !labeled_idx.contains(i)).collect();

        let mut views = views;
        for (v, x) in views.iter_mut().enumerate() {
            for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                if !mask[[i, v]] {
                    row.fill(0.0);
                }
            }
        }

        Ok(Self {
            views,
            mask,
            truth,
            labeled_idx,
            unlabeled_idx,
            class_count,
            scaling: None,
        })
    }

    /// Complete, fully labeled dataset. Convenient for synthetic data and tests.
    pub fn complete(
        views: Vec<Array2<f64>>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        let n = labels.len();
        let v = views.len();
        Self::new(
            views,
            Array2::from_elem((n, v), true),
            labels.into_iter().map(Some).collect(),
            (0..n).collect(),
            class_count,
        )
    }

    pub fn n_instances(&self) -> usize {
        self.truth.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.ncols()).collect()
    }

    pub fn view(&self, v: usize) -> ArrayView2<'_, f64> {
        self.views[v].view()
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn is_observed(&self, i: usize, v: usize) -> bool {
        self.mask[[i, v]]
    }

    pub fn truth(&self) -> &[Option<usize>] {
        &self.truth
    }

    pub fn labeled_idx(&self) -> &[usize] {
        &self.labeled_idx
    }

    pub fn unlabeled_idx(&self) -> &[usize] {
        &self.unlabeled_idx
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&o| o)
    }

    /// Indices of the rows observed in view `v`.
    pub fn observed_rows(&self, v: usize) -> Vec<usize> {
        (0..self.n_instances())
            .filter(|&i| self.mask[[i, v]])
            .collect()
    }

    /// Observed rows of view `v`, gathered into a dense matrix.
    pub fn observed_view(&self, v: usize) -> Array2<f64> {
        self.views[v].select(Axis(0), &self.observed_rows(v))
    }

    /// Fraction of instances observed in each view.
    pub fn observed_fraction(&self) -> Vec<f64> {
        let n = self.n_instances() as f64;
        self.mask
            .columns()
            .into_iter()
            .map(|c| c.iter().filter(|&&o| o).count() as f64 / n)
            .collect()
    }

    /// Per-column z-score over observed rows; zero-variance columns map to 0.
    ///
    /// The applied map is recorded (composed with any earlier one) so that new
    /// instances can be brought into the same scale.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        let mut maps = Vec::with_capacity(self.views.len());
        for (v, x) in out.views.iter_mut().enumerate() {
            let rows: Vec<usize> = (0..x.nrows()).filter(|&i| self.mask[[i, v]]).collect();
            let m = rows.len() as f64;
            let mut map = ViewScaling::identity(x.ncols());
            for (j, mut col) in x.columns_mut().into_iter().enumerate() {
                let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / m;
                let var = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / m;
                let sd = var.sqrt();
                map.offset[j] = mean;
                map.factor[j] = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
                for &i in &rows {
                    col[i] = if sd > 1e-12 {
                        (col[i] - mean) / sd
                    } else {
                        0.0
                    };
                }
            }
            maps.push(match &self.scaling {
                Some(prev) => prev[v].then(&map),
                None => map,
            });
        }
        out.scaling = Some(maps);
        out
    }

    /// Column scaling applied by [`normalized`](Self::normalized), if any.
    pub fn scaling(&self) -> Option<&[ViewScaling]> {
        self.scaling.as_deref()
    }

    /// Returns a copy with a replaced observation mask (rows newly masked are zeroed).
    pub fn with_mask(&self, mask: Array2<bool>) -> Result<Self> {
        let mut out = Self::new(
            self.views.clone(),
            mask,
            self.truth.clone(),
            self.labeled_idx.clone(),
            self.class_count,
        )?;
        out.scaling = self.scaling.clone();
        Ok(out)
    }

    /// Returns a copy with a different labeled set.
    pub fn with_labeled(&self, labeled_idx: Vec<usize>) -> Result<Self> {
        let mut out = Self::new(
            self.views.clone(),
            self.mask.clone(),
            self.truth.clone(),
            labeled_idx,
            self.class_count,
        )?;
        out.scaling = self.scaling.clone();
        Ok(out)
    }

    /// Returns a copy with views replaced (mask reset to all-observed).
    pub(crate) fn with_views_complete(&self, views: Vec<Array2<f64>>) -> Result<Self> {
        let (n, v) = self.mask.dim();
        let mut out = Self::new(
            views,
            Array2::from_elem((n, v), true),
            self.truth.clone(),
            self.labeled_idx.clone(),
            self.class_count,
        )?;
        out.scaling = self.scaling.clone();
        Ok(out)
    }
}

/// How missing rows are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Views are masked one after another, each drawing uniformly among the
    /// instances that would still keep an observed view; whole draws are
    /// retried when a later view runs out of eligible instances.
    #[default]
    Sequential,
    /// Each view drawn independently over all instances; rejected draws are
    /// retried until every instance keeps a view.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub missing_rates: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub policy: MaskPolicy,
}

impl MaskSpec {
    pub fn uniform(rate: f64, views: usize, seed: u64) -> Self {
        Self {
            missing_rates: vec![rate; views],
            seed,
            policy: MaskPolicy::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labeled_rate: f64,
    pub seed: u64,
    pub stratified: bool,
}

/// Removes `floor(rate * N)` instances from each view of a complete dataset.
pub fn generate_mask(dataset: &MultiViewDataset, spec: &MaskSpec) -> Result<MultiViewDataset> {
    let n = dataset.n_instances();
    let nv = dataset.n_views();
    if spec.missing_rates.len() != nv {
        return Err(Error::DimensionMismatch(format!(
            "{} missing rates for {nv} views",
            spec.missing_rates.len()
        )));
    }
    if !dataset.is_complete() {
        return Err(Error::InvalidDataset(
            "mask generation needs a fully observed dataset".into(),
        ));
    }
    for &r in &spec.missing_rates {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InfeasibleMask(format!("rate {r} outside [0, 1)")));
        }
    }
    let counts: Vec<usize> = spec
        .missing_rates
        .iter()
        .map(|&r| (r * n as f64).floor() as usize)
        .collect();
    let total: usize = counts.iter().sum();
    // Every instance may be missing in at most V-1 views.
    if total > (nv - 1) * n {
        return Err(Error::InfeasibleMask(format!(
            "{total} removals cannot leave each of {n} instances observed in one of {nv} views"
        )));
    }
    if total == 0 {
        return Ok(dataset.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..MASK_RETRY_BUDGET {
        let attempt = match spec.policy {
            MaskPolicy::Sequential => draw_sequential(n, &counts, &mut rng),
            MaskPolicy::Independent => draw_independent(n, &counts, &mut rng),
        };
        if let Some(mask) = attempt {
            return dataset.with_mask(mask);
        }
    }
    Err(Error::RetryBudgetExhausted(MASK_RETRY_BUDGET))
}

fn draw_sequential(n: usize, counts: &[usize], rng: &mut ChaCha8Rng) -> Option<Array2<bool>> {
    let nv = counts.len();
    let mut mask = Array2::from_elem((n, nv), true);
    let mut observed = vec![nv; n];
    for (v, &count) in counts.iter().enumerate() {
        let mut eligible: Vec<usize> = (0..n).filter(|&i| observed[i] > 1).collect();
        if eligible.len() < count {
            return None;
        }
        let (chosen, _) = eligible.partial_shuffle(rng, count);
        for &i in chosen.iter() {
            mask[[i, v]] = false;
            observed[i] -= 1;
        }
    }
    Some(mask)
}

fn draw_independent(n: usize, counts: &[usize], rng: &mut ChaCha8Rng) -> Option<Array2<bool>> {
    let nv = counts.len();
    let mut mask = Array2::from_elem((n, nv), true);
    for (v, &count) in counts.iter().enumerate() {
        let mut all: Vec<usize> = (0..n).collect();
        let (chosen, _) = all.partial_shuffle(rng, count);
        for &i in chosen.iter() {
            mask[[i, v]] = false;
        }
    }
    let ok = mask.rows().into_iter().all(|r| r.iter().any(|&o| o));
    ok.then_some(mask)
}

/// Draws `round(rate * N)` labeled instances, optionally stratified by class.
pub fn generate_split(dataset: &MultiViewDataset, spec: &SplitSpec) -> Result<MultiViewDataset> {
    let n = dataset.n_instances();
    let c = dataset.class_count();
    if !(spec.labeled_rate > 0.0 && spec.labeled_rate <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "labeled rate {} outside (0, 1]",
            spec.labeled_rate
        )));
    }
    let labels: Vec<usize> = dataset
        .truth()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.ok_or_else(|| {
                Error::InvalidDataset(format!("instance {i} has no ground-truth label"))
            })
        })
        .collect::<Result<_>>()?;
    let target = (spec.labeled_rate * n as f64).round() as usize;
    if target < c {
        return Err(Error::LabeledRateTooSmall {
            rate: spec.labeled_rate,
            labeled: target,
            classes: c,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut chosen: Vec<usize> = if spec.stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        if let Some(empty) = by_class.iter().position(|m| m.is_empty()) {
            return Err(Error::InvalidDataset(format!(
                "class {empty} has no instances"
            )));
        }
        let sizes: Vec<usize> = by_class.iter().map(|m| m.len()).collect();
        let alloc = stratified_allocation(&sizes, target);
        let mut picked = Vec::with_capacity(target);
        for (members, &k) in by_class.iter_mut().zip(&alloc) {
            let (sel, _) = members.partial_shuffle(&mut rng, k);
            picked.extend_from_slice(sel);
        }
        picked
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        let (sel, _) = all.partial_shuffle(&mut rng, target);
        sel.to_vec()
    };
    chosen.sort_unstable();
    dataset.with_labeled(chosen)
}

/// Per-class labeled counts: proportional (largest remainder), at least one each.
fn stratified_allocation(sizes: &[usize], target: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let ideal: Vec<f64> = sizes
        .iter()
        .map(|&s| target as f64 * s as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = ideal
        .iter()
        .zip(sizes)
        .map(|(&x, &s)| (x.floor() as usize).clamp(1, s))
        .collect();
    loop {
        let total: usize = alloc.iter().sum();
        if total == target {
            break;
        }
        if total < target {
            let pick = (0..sizes.len())
                .filter(|&k| alloc[k] < sizes[k])
                .max_by(|&a, &b| {
                    (ideal[a] - alloc[a] as f64)
                        .total_cmp(&(ideal[b] - alloc[b] as f64))
                        .then(b.cmp(&a))
                });
            match pick {
                Some(k) => alloc[k] += 1,
                None => break,
            }
        } else {
            let pick = (0..sizes.len()).filter(|&k| alloc[k] > 1).min_by(|&a, &b| {
                (ideal[a] - alloc[a] as f64)
                    .total_cmp(&(ideal[b] - alloc[b] as f64))
                    .then(a.cmp(&b))
            });
            match pick {
                Some(k) => alloc[k] -= 1,
                None => break,
            }
        }
    }
    alloc
}

/// Options for [`load_dataset`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Number of classes; inferred as `max label + 1` when absent.
    pub class_count: Option<usize>,
    /// Skip z-score normalization.
    pub raw: bool,
}

/// Loads headerless CSV views, a label file and an optional 0/1 mask file.
///
/// A label of `-1` marks an instance as unlabeled; if any such entry exists,
/// the file defines the split. Otherwise every instance starts labeled.
pub fn load_dataset(
    view_paths: &[impl AsRef<Path>],
    label_path: impl AsRef<Path>,
    mask_path: Option<&Path>,
    options: &LoadOptions,
) -> Result<MultiViewDataset> {
    if view_paths.is_empty() {
        return Err(Error::InvalidDataset("no view files given".into()));
    }
    let views = view_paths
        .iter()
        .map(|p| read_matrix(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let n = views[0].nrows();
    for (p, x) in view_paths.iter().zip(&views) {
        if x.nrows() != n {
            return Err(Error::RowCountMismatch {
                what: p.as_ref().display().to_string(),
                expected: n,
                found: x.nrows(),
            });
        }
    }
    let raw_labels = read_labels(label_path.as_ref())?;
    if raw_labels.len() != n {
        return Err(Error::RowCountMismatch {
            what: label_path.as_ref().display().to_string(),
            expected: n,
            found: raw_labels.len(),
        });
    }
    let truth: Vec<Option<usize>> = raw_labels
        .iter()
        .map(|&l| (l >= 0).then_some(l as usize))
        .collect();
    let class_count = match options.class_count {
        Some(c) => c,
        None => truth.iter().flatten().max().map_or(0, |&m| m + 1),
    };
    let labeled: Vec<usize> = (0..n).filter(|&i| truth[i].is_some()).collect();

    let mask = match mask_path {
        Some(p) => {
            let m = read_matrix(p)?;
            if m.dim() != (n, views.len()) {
                return Err(Error::DimensionMismatch(format!(
                    "mask file {} is {:?}, expected ({n}, {})",
                    p.display(),
                    m.dim(),
                    views.len()
                )));
            }
            m.mapv(|x| x != 0.0)
        }
        None => Array2::from_elem((n, views.len()), true),
    };

    let ds = MultiViewDataset::new(views, mask, truth, labeled, class_count)?;
    Ok(if options.raw { ds } else { ds.normalized() })
}

/// Reads a headerless numeric CSV.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match ncols {
            None => ncols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::DimensionMismatch(format!(
                    "{}:{}: {} columns, expected {c}",
                    path.display(),
                    line + 1,
                    rec.len()
                )))
            }
            _ => {}
        }
        for cell in rec.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line + 1,
                value: cell.to_string(),
            })?;
            data.push(v);
        }
        nrows += 1;
    }
    let ncols = ncols.unwrap_or(0);
    Array2::from_shape_vec((nrows, ncols), data)
        .map_err(|e| Error::DimensionMismatch(format!("{}: {e}", path.display())))
}

fn read_labels(path: &Path) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(line, l)| {
            let t = l.trim();
            let v: f64 = t.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line + 1,
                value: t.to_string(),
            })?;
            if v.fract() != 0.0 || v < -1.0 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line + 1,
                    value: t.to_string(),
                });
            }
            Ok(v as i64)
        })
        .collect()
}

/// Writes a matrix as headerless CSV.
pub fn write_matrix(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|x| format!("{x}")))
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One-hot rows for the given class indices.
pub fn one_hot(labels: &[usize], class_count: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), class_count));
    for (i, &c) in labels.iter().enumerate() {
        y[[i, c]] = 1.0;
    }
    y
}

/// Column means over the observed rows of one view.
pub(crate) fn observed_column_means(ds: &MultiViewDataset, v: usize) -> Array1<f64> {
    let obs = ds.observed_view(v);
    obs.mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(ds.view(v).ncols()))
}
