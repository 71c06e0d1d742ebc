//! TSK antecedents, the fuzzy-rule feature mapping and linguistic rule readout.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};

pub const DEFAULT_WIDTH_FLOOR: f64 = 1e-6;

/// Gaussian antecedents of one view: `K` rules over `d` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRuleBase {
    centers: Array2<f64>,
    widths: Array2<f64>,
}

impl FuzzyRuleBase {
    pub fn new(centers: Array2<f64>, widths: Array2<f64>, width_floor: f64) -> Result<Self> {
        if centers.dim() != widths.dim() {
            return Err(Error::DimensionMismatch(format!(
                "centers {:?} vs widths {:?}",
                centers.dim(),
                widths.dim()
            )));
        }
        if centers.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "rule base needs at least one rule".into(),
            ));
        }
        if !(width_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "width floor must be positive, got {width_floor}"
            )));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite rule center".into()));
        }
        if widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter(
                "rule widths must be positive".into(),
            ));
        }
        let widths = widths.mapv(|w| w.max(width_floor));
        Ok(Self { centers, widths })
    }

    pub fn rule_count(&self) -> usize {
        self.centers.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.centers.ncols()
    }

    /// Width of the fuzzy-space row, `K (d + 1)`.
    pub fn design_dim(&self) -> usize {
        self.rule_count() * (self.input_dim() + 1)
    }

    pub fn centers(&self) -> ArrayView2<'_, f64> {
        self.centers.view()
    }

    pub fn widths(&self) -> ArrayView2<'_, f64> {
        self.widths.view()
    }
}

/// `exp(-(x - center)^2 / (2 width))`.
pub fn gaussian_membership(x: f64, center: f64, width: f64) -> Result<f64> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "membership width must be positive, got {width}"
        )));
    }
    Ok((-(x - center).powi(2) / (2.0 * width)).exp())
}

/// Normalized firing strengths of every rule for one input.
///
/// Products of memberships are accumulated in the log domain, so inputs far
/// from every center still resolve to their nearest rules instead of an
/// all-zero vector. Only when no rule yields a finite log-strength does the
/// result fall back to uniform `1/K`.
pub fn firing_strengths(x: ArrayView1<'_, f64>, rules: &FuzzyRuleBase) -> Vec<f64> {
    let k = rules.rule_count();
    let logs: Vec<f64> = rules
        .centers
        .rows()
        .into_iter()
        .zip(rules.widths.rows())
        .map(|(c, w)| {
            -x.iter()
                .zip(c.iter())
                .zip(w.iter())
                .map(|((&xi, &ci), &wi)| (xi - ci).powi(2) / (2.0 * wi))
                .sum::<f64>()
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![1.0 / k as f64; k];
    }
    let raw: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return vec![1.0 / k as f64; k];
    }
    raw.into_iter().map(|r| r / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntecedentOptions {
    /// Scale applied to the within-cluster variance to obtain a width.
    pub width_scale: f64,
    pub width_floor: f64,
}

impl Default for AntecedentOptions {
    fn default() -> Self {
        Self {
            width_scale: 1.0,
            width_floor: DEFAULT_WIDTH_FLOOR,
        }
    }
}

/// Variance-partitioning clustering of the observed rows of one view.
///
/// Starts from one cluster and performs `K - 1` splits. Each split takes the
/// cluster with the largest within-cluster sum of squares and cuts it at the
/// mean of its highest-variance feature. No randomness is involved.
pub fn estimate_antecedents(
    data: ArrayView2<'_, f64>,
    rule_count: usize,
    opts: &AntecedentOptions,
) -> Result<FuzzyRuleBase> {
    let (n, d) = data.dim();
    if rule_count == 0 {
        return Err(Error::InvalidParameter(
            "rule count must be at least 1".into(),
        ));
    }
    if rule_count > n {
        return Err(Error::Clustering {
            requested: rule_count,
            reason: format!("only {n} observed rows"),
        });
    }
    if !(opts.width_scale > 0.0) {
        return Err(Error::InvalidParameter(
            "width scale must be positive".into(),
        ));
    }

    let mut clusters: Vec<Vec<usize>> = vec![(0..n).collect()];
    while clusters.len() < rule_count {
        let mut order: Vec<(usize, f64)> = clusters
            .iter()
            .enumerate()
            .map(|(ci, members)| (ci, cluster_stats(data, members).2))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut split = None;
        for &(ci, sse) in &order {
            if sse <= 0.0 {
                break;
            }
            let members = &clusters[ci];
            let (mean, var, _) = cluster_stats(data, members);
            let dim = (0..d)
                .max_by(|&a, &b| var[a].total_cmp(&var[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            let (left, right): (Vec<usize>, Vec<usize>) =
                members.iter().partition(|&&i| data[[i, dim]] <= mean[dim]);
            if !left.is_empty() && !right.is_empty() {
                split = Some((ci, left, right));
                break;
            }
        }
        match split {
            Some((ci, left, right)) => {
                clusters[ci] = left;
                clusters.push(right);
            }
            None => {
                return Err(Error::Clustering {
                    requested: rule_count,
                    reason: format!("no splittable cluster after {} clusters", clusters.len()),
                })
            }
        }
    }

    let mut centers = Array2::zeros((rule_count, d));
    let mut widths = Array2::zeros((rule_count, d));
    for (k, members) in clusters.iter().enumerate() {
        let (mean, var, _) = cluster_stats(data, members);
        centers.row_mut(k).assign(&mean);
        widths
            .row_mut(k)
            .assign(&var.mapv(|v| (opts.width_scale * v).max(opts.width_floor)));
    }
    FuzzyRuleBase::new(centers, widths, opts.width_floor)
}

/// (mean, population variance per feature, total sum of squares)
fn cluster_stats(data: ArrayView2<'_, f64>, members: &[usize]) -> (Array1<f64>, Array1<f64>, f64) {
    let sub = data.select(Axis(0), members);
    let m = members.len() as f64;
    let mean = sub.sum_axis(Axis(0)) / m;
    let centered = &sub - &mean;
    let ss = centered.mapv(|x| x * x).sum_axis(Axis(0));
    let total = ss.sum();
    (mean, ss / m, total)
}

/// Fuzzy-space row `[mu_1 [1, x], ..., mu_K [1, x]]` for one input.
pub fn map_row(x: ArrayView1<'_, f64>, rules: &FuzzyRuleBase) -> Result<Array1<f64>> {
    let d = rules.input_dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "input has {} features, rule base expects {d}",
            x.len()
        )));
    }
    let mu = firing_strengths(x, rules);
    let mut out = Array1::zeros(rules.design_dim());
    for (k, &m) in mu.iter().enumerate() {
        let base = k * (d + 1);
        out[base] = m;
        for (j, &xj) in x.iter().enumerate() {
            out[base + 1 + j] = m * xj;
        }
    }
    Ok(out)
}

/// Per-view fuzzy-space design matrices; masked rows are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyDesign {
    pub matrices: Vec<Array2<f64>>,
}

impl FuzzyDesign {
    pub fn n_views(&self) -> usize {
        self.matrices.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.matrices.iter().map(|m| m.ncols()).collect()
    }
}

pub fn map_to_fuzzy_space(
    dataset: &MultiViewDataset,
    rules: &[FuzzyRuleBase],
) -> Result<FuzzyDesign> {
    if rules.len() != dataset.n_views() {
        return Err(Error::DimensionMismatch(format!(
            "{} rule bases for {} views",
            rules.len(),
            dataset.n_views()
        )));
    }
    let n = dataset.n_instances();
    let mut matrices = Vec::with_capacity(rules.len());
    for (v, rb) in rules.iter().enumerate() {
        if rb.input_dim() != dataset.view(v).ncols() {
            return Err(Error::DimensionMismatch(format!(
                "view {v} has {} features, rule base expects {}",
                dataset.view(v).ncols(),
                rb.input_dim()
            )));
        }
        let mut m = Array2::zeros((n, rb.design_dim()));
        for i in 0..n {
            if dataset.is_observed(i, v) {
                m.row_mut(i).assign(&map_row(dataset.view(v).row(i), rb)?);
            }
        }
        matrices.push(m);
    }
    Ok(FuzzyDesign { matrices })
}

/// Linguistic names for `k` ranked fuzzy sets, lowest center first.
pub fn linguistic_labels(k: usize) -> Vec<String> {
    let fixed: &[&str] = match k {
        0 => &[],
        1 => &["Medium"],
        2 => &["Low", "High"],
        3 => &["Low", "Medium", "High"],
        4 => &["Low", "Medium", "Little High", "High"],
        5 => &["Very Low", "Low", "Medium", "High", "Very High"],
        _ => {
            return (0..k)
                .map(|r| match r {
                    0 => "Low".to_string(),
                    r if r + 1 == k => "High".to_string(),
                    r => format!("Level {}/{}", r + 1, k),
                })
                .collect()
        }
    };
    fixed.iter().map(|s| s.to_string()).collect()
}

/// One exported rule: IF-part labels and THEN-part coefficients per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub rule: usize,
    /// Linguistic label of each feature's fuzzy set in this rule.
    pub labels: Vec<String>,
    /// `coefficients[c]` holds `p_0, p_1, ..., p_d` of class `c`.
    pub coefficients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleExport {
    pub feature_names: Vec<String>,
    pub rules: Vec<RuleRecord>,
}

/// Reads out the trained rules of one view.
///
/// Each feature's `K` centers are ranked and named; the consequent matrix is
/// sliced into the `(d + 1)`-coefficient linear function of every class.
pub fn export_rules(
    rules: &FuzzyRuleBase,
    consequents: ArrayView2<'_, f64>,
    feature_names: &[String],
) -> Result<RuleExport> {
    let k = rules.rule_count();
    let d = rules.input_dim();
    if consequents.nrows() != rules.design_dim() {
        return Err(Error::DimensionMismatch(format!(
            "consequent matrix has {} rows, expected {}",
            consequents.nrows(),
            rules.design_dim()
        )));
    }
    let names: Vec<String> = if feature_names.len() == d {
        feature_names.to_vec()
    } else {
        (1..=d).map(|j| format!("x{j}")).collect()
    };
    let vocab = linguistic_labels(k);

    // rank[k][j] = position of rule k's center among the K centers of feature j
    let mut rank = vec![vec![0usize; d]; k];
    for j in 0..d {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            rules.centers[[a, j]]
                .total_cmp(&rules.centers[[b, j]])
                .then(a.cmp(&b))
        });
        for (r, &rule) in order.iter().enumerate() {
            rank[rule][j] = r;
        }
    }

    let records = (0..k)
        .map(|rule| RuleRecord {
            rule,
            labels: (0..d).map(|j| vocab[rank[rule][j]].clone()).collect(),
            coefficients: consequents
                .slice(s![rule * (d + 1)..(rule + 1) * (d + 1), ..])
                .columns()
                .into_iter()
                .map(|c| c.to_vec())
                .collect(),
        })
        .collect();
    Ok(RuleExport {
        feature_names: names,
        rules: records,
    })
}

impl RuleExport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            let conds: Vec<String> = self
                .feature_names
                .iter()
                .zip(&r.labels)
                .map(|(f, l)| format!("{f} is {l}"))
                .collect();
            let _ = writeln!(out, "Rule {}: IF {}", r.rule + 1, conds.join(" AND "));
            let _ = writeln!(out, "  THEN");
            for (c, coef) in r.coefficients.iter().enumerate() {
                let mut line = format!("{:.4}", coef[0]);
                for (j, &p) in coef.iter().enumerate().skip(1) {
                    let sign = if p < 0.0 { '-' } else { '+' };
                    let _ = write!(line, " {sign} {:.4}*{}", p.abs(), self.feature_names[j - 1]);
                }
                let _ = writeln!(out, "    f{}(x) = {line}", c + 1);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rb(centers: Array2<f64>, widths: Array2<f64>) -> FuzzyRuleBase {
        FuzzyRuleBase::new(centers, widths, DEFAULT_WIDTH_FLOOR).unwrap()
    }

    #[test]
    fn membership_values() {
        assert_eq!(gaussian_membership(2.5, 2.5, 0.3).unwrap(), 1.0);
        let v = gaussian_membership(1.0, 0.0, 0.5).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
        assert!(gaussian_membership(1.0, 0.0, 0.0).is_err());
        assert!(gaussian_membership(1e6, 0.0, 1.0).unwrap() < 1e-300);
    }

    #[test]
    fn membership_decreases_with_distance() {
        let mut prev = 1.0;
        for step in 1..50 {
            let m = gaussian_membership(step as f64 * 0.2, 0.0, 0.7).unwrap();
            assert!(m < prev);
            prev = m;
        }
    }

    #[test]
    fn single_rule_strength_is_one() {
        let r = rb(array![[0.0, 0.0]], array![[1.0, 1.0]]);
        assert_eq!(firing_strengths(array![3.0, -2.0].view(), &r), vec![1.0]);
    }

    #[test]
    fn symmetric_point_splits_evenly() {
        let r = rb(array![[-1.0], [1.0]], array![[0.5], [0.5]]);
        let mu = firing_strengths(array![0.0].view(), &r);
        assert_eq!(mu, vec![0.5, 0.5]);
    }

    #[test]
    fn far_point_resolves_to_nearest_rule() {
        let r = rb(array![[0.0], [10.0]], array![[1e-6], [1e-6]]);
        let mu = firing_strengths(array![1e4].view(), &r);
        assert_eq!(mu, vec![0.0, 1.0]);
    }

    #[test]
    fn var_part_two_clusters() {
        let data = array![[0.0], [0.0], [10.0], [10.0]];
        let r = estimate_antecedents(data.view(), 2, &AntecedentOptions::default()).unwrap();
        let mut c: Vec<f64> = r.centers().column(0).to_vec();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 10.0]);
        assert!(r.widths().iter().all(|&w| w == DEFAULT_WIDTH_FLOOR));
    }

    #[test]
    fn var_part_single_cluster_is_global_moments() {
        let data = array![[1.0, 2.0], [3.0, 2.0], [5.0, 8.0]];
        let opts = AntecedentOptions {
            width_scale: 2.0,
            ..Default::default()
        };
        let r = estimate_antecedents(data.view(), 1, &opts).unwrap();
        assert_eq!(r.centers().row(0).to_vec(), vec![3.0, 4.0]);
        let var0 = (4.0 + 0.0 + 4.0) / 3.0;
        let var1 = (4.0 + 4.0 + 16.0) / 3.0;
        assert!((r.widths()[[0, 0]] - 2.0 * var0).abs() < 1e-12);
        assert!((r.widths()[[0, 1]] - 2.0 * var1).abs() < 1e-12);
    }

    #[test]
    fn var_part_errors() {
        let data = array![[1.0], [2.0]];
        assert!(estimate_antecedents(data.view(), 3, &AntecedentOptions::default()).is_err());
        let same = array![[1.0], [1.0], [1.0]];
        assert!(matches!(
            estimate_antecedents(same.view(), 2, &AntecedentOptions::default()),
            Err(Error::Clustering { .. })
        ));
    }

    #[test]
    fn mapping_dimensions() {
        let r = rb(Array2::zeros((4, 6)), Array2::ones((4, 6)));
        assert_eq!(r.design_dim(), 28);
        let row = map_row(Array1::zeros(6).view(), &r).unwrap();
        assert_eq!(row.len(), 28);
        assert!(map_row(Array1::zeros(5).view(), &r).is_err());
    }

    #[test]
    fn single_rule_mapping_is_augmented_input() {
        let r = rb(array![[0.0, 0.0]], array![[1.0, 1.0]]);
        let row = map_row(array![0.25, -3.0].view(), &r).unwrap();
        assert_eq!(row.to_vec(), vec![1.0, 0.25, -3.0]);
    }

    #[test]
    fn masked_rows_map_to_zero() {
        let views = vec![array![[1.0], [2.0], [3.0]], array![[1.0], [1.0], [2.0]]];
        let mask = array![[true, true], [false, true], [true, true]];
        let ds = MultiViewDataset::new(
            views,
            mask,
            vec![Some(0), Some(1), Some(0)],
            vec![0, 1, 2],
            2,
        )
        .unwrap();
        let rules = vec![
            rb(array![[1.0], [3.0]], array![[1.0], [1.0]]),
            rb(array![[1.0]], array![[1.0]]),
        ];
        let design = map_to_fuzzy_space(&ds, &rules).unwrap();
        assert_eq!(design.dims(), vec![4, 2]);
        assert!(design.matrices[0].row(1).iter().all(|&x| x == 0.0));
        assert!(design.matrices[0].row(0).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn labels_for_four_rules_follow_center_order() {
        assert_eq!(
            linguistic_labels(4),
            vec!["Low", "Medium", "Little High", "High"]
        );
        assert_eq!(linguistic_labels(1), vec!["Medium"]);
        assert_eq!(linguistic_labels(7).len(), 7);
    }

    #[test]
    fn export_ranks_centers_and_slices_coefficients() {
        // Centers for feature 0 in rule order 3, 1, 4, 2 -> ranks High... as below.
        let centers = array![[0.9], [0.1], [1.5], [0.5]];
        let r = rb(centers, Array2::ones((4, 1)));
        let p = Array2::from_shape_fn((8, 2), |(i, c)| (i * 10 + c) as f64);
        let exp = export_rules(&r, p.view(), &["band".to_string()]).unwrap();
        let labels: Vec<&str> = exp.rules.iter().map(|r| r.labels[0].as_str()).collect();
        assert_eq!(labels, vec!["Little High", "Low", "High", "Medium"]);
        assert_eq!(exp.rules[1].coefficients[0], vec![20.0, 30.0]);
        assert_eq!(exp.rules[1].coefficients[1], vec![21.0, 31.0]);
        let text = exp.to_text();
        assert!(text.contains("Rule 2: IF band is Low"));
        assert!(text.contains("f2(x) = 21.0000 + 31.0000*band"));
    }

    #[test]
    fn export_checks_shapes() {
        let r = rb(Array2::zeros((2, 3)), Array2::ones((2, 3)));
        assert!(export_rules(&r, Array2::zeros((7, 2)).view(), &[]).is_err());
    }
}
