//! Accuracy, the Friedman rank test and the Holm step-down post-hoc test.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidParameter("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Mean accuracies, algorithms (rows) by datasets (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMatrix {
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    pub values: Array2<f64>,
}

impl TrialMatrix {
    pub fn new(
        algorithms: Vec<String>,
        datasets: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.dim() != (algorithms.len(), datasets.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{:?} values for {} algorithms x {} datasets",
                values.dim(),
                algorithms.len(),
                datasets.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "accuracy {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            algorithms,
            datasets,
            values,
        })
    }

    /// Header row holds dataset names (first cell ignored); each following
    /// row is an algorithm name and its accuracies.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        let datasets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut algorithms = Vec::new();
        let mut flat = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            if rec.len() != datasets.len() + 1 {
                return Err(Error::RowCountMismatch {
                    what: format!("columns on line {}", line + 2),
                    expected: datasets.len() + 1,
                    found: rec.len(),
                });
            }
            algorithms.push(rec[0].to_string());
            for cell in rec.iter().skip(1) {
                flat.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: line + 2,
                    value: cell.to_string(),
                })?);
            }
        }
        let values = Array2::from_shape_vec((algorithms.len(), datasets.len()), flat)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(algorithms, datasets, values)
    }
}

/// Ranks of `scores` with the largest score ranked 1 and ties sharing the
/// average of the ranks they span.
pub fn average_ranks_desc(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub average_ranks: Vec<f64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Friedman statistic from average ranks over `n_datasets` datasets.
pub fn friedman_from_ranks(average_ranks: &[f64], n_datasets: usize) -> Result<FriedmanResult> {
    let k = average_ranks.len();
    if k < 2 || n_datasets < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 algorithms and 2 datasets, got {k} x {n_datasets}"
        )));
    }
    let (kf, nf) = (k as f64, n_datasets as f64);
    let sum_sq: f64 = average_ranks.iter().map(|r| r * r).sum();
    let raw = 12.0 * nf / (kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    // Rounding can push a fully tied table a hair below zero.
    let statistic = if raw.abs() < 1e-9 * 3.0 * nf * (kf + 1.0) {
        0.0
    } else {
        raw
    };
    let df = k - 1;
    Ok(FriedmanResult {
        average_ranks: average_ranks.to_vec(),
        statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64),
    })
}

pub fn friedman_test(trials: &TrialMatrix) -> Result<FriedmanResult> {
    let (k, n) = trials.values.dim();
    if k < 2 || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 algorithms and 2 datasets, got {k} x {n}"
        )));
    }
    let mut sums = vec![0.0; k];
    for col in trials.values.columns() {
        let r = average_ranks_desc(&col.to_vec());
        for (s, r) in sums.iter_mut().zip(r) {
            *s += r;
        }
    }
    let avg: Vec<f64> = sums.into_iter().map(|s| s / n as f64).collect();
    friedman_from_ranks(&avg, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmRow {
    /// Index of the compared algorithm in the input order.
    pub algorithm: usize,
    /// Divisor of `alpha` for this row (number of hypotheses still open).
    pub step: usize,
    pub z: f64,
    pub p_value: f64,
    pub threshold: f64,
    pub reject: bool,
}

/// Standard error of an average-rank difference.
pub fn rank_standard_error(k: usize, n_datasets: usize) -> f64 {
    let k = k as f64;
    (k * (k + 1.0) / (6.0 * n_datasets as f64)).sqrt()
}

/// Holm step-down comparison of every algorithm against `control`.
///
/// Rows come out most significant first (descending z; equal z puts the later
/// algorithm first). Row `r` is tested at `alpha / (m - r)` for `m`
/// comparisons, and rejection stops at the first row that fails.
pub fn holm_test(
    ranks: &[f64],
    control: usize,
    n_datasets: usize,
    alpha: f64,
) -> Result<Vec<HolmRow>> {
    let k = ranks.len();
    if control >= k {
        return Err(Error::InvalidParameter(format!(
            "control index {control} out of range for {k} algorithms"
        )));
    }
    if k < 2 || n_datasets == 0 {
        return Err(Error::InvalidParameter(
            "need 2 algorithms and 1 dataset".into(),
        ));
    }
    let se = rank_standard_error(k, n_datasets);
    let mut rows: Vec<(usize, f64)> = (0..k)
        .filter(|&i| i != control)
        .map(|i| (i, (ranks[i] - ranks[control]) / se))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
    let m = rows.len();
    let mut open = true;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(r, (i, z))| {
            let step = m - r;
            let threshold = alpha / step as f64;
            let p_value = normal_two_sided_p(z);
            open = open && p_value < threshold;
            HolmRow {
                algorithm: i,
                step,
                z,
                p_value,
                threshold,
                reject: open,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanReport {
    pub algorithms: Vec<String>,
    pub n_datasets: usize,
    pub friedman: FriedmanResult,
    pub control: usize,
    pub alpha: f64,
    pub holm: Vec<HolmRow>,
}

impl FriedmanReport {
    /// Friedman test, then Holm against the best-ranked algorithm (lowest
    /// index on ties) unless `control` is given.
    pub fn from_ranks(
        algorithms: Vec<String>,
        average_ranks: &[f64],
        n_datasets: usize,
        control: Option<usize>,
        alpha: f64,
    ) -> Result<Self> {
        if algorithms.len() != average_ranks.len() {
            return Err(Error::DimensionMismatch(
                "names and ranks differ in length".into(),
            ));
        }
        let friedman = friedman_from_ranks(average_ranks, n_datasets)?;
        let control = control.unwrap_or_else(|| {
            (0..average_ranks.len()).fold(0, |b, i| {
                if average_ranks[i] < average_ranks[b] {
                    i
                } else {
                    b
                }
            })
        });
        let holm = holm_test(average_ranks, control, n_datasets, alpha)?;
        Ok(Self {
            algorithms,
            n_datasets,
            friedman,
            control,
            alpha,
            holm,
        })
    }

    pub fn from_trials(trials: &TrialMatrix, control: Option<usize>, alpha: f64) -> Result<Self> {
        let f = friedman_test(trials)?;
        Self::from_ranks(
            trials.algorithms.clone(),
            &f.average_ranks,
            trials.datasets.len(),
            control,
            alpha,
        )
    }

    /// One `algorithm,average_rank` row per algorithm (with the Friedman
    /// statistic repeated on each) and the Holm table, as two CSV files.
    pub fn write_csv(&self, ranks_path: &Path, holm_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(ranks_path).map_err(|e| Error::csv(ranks_path, e))?;
        w.write_record(["algorithm", "average_rank", "chi_square", "df", "p_value"])
            .map_err(|e| Error::csv(ranks_path, e))?;
        for (name, r) in self.algorithms.iter().zip(&self.friedman.average_ranks) {
            w.write_record([
                name.clone(),
                r.to_string(),
                self.friedman.statistic.to_string(),
                self.friedman.df.to_string(),
                self.friedman.p_value.to_string(),
            ])
            .map_err(|e| Error::csv(ranks_path, e))?;
        }
        w.flush().map_err(|e| Error::io(ranks_path, e))?;

        let mut w = csv::Writer::from_path(holm_path).map_err(|e| Error::csv(holm_path, e))?;
        w.write_record([
            "i",
            "algorithm",
            "control",
            "z",
            "p_value",
            "holm_threshold",
            "reject",
        ])
        .map_err(|e| Error::csv(holm_path, e))?;
        for row in &self.holm {
            w.write_record([
                row.step.to_string(),
                self.algorithms[row.algorithm].clone(),
                self.algorithms[self.control].clone(),
                row.z.to_string(),
                row.p_value.to_string(),
                row.threshold.to_string(),
                row.reject.to_string(),
            ])
            .map_err(|e| Error::csv(holm_path, e))?;
        }
        w.flush().map_err(|e| Error::io(holm_path, e))
    }

    pub fn to_text(&self) -> String {
        let width = self
            .algorithms
            .iter()
            .map(|a| a.len())
            .max()
            .unwrap_or(9)
            .max(9);
        let mut s = String::new();
        let f = &self.friedman;
        let _ = writeln!(
            s,
            "Friedman: chi2 = {:.6}, df = {}, p = {:.6e} ({} datasets)",
            f.statistic, f.df, f.p_value, self.n_datasets
        );
        let _ = writeln!(s, "\n{:<width$}  {:>8}", "Algorithm", "Rank");
        for (name, r) in self.algorithms.iter().zip(&f.average_ranks) {
            let _ = writeln!(s, "{name:<width$}  {r:>8.3}");
        }
        let _ = writeln!(
            s,
            "\nHolm vs {} (alpha = {})\n{:>2}  {:<width$}  {:>10}  {:>10}  {:>10}  Decision",
            self.algorithms[self.control], self.alpha, "i", "Algorithm", "z", "p", "alpha/i",
        );
        for row in &self.holm {
            let _ = writeln!(
                s,
                "{:>2}  {:<width$}  {:>10.6}  {:>10.6}  {:>10.6}  {}",
                row.step,
                self.algorithms[row.algorithm],
                row.z,
                row.p_value,
                row.threshold,
                if row.reject { "Reject" } else { "Not reject" }
            );
        }
        s
    }
}

// Distribution tails. Regularized incomplete gamma by series / Lentz continued
// fraction; accurate to ~1e-14 over the ranges used here.

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9.
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper regularized incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// `P(X > x)` for a chi-square variable with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}

/// Complementary error function via `erfc(x) = Q(1/2, x^2)` for `x >= 0`.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else {
        gamma_q(0.5, x * x)
    }
}

/// `P(|Z| >= |z|)` for a standard normal `Z`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks_desc(&[0.9, 0.5, 0.9, 0.1]),
            vec![1.5, 3.0, 1.5, 4.0]
        );
        assert_eq!(average_ranks_desc(&[0.3, 0.3, 0.3]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn strict_order_fixture() {
        let m = TrialMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            (0..4).map(|d| format!("d{d}")).collect(),
            array![
                [0.9, 0.8, 0.7, 0.95],
                [0.5, 0.6, 0.4, 0.5],
                [0.1, 0.2, 0.3, 0.4]
            ],
        )
        .unwrap();
        let f = friedman_test(&m).unwrap();
        assert_eq!(f.average_ranks, vec![1.0, 2.0, 3.0]);
        assert!((f.statistic - 8.0).abs() < 1e-12);
        assert!((f.p_value - (-4.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn all_ties_fixture() {
        let m = TrialMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            array![[0.5, 0.7], [0.5, 0.7]],
        )
        .unwrap();
        let f = friedman_test(&m).unwrap();
        assert_eq!(f.statistic, 0.0);
        assert_eq!(f.p_value, 1.0);
    }

    #[test]
    fn equal_rank_is_never_rejected() {
        let rows = holm_test(&[2.0, 2.0], 0, 5, 0.05).unwrap();
        assert_eq!(rows[0].z, 0.0);
        assert_eq!(rows[0].p_value, 1.0);
        assert!(!rows[0].reject);
    }

    #[test]
    fn control_out_of_range() {
        assert!(holm_test(&[1.0, 2.0], 2, 5, 0.05).is_err());
    }

    #[test]
    fn tails_at_known_points() {
        assert!((normal_two_sided_p(1.959963984540054) - 0.05).abs() < 1e-14);
        assert!((chi_square_sf(2.0, 2.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((erfc(0.5) - 0.479_500_122_186_953_5).abs() < 1e-15);
    }
}
