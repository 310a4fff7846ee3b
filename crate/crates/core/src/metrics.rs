//! Per-cell-type agreement metrics between predicted and true proportion
//! maps, and the cross-method accuracy score.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv::{self, Table};

const SSIM_C1: f64 = 0.01;
const SSIM_C2: f64 = 0.03;
const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Spots × cell-types matrix whose rows lie on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionMatrix {
    spot_ids: Vec<String>,
    type_order: Vec<String>,
    values: Array2<f64>,
}

impl ProportionMatrix {
    pub fn new(spot_ids: Vec<String>, type_order: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != spot_ids.len() || values.ncols() != type_order.len() {
            return Err(Error::shape(
                "proportion matrix",
                format!("{}x{}", spot_ids.len(), type_order.len()),
                format!("{}x{}", values.nrows(), values.ncols()),
            ));
        }
        for (id, row) in spot_ids.iter().zip(values.rows()) {
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "spot `{id}` has a negative or non-finite proportion"
                )));
            }
            let total = row.sum();
            if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "proportions of spot `{id}` sum to {total}, not 1"
                )));
            }
        }
        Ok(Self {
            spot_ids,
            type_order,
            values,
        })
    }

    pub fn spot_ids(&self) -> &[String] {
        &self.spot_ids
    }

    pub fn type_order(&self) -> &[String] {
        &self.type_order
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_spots(&self) -> usize {
        self.values.nrows()
    }

    /// Reorders rows and columns to match `spot_ids` and `type_order`.
    pub fn aligned_to(&self, spot_ids: &[String], type_order: &[String]) -> Result<Self> {
        if spot_ids.len() != self.spot_ids.len() {
            return Err(Error::IdMismatch(format!(
                "{} spots vs {} spots",
                spot_ids.len(),
                self.spot_ids.len()
            )));
        }
        if type_order.len() != self.type_order.len() {
            return Err(Error::IdMismatch(format!(
                "{} cell types vs {} cell types",
                type_order.len(),
                self.type_order.len()
            )));
        }
        let rows = positions(&self.spot_ids, spot_ids, "spot")?;
        let cols = positions(&self.type_order, type_order, "cell type")?;
        Ok(Self {
            spot_ids: spot_ids.to_vec(),
            type_order: type_order.to_vec(),
            values: self.values.select(Axis(0), &rows).select(Axis(1), &cols),
        })
    }

    pub fn from_tsv_str(source: &str, text: &str) -> Result<Self> {
        let table = Table::parse(source, text)?;
        table.expect_shape("id")?;
        let types = table.header[1..].to_vec();
        let mut ids = Vec::with_capacity(table.rows.len());
        let mut values = Array2::zeros((table.rows.len(), types.len()));
        for (r, (line, cells)) in table.rows.iter().enumerate() {
            ids.push(cells[0].clone());
            for (c, cell) in cells[1..].iter().enumerate() {
                values[[r, c]] = table.parse_number(*line, cell)?;
            }
        }
        Self::new(ids, types, values)
    }

    pub fn to_tsv_string(&self) -> String {
        tsv::render(
            std::iter::once("id").chain(self.type_order.iter().map(String::as_str)),
            self.spot_ids
                .iter()
                .zip(self.values.rows())
                .map(|(id, row)| (id.as_str(), row.to_vec())),
        )
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        tsv::write(path, &self.to_tsv_string())
    }
}

pub fn load_proportions(path: &Path) -> Result<ProportionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ProportionMatrix::from_tsv_str(&path.display().to_string(), &text)
}

fn positions(have: &[String], want: &[String], what: &str) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = have.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    want.iter()
        .map(|w| {
            index
                .get(w.as_str())
                .copied()
                .ok_or_else(|| Error::IdMismatch(format!("{what} `{w}` not found")))
        })
        .collect()
}

fn check_lengths(x: &[f64], x_hat: &[f64], min: usize) -> Result<()> {
    if x.len() != x_hat.len() {
        return Err(Error::shape("metric inputs", x.len(), x_hat.len()));
    }
    if x.len() < min {
        return Err(Error::InvalidArgument(format!(
            "metric needs at least {min} values, got {}",
            x.len()
        )));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population (1/n) variances and covariance.
fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let n = x.len() as f64;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        vx += da * da;
        vy += db * db;
        cov += da * db;
    }
    (mx, my, vx / n, vy / n, cov / n)
}

/// Pearson correlation; 0 when either input has zero variance.
pub fn pcc(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_lengths(x, x_hat, 2)?;
    let (_, _, vx, vy, cov) = moments(x, x_hat);
    let denom = (vx * vy).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((cov / denom).clamp(-1.0, 1.0))
}

fn min_max_scale(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        x.iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![0.0; x.len()]
    }
}

/// Global (single-window) SSIM on min-max scaled copies of both vectors.
pub fn ssim(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_lengths(x, x_hat, 2)?;
    let (x, y) = (min_max_scale(x), min_max_scale(x_hat));
    let (mx, my, vx, vy, cov) = moments(&x, &y);
    Ok(((2.0 * my * mx + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((my * my + mx * mx + SSIM_C1) * (vy + vx + SSIM_C2)))
}

pub fn rmse(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_lengths(x, x_hat, 1)?;
    let sq: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / x.len() as f64).sqrt())
}

fn to_distribution(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(
            "JS divergence needs nonnegative finite values".into(),
        ));
    }
    let total: f64 = x.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("JS divergence of a zero-sum vector".into()));
    }
    Ok(x.iter().map(|v| v / total).collect())
}

fn kl_base2(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).log2())
        .sum()
}

/// Jensen-Shannon divergence (base 2) between the normalized vectors.
pub fn js(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_lengths(x, x_hat, 1)?;
    let p = to_distribution(x)?;
    let q = to_distribution(x_hat)?;
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl_base2(&p, &m) + 0.5 * kl_base2(&q, &m)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub pcc: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub js: f64,
}

impl MetricSet {
    fn mean_of<'a>(sets: impl ExactSizeIterator<Item = &'a MetricSet>) -> MetricSet {
        let n = sets.len() as f64;
        let mut acc = MetricSet {
            pcc: 0.0,
            ssim: 0.0,
            rmse: 0.0,
            js: 0.0,
        };
        for s in sets {
            acc.pcc += s.pcc;
            acc.ssim += s.ssim;
            acc.rmse += s.rmse;
            acc.js += s.js;
        }
        MetricSet {
            pcc: acc.pcc / n,
            ssim: acc.ssim / n,
            rmse: acc.rmse / n,
            js: acc.js / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_type: IndexMap<String, MetricSet>,
    pub averages: MetricSet,
}

impl EvaluationReport {
    /// Rows are cell types followed by an `AVERAGE` row.
    pub fn to_tsv_string(&self) -> String {
        tsv::render(
            ["cell_type", "pcc", "ssim", "rmse", "js"],
            self.per_type
                .iter()
                .map(|(t, m)| (t.as_str(), m))
                .chain(std::iter::once(("AVERAGE", &self.averages)))
                .map(|(t, m)| (t, vec![m.pcc, m.ssim, m.rmse, m.js])),
        )
    }

    pub fn summary(&self) -> String {
        let a = &self.averages;
        format!(
            "pcc={:.6}\tssim={:.6}\trmse={:.6}\tjs={:.6}",
            a.pcc, a.ssim, a.rmse, a.js
        )
    }
}

/// Computes every metric column-wise (per cell type over spots).
pub fn evaluate(pred: &ProportionMatrix, truth: &ProportionMatrix) -> Result<EvaluationReport> {
    let pred = pred.aligned_to(truth.spot_ids(), truth.type_order())?;
    let mut per_type = IndexMap::new();
    for (t, name) in truth.type_order().iter().enumerate() {
        let x = truth.values().column(t).to_vec();
        let x_hat = pred.values().column(t).to_vec();
        // A cell type absent from every spot of either map has no spatial
        // distribution; JS is reported as 0 only when both are absent.
        let js_value = match (x.iter().sum::<f64>() > 0.0, x_hat.iter().sum::<f64>() > 0.0) {
            (true, true) => js(&x, &x_hat)?,
            (false, false) => 0.0,
            _ => 1.0,
        };
        per_type.insert(
            name.clone(),
            MetricSet {
                pcc: pcc(&x, &x_hat)?,
                ssim: ssim(&x, &x_hat)?,
                rmse: rmse(&x, &x_hat)?,
                js: js_value,
            },
        );
    }
    let averages = MetricSet::mean_of(per_type.values());
    Ok(EvaluationReport { per_type, averages })
}

/// Ranks 1..n of `values` where `better_high` decides the direction that
/// earns the highest rank. Ties receive the mean of their positions.
fn average_ranks(values: &[f64], better_high: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        if better_high {
            c
        } else {
            c.reverse()
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Accuracy score: the mean over PCC, SSIM, RMSE and JS of each method's
/// rank divided by the number of methods. The best method on a metric gets
/// rank n, so AS lies in (0, 1].
pub fn accuracy_score(table: &IndexMap<String, MetricSet>) -> Result<IndexMap<String, f64>> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("accuracy score needs at least one method".into()));
    }
    for (method, m) in table {
        if [m.pcc, m.ssim, m.rmse, m.js].iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument(format!("method `{method}` has a missing metric")));
        }
    }
    let n = table.len() as f64;
    let column = |f: fn(&MetricSet) -> f64| table.values().map(f).collect::<Vec<_>>();
    let rank_sets = [
        average_ranks(&column(|m| m.pcc), true),
        average_ranks(&column(|m| m.ssim), true),
        average_ranks(&column(|m| m.rmse), false),
        average_ranks(&column(|m| m.js), false),
    ];
    Ok(table
        .keys()
        .enumerate()
        .map(|(i, name)| {
            let total: f64 = rank_sets.iter().map(|r| r[i] / n).sum();
            (name.clone(), total / 4.0)
        })
        .collect())
}

/// Benchmark table sorted by AS, best first (stable for equal scores).
pub fn benchmark_table(table: &IndexMap<String, MetricSet>) -> Result<String> {
    let scores = accuracy_score(table)?;
    let mut rows: Vec<(&String, &MetricSet, f64)> =
        table.iter().map(|(k, m)| (k, m, scores[k])).collect();
    rows.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut out = String::from("method\tpcc\tssim\trmse\tjs\tas\n");
    for (name, m, s) in rows {
        writeln!(out, "{name}\t{}\t{}\t{}\t{}\t{s}", m.pcc, m.ssim, m.rmse, m.js).unwrap();
    }
    Ok(out)
}
