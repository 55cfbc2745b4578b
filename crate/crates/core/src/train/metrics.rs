//! Regression metrics and rank/product-moment correlation.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Evaluation metrics. Correlations are `None` when undefined (a constant
/// input has no ranks or variance to compare).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    /// Mean squared error with a 1/N factor (no 1/2, unlike the training
    /// objective).
    pub mse: f64,
    pub mae: f64,
    pub srcc: Option<f64>,
    pub pcc: Option<f64>,
    pub n: usize,
}

fn check(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} values against {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::EmptyDataset(format!(
            "need at least {min} values, got {}",
            x.len()
        )));
    }
    Ok(())
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check(preds, targets, 1)?;
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / preds.len() as f64)
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check(preds, targets, 1)?;
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

/// Product-moment correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

impl Metrics {
    pub fn compute(preds: &[f64], targets: &[f64]) -> Result<Self> {
        check(preds, targets, 1)?;
        let (srcc, pcc) = if preds.len() >= 2 {
            (spearman(preds, targets)?, pearson(preds, targets)?)
        } else {
            (None, None)
        };
        Ok(Self {
            mse: mse(preds, targets)?,
            mae: mae(preds, targets)?,
            srcc,
            pcc,
            n: preds.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialise")
    }

    pub const CSV_HEADER: &'static str = "mse,mae,srcc,pcc,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.mse,
            self.mae,
            fmt_opt(self.srcc),
            fmt_opt(self.pcc),
            self.n
        )
    }

    /// Human-readable block.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n     {}", self.n);
        let _ = writeln!(
            s,
            "MSE   {:.6}  (1/N; the training loss uses 1/2N)",
            self.mse
        );
        let _ = writeln!(s, "MAE   {:.6}", self.mae);
        let _ = writeln!(s, "SRCC  {}", fmt_opt(self.srcc));
        let _ = writeln!(s, "PCC   {}", fmt_opt(self.pcc));
        s
    }
}

/// `NaN` marks an undefined correlation in text output.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_owned(), |v| v.to_string())
}
