use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("accuracy", format!("{} predictions, {} labels", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::Contract("accuracy over zero vertices".into()));
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// One-vs-rest AUC of `scores` for the positives marked in `positive`,
/// from mid-ranks so ties count one half. `None` if either side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps every quantity an integer.
    let mut twice_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let twice_mid = (i + j + 2) as f64;
        for &k in &order[i..=j] {
            if positive[k] {
                twice_rank_sum += twice_mid;
            }
        }
        i = j + 1;
    }
    let p = n_pos as f64;
    let twice_u = twice_rank_sum - p * (p + 1.0);
    Some(twice_u / (2.0 * p * n_neg as f64))
}

/// Unweighted mean over classes of the one-vs-rest AUC. `scores` is
/// `n x C` class probabilities. Classes without positives or negatives in
/// `truth` are skipped.
pub fn macro_auc(scores: &DenseMatrix, truth: &[usize]) -> Result<f64> {
    if scores.rows() != truth.len() {
        return Err(Error::shape("macro_auc", format!("{} score rows, {} labels", scores.rows(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::Contract("macro-AUC over zero vertices".into()));
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= scores.cols()) {
        return Err(Error::shape("macro_auc", format!("label {bad} with {} classes", scores.cols())));
    }
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..scores.cols() {
        let col: Vec<f64> = (0..scores.rows()).map(|r| scores.get(r, c)).collect();
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        match binary_auc(&col, &pos) {
            Some(a) => {
                total += a;
                used += 1;
            }
            None => log::warn!("class {c} skipped in macro-AUC: all or none of the vertices belong to it"),
        }
    }
    if used == 0 {
        return Err(Error::Contract("macro-AUC needs at least two classes in the truth".into()));
    }
    Ok(total / used as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceMetrics {
    pub slice: usize,
    pub evaluated: usize,
    pub accuracy: f64,
    pub macro_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetricsReport {
    pub evaluated: usize,
    /// `None` when no test vertex was evaluated.
    pub accuracy: Option<f64>,
    pub macro_auc: Option<f64>,
    pub per_slice: Vec<SliceMetrics>,
    pub loss_curve: Vec<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl MetricsReport {
    /// Line-oriented CSV: the loss curve (if any), then per-slice rows, then
    /// the overall row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if !self.loss_curve.is_empty() {
            out.push_str("epoch,train_loss\n");
        }
        for (e, l) in self.loss_curve.iter().enumerate() {
            let _ = writeln!(out, "{},{l}", e + 1);
        }
        out.push_str("slice,evaluated,accuracy,macro_auc\n");
        for s in &self.per_slice {
            let _ = writeln!(out, "{},{},{},{}", s.slice, s.evaluated, s.accuracy, opt(s.macro_auc));
        }
        let _ = writeln!(out, "all,{},{},{}", self.evaluated, opt(self.accuracy), opt(self.macro_auc));
        out
    }
}
