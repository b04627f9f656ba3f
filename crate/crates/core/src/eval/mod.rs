//! Detection metrics for predicted fruit centers.

mod assignment;
mod sweep;

pub use assignment::min_cost_assignment;
pub use sweep::{frame_sweep, sweep_csv, write_sweep_csv, SweepConfig, SweepRow};

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Repeatedly pair the globally closest unmatched prediction and truth.
    #[default]
    Greedy,
    /// Maximum number of pairs within τ, then minimum total distance.
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Match distance τ; the ground-truth fruit radius when absent.
    pub tau: Option<f64>,
    pub matching: Matching,
}

impl EvalConfig {
    pub fn diagnostics(&self, path: &str, out: &mut Vec<String>) {
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                out.push(format!("{path}.tau: must be > 0"));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tau: f64,
    pub matching: Matching,
    pub pairs: Vec<MatchedPair>,
}

/// `2PR / (P + R)`, or 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision, recall and F1 from match counts, with the degenerate cases
/// defined as 0.
pub fn metrics(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if a + b > 0 { a as f64 / (a + b) as f64 } else { 0.0 };
    let p = ratio(tp, fp);
    let r = ratio(tp, fn_);
    (p, r, f1_score(p, r))
}

/// Matches predicted centers to ground truth within `tau`; unmatched
/// predictions are false positives and unmatched truths false negatives.
pub fn match_centers(pred: &[Vec3], gt: &[Vec3], tau: f64, method: Matching) -> Result<EvalReport> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("match distance must be > 0, got {tau}")));
    }
    let mut pairs = match method {
        Matching::Greedy => greedy(pred, gt, tau),
        Matching::Optimal => optimal(pred, gt, tau),
    };
    pairs.sort_by_key(|p| (p.pred, p.gt));
    let tp = pairs.len();
    let (precision, recall, f1) = metrics(tp, pred.len() - tp, gt.len() - tp);
    Ok(EvalReport {
        true_positives: tp,
        false_positives: pred.len() - tp,
        false_negatives: gt.len() - tp,
        precision,
        recall,
        f1,
        tau,
        matching: method,
        pairs,
    })
}

fn greedy(pred: &[Vec3], gt: &[Vec3], tau: f64) -> Vec<MatchedPair> {
    let mut candidates = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = p.dist(*g);
            if d <= tau {
                candidates.push(MatchedPair {
                    pred: i,
                    gt: j,
                    distance: d,
                });
            }
        }
    }
    candidates.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.pred.cmp(&b.pred)).then(a.gt.cmp(&b.gt)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut out = Vec::new();
    for c in candidates {
        if !used_p[c.pred] && !used_g[c.gt] {
            used_p[c.pred] = true;
            used_g[c.gt] = true;
            out.push(c);
        }
    }
    out
}

fn optimal(pred: &[Vec3], gt: &[Vec3], tau: f64) -> Vec<MatchedPair> {
    let n = pred.len().max(gt.len());
    if pred.is_empty() || gt.is_empty() {
        return Vec::new();
    }
    // Any pair beyond τ (and any padding) costs more than every in-range
    // assignment combined, so the number of valid pairs is maximized first.
    let big = 2.0 * (n as f64 + 1.0) * tau + 1.0;
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (pred.get(i), gt.get(j)) {
                    (Some(p), Some(g)) if p.dist(*g) <= tau => p.dist(*g),
                    _ => big,
                })
                .collect()
        })
        .collect();
    min_cost_assignment(&cost)
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < pred.len() && j < gt.len() && cost[i][j] < big)
        .map(|(i, j)| MatchedPair {
            pred: i,
            gt: j,
            distance: cost[i][j],
        })
        .collect()
}
