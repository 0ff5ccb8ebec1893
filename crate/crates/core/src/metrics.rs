//! Clustering evaluation: accuracy under the best label matching, normalized
//! mutual information, and the adjusted Rand index.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ndmath::Mat;

/// Optimal assignment for a square cost matrix: `perm[i]` is the column
/// matched to row `i`, minimizing `Σ cost[i][perm[i]]`.
pub fn hungarian(cost: &Mat) -> Result<Vec<usize>> {
    let (n, m) = cost.shape();
    if n != m {
        return Err(Error::shape("hungarian", format!("cost must be square, got {n}x{m}")));
    }
    cost.ensure_finite("assignment cost")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    // shortest augmenting paths with potentials; 1-based with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Counts of co-occurring (predicted, true) labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contingency {
    /// `counts[p][t]`, `C_pred x C_true`.
    pub counts: Vec<Vec<u64>>,
    pub pred_sums: Vec<u64>,
    pub true_sums: Vec<u64>,
    pub total: u64,
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::shape("contingency", format!("{} predictions vs {} labels", pred.len(), truth.len())));
        }
        let cp = pred.iter().max().map_or(0, |m| m + 1);
        let ct = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; ct]; cp];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        let pred_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let true_sums = (0..ct).map(|t| counts.iter().map(|r| r[t]).sum()).collect();
        Ok(Contingency { counts, pred_sums, true_sums, total: pred.len() as u64 })
    }

    pub fn pred_clusters(&self) -> usize {
        self.pred_sums.len()
    }

    pub fn true_clusters(&self) -> usize {
        self.true_sums.len()
    }
}

/// Fraction of instances correct under the best one-to-one matching of
/// predicted clusters to classes.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::new(pred, truth)?;
    if table.total == 0 {
        return Err(Error::Input("cannot score an empty labeling".into()));
    }
    let k = table.pred_clusters().max(table.true_clusters());
    let mut cost = Mat::zeros(k, k);
    for (p, row) in table.counts.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            cost.set(p, t, -(c as f64));
        }
    }
    let perm = hungarian(&cost)?;
    let hits: f64 = perm.iter().enumerate().map(|(p, &t)| -cost.get(p, t)).sum();
    Ok(hits / table.total as f64)
}

fn entropy(sums: &[u64], total: f64) -> f64 {
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::new(pred, truth)?;
    if table.total == 0 {
        return Err(Error::Input("cannot score an empty labeling".into()));
    }
    let n = table.total as f64;
    let hp = entropy(&table.pred_sums, n);
    let ht = entropy(&table.true_sums, n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (p, row) in table.counts.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (table.pred_sums[p] as f64 * table.true_sums[t] as f64)).ln();
            }
        }
    }
    Ok((mi / ((hp + ht) / 2.0)).clamp(0.0, 1.0))
}

fn pairs(c: u64) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand index from pair counts.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::new(pred, truth)?;
    if table.total == 0 {
        return Err(Error::Input("cannot score an empty labeling".into()));
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let sum_p: f64 = table.pred_sums.iter().map(|&c| pairs(c)).sum();
    let sum_t: f64 = table.true_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(table.total);
    let expected = if total > 0.0 { sum_p * sum_t / total } else { 0.0 };
    let max = (sum_p + sum_t) / 2.0;
    if max == expected {
        // both partitions trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// All three scores plus the cluster counts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub n: usize,
    #[serde(rename = "C_pred")]
    pub c_pred: usize,
    #[serde(rename = "C_true")]
    pub c_true: usize,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Scores> {
    let table = Contingency::new(pred, truth)?;
    Ok(Scores {
        acc: clustering_accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
        n: pred.len(),
        c_pred: table.pred_sums.iter().filter(|&&c| c > 0).count(),
        c_true: table.true_sums.iter().filter(|&&c| c > 0).count(),
    })
}
