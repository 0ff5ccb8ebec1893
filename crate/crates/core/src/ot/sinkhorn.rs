//! Log-domain Sinkhorn scaling to uniform marginals.

use crate::error::{Error, Result};
use crate::ndmath::Mat;

/// Entropic regularization settings for [`sinkhorn_uniform`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtConfig {
    /// Entropy weight; must be positive.
    pub reg: f64,
    pub max_iters: usize,
    /// Target for the largest marginal deviation.
    pub tol: f64,
}

impl Default for OtConfig {
    fn default() -> Self {
        OtConfig { reg: 0.1, max_iters: 1000, tol: 1e-9 }
    }
}

impl OtConfig {
    pub fn with_reg(reg: f64) -> Self {
        OtConfig { reg, ..OtConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reg > 0.0) || !self.reg.is_finite() {
            return Err(Error::Config(format!("entropic regularization must be positive, got {}", self.reg)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// An entropic transport plan with its dual potentials.
///
/// With cost `C` and entropy weight `reg`, entries satisfy
/// `plan_ij = exp((-f_i - g_j - C_ij - reg) / reg)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub plan: Mat,
    pub dual_row: Vec<f64>,
    pub dual_col: Vec<f64>,
    pub iterations_used: usize,
    pub max_marginal_residual: f64,
    pub converged: bool,
}

impl TransportPlan {
    /// `⟨plan, cost⟩`.
    pub fn transport_cost(&self, cost: &Mat) -> f64 {
        self.plan.dot(cost)
    }
}

/// Row and column deviations from uniform marginals:
/// `max_i |Σ_j plan_ij - 1/n|` and `max_j |Σ_i plan_ij - 1/m|`.
pub fn marginal_residual(plan: &Mat) -> (f64, f64) {
    let (n, m) = plan.shape();
    let row_err = plan
        .row_sums()
        .iter()
        .fold(0.0f64, |acc, s| acc.max((s - 1.0 / n as f64).abs()));
    let col_err = plan
        .col_sums()
        .iter()
        .fold(0.0f64, |acc, s| acc.max((s - 1.0 / m as f64).abs()));
    (row_err, col_err)
}

/// Result of scaling a log-kernel to uniform marginals.
#[derive(Clone, Debug)]
pub(crate) struct Scaling {
    pub plan: Mat,
    /// `log_kernel_ij - a_i - b_j`, finite even where `plan` underflows.
    pub log_plan: Mat,
    /// Row log-scalings `a_i`, with `plan_ij = exp(K_ij - a_i - b_j)`.
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Finds `a, b` such that `exp(log_kernel_ij - a_i - b_j)` has row sums `1/n`
/// and column sums `1/m`. Alternates exact row and column updates, stopping
/// once the row residual (columns are exact after each sweep) drops to `tol`.
/// `warm_col` seeds `b`; rows are solved first, so no row seed is needed.
pub(crate) fn scale_to_uniform(log_kernel: &Mat, max_iters: usize, tol: f64, warm_col: Option<&[f64]>) -> Scaling {
    let (n, m) = log_kernel.shape();
    let log_n = (n as f64).ln();
    let log_m = (m as f64).ln();
    let mut a = vec![0.0; n];
    let mut b = warm_col.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    let mut iterations = 0;
    let mut scratch = vec![0.0; n];

    while iterations < max_iters {
        iterations += 1;
        for i in 0..n {
            let row = log_kernel.row(i);
            a[i] = log_n + lse(row.iter().zip(&b).map(|(k, bj)| k - bj));
        }
        for j in 0..m {
            for i in 0..n {
                scratch[i] = log_kernel.get(i, j) - a[i];
            }
            b[j] = log_m + lse(scratch.iter().copied());
        }
        let mut residual: f64 = 0.0;
        for i in 0..n {
            let s: f64 = log_kernel.row(i).iter().zip(&b).map(|(k, bj)| (k - a[i] - bj).exp()).sum();
            residual = f64::max(residual, (s - 1.0 / n as f64).abs());
        }
        if residual <= tol {
            break;
        }
    }

    let mut log_plan = Mat::zeros(n, m);
    for i in 0..n {
        for (j, p) in log_plan.row_mut(i).iter_mut().enumerate() {
            *p = log_kernel.get(i, j) - a[i] - b[j];
        }
    }
    let plan = log_plan.map(f64::exp);
    let (row_err, col_err) = marginal_residual(&plan);
    Scaling { plan, log_plan, row: a, col: b, iterations, residual: row_err.max(col_err) }
}

fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    crate::ndmath::logsumexp(values)
}

/// Entropic OT with uniform marginals `1/n` (rows) and `1/m` (columns).
///
/// Minimizes `⟨π, cost⟩ + reg · Σ π log π`. All updates run in the log domain,
/// with the duals starting from zero.
pub fn sinkhorn_uniform(cost: &Mat, cfg: &OtConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    if cost.rows() == 0 || cost.cols() == 0 {
        return Err(Error::Input("cost matrix must be at least 1x1".into()));
    }
    cost.ensure_finite("cost matrix")?;
    let reg = cfg.reg;
    // the trailing -reg in the exponent is a constant the duals absorb
    let log_kernel = cost.map(|c| (-c - reg) / reg);
    let s = scale_to_uniform(&log_kernel, cfg.max_iters, cfg.tol, None);
    // exp(K - a - b) = exp((-C - reg - f - g)/reg)  =>  f = reg·a, g = reg·b
    Ok(TransportPlan {
        converged: s.residual <= cfg.tol,
        plan: s.plan,
        dual_row: s.row.iter().map(|a| a * reg).collect(),
        dual_col: s.col.iter().map(|b| b * reg).collect(),
        iterations_used: s.iterations,
        max_marginal_residual: s.residual,
    })
}

/// Primal entropic objective `⟨π, cost⟩ + reg · Σ π log π`.
pub fn entropic_objective(plan: &Mat, cost: &Mat, reg: f64) -> f64 {
    plan.data()
        .iter()
        .zip(cost.data())
        .map(|(&p, &c)| p * c + if p > 0.0 { reg * p * p.ln() } else { 0.0 })
        .sum()
}

/// Dual objective of the entropic problem at potentials `(f, g)`:
/// `-Σ f_i / n - Σ g_j / m - reg · Σ exp((-f_i - g_j - C_ij - reg)/reg)`.
pub fn entropic_dual_objective(cost: &Mat, f: &[f64], g: &[f64], reg: f64) -> f64 {
    let (n, m) = cost.shape();
    let mut mass = 0.0;
    for i in 0..n {
        for j in 0..m {
            mass += ((-f[i] - g[j] - cost.get(i, j) - reg) / reg).exp();
        }
    }
    -f.iter().sum::<f64>() / n as f64 - g.iter().sum::<f64>() / m as f64 - reg * mass
}
