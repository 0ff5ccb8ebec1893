//! Augmentation-consensus optimal transport.
//!
//! Two transport plans over (instances x clusters), one per view, are
//! coupled by a symmetric KL penalty:
//!
//! ```text
//! min ⟨π, M⟩ + ε KL(π‖π') + ⟨π', M'⟩ + ε KL(π'‖π)
//! s.t. both plans have row sums 1/N and column sums 1/C
//! ```
//!
//! [`AcotScheme::Exact`] minimizes this objective by entropic mirror descent:
//! both plans take a multiplicative gradient step at once, are rescaled to the
//! uniform marginals, and the step is accepted only if the objective does not
//! increase. Because the two views are updated simultaneously through the same
//! code path, identical costs produce identical plans at every iteration.
//!
//! [`AcotScheme::Proximal`] runs the alternating dual updates
//! `π_ij = π'_ij exp((-M_ij - f_i - g_j - ε)/ε)` and its mirror image for `π'`,
//! one row/column sweep per outer iteration. Each half-step only carries the
//! `KL(π‖π')` term, so its limit is the unregularized plan for `M + M'`.

use crate::error::{Error, Result};
use crate::ndmath::{logsumexp, Mat};
use crate::ot::{marginal_residual, newton_scale_to_uniform, sinkhorn_uniform, OtConfig};

/// Largest per-entry change of a log-plan in one mirror step, before rescaling.
const MAX_LOG_STEP: f64 = 20.0;

/// Entropy weight used when `ε = 0` falls back to single-view transport.
pub const SINGLE_VIEW_REG: f64 = 0.1;

/// How [`acot_solve`] iterates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcotScheme {
    /// Joint minimization of the coupled objective.
    #[default]
    Exact,
    /// Alternating closed-form dual updates, one sweep per outer iteration.
    Proximal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcotConfig {
    /// Consensus weight ε; zero selects single-view transport.
    pub epsilon: f64,
    /// Outer iteration cap.
    pub outer_iters: usize,
    /// Marginal residual target.
    pub tol: f64,
    /// Largest entrywise plan change that counts as converged.
    pub plan_tol: f64,
    /// Cap on row/column sweeps inside one marginal projection.
    pub inner_iters: usize,
    pub scheme: AcotScheme,
}

impl Default for AcotConfig {
    fn default() -> Self {
        AcotConfig {
            epsilon: 0.1,
            outer_iters: 50,
            tol: 1e-9,
            plan_tol: 1e-10,
            inner_iters: 1000,
            scheme: AcotScheme::Exact,
        }
    }
}

impl AcotConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        AcotConfig { epsilon, ..AcotConfig::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.plan_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Solution of the coupled problem.
#[derive(Clone, Debug, PartialEq)]
pub struct AcotState {
    pub pi: Mat,
    pub pi_prime: Mat,
    /// Row multipliers of `π`'s marginal constraints.
    pub f: Vec<f64>,
    /// Column multipliers of `π`'s marginal constraints.
    pub g: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub g_prime: Vec<f64>,
    pub iterations_used: usize,
    /// Coupled objective at the returned plans.
    pub objective: f64,
    pub converged: bool,
}

impl AcotState {
    /// Largest marginal deviation over both plans.
    pub fn max_marginal_residual(&self) -> f64 {
        let (a, b) = marginal_residual(&self.pi);
        let (c, d) = marginal_residual(&self.pi_prime);
        a.max(b).max(c).max(d)
    }

    pub fn kl_pi_pi_prime(&self) -> f64 {
        kl(&self.pi, &self.pi_prime)
    }

    pub fn labels(&self) -> Vec<usize> {
        pseudo_labels(&self.pi)
    }
}

/// Snapshot passed to the observer of [`acot_solve_observed`] after every
/// outer iteration.
#[derive(Debug)]
pub struct AcotIterate<'a> {
    pub iteration: usize,
    pub pi: &'a Mat,
    pub pi_prime: &'a Mat,
    pub objective: f64,
}

/// `M = exp(-P)` for a row-stochastic prediction matrix.
pub fn cost_from_predictions(p: &Mat) -> Result<Mat> {
    for (i, s) in p.row_sums().iter().enumerate() {
        if !((s - 1.0).abs() <= 1e-6) {
            return Err(Error::Input(format!("prediction row {i} sums to {s}, not 1")));
        }
    }
    if p.data().iter().any(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v)) {
        return Err(Error::Input("prediction entries must lie in [0, 1]".into()));
    }
    Ok(p.map(|v| (-v).exp()))
}

/// Row-wise argmax of a plan; ties go to the smallest column.
pub fn pseudo_labels(pi: &Mat) -> Vec<usize> {
    pi.row_argmax()
}

/// `KL(p‖q) = Σ p log(p/q)` with `0 log 0 = 0`.
pub fn kl(p: &Mat, q: &Mat) -> f64 {
    p.data()
        .iter()
        .zip(q.data())
        .map(|(&a, &b)| if a > 0.0 { a * (a.ln() - b.ln()) } else { 0.0 })
        .sum()
}

/// The coupled objective at a pair of plans.
pub fn acot_objective(pi: &Mat, pi_prime: &Mat, m: &Mat, m_prime: &Mat, epsilon: f64) -> f64 {
    pi.dot(m) + pi_prime.dot(m_prime) + epsilon * (kl(pi, pi_prime) + kl(pi_prime, pi))
}

pub fn acot_solve(m: &Mat, m_prime: &Mat, cfg: &AcotConfig) -> Result<AcotState> {
    acot_solve_observed(m, m_prime, cfg, |_| {})
}

/// [`acot_solve`] with a callback after every outer iteration.
pub fn acot_solve_observed(
    m: &Mat,
    m_prime: &Mat,
    cfg: &AcotConfig,
    mut observe: impl FnMut(&AcotIterate<'_>),
) -> Result<AcotState> {
    cfg.validate()?;
    m.ensure_same_shape(m_prime, "acot_solve")?;
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::Input("cost matrices must be at least 1x1".into()));
    }
    m.ensure_finite("cost M")?;
    m_prime.ensure_finite("cost M'")?;

    if cfg.epsilon == 0.0 {
        let ot = OtConfig { reg: SINGLE_VIEW_REG, max_iters: cfg.inner_iters, tol: cfg.tol };
        let plan = sinkhorn_uniform(m, &ot)?;
        observe(&AcotIterate { iteration: 1, pi: &plan.plan, pi_prime: &plan.plan, objective: plan.plan.dot(m) + plan.plan.dot(m_prime) });
        return Ok(AcotState {
            objective: acot_objective(&plan.plan, &plan.plan, m, m_prime, 0.0),
            pi_prime: plan.plan.clone(),
            pi: plan.plan,
            f_prime: plan.dual_row.clone(),
            g_prime: plan.dual_col.clone(),
            f: plan.dual_row,
            g: plan.dual_col,
            iterations_used: plan.iterations_used,
            converged: plan.converged,
        });
    }

    match cfg.scheme {
        AcotScheme::Exact => solve_exact(m, m_prime, cfg, &mut observe),
        AcotScheme::Proximal => solve_proximal(m, m_prime, cfg, &mut observe),
    }
}

/// Objective evaluated from log-plans, finite even where plans underflow.
fn log_objective(lp: &Mat, lq: &Mat, m: &Mat, m_prime: &Mat, eps: f64) -> f64 {
    let mut linear_p = 0.0;
    let mut linear_q = 0.0;
    let mut coupling = 0.0;
    for k in 0..lp.len() {
        let (a, b) = (lp.data()[k], lq.data()[k]);
        let (pa, pb) = (a.exp(), b.exp());
        linear_p += pa * m.data()[k];
        linear_q += pb * m_prime.data()[k];
        coupling += (pa - pb) * (a - b);
    }
    linear_p + linear_q + eps * coupling
}

/// Gradient of the objective in the first plan, given both log-plans.
fn coupled_gradient(lx: &Mat, ly: &Mat, cost: &Mat, eps: f64) -> Mat {
    let mut g = cost.clone();
    for (k, v) in g.data_mut().iter_mut().enumerate() {
        let (a, b) = (lx.data()[k], ly.data()[k]);
        let ratio = (b - a).clamp(-700.0, 700.0).exp();
        *v += eps * (a - b + 1.0 - ratio);
    }
    g
}

/// Least-squares additive split `H_ij ≈ f_i + g_j` with `Σ f = 0`.
fn additive_split(h: &Mat) -> (Vec<f64>, Vec<f64>) {
    let (n, c) = h.shape();
    let total = h.sum() / (n * c) as f64;
    let f = h.row_sums().iter().map(|s| s / c as f64 - total).collect();
    let g = h.col_sums().iter().map(|s| s / n as f64).collect();
    (f, g)
}

fn solve_exact(
    m: &Mat,
    m_prime: &Mat,
    cfg: &AcotConfig,
    observe: &mut dyn FnMut(&AcotIterate<'_>),
) -> Result<AcotState> {
    let (n, c) = m.shape();
    let eps = cfg.epsilon;
    let mut lp = Mat::filled(n, c, -((n * c) as f64).ln());
    let mut lq = lp.clone();
    let mut pi = lp.map(f64::exp);
    let mut pi_prime = pi.clone();
    let mut objective = log_objective(&lp, &lq, m, m_prime, eps);
    let mut step = 1.0 / eps;
    let max_step = 1e3 / eps;
    let mut iterations = 0;
    let mut converged = false;
    let mut inner_steps = 0;

    while iterations < cfg.outer_iters {
        iterations += 1;
        let gp = coupled_gradient(&lp, &lq, m, eps);
        let gq = coupled_gradient(&lq, &lp, m_prime, eps);
        let mut accepted = None;
        while step * eps > 1e-14 {
            let kp = lp.zip_map(&gp, |l, g| l - (step * g).clamp(-MAX_LOG_STEP, MAX_LOG_STEP))?;
            let kq = lq.zip_map(&gq, |l, g| l - (step * g).clamp(-MAX_LOG_STEP, MAX_LOG_STEP))?;
            let sp = newton_scale_to_uniform(&kp, cfg.inner_iters, cfg.tol, Some(&warm_col(&gp, step)));
            let sq = newton_scale_to_uniform(&kq, cfg.inner_iters, cfg.tol, Some(&warm_col(&gq, step)));
            inner_steps += sp.iterations + sq.iterations;
            let candidate = log_objective(&sp.log_plan, &sq.log_plan, m, m_prime, eps);
            if candidate <= objective {
                accepted = Some((sp, sq, candidate));
                break;
            }
            step *= 0.5;
        }
        let Some((sp, sq, candidate)) = accepted else {
            // no descent left at machine precision
            converged = marginal_residual_max(&pi, &pi_prime) <= cfg.tol;
            break;
        };
        let change = sp.plan.max_abs_diff(&pi).max(sq.plan.max_abs_diff(&pi_prime));
        lp = sp.log_plan;
        lq = sq.log_plan;
        pi = sp.plan;
        pi_prime = sq.plan;
        objective = candidate;
        step = (step * 2.0).min(max_step);
        observe(&AcotIterate { iteration: iterations, pi: &pi, pi_prime: &pi_prime, objective });
        if change <= cfg.plan_tol && sp.residual.max(sq.residual) <= cfg.tol {
            converged = true;
            break;
        }
    }

    log::trace!("acot: {iterations} outer iterations, {inner_steps} scaling steps");
    let (f, g) = additive_split(&coupled_gradient(&lp, &lq, m, eps).scale(-1.0));
    let (f_prime, g_prime) = additive_split(&coupled_gradient(&lq, &lp, m_prime, eps).scale(-1.0));
    Ok(AcotState {
        objective: acot_objective(&pi, &pi_prime, m, m_prime, eps),
        pi,
        pi_prime,
        f,
        g,
        f_prime,
        g_prime,
        iterations_used: iterations,
        converged,
    })
}

/// Column scalings absorbing the column means of a gradient step.
fn warm_col(grad: &Mat, step: f64) -> Vec<f64> {
    let n = grad.rows() as f64;
    grad.col_sums().iter().map(|s| -step * s / n).collect()
}

fn marginal_residual_max(a: &Mat, b: &Mat) -> f64 {
    let (r1, c1) = marginal_residual(a);
    let (r2, c2) = marginal_residual(b);
    r1.max(c1).max(r2).max(c2)
}

/// One closed-form half-step: given the partner's log-plan `lo` and cost,
/// updates `f`, then `g`, and returns the new log-plan
/// `lo + (-cost - f - g - ε)/ε`.
fn proximal_half_step(lo: &Mat, cost: &Mat, f: &mut [f64], g: &mut [f64], eps: f64) -> Mat {
    let (n, c) = cost.shape();
    let base = lo.zip_map(cost, |l, m| l + (-m - eps) / eps).expect("shapes checked");
    let (log_n, log_c) = ((n as f64).ln(), (c as f64).ln());
    for i in 0..n {
        let row = base.row(i);
        f[i] = eps * (log_n + logsumexp(row.iter().zip(g.iter()).map(|(b, gj)| b - gj / eps)));
    }
    for j in 0..c {
        let col = (0..n).map(|i| base.get(i, j) - f[i] / eps);
        g[j] = eps * (log_c + logsumexp(col));
    }
    let mut out = base;
    for i in 0..n {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v -= (f[i] + g[j]) / eps;
        }
    }
    out
}

fn solve_proximal(
    m: &Mat,
    m_prime: &Mat,
    cfg: &AcotConfig,
    observe: &mut dyn FnMut(&AcotIterate<'_>),
) -> Result<AcotState> {
    let (n, c) = m.shape();
    let eps = cfg.epsilon;
    let (mut f, mut g) = (vec![0.0; n], vec![0.0; c]);
    let (mut fp, mut gp) = (vec![0.0; n], vec![0.0; c]);
    let mut lq = Mat::filled(n, c, -((n * c) as f64).ln());
    let mut lp = lq.clone();
    let mut pi = lp.map(f64::exp);
    let mut pi_prime = pi.clone();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.outer_iters {
        iterations += 1;
        lp = proximal_half_step(&lq, m, &mut f, &mut g, eps);
        lq = proximal_half_step(&lp, m_prime, &mut fp, &mut gp, eps);
        let new_pi = lp.map(f64::exp);
        let new_pi_prime = lq.map(f64::exp);
        let change = new_pi.max_abs_diff(&pi).max(new_pi_prime.max_abs_diff(&pi_prime));
        pi = new_pi;
        pi_prime = new_pi_prime;
        let objective = acot_objective(&pi, &pi_prime, m, m_prime, eps);
        observe(&AcotIterate { iteration: iterations, pi: &pi, pi_prime: &pi_prime, objective });
        if change <= cfg.plan_tol && marginal_residual_max(&pi, &pi_prime) <= cfg.tol {
            converged = true;
            break;
        }
    }

    // final plan from the last duals and the last partner plan
    let final_lp = lq.zip_map(m, |l, mv| l + (-mv - eps) / eps)?;
    let mut final_pi = final_lp;
    for i in 0..n {
        for (j, v) in final_pi.row_mut(i).iter_mut().enumerate() {
            *v = (*v - (f[i] + g[j]) / eps).exp();
        }
    }
    Ok(AcotState {
        objective: acot_objective(&final_pi, &pi_prime, m, m_prime, eps),
        pi: final_pi,
        pi_prime,
        f,
        g,
        f_prime: fp,
        g_prime: gp,
        iterations_used: iterations,
        converged,
    })
}
