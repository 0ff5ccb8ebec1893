//! Center-alignment optimal transport.
//!
//! Balanced centers are discovered in representation space by alternating an
//! entropic transport plan `ξ` (instances to centers, uniform marginals) with
//! weighted-mean center updates. The normalized centers `r` are then matched
//! to the normalized agents `Ŵ` by a second entropic plan `ψ` over the cost
//! `exp(-Ŵ rᵀ)`, and the matched cost `Σ ψ ⊙ exp(-Ŵ rᵀ)` is the center loss.

use crate::error::{Error, Result};
use crate::ndmath::{Mat, Tape, Var};
use crate::ot::{entropic_objective, newton_transport, OtConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaotConfig {
    /// Entropy weight η of the centers-discovery plan.
    pub eta: f64,
    /// Entropy weight η₁ of the agent-center matching plan.
    pub eta1: f64,
    /// Alternations of plan and center updates.
    pub discovery_iters: usize,
    /// Newton steps allowed for the matching plan.
    pub align_iters: usize,
    pub tol: f64,
}

impl Default for CaotConfig {
    fn default() -> Self {
        CaotConfig { eta: 0.1, eta1: 0.1, discovery_iters: 20, align_iters: 200, tol: 1e-9 }
    }
}

impl CaotConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("eta1", self.eta1)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.discovery_iters == 0 || self.align_iters == 0 {
            return Err(Error::Config("caot iteration counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of [`centers_discovery`].
#[derive(Clone, Debug, PartialEq)]
pub struct CentersState {
    /// Instance-to-center plan, `N x C`.
    pub xi: Mat,
    /// Centers, `C x D`.
    pub mu: Mat,
    pub f1: Vec<f64>,
    pub g1: Vec<f64>,
    pub iterations_used: usize,
    /// `⟨ξ, ‖x - μ‖²⟩ + η Σ ξ log ξ` after each alternation.
    pub objectives: Vec<f64>,
}

/// Output of [`align_centers`].
#[derive(Clone, Debug, PartialEq)]
pub struct AlignState {
    /// Agent-to-center plan, `C x C`.
    pub psi: Mat,
    pub f2: Vec<f64>,
    pub g2: Vec<f64>,
    pub center_loss_value: f64,
    pub iterations_used: usize,
    pub max_marginal_residual: f64,
}

impl AlignState {
    /// Row-wise argmax of `ψ`: the center matched to each agent.
    pub fn matching(&self) -> Vec<usize> {
        self.psi.row_argmax()
    }
}

/// `‖x_i - μ_j‖²` for every pair.
pub fn squared_distances(x: &Mat, mu: &Mat) -> Result<Mat> {
    if x.cols() != mu.cols() {
        return Err(Error::shape("squared_distances", format!("{} vs {} columns", x.cols(), mu.cols())));
    }
    let mut out = Mat::zeros(x.rows(), mu.rows());
    for i in 0..x.rows() {
        for j in 0..mu.rows() {
            let d: f64 = x.row(i).iter().zip(mu.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            out.set(i, j, d);
        }
    }
    Ok(out)
}

/// Row indices chosen by a farthest-point sweep starting at `start`; ties go
/// to the smallest index.
pub fn farthest_point_rows(x: &Mat, count: usize, start: usize) -> Vec<usize> {
    let n = x.rows();
    let mut chosen = vec![start];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(start))).collect();
    while chosen.len() < count.min(n) {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let Some(next) = best else { break };
        chosen.push(next);
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(x.row(i), x.row(next)));
        }
    }
    chosen
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// `μ_j = Σ_i ξ_ij x_i / Σ_i ξ_ij`.
fn weighted_means(xi: &Mat, x: &Mat) -> Result<Mat> {
    let mass = xi.col_sums();
    let mut mu = xi.matmul_tn(x)?;
    for (j, m) in mass.iter().enumerate() {
        if !(*m > 0.0) {
            return Err(Error::NonFinite(format!("center {j} received no mass")));
        }
        for v in mu.row_mut(j) {
            *v /= m;
        }
    }
    Ok(mu)
}

pub fn centers_discovery(x: &Mat, clusters: usize, cfg: &CaotConfig) -> Result<CentersState> {
    centers_discovery_from(x, clusters, cfg, 0)
}

/// [`centers_discovery`] with the farthest-point initialization starting
/// from row `start`.
pub fn centers_discovery_from(x: &Mat, clusters: usize, cfg: &CaotConfig, start: usize) -> Result<CentersState> {
    cfg.validate()?;
    let n = x.rows();
    if clusters == 0 {
        return Err(Error::Config("number of centers must be at least 1".into()));
    }
    if clusters > n {
        return Err(Error::Input(format!("cannot place {clusters} balanced centers on {n} points")));
    }
    if start >= n {
        return Err(Error::Index(format!("start row {start} out of range for {n} points")));
    }
    x.ensure_finite("representations")?;

    let ot = OtConfig { reg: cfg.eta, max_iters: 1000, tol: cfg.tol.min(1e-12) };
    let mut mu = x.select_rows(&farthest_point_rows(x, clusters, start));
    let mut objectives = Vec::with_capacity(cfg.discovery_iters);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let cost = squared_distances(x, &mu)?;
        let plan = newton_transport(&cost, &ot)?;
        let next = weighted_means(&plan.plan, x)?;
        let moved = next.max_abs_diff(&mu);
        mu = next;
        let cost = squared_distances(x, &mu)?;
        objectives.push(entropic_objective(&plan.plan, &cost, cfg.eta));
        if iterations >= cfg.discovery_iters || moved <= 1e-12 {
            return Ok(CentersState {
                xi: plan.plan,
                mu,
                f1: plan.dual_row,
                g1: plan.dual_col,
                iterations_used: iterations,
                objectives,
            });
        }
    }
}

/// Row-wise unit normalization `r_j = μ_j / ‖μ_j‖`.
pub fn normalize_centers(mu: &Mat) -> Result<Mat> {
    mu.l2_normalize_rows()
}

fn ensure_unit_rows(m: &Mat, what: &str) -> Result<()> {
    for (i, n) in m.row_norms().iter().enumerate() {
        if !((n - 1.0).abs() <= 1e-6) {
            return Err(Error::Input(format!("{what} row {i} has norm {n}, expected 1")));
        }
    }
    Ok(())
}

/// `exp(-Ŵ rᵀ)`.
pub fn alignment_cost(w: &Mat, r: &Mat) -> Result<Mat> {
    Ok(w.matmul_nt(r)?.map(|s| (-s).exp()))
}

/// Entropic matching of unit-norm agents `w` to unit-norm centers `r`, with
/// marginals `1/C` on both sides.
pub fn align_centers(w: &Mat, r: &Mat, eta1: f64, iters: usize) -> Result<AlignState> {
    w.ensure_same_shape(r, "align_centers")?;
    if w.rows() == 0 {
        return Err(Error::Input("need at least one agent".into()));
    }
    ensure_unit_rows(w, "agent")?;
    ensure_unit_rows(r, "center")?;
    let cost = alignment_cost(w, r)?;
    let plan = newton_transport(&cost, &OtConfig { reg: eta1, max_iters: iters, tol: 1e-9 })?;
    Ok(AlignState {
        center_loss_value: plan.plan.dot(&cost),
        psi: plan.plan,
        f2: plan.dual_row,
        g2: plan.dual_col,
        iterations_used: plan.iterations_used,
        max_marginal_residual: plan.max_marginal_residual,
    })
}

/// `Σ_ij ψ_ij exp(-w_i · r_j)`.
pub fn center_loss(w: &Mat, r: &Mat, psi: &Mat) -> Result<f64> {
    let cost = alignment_cost(w, r)?;
    psi.ensure_same_shape(&cost, "center_loss")?;
    Ok(psi.dot(&cost))
}

/// [`center_loss`] on a tape. `r` and `psi` enter as constants, so the
/// gradient reaches only `w_hat`.
pub fn center_loss_on_tape(tape: &mut Tape, w_hat: Var, r: &Mat, psi: &Mat) -> Result<Var> {
    let r = tape.leaf(r.clone());
    let psi = tape.leaf(psi.clone());
    let sim = tape.matmul_nt(w_hat, r)?;
    let neg = tape.scale(sim, -1.0);
    let cost = tape.exp(neg);
    let weighted = tape.mul(cost, psi)?;
    Ok(tape.sum_all(weighted))
}

/// One full center-alignment pass on a batch: discovery on `x`, normalization,
/// and matching against the normalized agents `w_hat`.
pub fn caot_pass(x: &Mat, w_hat: &Mat, cfg: &CaotConfig, start: usize) -> Result<(CentersState, Mat, AlignState)> {
    let centers = centers_discovery_from(x, w_hat.rows(), cfg, start)?;
    let r = normalize_centers(&centers.mu)?;
    let align = align_centers(w_hat, &r, cfg.eta1, cfg.align_iters)?;
    Ok((centers, r, align))
}
