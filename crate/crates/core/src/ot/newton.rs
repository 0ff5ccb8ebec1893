//! Newton scaling to uniform marginals over the column potentials.
//!
//! With rows eliminated in closed form, the semi-dual
//! `D(b) = -(1/n) Σ_i a_i(b) - (1/m) Σ_j b_j`, `a_i(b) = ln n + LSE_j(K_ij - b_j)`,
//! is concave in `b` with gradient `c(b) - 1/m` (the column sums minus their
//! target) and Hessian `n PᵀP - diag(c)`. Damped Newton on `b` converges
//! quadratically even on peaked kernels where alternating sweeps crawl.

use crate::error::{Error, Result};
use crate::ndmath::{logsumexp, Mat};
use crate::ot::marginal_residual;
use crate::ot::sinkhorn::{OtConfig, Scaling, TransportPlan};

struct Eval {
    row: Vec<f64>,
    log_plan: Mat,
    plan: Mat,
    col_sums: Vec<f64>,
    value: f64,
}

fn evaluate(log_kernel: &Mat, b: &[f64]) -> Eval {
    let (n, m) = log_kernel.shape();
    let log_n = (n as f64).ln();
    let mut row = vec![0.0; n];
    let mut log_plan = Mat::zeros(n, m);
    for i in 0..n {
        let k = log_kernel.row(i);
        row[i] = log_n + logsumexp(k.iter().zip(b).map(|(kij, bj)| kij - bj));
        for (j, p) in log_plan.row_mut(i).iter_mut().enumerate() {
            *p = k[j] - row[i] - b[j];
        }
    }
    let plan = log_plan.map(f64::exp);
    let col_sums = plan.col_sums();
    let value = -row.iter().sum::<f64>() / n as f64 - b.iter().sum::<f64>() / m as f64;
    Eval { row, log_plan, plan, col_sums, value }
}

/// Exact column update `b_j = ln m + LSE_i(K_ij - a_i)` for fixed rows.
fn column_rescale(log_kernel: &Mat, row: &[f64]) -> Vec<f64> {
    let (n, m) = log_kernel.shape();
    let log_m = (m as f64).ln();
    (0..m).map(|j| log_m + logsumexp((0..n).map(|i| log_kernel.get(i, j) - row[i]))).collect()
}

/// Solves `A x = y` for symmetric positive definite `A` (row-major `k x k`).
fn cholesky_solve(mut a: Vec<f64>, k: usize, y: &[f64]) -> Option<Vec<f64>> {
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    let mut x = y.to_vec();
    for i in 0..k {
        for p in 0..i {
            x[i] -= a[i * k + p] * x[p];
        }
        x[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            x[i] -= a[p * k + i] * x[p];
        }
        x[i] /= a[i * k + i];
    }
    Some(x)
}

/// Newton direction `(diag(c) - n PᵀP + 11ᵀ/m)⁻¹ (c - 1/m)`; the rank-one
/// term pins the shift direction, along which the plan does not change.
fn newton_direction(e: &Eval, n: usize, m: usize) -> Vec<f64> {
    let grad: Vec<f64> = e.col_sums.iter().map(|c| c - 1.0 / m as f64).collect();
    let mut h = vec![1.0 / m as f64; m * m];
    for j in 0..m {
        h[j * m + j] += e.col_sums[j];
    }
    for i in 0..n {
        let p = e.plan.row(i);
        for j in 0..m {
            let pj = n as f64 * p[j];
            for k in 0..m {
                h[j * m + k] -= pj * p[k];
            }
        }
    }
    let mut ridge = 0.0;
    loop {
        let mut shifted = h.clone();
        for j in 0..m {
            shifted[j * m + j] += ridge;
        }
        if let Some(d) = cholesky_solve(shifted, m, &grad) {
            return d;
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 10.0 };
        if ridge > 1.0 {
            // gradient ascent as a last resort
            return grad;
        }
    }
}

/// Steps without halving the column error before scaling gives up; at that
/// point the error sits at the floating-point floor of the kernel.
const STALL_STEPS: usize = 50;

/// Same contract as the alternating scaler: finds `a, b` so that
/// `exp(log_kernel_ij - a_i - b_j)` has row sums `1/n` and column sums `1/m`.
/// Rows are exact by construction; iterates until the column residual is at
/// most `tol` or `max_iters` steps have been taken. Far from feasibility, or
/// when the line search fails, a step is an exact column rescaling instead.
pub(crate) fn newton_scale_to_uniform(
    log_kernel: &Mat,
    max_iters: usize,
    tol: f64,
    warm_col: Option<&[f64]>,
) -> Scaling {
    let (n, m) = log_kernel.shape();
    let mut b = warm_col.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    let mut e = evaluate(log_kernel, &b);
    let mut iterations = 0;
    let (mut best, mut stalled) = (f64::INFINITY, 0);
    while iterations < max_iters {
        let col_err = e.col_sums.iter().map(|c| (c - 1.0 / m as f64).abs()).fold(0.0, f64::max);
        if col_err <= tol {
            break;
        }
        if col_err < 0.5 * best {
            (best, stalled) = (col_err, 0);
        } else {
            stalled += 1;
            if stalled >= STALL_STEPS {
                break;
            }
        }
        iterations += 1;
        if col_err > 0.5 / m as f64 {
            b = column_rescale(log_kernel, &e.row);
            e = evaluate(log_kernel, &b);
            continue;
        }
        let dir = newton_direction(&e, n, m);
        let slope: f64 = dir.iter().zip(&e.col_sums).map(|(d, c)| d * (c - 1.0 / m as f64)).sum();
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = b.iter().zip(&dir).map(|(bj, dj)| bj + t * dj).collect();
            let cand = evaluate(log_kernel, &trial);
            if cand.value >= e.value + 1e-4 * t * slope {
                break Some((trial, cand));
            }
            t *= 0.5;
            if t < 1e-6 {
                break None;
            }
        };
        (b, e) = match accepted {
            Some(next) => next,
            None => {
                let b = column_rescale(log_kernel, &e.row);
                let e = evaluate(log_kernel, &b);
                (b, e)
            }
        };
    }
    let (row_err, col_err) = marginal_residual(&e.plan);
    Scaling { plan: e.plan, log_plan: e.log_plan, row: e.row, col: b, iterations, residual: row_err.max(col_err) }
}

/// Cost range over `reg` above which [`newton_transport`] anneals.
const ANNEAL_RATIO: f64 = 100.0;

/// The same plan and duals as [`crate::ot::sinkhorn_uniform`], found with
/// Newton scaling. `max_iters` counts Newton steps of the final stage.
///
/// Each row is shifted by its minimum cost first. When the remaining cost
/// range dwarfs `reg`, the kernel is too peaked to scale from a cold start,
/// so the problem is solved for `reg` values decreasing by decades, each
/// stage warm-started from the previous column potentials.
pub(crate) fn newton_transport(cost: &Mat, cfg: &OtConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    if cost.rows() == 0 || cost.cols() == 0 {
        return Err(Error::Input("cost matrix must be at least 1x1".into()));
    }
    cost.ensure_finite("cost matrix")?;
    let reg = cfg.reg;
    let (n, m) = cost.shape();
    let row_min: Vec<f64> = (0..n).map(|i| cost.row(i).iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let mut shifted = cost.clone();
    for (i, r) in row_min.iter().enumerate() {
        for c in shifted.row_mut(i) {
            *c -= r;
        }
    }
    let spread = shifted.data().iter().copied().fold(0.0, f64::max);

    let mut stages = Vec::new();
    let mut stage_reg = reg;
    while spread / stage_reg > ANNEAL_RATIO {
        stage_reg *= 10.0;
        stages.push(stage_reg);
    }
    stages.reverse();

    let mut col: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut prev_reg = reg;
    for &r in &stages {
        let warm: Option<Vec<f64>> = col.take().map(|b| b.iter().map(|bj| bj * prev_reg / r).collect());
        let log_kernel = shifted.map(|c| (-c - r) / r);
        let s = newton_scale_to_uniform(&log_kernel, cfg.max_iters, 1e-6 / m as f64, warm.as_deref());
        iterations += s.iterations;
        col = Some(s.col);
        prev_reg = r;
    }
    let warm: Option<Vec<f64>> = col.map(|b| b.iter().map(|bj| bj * prev_reg / reg).collect());
    let log_kernel = shifted.map(|c| (-c - reg) / reg);
    let s = newton_scale_to_uniform(&log_kernel, cfg.max_iters, cfg.tol, warm.as_deref());
    iterations += s.iterations;
    Ok(TransportPlan {
        converged: s.residual <= cfg.tol,
        plan: s.plan,
        dual_row: s.row.iter().zip(&row_min).map(|(a, r)| a * reg - r).collect(),
        dual_col: s.col.iter().map(|b| b * reg).collect(),
        iterations_used: iterations,
        max_marginal_residual: s.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::sinkhorn::scale_to_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spd_solve_matches_product() {
        let a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let x = cholesky_solve(a.clone(), 3, &[1.0, 2.0, 3.0]).unwrap();
        for i in 0..3 {
            let y: f64 = (0..3).map(|k| a[i * 3 + k] * x[k]).sum();
            assert!((y - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        assert!(cholesky_solve(vec![0.0, 0.0, 0.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn agrees_with_alternating_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (n, m) in [(5, 3), (20, 4), (3, 7), (1, 1)] {
            let k = Mat::random_normal(n, m, 3.0, &mut rng);
            let a = newton_scale_to_uniform(&k, 100, 1e-12, None);
            let b = scale_to_uniform(&k, 100_000, 1e-13, None);
            assert!(a.residual < 1e-12, "{}", a.residual);
            assert!(a.plan.max_abs_diff(&b.plan) < 1e-10);
        }
    }

    #[test]
    fn transport_matches_sinkhorn() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let cost = Mat::random_uniform(7, 3, 0.0, 1.0, &mut rng);
        let cfg = OtConfig { reg: 0.05, max_iters: 100_000, tol: 1e-13 };
        let a = newton_transport(&cost, &cfg).unwrap();
        let b = crate::ot::sinkhorn_uniform(&cost, &cfg).unwrap();
        assert!(a.converged);
        assert!(a.plan.max_abs_diff(&b.plan) < 1e-11);
        let gap = a.dual_row[0] - b.dual_row[0];
        for (x, y) in a.dual_row.iter().zip(&b.dual_row) {
            assert!((x - y - gap).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_costs_are_annealed() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let cost = Mat::random_uniform(128, 2, 0.0, 1.0, &mut rng).scale(6e9);
        let p = newton_transport(&cost, &OtConfig { reg: 0.1, max_iters: 1000, tol: 1e-9 }).unwrap();
        // log-kernel entries near 6e10 carry absolute rounding near 1e-5
        assert!(p.max_marginal_residual < 1e-7, "residual {}", p.max_marginal_residual);
        assert!(p.iterations_used < 500, "{}", p.iterations_used);
        let reference = newton_transport(&cost.scale(1.0 / 6e9), &OtConfig { reg: 0.1 / 6e9, max_iters: 1000, tol: 1e-9 }).unwrap();
        assert!(p.plan.max_abs_diff(&reference.plan) < 1e-6);
    }

    #[test]
    fn peaked_kernel_converges_fast() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let k = Mat::random_uniform(64, 8, 0.0, 1.0, &mut rng).scale(-200.0);
        let s = newton_scale_to_uniform(&k, 100, 1e-9, None);
        assert!(s.residual <= 1e-9, "{}", s.residual);
        assert!(s.iterations < 60, "{}", s.iterations);
    }
}
