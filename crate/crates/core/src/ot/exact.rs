//! Exact transport over the uniform-marginal polytope for tiny problems.
//!
//! Every vertex of the transportation polytope is a basic feasible solution
//! whose support is a spanning tree of the complete bipartite graph between
//! rows and columns. With at most 16 cells there are few enough candidate
//! bases to enumerate them all.

use crate::error::{Error, Result};
use crate::ndmath::Mat;

/// Largest `n * m` accepted by [`exact_ot_small`].
pub const EXACT_OT_MAX_CELLS: usize = 16;

/// Minimizer of `⟨π, cost⟩` over plans with row sums `1/n` and column sums `1/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPlan {
    pub value: f64,
    pub plan: Mat,
}

/// Solves the unregularized problem by vertex enumeration. Among optimal
/// vertices (values within `1e-12`), returns the lexicographically smallest plan.
pub fn exact_ot_small(cost: &Mat) -> Result<ExactPlan> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Err(Error::Input("cost matrix must be at least 1x1".into()));
    }
    if n * m > EXACT_OT_MAX_CELLS {
        return Err(Error::Contract(format!(
            "exact enumeration supports at most {EXACT_OT_MAX_CELLS} cells, got {n}x{m}"
        )));
    }
    cost.ensure_finite("cost matrix")?;

    let cells = n * m;
    let basis = n + m - 1;
    let mut best: Option<ExactPlan> = None;
    let mut chosen = Vec::with_capacity(basis);
    for mask in 0u32..(1u32 << cells) {
        if mask.count_ones() as usize != basis {
            continue;
        }
        chosen.clear();
        chosen.extend((0..cells).filter(|c| mask & (1 << c) != 0));
        let Some(plan) = tree_flow(n, m, &chosen) else { continue };
        let value = plan.dot(cost);
        let better = match &best {
            None => true,
            Some(b) => value < b.value - 1e-12 || (value <= b.value + 1e-12 && lex_less(&plan, &b.plan)),
        };
        if better {
            best = Some(ExactPlan { value, plan });
        }
    }
    best.ok_or_else(|| Error::Contract("no feasible vertex found".into()))
}

fn lex_less(a: &Mat, b: &Mat) -> bool {
    for (x, y) in a.data().iter().zip(b.data()) {
        if (x - y).abs() > 1e-12 {
            return x < y;
        }
    }
    false
}

/// Flow on a spanning-tree support, or `None` when the cells do not form a
/// tree or the unique flow is negative somewhere.
fn tree_flow(n: usize, m: usize, cells: &[usize]) -> Option<Mat> {
    // nodes 0..n are rows, n..n+m columns
    let mut supply: Vec<f64> = (0..n).map(|_| 1.0 / n as f64).chain((0..m).map(|_| 1.0 / m as f64)).collect();
    let mut degree = vec![0usize; n + m];
    for &c in cells {
        degree[c / m] += 1;
        degree[n + c % m] += 1;
    }
    let mut used = vec![false; cells.len()];
    let mut plan = Mat::zeros(n, m);
    for _ in 0..cells.len() {
        // peel a leaf: its only remaining edge must carry its whole supply
        let leaf = (0..n + m).find(|&v| degree[v] == 1)?;
        let (k, &c) = cells
            .iter()
            .enumerate()
            .find(|(k, &c)| !used[*k] && (c / m == leaf || n + c % m == leaf))?;
        let (r, col) = (c / m, n + c % m);
        let flow = supply[leaf];
        if flow < -1e-14 {
            return None;
        }
        plan.set(r, c % m, flow.max(0.0));
        used[k] = true;
        supply[r] -= flow;
        supply[col] -= flow;
        degree[r] -= 1;
        degree[col] -= 1;
    }
    // a spanning tree leaves every supply at zero; a cycle leaves edges unpeeled
    if supply.iter().any(|s| s.abs() > 1e-12) {
        return None;
    }
    Some(plan)
}
