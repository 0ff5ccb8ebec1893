//! Logarithmically spaced E-step epochs.

/// Epochs (1-based) at which pseudo-labels are regenerated: the distinct
/// values of `round(t^(k/(K-1)))` for `k = 0..K`, with the gaps between them
/// then pooled so they never shrink. When rounding already gives
/// nondecreasing gaps the result is exactly the rounded set.
pub fn estep_schedule(epochs: usize, count: usize) -> Vec<usize> {
    if epochs <= 1 || count <= 1 {
        return vec![1];
    }
    let t = epochs as f64;
    let mut points: Vec<usize> = (0..count)
        .map(|k| (t.powf(k as f64 / (count - 1) as f64).round() as usize).clamp(1, epochs))
        .collect();
    points.dedup();
    let gaps: Vec<usize> = points.windows(2).map(|w| w[1] - w[0]).collect();
    let mut out = vec![1];
    for g in pool_gaps(&gaps) {
        out.push(out.last().unwrap() + g);
    }
    out
}

/// Integer isotonic pooling: merges adjacent runs of gaps until every run,
/// spread as evenly as possible, stays at or below the run after it.
fn pool_gaps(gaps: &[usize]) -> Vec<usize> {
    // (sum, len) per run
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &g in gaps {
        runs.push((g, 1));
        while runs.len() >= 2 {
            let (sb, lb) = runs[runs.len() - 1];
            let (sa, la) = runs[runs.len() - 2];
            if sa.div_ceil(la) <= sb / lb {
                break;
            }
            runs.truncate(runs.len() - 2);
            runs.push((sa + sb, la + lb));
        }
    }
    let mut out = Vec::with_capacity(gaps.len());
    for (s, l) in runs {
        let (base, extra) = (s / l, s % l);
        out.extend((0..l).map(|i| if i >= l - extra { base + 1 } else { base }));
    }
    out
}
