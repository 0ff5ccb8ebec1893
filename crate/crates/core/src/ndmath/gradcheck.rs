//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::ndmath::mat::Mat;
use crate::ndmath::tape::{Tape, Var};

/// Compares the tape gradient of `f` at `point` with central differences.
///
/// `f` receives a fresh tape and one leaf per entry of `point` and must return
/// a `1x1` node. The result is the largest
/// `|analytic - numeric| / max(1, |numeric|)` over every coordinate.
pub fn grad_check<F>(f: F, point: &[Mat], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let eval = |values: &[Mat]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = values.iter().map(|m| tape.leaf(m.clone())).collect();
        let root = f(&mut tape, &leaves)?;
        let v = tape.scalar(root);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("objective evaluated to {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let leaves: Vec<Var> = point.iter().map(|m| tape.leaf(m.clone())).collect();
    let root = f(&mut tape, &leaves)?;
    if !tape.scalar(root).is_finite() {
        return Err(Error::NonFinite("objective at the base point".into()));
    }
    let grads = tape.backward(root)?;

    let mut worst: f64 = 0.0;
    let mut probe: Vec<Mat> = point.to_vec();
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = grads.wrt(*leaf);
        for idx in 0..point[k].len() {
            let base = point[k].data()[idx];
            probe[k].data_mut()[idx] = base + h;
            let up = eval(&probe)?;
            probe[k].data_mut()[idx] = base - h;
            let down = eval(&probe)?;
            probe[k].data_mut()[idx] = base;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic.data()[idx] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn squared_norm_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Mat::random_normal(3, 4, 1.0, &mut rng);
        let err = grad_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.sum_all(sq))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn relu_sum_away_from_kink() {
        let x = Mat::from_rows(&[[0.5, -1.2, 2.0], [-0.3, 0.9, -2.2]]).unwrap();
        let err = grad_check(
            |t, v| {
                let r = t.relu(v[0]);
                Ok(t.sum_all(r))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let x = Mat::from_rows(&[[800.0]]).unwrap();
        let r = grad_check(
            |t, v| {
                let e = t.exp(v[0]);
                let e = t.exp(e);
                Ok(t.sum_all(e))
            },
            &[x],
            1e-5,
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    fn weights(t: &mut Tape, v: &[Var]) -> Result<Var> {
        // a composite exercising every differentiable op on the tape
        let adj = Arc::new(crate::ndmath::tape::Adjacency::from_undirected(4, &[(0, 1), (1, 2), (2, 3)])?);
        let h = t.neighbor_sum(v[0], adj)?;
        let h = t.matmul(h, v[1])?;
        let h = t.add_row(h, v[2])?;
        let h = t.relu(h);
        let p = t.segment_sum(h, Arc::from(vec![0, 0, 1, 1]), 2)?;
        let n = t.l2_normalize_rows(p)?;
        let tr = t.transpose(v[1]);
        let m = t.matmul(n, tr)?;
        let m = t.matmul_nt(m, v[0])?;
        let s = t.softmax_rows(m)?;
        let e = t.exp(s);
        let d = t.sub(e, s)?;
        let q = t.mul(d, s)?;
        let w = t.add(q, s)?;
        let picked = t.pick_per_row(w, Arc::from(vec![1, 0]))?;
        let lse = t.logsumexp_rows(w, Arc::from(vec![Some(0), None]))?;
        let both = t.add(picked, lse)?;
        let scaled = t.scale(both, 0.7);
        Ok(t.sum_all(scaled))
    }

    #[test]
    fn composite_of_every_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = Mat::random_normal(4, 3, 1.0, &mut rng);
            let w = Mat::random_normal(3, 4, 1.0, &mut rng);
            let b = Mat::random_normal(1, 4, 0.1, &mut rng);
            let err = grad_check(weights, &[x, w, b], 1e-5).unwrap();
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn matmul_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Mat::random_normal(3, 4, 1.0, &mut rng);
        let b = Mat::random_normal(4, 2, 1.0, &mut rng);
        let c = Mat::random_normal(3, 2, 1.0, &mut rng);
        let err = grad_check(
            |t, v| {
                let p = t.matmul(v[0], v[1])?;
                let q = t.mul(p, v[2])?;
                Ok(t.sum_all(q))
            },
            &[a, b, c],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn normalize_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Mat::random_normal(4, 3, 1.0, &mut rng);
        let c = Mat::random_normal(4, 3, 1.0, &mut rng);
        let err = grad_check(
            |t, v| {
                let n = t.l2_normalize_rows(v[0])?;
                let q = t.mul(n, v[1])?;
                Ok(t.sum_all(q))
            },
            &[a, c],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn segment_sum_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = Mat::random_normal(5, 2, 1.0, &mut rng);
        let c = Mat::random_normal(3, 2, 1.0, &mut rng);
        let err = grad_check(
            |t, v| {
                let s = t.segment_sum(v[0], Arc::from(vec![2, 0, 2, 1, 0]), 3)?;
                let q = t.mul(s, v[1])?;
                Ok(t.sum_all(q))
            },
            &[a, c],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
