//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any hard criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use udgc::acot::{acot_objective, acot_solve, acot_solve_observed, AcotConfig};
use udgc::caot::{align_centers, alignment_cost, center_loss_on_tape, centers_discovery, squared_distances};
use udgc::data::{gen_synthetic_er, load_tudataset, Graph, SyntheticSpec};
use udgc::encoder::{encode_on_tape, project_on_tape, EncoderConfig, EncoderParams, FeatureScheme, GraphBatch, Head, PerturbScope};
use udgc::losses::{
    agent_decomposition, agent_loss_on_tape, agent_loss_with, instance_decomposition, instance_loss_on_tape,
    instance_loss_with, total_objective, Denominator,
};
use udgc::metrics::{ari, clustering_accuracy, evaluate, hungarian, nmi};
use udgc::ndmath::{grad_check, Mat};
use udgc::ot::{exact_ot_small, marginal_residual, sinkhorn_uniform, OtConfig};
use udgc::trainer::{estep_schedule, fit, histogram, TrainConfig};

/// Outcome of one criterion: a verdict plus a one-line summary.
type Check = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn unit_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::random_normal(rows, cols, 1.0, rng).l2_normalize_rows().unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn c1_ot_feasibility() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_s, mut worst_a, mut iters_s, mut iters_a) = (0.0f64, 0.0f64, 0, 0);
    let acot_cfg = AcotConfig { inner_iters: 1000, ..AcotConfig::default() };
    for _ in 0..100 {
        let m = Mat::random_uniform(64, 8, 0.0, 1.0, &mut rng);
        let mp = Mat::random_uniform(64, 8, 0.0, 1.0, &mut rng);
        let s = sinkhorn_uniform(&m, &OtConfig::default()).unwrap();
        worst_s = worst_s.max(s.max_marginal_residual);
        iters_s = iters_s.max(s.iterations_used);
        let a = acot_solve(&m, &mp, &acot_cfg).unwrap();
        worst_a = worst_a.max(a.max_marginal_residual());
        iters_a = iters_a.max(a.iterations_used);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_s < 1e-6 && worst_a < 1e-6 && iters_s <= 1000 && secs < 10.0,
        format!(
            "sinkhorn residual {worst_s:.1e} (max {iters_s} iters), acot residual {worst_a:.1e} (max {iters_a} outer), {secs:.2}s"
        ),
    )
}

fn c2_sinkhorn_vs_lp() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let cfg = OtConfig { reg: 1e-3, max_iters: 100_000, tol: 1e-9 };
    let mut worst_ratio: f64 = 0.0;
    let mut ok = 0;
    for _ in 0..50 {
        let cost = Mat::random_uniform(4, 3, 0.0, 1.0, &mut rng);
        let exact = exact_ot_small(&cost).unwrap();
        let plan = sinkhorn_uniform(&cost, &cfg).unwrap();
        let value = plan.transport_cost(&cost);
        worst_ratio = worst_ratio.max(value / exact.value);
        if value <= exact.value * 1.01 {
            ok += 1;
        }
    }
    verdict(ok == 50, format!("{ok}/50 within 1%, worst ratio {worst_ratio:.5}"))
}

/// Coupled objective on the 2x2 polytope, `π = [[a, ½−a], [½−a, a]]`.
fn acot_2x2(m: &[f64; 4], mp: &[f64; 4], eps: f64, a: f64, b: f64) -> f64 {
    let p = [a, 0.5 - a, 0.5 - a, a];
    let q = [b, 0.5 - b, 0.5 - b, b];
    let mut v = 0.0;
    for k in 0..4 {
        v += p[k] * m[k] + q[k] * mp[k] + eps * (p[k] - q[k]) * (p[k] / q[k]).ln();
    }
    v
}

fn c3_acot_grid_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let steps = 1000;
    let point = |k: usize| 0.5 * (k as f64 + 0.5) / steps as f64;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = Mat::random_uniform(2, 2, 0.0, 1.0, &mut rng);
        let mp = Mat::random_uniform(2, 2, 0.0, 1.0, &mut rng);
        let s = acot_solve(&m, &mp, &AcotConfig::with_epsilon(0.1)).unwrap();
        let (ma, mpa): ([f64; 4], [f64; 4]) = (m.data().try_into().unwrap(), mp.data().try_into().unwrap());
        let mut grid = f64::INFINITY;
        for i in 0..steps {
            for j in 0..steps {
                grid = grid.min(acot_2x2(&ma, &mpa, 0.1, point(i), point(j)));
            }
        }
        let direct = acot_objective(&s.pi, &s.pi_prime, &m, &mp, 0.1);
        assert!((direct - s.objective).abs() < 1e-12);
        worst = worst.max((s.objective - grid).abs());
    }
    verdict(worst < 1e-3, format!("max |objective - grid minimum| = {worst:.2e}"))
}

fn c4_acot_symmetry() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    let mut iterations = 0;
    for _ in 0..20 {
        let m = Mat::random_uniform(16, 4, 0.0, 1.0, &mut rng);
        acot_solve_observed(&m, &m, &AcotConfig::default(), |it| {
            worst = worst.max(it.pi.max_abs_diff(it.pi_prime));
            iterations += 1;
        })
        .unwrap();
    }
    verdict(worst < 1e-10, format!("max |pi - pi'| = {worst:.1e} over {iterations} outer iterations"))
}

fn c5_caot_alignment_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let eta1 = 0.01;
    let (mut agree, mut unambiguous, mut all_agree) = (0, 0, 0);
    for _ in 0..200 {
        let c = rng.random_range(2..=6);
        let d = rng.random_range(2..=8);
        let w = unit_rows(c, d, &mut rng);
        let r = unit_rows(c, d, &mut rng);
        let cost = alignment_cost(&w, &r).unwrap();
        let psi = align_centers(&w, &r, eta1, 500).unwrap().psi;
        let assignment = hungarian(&cost).unwrap();
        let mut totals: Vec<f64> =
            permutations(c).iter().map(|p| p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum()).collect();
        totals.sort_by(f64::total_cmp);
        let gap = (totals[1] - totals[0]) / c as f64;
        let matches = psi.row_argmax() == assignment;
        all_agree += matches as usize;
        // Unambiguous: the runner-up permutation costs at least one
        // temperature more per unit of mass.
        if gap >= eta1 {
            unambiguous += 1;
            agree += matches as usize;
        }
    }
    let rate = agree as f64 / unambiguous.max(1) as f64;
    verdict(
        unambiguous > 0 && rate >= 0.95,
        format!("{agree}/{unambiguous} unambiguous trials agree ({:.1}%), {all_agree}/200 overall", 100.0 * rate),
    )
}

/// Best split of the rows of `x` into two groups of equal size by total
/// squared distance to the group means; returns the two means.
fn balanced_partition_oracle(x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows();
    let mean = |idx: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; x.cols()];
        for &i in idx {
            for (a, b) in m.iter_mut().zip(x.row(i)) {
                *a += b / idx.len() as f64;
            }
        }
        m
    };
    let spread = |idx: &[usize], m: &[f64]| -> f64 {
        idx.iter().map(|&i| x.row(i).iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum()
    };
    let mut best = (f64::INFINITY, vec![], vec![]);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n / 2 || mask & 1 == 0 {
            continue;
        }
        let a: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let b: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
        let (ma, mb) = (mean(&a), mean(&b));
        let v = spread(&a, &ma) + spread(&b, &mb);
        if v < best.0 {
            best = (v, ma, mb);
        }
    }
    (best.1, best.2)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn c6_centers_discovery() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let d = 4;
    let mut rows = Vec::new();
    for i in 0..8 {
        let sign = if i % 2 == 0 { 5.0 } else { -5.0 };
        let mut row: Vec<f64> = (0..d).map(|_| 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        row[0] += sign;
        rows.push(row);
    }
    let x = Mat::from_rows(&rows).unwrap();
    let state = centers_discovery(&x, 2, &udgc::caot::CaotConfig::default()).unwrap();
    let mut plus = vec![0.0; d];
    plus[0] = 5.0;
    let minus: Vec<f64> = plus.iter().map(|v| -v).collect();
    let (c0, c1) = (state.mu.row(0).to_vec(), state.mu.row(1).to_vec());
    let pair = |a: &[f64], b: &[f64], p: &[f64], q: &[f64]| (dist(a, p).max(dist(b, q))).min(dist(a, q).max(dist(b, p)));
    let blob_err = pair(&c0, &c1, &plus, &minus);
    let (oa, ob) = balanced_partition_oracle(&x);
    let oracle_err = pair(&c0, &c1, &oa, &ob);
    let (r, c) = marginal_residual(&state.xi);
    let residual = r.max(c);
    let _ = squared_distances(&x, &state.mu).unwrap();
    verdict(
        blob_err < 0.1 && oracle_err < 0.1 && residual < 1e-6,
        format!("blob error {blob_err:.2e}, oracle error {oracle_err:.2e}, xi residual {residual:.1e}"),
    )
}

fn gradient_graphs(seed: u64) -> Vec<Graph> {
    let mut graphs =
        gen_synthetic_er(&SyntheticSpec { per_class: 3, p: vec![0.25, 0.5], min_nodes: 4, max_nodes: 7, seed }).unwrap().graphs;
    graphs.truncate(6);
    graphs
}

fn c7_gradient_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let (n, c, d) = (6, 3, 5);
    let h = 1e-5;
    let mut worst = [0.0f64; 6];
    let denom = Denominator::default();
    let scheme = FeatureScheme::DegreeOnehot { cap: 6 };
    for trial in 0..20 {
        let z = unit_rows(n, d, &mut rng);
        let zp = unit_rows(n, d, &mut rng);
        let e = grad_check(|t, v| instance_loss_on_tape(t, v[0], v[1], 0.2, denom), &[z.clone(), zp.clone()], h).unwrap();
        worst[0] = worst[0].max(e);

        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let w = Mat::random_normal(c, d, 1.0, &mut rng);
        let e = grad_check(
            |t, v| {
                let wh = t.l2_normalize_rows(v[2])?;
                agent_loss_on_tape(t, v[0], v[1], wh, &labels, 0.2, denom)
            },
            &[z, zp, w.clone()],
            h,
        )
        .unwrap();
        worst[1] = worst[1].max(e);

        let r = unit_rows(c, d, &mut rng);
        let psi = align_centers(&w.l2_normalize_rows().unwrap(), &r, 0.1, 200).unwrap().psi;
        let e = grad_check(
            |t, v| {
                let wh = t.l2_normalize_rows(v[0])?;
                center_loss_on_tape(t, wh, &r, &psi)
            },
            &[w],
            h,
        )
        .unwrap();
        worst[2] = worst[2].max(e);

        // Encoder with random biases, so no pre-activation sits on a ReLU kink.
        let graphs = gradient_graphs(trial);
        let refs: Vec<&Graph> = graphs.iter().collect();
        let batch = GraphBatch::from_graphs(&refs, scheme).unwrap();
        let cfg = EncoderConfig { hidden_dim: d, layers: 2, ..EncoderConfig::new(scheme.dim(), c) };
        let params = EncoderParams::init(&cfg, trial).unwrap().perturb(0.1, trial + 100, PerturbScope::All).unwrap();
        let point: Vec<Mat> = params.mats().into_iter().cloned().collect();
        let weights = Mat::random_normal(n, d, 1.0, &mut rng);
        let e = grad_check(
            |t, v| {
                let mv = params.bind(v)?;
                let x = encode_on_tape(t, &mv, &batch)?;
                let k = t.leaf(weights.clone());
                let y = t.mul(x, k)?;
                Ok(t.sum_all(y))
            },
            &point,
            h,
        )
        .unwrap();
        worst[3] = worst[3].max(e);

        let x = Mat::random_normal(n, d, 1.0, &mut rng);
        let k = Mat::random_normal(n, d, 1.0, &mut rng);
        for (slot, head) in [(4, Head::S), (5, Head::Z)] {
            let mut with_x = point.clone();
            with_x.push(x.clone());
            let e = grad_check(
                |t, v| {
                    let (params_v, x_v) = v.split_at(v.len() - 1);
                    let mv = params.bind(params_v)?;
                    let s = project_on_tape(t, &mv, x_v[0], head)?;
                    let kk = t.leaf(k.clone());
                    let y = t.mul(s, kk)?;
                    Ok(t.sum_all(y))
                },
                &with_x,
                h,
            )
            .unwrap();
            worst[slot] = worst[slot].max(e);
        }
    }
    let names = ["instance", "agent", "center", "encode", "head S", "head Z"];
    let detail = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    verdict(worst.iter().all(|&w| w < 1e-4), format!("worst rel. error: {detail}"))
}

fn c8_end_to_end_synthetic() -> Verdict {
    let ds = gen_synthetic_er(&SyntheticSpec::two_class(100, 8)).unwrap();
    let cfg = TrainConfig { seed: 8, ..TrainConfig::default() };
    let start = Instant::now();
    let a = fit(&ds, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let b = fit(&ds, &cfg).unwrap();
    let deterministic = a.assignment.labels == b.assignment.labels && a.final_loss == b.final_loss;
    let s = evaluate(&a.assignment.labels, &ds.labels().unwrap()).unwrap();
    verdict(
        s.acc >= 0.9 && s.nmi >= 0.5 && secs < 300.0 && deterministic,
        format!("ACC {:.3}, NMI {:.3}, {secs:.1}s per run, deterministic {deterministic}", s.acc, s.nmi),
    )
}

fn c9_anti_collapse() -> Verdict {
    let ds = gen_synthetic_er(&SyntheticSpec::four_class(50, 11)).unwrap();
    let floor = ds.len() as f64 * 0.5 / 4.0;
    let mut mins = Vec::new();
    for seed in 0..5 {
        let r = fit(&ds, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        mins.push(*histogram(&r.assignment.labels, 4).iter().min().unwrap());
    }
    verdict(mins.iter().all(|&m| m as f64 >= floor), format!("min cluster sizes {mins:?}, floor {floor}"))
}

fn c10_loss_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut exact = true;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (li, la, lc, lambda) = (rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0, rng.random::<f64>(), rng.random::<f64>() * 10.0);
        exact &= total_objective(li, la, lc, lambda).total == lambda * li + la + lc;
        let n = rng.random_range(2..10);
        let c = rng.random_range(2..5);
        let d = rng.random_range(2..6);
        let z = unit_rows(n, d, &mut rng);
        let zp = unit_rows(n, d, &mut rng);
        let w = unit_rows(c, d, &mut rng);
        let q: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        for denom in [Denominator::ExcludePositive, Denominator::WithPositive] {
            let di = instance_decomposition(&z, &zp, 0.2, denom).unwrap();
            worst = worst.max((di.total() - instance_loss_with(&z, &zp, 0.2, denom).unwrap()).abs());
            let da = agent_decomposition(&z, &zp, &w, &q, 0.2, denom).unwrap();
            worst = worst.max((da.total() - agent_loss_with(&z, &zp, &w, &q, 0.2, denom).unwrap()).abs());
        }
    }
    verdict(exact && worst < 1e-10, format!("total exact {exact}, max decomposition gap {worst:.1e}"))
}

fn c11_metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut acc_ok = 0;
    for _ in 0..100 {
        let c = rng.random_range(1..=5);
        let n = rng.random_range(c..=30);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let brute = permutations(c)
            .iter()
            .map(|p| pred.iter().zip(&truth).filter(|&(&a, &b)| p[a] == b).count())
            .max()
            .unwrap() as f64
            / n as f64;
        if (clustering_accuracy(&pred, &truth).unwrap() - brute).abs() < 1e-12 {
            acc_ok += 1;
        }
    }
    let mut ari_worst: f64 = 0.0;
    for _ in 0..20 {
        let pred: Vec<usize> = (0..12).map(|_| rng.random_range(0..3)).collect();
        let truth: Vec<usize> = (0..12).map(|_| rng.random_range(0..4)).collect();
        let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..12 {
            for j in i + 1..12 {
                match (pred[i] == pred[j], truth[i] == truth[j]) {
                    (true, true) => a += 1.0,
                    (true, false) => b += 1.0,
                    (false, true) => c += 1.0,
                    (false, false) => d += 1.0,
                }
            }
        }
        let total: f64 = a + b + c + d;
        let expected = (a + b) * (a + c) / total;
        let max = ((a + b) + (a + c)) / 2.0;
        let reference = if max == expected { 1.0 } else { (a - expected) / (max - expected) };
        ari_worst = ari_worst.max((ari(&pred, &truth).unwrap() - reference).abs());
    }
    let (truth, pred) = ([0, 0, 1, 1], [0, 1, 0, 1]);
    let hand = (
        clustering_accuracy(&pred, &truth).unwrap(),
        nmi(&pred, &truth).unwrap(),
        ari(&pred, &truth).unwrap(),
    );
    let hand_ok = (hand.0 - 0.5).abs() < 1e-12 && hand.1.abs() < 1e-12 && (hand.2 + 0.5).abs() < 1e-12;
    verdict(
        acc_ok == 100 && ari_worst < 1e-12 && hand_ok,
        format!("ACC oracle {acc_ok}/100, ARI gap {ari_worst:.1e}, hand case {hand:?}"),
    )
}

/// Soft criterion: the floor is reported, not enforced.
fn c12_mutag() -> (Verdict, bool) {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/MUTAG");
    let ds = load_tudataset(dir, "MUTAG").unwrap();
    let truth = ds.labels().unwrap();
    let mut scores = Vec::new();
    for seed in 0..5 {
        let r = fit(&ds, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        scores.push(evaluate(&r.assignment.labels, &truth).unwrap());
    }
    let mean = |f: fn(&udgc::metrics::Scores) -> f64| scores.iter().map(f).sum::<f64>() / scores.len() as f64;
    let (acc, nmi_m, ari_m) = (mean(|s| s.acc), mean(|s| s.nmi), mean(|s| s.ari));
    let floor = acc >= 0.66;
    (
        verdict(
            true,
            format!(
                "5 seeds complete, mean ACC {acc:.3}, NMI {nmi_m:.3}, ARI {ari_m:.3}; reference ACC 0.798, NMI 0.353; floor 0.66 {}",
                if floor { "met" } else { "NOT met (logged)" }
            ),
        ),
        floor,
    )
}

fn schedule_properties(s: &[usize], t: usize) -> bool {
    let gaps: Vec<usize> = s.windows(2).map(|w| w[1] - w[0]).collect();
    s.first() == Some(&1)
        && (s.len() < 2 || s.last() == Some(&t))
        && gaps.iter().all(|&g| g > 0)
        && gaps.windows(2).all(|g| g[0] <= g[1])
}

fn c13_estep_schedule() -> Verdict {
    let exact = estep_schedule(100, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let mut ok = 0;
    for _ in 0..50 {
        let t = rng.random_range(2..=1000);
        let k = rng.random_range(2..=t.min(60));
        if schedule_properties(&estep_schedule(t, k), t) {
            ok += 1;
        }
    }
    verdict(exact == vec![1, 3, 10, 32, 100] && ok == 50, format!("(100, 5) -> {exact:?}, properties {ok}/50"))
}

fn main() {
    let hard: Vec<Check> = vec![
        ("1 OT feasibility", c1_ot_feasibility),
        ("2 Sinkhorn vs LP", c2_sinkhorn_vs_lp),
        ("3 ACOT grid oracle", c3_acot_grid_oracle),
        ("4 ACOT symmetry", c4_acot_symmetry),
        ("5 CAOT alignment oracle", c5_caot_alignment_oracle),
        ("6 Centers discovery", c6_centers_discovery),
        ("7 Gradient suite", c7_gradient_suite),
        ("8 End-to-end synthetic", c8_end_to_end_synthetic),
        ("9 Anti-collapse", c9_anti_collapse),
        ("10 Loss identities", c10_loss_identities),
        ("11 Metric oracles", c11_metric_oracles),
        ("13 E-step schedule", c13_estep_schedule),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let selected = |name: &str| filter.as_ref().is_none_or(|f| name.contains(f.as_str()));
    let mut failed = Vec::new();
    for (name, check) in hard {
        if !selected(name) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        println!(
            "criterion {name}: {} ({:.1}s) {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed.push(name);
        }
    }
    if selected("12 MUTAG desk run") {
        let start = Instant::now();
        match catch_unwind(c12_mutag) {
            Ok((v, floor)) => println!(
                "criterion 12 MUTAG desk run: {} ({:.1}s) {}",
                if floor { "PASS" } else { "PASS (soft floor missed)" },
                start.elapsed().as_secs_f64(),
                v.detail
            ),
            Err(_) => {
                println!("criterion 12 MUTAG desk run: FAIL pipeline did not complete");
                failed.push("12 MUTAG desk run");
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
