//! EM training loop: scheduled E-steps produce balanced pseudo-labels from the
//! coupled transport problem, M-steps take Adam steps on
//! `λ·L_instance + L_agent + L_center` per mini-batch.

mod adam;
mod schedule;

pub use adam::Adam;
pub use schedule::estep_schedule;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acot::{acot_solve, cost_from_predictions, AcotConfig, AcotScheme};
use crate::caot::{caot_pass, center_loss_on_tape, CaotConfig};
use crate::data::{Dataset, Graph};
use crate::encoder::{
    agents_on_tape, encode_on_tape, featurize, forward, predict, project_on_tape, EncoderConfig, EncoderParams,
    FeatureScheme, GraphBatch, Head, PerturbScope, DEFAULT_DEGREE_CAP,
};
use crate::error::{Error, Result};
use crate::losses::{
    agent_decomposition, agent_loss_on_tape, instance_decomposition, instance_loss_on_tape, total_objective,
    Denominator, LossReport,
};
use crate::ndmath::{Mat, Tape};

/// Node feature selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureChoice {
    /// Node labels when the dataset has them, degrees otherwise.
    #[default]
    Auto,
    NodeLabels,
    Degree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub eta1: f64,
    pub tau: f64,
    pub sigma: f64,
    /// Defaults to the number of ground-truth classes.
    pub num_clusters: Option<usize>,
    /// Number of scheduled E-steps `K`.
    pub estep_count: usize,
    pub seed: u64,
    pub layers: usize,
    pub hidden_dim: usize,
    pub features: FeatureChoice,
    pub degree_cap: usize,
    pub perturb_scope: PerturbScope,
    pub include_positive_in_denominator: bool,
    pub acot_scheme: AcotScheme,
    pub acot_outer_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            lambda: 0.1,
            epsilon: 0.1,
            eta: 0.1,
            eta1: 0.1,
            tau: 0.2,
            sigma: 0.1,
            num_clusters: None,
            estep_count: 10,
            seed: 0,
            layers: 3,
            hidden_dim: 32,
            features: FeatureChoice::Auto,
            degree_cap: DEFAULT_DEGREE_CAP,
            perturb_scope: PerturbScope::Encoder,
            include_positive_in_denominator: false,
            acot_scheme: AcotScheme::Exact,
            acot_outer_iters: 50,
        }
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be at least {min}, got {v}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        at_least("epochs", self.epochs, 1)?;
        at_least("batch_size", self.batch_size, 2)?;
        at_least("estep_count", self.estep_count, 1)?;
        at_least("layers", self.layers, 1)?;
        at_least("hidden_dim", self.hidden_dim, 1)?;
        at_least("acot_outer_iters", self.acot_outer_iters, 1)?;
        if let Some(c) = self.num_clusters {
            at_least("num_clusters", c, 2)?;
        }
        nonneg("learning_rate", self.learning_rate)?;
        nonneg("lambda", self.lambda)?;
        nonneg("epsilon", self.epsilon)?;
        nonneg("sigma", self.sigma)?;
        positive("eta", self.eta)?;
        positive("eta1", self.eta1)?;
        positive("tau", self.tau)?;
        Ok(())
    }

    pub fn acot(&self) -> AcotConfig {
        AcotConfig { outer_iters: self.acot_outer_iters, scheme: self.acot_scheme, ..AcotConfig::with_epsilon(self.epsilon) }
    }

    pub fn caot(&self) -> CaotConfig {
        CaotConfig { eta: self.eta, eta1: self.eta1, ..CaotConfig::default() }
    }

    pub fn denominator(&self) -> Denominator {
        Denominator::from_flag(self.include_positive_in_denominator)
    }

    pub fn feature_scheme(&self, ds: &Dataset) -> Result<FeatureScheme> {
        let labels = FeatureScheme::NodeLabelsOnehot { num_labels: ds.num_node_labels };
        let degree = FeatureScheme::DegreeOnehot { cap: self.degree_cap };
        match self.features {
            FeatureChoice::Auto if ds.num_node_labels > 0 => Ok(labels),
            FeatureChoice::Auto | FeatureChoice::Degree => Ok(degree),
            FeatureChoice::NodeLabels if ds.num_node_labels > 0 => Ok(labels),
            FeatureChoice::NodeLabels => {
                Err(Error::Config(format!("features=node-labels but dataset {} has no node labels", ds.name)))
            }
        }
    }

    fn clusters(&self, ds: &Dataset) -> Result<usize> {
        match self.num_clusters {
            Some(c) => Ok(c),
            None if ds.num_clusters >= 2 => Ok(ds.num_clusters),
            None => Err(Error::Config(format!(
                "num_clusters is unset and dataset {} has {} label classes",
                ds.name, ds.num_clusters
            ))),
        }
    }
}

/// Trained parameters with the featurization they expect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: EncoderParams,
    pub features: FeatureScheme,
}

impl Model {
    pub fn init(ds: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<Model> {
        let features = cfg.feature_scheme(ds)?;
        let enc = EncoderConfig {
            input_dim: features.dim(),
            layers: cfg.layers,
            hidden_dim: cfg.hidden_dim,
            clusters: cfg.clusters(ds)?,
            tau: cfg.tau,
            sigma: cfg.sigma,
        };
        Ok(Model { params: EncoderParams::init(&enc, seed)?, features })
    }

    pub fn batch(&self, graphs: &[&Graph]) -> Result<GraphBatch> {
        GraphBatch::from_graphs(graphs, self.features)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Row-argmax of `soft`.
    pub labels: Vec<usize>,
    /// Predictions `P`, `N x C`.
    pub soft: Mat,
}

/// One line of the JSON-lines run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LogRecord {
    Step {
        epoch: usize,
        step: usize,
        #[serde(flatten)]
        report: LossReport,
    },
    Estep {
        epoch: usize,
        label_histogram: Vec<usize>,
        acot_objective: f64,
        marginal_residual: f64,
        acot_iterations: usize,
        acot_converged: bool,
    },
    SkippedBatch {
        epoch: usize,
        size: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstepResult {
    pub labels: Vec<usize>,
    pub histogram: Vec<usize>,
    pub objective: f64,
    pub marginal_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn histogram(labels: &[usize], clusters: usize) -> Vec<usize> {
    let mut h = vec![0; clusters];
    for &l in labels {
        h[l] += 1;
    }
    h
}

/// Pseudo-labels for every graph in `batch` from the original view and one
/// perturbed view drawn with `noise_seed`.
pub fn run_estep(batch: &GraphBatch, params: &EncoderParams, cfg: &TrainConfig, noise_seed: u64) -> Result<EstepResult> {
    let perturbed = params.perturb(cfg.sigma, noise_seed, cfg.perturb_scope)?;
    let p = forward(batch, params)?.p;
    let fp = forward(batch, &perturbed)?;
    let p_prime = predict(&fp.s, &perturbed.agents, cfg.tau)?;
    let m = cost_from_predictions(&p)?;
    let m_prime = cost_from_predictions(&p_prime)?;
    let state = acot_solve(&m, &m_prime, &cfg.acot())?;
    let labels = state.labels();
    Ok(EstepResult {
        histogram: histogram(&labels, params.num_clusters()),
        marginal_residual: state.max_marginal_residual(),
        objective: state.objective,
        iterations: state.iterations_used,
        converged: state.converged,
        labels,
    })
}

/// One Adam step on the full objective for a mini-batch with cached
/// pseudo-labels `q`. Centers are found on the detached batch
/// representations, so the center loss reaches only the agents.
pub fn run_mstep_batch(
    batch: &GraphBatch,
    params: &mut EncoderParams,
    opt: &mut Adam,
    q: &[usize],
    cfg: &TrainConfig,
    noise_seed: u64,
    caot_start: usize,
) -> Result<LossReport> {
    let clusters = params.num_clusters();
    if batch.num_graphs < clusters {
        return Err(Error::Contract(format!("batch of {} graphs is smaller than {clusters} clusters", batch.num_graphs)));
    }
    let denom = cfg.denominator();
    let noise = params.noise(cfg.sigma, noise_seed, cfg.perturb_scope);
    let mut tape = Tape::new();
    let mv = params.on_tape(&mut tape);
    let mv2 = mv.shifted(&mut tape, &noise)?;

    let x = encode_on_tape(&mut tape, &mv, batch)?;
    let x2 = encode_on_tape(&mut tape, &mv2, batch)?;
    let s = project_on_tape(&mut tape, &mv, x, Head::S)?;
    let s2 = project_on_tape(&mut tape, &mv2, x2, Head::S)?;
    let z = project_on_tape(&mut tape, &mv, x, Head::Z)?;
    let z2 = project_on_tape(&mut tape, &mv2, x2, Head::Z)?;
    let w_hat = agents_on_tape(&mut tape, &mv)?;

    let l_inst = instance_loss_on_tape(&mut tape, z, z2, cfg.tau, denom)?;
    let l_agent = agent_loss_on_tape(&mut tape, s, s2, w_hat, q, cfg.tau, denom)?;
    let (_, r, align) = caot_pass(tape.value(x), tape.value(w_hat), &cfg.caot(), caot_start)?;
    let l_center = center_loss_on_tape(&mut tape, w_hat, &r, &align.psi)?;

    let weighted = tape.scale(l_inst, cfg.lambda);
    let partial = tape.add(weighted, l_agent)?;
    let total = tape.add(partial, l_center)?;

    let report = total_objective(tape.scalar(l_inst), tape.scalar(l_agent), tape.scalar(l_center), cfg.lambda)
        .with_decomposition(
            instance_decomposition(tape.value(z), tape.value(z2), cfg.tau, denom)?,
            agent_decomposition(tape.value(s), tape.value(s2), tape.value(w_hat), q, cfg.tau, denom)?,
        );
    if !report.total.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss {} (instance {}, agent {}, center {})",
            report.total, report.l_instance, report.l_agent, report.l_center
        )));
    }

    let grads = tape.backward(total)?;
    let g: Vec<Mat> = mv.vars.iter().map(|&v| grads.wrt(v)).collect();
    opt.update(params.mats_mut(), &g)?;
    Ok(report)
}

/// `y_i = argmax_j P_ij` with unperturbed parameters.
pub fn assign(ds: &Dataset, model: &Model) -> Result<ClusterAssignment> {
    let graphs: Vec<&Graph> = ds.graphs.iter().collect();
    let soft = forward(&model.batch(&graphs)?, &model.params)?.p;
    Ok(ClusterAssignment { labels: soft.row_argmax(), soft })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: Model,
    pub assignment: ClusterAssignment,
    pub log: Vec<LogRecord>,
    /// Total loss of the last M-step.
    pub final_loss: f64,
}

impl FitResult {
    /// The run log as JSON lines.
    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|r| serde_json::to_string(r).expect("log records serialize") + "\n").collect()
    }
}

/// Runs the full EM loop. Every random draw derives from `cfg.seed`.
pub fn fit(ds: &Dataset, cfg: &TrainConfig) -> Result<FitResult> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Input(format!("dataset {} is empty", ds.name)));
    }
    let clusters = cfg.clusters(ds)?;
    if clusters > ds.len() {
        return Err(Error::Config(format!("{clusters} clusters for {} graphs", ds.len())));
    }
    if cfg.batch_size < clusters {
        return Err(Error::Config(format!("batch_size {} is below num_clusters {clusters}", cfg.batch_size)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(ds, cfg, rng.next_u64())?;
    let feats: Vec<Mat> = ds.graphs.iter().map(|g| featurize(g, model.features)).collect::<Result<_>>()?;
    let all: Vec<&Graph> = ds.graphs.iter().collect();
    let full = GraphBatch::pack(&all, &feats.iter().collect::<Vec<_>>())?;

    let schedule = estep_schedule(cfg.epochs, cfg.estep_count);
    let mut opt = Adam::new(cfg.learning_rate, &model.params.mats());
    let mut log = Vec::new();
    let mut q: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut step = 0;
    let mut final_loss = f64::NAN;

    for epoch in 1..=cfg.epochs {
        if schedule.contains(&epoch) {
            let e = run_estep(&full, &model.params, cfg, rng.next_u64())?;
            log::debug!("epoch {epoch}: E-step histogram {:?}", e.histogram);
            log.push(LogRecord::Estep {
                epoch,
                label_histogram: e.histogram,
                acot_objective: e.objective,
                marginal_residual: e.marginal_residual,
                acot_iterations: e.iterations,
                acot_converged: e.converged,
            });
            q = e.labels;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < clusters {
                log::warn!("epoch {epoch}: dropping a batch of {} graphs (< {clusters} clusters)", chunk.len());
                log.push(LogRecord::SkippedBatch { epoch, size: chunk.len() });
                continue;
            }
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let fs: Vec<&Mat> = chunk.iter().map(|&i| &feats[i]).collect();
            let batch = GraphBatch::pack(&graphs, &fs)?;
            let q_batch: Vec<usize> = chunk.iter().map(|&i| q[i]).collect();
            let noise_seed = rng.next_u64();
            let start = rng.random_range(0..chunk.len());
            step += 1;
            let report = run_mstep_batch(&batch, &mut model.params, &mut opt, &q_batch, cfg, noise_seed, start)?;
            log::trace!("epoch {epoch} step {step}: total {:.6}", report.total);
            final_loss = report.total;
            log.push(LogRecord::Step { epoch, step, report });
        }
    }
    let assignment = assign(ds, &model)?;
    Ok(FitResult { model, assignment, log, final_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic_er, SyntheticSpec};

    fn tiny() -> Dataset {
        gen_synthetic_er(&SyntheticSpec { per_class: 6, p: vec![0.15, 0.5], min_nodes: 8, max_nodes: 12, seed: 1 }).unwrap()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig { epochs: 3, batch_size: 8, hidden_dim: 8, layers: 2, estep_count: 2, ..TrainConfig::default() }
    }

    #[test]
    fn config_validation_names_the_key() {
        let bad = TrainConfig { lambda: -1.0, ..TrainConfig::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("lambda"), "{msg}");
        assert!(TrainConfig { tau: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { num_clusters: Some(1), ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn fit_is_deterministic_and_logs_identity() {
        let ds = tiny();
        let a = fit(&ds, &quick_cfg()).unwrap();
        let b = fit(&ds, &quick_cfg()).unwrap();
        assert_eq!(a.assignment.labels, b.assignment.labels);
        assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
        assert_eq!(a.log_jsonl(), b.log_jsonl());
        let estep_epochs: Vec<usize> =
            a.log.iter().filter_map(|r| if let LogRecord::Estep { epoch, .. } = r { Some(*epoch) } else { None }).collect();
        assert_eq!(estep_epochs, vec![1, 3]);
        for r in &a.log {
            if let LogRecord::Step { report, .. } = r {
                assert_eq!(report.total, report.lambda * report.l_instance + report.l_agent + report.l_center);
                let d = report.instance.unwrap();
                assert!((d.total() - report.l_instance).abs() < 1e-10);
            }
        }
        // 12 graphs in batches of 8: a full batch and one of 4
        assert_eq!(a.log.iter().filter(|r| matches!(r, LogRecord::Step { .. })).count(), 6);
        let c = fit(&ds, &TrainConfig { seed: 1, ..quick_cfg() }).unwrap();
        assert_ne!(a.final_loss.to_bits(), c.final_loss.to_bits());
    }

    #[test]
    fn small_last_batch_is_dropped() {
        let ds = tiny();
        let cfg = TrainConfig { batch_size: 11, epochs: 1, estep_count: 1, ..quick_cfg() };
        let r = fit(&ds, &cfg).unwrap();
        assert!(r.log.iter().any(|l| matches!(l, LogRecord::SkippedBatch { size: 1, .. })));
        assert_eq!(r.log.iter().filter(|l| matches!(l, LogRecord::Step { .. })).count(), 1);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let ds = tiny();
        let cfg = TrainConfig { learning_rate: 0.0, ..quick_cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = Model::init(&ds, &cfg, rng.next_u64()).unwrap();
        let r = fit(&ds, &cfg).unwrap();
        assert_eq!(r.model, init);
    }

    #[test]
    fn unperturbed_estep_is_single_view_transport() {
        let ds = tiny();
        let cfg = TrainConfig { sigma: 0.0, ..quick_cfg() };
        let model = Model::init(&ds, &cfg, 3).unwrap();
        let graphs: Vec<&Graph> = ds.graphs.iter().collect();
        let batch = model.batch(&graphs).unwrap();
        let e = run_estep(&batch, &model.params, &cfg, 0).unwrap();
        let m = cost_from_predictions(&forward(&batch, &model.params).unwrap().p).unwrap();
        let st = acot_solve(&m, &m, &cfg.acot()).unwrap();
        assert!(st.kl_pi_pi_prime() < 1e-10);
        assert_eq!(e.labels, st.labels());
        assert!(e.histogram.iter().all(|&h| (5..=7).contains(&h)), "{:?}", e.histogram);
    }

    #[test]
    fn agent_loss_falls_with_frozen_encoder() {
        let ds = tiny();
        let cfg = TrainConfig { lambda: 0.0, sigma: 0.0, ..quick_cfg() };
        let mut model = Model::init(&ds, &cfg, 5).unwrap();
        let graphs: Vec<&Graph> = ds.graphs.iter().collect();
        let batch = model.batch(&graphs).unwrap();
        let q = run_estep(&batch, &model.params, &cfg, 0).unwrap().labels;
        let trunk = model.params.trunk_len();
        let mut opt = Adam::new(cfg.learning_rate, &model.params.mats());
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let frozen: Vec<Mat> = model.params.mats()[..trunk].iter().map(|m| (*m).clone()).collect();
            let r = run_mstep_batch(&batch, &mut model.params, &mut opt, &q, &cfg, k, 0).unwrap();
            for (m, f) in model.params.mats_mut().into_iter().zip(frozen) {
                *m = f;
            }
            assert!(r.l_agent < prev, "step {k}: {} >= {prev}", r.l_agent);
            prev = r.l_agent;
        }
    }

    #[test]
    fn assignment_follows_graphs_under_reordering() {
        let ds = tiny();
        let model = Model::init(&ds, &quick_cfg(), 2).unwrap();
        let a = assign(&ds, &model).unwrap();
        assert_eq!(a.labels, a.soft.row_argmax());
        let order: Vec<usize> = (0..ds.len()).rev().collect();
        let b = assign(&ds.reordered(&order), &model).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(b.labels[k], a.labels[i]);
        }
    }

    #[test]
    fn training_lowers_the_objective() {
        let ds = tiny();
        let cfg = TrainConfig { epochs: 30, estep_count: 1, learning_rate: 1e-2, ..quick_cfg() };
        let r = fit(&ds, &cfg).unwrap();
        let totals: Vec<f64> =
            r.log.iter().filter_map(|l| if let LogRecord::Step { report, .. } = l { Some(report.total) } else { None }).collect();
        let head: f64 = totals[..6].iter().sum::<f64>() / 6.0;
        let tail: f64 = totals[totals.len() - 6..].iter().sum::<f64>() / 6.0;
        assert!(tail < head - 1.0, "{head} -> {tail}");
    }
}
