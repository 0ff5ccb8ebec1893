//! Instance and agent contrastive losses, and the weighted total objective.
//!
//! Both contrastive losses have the form `(1/N) Σ_n [-a_n + LSE(b_n)]` where
//! `a_n` is the positive logit and `b_n` the denominator logits. By default the
//! positive is left out of the denominator; [`Denominator::WithPositive`] gives
//! the usual InfoNCE form.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{logsumexp, Mat, Tape, Var};

/// Which logits enter the log-sum-exp denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    /// Negatives only.
    #[default]
    ExcludePositive,
    WithPositive,
}

impl Denominator {
    pub fn from_flag(include_positive_in_denominator: bool) -> Self {
        if include_positive_in_denominator {
            Denominator::WithPositive
        } else {
            Denominator::ExcludePositive
        }
    }

    fn exclusions(self, positives: &[usize]) -> Arc<[Option<usize>]> {
        match self {
            Denominator::ExcludePositive => positives.iter().map(|&p| Some(p)).collect(),
            Denominator::WithPositive => vec![None; positives.len()].into(),
        }
    }
}

/// Alignment and uniformity parts of a contrastive loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// `-(1/N) Σ_n a_n`.
    pub alignment: f64,
    /// `(1/N) Σ_n LSE(b_n)`.
    pub uniformity: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.alignment + self.uniformity
    }

    fn add(self, other: Decomposition) -> Decomposition {
        Decomposition { alignment: self.alignment + other.alignment, uniformity: self.uniformity + other.uniformity }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_instance: f64,
    pub l_agent: f64,
    pub l_center: f64,
    pub lambda: f64,
    /// `λ·l_instance + l_agent + l_center`.
    pub total: f64,
    pub instance: Option<Decomposition>,
    pub agent: Option<Decomposition>,
}

impl LossReport {
    pub fn with_decomposition(mut self, instance: Decomposition, agent: Decomposition) -> Self {
        self.instance = Some(instance);
        self.agent = Some(agent);
        self
    }
}

pub fn total_objective(l_instance: f64, l_agent: f64, l_center: f64, lambda: f64) -> LossReport {
    LossReport {
        l_instance,
        l_agent,
        l_center,
        lambda,
        total: lambda * l_instance + l_agent + l_center,
        instance: None,
        agent: None,
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("tau must be positive, got {tau}")))
    }
}

/// `(1/N) Σ_n [LSE(logits_n over the denominator) - logits_n,pos_n]`.
fn contrastive_on_tape(
    tape: &mut Tape,
    logits: Var,
    positives: &[usize],
    denom: Denominator,
) -> Result<Var> {
    let n = positives.len();
    let pos = tape.pick_per_row(logits, positives.into())?;
    let lse = tape.logsumexp_rows(logits, denom.exclusions(positives))?;
    let per_row = tape.sub(lse, pos)?;
    let sum = tape.sum_all(per_row);
    Ok(tape.scale(sum, 1.0 / n as f64))
}

fn contrastive_parts(logits: &Mat, positives: &[usize], denom: Denominator) -> Decomposition {
    let n = positives.len() as f64;
    let mut out = Decomposition::default();
    for (i, &p) in positives.iter().enumerate() {
        let row = logits.row(i);
        out.alignment -= row[p] / n;
        let terms = row.iter().enumerate().filter(|&(j, _)| denom == Denominator::WithPositive || j != p);
        out.uniformity += logsumexp(terms.map(|(_, &v)| v)) / n;
    }
    out
}

fn instance_checks(z: &Mat, z_prime: &Mat, tau: f64) -> Result<()> {
    check_tau(tau)?;
    if z.shape() != z_prime.shape() {
        return Err(Error::shape("instance_loss", format!("{:?} vs {:?}", z.shape(), z_prime.shape())));
    }
    if z.rows() < 2 {
        return Err(Error::Contract(format!("instance loss needs at least 2 rows, got {}", z.rows())));
    }
    Ok(())
}

/// Instance loss between views `Z` and `Z'`: row `n` of `Z'` is the positive
/// for row `n` of `Z`, every other row a negative.
pub fn instance_loss_on_tape(tape: &mut Tape, z: Var, z_prime: Var, tau: f64, denom: Denominator) -> Result<Var> {
    instance_checks(tape.value(z), tape.value(z_prime), tau)?;
    let sim = tape.matmul_nt(z, z_prime)?;
    let logits = tape.scale(sim, 1.0 / tau);
    let diag: Vec<usize> = (0..tape.value(z).rows()).collect();
    contrastive_on_tape(tape, logits, &diag, denom)
}

pub fn instance_loss(z: &Mat, z_prime: &Mat, tau: f64) -> Result<f64> {
    instance_loss_with(z, z_prime, tau, Denominator::default())
}

pub fn instance_loss_with(z: &Mat, z_prime: &Mat, tau: f64, denom: Denominator) -> Result<f64> {
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(z.clone()), tape.leaf(z_prime.clone()));
    let root = instance_loss_on_tape(&mut tape, a, b, tau, denom)?;
    Ok(tape.scalar(root))
}

pub fn instance_decomposition(z: &Mat, z_prime: &Mat, tau: f64, denom: Denominator) -> Result<Decomposition> {
    instance_checks(z, z_prime, tau)?;
    let logits = z.matmul_nt(z_prime)?.scale(1.0 / tau);
    let diag: Vec<usize> = (0..z.rows()).collect();
    Ok(contrastive_parts(&logits, &diag, denom))
}

fn agent_checks(s: &Mat, w_hat: &Mat, labels: &[usize], tau: f64) -> Result<()> {
    check_tau(tau)?;
    if w_hat.rows() < 2 {
        return Err(Error::Contract(format!("agent loss needs at least 2 agents, got {}", w_hat.rows())));
    }
    if labels.len() != s.rows() {
        return Err(Error::shape("agent_loss", format!("{} labels for {} rows", labels.len(), s.rows())));
    }
    if s.rows() == 0 {
        return Err(Error::Input("agent loss on an empty batch".into()));
    }
    if let Some((i, &q)) = labels.iter().enumerate().find(|&(_, &q)| q >= w_hat.rows()) {
        return Err(Error::Index(format!("label {q} at row {i}, only {} agents", w_hat.rows())));
    }
    Ok(())
}

/// Agent loss for one view: row `n` of `S` against agent `q_n` as positive.
pub fn agent_loss_single_on_tape(
    tape: &mut Tape,
    s: Var,
    w_hat: Var,
    labels: &[usize],
    tau: f64,
    denom: Denominator,
) -> Result<Var> {
    agent_checks(tape.value(s), tape.value(w_hat), labels, tau)?;
    let sim = tape.matmul_nt(s, w_hat)?;
    let logits = tape.scale(sim, 1.0 / tau);
    contrastive_on_tape(tape, logits, labels, denom)
}

/// `L_agent(S) + L_agent(S')`.
pub fn agent_loss_on_tape(
    tape: &mut Tape,
    s: Var,
    s_prime: Var,
    w_hat: Var,
    labels: &[usize],
    tau: f64,
    denom: Denominator,
) -> Result<Var> {
    let a = agent_loss_single_on_tape(tape, s, w_hat, labels, tau, denom)?;
    let b = agent_loss_single_on_tape(tape, s_prime, w_hat, labels, tau, denom)?;
    tape.add(a, b)
}

/// Two-view agent loss; `w_hat` must already be row-normalized.
pub fn agent_loss(s: &Mat, s_prime: &Mat, w_hat: &Mat, labels: &[usize], tau: f64) -> Result<f64> {
    agent_loss_with(s, s_prime, w_hat, labels, tau, Denominator::default())
}

pub fn agent_loss_with(
    s: &Mat,
    s_prime: &Mat,
    w_hat: &Mat,
    labels: &[usize],
    tau: f64,
    denom: Denominator,
) -> Result<f64> {
    let mut tape = Tape::new();
    let (a, b, w) = (tape.leaf(s.clone()), tape.leaf(s_prime.clone()), tape.leaf(w_hat.clone()));
    let root = agent_loss_on_tape(&mut tape, a, b, w, labels, tau, denom)?;
    Ok(tape.scalar(root))
}

pub fn agent_decomposition(
    s: &Mat,
    s_prime: &Mat,
    w_hat: &Mat,
    labels: &[usize],
    tau: f64,
    denom: Denominator,
) -> Result<Decomposition> {
    let mut out = Decomposition::default();
    for view in [s, s_prime] {
        agent_checks(view, w_hat, labels, tau)?;
        let logits = view.matmul_nt(w_hat)?.scale(1.0 / tau);
        out = out.add(contrastive_parts(&logits, labels, denom));
    }
    Ok(out)
}
