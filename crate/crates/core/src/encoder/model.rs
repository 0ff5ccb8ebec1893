use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureScheme};
use crate::data::Graph;
use crate::error::{Error, Result};
use crate::ndmath::{Adjacency, Mat, Tape, Var};

/// Several graphs packed into one disjoint union.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    /// Node features of all graphs stacked in order.
    pub features: Mat,
    pub adjacency: Arc<Adjacency>,
    /// Graph index of every node, contiguous from 0.
    pub segments: Arc<[usize]>,
    /// First packed node of each graph.
    pub offsets: Vec<usize>,
    pub num_graphs: usize,
}

impl GraphBatch {
    /// Packs graphs with precomputed node features.
    pub fn pack(graphs: &[&Graph], features: &[&Mat]) -> Result<Self> {
        if graphs.len() != features.len() {
            return Err(Error::shape("GraphBatch::pack", format!("{} graphs, {} feature blocks", graphs.len(), features.len())));
        }
        let dim = features.first().map_or(0, |f| f.cols());
        let total: usize = graphs.iter().map(|g| g.num_nodes).sum();
        let mut data = Vec::with_capacity(total * dim);
        let mut edges = Vec::new();
        let mut segments = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (gi, (g, f)) in graphs.iter().zip(features).enumerate() {
            if f.rows() != g.num_nodes || f.cols() != dim {
                return Err(Error::shape("GraphBatch::pack", format!("graph {gi}: features {:?} for {} nodes", f.shape(), g.num_nodes)));
            }
            data.extend_from_slice(f.data());
            edges.extend(g.edges.iter().map(|&(u, v)| (u + offset, v + offset)));
            segments.extend(std::iter::repeat_n(gi, g.num_nodes));
            offsets.push(offset);
            offset += g.num_nodes;
        }
        Ok(GraphBatch {
            features: Mat::new(total, dim, data)?,
            adjacency: Arc::new(Adjacency::from_undirected(total, &edges)?),
            segments: segments.into(),
            offsets,
            num_graphs: graphs.len(),
        })
    }

    pub fn from_graphs(graphs: &[&Graph], scheme: FeatureScheme) -> Result<Self> {
        let feats = graphs.iter().map(|g| featurize(g, scheme)).collect::<Result<Vec<_>>>()?;
        GraphBatch::pack(graphs, &feats.iter().collect::<Vec<_>>())
    }
}

/// `x W + b` with `W` of shape `in x out` and `b` of shape `1 x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Mat,
}

impl Linear {
    fn he<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Linear {
            weight: Mat::random_normal(fan_in, fan_out, (2.0 / fan_in as f64).sqrt(), rng),
            bias: Mat::zeros(1, fan_out),
        }
    }
}

/// Two linear layers with a ReLU between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp2 {
    pub first: Linear,
    pub second: Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub layers: usize,
    pub hidden_dim: usize,
    pub clusters: usize,
    pub tau: f64,
    pub sigma: f64,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, clusters: usize) -> Self {
        EncoderConfig { input_dim, layers: 3, hidden_dim: 32, clusters, tau: 0.2, sigma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.layers == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("input_dim, layers and hidden_dim must be positive".into()));
        }
        if self.clusters < 2 {
            return Err(Error::Config(format!("need at least 2 clusters, got {}", self.clusters)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Which parameters weight perturbation touches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbScope {
    /// GIN layers and readout, the parameters that produce `X'`.
    #[default]
    Encoder,
    /// Every parameter, heads and agents included.
    All,
}

/// GIN trunk, readout, projection heads and cluster agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub gin: Vec<Mlp2>,
    pub readout: Linear,
    pub proj_s: Linear,
    pub proj_z: Mlp2,
    /// Agents `W`, `C x D`, stored unnormalized.
    pub agents: Mat,
    pub tau: f64,
    pub sigma: f64,
}

impl EncoderParams {
    /// He-initialized weights, zero biases, unit-norm standard-normal agents.
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden_dim;
        let mut gin = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let fan_in = if l == 0 { cfg.input_dim } else { h };
            gin.push(Mlp2 { first: Linear::he(fan_in, h, &mut rng), second: Linear::he(h, h, &mut rng) });
        }
        let readout = Linear::he(h, h, &mut rng);
        let proj_s = Linear::he(h, h, &mut rng);
        let proj_z = Mlp2 { first: Linear::he(h, h, &mut rng), second: Linear::he(h, h, &mut rng) };
        let agents = Mat::random_normal(cfg.clusters, h, 1.0, &mut rng).l2_normalize_rows()?;
        Ok(EncoderParams { gin, readout, proj_s, proj_z, agents, tau: cfg.tau, sigma: cfg.sigma })
    }

    pub fn hidden_dim(&self) -> usize {
        self.readout.weight.cols()
    }

    pub fn num_clusters(&self) -> usize {
        self.agents.rows()
    }

    /// Number of parameter matrices in the GIN trunk and readout; they come
    /// first in [`EncoderParams::mats`].
    pub fn trunk_len(&self) -> usize {
        4 * self.gin.len() + 2
    }

    /// Every parameter matrix in a fixed order: GIN layers, readout, `S`
    /// head, `Z` head, agents.
    pub fn mats(&self) -> Vec<&Mat> {
        let mut out = Vec::new();
        for m in &self.gin {
            out.extend([&m.first.weight, &m.first.bias, &m.second.weight, &m.second.bias]);
        }
        out.extend([&self.readout.weight, &self.readout.bias, &self.proj_s.weight, &self.proj_s.bias]);
        let z = &self.proj_z;
        out.extend([&z.first.weight, &z.first.bias, &z.second.weight, &z.second.bias, &self.agents]);
        out
    }

    pub fn mats_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = Vec::new();
        for m in &mut self.gin {
            out.extend([&mut m.first.weight, &mut m.first.bias, &mut m.second.weight, &mut m.second.bias]);
        }
        out.extend([&mut self.readout.weight, &mut self.readout.bias, &mut self.proj_s.weight, &mut self.proj_s.bias]);
        let z = &mut self.proj_z;
        out.extend([&mut z.first.weight, &mut z.first.bias, &mut z.second.weight, &mut z.second.bias, &mut self.agents]);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.mats().iter().map(|m| m.len()).sum()
    }

    /// `σ · N(0, 1)` draws for the parameters in `scope`, `None` elsewhere.
    /// Aligned with [`EncoderParams::mats`].
    pub fn noise(&self, sigma: f64, seed: u64, scope: PerturbScope) -> Vec<Option<Mat>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = match scope {
            PerturbScope::Encoder => self.trunk_len(),
            PerturbScope::All => usize::MAX,
        };
        self.mats()
            .iter()
            .enumerate()
            .map(|(k, m)| {
                (k < limit).then(|| {
                    let draws = (0..m.len()).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
                    Mat::new(m.rows(), m.cols(), draws).expect("shape from an existing matrix")
                })
            })
            .collect()
    }

    /// `θ' = θ + σ ε` with `ε ~ N(0, I)` over `scope`; deterministic per seed.
    pub fn perturb(&self, sigma: f64, seed: u64, scope: PerturbScope) -> Result<EncoderParams> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        let noise = self.noise(sigma, seed, scope);
        let mut out = self.clone();
        for (m, n) in out.mats_mut().into_iter().zip(noise) {
            if let Some(n) = n {
                m.add_assign(&n);
            }
        }
        Ok(out)
    }

    /// Registers every parameter as a leaf.
    pub fn on_tape(&self, tape: &mut Tape) -> ModelVars {
        let vars = self.mats().into_iter().map(|m| tape.leaf(m.clone())).collect();
        ModelVars { vars, layers: self.gin.len() }
    }

    /// Uses existing tape nodes as the parameters, in the order of
    /// [`EncoderParams::mats`].
    pub fn bind(&self, vars: &[Var]) -> Result<ModelVars> {
        let expected = self.gin.len() * 4 + 9;
        if vars.len() != expected {
            return Err(Error::Contract(format!("expected {expected} parameter nodes, got {}", vars.len())));
        }
        Ok(ModelVars { vars: vars.to_vec(), layers: self.gin.len() })
    }
}

/// Tape handles for the parameters, in the order of [`EncoderParams::mats`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub vars: Vec<Var>,
    layers: usize,
}

impl ModelVars {
    fn gin(&self, l: usize) -> &[Var] {
        &self.vars[4 * l..4 * l + 4]
    }

    fn base(&self) -> usize {
        4 * self.layers
    }

    pub fn agents(&self) -> Var {
        self.vars[self.base() + 8]
    }

    /// `θ + noise` on the tape, so gradients through the perturbed copy flow
    /// back into `θ`.
    pub fn shifted(&self, tape: &mut Tape, noise: &[Option<Mat>]) -> Result<ModelVars> {
        let mut vars = Vec::with_capacity(self.vars.len());
        for (&v, n) in self.vars.iter().zip(noise) {
            vars.push(match n {
                Some(n) => {
                    let leaf = tape.leaf(n.clone());
                    tape.add(v, leaf)?
                }
                None => v,
            });
        }
        Ok(ModelVars { vars, layers: self.layers })
    }
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Graph representations `X`, one row per graph.
pub fn encode_on_tape(tape: &mut Tape, mv: &ModelVars, batch: &GraphBatch) -> Result<Var> {
    let mut h = tape.leaf(batch.features.clone());
    for l in 0..mv.layers {
        let p = mv.gin(l);
        let agg = tape.neighbor_sum(h, batch.adjacency.clone())?;
        let z = linear(tape, agg, p[0], p[1])?;
        let z = tape.relu(z);
        let z = linear(tape, z, p[2], p[3])?;
        h = tape.relu(z);
    }
    let pooled = tape.segment_sum(h, batch.segments.clone(), batch.num_graphs)?;
    let b = mv.base();
    linear(tape, pooled, mv.vars[b], mv.vars[b + 1])
}

/// Which projection head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// One linear layer, used for cluster predictions.
    S,
    /// Two layers with a ReLU, used for the instance loss.
    Z,
}

/// Applies a head and normalizes rows onto the unit sphere.
pub fn project_on_tape(tape: &mut Tape, mv: &ModelVars, x: Var, head: Head) -> Result<Var> {
    let b = mv.base();
    let v = &mv.vars;
    let y = match head {
        Head::S => linear(tape, x, v[b + 2], v[b + 3])?,
        Head::Z => {
            let y = linear(tape, x, v[b + 4], v[b + 5])?;
            let y = tape.relu(y);
            linear(tape, y, v[b + 6], v[b + 7])?
        }
    };
    tape.l2_normalize_rows(y)
}

/// Row-normalized agents `Ŵ`.
pub fn agents_on_tape(tape: &mut Tape, mv: &ModelVars) -> Result<Var> {
    tape.l2_normalize_rows(mv.agents())
}

/// `softmax(S Ŵᵀ / τ)`.
pub fn predict_on_tape(tape: &mut Tape, s: Var, w_hat: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let logits = tape.matmul_nt(s, w_hat)?;
    let logits = tape.scale(logits, 1.0 / tau);
    tape.softmax_rows(logits)
}

pub fn encode(batch: &GraphBatch, params: &EncoderParams) -> Result<Mat> {
    let mut tape = Tape::new();
    let mv = params.on_tape(&mut tape);
    let x = encode_on_tape(&mut tape, &mv, batch)?;
    Ok(tape.value(x).clone())
}

pub fn project_and_normalize(x: &Mat, head: Head, params: &EncoderParams) -> Result<Mat> {
    let mut tape = Tape::new();
    let mv = params.on_tape(&mut tape);
    let xv = tape.leaf(x.clone());
    let y = project_on_tape(&mut tape, &mv, xv, head)?;
    Ok(tape.value(y).clone())
}

/// `softmax(S Ŵᵀ / τ)` with `Ŵ` the row-normalized agents.
pub fn predict(s: &Mat, w: &Mat, tau: f64) -> Result<Mat> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let w_hat = w.l2_normalize_rows()?;
    s.matmul_nt(&w_hat)?.scale(1.0 / tau).softmax_rows()
}

/// All forward outputs for one batch under one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub x: Mat,
    pub s: Mat,
    pub z: Mat,
    pub p: Mat,
}

pub fn forward(batch: &GraphBatch, params: &EncoderParams) -> Result<Forward> {
    let mut tape = Tape::new();
    let mv = params.on_tape(&mut tape);
    let x = encode_on_tape(&mut tape, &mv, batch)?;
    let s = project_on_tape(&mut tape, &mv, x, Head::S)?;
    let z = project_on_tape(&mut tape, &mv, x, Head::Z)?;
    let w = agents_on_tape(&mut tape, &mv)?;
    let p = predict_on_tape(&mut tape, s, w, params.tau)?;
    Ok(Forward {
        x: tape.value(x).clone(),
        s: tape.value(s).clone(),
        z: tape.value(z).clone(),
        p: tape.value(p).clone(),
    })
}
