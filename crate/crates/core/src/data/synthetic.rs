use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Graph};
use crate::error::{Error, Result};

/// Erdős–Rényi graphs with one edge probability per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub per_class: usize,
    /// Edge probability of each class; its length is the number of classes.
    pub p: Vec<f64>,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two classes, `p = (0.15, 0.45)`, 20 to 30 nodes.
    pub fn two_class(per_class: usize, seed: u64) -> Self {
        SyntheticSpec { per_class, p: vec![0.15, 0.45], min_nodes: 20, max_nodes: 30, seed }
    }

    /// Four classes, `p = (0.1, 0.2, 0.35, 0.5)`, 20 to 30 nodes.
    pub fn four_class(per_class: usize, seed: u64) -> Self {
        SyntheticSpec { per_class, p: vec![0.1, 0.2, 0.35, 0.5], min_nodes: 20, max_nodes: 30, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.is_empty() {
            return Err(Error::Config("at least one class probability is required".into()));
        }
        if let Some(p) = self.p.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Config(format!("edge probability {p} must lie strictly between 0 and 1")));
        }
        if self.per_class == 0 {
            return Err(Error::Input("per_class = 0 yields an empty dataset".into()));
        }
        if self.min_nodes == 0 || self.min_nodes > self.max_nodes {
            return Err(Error::Config(format!("invalid node range {}..={}", self.min_nodes, self.max_nodes)));
        }
        Ok(())
    }
}

/// Generates `per_class` graphs per class, interleaved class by class
/// (`0, 1, .., C-1, 0, 1, ..`). Deterministic per seed.
pub fn gen_synthetic_er(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = spec.p.len();
    let mut graphs = Vec::with_capacity(classes * spec.per_class);
    for _ in 0..spec.per_class {
        for (class, &p) in spec.p.iter().enumerate() {
            let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
            let mut pairs = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random_bool(p) {
                        pairs.push((u, v));
                    }
                }
            }
            let (mut g, _) = Graph::from_edges(n, &pairs)?;
            g.label = Some(class);
            graphs.push(g);
        }
    }
    Ok(Dataset { name: format!("er{classes}"), graphs, num_clusters: classes, num_node_labels: 0 })
}
