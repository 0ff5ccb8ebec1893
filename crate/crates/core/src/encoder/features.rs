use serde::{Deserialize, Serialize};

use crate::data::Graph;
use crate::error::{Error, Result};
use crate::ndmath::Mat;

/// Default degree above which nodes share one overflow bucket.
pub const DEFAULT_DEGREE_CAP: usize = 64;

/// How node input features are built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "scheme")]
pub enum FeatureScheme {
    /// One-hot of the discrete node label.
    NodeLabelsOnehot { num_labels: usize },
    /// One-hot of the degree in buckets `0..=cap`, plus one overflow bucket.
    DegreeOnehot { cap: usize },
}

impl FeatureScheme {
    pub fn dim(&self) -> usize {
        match *self {
            FeatureScheme::NodeLabelsOnehot { num_labels } => num_labels,
            FeatureScheme::DegreeOnehot { cap } => cap + 2,
        }
    }
}

pub fn featurize(graph: &Graph, scheme: FeatureScheme) -> Result<Mat> {
    let mut out = Mat::zeros(graph.num_nodes, scheme.dim());
    match scheme {
        FeatureScheme::NodeLabelsOnehot { num_labels } => {
            let labels = graph
                .node_labels
                .as_ref()
                .ok_or_else(|| Error::Input("node-label features need node labels".into()))?;
            for (v, &l) in labels.iter().enumerate() {
                if l >= num_labels {
                    return Err(Error::Index(format!("node label {l} outside 0..{num_labels}")));
                }
                out.set(v, l, 1.0);
            }
        }
        FeatureScheme::DegreeOnehot { cap } => {
            for (v, d) in graph.degrees().into_iter().enumerate() {
                out.set(v, d.min(cap + 1), 1.0);
            }
        }
    }
    Ok(out)
}
