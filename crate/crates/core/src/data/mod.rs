//! Graph datasets: TUDataset flat files, a synthetic Erdős–Rényi generator,
//! summary statistics and a content hash.

mod synthetic;
mod tudataset;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ndmath::Mat;

pub use synthetic::{gen_synthetic_er, SyntheticSpec};
pub use tudataset::{load_tudataset, write_tudataset};

/// An undirected graph with 0-indexed nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    /// Undirected edges with `u < v`, sorted and free of duplicates.
    pub edges: Vec<(usize, usize)>,
    /// Discrete node labels, remapped to `0..num_node_labels`.
    pub node_labels: Option<Vec<usize>>,
    /// Continuous node attributes, `num_nodes x A`.
    pub node_attributes: Option<Mat>,
    /// Ground-truth class, used only for evaluation.
    pub label: Option<usize>,
}

impl Graph {
    /// Builds a graph from arbitrary undirected pairs: self-loops are dropped,
    /// duplicates and reversed duplicates collapse. Returns the graph and the
    /// number of self-loops removed.
    pub fn from_edges(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<(Graph, usize)> {
        if num_nodes == 0 {
            return Err(Error::Input("a graph needs at least one node".into()));
        }
        let mut edges = Vec::with_capacity(pairs.len());
        let mut loops = 0;
        for &(u, v) in pairs {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Index(format!("edge ({u}, {v}) outside {num_nodes} nodes")));
            }
            if u == v {
                loops += 1;
                continue;
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok((Graph { num_nodes, edges, node_labels: None, node_attributes: None, label: None }, loops))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Edge density `|E| / (n choose 2)`; zero for single-node graphs.
    pub fn density(&self) -> f64 {
        let n = self.num_nodes as f64;
        if self.num_nodes < 2 {
            return 0.0;
        }
        self.edges.len() as f64 / (n * (n - 1.0) / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    /// Number of distinct ground-truth labels; zero when unlabeled.
    pub num_clusters: usize,
    /// Size of the node-label alphabet; zero when nodes carry no labels.
    pub num_node_labels: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Ground-truth labels when every graph has one.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    /// Same graphs in the order given by `order`.
    pub fn reordered(&self, order: &[usize]) -> Dataset {
        Dataset { graphs: order.iter().map(|&i| self.graphs[i].clone()).collect(), ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub graphs: usize,
    pub clusters: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    /// Largest class size over smallest; absent without labels.
    pub ls_ratio: Option<f64>,
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let n = ds.len().max(1) as f64;
    let ls_ratio = ds.labels().and_then(|labels| {
        let mut counts = vec![0usize; ds.num_clusters];
        for l in labels {
            counts[l] += 1;
        }
        let max = *counts.iter().max()?;
        let min = *counts.iter().min()?;
        (min > 0).then(|| max as f64 / min as f64)
    });
    DatasetStats {
        graphs: ds.len(),
        clusters: ds.num_clusters,
        mean_nodes: ds.graphs.iter().map(|g| g.num_nodes).sum::<usize>() as f64 / n,
        mean_edges: ds.graphs.iter().map(|g| g.edges.len()).sum::<usize>() as f64 / n,
        ls_ratio,
    }
}

/// SHA-256 of a canonical text rendering of the graphs (name excluded).
pub fn dataset_hash(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(format!("clusters {} node_labels {}\n", ds.num_clusters, ds.num_node_labels));
    for g in &ds.graphs {
        let label = g.label.map_or_else(|| "-".to_string(), |l| l.to_string());
        h.update(format!("graph {} {} {}\n", g.num_nodes, g.edges.len(), label));
        for (u, v) in &g.edges {
            h.update(format!("{u} {v}\n"));
        }
        if let Some(nl) = &g.node_labels {
            let parts: Vec<String> = nl.iter().map(usize::to_string).collect();
            h.update(format!("labels {}\n", parts.join(" ")));
        }
        if let Some(attrs) = &g.node_attributes {
            let parts: Vec<String> = attrs.data().iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            h.update(format!("attrs {} {}\n", attrs.cols(), parts.join(" ")));
        }
    }
    hex::encode(h.finalize())
}

/// Relabels values to `0..k` in order of first appearance.
pub(crate) fn remap_first_appearance<T: PartialEq + Clone>(values: &[T]) -> (Vec<usize>, usize) {
    let mut seen: Vec<T> = Vec::new();
    let ids = values
        .iter()
        .map(|v| match seen.iter().position(|s| s == v) {
            Some(i) => i,
            None => {
                seen.push(v.clone());
                seen.len() - 1
            }
        })
        .collect();
    (ids, seen.len())
}
