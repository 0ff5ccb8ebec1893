//! The TUDataset flat-file layout: `<name>_A.txt` (1-indexed node pairs),
//! `<name>_graph_indicator.txt`, `<name>_graph_labels.txt`, and optionally
//! `<name>_node_labels.txt` and `<name>_node_attributes.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{remap_first_appearance, Dataset, Graph};
use crate::error::{Error, Result};
use crate::ndmath::Mat;

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Non-empty lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn read_optional(path: &Path) -> Result<Option<Vec<(usize, String)>>> {
    if path.exists() {
        read_lines(path).map(Some)
    } else {
        Ok(None)
    }
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format { file: path.display().to_string(), line, msg: msg.into() }
}

fn parse_int(path: &Path, line: usize, s: &str) -> Result<i64> {
    s.trim().parse().map_err(|_| format_err(path, line, format!("expected an integer, found {s:?}")))
}

pub fn load_tudataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    let a_path = file(dir, name, "A");
    let ind_path = file(dir, name, "graph_indicator");
    let gl_path = file(dir, name, "graph_labels");
    let nl_path = file(dir, name, "node_labels");
    let na_path = file(dir, name, "node_attributes");

    // node -> graph, with graph ids contiguous from 1
    let indicator = read_lines(&ind_path)?;
    let mut graph_of = Vec::with_capacity(indicator.len());
    let mut local_id = Vec::with_capacity(indicator.len());
    let mut sizes: Vec<usize> = Vec::new();
    for (line, text) in &indicator {
        let g = parse_int(&ind_path, *line, text)?;
        let expected_next = sizes.len() as i64 + 1;
        if g == expected_next {
            sizes.push(0);
        } else if g != sizes.len() as i64 {
            return Err(format_err(&ind_path, *line, format!("graph id {g} breaks the contiguous sequence")));
        }
        let gi = sizes.len() - 1;
        graph_of.push(gi);
        local_id.push(sizes[gi]);
        sizes[gi] += 1;
    }
    let total_nodes = graph_of.len();

    let labels_raw = read_lines(&gl_path)?;
    if labels_raw.len() != sizes.len() {
        let line = labels_raw.last().map_or(1, |l| l.0);
        return Err(format_err(&gl_path, line, format!("{} labels for {} graphs", labels_raw.len(), sizes.len())));
    }
    let mut raw = Vec::with_capacity(labels_raw.len());
    for (line, text) in &labels_raw {
        raw.push(parse_int(&gl_path, *line, text)?);
    }
    let (graph_labels, num_clusters) = remap_first_appearance(&raw);

    let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); sizes.len()];
    for (line, text) in read_lines(&a_path)? {
        let mut parts = text.split(',');
        let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format_err(&a_path, line, "expected two comma-separated node ids"));
        };
        let (u, v) = (parse_int(&a_path, line, u)?, parse_int(&a_path, line, v)?);
        for x in [u, v] {
            if x < 1 || x as usize > total_nodes {
                return Err(format_err(&a_path, line, format!("node {x} outside 1..={total_nodes}")));
            }
        }
        let (u, v) = (u as usize - 1, v as usize - 1);
        if graph_of[u] != graph_of[v] {
            return Err(format_err(&a_path, line, format!("edge joins graphs {} and {}", graph_of[u] + 1, graph_of[v] + 1)));
        }
        pairs[graph_of[u]].push((local_id[u], local_id[v]));
    }

    let node_labels = match read_optional(&nl_path)? {
        Some(lines) => {
            if lines.len() != total_nodes {
                let line = lines.last().map_or(1, |l| l.0);
                return Err(format_err(&nl_path, line, format!("{} node labels for {total_nodes} nodes", lines.len())));
            }
            let mut raw = Vec::with_capacity(lines.len());
            for (line, text) in &lines {
                raw.push(parse_int(&nl_path, *line, text)?);
            }
            Some(remap_first_appearance(&raw))
        }
        None => None,
    };

    let attributes = match read_optional(&na_path)? {
        Some(lines) => {
            if lines.len() != total_nodes {
                let line = lines.last().map_or(1, |l| l.0);
                return Err(format_err(&na_path, line, format!("{} attribute rows for {total_nodes} nodes", lines.len())));
            }
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lines.len());
            for (line, text) in &lines {
                let row: std::result::Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
                let row = row.map_err(|_| format_err(&na_path, *line, "expected comma-separated reals"))?;
                if rows.first().is_some_and(|r| r.len() != row.len()) {
                    return Err(format_err(&na_path, *line, "attribute rows differ in length"));
                }
                rows.push(row);
            }
            Some(rows)
        }
        None => None,
    };

    let mut graphs = Vec::with_capacity(sizes.len());
    let mut self_loops = 0;
    let mut first = 0;
    for (gi, &size) in sizes.iter().enumerate() {
        let (mut g, loops) = Graph::from_edges(size, &pairs[gi])?;
        self_loops += loops;
        g.label = Some(graph_labels[gi]);
        if let Some((ids, _)) = &node_labels {
            g.node_labels = Some(ids[first..first + size].to_vec());
        }
        if let Some(rows) = &attributes {
            g.node_attributes = Some(Mat::from_rows(&rows[first..first + size])?);
        }
        first += size;
        graphs.push(g);
    }
    if self_loops > 0 {
        log::warn!("{name}: dropped {self_loops} self-loops");
    }
    Ok(Dataset {
        name: name.to_string(),
        graphs,
        num_clusters,
        num_node_labels: node_labels.map_or(0, |(_, k)| k),
    })
}

/// Writes `ds` in the flat-file layout. Each undirected edge is written in
/// both directions; labels are written as their remapped ids.
pub fn write_tudataset(ds: &Dataset, dir: impl AsRef<Path>, name: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (mut a, mut ind, mut gl, mut nl, mut na) = (String::new(), String::new(), String::new(), String::new(), String::new());
    let has_nl = ds.graphs.iter().all(|g| g.node_labels.is_some());
    let has_na = ds.graphs.iter().all(|g| g.node_attributes.is_some());
    let mut offset = 1;
    for (gi, g) in ds.graphs.iter().enumerate() {
        let label = g.label.ok_or_else(|| Error::Input(format!("graph {gi} has no label to write")))?;
        writeln!(gl, "{label}").expect("writing to a String");
        for node in 0..g.num_nodes {
            writeln!(ind, "{}", gi + 1).expect("writing to a String");
            if has_nl {
                writeln!(nl, "{}", g.node_labels.as_ref().expect("checked")[node]).expect("writing to a String");
            }
            if has_na {
                let row: Vec<String> = g.node_attributes.as_ref().expect("checked").row(node).iter().map(|v| format!("{v:?}")).collect();
                writeln!(na, "{}", row.join(", ")).expect("writing to a String");
            }
        }
        for &(u, v) in &g.edges {
            writeln!(a, "{}, {}", u + offset, v + offset).expect("writing to a String");
            writeln!(a, "{}, {}", v + offset, u + offset).expect("writing to a String");
        }
        offset += g.num_nodes;
    }
    let mut outputs = vec![("A", a), ("graph_indicator", ind), ("graph_labels", gl)];
    if has_nl {
        outputs.push(("node_labels", nl));
    }
    if has_na {
        outputs.push(("node_attributes", na));
    }
    for (suffix, body) in outputs {
        let path = file(dir, name, suffix);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
