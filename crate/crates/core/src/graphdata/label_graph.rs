use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Directed dependency edges between labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelGraph {
    num_labels: usize,
    num_edge_types: usize,
    edges: Vec<(usize, usize, usize)>,
    in_neighbors: Vec<Vec<(usize, usize)>>,
}

impl LabelGraph {
    /// `edges` are `(src, dst, edge_type)`; messages flow from `src` to `dst`.
    pub fn new(num_labels: usize, num_edge_types: usize, edges: Vec<(usize, usize, usize)>) -> Result<Self> {
        let mut in_neighbors = vec![Vec::new(); num_labels];
        for &(src, dst, e) in &edges {
            if src >= num_labels || dst >= num_labels {
                return Err(Error::Validation(format!(
                    "label edge {src} -> {dst} outside 0..{num_labels}"
                )));
            }
            if e >= num_edge_types {
                return Err(Error::Validation(format!(
                    "label edge type {e} outside 0..{num_edge_types}"
                )));
            }
            in_neighbors[dst].push((src, e));
        }
        Ok(Self {
            num_labels,
            num_edge_types,
            edges,
            in_neighbors,
        })
    }

    pub fn empty(num_labels: usize) -> Self {
        Self {
            num_labels,
            num_edge_types: 1,
            edges: Vec::new(),
            in_neighbors: vec![Vec::new(); num_labels],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_edge_types(&self) -> usize {
        self.num_edge_types
    }

    pub fn edges(&self) -> &[(usize, usize, usize)] {
        &self.edges
    }

    /// `N(c)`: labels with an edge into `c`, with the edge type.
    pub fn neighbors(&self, c: usize) -> &[(usize, usize)] {
        &self.in_neighbors[c]
    }

    /// Relabels: label `c` becomes `perm[c]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|&(s, d, e)| (perm[s], perm[d], e))
            .collect();
        Self::new(self.num_labels, self.num_edge_types, edges)
    }
}

pub fn load_label_graph(path: impl AsRef<Path>, threshold: f64, num_labels: usize) -> Result<LabelGraph> {
    parse_label_graph(&fs::read_to_string(path)?, threshold, num_labels)
}

/// Parses `src dst score` rows and keeps the edges whose score is strictly
/// above `threshold`. Blank lines and `#` comments are skipped.
pub fn parse_label_graph(text: &str, threshold: f64, num_labels: usize) -> Result<LabelGraph> {
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: format!("{msg}: {raw:?}"),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [src, dst, score] = fields[..] else {
            return Err(parse_err("expected `src dst score`"));
        };
        let src: usize = src.parse().map_err(|_| parse_err("bad source label"))?;
        let dst: usize = dst.parse().map_err(|_| parse_err("bad destination label"))?;
        let score: f64 = score.parse().map_err(|_| parse_err("bad score"))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Validation(format!(
                "line {}: score {score} outside [0, 1]",
                i + 1
            )));
        }
        if src >= num_labels || dst >= num_labels {
            return Err(Error::Validation(format!(
                "line {}: label id not below C = {num_labels}",
                i + 1
            )));
        }
        if score > threshold {
            edges.push((src, dst, 0));
        }
    }
    LabelGraph::new(num_labels, 1, edges)
}
