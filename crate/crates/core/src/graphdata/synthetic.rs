//! Random typed graphs with planted per-class motifs.
//!
//! Each class owns a small connected pattern. A generated graph receives a
//! copy of each class's pattern independently with the planting probability,
//! and its label vector is then decided by subgraph search over the final
//! graph, so a motif that the background happens to contain is labelled
//! positive too.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{ExampleInput, InputKind, LabeledExample, MultilabelDataset};
use super::graph::AttributedGraph;
use super::isomorphism;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Stream};

/// Largest graph the generator will produce; bounds the exhaustive search.
pub const MAX_SYNTHETIC_NODES: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motif {
    pub nodes: Vec<usize>,
    pub edges: Vec<[usize; 3]>,
    #[serde(default)]
    pub root: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifSpec {
    pub num_node_types: usize,
    pub num_edge_types: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    #[serde(default = "default_plant_probability")]
    pub plant_probability: f64,
    /// Chance of an extra edge between any pair not already joined by the
    /// random spanning tree.
    #[serde(default)]
    pub extra_edge_probability: f64,
    /// Node types drawn for background nodes; all types when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_node_types: Option<Vec<usize>>,
    pub motifs: Vec<Motif>,
}

fn default_plant_probability() -> f64 {
    0.5
}

/// A motif that passed validation, with its radius around the root.
#[derive(Clone, Debug)]
pub struct CheckedMotif {
    pub pattern: AttributedGraph,
    pub root: usize,
    pub radius: usize,
}

impl MotifSpec {
    pub fn check(&self) -> Result<Vec<CheckedMotif>> {
        let field = |path: String, msg: String| Error::Validation(format!("{path}: {msg}"));
        if self.num_node_types == 0 || self.num_edge_types == 0 {
            return Err(field("num_node_types".into(), "type counts must be positive".into()));
        }
        if self.min_nodes == 0 || self.min_nodes > self.max_nodes {
            return Err(field("min_nodes".into(), format!("need 1 <= min_nodes <= max_nodes, got {}..{}", self.min_nodes, self.max_nodes)));
        }
        if self.max_nodes > MAX_SYNTHETIC_NODES {
            return Err(Error::Domain(format!(
                "max_nodes {} exceeds the {MAX_SYNTHETIC_NODES}-node limit of the subgraph oracle",
                self.max_nodes
            )));
        }
        for (name, p) in [
            ("plant_probability", self.plant_probability),
            ("extra_edge_probability", self.extra_edge_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(field(name.into(), format!("{p} is not a probability")));
            }
        }
        if let Some(bg) = &self.background_node_types {
            if bg.is_empty() {
                return Err(field("background_node_types".into(), "must not be empty".into()));
            }
            if let Some(&t) = bg.iter().find(|&&t| t >= self.num_node_types) {
                return Err(field("background_node_types".into(), format!("type {t} out of range")));
            }
        }
        if self.motifs.is_empty() {
            return Err(field("motifs".into(), "need at least one class motif".into()));
        }
        let mut checked = Vec::with_capacity(self.motifs.len());
        let mut total = 0;
        for (c, m) in self.motifs.iter().enumerate() {
            let path = |f: &str| format!("motifs[{c}].{f}");
            if let Some(&t) = m.nodes.iter().find(|&&t| t >= self.num_node_types) {
                return Err(field(path("nodes"), format!("node type {t} out of range")));
            }
            if let Some(e) = m.edges.iter().find(|e| e[2] >= self.num_edge_types) {
                return Err(field(path("edges"), format!("edge type {} out of range", e[2])));
            }
            let pattern = AttributedGraph::new(
                m.nodes.clone(),
                m.edges.iter().map(|e| (e[0], e[1], e[2])).collect(),
            )
            .map_err(|e| field(path("edges"), e.to_string()))?;
            if m.root >= pattern.num_nodes() {
                return Err(field(path("root"), format!("root {} out of range", m.root)));
            }
            if !pattern.is_connected() {
                return Err(field(path("edges"), "motif must be connected".into()));
            }
            if pattern.num_nodes() > self.max_nodes {
                return Err(Error::Domain(format!(
                    "motif {c} has {} nodes, more than max_nodes = {}",
                    pattern.num_nodes(),
                    self.max_nodes
                )));
            }
            total += pattern.num_nodes();
            let radius = pattern
                .bfs_distances(m.root)
                .into_iter()
                .flatten()
                .max()
                .unwrap_or(0);
            checked.push(CheckedMotif {
                pattern,
                root: m.root,
                radius,
            });
        }
        if total > self.max_nodes {
            return Err(Error::Domain(format!(
                "all motifs together need {total} nodes, more than max_nodes = {}",
                self.max_nodes
            )));
        }
        Ok(checked)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub dataset: MultilabelDataset,
    /// Which motifs were planted, per example and class.
    pub planted: Vec<Vec<bool>>,
    pub motifs: Vec<CheckedMotif>,
}

pub fn generate_synthetic(spec: &MotifSpec, n: usize, seed: u64) -> Result<SyntheticDataset> {
    if n == 0 {
        return Err(Error::Domain("need at least one example".into()));
    }
    let motifs = spec.check()?;
    let background: Vec<usize> = spec
        .background_node_types
        .clone()
        .unwrap_or_else(|| (0..spec.num_node_types).collect());

    let mut examples = Vec::with_capacity(n);
    let mut planted = Vec::with_capacity(n);
    for index in 0..n {
        let mut rng = keyed_rng(seed, Stream::Generate, index as u64);
        let plant: Vec<bool> = motifs
            .iter()
            .map(|_| rng.gen_bool(spec.plant_probability))
            .collect();
        let needed: usize = motifs
            .iter()
            .zip(&plant)
            .filter(|(_, &p)| p)
            .map(|(m, _)| m.pattern.num_nodes())
            .sum();
        let size = rng.gen_range(spec.min_nodes..=spec.max_nodes).max(needed);

        let mut types: Vec<usize> = (0..size).map(|_| *background.choose(&mut rng).expect("non-empty")).collect();
        let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for v in 1..size {
            let u = rng.gen_range(0..v);
            edges.insert((u, v), rng.gen_range(0..spec.num_edge_types));
        }
        if spec.extra_edge_probability > 0.0 {
            for u in 0..size {
                for v in u + 1..size {
                    if !edges.contains_key(&(u, v)) && rng.gen_bool(spec.extra_edge_probability) {
                        edges.insert((u, v), rng.gen_range(0..spec.num_edge_types));
                    }
                }
            }
        }

        // Disjoint host nodes per planted motif, so later plants never
        // overwrite earlier ones.
        let mut slots: Vec<usize> = (0..size).collect();
        slots.shuffle(&mut rng);
        let mut next = 0;
        for (m, _) in motifs.iter().zip(&plant).filter(|(_, &p)| p) {
            let hosts = &slots[next..next + m.pattern.num_nodes()];
            next += m.pattern.num_nodes();
            for (p, &h) in hosts.iter().enumerate() {
                types[h] = m.pattern.node_types()[p];
            }
            for &(a, b, e) in m.pattern.edges() {
                let (x, y) = (hosts[a].min(hosts[b]), hosts[a].max(hosts[b]));
                edges.insert((x, y), e);
            }
        }

        let graph = AttributedGraph::new(types, edges.into_iter().map(|((u, v), e)| (u, v, e)).collect())?;
        let labels = motifs
            .iter()
            .map(|m| isomorphism::contains(&m.pattern, &graph))
            .collect();
        examples.push(LabeledExample {
            input: ExampleInput::Graph(graph),
            labels,
        });
        planted.push(plant);
    }

    Ok(SyntheticDataset {
        dataset: MultilabelDataset {
            examples,
            num_labels: motifs.len(),
            num_node_types: spec.num_node_types,
            num_edge_types: spec.num_edge_types,
            input_kind: InputKind::Graph,
            feature_dim: None,
            label_graph: None,
        },
        planted,
        motifs,
    })
}
