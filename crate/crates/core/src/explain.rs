//! Label-to-input attention as explanations: trace export, per-label top-k
//! nodes, rooted substructures and the motif attention diagnostic.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{isomorphism, AttributedGraph, LabelGraph, MultilabelDataset};
use crate::model::{AttentionTrace, ForwardOptions, Model};
use crate::numerics::Tensor;

/// Factor-level matrices of one hierarchical step, as nested rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorExport {
    pub node_over_factors: Vec<Vec<f64>>,
    pub labels_per_factor: Vec<Vec<f64>>,
    pub label_over_factors: Vec<Vec<f64>>,
    pub nodes_per_factor: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerExport {
    /// 1-based message-passing step.
    pub t: usize,
    /// `C × |V|` label-to-input attention; each row sums to 1.
    pub probs: Vec<Vec<f64>>,
    /// `|V| × C` input-to-label attention.
    pub input_to_label: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<FactorExport>,
}

/// Everything needed to draw one graph's attention maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceExport {
    pub graph_id: String,
    /// Node type per node.
    pub nodes: Vec<usize>,
    /// `[i, j, edge_type]`.
    pub edges: Vec<[usize; 3]>,
    pub layers: Vec<LayerExport>,
}

impl TraceExport {
    pub fn new(graph_id: impl Into<String>, trace: &AttentionTrace, graph: &AttributedGraph) -> Result<Self> {
        let n = graph.num_nodes();
        let mut layers = Vec::with_capacity(trace.layers.len());
        for (i, layer) in trace.layers.iter().enumerate() {
            let [c, cols] = layer.label_to_input.shape();
            if cols != n || layer.input_to_label.shape() != [n, c] {
                return Err(Error::Validation(format!(
                    "layer {} attention is {c}×{cols}, graph has {n} nodes",
                    i + 1
                )));
            }
            layers.push(LayerExport {
                t: i + 1,
                probs: layer.label_to_input.to_rows(),
                input_to_label: layer.input_to_label.to_rows(),
                factors: layer.factors.as_ref().map(|f| FactorExport {
                    node_over_factors: f.node_over_factors.to_rows(),
                    labels_per_factor: f.labels_per_factor.to_rows(),
                    label_over_factors: f.label_over_factors.to_rows(),
                    nodes_per_factor: f.nodes_per_factor.to_rows(),
                }),
            });
        }
        Ok(Self {
            graph_id: graph_id.into(),
            nodes: graph.node_types().to_vec(),
            edges: graph.edges().iter().map(|&(i, j, e)| [i, j, e]).collect(),
            layers,
        })
    }

    /// `layer,label,node,prob` rows of the label-to-input matrices.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "layer,label,node,prob")?;
        for layer in &self.layers {
            for (c, row) in layer.probs.iter().enumerate() {
                for (i, p) in row.iter().enumerate() {
                    writeln!(w, "{},{c},{i},{p}", layer.t)?;
                }
            }
        }
        Ok(())
    }
}

/// Writes `<dir>/<graph_id>.json` and `<dir>/<graph_id>.csv`.
pub fn export_trace(export: &TraceExport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string(export)?;
    fs::write(dir.join(format!("{}.json", export.graph_id)), json + "\n")?;
    let mut csv = Vec::new();
    export.write_csv(&mut csv)?;
    fs::write(dir.join(format!("{}.csv", export.graph_id)), csv)?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceExport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// The `k` input nodes label `label` attends to most at step `t` (1-based),
/// highest first, ties by ascending node id.
pub fn top_k_nodes(trace: &AttentionTrace, label: usize, t: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    let layer = t
        .checked_sub(1)
        .and_then(|i| trace.layers.get(i))
        .ok_or_else(|| Error::Domain(format!("layer {t} outside 1..={}", trace.layers.len())))?;
    let probs: &Tensor = &layer.label_to_input;
    if label >= probs.rows() {
        return Err(Error::Domain(format!("label {label} outside 0..{}", probs.rows())));
    }
    if k == 0 || k > probs.cols() {
        return Err(Error::Domain(format!("k = {k} outside 1..={}", probs.cols())));
    }
    let mut ranked: Vec<(usize, f64)> = probs.row(label).iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

/// Induced subgraph on the nodes within `radius` hops of a root.
#[derive(Clone, Debug, PartialEq)]
pub struct RootedSubgraph {
    pub graph: AttributedGraph,
    /// Index of the root inside `graph`.
    pub root: usize,
    /// Original id of each node of `graph`, ascending.
    pub original_ids: Vec<usize>,
}

pub fn rooted_subgraph(graph: &AttributedGraph, root: usize, radius: usize) -> Result<RootedSubgraph> {
    if root >= graph.num_nodes() {
        return Err(Error::Domain(format!("root {root} outside 0..{}", graph.num_nodes())));
    }
    let dist = graph.bfs_distances(root);
    let original_ids: Vec<usize> = (0..graph.num_nodes())
        .filter(|&i| dist[i].is_some_and(|d| d <= radius))
        .collect();
    let mut new_id = vec![usize::MAX; graph.num_nodes()];
    for (k, &i) in original_ids.iter().enumerate() {
        new_id[i] = k;
    }
    let types = original_ids.iter().map(|&i| graph.node_types()[i]).collect();
    let edges = graph
        .edges()
        .iter()
        .filter(|&&(i, j, _)| new_id[i] != usize::MAX && new_id[j] != usize::MAX)
        .map(|&(i, j, e)| (new_id[i], new_id[j], e))
        .collect();
    let features = graph.node_features().map(|f| {
        let rows: Vec<Vec<f64>> = original_ids.iter().map(|&i| f.row(i).to_vec()).collect();
        Tensor::from_rows(&rows)
    });
    let features = features.transpose()?;
    Ok(RootedSubgraph {
        graph: AttributedGraph::build(types, edges, features, graph.allows_self_loops())?,
        root: new_id[root],
        original_ids,
    })
}

/// Final-step attention of positive labels on the nodes of their motif.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotifAttentionReport {
    /// (example, positive label) pairs whose motif occurs in the graph.
    pub cases: usize,
    /// Mean attention mass on motif nodes.
    pub mean_mass: f64,
    /// Mean of `|motif nodes| / |V|`, the mass under uniform attention.
    pub mean_uniform: f64,
    /// `mean_mass / mean_uniform`.
    pub ratio: f64,
}

/// For every example and every positive label `c`, sums the final-step
/// attention of label `c` over the nodes covered by occurrences of
/// `motifs[c]`. Labels without a motif occurrence are skipped.
pub fn motif_attention(model: &Model, dataset: &MultilabelDataset, motifs: &[AttributedGraph], label_graph: Option<&LabelGraph>) -> Result<MotifAttentionReport> {
    if motifs.len() != dataset.num_labels {
        return Err(Error::Validation(format!(
            "{} motifs for {} labels",
            motifs.len(),
            dataset.num_labels
        )));
    }
    let (mut mass, mut uniform, mut cases) = (0.0, 0.0, 0usize);
    for ex in &dataset.examples {
        let Some(graph) = ex.graph() else {
            return Err(Error::Validation("motif attention needs graph examples".into()));
        };
        let out = model.forward(
            graph,
            ForwardOptions {
                label_graph,
                ..Default::default()
            },
        )?;
        let Some(last) = out.trace.layers.last() else {
            return Err(Error::Domain("model has no message-passing steps".into()));
        };
        for c in ex.positive_labels() {
            let nodes = isomorphism::occurrence_nodes(&motifs[c], graph);
            if nodes.is_empty() {
                continue;
            }
            let row = last.label_to_input.row(c);
            mass += nodes.iter().map(|&i| row[i]).sum::<f64>();
            uniform += nodes.len() as f64 / graph.num_nodes() as f64;
            cases += 1;
        }
    }
    if cases == 0 {
        return Err(Error::Domain("no positive label with a motif occurrence".into()));
    }
    let (mean_mass, mean_uniform) = (mass / cases as f64, uniform / cases as f64);
    Ok(MotifAttentionReport {
        cases,
        mean_mass,
        mean_uniform,
        ratio: mean_mass / mean_uniform,
    })
}
