#![allow(dead_code)]

use gaml::graphdata::{AttributedGraph, DatasetMeta, InputKind, LabelGraph, Motif, MotifSpec};
use gaml::model::{AttentionMode, ModelConfig};
use rand::Rng;

/// Connected random graph: a random spanning tree plus extra edges.
pub fn random_graph(rng: &mut impl Rng, n: usize, node_types: usize, edge_types: usize, extra: f64) -> AttributedGraph {
    let types = (0..n).map(|_| rng.gen_range(0..node_types)).collect();
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v, rng.gen_range(0..edge_types)));
    }
    for u in 0..n {
        for v in u + 2..n {
            if rng.gen_bool(extra) && !edges.iter().any(|&(a, b, _)| (a, b) == (u, v)) {
                edges.push((u, v, rng.gen_range(0..edge_types)));
            }
        }
    }
    AttributedGraph::new(types, edges).unwrap()
}

pub fn random_label_graph(rng: &mut impl Rng, c: usize, edge_types: usize) -> LabelGraph {
    let mut edges = Vec::new();
    for a in 0..c {
        for b in 0..c {
            if a != b && rng.gen_bool(0.4) {
                edges.push((a, b, rng.gen_range(0..edge_types)));
            }
        }
    }
    LabelGraph::new(c, edge_types, edges).unwrap()
}

pub fn meta(c: usize, node_types: usize, edge_types: usize) -> DatasetMeta {
    DatasetMeta {
        num_labels: c,
        num_node_types: node_types,
        num_edge_types: edge_types,
        input_kind: InputKind::Graph,
        feature_dim: None,
    }
}

pub fn tiny_config(attention: AttentionMode, layers: usize, use_label_graph: bool) -> ModelConfig {
    ModelConfig {
        node_dim: 4,
        label_dim: 4,
        attention_dim: 4,
        readout_hidden: 4,
        layers,
        attention,
        use_label_graph,
        label_edge_types: 2,
        ..ModelConfig::default()
    }
}

/// Three classes, each a four-node radius-2 tree over all four node types;
/// the classes differ only in how the types and edge types are arranged.
pub fn motif_spec() -> MotifSpec {
    let m = |t: [usize; 4], e: [usize; 3]| Motif {
        nodes: t.to_vec(),
        edges: vec![[0, 1, e[0]], [1, 2, e[1]], [0, 3, e[2]]],
        root: 0,
    };
    MotifSpec {
        num_node_types: 4,
        num_edge_types: 2,
        min_nodes: 12,
        max_nodes: 20,
        plant_probability: 0.5,
        extra_edge_probability: 0.0,
        background_node_types: None,
        motifs: vec![
            m([0, 1, 2, 3], [0, 0, 1]),
            m([1, 0, 3, 2], [1, 1, 0]),
            m([2, 3, 0, 1], [0, 1, 1]),
        ],
    }
}

/// Brute-force subgraph containment: tries every injective assignment of
/// pattern nodes to host nodes.
pub fn brute_force_contains(pattern: &AttributedGraph, host: &AttributedGraph) -> bool {
    fn rec(p: &AttributedGraph, h: &AttributedGraph, map: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
        if map.len() == p.num_nodes() {
            return p.edges().iter().all(|&(a, b, e)| {
                let need = p.edges().iter().filter(|&&(x, y, f)| f == e && ((x, y) == (a, b) || (x, y) == (b, a))).count();
                let have = h.edge_types_between(map[a], map[b]).filter(|&f| f == e).count();
                have >= need
            });
        }
        let k = map.len();
        for v in 0..h.num_nodes() {
            if !used[v] && h.node_types()[v] == p.node_types()[k] {
                used[v] = true;
                map.push(v);
                if rec(p, h, map, used) {
                    return true;
                }
                map.pop();
                used[v] = false;
            }
        }
        false
    }
    rec(pattern, host, &mut Vec::new(), &mut vec![false; host.num_nodes()])
}

/// F1 from explicitly enumerated confusion cells.
pub fn f1_oracle(scores: &[Vec<f64>], truths: &[Vec<bool>], threshold: f64, cells: &[(usize, usize)]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
    for &(n, c) in cells {
        let pred = scores[n][c] >= threshold;
        let truth = truths[n][c];
        if pred && truth {
            tp += 1;
        }
        if pred && !truth {
            fp += 1;
        }
        if !pred && truth {
            fn_ += 1;
        }
    }
    if tp + fp + fn_ == 0 {
        0.0
    } else {
        f64::from(2 * tp) / f64::from(2 * tp + fp + fn_)
    }
}

/// Pair-count AUC over explicit cells; `None` if a class is missing.
pub fn auc_oracle(scores: &[Vec<f64>], truths: &[Vec<bool>], cells: &[(usize, usize)]) -> Option<f64> {
    let pos: Vec<f64> = cells.iter().filter(|&&(n, c)| truths[n][c]).map(|&(n, c)| scores[n][c]).collect();
    let neg: Vec<f64> = cells.iter().filter(|&&(n, c)| !truths[n][c]).map(|&(n, c)| scores[n][c]).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut twice = 0u64;
    for p in &pos {
        for q in &neg {
            twice += if p > q { 2 } else if p == q { 1 } else { 0 };
        }
    }
    Some(twice as f64 / (2 * pos.len() * neg.len()) as f64)
}
