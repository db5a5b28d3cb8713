//! Differentiable building blocks of one message-passing step.
//!
//! Node states are stored as rows: `X` is `|V| × d_x`, `L` is `C × d_l`, and
//! a weight written `W·x` acting on a column vector is applied as `X·W` with
//! `W` of shape `d_in × d_out`.

use crate::error::Result;
use crate::graphdata::{AttributedGraph, LabelGraph};
use crate::numerics::{Axis, Tape, Tensor, Var};

/// Row-normalized adjacency, one dense matrix per edge type that occurs.
///
/// Entry `(i, j)` of the type-`e` matrix is the number of type-`e` edges
/// between `i` and `j` divided by `|N(i)|`, so `Σ_e A_e · X · W_e` is the
/// mean over neighbors of the type-specific transform. Rows of nodes without
/// neighbors are zero.
#[derive(Clone, Debug)]
pub struct MeanAdjacency {
    per_type: Vec<Option<Tensor>>,
}

impl MeanAdjacency {
    pub fn from_graph(graph: &AttributedGraph, num_edge_types: usize) -> Self {
        let n = graph.num_nodes();
        Self::build(n, num_edge_types, |i| graph.neighbors(i))
    }

    pub fn from_label_graph(graph: &LabelGraph) -> Self {
        Self::build(graph.num_labels(), graph.num_edge_types(), |c| graph.neighbors(c))
    }

    fn build<'a>(n: usize, num_types: usize, neighbors: impl Fn(usize) -> &'a [(usize, usize)]) -> Self {
        let mut per_type: Vec<Option<Tensor>> = vec![None; num_types];
        for i in 0..n {
            let nb = neighbors(i);
            if nb.is_empty() {
                continue;
            }
            let w = 1.0 / nb.len() as f64;
            for &(j, e) in nb {
                let a = per_type[e].get_or_insert_with(|| Tensor::zeros(n, n));
                a.set(i, j, a.get(i, j) + w);
            }
        }
        Self { per_type }
    }

    pub fn is_empty(&self) -> bool {
        self.per_type.iter().all(Option::is_none)
    }
}

/// `μ_i = (1/|N(i)|) Σ_{j∈N(i)} W_{e_ij} x_j` for every row; zero for
/// isolated nodes.
pub fn mean_pool(tape: &mut Tape, states: Var, adjacency: &MeanAdjacency, weights: &[Var]) -> Result<Var> {
    let rows = tape.value(states).rows();
    let out_cols = weights
        .first()
        .map_or(tape.value(states).cols(), |&w| tape.value(w).cols());
    let mut total: Option<Var> = None;
    for (a, &w) in adjacency.per_type.iter().zip(weights) {
        let Some(a) = a else { continue };
        let a = tape.constant(a.clone());
        let transformed = tape.matmul(states, w)?;
        let pooled = tape.matmul(a, transformed)?;
        total = Some(match total {
            Some(t) => tape.add(t, pooled)?,
            None => pooled,
        });
    }
    Ok(match total {
        Some(t) => t,
        None => tape.constant(Tensor::zeros(rows, out_cols)),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct PairwiseVars {
    pub u: Var,
    pub w_node: Var,
    pub w_label: Var,
    pub b: Var,
}

/// `s_ic = uᵀ tanh(W_s x_i + U_s l_c + b_s)` as a `|V| × C` matrix.
pub fn pairwise_scores(tape: &mut Tape, x: Var, l: Var, p: &PairwiseVars) -> Result<Var> {
    let (n, c) = (tape.value(x).rows(), tape.value(l).rows());
    let px = tape.matmul(x, p.w_node)?;
    let pl = tape.matmul(l, p.w_label)?;
    let pl = tape.add_bias(pl, p.b)?;
    let pre = tape.pair_sum(px, pl)?;
    let act = tape.tanh(pre);
    let s = tape.matmul(act, p.u)?;
    tape.reshape(s, n, c)
}

/// Per input node, softmax of its score row over labels, then the weighted
/// sum of label states. Returns `(m: |V| × d_l, a: |V| × C)`.
pub fn input_to_label_message(tape: &mut Tape, scores: Var, l: Var) -> Result<(Var, Var)> {
    let a = tape.softmax(scores, Axis::Row);
    Ok((tape.matmul(a, l)?, a))
}

/// Per label, softmax of its score column over input nodes, then the
/// weighted sum of input states. Returns `(m: C × d_x, a: C × |V|)`.
pub fn label_to_input_message(tape: &mut Tape, scores: Var, x: Var) -> Result<(Var, Var)> {
    let by_node = tape.softmax(scores, Axis::Column);
    let a = tape.transpose(by_node);
    Ok((tape.matmul(a, x)?, a))
}

#[derive(Clone, Copy, Debug)]
pub struct HierarchicalVars {
    pub u1: Var,
    pub u2: Var,
    pub w1: Var,
    pub w2: Var,
    pub factors: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct HierarchicalOut {
    /// Message to input nodes, `|V| × d_l`.
    pub to_nodes: Var,
    /// Message to label nodes, `C × d_x`.
    pub to_labels: Var,
    /// Factor weights per input node, softmax over factors (`|V| × K`).
    pub node_over_factors: Var,
    /// Label weights per factor, softmax over labels (`C × K`).
    pub labels_per_factor: Var,
    /// Factor weights per label, softmax over factors (`C × K`).
    pub label_over_factors: Var,
    /// Node weights per factor, softmax over nodes (`|V| × K`).
    pub nodes_per_factor: Var,
}

/// Two-stage attention through `K` factor vectors `z_k`:
/// `s1_ik = u1ᵀ tanh(W1 x_i + z_k)` and `s2_ck = u2ᵀ tanh(W2 l_c + z_k)`.
///
/// Normalization axes follow the sum-to-one constraints: the input-node
/// message uses `a_ik` (over k) and `b_ck` (over c); the label message uses
/// `α_ck` (over k) and `β_ik` (over i).
pub fn hierarchical_messages(tape: &mut Tape, x: Var, l: Var, h: &HierarchicalVars) -> Result<HierarchicalOut> {
    let (n, c, k) = (
        tape.value(x).rows(),
        tape.value(l).rows(),
        tape.value(h.factors).rows(),
    );
    let px = tape.matmul(x, h.w1)?;
    let pre1 = tape.pair_sum(px, h.factors)?;
    let act1 = tape.tanh(pre1);
    let s1 = tape.matmul(act1, h.u1)?;
    let s1 = tape.reshape(s1, n, k)?;

    let pl = tape.matmul(l, h.w2)?;
    let pre2 = tape.pair_sum(pl, h.factors)?;
    let act2 = tape.tanh(pre2);
    let s2 = tape.matmul(act2, h.u2)?;
    let s2 = tape.reshape(s2, c, k)?;

    let labels_per_factor = tape.softmax(s2, Axis::Column);
    let bt = tape.transpose(labels_per_factor);
    let lambda = tape.matmul(bt, l)?;
    let node_over_factors = tape.softmax(s1, Axis::Row);
    let to_nodes = tape.matmul(node_over_factors, lambda)?;

    let nodes_per_factor = tape.softmax(s1, Axis::Column);
    let betat = tape.transpose(nodes_per_factor);
    let chi = tape.matmul(betat, x)?;
    let label_over_factors = tape.softmax(s2, Axis::Row);
    let to_labels = tape.matmul(label_over_factors, chi)?;

    Ok(HierarchicalOut {
        to_nodes,
        to_labels,
        node_over_factors,
        labels_per_factor,
        label_over_factors,
        nodes_per_factor,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct HighwayVars {
    pub gate_w: Var,
    pub gate_u: Var,
    pub gate_b: Var,
    pub cand_w: Var,
    pub cand_u: Var,
    pub cand_b: Var,
}

/// Gated update `(1 − α) ⊙ prev + α ⊙ relu(W_x prev + U_x msg + b_x)` with
/// `α = sigmoid(W_α prev + U_α msg + b_α)`. With `close_gate` the gate is
/// the constant 0 and the state passes through unchanged.
pub fn highway(tape: &mut Tape, prev: Var, msg: Var, hw: &HighwayVars, close_gate: bool) -> Result<Var> {
    let affine = |tape: &mut Tape, w: Var, u: Var, b: Var| -> Result<Var> {
        let a = tape.matmul(prev, w)?;
        let m = tape.matmul(msg, u)?;
        let s = tape.add(a, m)?;
        tape.add_bias(s, b)
    };
    let gate = if close_gate {
        let [r, c] = tape.value(prev).shape();
        tape.constant(Tensor::zeros(r, c))
    } else {
        let g = affine(tape, hw.gate_w, hw.gate_u, hw.gate_b)?;
        tape.sigmoid(g)
    };
    let cand = affine(tape, hw.cand_w, hw.cand_u, hw.cand_b)?;
    let cand = tape.relu(cand);
    let keep = tape.one_minus(gate);
    let kept = tape.mul(keep, prev)?;
    let moved = tape.mul(gate, cand)?;
    tape.add(kept, moved)
}

#[derive(Clone, Copy, Debug)]
pub struct ReadoutVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Shared two-layer MLP applied to every label state; returns `1 × C`
/// probabilities.
pub fn readout(tape: &mut Tape, l: Var, r: &ReadoutVars) -> Result<Var> {
    let h = tape.matmul(l, r.w1)?;
    let h = tape.add_bias(h, r.b1)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, r.w2)?;
    let o = tape.add_bias(o, r.b2)?;
    let o = tape.sigmoid(o);
    Ok(tape.transpose(o))
}
