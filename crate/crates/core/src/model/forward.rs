use rand::{Rng, RngCore};

use super::config::{AttentionMode, ModelConfig};
use super::layers::{
    self, HierarchicalVars, HighwayVars, MeanAdjacency, PairwiseVars, ReadoutVars,
};
use super::params::{init_params, AttentionSlots, HighwaySlots, InputSlots, ModelParams, ParamLayout};
use super::trace::{AttentionTrace, FactorTrace, LayerTrace};
use crate::error::{Error, Result};
use crate::graphdata::{AttributedGraph, DatasetMeta, ExampleInput, InputKind, LabelGraph, LabeledExample};
use crate::numerics::{Tape, Tensor, Var};

/// Per-call switches for a forward pass.
#[derive(Default)]
pub struct ForwardOptions<'a> {
    /// Label dependency graph; required when the model was configured with
    /// `use_label_graph`, ignored otherwise.
    pub label_graph: Option<&'a LabelGraph>,
    /// Source for the input-node dropout mask. Dropout is applied only when
    /// this is set (training) and the configured rate is positive.
    pub dropout_rng: Option<&'a mut dyn RngCore>,
    /// Forces every highway gate to zero so states pass through unchanged.
    pub close_gates: bool,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `X^T`, `|V| × d_x`.
    pub node_states: Tensor,
    /// `L^T`, `C × d_l`.
    pub label_states: Tensor,
    /// Per-label probabilities, `1 × C`.
    pub outputs: Tensor,
    pub trace: AttentionTrace,
}

/// A forward pass still on its tape, ready for a loss and `backward`.
pub struct TapedForward {
    pub tape: Tape,
    /// One leaf per parameter tensor, in layout order.
    pub param_vars: Vec<Var>,
    pub node_states: Var,
    pub label_states: Var,
    pub outputs: Var,
    pub trace: AttentionTrace,
}

impl TapedForward {
    fn finish(self) -> ForwardOutput {
        ForwardOutput {
            node_states: self.tape.value(self.node_states).clone(),
            label_states: self.tape.value(self.label_states).clone(),
            outputs: self.tape.value(self.outputs).clone(),
            trace: self.trace,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub meta: DatasetMeta,
    pub params: ModelParams,
}

enum Attn {
    Pairwise(PairwiseVars),
    Hierarchical(HierarchicalVars),
    None,
}

/// Parameter leaves of one tape, resolved to their roles.
struct Bound {
    vars: Vec<Var>,
    attn: Attn,
    node_hw: HighwayVars,
    label_hw: HighwayVars,
    readout: ReadoutVars,
    edges: Vec<Var>,
    label_edges: Vec<Var>,
}

fn hw_vars(v: &[Var], s: &HighwaySlots) -> HighwayVars {
    HighwayVars {
        gate_w: v[s.gate_w],
        gate_u: v[s.gate_u],
        gate_b: v[s.gate_b],
        cand_w: v[s.cand_w],
        cand_u: v[s.cand_u],
        cand_b: v[s.cand_b],
    }
}

impl Model {
    pub fn new(config: ModelConfig, meta: DatasetMeta, seed: u64) -> Result<Self> {
        let params = init_params(&config, &meta, seed)?;
        Ok(Self { config, meta, params })
    }

    /// Wraps existing parameters after checking they fit `config` and `meta`.
    pub fn from_params(config: ModelConfig, meta: DatasetMeta, params: ModelParams) -> Result<Self> {
        let layout = ParamLayout::new(&config, &meta)?;
        if &layout != params.layout() {
            return Err(Error::Validation(
                "parameter layout does not match the model configuration".into(),
            ));
        }
        Ok(Self { config, meta, params })
    }

    pub fn num_labels(&self) -> usize {
        self.meta.num_labels
    }

    fn bind(&self, tape: &mut Tape) -> Bound {
        let vars: Vec<Var> = self
            .params
            .tensors()
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect();
        let layout = self.params.layout();
        let attn = match &layout.attention {
            AttentionSlots::Pairwise { u, w_node, w_label, b } => Attn::Pairwise(PairwiseVars {
                u: vars[*u],
                w_node: vars[*w_node],
                w_label: vars[*w_label],
                b: vars[*b],
            }),
            AttentionSlots::Hierarchical { u1, u2, w1, w2, factors } => {
                Attn::Hierarchical(HierarchicalVars {
                    u1: vars[*u1],
                    u2: vars[*u2],
                    w1: vars[*w1],
                    w2: vars[*w2],
                    factors: vars[*factors],
                })
            }
            AttentionSlots::None => Attn::None,
        };
        let edges = match &layout.input {
            InputSlots::Graph { edges, .. } => edges.iter().map(|&e| vars[e]).collect(),
            InputSlots::Vector { .. } => Vec::new(),
        };
        let r = &layout.readout;
        Bound {
            attn,
            node_hw: hw_vars(&vars, &layout.node_highway),
            label_hw: hw_vars(&vars, &layout.label_highway),
            readout: ReadoutVars {
                w1: vars[r.w1],
                b1: vars[r.b1],
                w2: vars[r.w2],
                b2: vars[r.b2],
            },
            edges,
            label_edges: layout.label_edges.iter().map(|&e| vars[e]).collect(),
            vars,
        }
    }

    fn label_adjacency(&self, opts: &ForwardOptions<'_>) -> Result<Option<MeanAdjacency>> {
        if !self.config.use_label_graph {
            return Ok(None);
        }
        let lg = opts.label_graph.ok_or_else(|| {
            Error::Config("model uses a label graph but none was supplied".into())
        })?;
        if lg.num_labels() != self.num_labels() {
            return Err(Error::Validation(format!(
                "label graph covers {} labels, model has {}",
                lg.num_labels(),
                self.num_labels()
            )));
        }
        if lg.num_edge_types() > self.config.label_edge_types {
            return Err(Error::Validation(format!(
                "label graph has {} edge types, model has {}",
                lg.num_edge_types(),
                self.config.label_edge_types
            )));
        }
        Ok(Some(MeanAdjacency::from_label_graph(lg)))
    }

    fn dropout(&self, tape: &mut Tape, x: Var, opts: &mut ForwardOptions<'_>) -> Result<Var> {
        let p = self.config.dropout;
        let Some(rng) = opts.dropout_rng.as_deref_mut() else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let [r, c] = tape.value(x).shape();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen_bool(p) { 0.0 } else { keep })
            .collect();
        let mask = tape.constant(Tensor::new(r, c, mask)?);
        tape.mul(x, mask)
    }

    /// Initial states: `X^0` from node-type embeddings (plus projected node
    /// features) or, for vector-input models, from the input projection;
    /// `L^0` is the label embedding matrix.
    fn embed(&self, tape: &mut Tape, b: &Bound, graph: &AttributedGraph, opts: &mut ForwardOptions<'_>) -> Result<(Var, Var)> {
        let layout = self.params.layout();
        let x0 = match &layout.input {
            InputSlots::Graph {
                node_embedding,
                feature_proj,
                ..
            } => {
                let table = self.params.get(*node_embedding);
                if let Some(t) = graph.max_node_type().filter(|&t| t >= table.rows()) {
                    return Err(Error::Validation(format!(
                        "node type {t} outside the embedding table (0..{})",
                        table.rows()
                    )));
                }
                let emb = tape.gather_rows(b.vars[*node_embedding], graph.node_types())?;
                match (feature_proj, graph.node_features()) {
                    (Some(slot), Some(f)) => {
                        let f = tape.constant(f.clone());
                        let proj = tape.matmul(f, b.vars[*slot])?;
                        tape.add(emb, proj)?
                    }
                    (None, None) => emb,
                    (Some(_), None) => {
                        return Err(Error::Validation("model expects node features".into()))
                    }
                    (None, Some(_)) => {
                        return Err(Error::Validation("graph carries unexpected node features".into()))
                    }
                }
            }
            InputSlots::Vector { w, b: bias } => {
                let f = graph.node_features().ok_or_else(|| {
                    Error::Validation("vector-input model needs node features".into())
                })?;
                let f = tape.constant(f.clone());
                let h = tape.matmul(f, b.vars[*w])?;
                let h = tape.add_bias(h, b.vars[*bias])?;
                tape.relu(h)
            }
        };
        if let Some(t) = graph.max_edge_type().filter(|&e| e >= b.edges.len()) {
            return Err(Error::Validation(format!("edge type {t} outside 0..{}", b.edges.len())));
        }
        let x0 = self.dropout(tape, x0, opts)?;
        Ok((x0, b.vars[layout.label_embedding]))
    }

    /// One synchronous step: every message is computed from the previous
    /// states before either state matrix is replaced.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        tape: &mut Tape,
        b: &Bound,
        x: Var,
        l: Var,
        adjacency: &MeanAdjacency,
        label_adjacency: Option<&MeanAdjacency>,
        close_gates: bool,
    ) -> Result<(Var, Var, LayerTrace)> {
        let (n, c) = (tape.value(x).rows(), tape.value(l).rows());
        let pooled = layers::mean_pool(tape, x, adjacency, &b.edges)?;

        let (to_nodes, to_labels, trace) = match (&b.attn, self.config.attention) {
            (Attn::Pairwise(p), mode) => {
                let s = layers::pairwise_scores(tape, x, l, p)?;
                let (to_labels, a_label) = layers::label_to_input_message(tape, s, x)?;
                let (to_nodes, a_node) = if mode == AttentionMode::LabelToInputOnly {
                    uniform_message(tape, n, l)?
                } else {
                    layers::input_to_label_message(tape, s, l)?
                };
                let trace = LayerTrace {
                    label_to_input: tape.value(a_label).clone(),
                    input_to_label: tape.value(a_node).clone(),
                    factors: None,
                    score_evaluations: n * c,
                };
                (to_nodes, to_labels, trace)
            }
            (Attn::Hierarchical(h), _) => {
                let k = tape.value(h.factors).rows();
                let out = layers::hierarchical_messages(tape, x, l, h)?;
                let v = |var: Var| tape.value(var).clone();
                let factors = FactorTrace {
                    node_over_factors: v(out.node_over_factors),
                    labels_per_factor: v(out.labels_per_factor),
                    label_over_factors: v(out.label_over_factors),
                    nodes_per_factor: v(out.nodes_per_factor),
                };
                let trace = LayerTrace {
                    label_to_input: factors
                        .label_over_factors
                        .matmul_nt(&factors.nodes_per_factor)?,
                    input_to_label: factors
                        .node_over_factors
                        .matmul_nt(&factors.labels_per_factor)?,
                    factors: Some(factors),
                    score_evaluations: n * k + c * k,
                };
                (out.to_nodes, out.to_labels, trace)
            }
            (Attn::None, _) => {
                let (to_nodes, a_node) = uniform_message(tape, n, l)?;
                let (to_labels, a_label) = uniform_message(tape, c, x)?;
                let trace = LayerTrace {
                    label_to_input: tape.value(a_label).clone(),
                    input_to_label: tape.value(a_node).clone(),
                    factors: None,
                    score_evaluations: 0,
                };
                (to_nodes, to_labels, trace)
            }
        };

        let node_msg = tape.concat(pooled, to_nodes)?;
        let label_msg = match label_adjacency {
            Some(adj) => {
                let pooled_labels = layers::mean_pool(tape, l, adj, &b.label_edges)?;
                tape.concat(to_labels, pooled_labels)?
            }
            None => to_labels,
        };
        let x_next = layers::highway(tape, x, node_msg, &b.node_hw, close_gates)?;
        let l_next = layers::highway(tape, l, label_msg, &b.label_hw, close_gates)?;
        Ok((x_next, l_next, trace))
    }

    /// Runs embedding, `T` message-passing steps and the readout on a fresh tape.
    pub fn tape_forward(&self, graph: &AttributedGraph, mut opts: ForwardOptions<'_>) -> Result<TapedForward> {
        let label_adjacency = self.label_adjacency(&opts)?;
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let (mut x, mut l) = self.embed(&mut tape, &b, graph, &mut opts)?;
        let adjacency = MeanAdjacency::from_graph(graph, b.edges.len());
        let mut trace = AttentionTrace::default();
        for _ in 0..self.config.layers {
            let (xn, ln, layer) = self.step(
                &mut tape,
                &b,
                x,
                l,
                &adjacency,
                label_adjacency.as_ref(),
                opts.close_gates,
            )?;
            x = xn;
            l = ln;
            trace.layers.push(layer);
        }
        let outputs = layers::readout(&mut tape, l, &b.readout)?;
        Ok(TapedForward {
            tape,
            param_vars: b.vars,
            node_states: x,
            label_states: l,
            outputs,
            trace,
        })
    }

    pub fn forward(&self, graph: &AttributedGraph, opts: ForwardOptions<'_>) -> Result<ForwardOutput> {
        Ok(self.tape_forward(graph, opts)?.finish())
    }

    /// Vector input treated as a single input node without edges.
    ///
    /// Written directly for the one-node case: the neighbor message is the
    /// zero vector, every label's attention over input nodes is the point
    /// mass on the only node, so each label receives `x^{t−1}` itself.
    pub fn tape_forward_vector(&self, features: &[f64], mut opts: ForwardOptions<'_>) -> Result<TapedForward> {
        let InputSlots::Vector { w, b: bias } = self.params.layout().input else {
            return Err(Error::Config("forward_vector needs a vector-input model".into()));
        };
        if Some(features.len()) != self.meta.feature_dim {
            return Err(Error::Validation(format!(
                "expected {:?} features, got {}",
                self.meta.feature_dim,
                features.len()
            )));
        }
        let label_adjacency = self.label_adjacency(&opts)?;
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let c = self.num_labels();
        let f = tape.constant(Tensor::row_vector(features.to_vec()));
        let h = tape.matmul(f, b.vars[w])?;
        let h = tape.add_bias(h, b.vars[bias])?;
        let x0 = tape.relu(h);
        let mut x = self.dropout(&mut tape, x0, &mut opts)?;
        let mut l = b.vars[self.params.layout().label_embedding];
        let zero_pool = tape.constant(Tensor::zeros(1, self.config.node_dim));

        let mut trace = AttentionTrace::default();
        for _ in 0..self.config.layers {
            let (to_node, a_node, evaluations) = match (&b.attn, self.config.attention) {
                (Attn::Pairwise(p), AttentionMode::Pairwise) => {
                    let s = layers::pairwise_scores(&mut tape, x, l, p)?;
                    let (m, a) = layers::input_to_label_message(&mut tape, s, l)?;
                    (m, tape.value(a).clone(), c)
                }
                (Attn::Pairwise(_), _) | (Attn::None, _) => {
                    let m = tape.mean(l, crate::numerics::Axis::Column)?;
                    let evaluations = if matches!(b.attn, Attn::None) { 0 } else { c };
                    (m, Tensor::filled(1, c, 1.0 / c as f64), evaluations)
                }
                (Attn::Hierarchical(h), _) => {
                    let k = tape.value(h.factors).rows();
                    let out = layers::hierarchical_messages(&mut tape, x, l, h)?;
                    let a = tape
                        .value(out.node_over_factors)
                        .matmul_nt(tape.value(out.labels_per_factor))?;
                    (out.to_nodes, a, k + c * k)
                }
            };
            let node_msg = tape.concat(zero_pool, to_node)?;
            let broadcast = tape.gather_rows(x, &vec![0; c])?;
            let label_msg = match &label_adjacency {
                Some(adj) => {
                    let pooled = layers::mean_pool(&mut tape, l, adj, &b.label_edges)?;
                    tape.concat(broadcast, pooled)?
                }
                None => broadcast,
            };
            let x_next = layers::highway(&mut tape, x, node_msg, &b.node_hw, opts.close_gates)?;
            let l_next = layers::highway(&mut tape, l, label_msg, &b.label_hw, opts.close_gates)?;
            x = x_next;
            l = l_next;
            trace.layers.push(LayerTrace {
                label_to_input: Tensor::filled(c, 1, 1.0),
                input_to_label: a_node,
                factors: None,
                score_evaluations: evaluations,
            });
        }
        let outputs = layers::readout(&mut tape, l, &b.readout)?;
        Ok(TapedForward {
            tape,
            param_vars: b.vars,
            node_states: x,
            label_states: l,
            outputs,
            trace,
        })
    }

    pub fn forward_vector(&self, features: &[f64], opts: ForwardOptions<'_>) -> Result<ForwardOutput> {
        Ok(self.tape_forward_vector(features, opts)?.finish())
    }

    pub fn tape_forward_example(&self, example: &LabeledExample, opts: ForwardOptions<'_>) -> Result<TapedForward> {
        match (&example.input, self.config.input_kind) {
            (ExampleInput::Graph(g), _) => self.tape_forward(g, opts),
            (ExampleInput::Vector(v), InputKind::Vector) => self.tape_forward_vector(v, opts),
            (ExampleInput::Vector(_), InputKind::Graph) => {
                Err(Error::Config("graph-input model given a vector example".into()))
            }
        }
    }

    pub fn forward_example(&self, example: &LabeledExample, opts: ForwardOptions<'_>) -> Result<ForwardOutput> {
        Ok(self.tape_forward_example(example, opts)?.finish())
    }

    /// Per-label probabilities with dropout off.
    pub fn predict(&self, example: &LabeledExample, label_graph: Option<&LabelGraph>) -> Result<Vec<f64>> {
        let out = self.forward_example(
            example,
            ForwardOptions {
                label_graph,
                ..Default::default()
            },
        )?;
        Ok(out.outputs.into_data())
    }

    /// Summed binary cross-entropy of one example and its gradient for every
    /// parameter tensor.
    pub fn loss_and_gradients(&self, example: &LabeledExample, opts: ForwardOptions<'_>) -> Result<(f64, Vec<Tensor>)> {
        if example.labels.len() != self.num_labels() {
            return Err(Error::shape("loss", &[self.num_labels()], &[example.labels.len()]));
        }
        let mut fwd = self.tape_forward_example(example, opts)?;
        let loss = fwd.tape.bce(fwd.outputs, &example.target())?;
        let value = fwd.tape.value(loss).item()?;
        let mut grads = fwd.tape.backward(loss)?;
        let grads = fwd.param_vars.iter().map(|&v| grads.take(v)).collect();
        Ok((value, grads))
    }
}

/// Mean pooling expressed as uniform attention: each of `rows` receivers
/// gets the average of the rows of `states`.
fn uniform_message(tape: &mut Tape, rows: usize, states: Var) -> Result<(Var, Var)> {
    let senders = tape.value(states).rows();
    let weights = tape.constant(Tensor::filled(rows, senders, 1.0 / senders as f64));
    Ok((tape.matmul(weights, states)?, weights))
}
