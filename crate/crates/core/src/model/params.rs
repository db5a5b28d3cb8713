//! Learnable arrays and their fixed, documented ordering.
//!
//! Parameters are kept as one ordered list of named tensors. The order is a
//! pure function of the model configuration and dataset dimensions:
//!
//! 1. `label_embedding` (C × d_l)
//! 2. graph input: `node_embedding` (node types × d_x), then
//!    `node_feature_proj` (feature width × d_x) when nodes carry features;
//!    vector input: `input_proj.w` (d × d_x), `input_proj.b` (1 × d_x)
//! 3. `edge.{e}` (d_x × d_x), one per input edge type (graph input only)
//! 4. `label_edge.{e}` (d_l × d_l), one per label edge type, when the label
//!    graph is enabled
//! 5. attention: pairwise and label-to-input-only use `attn.u` (d_z × 1),
//!    `attn.w_node` (d_x × d_z), `attn.w_label` (d_l × d_z), `attn.b`
//!    (1 × d_z); hierarchical uses `attn.u1`, `attn.u2` (d_z × 1),
//!    `attn.w1` (d_x × d_z), `attn.w2` (d_l × d_z), `attn.factors` (K × d_z)
//! 6. input highway `node_hw.{gate_w, gate_u, gate_b, cand_w, cand_u, cand_b}`
//! 7. label highway `label_hw.{…}` with the same suffixes
//! 8. readout `readout.{w1, b1, w2, b2}`
//!
//! All weights are shared across message-passing steps.

use rand::Rng;

use super::config::{AttentionMode, ModelConfig};
use crate::error::{Error, Result};
use crate::graphdata::{DatasetMeta, InputKind};
use crate::numerics::Tensor;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum InitKind {
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HighwaySlots {
    pub gate_w: usize,
    pub gate_u: usize,
    pub gate_b: usize,
    pub cand_w: usize,
    pub cand_u: usize,
    pub cand_b: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttentionSlots {
    Pairwise {
        u: usize,
        w_node: usize,
        w_label: usize,
        b: usize,
    },
    Hierarchical {
        u1: usize,
        u2: usize,
        w1: usize,
        w2: usize,
        factors: usize,
    },
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutSlots {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InputSlots {
    Graph {
        node_embedding: usize,
        feature_proj: Option<usize>,
        edges: Vec<usize>,
    },
    Vector {
        w: usize,
        b: usize,
    },
}

/// Names, shapes and roles of every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub names: Vec<String>,
    pub shapes: Vec<[usize; 2]>,
    kinds: Vec<InitKind>,
    pub label_embedding: usize,
    pub input: InputSlots,
    pub label_edges: Vec<usize>,
    pub attention: AttentionSlots,
    pub node_highway: HighwaySlots,
    pub label_highway: HighwaySlots,
    pub readout: ReadoutSlots,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<[usize; 2]>,
    kinds: Vec<InitKind>,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, kind: InitKind) -> usize {
        self.names.push(name.into());
        self.shapes.push([rows, cols]);
        self.kinds.push(kind);
        self.names.len() - 1
    }

    fn highway(&mut self, prefix: &str, state: usize, message: usize) -> HighwaySlots {
        use InitKind::*;
        HighwaySlots {
            gate_w: self.add(format!("{prefix}.gate_w"), state, state, Weight),
            gate_u: self.add(format!("{prefix}.gate_u"), message, state, Weight),
            gate_b: self.add(format!("{prefix}.gate_b"), 1, state, Bias),
            cand_w: self.add(format!("{prefix}.cand_w"), state, state, Weight),
            cand_u: self.add(format!("{prefix}.cand_u"), message, state, Weight),
            cand_b: self.add(format!("{prefix}.cand_b"), 1, state, Bias),
        }
    }
}

impl ParamLayout {
    pub fn new(config: &ModelConfig, meta: &DatasetMeta) -> Result<Self> {
        use InitKind::*;
        config.validate()?;
        if config.input_kind != meta.input_kind {
            return Err(Error::Config(format!(
                "model expects {:?} input, dataset provides {:?}",
                config.input_kind, meta.input_kind
            )));
        }
        if meta.num_labels == 0 {
            return Err(Error::Config("dataset has no labels".into()));
        }
        let (dx, dl, dz) = (config.node_dim, config.label_dim, config.attention_dim);
        let mut b = Builder {
            names: Vec::new(),
            shapes: Vec::new(),
            kinds: Vec::new(),
        };
        let label_embedding = b.add("label_embedding", meta.num_labels, dl, Weight);
        let input = match meta.input_kind {
            InputKind::Graph => {
                let node_embedding = b.add("node_embedding", meta.num_node_types.max(1), dx, Weight);
                let feature_proj = meta
                    .feature_dim
                    .map(|d| b.add("node_feature_proj", d, dx, Weight));
                let edges = (0..meta.num_edge_types)
                    .map(|e| b.add(format!("edge.{e}"), dx, dx, Weight))
                    .collect();
                InputSlots::Graph {
                    node_embedding,
                    feature_proj,
                    edges,
                }
            }
            InputKind::Vector => {
                let d = meta
                    .feature_dim
                    .ok_or_else(|| Error::Config("vector input needs a feature width".into()))?;
                InputSlots::Vector {
                    w: b.add("input_proj.w", d, dx, Weight),
                    b: b.add("input_proj.b", 1, dx, Bias),
                }
            }
        };
        let label_edges = if config.use_label_graph {
            (0..config.label_edge_types)
                .map(|e| b.add(format!("label_edge.{e}"), dl, dl, Weight))
                .collect()
        } else {
            Vec::new()
        };
        let attention = match config.attention {
            AttentionMode::Pairwise | AttentionMode::LabelToInputOnly => AttentionSlots::Pairwise {
                u: b.add("attn.u", dz, 1, Weight),
                w_node: b.add("attn.w_node", dx, dz, Weight),
                w_label: b.add("attn.w_label", dl, dz, Weight),
                b: b.add("attn.b", 1, dz, Bias),
            },
            AttentionMode::Hierarchical { factors } => AttentionSlots::Hierarchical {
                u1: b.add("attn.u1", dz, 1, Weight),
                u2: b.add("attn.u2", dz, 1, Weight),
                w1: b.add("attn.w1", dx, dz, Weight),
                w2: b.add("attn.w2", dl, dz, Weight),
                factors: b.add("attn.factors", factors, dz, Weight),
            },
            AttentionMode::None => AttentionSlots::None,
        };
        let node_highway = b.highway("node_hw", dx, config.input_message_dim());
        let label_highway = b.highway("label_hw", dl, config.label_message_dim());
        let h = config.readout_hidden;
        let readout = ReadoutSlots {
            w1: b.add("readout.w1", dl, h, Weight),
            b1: b.add("readout.b1", 1, h, Bias),
            w2: b.add("readout.w2", h, 1, Weight),
            b2: b.add("readout.b2", 1, 1, Bias),
        };
        Ok(Self {
            names: b.names,
            shapes: b.shapes,
            kinds: b.kinds,
            label_embedding,
            input,
            label_edges,
            attention,
            node_highway,
            label_highway,
            readout,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_bias(&self, slot: usize) -> bool {
        self.kinds[slot] == InitKind::Bias
    }
}

/// The model's learnable tensors, ordered by [`ParamLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    layout: ParamLayout,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn from_tensors(layout: ParamLayout, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != layout.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter arrays, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.shape() != layout.shapes[i] {
                return Err(Error::Validation(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    layout.names[i],
                    t.shape(),
                    layout.shapes[i]
                )));
            }
            if !t.is_finite() {
                return Err(Error::Validation(format!(
                    "parameter {} has non-finite entries",
                    layout.names[i]
                )));
            }
        }
        Ok(Self { layout, tensors })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.layout.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.layout.index_of(name).map(|i| &mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// All entries concatenated in layout order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::shape("set_flat", &[self.num_scalars()], &[flat.len()]));
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases, deterministic under `seed`.
pub fn init_params(config: &ModelConfig, meta: &DatasetMeta, seed: u64) -> Result<ModelParams> {
    let layout = ParamLayout::new(config, meta)?;
    let mut rng = stream_rng(seed, Stream::Init);
    let tensors = layout
        .shapes
        .iter()
        .zip(&layout.kinds)
        .map(|(&[r, c], kind)| match kind {
            InitKind::Bias => Tensor::zeros(r, c),
            InitKind::Weight => {
                let bound = (6.0 / (r + c) as f64).sqrt();
                let data = (0..r * c).map(|_| rng.gen_range(-bound..=bound)).collect();
                Tensor::new(r, c, data).expect("shape matches data")
            }
        })
        .collect();
    ModelParams::from_tensors(layout, tensors)
}
