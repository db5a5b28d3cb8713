use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::InputKind;

/// How input nodes and label nodes exchange messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// One `|V| × C` score matrix, normalized per input node for the
    /// input-side message and per label for the label-side message.
    Pairwise,
    /// Two-stage attention through `factors` intermediate factor vectors.
    Hierarchical { factors: usize },
    /// Labels attend over input nodes; input nodes mean-pool the labels.
    LabelToInputOnly,
    /// Mean pooling in both directions.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of input-node states.
    pub node_dim: usize,
    /// Width of label-node states.
    pub label_dim: usize,
    /// Hidden width of the attention scorer.
    pub attention_dim: usize,
    /// Number of message-passing steps.
    pub layers: usize,
    pub attention: AttentionMode,
    /// Inverted dropout on initial input-node states while training.
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    pub readout_hidden: usize,
    #[serde(default)]
    pub use_label_graph: bool,
    #[serde(default = "default_label_edge_types")]
    pub label_edge_types: usize,
    #[serde(default = "default_input_kind")]
    pub input_kind: InputKind,
}

fn default_dropout() -> f64 {
    0.3
}

fn default_label_edge_types() -> usize {
    1
}

fn default_input_kind() -> InputKind {
    InputKind::Graph
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            node_dim: 16,
            label_dim: 16,
            attention_dim: 16,
            layers: 4,
            attention: AttentionMode::Pairwise,
            dropout: default_dropout(),
            readout_hidden: 16,
            use_label_graph: false,
            label_edge_types: 1,
            input_kind: InputKind::Graph,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if let AttentionMode::Hierarchical { factors: 0 } = self.attention {
            return Err(Error::Config("hierarchical attention needs at least 1 factor".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        for (name, v) in [
            ("node_dim", self.node_dim),
            ("label_dim", self.label_dim),
            ("attention_dim", self.attention_dim),
            ("readout_hidden", self.readout_hidden),
            ("label_edge_types", self.label_edge_types),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Width of the message fed to the input-node highway: `[μ_i, m_i]`.
    pub fn input_message_dim(&self) -> usize {
        self.node_dim + self.label_dim
    }

    /// Width of the message fed to the label-node highway: `m_c`, or
    /// `[m_c, μ_c]` when the label graph is active.
    pub fn label_message_dim(&self) -> usize {
        if self.use_label_graph {
            self.node_dim + self.label_dim
        } else {
            self.node_dim
        }
    }
}
