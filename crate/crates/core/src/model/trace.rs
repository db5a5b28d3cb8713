use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

/// Factor-level attention of one hierarchical step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorTrace {
    /// `|V| × K`, rows sum to 1 (factors per input node).
    pub node_over_factors: Tensor,
    /// `C × K`, columns sum to 1 (labels per factor).
    pub labels_per_factor: Tensor,
    /// `C × K`, rows sum to 1 (factors per label).
    pub label_over_factors: Tensor,
    /// `|V| × K`, columns sum to 1 (input nodes per factor).
    pub nodes_per_factor: Tensor,
}

/// Attention recorded at one message-passing step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    /// `C × |V|`; row `c` is label `c`'s distribution over input nodes. In
    /// hierarchical mode this is the composite `α · βᵀ`.
    pub label_to_input: Tensor,
    /// `|V| × C`; row `i` is input node `i`'s distribution over labels. In
    /// hierarchical mode this is the composite `a · bᵀ`.
    pub input_to_label: Tensor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<FactorTrace>,
    /// Attention scores evaluated at this step.
    pub score_evaluations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub layers: Vec<LayerTrace>,
}

impl AttentionTrace {
    pub fn total_score_evaluations(&self) -> usize {
        self.layers.iter().map(|l| l.score_evaluations).sum()
    }
}
