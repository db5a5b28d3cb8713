//! The joint label/input message-passing network.

mod config;
mod forward;
pub mod layers;
mod params;
mod trace;

pub use config::{AttentionMode, ModelConfig};
pub use forward::{ForwardOptions, ForwardOutput, Model, TapedForward};
pub use params::{init_params, AttentionSlots, HighwaySlots, InputSlots, ModelParams, ParamLayout, ReadoutSlots};
pub use trace::{AttentionTrace, FactorTrace, LayerTrace};
