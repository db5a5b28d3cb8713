//! Graph attentional multilabel learning.
//!
//! Labels are modelled as auxiliary nodes joined to every node of the input
//! graph. Input nodes and label nodes exchange messages for a fixed number of
//! steps (mean pooling along graph edges, attention between the two node
//! sets) and each label's final state is scored by a shared readout.

pub mod error;
pub mod explain;
pub mod graphdata;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
