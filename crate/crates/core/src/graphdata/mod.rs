//! Input graphs, datasets and their file formats, label dependency graphs,
//! splitting, and the planted-motif generator.

mod dataset;
mod graph;
pub mod isomorphism;
mod label_graph;
mod split;
mod synthetic;

pub use dataset::{
    load_dataset, load_graph_dataset, load_vector_dataset, read_graph_dataset, read_vector_dataset,
    save_graph_dataset, save_vector_dataset, write_graph_dataset, write_vector_dataset, DatasetMeta,
    DatasetStats, ExampleInput, InputKind, LabeledExample, MultilabelDataset,
};
pub use graph::AttributedGraph;
pub use label_graph::{load_label_graph, parse_label_graph, LabelGraph};
pub use split::{split, split_indices, split_sizes};
pub use synthetic::{
    generate_synthetic, CheckedMotif, Motif, MotifSpec, SyntheticDataset, MAX_SYNTHETIC_NODES,
};
