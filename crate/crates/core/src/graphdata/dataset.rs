use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::AttributedGraph;
use super::label_graph::LabelGraph;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Graph,
    Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExampleInput {
    Graph(AttributedGraph),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub input: ExampleInput,
    pub labels: Vec<bool>,
}

impl LabeledExample {
    pub fn graph(&self) -> Option<&AttributedGraph> {
        match &self.input {
            ExampleInput::Graph(g) => Some(g),
            ExampleInput::Vector(_) => None,
        }
    }

    /// Labels as a `1 × C` tensor of zeros and ones.
    pub fn target(&self) -> Tensor {
        Tensor::row_vector(self.labels.iter().map(|&y| f64::from(u8::from(y))).collect())
    }

    /// Indices `c` with `y_c = 1`.
    pub fn positive_labels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(c, &y)| y.then_some(c))
            .collect()
    }
}

/// Dimensions a model needs from its training data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_labels: usize,
    pub num_node_types: usize,
    pub num_edge_types: usize,
    pub input_kind: InputKind,
    /// Width of node features (graph input) or of the input vector.
    pub feature_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultilabelDataset {
    pub examples: Vec<LabeledExample>,
    pub num_labels: usize,
    pub num_node_types: usize,
    pub num_edge_types: usize,
    pub input_kind: InputKind,
    pub feature_dim: Option<usize>,
    pub label_graph: Option<LabelGraph>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DatasetStats {
    pub examples: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
    pub avg_labels_per_example: f64,
    pub positive_rate: Vec<f64>,
}

impl MultilabelDataset {
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            num_labels: self.num_labels,
            num_node_types: self.num_node_types,
            num_edge_types: self.num_edge_types,
            input_kind: self.input_kind,
            feature_dim: self.feature_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Same metadata, different examples.
    pub fn with_examples(&self, examples: Vec<LabeledExample>) -> Self {
        Self {
            examples,
            num_labels: self.num_labels,
            num_node_types: self.num_node_types,
            num_edge_types: self.num_edge_types,
            input_kind: self.input_kind,
            feature_dim: self.feature_dim,
            label_graph: self.label_graph.clone(),
        }
    }

    /// Checks the shared-kind, label-width and type-range invariants.
    pub fn validate(&self) -> Result<()> {
        for (n, ex) in self.examples.iter().enumerate() {
            if ex.labels.len() != self.num_labels {
                return Err(Error::Validation(format!(
                    "example {n} has {} labels, dataset has C = {}",
                    ex.labels.len(),
                    self.num_labels
                )));
            }
            match &ex.input {
                ExampleInput::Graph(g) => {
                    if self.input_kind != InputKind::Graph {
                        return Err(Error::Validation(format!("example {n} is a graph in a vector dataset")));
                    }
                    if let Some(t) = g.max_node_type().filter(|&t| t >= self.num_node_types) {
                        return Err(Error::Validation(format!(
                            "example {n}: node type {t} out of range 0..{}",
                            self.num_node_types
                        )));
                    }
                    if let Some(e) = g.max_edge_type().filter(|&e| e >= self.num_edge_types) {
                        return Err(Error::Validation(format!(
                            "example {n}: edge type {e} out of range 0..{}",
                            self.num_edge_types
                        )));
                    }
                    let width = g.node_features().map(Tensor::cols);
                    if width != self.feature_dim {
                        return Err(Error::Validation(format!(
                            "example {n}: node feature width {width:?} differs from dataset width {:?}",
                            self.feature_dim
                        )));
                    }
                }
                ExampleInput::Vector(v) => {
                    if self.input_kind != InputKind::Vector {
                        return Err(Error::Validation(format!("example {n} is a vector in a graph dataset")));
                    }
                    if Some(v.len()) != self.feature_dim {
                        return Err(Error::Validation(format!(
                            "example {n}: feature width {} differs from d = {:?}",
                            v.len(),
                            self.feature_dim
                        )));
                    }
                }
            }
        }
        if let Some(lg) = &self.label_graph {
            if lg.num_labels() != self.num_labels {
                return Err(Error::Validation(format!(
                    "label graph covers {} labels, dataset has {}",
                    lg.num_labels(),
                    self.num_labels
                )));
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.examples.len().max(1) as f64;
        let (mut nodes, mut edges, mut positives) = (0usize, 0usize, 0usize);
        let mut per_label = vec![0usize; self.num_labels];
        for ex in &self.examples {
            if let Some(g) = ex.graph() {
                nodes += g.num_nodes();
                edges += g.edges().len();
            }
            for c in ex.positive_labels() {
                per_label[c] += 1;
                positives += 1;
            }
        }
        DatasetStats {
            examples: self.examples.len(),
            avg_nodes: nodes as f64 / n,
            avg_edges: edges as f64 / n,
            avg_labels_per_example: positives as f64 / n,
            positive_rate: per_label.iter().map(|&p| p as f64 / n).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GraphHeader {
    #[serde(rename = "C")]
    num_labels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_types: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_types: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    nodes: Vec<usize>,
    edges: Vec<[usize; 3]>,
    labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorHeader {
    #[serde(rename = "C")]
    num_labels: usize,
    d: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorRecord {
    features: Vec<f64>,
    labels: Vec<usize>,
}

fn labels_from_indices(indices: &[usize], c: usize, line: usize) -> Result<Vec<bool>> {
    let mut labels = vec![false; c];
    for &i in indices {
        if i >= c {
            return Err(Error::Validation(format!(
                "line {line}: label index {i} not below C = {c}"
            )));
        }
        if std::mem::replace(&mut labels[i], true) {
            return Err(Error::Validation(format!("line {line}: duplicate label {i}")));
        }
    }
    Ok(labels)
}

/// Non-blank lines with their 1-based line numbers.
fn records(reader: impl BufRead) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    if out.is_empty() {
        return Err(Error::Validation("no records".into()));
    }
    Ok(out)
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        msg: e.to_string(),
    })
}

pub fn load_graph_dataset(path: impl AsRef<Path>) -> Result<MultilabelDataset> {
    read_graph_dataset(BufReader::new(File::open(path)?))
}

/// Parses the graph JSON-lines format: a header line followed by one graph per line.
pub fn read_graph_dataset(reader: impl BufRead) -> Result<MultilabelDataset> {
    let lines = records(reader)?;
    let (hline, htext) = &lines[0];
    let header: GraphHeader = parse_line(*hline, htext)?;
    let c = header.num_labels;

    let mut examples = Vec::with_capacity(lines.len() - 1);
    let (mut max_node, mut max_edge) = (None, None);
    let mut feature_dim: Option<Option<usize>> = None;
    for (line, text) in &lines[1..] {
        let rec: GraphRecord = parse_line(*line, text)?;
        let features = match rec.features {
            Some(rows) => Some(Tensor::from_rows(&rows).map_err(|_| {
                Error::Validation(format!("line {line}: ragged node feature rows"))
            })?),
            None => None,
        };
        let width = features.as_ref().map(Tensor::cols);
        match feature_dim {
            None => feature_dim = Some(width),
            Some(w) if w != width => {
                return Err(Error::Validation(format!(
                    "line {line}: node feature width {width:?} differs from earlier records ({w:?})"
                )))
            }
            _ => {}
        }
        let edges = rec.edges.iter().map(|e| (e[0], e[1], e[2])).collect();
        let graph = AttributedGraph::build(rec.nodes, edges, features, false)
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        max_node = max_node.max(graph.max_node_type());
        max_edge = max_edge.max(graph.max_edge_type());
        examples.push(LabeledExample {
            input: ExampleInput::Graph(graph),
            labels: labels_from_indices(&rec.labels, c, *line)?,
        });
    }

    let resolve = |declared: Option<usize>, seen: Option<usize>, what: &str| -> Result<usize> {
        let needed = seen.map_or(0, |m| m + 1);
        match declared {
            Some(d) if d < needed => Err(Error::Validation(format!(
                "{what} type id {} out of range 0..{d}",
                needed - 1
            ))),
            Some(d) => Ok(d),
            None => Ok(needed.max(1)),
        }
    };
    let dataset = MultilabelDataset {
        examples,
        num_labels: c,
        num_node_types: resolve(header.node_types, max_node, "node")?,
        num_edge_types: resolve(header.edge_types, max_edge, "edge")?,
        input_kind: InputKind::Graph,
        feature_dim: feature_dim.flatten(),
        label_graph: None,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn save_graph_dataset(dataset: &MultilabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graph_dataset(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_graph_dataset(dataset: &MultilabelDataset, mut w: impl Write) -> Result<()> {
    if dataset.input_kind != InputKind::Graph {
        return Err(Error::Validation("not a graph dataset".into()));
    }
    let header = GraphHeader {
        num_labels: dataset.num_labels,
        node_types: Some(dataset.num_node_types),
        edge_types: Some(dataset.num_edge_types),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for ex in &dataset.examples {
        let g = ex
            .graph()
            .ok_or_else(|| Error::Validation("vector example in graph dataset".into()))?;
        let rec = GraphRecord {
            nodes: g.node_types().to_vec(),
            edges: g.edges().iter().map(|&(i, j, e)| [i, j, e]).collect(),
            labels: ex.positive_labels(),
            features: g.node_features().map(Tensor::to_rows),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn load_vector_dataset(path: impl AsRef<Path>) -> Result<MultilabelDataset> {
    read_vector_dataset(BufReader::new(File::open(path)?))
}

pub fn read_vector_dataset(reader: impl BufRead) -> Result<MultilabelDataset> {
    let lines = records(reader)?;
    let (hline, htext) = &lines[0];
    let header: VectorHeader = parse_line(*hline, htext)?;
    let mut examples = Vec::with_capacity(lines.len() - 1);
    for (line, text) in &lines[1..] {
        let rec: VectorRecord = parse_line(*line, text)?;
        if rec.features.len() != header.d {
            return Err(Error::Validation(format!(
                "line {line}: {} features, header declares d = {}",
                rec.features.len(),
                header.d
            )));
        }
        if rec.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("line {line}: non-finite feature")));
        }
        examples.push(LabeledExample {
            input: ExampleInput::Vector(rec.features),
            labels: labels_from_indices(&rec.labels, header.num_labels, *line)?,
        });
    }
    Ok(MultilabelDataset {
        examples,
        num_labels: header.num_labels,
        num_node_types: 1,
        num_edge_types: 1,
        input_kind: InputKind::Vector,
        feature_dim: Some(header.d),
        label_graph: None,
    })
}

pub fn save_vector_dataset(dataset: &MultilabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vector_dataset(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_vector_dataset(dataset: &MultilabelDataset, mut w: impl Write) -> Result<()> {
    let d = match (dataset.input_kind, dataset.feature_dim) {
        (InputKind::Vector, Some(d)) => d,
        _ => return Err(Error::Validation("not a vector dataset".into())),
    };
    serde_json::to_writer(
        &mut w,
        &VectorHeader {
            num_labels: dataset.num_labels,
            d,
        },
    )?;
    writeln!(w)?;
    for ex in &dataset.examples {
        let ExampleInput::Vector(features) = &ex.input else {
            return Err(Error::Validation("graph example in vector dataset".into()));
        };
        serde_json::to_writer(
            &mut w,
            &VectorRecord {
                features: features.clone(),
                labels: ex.positive_labels(),
            },
        )?;
        writeln!(w)?;
    }
    Ok(())
}

/// Loads either format, dispatching on the header keys.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<MultilabelDataset> {
    let path = path.as_ref();
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    let header: serde_json::Value = serde_json::from_str(&first).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.get("d").is_some() {
        load_vector_dataset(path)
    } else {
        load_graph_dataset(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_graph() {
        let text = "{\"C\":2,\"node_types\":1,\"edge_types\":1}\n{\"nodes\":[0,0,0],\"edges\":[[0,1,0],[1,2,0],[2,0,0]],\"labels\":[0]}\n";
        let ds = read_graph_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.num_labels, 2);
        let g = ds.examples[0].graph().unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(ds.examples[0].labels, vec![true, false]);
        assert_eq!(g.neighbors(0).len(), 2);
    }

    #[test]
    fn empty_file_has_no_records() {
        let err = read_graph_dataset("".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no records"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"C\":1}\n{\"nodes\":[0],\"edges\":[],\"labels\":[]}\n{\"nodes\":[0\n";
        match read_graph_dataset(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_out_of_range_and_bad_label() {
        let text = "{\"C\":1,\"node_types\":2,\"edge_types\":1}\n{\"nodes\":[2],\"edges\":[],\"labels\":[]}\n";
        assert!(matches!(read_graph_dataset(text.as_bytes()), Err(Error::Validation(_))));
        let text = "{\"C\":1}\n{\"nodes\":[0],\"edges\":[],\"labels\":[1]}\n";
        assert!(matches!(read_graph_dataset(text.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn vector_records() {
        let ds = read_vector_dataset("{\"C\":1,\"d\":2}\n{\"features\":[0,0],\"labels\":[0]}\n".as_bytes()).unwrap();
        assert_eq!(ds.feature_dim, Some(2));
        assert_eq!(ds.num_labels, 1);
        let ragged = "{\"C\":1,\"d\":2}\n{\"features\":[0],\"labels\":[]}\n";
        assert!(matches!(read_vector_dataset(ragged.as_bytes()), Err(Error::Validation(_))));
    }
}
