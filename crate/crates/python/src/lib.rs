//! Python bindings: datasets, models, training, metrics and attention
//! traces. Configs cross the boundary as JSON strings; keys left out take
//! their defaults.

use gaml::explain::{top_k_nodes, TraceExport};
use gaml::graphdata::{self, AttributedGraph, LabelGraph, MotifSpec, MultilabelDataset};
use gaml::metrics::{evaluate as evaluate_preds, PredictionSet};
use gaml::model::{ForwardOptions, ForwardOutput, Model as CoreModel, ModelConfig};
use gaml::training::{self, load_checkpoint, save_checkpoint, TrainConfig, TrainData};
use gaml::Error;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn merge<T: Serialize + DeserializeOwned + Default>(section: &str, json: Option<&str>) -> PyResult<T> {
    let mut base = serde_json::to_value(T::default()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(text) = json {
        let partial: Value = serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("{section}: {e}")))?;
        let Value::Object(entries) = partial else {
            return Err(PyValueError::new_err(format!("{section}: expected an object")));
        };
        let Value::Object(target) = &mut base else { unreachable!() };
        target.extend(entries);
    }
    serde_json::from_value(base).map_err(|e| PyValueError::new_err(format!("{section}: {e}")))
}

fn json_string<T: Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A typed graph: node types plus `(source, target, edge_type)` triples.
#[pyclass(name = "Graph", module = "gaml_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: AttributedGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(node_types: Vec<usize>, edges: Vec<(usize, usize, usize)>) -> PyResult<Self> {
        AttributedGraph::new(node_types, edges).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn node_types(&self) -> Vec<usize> {
        self.inner.node_types().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Graph(num_nodes={}, num_edges={})", self.inner.num_nodes(), self.inner.edges().len())
    }
}

#[pyclass(name = "LabelGraph", module = "gaml_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLabelGraph {
    inner: LabelGraph,
}

#[pymethods]
impl PyLabelGraph {
    #[new]
    fn new(num_labels: usize, num_edge_types: usize, edges: Vec<(usize, usize, usize)>) -> PyResult<Self> {
        LabelGraph::new(num_labels, num_edge_types, edges).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Reads `a b score` lines, keeping scores strictly above `threshold`.
    #[staticmethod]
    #[pyo3(signature = (path, num_labels, threshold = 0.5))]
    fn load(path: &str, num_labels: usize, threshold: f64) -> PyResult<Self> {
        graphdata::load_label_graph(path, threshold, num_labels)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize, usize)> {
        self.inner.edges().to_vec()
    }
}

#[pyclass(name = "Dataset", module = "gaml_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: MultilabelDataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a graph or vector JSON-lines dataset.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        graphdata::load_dataset(path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        match self.inner.input_kind {
            graphdata::InputKind::Graph => graphdata::save_graph_dataset(&self.inner, path),
            graphdata::InputKind::Vector => graphdata::save_vector_dataset(&self.inner, path),
        }
        .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_labels(&self) -> usize {
        self.inner.num_labels
    }

    /// Graph of example `i`; `None` for vector inputs.
    fn graph(&self, i: usize) -> PyResult<Option<PyGraph>> {
        let ex = self.example(i)?;
        Ok(ex.graph().map(|g| PyGraph { inner: g.clone() }))
    }

    fn labels(&self, i: usize) -> PyResult<Vec<bool>> {
        Ok(self.example(i)?.labels.clone())
    }

    /// Splits into train/valid/test with a seeded shuffle.
    #[pyo3(signature = (seed, ratios = (0.6, 0.2, 0.2)))]
    fn split(&self, seed: u64, ratios: (f64, f64, f64)) -> PyResult<(Self, Self, Self)> {
        let (a, b, c) = graphdata::split(&self.inner, [ratios.0, ratios.1, ratios.2], seed).map_err(to_py)?;
        Ok((Self { inner: a }, Self { inner: b }, Self { inner: c }))
    }

    fn stats_json(&self) -> PyResult<String> {
        json_string(&self.inner.stats())
    }
}

impl PyDataset {
    fn example(&self, i: usize) -> PyResult<&graphdata::LabeledExample> {
        self.inner
            .examples
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("example {i} out of range ({} examples)", self.inner.len())))
    }
}

#[pyclass(name = "Model", module = "gaml_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: CoreModel,
}

#[pymethods]
impl PyModel {
    /// A freshly initialized model sized for `dataset`.
    #[new]
    #[pyo3(signature = (dataset, seed, config = None, label_graph = None))]
    fn new(dataset: &PyDataset, seed: u64, config: Option<&str>, label_graph: Option<&PyLabelGraph>) -> PyResult<Self> {
        let mut cfg: ModelConfig = merge("model", config)?;
        cfg.input_kind = dataset.inner.input_kind;
        if let Some(g) = label_graph {
            cfg.use_label_graph = true;
            cfg.label_edge_types = g.inner.num_edge_types();
        }
        CoreModel::new(cfg, dataset.inner.meta(), seed)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_checkpoint(path).map(|c| Self { inner: c.model }).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.inner, None, path).map_err(to_py)
    }

    #[getter]
    fn num_labels(&self) -> usize {
        self.inner.num_labels()
    }

    fn config_json(&self) -> PyResult<String> {
        json_string(&self.inner.config)
    }

    /// Per-label probabilities for every example.
    #[pyo3(signature = (dataset, label_graph = None, threads = 1))]
    fn predict(&self, py: Python<'_>, dataset: &PyDataset, label_graph: Option<&PyLabelGraph>, threads: usize) -> PyResult<Vec<Vec<f64>>> {
        let lg = label_graph.map(|g| &g.inner);
        py.detach(|| training::predict_dataset(&self.inner, &dataset.inner, lg, threads))
            .map_err(to_py)
    }

    /// Label-to-input attention of `graph`: one `C × |V|` matrix per layer.
    #[pyo3(signature = (graph, label_graph = None))]
    fn attention(&self, graph: &PyGraph, label_graph: Option<&PyLabelGraph>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let out = self.run(graph, label_graph)?;
        Ok(out.trace.layers.iter().map(|l| l.label_to_input.to_rows()).collect())
    }

    /// The `k` most attended nodes for `label` at layer `layer` (1-based), as
    /// `(node, probability)` pairs.
    #[pyo3(signature = (graph, label, layer, k, label_graph = None))]
    fn top_k(&self, graph: &PyGraph, label: usize, layer: usize, k: usize, label_graph: Option<&PyLabelGraph>) -> PyResult<Vec<(usize, f64)>> {
        let out = self.run(graph, label_graph)?;
        top_k_nodes(&out.trace, label, layer, k).map_err(to_py)
    }

    /// Full attention trace of `graph` in the exported JSON form.
    #[pyo3(signature = (graph, graph_id = "0", label_graph = None))]
    fn trace_json(&self, graph: &PyGraph, graph_id: &str, label_graph: Option<&PyLabelGraph>) -> PyResult<String> {
        let out = self.run(graph, label_graph)?;
        let export = TraceExport::new(graph_id, &out.trace, &graph.inner).map_err(to_py)?;
        json_string(&export)
    }
}

impl PyModel {
    fn run(&self, graph: &PyGraph, label_graph: Option<&PyLabelGraph>) -> PyResult<ForwardOutput> {
        let opts = ForwardOptions {
            label_graph: label_graph.map(|g| &g.inner),
            ..ForwardOptions::default()
        };
        self.inner.forward(&graph.inner, opts).map_err(to_py)
    }
}

#[pyclass(name = "TrainResult", module = "gaml_py", frozen)]
struct PyTrainResult {
    #[pyo3(get)]
    best: Py<PyModel>,
    #[pyo3(get)]
    last: Py<PyModel>,
    #[pyo3(get)]
    best_epoch: usize,
    #[pyo3(get)]
    best_valid_loss: f64,
    history: String,
}

#[pymethods]
impl PyTrainResult {
    /// One JSON object per epoch, as written to `history.jsonl`.
    fn history_json(&self) -> String {
        self.history.clone()
    }
}

/// Trains `model` to completion. Returns the best and last models.
#[pyfunction]
#[pyo3(signature = (model, train, valid, config = None, label_graph = None))]
fn train(
    py: Python<'_>,
    model: &PyModel,
    train: &PyDataset,
    valid: &PyDataset,
    config: Option<&str>,
    label_graph: Option<&PyLabelGraph>,
) -> PyResult<PyTrainResult> {
    let cfg: TrainConfig = merge("train", config)?;
    let data = TrainData {
        train: &train.inner,
        valid: &valid.inner,
        label_graph: label_graph.map(|g| &g.inner),
    };
    let outcome = py
        .detach(|| training::train(model.inner.clone(), data, &cfg, None))
        .map_err(to_py)?;
    let history = outcome
        .history
        .iter()
        .map(json_string)
        .collect::<PyResult<Vec<_>>>()?
        .join("\n");
    Ok(PyTrainResult {
        best: Py::new(py, PyModel { inner: outcome.best })?,
        last: Py::new(py, PyModel { inner: outcome.last })?,
        best_epoch: outcome.best_epoch,
        best_valid_loss: outcome.best_valid_loss,
        history,
    })
}

/// Planted-motif dataset from a motif spec given as JSON.
#[pyfunction]
fn generate_synthetic(spec: &str, n: usize, seed: u64) -> PyResult<PyDataset> {
    let spec: MotifSpec = serde_json::from_str(spec).map_err(|e| PyValueError::new_err(format!("spec: {e}")))?;
    graphdata::generate_synthetic(&spec, n, seed)
        .map(|s| PyDataset { inner: s.dataset })
        .map_err(to_py)
}

/// Micro/macro F1 and AUC. AUC values are `None` when undefined.
#[pyfunction]
#[pyo3(signature = (scores, truths, threshold = 0.5))]
fn evaluate(scores: Vec<Vec<f64>>, truths: Vec<Vec<bool>>, threshold: f64) -> PyResult<(f64, f64, Option<f64>, Option<f64>)> {
    let preds = PredictionSet::new(scores, truths, threshold).map_err(to_py)?;
    let r = evaluate_preds(&preds).map_err(to_py)?;
    Ok((r.m_f1, r.macro_f1, r.m_auc, r.macro_auc))
}

#[pymodule]
fn gaml_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyLabelGraph>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
