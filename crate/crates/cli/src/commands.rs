use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gaml::explain::{export_trace, rooted_subgraph, top_k_nodes, TraceExport};
use gaml::graphdata::{
    generate_synthetic, load_dataset, load_label_graph, save_graph_dataset, split_indices, LabelGraph, MotifSpec,
    MultilabelDataset,
};
use gaml::metrics::{evaluate, MetricsReport, PredictionSet};
use gaml::model::{ForwardOptions, Model};
use gaml::training::{load_checkpoint, predict_dataset, save_checkpoint, Trainer, TrainData};
use gaml::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::Effective;

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn label_graph_for(eff: &Effective, num_labels: usize) -> Result<Option<LabelGraph>> {
    eff.label_graph
        .as_ref()
        .map(|p| load_label_graph(p, eff.label_threshold, num_labels))
        .transpose()
}

#[derive(Serialize)]
struct ClassStats {
    planted: usize,
    /// Positives found by the isomorphism oracle without planting.
    chance: usize,
    positives: usize,
    positive_rate: f64,
}

pub fn generate(eff: &Effective, spec_flag: Option<PathBuf>, n_flag: Option<usize>) -> Result<()> {
    let section = eff.generate.clone();
    let spec_path = spec_flag
        .or_else(|| section.as_ref().and_then(|s| s.spec.clone()))
        .ok_or_else(|| Error::Config("generate.spec is required (or pass --spec)".into()))?;
    let n = n_flag
        .or_else(|| section.as_ref().and_then(|s| s.n))
        .ok_or_else(|| Error::Config("generate.n is required (or pass --n)".into()))?;
    let ratios = section.map_or([0.6, 0.2, 0.2], |s| s.ratios);
    let seed = eff.seed.expect("validated");
    let out = eff.out_dir()?;

    let text = fs::read_to_string(&spec_path).map_err(|e| Error::Config(format!("{}: {e}", spec_path.display())))?;
    let spec: MotifSpec = serde_json::from_str(&text).map_err(|e| Error::Validation(format!("motif spec: {e}")))?;
    let syn = generate_synthetic(&spec, n, seed)?;

    fs::create_dir_all(&out)?;
    let parts = split_indices(n, ratios, seed)?;
    let names = ["train", "valid", "test"];
    for (name, idx) in names.iter().zip(&parts) {
        let subset = syn.dataset.with_examples(idx.iter().map(|&i| syn.dataset.examples[i].clone()).collect());
        save_graph_dataset(&subset, out.join(format!("{name}.jsonl")))?;
    }
    let classes: Vec<ClassStats> = (0..syn.motifs.len())
        .map(|c| {
            let planted = syn.planted.iter().filter(|p| p[c]).count();
            let positives = syn.dataset.examples.iter().filter(|e| e.labels[c]).count();
            ClassStats {
                planted,
                chance: positives - planted,
                positives,
                positive_rate: positives as f64 / n as f64,
            }
        })
        .collect();
    let manifest = json!({
        "n": n,
        "seed": seed,
        "ratios": ratios,
        "sizes": {"train": parts[0].len(), "valid": parts[1].len(), "test": parts[2].len()},
        "plant_probability": spec.plant_probability,
        "classes": classes,
        "stats": syn.dataset.stats(),
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    eff.echo(&out)?;
    println!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}

pub fn train(eff: &Effective, resume: bool, stop_after: Option<usize>) -> Result<()> {
    let out = eff.out_dir()?;
    let train_set = load_dataset(eff.train_path()?)?;
    let valid_set = load_dataset(eff.valid_path()?)?;
    let lg = label_graph_for(eff, train_set.num_labels)?;
    if eff.model.use_label_graph && lg.is_none() {
        return Err(Error::Config("model.use_label_graph is set but no label_graph path is given".into()));
    }
    let mut model_cfg = eff.model.clone();
    model_cfg.input_kind = train_set.input_kind;
    if let Some(g) = &lg {
        model_cfg.label_edge_types = g.num_edge_types();
    }
    fs::create_dir_all(&out)?;
    eff.echo(&out)?;

    let ckpt_path = out.join("checkpoint.json");
    let best_path = out.join("best.json");
    let history_path = out.join("history.jsonl");
    let mut trainer = if resume && ckpt_path.exists() {
        let ckpt = load_checkpoint(&ckpt_path)?;
        let optimizer = ckpt
            .optimizer
            .ok_or_else(|| Error::Validation(format!("{} holds no optimizer state", ckpt_path.display())))?;
        let best = if best_path.exists() { Some(load_checkpoint(&best_path)?.model) } else { None };
        Trainer::resume(ckpt.model, optimizer, best, eff.train.clone())?
    } else {
        let model = Model::new(model_cfg, train_set.meta(), eff.train.seed)?;
        File::create(&history_path)?;
        Trainer::new(model, eff.train.clone())?
    };

    let data = TrainData {
        train: &train_set,
        valid: &valid_set,
        label_graph: lg.as_ref(),
    };
    let mut log = BufWriter::new(OpenOptions::new().append(true).create(true).open(&history_path)?);
    let mut ran = 0;
    while !trainer.finished() && stop_after.map_or(true, |m| ran < m) {
        let record = trainer.run_epoch(data)?;
        serde_json::to_writer(&mut log, &record)?;
        log.write_all(b"\n")?;
        log.flush()?;
        if trainer.optimizer.schedule.best_epoch == Some(record.epoch) {
            save_checkpoint(&trainer.model, None, &best_path)?;
        }
        save_checkpoint(&trainer.model, Some(&trainer.optimizer), &ckpt_path)?;
        eprintln!(
            "epoch {:>3}  lr {:.2e}  train {:.4}  valid {:.4}  micro-F1 {:.3}",
            record.epoch, record.lr, record.train_loss, record.valid_loss, record.metrics.m_f1
        );
        ran += 1;
    }

    let schedule = &trainer.optimizer.schedule;
    let mut summary = json!({
        "epochs": schedule.epoch,
        "finished": trainer.finished(),
        "best_epoch": schedule.best_epoch,
        "best_valid_loss": schedule.best_valid_loss,
        "lr": schedule.lr,
        "decays": schedule.decays,
    });
    if trainer.finished() {
        if let (Some(test), Some(best)) = (&eff.data.test, &trainer.best) {
            let test_set = load_dataset(test)?;
            let report = metrics_for(best, &test_set, lg.as_ref(), eff)?;
            write_json(&out.join("test_metrics.json"), &report)?;
            summary["test"] = serde_json::to_value(&report)?;
        }
    }
    write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn metrics_for(model: &Model, dataset: &MultilabelDataset, lg: Option<&LabelGraph>, eff: &Effective) -> Result<MetricsReport> {
    let scores = predict_dataset(model, dataset, lg, eff.threads)?;
    let truths = dataset.examples.iter().map(|e| e.labels.clone()).collect();
    evaluate(&PredictionSet::new(scores, truths, eff.threshold)?)
}

/// Model, dataset and label graph for the read-only commands.
fn load_for_inference(eff: &Effective) -> Result<(Model, MultilabelDataset, Option<LabelGraph>)> {
    let model = load_checkpoint(eff.checkpoint_path()?)?.model;
    let dataset = load_dataset(eff.eval_path()?)?;
    if dataset.num_labels != model.num_labels() {
        return Err(Error::Validation(format!(
            "dataset has {} labels, checkpoint has {}",
            dataset.num_labels,
            model.num_labels()
        )));
    }
    let lg = label_graph_for(eff, dataset.num_labels)?;
    if model.config.use_label_graph && lg.is_none() {
        return Err(Error::Config("checkpoint was trained with a label graph; pass --label-graph".into()));
    }
    Ok((model, dataset, lg))
}

pub fn eval(eff: &Effective) -> Result<()> {
    let (model, dataset, lg) = load_for_inference(eff)?;
    let report = metrics_for(&model, &dataset, lg.as_ref(), eff)?;
    if let Some(out) = &eff.out {
        fs::create_dir_all(out)?;
        write_json(&out.join("metrics.json"), &report)?;
        eff.echo(out)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

pub fn predict(eff: &Effective) -> Result<()> {
    let (model, dataset, lg) = load_for_inference(eff)?;
    let scores = predict_dataset(&model, &dataset, lg.as_ref(), eff.threads)?;
    let mut lines = Vec::new();
    for (index, s) in scores.iter().enumerate() {
        let labels: Vec<usize> = (0..s.len()).filter(|&c| s[c] >= eff.threshold).collect();
        serde_json::to_writer(&mut lines, &json!({"index": index, "scores": s, "labels": labels}))?;
        lines.push(b'\n');
    }
    match &eff.out {
        Some(out) => {
            fs::create_dir_all(out)?;
            fs::write(out.join("predictions.jsonl"), &lines)?;
            eff.echo(out)?;
        }
        None => std::io::stdout().write_all(&lines)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct TopNode {
    node: usize,
    prob: f64,
    /// Nodes and edges within `t` hops of `node`, in original ids.
    substructure_nodes: Vec<usize>,
    substructure_edges: Vec<[usize; 3]>,
}

pub fn explain(eff: &Effective, graphs_flag: Option<Vec<usize>>, k_flag: Option<usize>) -> Result<()> {
    let (model, dataset, lg) = load_for_inference(eff)?;
    let out = eff.out_dir()?;
    let section = eff.explain.clone();
    let ids = graphs_flag
        .or_else(|| section.as_ref().map(|s| s.graphs.clone()))
        .filter(|ids| !ids.is_empty())
        .unwrap_or_else(|| (0..dataset.len()).collect());
    let k = k_flag.or(section.map(|s| s.k)).unwrap_or(3);
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let trace_dir = out.join("traces");
    fs::create_dir_all(&trace_dir)?;
    let mut topk = Vec::new();
    for &id in &ids {
        let example = dataset
            .examples
            .get(id)
            .ok_or_else(|| Error::Domain(format!("graph {id} outside 0..{}", dataset.len())))?;
        let graph = example
            .graph()
            .ok_or_else(|| Error::Validation("explain needs graph examples".into()))?;
        let fwd = model.forward(
            graph,
            ForwardOptions {
                label_graph: lg.as_ref(),
                ..Default::default()
            },
        )?;
        let name = format!("graph{id}");
        export_trace(&TraceExport::new(&name, &fwd.trace, graph)?, &trace_dir)?;
        for t in 1..=fwd.trace.layers.len() {
            for c in 0..model.num_labels() {
                let ranked = top_k_nodes(&fwd.trace, c, t, k.min(graph.num_nodes()))?;
                let nodes: Vec<TopNode> = ranked
                    .into_iter()
                    .map(|(node, prob)| {
                        let sub = rooted_subgraph(graph, node, t)?;
                        let ids = &sub.original_ids;
                        Ok(TopNode {
                            node,
                            prob,
                            substructure_nodes: ids.clone(),
                            substructure_edges: sub.graph.edges().iter().map(|&(i, j, e)| [ids[i], ids[j], e]).collect(),
                        })
                    })
                    .collect::<Result<_>>()?;
                topk.push(json!({
                    "graph_id": name,
                    "layer": t,
                    "label": c,
                    "score": fwd.outputs.get(0, c),
                    "nodes": nodes,
                }));
            }
        }
    }
    let mut text = String::new();
    for rec in &topk {
        text += &serde_json::to_string(rec)?;
        text.push('\n');
    }
    fs::write(out.join("topk.jsonl"), text)?;
    eff.echo(&out)?;
    println!("{}", json!({"graphs": ids.len(), "traces": trace_dir}));
    Ok(())
}
