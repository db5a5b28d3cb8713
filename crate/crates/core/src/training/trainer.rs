use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, OptimizerState};
use super::loss::mean_bce_loss;
use super::schedule::ScheduleConfig;
use crate::error::{Error, Result};
use crate::graphdata::{LabelGraph, LabeledExample, MultilabelDataset};
use crate::metrics::{evaluate, MetricsReport, PredictionSet};
use crate::model::{ForwardOptions, Model};
use crate::numerics::Tensor;
use crate::rng::{keyed_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub decay_factor: f64,
    pub max_epochs: usize,
    pub max_decays: usize,
    pub seed: u64,
    /// Worker threads for the per-example tapes of a batch. Results are
    /// deterministic for a fixed thread count; 1 is the reference mode.
    pub threads: usize,
    /// Decision threshold for the F1 scores in the history.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = ScheduleConfig::default();
        let a = AdamConfig::default();
        Self {
            batch_size: 32,
            learning_rate: s.initial_lr,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            patience: s.patience,
            decay_factor: s.decay_factor,
            max_epochs: s.max_epochs,
            max_decays: s.max_decays,
            seed: 0,
            threads: 1,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            initial_lr: self.learning_rate,
            patience: self.patience,
            decay_factor: self.decay_factor,
            max_decays: self.max_decays,
            max_epochs: self.max_epochs,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub metrics: MetricsReport,
}

#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a MultilabelDataset,
    pub valid: &'a MultilabelDataset,
    pub label_graph: Option<&'a LabelGraph>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Model,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    /// Parameters after the last epoch run.
    pub last: Model,
    pub optimizer: OptimizerState,
    pub history: Vec<EpochRecord>,
}

/// Training loop state that can be checkpointed between epochs.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: OptimizerState,
    pub best: Option<Model>,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = OptimizerState::new(&model.params, &config.schedule());
        Ok(Self {
            model,
            optimizer,
            best: None,
            config,
            history: Vec::new(),
        })
    }

    /// Continues from a saved model and optimizer state. `best` is the
    /// best-so-far model; without it the resumed model stands in.
    pub fn resume(model: Model, optimizer: OptimizerState, best: Option<Model>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        optimizer.check_against(&model.params)?;
        Ok(Self {
            model,
            optimizer,
            best,
            config,
            history: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.optimizer.schedule.epoch
    }

    pub fn finished(&self) -> bool {
        self.optimizer.schedule.stopped
    }

    /// One shuffled pass over the training set followed by validation and a
    /// schedule tick.
    pub fn run_epoch(&mut self, data: TrainData<'_>) -> Result<EpochRecord> {
        if self.finished() {
            return Err(Error::Training("training has already stopped".into()));
        }
        check_data(&self.model, data)?;
        let epoch = self.epochs_done() + 1;
        let cfg = &self.config;
        let lr = self.optimizer.lr();
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut keyed_rng(cfg.seed, Stream::Shuffle, epoch as u64));

        let mut train_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, mut grads) = batch_gradients(&self.model, data, batch, epoch, cfg)?;
            train_total += loss;
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            adam_step(&mut self.model.params, &grads, &mut self.optimizer, &cfg.adam())?;
        }
        let train_loss = train_total / data.train.len() as f64;

        let scores = predict_dataset(&self.model, data.valid, data.label_graph, cfg.threads)?;
        let truths: Vec<Vec<bool>> = data.valid.examples.iter().map(|e| e.labels.clone()).collect();
        let valid_loss = mean_bce_loss(&scores, &truths)?;
        if !valid_loss.is_finite() {
            return Err(Error::Training(format!("validation loss is {valid_loss} at epoch {epoch}")));
        }
        let metrics = evaluate(&PredictionSet::new(scores, truths, cfg.threshold)?)?;

        let tick = self.optimizer.schedule.tick(&cfg.schedule(), valid_loss);
        if tick.improved {
            self.best = Some(self.model.clone());
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            valid_loss,
            metrics,
        };
        self.history.push(record.clone());
        Ok(record)
    }

    /// Runs until the schedule stops or `max_epochs_now` more epochs have
    /// run, writing each history record as one JSON line to `log`.
    pub fn run(&mut self, data: TrainData<'_>, max_epochs_now: Option<usize>, mut log: Option<&mut dyn Write>) -> Result<()> {
        let mut ran = 0;
        while !self.finished() && max_epochs_now.map_or(true, |m| ran < m) {
            let record = self.run_epoch(data)?;
            if let Some(w) = log.as_deref_mut() {
                serde_json::to_writer(&mut *w, &record)?;
                w.write_all(b"\n")?;
                w.flush()?;
            }
            ran += 1;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> Result<TrainOutcome> {
        let schedule = &self.optimizer.schedule;
        let (Some(best_epoch), Some(best_valid_loss)) = (schedule.best_epoch, schedule.best_valid_loss) else {
            return Err(Error::Training("no epoch has been run".into()));
        };
        Ok(TrainOutcome {
            best: self.best.unwrap_or_else(|| self.model.clone()),
            best_epoch,
            best_valid_loss,
            last: self.model,
            optimizer: self.optimizer,
            history: self.history,
        })
    }
}

/// Trains from scratch to completion and returns the lowest-validation-loss model.
pub fn train(model: Model, data: TrainData<'_>, config: &TrainConfig, log: Option<&mut dyn Write>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(data, None, log)?;
    trainer.into_outcome()
}

fn check_data(model: &Model, data: TrainData<'_>) -> Result<()> {
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::Validation("training and validation sets must be non-empty".into()));
    }
    for set in [data.train, data.valid] {
        if set.num_labels != model.num_labels() {
            return Err(Error::Validation(format!(
                "dataset has {} labels, model has {}",
                set.num_labels,
                model.num_labels()
            )));
        }
    }
    Ok(())
}

/// Summed loss and summed gradients over `batch`. Examples are split into
/// contiguous chunks, one per thread, and the chunk sums are added in chunk
/// order.
fn batch_gradients(model: &Model, data: TrainData<'_>, batch: &[usize], epoch: usize, cfg: &TrainConfig) -> Result<(f64, Vec<Tensor>)> {
    let one = |idx: usize| -> Result<(f64, Vec<Tensor>)> {
        let key = ((epoch as u64) << 32) | idx as u64;
        let mut rng = keyed_rng(cfg.seed, Stream::Dropout, key);
        model.loss_and_gradients(
            &data.train.examples[idx],
            ForwardOptions {
                label_graph: data.label_graph,
                dropout_rng: Some(&mut rng),
                close_gates: false,
            },
        )
    };
    let chunk_sum = |chunk: &[usize]| -> Result<Option<(f64, Vec<Tensor>)>> {
        let mut acc: Option<(f64, Vec<Tensor>)> = None;
        for &idx in chunk {
            let (l, g) = one(idx)?;
            acc = Some(match acc {
                None => (l, g),
                Some((al, ag)) => (al + l, add_all(ag, &g)),
            });
        }
        Ok(acc)
    };
    let threads = cfg.threads.min(batch.len()).max(1);
    let parts: Vec<Option<(f64, Vec<Tensor>)>> = if threads == 1 {
        vec![chunk_sum(batch)?]
    } else {
        let size = batch.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = batch.chunks(size).map(|c| s.spawn(move || chunk_sum(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("gradient worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    };
    parts
        .into_iter()
        .flatten()
        .reduce(|(al, ag), (l, g)| (al + l, add_all(ag, &g)))
        .ok_or_else(|| Error::Domain("empty batch".into()))
}

fn add_all(mut acc: Vec<Tensor>, other: &[Tensor]) -> Vec<Tensor> {
    for (a, b) in acc.iter_mut().zip(other) {
        a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
    }
    acc
}

/// Dropout-free per-label probabilities for every example, in dataset order.
pub fn predict_dataset(model: &Model, dataset: &MultilabelDataset, label_graph: Option<&LabelGraph>, threads: usize) -> Result<Vec<Vec<f64>>> {
    let run = |examples: &[LabeledExample]| -> Result<Vec<Vec<f64>>> {
        examples.iter().map(|e| model.predict(e, label_graph)).collect()
    };
    let threads = threads.clamp(1, dataset.len().max(1));
    if threads == 1 {
        return run(&dataset.examples);
    }
    let size = dataset.len().div_ceil(threads);
    let parts = std::thread::scope(|s| {
        let handles: Vec<_> = dataset.examples.chunks(size).map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}
