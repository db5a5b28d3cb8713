//! Checkpoint files: one JSON document holding the model configuration,
//! dataset dimensions, every parameter array by name in layout order, and
//! optionally the optimizer state for resuming.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::OptimizerState;
use crate::error::{Error, Result};
use crate::graphdata::DatasetMeta;
use crate::model::{Model, ModelConfig, ModelParams, ParamLayout};
use crate::numerics::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedArray {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    meta: DatasetMeta,
    params: Vec<NamedArray>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<OptimizerState>,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    }
}

pub fn write_checkpoint(model: &Model, optimizer: Option<&OptimizerState>, mut w: impl Write) -> Result<()> {
    let layout = model.params.layout();
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        meta: model.meta.clone(),
        params: model
            .params
            .tensors()
            .iter()
            .zip(&layout.names)
            .map(|(t, name)| NamedArray {
                name: name.clone(),
                shape: t.shape(),
                data: t.data().to_vec(),
            })
            .collect(),
        optimizer: optimizer.cloned(),
    };
    serde_json::to_writer(&mut w, &file)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes through a temporary file so a crash never leaves a half-written
/// checkpoint under `path`.
pub fn save_checkpoint(model: &Model, optimizer: Option<&OptimizerState>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    let mut buf = Vec::new();
    write_checkpoint(model, optimizer, &mut buf)?;
    fs::write(&tmp, buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(text: &str) -> Result<Checkpoint> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "missing format_version".into(),
        })?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: CHECKPOINT_VERSION,
        });
    }
    let file: CheckpointFile = serde_json::from_value(value).map_err(parse_error)?;
    file.config.validate()?;
    let layout = ParamLayout::new(&file.config, &file.meta)?;
    if file.params.len() != layout.len() {
        return Err(Error::Validation(format!(
            "checkpoint has {} parameter arrays, configuration needs {}",
            file.params.len(),
            layout.len()
        )));
    }
    let mut tensors = Vec::with_capacity(layout.len());
    for (i, arr) in file.params.into_iter().enumerate() {
        if arr.name != layout.names[i] {
            return Err(Error::Validation(format!(
                "parameter {i} is named {}, expected {}",
                arr.name, layout.names[i]
            )));
        }
        if arr.shape != layout.shapes[i] {
            return Err(Error::Validation(format!(
                "parameter {} has shape {:?}, expected {:?}",
                arr.name, arr.shape, layout.shapes[i]
            )));
        }
        tensors.push(Tensor::new(arr.shape[0], arr.shape[1], arr.data).map_err(|_| {
            Error::Validation(format!("parameter {} has the wrong number of entries", layout.names[i]))
        })?);
    }
    let params = ModelParams::from_tensors(layout, tensors)?;
    if let Some(opt) = &file.optimizer {
        opt.check_against(&params)?;
    }
    Ok(Checkpoint {
        model: Model::from_params(file.config, file.meta, params)?,
        optimizer: file.optimizer,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&fs::read_to_string(path)?)
}
