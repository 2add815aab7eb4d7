//! Model checkpoints: one JSON header line followed by the raw weights
//! (`W⁽¹⁾` then `W⁽²⁾`, row-major, little-endian `f64`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::GcnModel;
use crate::error::{Error, Result};
use crate::graph::Task;

const FORMAT: &str = "netfense-gcn";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    task: Task,
    seed: u64,
    best_epoch: usize,
    feature_dim: usize,
    hidden_dim: usize,
    n_classes: usize,
}

pub fn save_checkpoint(model: &GcnModel, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        task: model.task,
        seed: model.seed,
        best_epoch: model.best_epoch,
        feature_dim: model.feature_dim(),
        hidden_dim: model.hidden_dim(),
        n_classes: model.n_classes(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for w in model.w1.iter().chain(model.w2.iter()) {
        out.write_all(&w.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GcnModel> {
    let path = path.as_ref();
    let mut input = BufReader::new(File::open(path)?);
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        message: format!("bad checkpoint header: {e}"),
    })?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            header.format,
            header.version
        )));
    }
    let mut read_matrix = |rows: usize, cols: usize| -> Result<Array2<f64>> {
        let mut buf = vec![0u8; rows * cols * 8];
        input.read_exact(&mut buf).map_err(|e| {
            Error::Data(format!("{}: truncated weights ({e})", path.display()))
        })?;
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), values).expect("length matches shape"))
    };
    let w1 = read_matrix(header.feature_dim, header.hidden_dim)?;
    let w2 = read_matrix(header.hidden_dim, header.n_classes)?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Data(format!(
            "{}: {} trailing bytes after weights",
            path.display(),
            rest.len()
        )));
    }
    let mut model = GcnModel::from_weights(w1, w2, header.task, header.seed)?;
    model.best_epoch = header.best_epoch;
    Ok(model)
}
