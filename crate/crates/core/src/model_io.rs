//! JSON model files.
//!
//! Floats are written in shortest round-trip decimal form and parsed back
//! exactly, so a saved model predicts bit-identically after loading.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewSample;
use crate::error::{HlrError, Result};
use crate::hlr::{HlrModel, Removal, Termination};
use crate::kernels::KernelSpec;

pub const MODEL_FORMAT: &str = "hlr-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    kernels: Vec<KernelSpec>,
    view_weights: Vec<f64>,
    /// One row of `m` coefficients per support sample.
    w: Vec<Vec<f64>>,
    xi_history: Vec<f64>,
    removed: Vec<Removal>,
    labelled_mask: Vec<bool>,
    termination: Option<Termination>,
    support: Vec<MultiViewSample>,
}

impl From<&HlrModel> for ModelDocument {
    fn from(m: &HlrModel) -> Self {
        ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kernels: m.kernels.clone(),
            view_weights: m.view_weights.clone(),
            w: m.w.row_iter().map(|r| r.iter().copied().collect()).collect(),
            xi_history: m.xi_history.clone(),
            removed: m.removed.clone(),
            labelled_mask: m.labelled_mask.clone(),
            termination: m.termination,
            support: m.support.clone(),
        }
    }
}

impl ModelDocument {
    fn into_model(self) -> Result<HlrModel> {
        if self.format != MODEL_FORMAT {
            return Err(HlrError::Format(format!("not a model file (format tag {:?})", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(HlrError::Format(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                self.version
            )));
        }
        let n = self.support.len();
        let m = self.kernels.len();
        if self.view_weights.len() != m || self.w.len() != n || self.w.iter().any(|r| r.len() != m) {
            return Err(HlrError::Format(format!(
                "inconsistent shapes: {m} kernels, {} view weights, {n} support samples, {} coefficient rows",
                self.view_weights.len(),
                self.w.len()
            )));
        }
        if self.support.iter().any(|s| s.n_views() != m) {
            return Err(HlrError::Format("support sample view count differs from kernel count".into()));
        }
        if self.labelled_mask.len() != n || self.xi_history.is_empty() {
            return Err(HlrError::Format("label mask or threshold history malformed".into()));
        }
        for k in &self.kernels {
            k.validate().map_err(|e| HlrError::Format(e.to_string()))?;
        }
        Ok(HlrModel {
            w: DMatrix::from_fn(n, m, |i, a| self.w[i][a]),
            support: self.support,
            view_weights: self.view_weights,
            kernels: self.kernels,
            xi_history: self.xi_history,
            removed: self.removed,
            labelled_mask: self.labelled_mask,
            termination: self.termination,
        })
    }
}

pub fn model_to_string(model: &HlrModel) -> Result<String> {
    serde_json::to_string_pretty(&ModelDocument::from(model)).map_err(|e| HlrError::Format(e.to_string()))
}

pub fn model_from_str(text: &str) -> Result<HlrModel> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| HlrError::Format(e.to_string()))?;
    doc.into_model()
}

pub fn write_model<W: Write>(model: &HlrModel, writer: W) -> Result<()> {
    let mut writer = writer;
    serde_json::to_writer_pretty(&mut writer, &ModelDocument::from(model)).map_err(|e| HlrError::Format(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_model<R: Read>(reader: R) -> Result<HlrModel> {
    let doc: ModelDocument = serde_json::from_reader(reader).map_err(|e| HlrError::Format(e.to_string()))?;
    doc.into_model()
}

pub fn save_model(model: &HlrModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<HlrModel> {
    read_model(BufReader::new(File::open(path)?))
}
