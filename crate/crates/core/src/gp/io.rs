use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GpHyper, TrainedGp};
use crate::error::{Error, Result};

pub const GP_SCHEMA_VERSION: u32 = 1;
pub const GPDS_MODEL_SCHEMA_VERSION: u32 = 1;

/// JSON form of a trained GP: training data plus per-output hyperparameters.
/// The precomputed solves are rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpRecord {
    pub schema_version: u32,
    pub input_dim: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub hypers: Vec<GpHyper>,
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Serialization(format!(
            "expected rows of length {ncols}"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl From<&TrainedGp> for GpRecord {
    fn from(gp: &TrainedGp) -> Self {
        Self {
            schema_version: GP_SCHEMA_VERSION,
            input_dim: gp.input_dim(),
            inputs: matrix_to_rows(gp.inputs()),
            targets: matrix_to_rows(gp.targets()),
            hypers: gp.hypers(),
        }
    }
}

impl TryFrom<&GpRecord> for TrainedGp {
    type Error = Error;

    fn try_from(r: &GpRecord) -> Result<Self> {
        if r.schema_version != GP_SCHEMA_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported GP schema version {}",
                r.schema_version
            )));
        }
        let x = rows_to_matrix(&r.inputs, r.input_dim)?;
        let y = rows_to_matrix(&r.targets, r.hypers.len())?;
        TrainedGp::train(x, y, r.hypers.clone())
    }
}

impl TrainedGp {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GpRecord::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: GpRecord = serde_json::from_str(s)?;
        TrainedGp::try_from(&rec)
    }
}
