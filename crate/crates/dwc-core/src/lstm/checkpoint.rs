//! Lossless JSON checkpointing of a trained model.
//!
//! The document is flat: `{format_version, hidden_units, l, f, scaler,
//! layer1, layer2, dense_w, dense_b, train_config, history}`. Matrices are
//! stored row-major with their dimensions. All values are finite f64, so
//! `load(save(x)) == x` bit-exactly.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::ScalerParams;
use crate::error::{Error, Result};

use super::train::{TrainConfig, TrainHistory};
use super::{LstmCellParams, Mat, NetworkParams, OUTPUT_DIM};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub hidden_units: usize,
    /// Lookback window length the model was trained with.
    pub l: usize,
    /// Prediction horizon in steps.
    pub f: usize,
    pub scaler: ScalerParams,
    pub layer1: LstmCellParams,
    pub layer2: LstmCellParams,
    pub dense_w: Mat,
    pub dense_b: [f64; OUTPUT_DIM],
    pub train_config: TrainConfig,
    pub history: TrainHistory,
}

impl Checkpoint {
    pub fn new(
        params: &NetworkParams,
        scaler: &ScalerParams,
        l: usize,
        f: usize,
        train_config: TrainConfig,
        history: TrainHistory,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            hidden_units: params.hidden_units,
            l,
            f,
            scaler: scaler.clone(),
            layer1: params.layer1.clone(),
            layer2: params.layer2.clone(),
            dense_w: params.dense_w.clone(),
            dense_b: params.dense_b,
            train_config,
            history,
        }
    }

    /// Reassembles the network parameters stored in the document.
    pub fn network_params(&self) -> NetworkParams {
        NetworkParams {
            hidden_units: self.hidden_units,
            layer1: self.layer1.clone(),
            layer2: self.layer2.clone(),
            dense_w: self.dense_w.clone(),
            dense_b: self.dense_b,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        if self.l == 0 || self.f == 0 {
            return Err(Error::format("checkpoint has l = 0 or f = 0"));
        }
        let params = self.network_params();
        params.check_shape()?;
        if !params.is_finite() {
            return Err(Error::format("checkpoint contains non-finite weights"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::format(e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// Serializes a checkpoint document; fails on non-finite parameters.
pub fn save_checkpoint(
    params: &NetworkParams,
    scaler: &ScalerParams,
    l: usize,
    f: usize,
    train_config: TrainConfig,
    history: TrainHistory,
) -> Result<String> {
    if !params.is_finite() {
        return Err(Error::Numeric(
            "refusing to checkpoint non-finite parameters".into(),
        ));
    }
    Checkpoint::new(params, scaler, l, f, train_config, history).to_json()
}

/// Parses and validates a checkpoint document.
pub fn load_checkpoint(document: &str) -> Result<Checkpoint> {
    Checkpoint::from_json(document)
}
