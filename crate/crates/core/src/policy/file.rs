//! Model container: magic, version, JSON header, then the flat weight payload.
//!
//! Layout (all integers little-endian):
//! `b"VFILPOL\0"`, `u32` version, `u32` header length, header JSON,
//! `u64` weight count, weights as `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PolicyArch, PolicyParams, Standardizer};
use crate::error::{Error, Result};
use crate::types::NormalizationConfig;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VFILPOL\0";

/// How the model's step period relates to the commanded motion frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScaling {
    /// Step period `f0 / (f·F)`, velocities rescaled at the boundary.
    Variable,
    /// Constant step period `1/F`, no velocity rescaling.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub arch: PolicyArch,
    pub input_stats: Standardizer,
    pub output_stats: Standardizer,
    pub normalization: NormalizationConfig,
    pub time_scaling: TimeScaling,
    pub train_config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyModel {
    pub header: ModelHeader,
    pub params: PolicyParams,
}

impl PolicyModel {
    pub fn new(
        params: PolicyParams,
        normalization: NormalizationConfig,
        time_scaling: TimeScaling,
        train_config_hash: String,
    ) -> Self {
        PolicyModel {
            header: ModelHeader {
                arch: params.arch,
                input_stats: params.input_stats.clone(),
                output_stats: params.output_stats.clone(),
                normalization,
                time_scaling,
                train_config_hash,
            },
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let w = &self.params.weights;
        let mut out = Vec::with_capacity(24 + header.len() + 8 * w.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(w.len() as u64).to_le_bytes());
        for v in w {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if cur.len() < n {
                return Err("truncated".into());
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(8)? != MAGIC {
            return Err("not a policy model (bad magic)".into());
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != MODEL_FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let hlen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let header: ModelHeader = serde_json::from_slice(take(hlen)?).map_err(|e| format!("header: {e}"))?;
        header.arch.validate().map_err(|e| e.to_string())?;
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if count != header.arch.param_count() {
            return Err(format!(
                "weight count {count} does not match architecture ({})",
                header.arch.param_count()
            ));
        }
        if header.input_stats.dim() != header.arch.input_dim || header.output_stats.dim() != header.arch.output_dim {
            return Err("standardization dims do not match architecture".into());
        }
        let payload = take(8 * count)?;
        if !cur.is_empty() {
            return Err("trailing bytes after weights".into());
        }
        let weights: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if weights.iter().any(|v| !v.is_finite()) {
            return Err("non-finite weight".into());
        }
        let params = PolicyParams {
            arch: header.arch,
            weights,
            input_stats: header.input_stats.clone(),
            output_stats: header.output_stats.clone(),
        };
        Ok(PolicyModel { header, params })
    }
}

pub fn save_model(path: &Path, model: &PolicyModel) -> Result<()> {
    let bytes = model.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<PolicyModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::ModelLoad {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    PolicyModel::from_bytes(&bytes).map_err(|reason| Error::ModelLoad {
        path: path.to_path_buf(),
        reason,
    })
}
