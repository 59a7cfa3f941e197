use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::autodiff::{params_from_bytes, params_to_bytes, AdamState, ParamSet};
use crate::error::{Error, Result};
use crate::model::{check_params, Architecture};

const M_PREFIX: &str = "adam.m.";
const V_PREFIX: &str = "adam.v.";

/// Parameters, optimizer state and the settings that produced them.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ParamSet<f32>,
    pub adam: AdamState<f32>,
    pub config: TrainConfig,
    pub architecture: Architecture,
    /// Targets were divided by this before training; predictions are in
    /// the same units.
    pub divisor: f32,
    /// Completed epochs.
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    config: TrainConfig,
    architecture: Architecture,
    divisor: f32,
    epoch: usize,
    adam_step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut all = self.params.clone();
        for (prefix, set) in [(M_PREFIX, &self.adam.m), (V_PREFIX, &self.adam.v)] {
            for (path, t) in set.iter() {
                all.insert(format!("{prefix}{path}"), t.clone());
            }
        }
        let trailer = serde_json::to_vec(&Trailer {
            config: self.config.clone(),
            architecture: self.architecture,
            divisor: self.divisor,
            epoch: self.epoch,
            adam_step: self.adam.step,
        })?;
        params_to_bytes(&all, Some(&trailer))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (all, trailer) = params_from_bytes(bytes)?;
        let trailer = trailer.ok_or_else(|| Error::Format("checkpoint has no settings trailer".into()))?;
        let t: Trailer = serde_json::from_slice(&trailer)?;
        let mut params = ParamSet::new();
        let mut m = ParamSet::new();
        let mut v = ParamSet::new();
        for (path, tensor) in all.iter() {
            if let Some(p) = path.strip_prefix(M_PREFIX) {
                m.insert(p, tensor.clone());
            } else if let Some(p) = path.strip_prefix(V_PREFIX) {
                v.insert(p, tensor.clone());
            } else {
                params.insert(path.clone(), tensor.clone());
            }
        }
        check_params(&t.architecture, &params)?;
        for moments in [&m, &v] {
            if moments.shapes() != params.shapes() {
                return Err(Error::Format("optimizer moments do not match parameters".into()));
            }
        }
        if !(t.divisor > 0.0 && t.divisor.is_finite()) {
            return Err(Error::Format(format!("invalid target divisor {}", t.divisor)));
        }
        Ok(Checkpoint {
            params,
            adam: AdamState { m, v, step: t.adam_step },
            config: t.config,
            architecture: t.architecture,
            divisor: t.divisor,
            epoch: t.epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
