use serde::{Deserialize, Serialize};

use crate::autodiff::AdamHyper;
use crate::dataset::DatasetDims;
use crate::error::{Error, Result};
use crate::model::Architecture;

/// Every knob of a training run. Serialized as flat JSON; missing keys take
/// their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub sfd: usize,
    pub vd: usize,
    pub d_h: usize,
    pub gru_layers: usize,
    pub kernel_size: usize,
    pub conv_stride: usize,
    pub bottleneck: bool,
    pub dropout_p: f64,
    /// Shuffle ratio of the self-supervised task.
    pub alpha: f64,
    /// Weight of the self-supervised loss.
    pub beta: f64,
    /// Feature portions averaged into the video context (1 = off).
    pub portions: usize,
    /// Apply portion averaging when predicting, not only when training.
    pub augment_at_inference: bool,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
    pub n_s: usize,
    pub train_fraction: f64,
    /// Divide targets by the training set's largest importance.
    pub normalize_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamHyper::default();
        TrainConfig {
            sfd: 256,
            vd: 256,
            d_h: 256,
            gru_layers: 1,
            kernel_size: 3,
            conv_stride: 1,
            bottleneck: true,
            dropout_p: 0.0,
            alpha: 0.02,
            beta: 1.0,
            portions: 1,
            augment_at_inference: false,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            epochs: 30,
            seed: 0,
            n_s: 6,
            train_fraction: 0.8,
            normalize_targets: true,
        }
    }
}

fn positive(field: &'static str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::range(field, v, ">= 1"))
    } else {
        Ok(())
    }
}

impl TrainConfig {
    /// Sets the three embedding widths at once.
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.sfd = dim;
        self.vd = dim;
        self.d_h = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("sfd", self.sfd),
            ("vd", self.vd),
            ("d_h", self.d_h),
            ("gru_layers", self.gru_layers),
            ("kernel_size", self.kernel_size),
            ("conv_stride", self.conv_stride),
            ("portions", self.portions),
            ("n_s", self.n_s),
        ] {
            positive(field, v)?;
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::range("alpha", self.alpha, "[0, 1]"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::range("beta", self.beta, "[0, inf)"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::range("dropout_p", self.dropout_p, "[0, 1)"));
        }
        if self.portions > self.sfd {
            return Err(Error::range("portions", self.portions, "[1, sfd]"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::range("train_fraction", self.train_fraction, "(0, 1]"));
        }
        self.adam().validate()
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn architecture(&self, dims: DatasetDims) -> Architecture {
        Architecture {
            dims,
            sfd: self.sfd,
            vd: self.vd,
            d_h: self.d_h,
            gru_layers: self.gru_layers,
            kernel_size: self.kernel_size,
            conv_stride: self.conv_stride,
            bottleneck: self.bottleneck,
        }
    }

    /// Portions used when predicting.
    pub fn inference_portions(&self) -> usize {
        if self.augment_at_inference {
            self.portions
        } else {
            1
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
