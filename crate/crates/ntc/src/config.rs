//! Training configuration files: JSON with every field optional.
//!
//! ```json
//! { "steps": 30000, "crop_size": 16, "loss": "l2_plus_ssim", "ssim_lambda": 0.05,
//!   "adam": { "beta2": 0.99 }, "address_mode": "wrap" }
//! ```

use std::fs;
use std::path::Path;

use ntc_core::trainer::AdamParams;
use ntc_core::{Activation, AddressMode, LossKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    L2,
    L2PlusSsim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Hardgelu,
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressModeName {
    Clamp,
    Wrap,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamFile {
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub steps: Option<u64>,
    pub batch_crops: Option<usize>,
    pub crop_size: Option<usize>,
    pub lr_grids: Option<f64>,
    pub lr_weights: Option<f64>,
    pub uniform_lod_fraction: Option<f64>,
    pub finetune_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub loss: Option<LossName>,
    pub ssim_lambda: Option<f64>,
    pub adam: Option<AdamFile>,
    pub activation: Option<ActivationName>,
    pub address_mode: Option<AddressModeName>,
    pub hidden_width: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Overrides the fields present in the file and validates the result.
    pub fn apply(&self, mut c: TrainConfig) -> CliResult<TrainConfig> {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            steps,
            batch_crops,
            crop_size,
            lr_grids,
            lr_weights,
            uniform_lod_fraction,
            finetune_fraction,
            seed,
            hidden_width
        );
        let lambda = self.ssim_lambda.unwrap_or(LossKind::DEFAULT_SSIM_LAMBDA);
        match self.loss {
            Some(LossName::L2) => c.loss = LossKind::L2,
            Some(LossName::L2PlusSsim) => c.loss = LossKind::L2PlusSsim { lambda },
            None if self.ssim_lambda.is_some() => c.loss = LossKind::L2PlusSsim { lambda },
            None => {}
        }
        if let Some(a) = &self.adam {
            c.adam = AdamParams {
                beta1: a.beta1.unwrap_or(c.adam.beta1),
                beta2: a.beta2.unwrap_or(c.adam.beta2),
                epsilon: a.epsilon.unwrap_or(c.adam.epsilon),
            };
        }
        if let Some(a) = self.activation {
            c.activation = match a {
                ActivationName::Hardgelu => Activation::HardGelu,
                ActivationName::Gelu => Activation::Gelu,
            };
        }
        if let Some(m) = self.address_mode {
            c.address_mode = match m {
                AddressModeName::Clamp => AddressMode::Clamp,
                AddressModeName::Wrap => AddressMode::Wrap,
            };
        }
        c.validate()?;
        Ok(c)
    }
}
