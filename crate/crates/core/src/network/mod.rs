//! Multi-head multi-tail attention UNet: per-modality encoders, a bottleneck
//! fused with the condition map, and per-modality decoders whose magnitude
//! and phase heads are residual on the linear interpolation of the anchors.

mod checkpoint;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMetadata, CHECKPOINT_VERSION};
pub(crate) use model::{stack_f64, unstack_f64};
pub use model::{attention_gate, Batch, ForwardOutput, GateParams, Network, ParamSpec, Prediction};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossConfig;

/// Downsampling stages between the input and the bottleneck.
pub const DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub base_channels: usize,
    pub depth: usize,
    pub independent_encoders: bool,
    pub independent_decoders: bool,
    pub shared_bottleneck: bool,
    pub use_attention: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            depth: DEPTH,
            independent_encoders: true,
            independent_decoders: true,
            shared_bottleneck: true,
            use_attention: true,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::validation("base_channels", "must be at least 1"));
        }
        if self.depth != DEPTH {
            return Err(Error::validation("depth", format!("only depth {DEPTH} is supported")));
        }
        if self.independent_encoders != self.independent_decoders {
            return Err(Error::validation(
                "independent_decoders",
                "encoders and decoders must both be independent or both shared",
            ));
        }
        if !self.shared_bottleneck && !self.independent_encoders {
            return Err(Error::validation(
                "shared_bottleneck",
                "a single shared encoder implies a shared bottleneck",
            ));
        }
        Ok(())
    }

    /// Spatial size must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationRow {
    SepNoShared,
    SharedNoIndependent,
    NoWeightedLoss,
    Full,
}

impl AblationRow {
    pub const ALL: [AblationRow; 4] = [
        AblationRow::SepNoShared,
        AblationRow::SharedNoIndependent,
        AblationRow::NoWeightedLoss,
        AblationRow::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationRow::SepNoShared => "sep_no_shared",
            AblationRow::SharedNoIndependent => "shared_no_independent",
            AblationRow::NoWeightedLoss => "no_weighted_loss",
            AblationRow::Full => "full",
        }
    }
}

impl std::str::FromStr for AblationRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationRow::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown ablation row {s:?}")))
    }
}

/// Applies the toggles of `row` on top of `base`/`loss`.
pub fn configure_ablation(row: AblationRow, base: &NetworkConfig, loss: &LossConfig) -> (NetworkConfig, LossConfig) {
    let mut net = NetworkConfig {
        independent_encoders: true,
        independent_decoders: true,
        shared_bottleneck: true,
        ..base.clone()
    };
    let mut loss = LossConfig {
        weighted: true,
        ..loss.clone()
    };
    match row {
        AblationRow::SepNoShared => net.shared_bottleneck = false,
        AblationRow::SharedNoIndependent => {
            net.independent_encoders = false;
            net.independent_decoders = false;
        }
        AblationRow::NoWeightedLoss => loss.weighted = false,
        AblationRow::Full => {}
    }
    (net, loss)
}
