//! Convolutional mean/variance field predictor.
//!
//! Sparse measurements and the building map are rasterized into a
//! two-channel image, normalized to [-1, 1], and fed through two
//! structurally identical U-Nets: one for the per-cell mean (de-normalized
//! back to dBm) and one for the per-cell variance (softplus plus a floor).
//! Training minimizes the masked Gaussian negative log-likelihood; the
//! benchmark variants reuse the same machinery with one input channel
//! (map-blind) or a plain least-squares loss (mean-only).

mod input;
mod loss;
mod train;
mod unet;

pub use input::{build_input, normalize, tensorize};
pub use loss::{loss_eq1, loss_ls};
pub use train::{train, Model, TrainReport, TrainSample};
pub use unet::{UNet, UNetSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Which predictor is being trained or evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Two-channel input, mean and variance heads.
    Proposed,
    /// Two-channel input, mean head only, least-squares loss.
    LsOnly,
    /// Measurement channel only, mean and variance heads.
    MapBlind,
}

impl Variant {
    pub fn input_channels(self) -> usize {
        match self {
            Variant::MapBlind => 1,
            _ => 2,
        }
    }

    pub fn predicts_variance(self) -> bool {
        !matches!(self, Variant::LsOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::LsOnly => "ls_only",
            Variant::MapBlind => "map_blind",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Variant::Proposed),
            "ls_only" => Ok(Variant::LsOnly),
            "map_blind" => Ok(Variant::MapBlind),
            other => Err(Error::InvalidParameter(format!("unknown variant '{other}'"))),
        }
    }
}

/// Numeric precision of a training or inference run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "32" | "f32" => Ok(Precision::F32),
            "64" | "f64" => Ok(Precision::F64),
            other => Err(Error::InvalidParameter(format!("unknown precision '{other}'"))),
        }
    }
}

pub const ACTIVATION_SCHEME: &str = "leaky_relu(0.2)+relu";
pub const INIT_SCHEME: &str = "he_fan_in";

/// Network architecture knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub variant: Variant,
    /// Number of 2x downsamplings.
    pub depth: usize,
    /// Channels at the top encoder level; doubles per level.
    pub base_channels: usize,
    /// Width of the fully connected bottleneck; must equal the flattened
    /// bottom feature map, `(n / 2^depth)^2 * base * 2^(depth-1)`.
    pub bottleneck_dense: usize,
    /// Encoder/decoder nonlinearity scheme.
    pub activation: String,
    /// Weight initialization scheme.
    pub init_scheme: String,
    /// Additive floor on the predicted variance, in dB^2.
    pub var_floor: f64,
}

impl NetConfig {
    /// The reference configuration: depth 4, base 16, 2048-wide bottleneck
    /// (matching a 64-cell grid).
    pub fn reference(variant: Variant) -> Self {
        Self {
            variant,
            depth: 4,
            base_channels: 16,
            bottleneck_dense: 2048,
            activation: ACTIVATION_SCHEME.to_string(),
            init_scheme: INIT_SCHEME.to_string(),
            var_floor: 1e-3,
        }
    }

    /// Same architecture at a different width/depth, with the bottleneck
    /// width recomputed for the grid.
    pub fn for_grid(variant: Variant, grid: &Grid, base_channels: usize, depth: usize) -> Result<Self> {
        let mut cfg = Self::reference(variant);
        cfg.base_channels = base_channels;
        cfg.depth = depth;
        cfg.bottleneck_dense = Self::flatten_width(grid.cells_per_side(), base_channels, depth)?;
        Ok(cfg)
    }

    fn flatten_width(n: usize, base: usize, depth: usize) -> Result<usize> {
        if depth == 0 || base == 0 {
            return Err(Error::Config("depth and base_channels must be >= 1".into()));
        }
        if n % (1 << depth) != 0 {
            return Err(Error::Config(format!("grid side {n} is not divisible by 2^{depth}")));
        }
        let bottom = n >> depth;
        Ok(bottom * bottom * (base << (depth - 1)))
    }

    /// Validate against a grid and derive the layer plan.
    pub fn plan_for(&self, grid: &Grid) -> Result<UNetSpec> {
        let n = grid.cells_per_side();
        let flatten = Self::flatten_width(n, self.base_channels, self.depth)?;
        if flatten != self.bottleneck_dense {
            return Err(Error::Config(format!(
                "bottleneck_dense {} does not match the flattened bottom feature map {flatten} \
                 (grid {n}, base {}, depth {})",
                self.bottleneck_dense, self.base_channels, self.depth
            )));
        }
        if !(self.var_floor > 0.0) {
            return Err(Error::Config("var_floor must be positive".into()));
        }
        if self.activation != ACTIVATION_SCHEME {
            return Err(Error::Config(format!("unsupported activation scheme '{}'", self.activation)));
        }
        if self.init_scheme != INIT_SCHEME {
            return Err(Error::Config(format!("unsupported init scheme '{}'", self.init_scheme)));
        }
        Ok(UNetSpec {
            in_channels: self.variant.input_channels(),
            n,
            depth: self.depth,
            base: self.base_channels,
            dense_width: flatten,
        })
    }
}

/// Optimization settings. The learning-rate and batch defaults follow the
/// published training configuration; desk-scale runs usually override the
/// rate (recorded in the run manifest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-5, batch: 64, epochs: 1, seed: 0, precision: Precision::F32 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) {
            return Err(Error::InvalidParameter("learning rate must be >= 0".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fixed dataset-wide normalization constants; recorded in the run
/// manifest, never inferred from individual samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Signal levels mapped to [-1, 1]; values outside clamp.
    pub s_min_dbm: f64,
    pub s_max_dbm: f64,
    /// Building heights mapped from [0, h_max] to [-1, 1].
    pub h_max_m: f64,
    /// Padding value marking unmeasured cells; sits below `s_min_dbm`.
    pub c_l_dbm: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { s_min_dbm: -150.0, s_max_dbm: -40.0, h_max_m: 60.0, c_l_dbm: -200.0 }
    }
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min_dbm < self.s_max_dbm) || !(self.h_max_m > 0.0) {
            return Err(Error::Config("degenerate normalization constants".into()));
        }
        if self.c_l_dbm > self.s_min_dbm {
            return Err(Error::Config("padding value must not exceed s_min".into()));
        }
        Ok(())
    }

    /// Slope of the dBm -> [-1, 1] map.
    pub fn signal_scale(&self) -> f64 {
        (self.s_max_dbm - self.s_min_dbm) / 2.0
    }

    /// Midpoint of the signal range, the preimage of 0.
    pub fn signal_mid(&self) -> f64 {
        (self.s_max_dbm + self.s_min_dbm) / 2.0
    }

    pub fn normalize_signal(&self, dbm: f64) -> f64 {
        ((dbm - self.signal_mid()) / self.signal_scale()).clamp(-1.0, 1.0)
    }

    pub fn normalize_height(&self, meters: f64) -> f64 {
        (2.0 * meters / self.h_max_m - 1.0).clamp(-1.0, 1.0)
    }

    /// Map a raw mean-head output back to dBm.
    pub fn denormalize_signal(&self, raw: f64) -> f64 {
        raw * self.signal_scale() + self.signal_mid()
    }
}
