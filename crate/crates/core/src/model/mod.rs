//! ResNet family built from a [`ModelConfig`] or a classic preset.
//!
//! Structure of a configured network:
//!
//! * stem: `conv(k=7, 1 → input_filters, /2)`, norm, activation;
//! * one group per entry of `filters`/`blocks`. The first block of a group
//!   downsamples: its first `c` is strided and its skip branch is a strided
//!   1×1 projection. Later blocks keep the width and use an identity skip.
//!   A block's output is `main + skip` with nothing applied afterwards;
//! * head: global average pool, dense layer to two logits.
//!
//! Convolutions carry no bias. The presets use the same block type but leave
//! the first group at full resolution, like the 2D originals.

mod checkpoint;
mod network;
pub mod table;

use std::fmt;
use std::str::FromStr;

pub use checkpoint::{load_checkpoint, save_checkpoint, save_checkpoint_with, Precision, CHECKPOINT_MAGIC};
pub use network::{Branch, LayerPlan, LayerPlanKind, Network};

use crate::config::{parse_config, validate, LayerKind, ModelConfig};
use crate::error::{Error, Result};

pub const STEM_KERNEL: usize = 7;
pub const BLOCK_KERNEL: usize = 3;
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    ResNet18,
    ResNet34,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::ResNet18 => "ResNet18",
            Preset::ResNet34 => "ResNet34",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim() {
            "ResNet18" => Some(Preset::ResNet18),
            "ResNet34" => Some(Preset::ResNet34),
            _ => None,
        }
    }

    pub fn architecture(self) -> Architecture {
        let blocks = match self {
            Preset::ResNet18 => [2, 2, 2, 2],
            Preset::ResNet34 => [3, 4, 6, 3],
        };
        let groups = [64, 128, 256, 512]
            .into_iter()
            .zip(blocks)
            .enumerate()
            .map(|(i, (width, blocks))| GroupSpec { width, blocks, downsample: i > 0 })
            .collect();
        Architecture {
            input_filters: 64,
            layout: vec![
                LayerKind::Conv,
                LayerKind::Norm,
                LayerKind::Act,
                LayerKind::Conv,
                LayerKind::Norm,
                LayerKind::Act,
            ],
            groups,
        }
    }
}

/// What a model is built from: a grammar configuration or a named preset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    Config(ModelConfig),
    Preset(Preset),
}

impl ModelSpec {
    /// Accepts a preset name or a configuration string.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(p) = Preset::from_name(t) {
            return Ok(ModelSpec::Preset(p));
        }
        if t.starts_with("ResNet") {
            return Err(Error::UnknownPreset(t.to_string()));
        }
        parse_config(t).map(ModelSpec::Config)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        match self {
            ModelSpec::Config(cfg) => Architecture::from_config(cfg),
            ModelSpec::Preset(p) => Ok(p.architecture()),
        }
    }

    /// The four configuration fields; presets report their equivalent values.
    pub fn fields(&self) -> ModelConfig {
        match self {
            ModelSpec::Config(cfg) => cfg.clone(),
            ModelSpec::Preset(p) => p.architecture().to_config(),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Config(cfg) => write!(f, "{cfg}"),
            ModelSpec::Preset(p) => f.write_str(p.name()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelSpec::parse(s)
    }
}

impl From<ModelConfig> for ModelSpec {
    fn from(cfg: ModelConfig) -> Self {
        ModelSpec::Config(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSpec {
    pub width: usize,
    pub blocks: usize,
    /// Whether the group's first block halves the temporal length.
    pub downsample: bool,
}

/// Resolved network shape shared by configs and presets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_filters: usize,
    pub layout: Vec<LayerKind>,
    pub groups: Vec<GroupSpec>,
}

impl Architecture {
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let violations = validate(cfg);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(Architecture {
            input_filters: cfg.input_filters,
            layout: cfg.layout_kinds(),
            groups: cfg
                .filters
                .iter()
                .zip(&cfg.blocks)
                .map(|(&width, &blocks)| GroupSpec { width, blocks, downsample: true })
                .collect(),
        })
    }

    fn to_config(&self) -> ModelConfig {
        ModelConfig {
            input_filters: self.input_filters,
            layout: self.layout.iter().map(|k| k.symbol()).collect(),
            filters: self.groups.iter().map(|g| g.width).collect(),
            blocks: self.groups.iter().map(|g| g.blocks).collect(),
        }
    }

    /// Number of strided stages, including the stem.
    pub fn downsampling_stages(&self) -> usize {
        1 + self.groups.iter().filter(|g| g.downsample).count()
    }

    pub fn output_width(&self) -> usize {
        self.groups.last().map_or(self.input_filters, |g| g.width)
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let convs = self.layout.iter().filter(|&&k| k == LayerKind::Conv).count();
        let first_conv = self.layout.iter().position(|&k| k == LayerKind::Conv).unwrap_or(0);
        let norms_before = self.layout[..first_conv].iter().filter(|&&k| k == LayerKind::Norm).count();
        let norms_after = self.layout[first_conv..].iter().filter(|&&k| k == LayerKind::Norm).count();

        let c0 = self.input_filters;
        let mut total = STEM_KERNEL * c0 + 2 * c0;
        let mut c_in = c0;
        for g in &self.groups {
            let f = g.width;
            let k = BLOCK_KERNEL;
            let first = k * c_in * f
                + k * f * f * convs.saturating_sub(1)
                + 2 * f * norms_after
                + 2 * c_in * norms_before
                + if g.downsample || c_in != f { c_in * f } else { 0 };
            let rest = (g.blocks - 1) * (k * f * f * convs + 2 * f * norms_after + 2 * f * norms_before);
            total += first + rest;
            c_in = f;
        }
        total + NUM_CLASSES * c_in + NUM_CLASSES
    }
}

/// Closed-form parameter count of a configured network.
pub fn analytic_param_count(cfg: &ModelConfig) -> Result<usize> {
    Ok(Architecture::from_config(cfg)?.param_count())
}

pub fn build_model(cfg: &ModelConfig) -> Result<Network> {
    Network::new(&ModelSpec::Config(cfg.clone()), 0)
}

pub fn preset(name: &str) -> Result<Network> {
    let p = Preset::from_name(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    Network::new(&ModelSpec::Preset(p), 0)
}

/// Sum of element counts of all trainable tensors; running statistics are
/// not included.
pub fn count_parameters(net: &Network) -> usize {
    net.params().numel()
}
