use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gimefive,
    Resnet18,
    Resnet34,
    Vgg16bn,
}

/// Pooling that collapses the last feature map before the classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalPool {
    #[default]
    AdaptiveAvg,
    Max,
}

/// Declarative description of an architecture.
///
/// The first six fields form the checkpoint header; the remaining ones only
/// matter for GiMeFive variants explored by the hyperparameter grid and
/// default to the published configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub conv_blocks: usize,
    pub use_se: bool,
    pub use_dropout: bool,
    pub num_classes: usize,
    pub input_shape: [usize; 3],
    #[serde(default = "default_fc_layers")]
    pub fc_layers: usize,
    #[serde(default = "default_true")]
    pub batch_norm: bool,
    #[serde(default)]
    pub global_pool: GlobalPool,
    #[serde(default = "default_conv_dropout")]
    pub conv_dropout: f64,
    #[serde(default = "default_fc_dropout")]
    pub fc_dropout: f64,
}

fn default_fc_layers() -> usize {
    3
}
fn default_true() -> bool {
    true
}
fn default_conv_dropout() -> f64 {
    0.2
}
fn default_fc_dropout() -> f64 {
    0.5
}

/// Architecture names accepted by [`ModelSpec::from_arch`].
pub const ARCH_NAMES: &[&str] =
    &["gimefive13", "gimefive15", "gimefive15nodo", "gimefive16se", "gimefive17", "resnet18", "resnet34", "vgg16bn"];

impl ModelSpec {
    pub fn gimefive(conv_blocks: usize) -> Self {
        ModelSpec {
            family: Family::Gimefive,
            conv_blocks,
            use_se: false,
            use_dropout: true,
            num_classes: NUM_CLASSES,
            input_shape: [3, 64, 64],
            fc_layers: 3,
            batch_norm: true,
            global_pool: GlobalPool::AdaptiveAvg,
            conv_dropout: 0.2,
            fc_dropout: 0.5,
        }
    }

    fn other(family: Family) -> Self {
        ModelSpec { family, conv_blocks: 0, ..Self::gimefive(5) }
    }

    /// Looks up one of the named architectures.
    pub fn from_arch(name: &str) -> Result<Self> {
        let key: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect();
        Ok(match key.as_str() {
            "gimefive13" | "baseline13" | "baseline" => ModelSpec { use_dropout: false, ..Self::gimefive(4) },
            "gimefive15" | "gimefive" => Self::gimefive(5),
            "gimefive15nodo" => ModelSpec { use_dropout: false, ..Self::gimefive(5) },
            "gimefive16se" | "gimefive16" => ModelSpec { use_se: true, use_dropout: false, ..Self::gimefive(5) },
            "gimefive17" => ModelSpec { use_dropout: false, ..Self::gimefive(6) },
            "resnet18" => Self::other(Family::Resnet18),
            "resnet34" => Self::other(Family::Resnet34),
            "vgg16bn" | "vgg16" | "vgg" => Self::other(Family::Vgg16bn),
            _ => return Err(Error::config(format!("unknown architecture {name:?}; known: {}", ARCH_NAMES.join(", ")))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != NUM_CLASSES {
            return Err(Error::config(format!("num_classes must be {NUM_CLASSES}, got {}", self.num_classes)));
        }
        if self.input_shape[0] != 3 {
            return Err(Error::config("models take 3-channel input"));
        }
        for rate in [self.conv_dropout, self.fc_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
            }
        }
        let [_, h, w] = self.input_shape;
        match self.family {
            Family::Gimefive => {
                if !(1..=6).contains(&self.conv_blocks) {
                    return Err(Error::config(format!("GiMeFive has 1 to 6 conv blocks, got {}", self.conv_blocks)));
                }
                if !(1..=3).contains(&self.fc_layers) {
                    return Err(Error::config(format!("GiMeFive has 1 to 3 linear layers, got {}", self.fc_layers)));
                }
                let div = 1 << self.conv_blocks;
                if h % div != 0 || w % div != 0 {
                    return Err(Error::config(format!("input {h}x{w} is not divisible by {div}")));
                }
                if self.use_se && !self.batch_norm {
                    return Err(Error::config("the squeeze-excitation block sits after batch norm"));
                }
            }
            Family::Vgg16bn => {
                if h % 32 != 0 || w % 32 != 0 {
                    return Err(Error::config(format!("VGG input {h}x{w} is not divisible by 32")));
                }
            }
            Family::Resnet18 | Family::Resnet34 => {
                if h < 32 || w < 32 {
                    return Err(Error::config("ResNet input must be at least 32x32"));
                }
            }
        }
        Ok(())
    }

    /// Channel width of GiMeFive conv block `i` (0-based).
    pub fn block_channels(i: usize) -> usize {
        64 << i
    }
}
