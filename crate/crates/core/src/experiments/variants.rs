use serde::Serialize;

use crate::env::{EnvConfig, FeatureMask};
use crate::error::ConfigError;
use crate::trainer::{TbnuMode, TrainConfig};

/// A named combination of history length, observed features and replay scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariantSpec {
    pub name: &'static str,
    pub history_len: usize,
    pub features: FeatureMask,
    pub tbnu: bool,
}

const CATALOG: [VariantSpec; 6] = [
    VariantSpec {
        name: "1obs",
        history_len: 1,
        features: FeatureMask::ALL,
        tbnu: false,
    },
    VariantSpec {
        name: "1obs_noddf",
        history_len: 1,
        features: FeatureMask::NO_DDF,
        tbnu: false,
    },
    VariantSpec {
        name: "1obs_tbnu",
        history_len: 1,
        features: FeatureMask::ALL,
        tbnu: true,
    },
    VariantSpec {
        name: "3obs_tbnu",
        history_len: 3,
        features: FeatureMask::ALL,
        tbnu: true,
    },
    VariantSpec {
        name: "3obs_noddf_tbnu",
        history_len: 3,
        features: FeatureMask::NO_DDF,
        tbnu: true,
    },
    VariantSpec {
        name: "5obs_tbnu",
        history_len: 5,
        features: FeatureMask::ALL,
        tbnu: true,
    },
];

pub fn variant_catalog() -> &'static [VariantSpec] {
    &CATALOG
}

impl VariantSpec {
    pub fn by_name(name: &str) -> Result<Self, ConfigError> {
        CATALOG
            .iter()
            .copied()
            .find(|v| v.name == name)
            .ok_or_else(|| ConfigError::UnknownVariant(name.to_string()))
    }

    /// Writes the variant's settings into the environment and trainer
    /// configurations. A TBNU variant keeps an explicitly chosen sequential
    /// mode; otherwise balanced batches are used.
    pub fn apply(&self, env: &mut EnvConfig, train: &mut TrainConfig) {
        env.history_len = self.history_len;
        env.features = self.features;
        train.tbnu = match (self.tbnu, train.tbnu) {
            (false, _) => TbnuMode::Off,
            (true, TbnuMode::Sequential) => TbnuMode::Sequential,
            (true, _) => TbnuMode::Balanced,
        };
    }
}
