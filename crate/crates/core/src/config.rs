//! Sectioned run configuration and checkpoint files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::EnvConfig;
use crate::error::ConfigError;
use crate::experiments::{DemoConfig, RampSchedule, VariantSpec, TRACKING_ANGLES_DEG};
use crate::nn::{AdamState, Mlp, MlpRecord};
use crate::sim::SimConfig;
use crate::trainer::{Agent, TrainConfig};

pub const SECTIONS: [&str; 4] = ["sim", "env", "train", "experiment"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub variant: String,
    /// Evaluation rollouts for standalone scoring.
    pub eval_rollouts: usize,
    pub tracking_angles_deg: Vec<f64>,
    pub ramp: RampSchedule,
    pub demo: DemoConfig,
    pub curve_window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: "3obs_tbnu".into(),
            eval_rollouts: 50,
            tracking_angles_deg: TRACKING_ANGLES_DEG.to_vec(),
            ramp: RampSchedule::default(),
            demo: DemoConfig::default(),
            curve_window: 10,
        }
    }
}

/// The whole run configuration. `env` excludes the simulator, which lives in
/// its own section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub sim: SimConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn variant(&self) -> Result<VariantSpec, ConfigError> {
        VariantSpec::by_name(&self.experiment.variant)
    }

    /// Environment and trainer settings with the simulator and the variant
    /// folded in.
    pub fn resolved(&self) -> Result<(EnvConfig, TrainConfig), ConfigError> {
        let mut env = self.env.clone();
        env.sim = self.sim.clone();
        let mut train = self.train.clone();
        self.variant()?.apply(&mut env, &mut train);
        Ok((env, train))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (env, train) = self.resolved()?;
        env.validate()?;
        train.validate()?;
        let x = &self.experiment;
        if x.eval_rollouts == 0 {
            return Err(ConfigError::invalid("experiment.eval_rollouts", "must be positive"));
        }
        if x.curve_window == 0 {
            return Err(ConfigError::invalid("experiment.curve_window", "must be positive"));
        }
        if x.ramp.hold_steps == 0 || x.ramp.step < 0.0 || x.ramp.start <= 0.0 || x.ramp.end <= 0.0 {
            return Err(ConfigError::invalid(
                "experiment.ramp",
                "needs hold_steps > 0, step >= 0 and positive forces",
            ));
        }
        let b = x.demo.box_model;
        if !(b.weight >= 0.0 && b.mu_contact >= 0.0 && b.mu_ground >= 0.0) {
            return Err(ConfigError::invalid("experiment.demo.box_model", "must be non-negative"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn total_steps(&self) -> usize {
        self.train.epochs * self.train.rollouts_per_epoch * self.env.horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: Config,
    /// Top-level sections absent from the file and filled with defaults.
    pub defaulted: Vec<String>,
}

/// Parses and validates TOML text. Errors carry the 1-based line of the
/// offending key when it can be found.
pub fn parse_config(text: &str, origin: &Path) -> Result<LoadedConfig, ConfigError> {
    let config: Config = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        ConfigError::Parse {
            path: origin.to_path_buf(),
            message: match line {
                Some(l) => format!("line {l}: {}", e.message()),
                None => e.message().to_string(),
            },
        }
    })?;
    let table: toml::Table = toml::from_str(text).expect("parsed once already");
    let defaulted = SECTIONS
        .iter()
        .filter(|s| !table.contains_key(**s))
        .map(|s| s.to_string())
        .collect();
    config.validate().map_err(|e| match e {
        ConfigError::Invalid { key, message } => {
            let at = locate_key(text, &key).map_or(String::new(), |l| format!("line {l}: "));
            ConfigError::Parse {
                path: origin.to_path_buf(),
                message: format!("{at}invalid `{key}`: {message}"),
            }
        }
        ConfigError::UnknownVariant(v) => {
            let at = locate_key(text, "experiment.variant").map_or(String::new(), |l| format!("line {l}: "));
            ConfigError::Parse {
                path: origin.to_path_buf(),
                message: format!("{at}{}", ConfigError::UnknownVariant(v)),
            }
        }
        other => other,
    })?;
    Ok(LoadedConfig { config, defaulted })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of a dotted key such as `env.dr.goal_force`, matched as a
/// `[env.dr]` header followed by `goal_force =`, or by a header for a
/// shorter prefix with the remainder written as a dotted key. Falls back to
/// the deepest matching section header.
fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let parts: Vec<&str> = dotted.split('.').collect();
    let mut section = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') && line.ends_with(']') {
            section = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if dotted == section || dotted.starts_with(&format!("{section}.")) {
                header_line = Some(i + 1);
            }
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let full = if section.is_empty() {
            key.trim().to_string()
        } else {
            format!("{section}.{}", key.trim())
        };
        let full: String = full.split('.').map(str::trim).collect::<Vec<_>>().join(".");
        if full == dotted || parts.len() > 1 && dotted.starts_with(&format!("{full}.")) {
            return Some(i + 1);
        }
    }
    header_line
}

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Networks, optimizer moments and the configuration they were trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub epoch: usize,
    pub variant: String,
    pub config: Config,
    pub a_max: f64,
    pub actor: MlpRecord,
    pub critic: MlpRecord,
    pub actor_target: MlpRecord,
    pub critic_target: MlpRecord,
    pub actor_optimizer: AdamState,
    pub critic_optimizer: AdamState,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint format {0}")]
    Version(u32),
    #[error(transparent)]
    Network(#[from] crate::nn::NeuralError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Checkpoint {
    pub fn capture(agent: &Agent, config: &Config, epoch: usize) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT,
            epoch,
            variant: config.experiment.variant.clone(),
            config: config.clone(),
            a_max: agent.a_max,
            actor: agent.actor.to_record(),
            critic: agent.critic.to_record(),
            actor_target: agent.actor_target.to_record(),
            critic_target: agent.critic_target.to_record(),
            actor_optimizer: agent.actor_opt.clone(),
            critic_optimizer: agent.critic_opt.clone(),
        }
    }

    pub fn agent(&self) -> Result<Agent, CheckpointError> {
        Ok(Agent {
            actor: Mlp::from_record(&self.actor)?,
            critic: Mlp::from_record(&self.critic)?,
            actor_target: Mlp::from_record(&self.actor_target)?,
            critic_target: Mlp::from_record(&self.critic_target)?,
            actor_opt: self.actor_optimizer.clone(),
            critic_opt: self.critic_optimizer.clone(),
            a_max: self.a_max,
        })
    }

    pub fn actor(&self) -> Result<Mlp, CheckpointError> {
        Ok(Mlp::from_record(&self.actor)?)
    }

    /// Environment the networks were trained in, variant applied.
    pub fn env_config(&self) -> Result<EnvConfig, CheckpointError> {
        Ok(self.config.resolved()?.0)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ck: Self = serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
        if ck.format_version != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Version(ck.format_version));
        }
        if ck.actor.spec.input_dim() != ck.env_config()?.obs_dim() {
            return Err(CheckpointError::Format("actor input width does not match the observation".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parse(text: &str) -> Result<LoadedConfig, ConfigError> {
        parse_config(text, Path::new("test.toml"))
    }

    #[test]
    fn protocol_config_is_accepted() {
        let loaded = parse("[env]\nhorizon = 60\n[train]\nepochs = 400\nrollouts_per_epoch = 100\n").unwrap();
        assert_eq!(loaded.config.total_steps(), 2_400_000);
        assert_eq!(loaded.defaulted, vec!["sim", "experiment"]);
    }

    #[test]
    fn empty_file_defaults_every_section() {
        let loaded = parse("").unwrap();
        assert_eq!(loaded.config, Config::default());
        assert_eq!(loaded.defaulted.len(), 4);
    }

    #[test]
    fn offset_bound_above_accumulator_bound_is_rejected_with_line() {
        let err = parse("# comment\n[env]\nhorizon = 60\na_max = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("a_max"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let err = parse("[train]\nepochs = 3\nlearning_rat = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse("[simulation]\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_variant_is_rejected() {
        let err = parse("[experiment]\nvariant = \"7obs\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("7obs"), "{err}");
    }

    #[test]
    fn nested_keys_are_located() {
        let text = "[env.dr]\ngoal_force = [5.0, 1.0]\n";
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let mut c = Config::default();
        c.train.seed = 17;
        let back = parse(&c.to_toml()).unwrap().config;
        assert_eq!(back, c);
        assert_eq!(back.content_hash(), c.content_hash());
        assert_ne!(Config::default().content_hash(), c.content_hash());
        assert_eq!(c.content_hash().len(), 64);
    }

    #[test]
    fn checkpoint_bytes_round_trip() {
        let config = Config::default();
        let (env, train) = config.resolved().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = Agent::new(env.obs_dim(), env.a_max, train.actor_adam, train.critic_adam, &mut rng);
        let json = Checkpoint::capture(&agent, &config, 12).to_json();
        let back = Checkpoint::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert_eq!(back.agent().unwrap(), agent);
        assert_eq!(back.epoch, 12);
    }

    #[test]
    fn checkpoint_with_wrong_width_is_rejected() {
        let config = Config::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = Agent::new(5, 0.02, Default::default(), Default::default(), &mut rng);
        let json = Checkpoint::capture(&agent, &config, 1).to_json();
        assert!(Checkpoint::from_json(&json).is_err());
        assert!(Checkpoint::from_json("{").is_err());
    }
}
