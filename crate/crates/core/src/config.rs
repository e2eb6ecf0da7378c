//! Run configuration: one flat `section.key = value` document covering every
//! stage, plus `--set` style overrides.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::angle::GbcConfig;
use crate::distance::{LookMode, NetConfig};
use crate::domain::Grain;
use crate::error::{Error, Result};
use crate::ingest::FeatureMask;
use crate::scorer::{CostWeights, ScoringConfig};
use crate::synthgen::GeneratorConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct Paths {
    pub corpus: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    /// Drives the training split. Seed and id prefix are set per split.
    pub generator: GeneratorConfig,
    pub dev_events_per_class: usize,
    pub test_events_per_class: usize,
    pub gbc: GbcConfig,
    pub net: NetConfig,
    pub scoring: ScoringConfig,
    pub feature_mask: FeatureMask,
    pub look_mode: LookMode,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            generator: GeneratorConfig::default(),
            dev_events_per_class: 8,
            test_events_per_class: 16,
            gbc: GbcConfig::default(),
            net: NetConfig::default(),
            scoring: ScoringConfig::default(),
            feature_mask: FeatureMask::none(),
            look_mode: LookMode::Full,
            seed: 0,
        }
    }
}

/// Seed for a named stage: the first 8 bytes of SHA-256 over the master seed
/// and the stage name.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn parse_thresholds(key: &str, value: &str) -> Result<Vec<(Grain, f64)>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (grain, d) = item
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("{key}: expected grain:D, got {item:?}")))?;
            Ok((parse_value(key, grain)?, parse_value(key, d)?))
        })
        .collect()
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n + 1, format!("expected key = value, got {raw:?}")))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(n + 1, format!("duplicate key {key}")));
            }
            config
                .set(key, value.trim())
                .map_err(|e| Error::parse(n + 1, e.to_string()))?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies `key=value`, as given to `--set`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.generator;
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "paths.corpus" => self.paths.corpus = value.into(),
            "paths.models" => self.paths.models = value.into(),
            "paths.reports" => self.paths.reports = value.into(),
            "gen.events_per_class" => g.events_per_class = parse_value(key, value)?,
            "gen.dev_events_per_class" => self.dev_events_per_class = parse_value(key, value)?,
            "gen.test_events_per_class" => self.test_events_per_class = parse_value(key, value)?,
            "gen.grain_mix" => g.grain_mix = parse_value(key, value)?,
            "gen.shadowing_sigma" => g.shadowing_sigma = parse_value(key, value)?,
            "gen.sample_rate" => g.sample_rate = parse_value(key, value)?,
            "gen.look_step" => g.look_step = parse_value(key, value)?,
            "gen.missing_rate" => g.missing_rate = parse_value(key, value)?,
            "gen.yaw_noise" => g.yaw_noise = parse_value(key, value)?,
            "gen.magnetic_noise" => g.magnetic_noise = parse_value(key, value)?,
            "gen.carry_weights" => g.carry_weights = parse_list(key, value)?,
            "gen.pose_weights" => g.pose_weights = parse_list(key, value)?,
            "gen.coarse_tx" => g.coarse_params.tx_power = parse_value(key, value)?,
            "gen.coarse_exponent" => g.coarse_params.exponent = parse_value(key, value)?,
            "gen.fine_tx" => g.fine_params.tx_power = parse_value(key, value)?,
            "gen.fine_exponent" => g.fine_params.exponent = parse_value(key, value)?,
            "gbc.n_estimators" => self.gbc.n_estimators = parse_value(key, value)?,
            "gbc.learning_rate" => self.gbc.learning_rate = parse_value(key, value)?,
            "gbc.max_depth" => self.gbc.max_depth = parse_value(key, value)?,
            "gbc.min_samples_leaf" => self.gbc.min_samples_leaf = parse_value(key, value)?,
            "net.hidden_layers" => self.net.hidden_layers = parse_list(key, value)?,
            "net.learning_rate" => self.net.learning_rate = parse_value(key, value)?,
            "net.gamma" => self.net.gamma = parse_value(key, value)?,
            "net.step_size" => self.net.step_size = parse_value(key, value)?,
            "net.epochs" => self.net.epochs = parse_value(key, value)?,
            "net.batch_size" => self.net.batch_size = parse_value(key, value)?,
            "net.beta1" => self.net.beta1 = parse_value(key, value)?,
            "net.beta2" => self.net.beta2 = parse_value(key, value)?,
            "net.epsilon" => self.net.epsilon = parse_value(key, value)?,
            "scoring.thresholds" => self.scoring.thresholds = parse_thresholds(key, value)?,
            "scoring.w_miss" => self.scoring.weights.miss = parse_value(key, value)?,
            "scoring.w_fa" => self.scoring.weights.false_alarm = parse_value(key, value)?,
            "features.mask" => self.feature_mask = parse_value(key, value)?,
            "predict.look" => self.look_mode = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.dev_events_per_class < 1 || self.test_events_per_class < 1 {
            return Err(Error::Config(
                "dev and test events_per_class must be at least 1".into(),
            ));
        }
        self.gbc.validate()?;
        self.net.validate()?;
        self.scoring.validate()
    }

    /// Every key with its current value, in a fixed order. Feeding the
    /// output back through `from_text` reproduces the config.
    pub fn to_text(&self) -> String {
        let g = &self.generator;
        let CostWeights { miss, false_alarm } = self.scoring.weights;
        let thresholds: Vec<String> = self
            .scoring
            .thresholds
            .iter()
            .map(|(grain, d)| format!("{grain}:{d}"))
            .collect();
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("paths.corpus", self.paths.corpus.display().to_string()),
            ("paths.models", self.paths.models.display().to_string()),
            ("paths.reports", self.paths.reports.display().to_string()),
            ("gen.events_per_class", g.events_per_class.to_string()),
            ("gen.dev_events_per_class", self.dev_events_per_class.to_string()),
            ("gen.test_events_per_class", self.test_events_per_class.to_string()),
            ("gen.grain_mix", g.grain_mix.to_string()),
            ("gen.shadowing_sigma", g.shadowing_sigma.to_string()),
            ("gen.sample_rate", g.sample_rate.to_string()),
            ("gen.look_step", g.look_step.to_string()),
            ("gen.missing_rate", g.missing_rate.to_string()),
            ("gen.yaw_noise", g.yaw_noise.to_string()),
            ("gen.magnetic_noise", g.magnetic_noise.to_string()),
            ("gen.carry_weights", join(&g.carry_weights)),
            ("gen.pose_weights", join(&g.pose_weights)),
            ("gen.coarse_tx", g.coarse_params.tx_power.to_string()),
            ("gen.coarse_exponent", g.coarse_params.exponent.to_string()),
            ("gen.fine_tx", g.fine_params.tx_power.to_string()),
            ("gen.fine_exponent", g.fine_params.exponent.to_string()),
            ("gbc.n_estimators", self.gbc.n_estimators.to_string()),
            ("gbc.learning_rate", self.gbc.learning_rate.to_string()),
            ("gbc.max_depth", self.gbc.max_depth.to_string()),
            ("gbc.min_samples_leaf", self.gbc.min_samples_leaf.to_string()),
            ("net.hidden_layers", join(&self.net.hidden_layers)),
            ("net.learning_rate", self.net.learning_rate.to_string()),
            ("net.gamma", self.net.gamma.to_string()),
            ("net.step_size", self.net.step_size.to_string()),
            ("net.epochs", self.net.epochs.to_string()),
            ("net.batch_size", self.net.batch_size.to_string()),
            ("net.beta1", self.net.beta1.to_string()),
            ("net.beta2", self.net.beta2.to_string()),
            ("net.epsilon", self.net.epsilon.to_string()),
            ("scoring.thresholds", thresholds.join(", ")),
            ("scoring.w_miss", miss.to_string()),
            ("scoring.w_fa", false_alarm.to_string()),
            ("features.mask", self.feature_mask.to_string()),
            ("predict.look", self.look_mode.to_string()),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Hash of everything that shapes a trained model. Artifacts carry it so
    /// prediction can refuse models trained under a different setup.
    pub fn fingerprint(&self) -> String {
        let relevant: String = self
            .to_text()
            .lines()
            .filter(|l| {
                l.starts_with("seed ")
                    || l.starts_with("gbc.")
                    || l.starts_with("net.")
                    || l.starts_with("features.")
            })
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(relevant.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn gbc_config(&self) -> GbcConfig {
        GbcConfig {
            seed: stage_seed(self.seed, "gbc"),
            ..self.gbc.clone()
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            seed: stage_seed(self.seed, "net"),
            ..self.net.clone()
        }
    }
}
