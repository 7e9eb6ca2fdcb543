//! Run configuration and its plain `key = value` text form.
//!
//! Blank lines and lines starting with `#` are ignored. Every key maps to one
//! field of [`RunConfig`]; [`RunConfig::to_text`] emits all of them in a fixed
//! order, so a snapshot read back yields the same configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cluster::ClusterConfig;
use crate::error::{CoreError, Result};
use crate::gan::TrainConfig;
use crate::hybrid::HybridConfig;
use crate::resample::ContinuousConfig;
use crate::router::RoutingConfig;
use crate::trace::MissingPolicy;

pub const DEFAULT_SEGMENT_LEN: usize = 436;
pub const DEFAULT_SAMPLES_PER_CLUSTER: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub missing: MissingPolicy,
    pub segment_len: usize,
    pub routing: RoutingConfig,
    pub cluster: ClusterConfig,
    pub train: TrainConfig,
    pub continuous: ContinuousConfig,
    pub hybrid: HybridConfig,
    pub no_clusters: bool,
    pub shared_discriminator: bool,
    /// Epochs of the shared-discriminator fine-tuning phase.
    pub shared_epochs: usize,
    pub hybrid_continuous: bool,
    pub seed: u64,
    pub samples_per_cluster: usize,
    pub diversity_cap: usize,
    /// Divides every convolutional channel width; 1 keeps the full stack.
    pub conv_width_divisor: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            out_dir: PathBuf::new(),
            missing: MissingPolicy::default(),
            segment_len: DEFAULT_SEGMENT_LEN,
            routing: RoutingConfig::default(),
            cluster: ClusterConfig::default(),
            train: TrainConfig::default(),
            continuous: ContinuousConfig::default(),
            hybrid: HybridConfig::default(),
            no_clusters: false,
            shared_discriminator: false,
            shared_epochs: 100,
            hybrid_continuous: false,
            seed: 0,
            samples_per_cluster: DEFAULT_SAMPLES_PER_CLUSTER,
            diversity_cap: crate::metrics::DEFAULT_DIVERSITY_CAP,
            conv_width_divisor: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CoreError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CoreError::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

pub const CONFIG_KEYS: [&str; 37] = [
    "input",
    "out",
    "missing_policy",
    "segment_len",
    "seed",
    "samples_per_cluster",
    "diversity_cap",
    "no_clusters",
    "shared_discriminator",
    "shared_epochs",
    "hybrid_continuous",
    "prefix_len",
    "occupancy_threshold",
    "derivative_variance_threshold",
    "smoothing_window",
    "population_variance",
    "candidate_ks",
    "max_k",
    "max_iter",
    "tol",
    "epochs",
    "batch_size",
    "latent_dim",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "d_steps_per_g",
    "conv_width_divisor",
    "lstm_hidden",
    "lstm_layers",
    "max_surrogate_len",
    "window_len",
    "factor",
    "gamma",
    "spike_quantile",
    "spike_window",
];

/// Keys outside [`CONFIG_KEYS`] that are still accepted.
const EXTRA_KEYS: [&str; 1] = ["square_downsample"];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "input" => self.input = PathBuf::from(v),
            "out" => self.out_dir = PathBuf::from(v),
            "missing_policy" => self.missing = parse(key, v)?,
            "segment_len" => self.segment_len = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "samples_per_cluster" => self.samples_per_cluster = parse(key, v)?,
            "diversity_cap" => self.diversity_cap = parse(key, v)?,
            "no_clusters" => self.no_clusters = parse_bool(key, v)?,
            "shared_discriminator" => self.shared_discriminator = parse_bool(key, v)?,
            "shared_epochs" => self.shared_epochs = parse(key, v)?,
            "hybrid_continuous" => self.hybrid_continuous = parse_bool(key, v)?,
            "prefix_len" => self.routing.prefix_len = parse(key, v)?,
            "occupancy_threshold" => self.routing.occupancy_threshold = parse(key, v)?,
            "derivative_variance_threshold" => self.routing.derivative_variance_threshold = parse(key, v)?,
            "smoothing_window" => self.routing.smoothing_window = parse(key, v)?,
            "population_variance" => self.routing.population_variance = parse_bool(key, v)?,
            "candidate_ks" => {
                self.cluster.candidate_ks = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "max_k" => self.cluster.max_k = parse(key, v)?,
            "max_iter" => self.cluster.max_iter = parse(key, v)?,
            "tol" => self.cluster.tol = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "latent_dim" => self.train.latent_dim = parse(key, v)?,
            "learning_rate" => self.train.optim.learning_rate = parse(key, v)?,
            "beta1" => self.train.optim.beta1 = parse(key, v)?,
            "beta2" => self.train.optim.beta2 = parse(key, v)?,
            "epsilon" => self.train.optim.epsilon = parse(key, v)?,
            "d_steps_per_g" => self.train.d_steps_per_g = parse(key, v)?,
            "conv_width_divisor" => self.conv_width_divisor = parse(key, v)?,
            "lstm_hidden" => self.train.recurrent.hidden = parse(key, v)?,
            "lstm_layers" => self.train.recurrent.layers = parse(key, v)?,
            "max_surrogate_len" => self.continuous.max_surrogate_len = parse(key, v)?,
            "window_len" => self.continuous.window_len = parse(key, v)?,
            "factor" => {
                self.continuous.factor = match v {
                    "" | "auto" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "gamma" => self.hybrid.gamma = parse(key, v)?,
            "spike_quantile" => self.hybrid.quantile = parse(key, v)?,
            "spike_window" => self.hybrid.spike_window = parse(key, v)?,
            "square_downsample" => self.hybrid.square_downsample = parse(key, v)?,
            other => return Err(CoreError::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn is_known_key(key: &str) -> bool {
        CONFIG_KEYS.contains(&key) || EXTRA_KEYS.contains(&key)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CoreError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Every setting as `(key, value)` in [`CONFIG_KEYS`] order, followed by
    /// the remaining accepted keys.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let b = |v: bool| v.to_string();
        let ks: Vec<String> = self.cluster.candidate_ks.iter().map(usize::to_string).collect();
        vec![
            ("input", self.input.display().to_string()),
            ("out", self.out_dir.display().to_string()),
            ("missing_policy", self.missing.to_string()),
            ("segment_len", self.segment_len.to_string()),
            ("seed", self.seed.to_string()),
            ("samples_per_cluster", self.samples_per_cluster.to_string()),
            ("diversity_cap", self.diversity_cap.to_string()),
            ("no_clusters", b(self.no_clusters)),
            ("shared_discriminator", b(self.shared_discriminator)),
            ("shared_epochs", self.shared_epochs.to_string()),
            ("hybrid_continuous", b(self.hybrid_continuous)),
            ("prefix_len", self.routing.prefix_len.to_string()),
            ("occupancy_threshold", self.routing.occupancy_threshold.to_string()),
            ("derivative_variance_threshold", self.routing.derivative_variance_threshold.to_string()),
            ("smoothing_window", self.routing.smoothing_window.to_string()),
            ("population_variance", b(self.routing.population_variance)),
            ("candidate_ks", ks.join(",")),
            ("max_k", self.cluster.max_k.to_string()),
            ("max_iter", self.cluster.max_iter.to_string()),
            ("tol", self.cluster.tol.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("latent_dim", self.train.latent_dim.to_string()),
            ("learning_rate", self.train.optim.learning_rate.to_string()),
            ("beta1", self.train.optim.beta1.to_string()),
            ("beta2", self.train.optim.beta2.to_string()),
            ("epsilon", self.train.optim.epsilon.to_string()),
            ("d_steps_per_g", self.train.d_steps_per_g.to_string()),
            ("conv_width_divisor", self.conv_width_divisor.to_string()),
            ("lstm_hidden", self.train.recurrent.hidden.to_string()),
            ("lstm_layers", self.train.recurrent.layers.to_string()),
            ("max_surrogate_len", self.continuous.max_surrogate_len.to_string()),
            ("window_len", self.continuous.window_len.to_string()),
            ("factor", self.continuous.factor.map_or("auto".into(), |f| f.to_string())),
            ("gamma", self.hybrid.gamma.to_string()),
            ("spike_quantile", self.hybrid.quantile.to_string()),
            ("spike_window", self.hybrid.spike_window.to_string()),
            ("square_downsample", self.hybrid.square_downsample.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Train configuration with the channel divisor applied.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.conv = t.conv.scaled(self.conv_width_divisor);
        t
    }

    pub fn validate(&self) -> Result<()> {
        self.routing.validate()?;
        self.cluster.validate()?;
        self.train.validate()?;
        self.continuous.validate()?;
        self.hybrid.validate()?;
        if self.segment_len < 4 {
            return Err(CoreError::Config("segment_len must be >= 4".into()));
        }
        if self.samples_per_cluster == 0 || self.diversity_cap < 2 || self.conv_width_divisor == 0 {
            return Err(CoreError::Config(
                "samples_per_cluster and conv_width_divisor must be >= 1, diversity_cap >= 2".into(),
            ));
        }
        if self.shared_discriminator && self.shared_epochs == 0 {
            return Err(CoreError::Config("shared_epochs must be >= 1".into()));
        }
        Ok(())
    }
}
