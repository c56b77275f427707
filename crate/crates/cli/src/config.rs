use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sphmm_core::recognizer::ModelKind;
use sphmm_core::sphmm::SupraFeatures;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_STATES: usize = 9;
pub const DEFAULT_MIXTURES: usize = 5;
pub const DEFAULT_SUPRA_MIXTURES: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_SPEAKERS: u32 = 30;
pub const DEFAULT_SENTENCES: u32 = 8;
pub const DEFAULT_SEPARATION: f64 = 1.0;

/// Which identifiers `evaluate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Chmm2,
    Sphmm,
    Both,
}

impl ModelChoice {
    pub fn kinds(self) -> &'static [ModelKind] {
        match self {
            ModelChoice::Chmm2 => &[ModelKind::Chmm2],
            ModelChoice::Sphmm => &[ModelKind::Sphmm],
            ModelChoice::Both => ModelKind::ALL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeatureChoice {
    Relative,
    Raw,
}

impl From<FeatureChoice> for SupraFeatures {
    fn from(c: FeatureChoice) -> Self {
        match c {
            FeatureChoice::Relative => SupraFeatures::UtteranceRelative,
            FeatureChoice::Raw => SupraFeatures::Raw,
        }
    }
}

/// Settings read from a TOML file. Every key is optional; command-line
/// flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub states: Option<usize>,
    pub mixtures: Option<usize>,
    pub supra_mixtures: Option<usize>,
    pub supra_features: Option<FeatureChoice>,
    pub alpha: Option<f64>,
    pub model: Option<ModelChoice>,
    pub speakers: Option<u32>,
    pub sentences: Option<u32>,
    pub separation: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// First of flag, file value, default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn check_alpha(alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        bail!("--alpha must lie in [0, 1], got {alpha}");
    }
    Ok(alpha)
}
