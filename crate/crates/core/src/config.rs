//! Layered run configuration: TOML file, then `MOXFRONT_*` environment
//! variables, then command-line flags.
//!
//! An environment variable names a key path with `__` between table levels,
//! so `MOXFRONT_FRONTEND__CD_THRESHOLD=0.01` sets `frontend.cd_threshold` and
//! `MOXFRONT_SEED=3` sets `seed`. Values are read as TOML literals and fall
//! back to plain strings, so `MOXFRONT_FRONTEND__VARIANT=plume_ungated` works
//! without quotes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bout::Window;
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::frontend::{FrontEndConfig, Threshold, Variant};
use crate::signal::SensorModel;

pub const ENV_PREFIX: &str = "MOXFRONT_";

/// Front-end settings; anything left out is derived from the sensor model
/// by [`FrontEndConfig::calibrated`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontEndSection {
    pub variant: Option<Variant>,
    pub filter: Option<FilterSpec>,
    pub cd_threshold: Option<f64>,
    pub sd_threshold: Option<Threshold>,
    pub trigger_duration_s: Option<f64>,
    pub refractory_s: Option<f64>,
}

/// Bout analysis and decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Band-pass used for bout slopes of single-pulse recordings.
    pub single_pulse_filter: FilterSpec,
    /// Band-pass used for bout slopes of plume recordings.
    pub plume_filter: FilterSpec,
    /// Peak windows for plume recordings.
    pub plume_windows: Vec<Window>,
    /// Concentration level at which gas recognition is trained and tested.
    pub recognition_level: String,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            single_pulse_filter: FilterSpec::SINGLE_PULSE,
            plume_filter: FilterSpec::PLUME_ANALYSIS,
            plume_windows: vec![Window::PEAK_1, Window::PEAK_2],
            recognition_level: "C5".into(),
        }
    }
}

/// Synthetic recording settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub trials: u32,
    pub noise_sigma: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            trials: 5,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub frontend: FrontEndSection,
    pub analysis: AnalysisSection,
    pub synth: SynthSection,
    pub model: SensorModel,
}

impl AppConfig {
    /// Reads `file` (if any) and applies `MOXFRONT_*` entries from `env`.
    pub fn load<I>(file: Option<&Path>, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match file {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                text.parse::<toml::Table>().map_err(|e| Error::Format {
                    path: path.to_owned(),
                    message: e.to_string(),
                })?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        overrides.sort();
        for (key, value) in overrides {
            apply_env(&mut table, &key[ENV_PREFIX.len()..], &value)?;
        }
        let config: AppConfig =
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| {
                    Error::InvalidArgument(format!("config: {}", e.message()))
                })?;
        config.validate()?;
        Ok(config)
    }

    /// Same as [`AppConfig::load`] with the process environment.
    pub fn load_with_process_env(file: Option<&Path>) -> Result<Self> {
        Self::load(file, std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.analysis.single_pulse_filter.validate()?;
        self.analysis.plume_filter.validate()?;
        if self.jobs == Some(0) {
            return Err(Error::InvalidArgument("jobs must be at least 1".into()));
        }
        if !(self.synth.noise_sigma >= 0.0 && self.synth.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be non-negative, got {}",
                self.synth.noise_sigma
            )));
        }
        self.recognition_level()?;
        Ok(())
    }

    pub fn recognition_level(&self) -> Result<crate::signal::ConcentrationLevel> {
        self.analysis.recognition_level.parse()
    }

    pub fn variant(&self) -> Variant {
        self.frontend.variant.unwrap_or(Variant::SinglePulseGated)
    }

    /// Front-end settings for `variant`: calibrated defaults with every
    /// explicit setting from the `frontend` table laid over them.
    pub fn frontend_for(&self, variant: Variant) -> Result<FrontEndConfig> {
        let f = &self.frontend;
        let mut c = FrontEndConfig::calibrated(variant, &self.model)?;
        if let Some(v) = f.filter {
            c.filter = v;
        }
        if let Some(v) = f.cd_threshold {
            c.cd_threshold = v;
        }
        if let Some(v) = &f.sd_threshold {
            c.sd_threshold = v.clone();
        }
        if let Some(v) = f.trigger_duration_s {
            c.trigger_duration = v;
            c.refractory = c.refractory.max(v);
        }
        if let Some(v) = f.refractory_s {
            c.refractory = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn apply_env(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let path: Vec<String> = key.split("__").map(|p| p.to_ascii_lowercase()).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::InvalidArgument(format!(
            "bad override {ENV_PREFIX}{key}"
        )));
    }
    let value = parse_env_value(raw);
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            Error::InvalidArgument(format!("{ENV_PREFIX}{key}: {p} is not a table"))
        })?;
    }
    node.insert(last.clone(), value);
    Ok(())
}

fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
