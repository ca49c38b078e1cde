use serde::{Deserialize, Serialize};

use crate::bout::{locate_largest_bout, Window};
use crate::error::{Error, Result};
use crate::filter::{bandpass_all, FilterSpec};
use crate::signal::{synth_single_pulse, ConcentrationLevel, SensorModel};

/// Global trigger length (seconds) for both variants.
///
/// Smallest half-second step for which, on the default sensor model, every
/// noiseless C1 pulse produces its slope-detection onset inside the first
/// 75 % of the trigger in both variants, and every slope-detection pulse of
/// the two-whiff plume falls before its ungated trigger resets (see the
/// `trigger_duration_sweep` test).
pub const DEFAULT_TRIGGER_DURATION: f64 = 1.5;

/// Slope-detection threshold as a fraction of the smallest noiseless C1 bout amplitude.
pub const SD_FRACTION_OF_C1_BOUT: f64 = 0.3;

/// Change-detection threshold as a fraction of the smallest noiseless C1 bout amplitude.
pub const CD_FRACTION_OF_C1_BOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Slope detection AND-gated with the global trigger.
    SinglePulseGated,
    /// No gates; the faster high-pass lets SD fall before the trigger resets.
    PlumeUngated,
}

impl Variant {
    pub fn default_filter(self) -> FilterSpec {
        match self {
            Variant::SinglePulseGated => FilterSpec::SINGLE_PULSE,
            Variant::PlumeUngated => FilterSpec::PLUME_FRONT_END,
        }
    }

    pub fn is_gated(self) -> bool {
        matches!(self, Variant::SinglePulseGated)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "single_pulse_gated" | "single_pulse" | "gated" => Ok(Self::SinglePulseGated),
            "plume_ungated" | "plume" | "ungated" => Ok(Self::PlumeUngated),
            _ => Err(Error::InvalidArgument(format!("unknown variant {s:?}"))),
        }
    }
}

/// One threshold for every sensor, or one per sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Scalar(f64),
    PerSensor(Vec<f64>),
}

impl Threshold {
    pub fn for_sensor(&self, k: usize) -> Result<f64> {
        match self {
            Threshold::Scalar(v) => Ok(*v),
            Threshold::PerSensor(v) => v.get(k).copied().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "sd_threshold lists {} sensors but sensor {} was requested",
                    v.len(),
                    k + 1
                ))
            }),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Threshold::Scalar(v) => std::slice::from_ref(v),
            Threshold::PerSensor(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEndConfig {
    pub variant: Variant,
    pub filter: FilterSpec,
    pub cd_threshold: f64,
    pub sd_threshold: Threshold,
    #[serde(rename = "trigger_duration_s")]
    pub trigger_duration: f64,
    #[serde(rename = "refractory_s")]
    pub refractory: f64,
}

impl FrontEndConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("cd_threshold", self.cd_threshold)?;
        positive("trigger_duration", self.trigger_duration)?;
        if self.sd_threshold.values().is_empty() {
            return Err(Error::InvalidArgument("sd_threshold list is empty".into()));
        }
        for &v in self.sd_threshold.values() {
            positive("sd_threshold", v)?;
        }
        if !(self.refractory.is_finite() && self.refractory >= self.trigger_duration) {
            return Err(Error::InvalidArgument(format!(
                "refractory ({}) must be at least trigger_duration ({})",
                self.refractory, self.trigger_duration
            )));
        }
        Ok(())
    }

    /// Defaults for `variant`, with thresholds derived from noiseless C1
    /// pulses of `model`: for each sensor, the SD threshold is 30 % of its
    /// smallest C1 bout amplitude over all gases; the CD threshold is 10 %
    /// of the smallest C1 bout amplitude over every gas and sensor.
    pub fn calibrated(variant: Variant, model: &SensorModel) -> Result<Self> {
        let filter = variant.default_filter();
        let amplitudes = c1_bout_amplitudes(model, filter)?;
        let per_sensor: Vec<f64> = (0..model.sensors.len())
            .map(|k| {
                amplitudes
                    .iter()
                    .map(|a| a[k])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let overall = per_sensor.iter().copied().fold(f64::INFINITY, f64::min);
        let config = Self {
            variant,
            filter,
            cd_threshold: CD_FRACTION_OF_C1_BOUT * overall,
            sd_threshold: Threshold::PerSensor(
                per_sensor
                    .iter()
                    .map(|a| SD_FRACTION_OF_C1_BOUT * a)
                    .collect(),
            ),
            trigger_duration: DEFAULT_TRIGGER_DURATION,
            refractory: DEFAULT_TRIGGER_DURATION,
        };
        config.validate()?;
        Ok(config)
    }
}

/// `[gas][sensor]` bout amplitude of noiseless C1 pulses after `filter`.
fn c1_bout_amplitudes(model: &SensorModel, filter: FilterSpec) -> Result<Vec<Vec<f64>>> {
    let gases = model.gases();
    if gases.is_empty() {
        return Err(Error::InvalidArgument("sensor model has no gases".into()));
    }
    gases
        .iter()
        .map(|gas| {
            let raw = synth_single_pulse(model, gas, ConcentrationLevel::C1, 0.0, 0)?;
            bandpass_all(&raw, filter)?
                .iter()
                .map(|f| {
                    let b = locate_largest_bout(f, Window::covering(f))?;
                    Ok(b.max_value - b.min_value)
                })
                .collect()
        })
        .collect()
}
