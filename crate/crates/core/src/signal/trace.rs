use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensing chemistry of a MOx channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChannelKind {
    Red,
    Ox,
    #[default]
    Other,
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RED" => Ok(Self::Red),
            "OX" => Ok(Self::Ox),
            "OTHER" => Ok(Self::Other),
            _ => Err(Error::InvalidArgument(format!(
                "unknown channel kind {s:?}"
            ))),
        }
    }
}

/// Odorant label. Ordering is the tie-break order used by the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GasLabel {
    /// Ethyl butyrate.
    EB,
    /// Eucalyptol.
    Eu,
    /// Isoamyl acetate.
    IA,
    Other(String),
}

impl GasLabel {
    pub const KNOWN: [GasLabel; 3] = [GasLabel::EB, GasLabel::Eu, GasLabel::IA];

    pub fn as_str(&self) -> &str {
        match self {
            GasLabel::EB => "EB",
            GasLabel::Eu => "Eu",
            GasLabel::IA => "IA",
            GasLabel::Other(s) => s,
        }
    }
}

impl fmt::Display for GasLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GasLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty gas label".into()));
        }
        Ok(match s {
            "EB" => GasLabel::EB,
            "Eu" => GasLabel::Eu,
            "IA" => GasLabel::IA,
            other => GasLabel::Other(other.to_string()),
        })
    }
}

impl Serialize for GasLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for GasLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Delivered concentration, in steps of 20 % of the highest concentration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConcentrationLevel {
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl ConcentrationLevel {
    pub const ALL: [ConcentrationLevel; 5] = [Self::C1, Self::C2, Self::C3, Self::C4, Self::C5];

    /// 1-based level index.
    pub fn index(self) -> u8 {
        self as u8 + 1
    }

    pub fn percent(self) -> f64 {
        20.0 * f64::from(self.index())
    }

    pub fn from_percent(percent: f64) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| (l.percent() - percent).abs() < 1e-9)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("{percent} % is not one of 20, 40, 60, 80, 100"))
            })
    }
}

impl fmt::Display for ConcentrationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.index())
    }
}

impl FromStr for ConcentrationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(Self::C1),
            "C2" => Ok(Self::C2),
            "C3" => Ok(Self::C3),
            "C4" => Ok(Self::C4),
            "C5" => Ok(Self::C5),
            _ => s
                .trim_end_matches('%')
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad concentration level {s:?}")))
                .and_then(Self::from_percent),
        }
    }
}

/// Concentration annotation of a trial. Plume trials are sometimes only
/// bracketed between two levels; those labels are kept but never resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConcentrationLabel {
    Level(ConcentrationLevel),
    Between(ConcentrationLevel, ConcentrationLevel),
}

impl ConcentrationLabel {
    pub fn level(self) -> Option<ConcentrationLevel> {
        match self {
            ConcentrationLabel::Level(l) => Some(l),
            ConcentrationLabel::Between(..) => None,
        }
    }
}

impl fmt::Display for ConcentrationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcentrationLabel::Level(l) => write!(f, "{l}"),
            ConcentrationLabel::Between(lo, hi) => write!(f, "{lo}-{hi}"),
        }
    }
}

impl FromStr for ConcentrationLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('-') {
            Some((lo, hi)) if !lo.is_empty() => {
                let (lo, hi) = (lo.parse()?, hi.parse()?);
                if lo >= hi {
                    return Err(Error::InvalidArgument(format!(
                        "empty concentration range {s:?}"
                    )));
                }
                Ok(ConcentrationLabel::Between(lo, hi))
            }
            _ => Ok(ConcentrationLabel::Level(s.parse()?)),
        }
    }
}

impl Serialize for ConcentrationLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConcentrationLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct LabelVisitor;

        impl serde::de::Visitor<'_> for LabelVisitor {
            type Value = ConcentrationLabel;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a level (\"C3\"), a percent (60) or a range (\"C2-C3\")")
            }

            fn visit_str<E: serde::de::Error>(
                self,
                v: &str,
            ) -> std::result::Result<Self::Value, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                ConcentrationLevel::from_percent(v)
                    .map(ConcentrationLabel::Level)
                    .map_err(E::custom)
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }
        }

        d.deserialize_any(LabelVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    #[default]
    SinglePulse,
    Plume,
}

impl FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "single_pulse" | "singlepulse" | "pulse" => Ok(Self::SinglePulse),
            "plume" => Ok(Self::Plume),
            _ => Err(Error::InvalidArgument(format!("unknown environment {s:?}"))),
        }
    }
}

/// Trial annotations shared by every channel of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TraceMeta {
    pub gas_primary: Option<GasLabel>,
    #[serde(default)]
    pub gas_secondary: Option<GasLabel>,
    #[serde(default)]
    pub trial: Option<u32>,
    #[serde(default)]
    pub concentration: Option<ConcentrationLabel>,
    #[serde(default)]
    pub environment: Environment,
}

impl TraceMeta {
    pub fn validate(&self) -> Result<()> {
        if self.trial == Some(0) {
            return Err(Error::InvalidTrace("trial numbers start at 1".into()));
        }
        Ok(())
    }

    /// Trial identifier in the `EB_Eu_1` style, falling back to `unlabelled`.
    pub fn trial_id(&self) -> String {
        let mut parts = Vec::new();
        if let Some(g) = &self.gas_primary {
            parts.push(g.to_string());
        }
        if let Some(g) = &self.gas_secondary {
            parts.push(g.to_string());
        }
        if let Some(c) = self.concentration {
            parts.push(c.to_string());
        }
        if let Some(t) = self.trial {
            parts.push(t.to_string());
        }
        if parts.is_empty() {
            "unlabelled".into()
        } else {
            parts.join("_")
        }
    }
}

/// A uniformly sampled single-channel sensor signal.
///
/// Sample `i` sits at `t0 + i / sample_rate`. Traces are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    sensor_id: u16,
    name: String,
    channel_kind: ChannelKind,
    sample_rate: f64,
    t0: f64,
    samples: Vec<f64>,
    meta: TraceMeta,
}

impl SensorTrace {
    pub fn new(
        sensor_id: u16,
        name: impl Into<String>,
        channel_kind: ChannelKind,
        sample_rate: f64,
        t0: f64,
        samples: Vec<f64>,
        meta: TraceMeta,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidTrace(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidTrace("t0 must be finite".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidTrace("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidTrace(format!("sample {i} is not finite")));
        }
        meta.validate()?;
        Ok(Self {
            sensor_id,
            name: name.into(),
            channel_kind,
            sample_rate,
            t0,
            samples,
            meta,
        })
    }

    /// Unlabelled trace, mostly for tests and ad-hoc signals.
    pub fn from_samples(sample_rate: f64, t0: f64, samples: Vec<f64>) -> Result<Self> {
        Self::new(
            0,
            "s0",
            ChannelKind::Other,
            sample_rate,
            t0,
            samples,
            TraceMeta::default(),
        )
    }

    /// Same channel and time base, new sample values.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                self.samples.len(),
                samples.len()
            )));
        }
        Self::new(
            self.sensor_id,
            self.name.clone(),
            self.channel_kind,
            self.sample_rate,
            self.t0,
            samples,
            self.meta.clone(),
        )
    }

    pub fn with_meta(mut self, meta: TraceMeta) -> Result<Self> {
        meta.validate()?;
        self.meta = meta;
        Ok(self)
    }

    pub fn sensor_id(&self) -> u16 {
        self.sensor_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channel_kind(&self) -> ChannelKind {
        self.channel_kind
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    pub fn t_end(&self) -> f64 {
        self.time_at(self.samples.len() - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(|i| self.time_at(i))
    }

    /// Index range of the samples whose timestamps fall in `[t_start, t_end]`.
    /// `None` when no sample does.
    pub fn index_range(&self, t_start: f64, t_end: f64) -> Option<(usize, usize)> {
        const EPS: f64 = 1e-9;
        let n = self.samples.len() as f64;
        let lo = ((t_start - self.t0) * self.sample_rate - EPS)
            .ceil()
            .max(0.0);
        let hi = ((t_end - self.t0) * self.sample_rate + EPS)
            .floor()
            .min(n - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    /// True when both traces have the same rate, start time and length.
    pub fn shares_time_base(&self, other: &SensorTrace) -> bool {
        self.samples.len() == other.samples.len()
            && (self.sample_rate - other.sample_rate).abs() <= 1e-9 * self.sample_rate
            && (self.t0 - other.t0).abs() <= 1e-9
    }
}

/// Checks that a sensor set is nonempty and aligned on one time base.
pub fn check_aligned(traces: &[SensorTrace]) -> Result<()> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty sensor set".into()))?;
    for t in &traces[1..] {
        if !first.shares_time_base(t) {
            return Err(Error::Mismatch(format!(
                "sensor {} ({} Hz, t0 {}, {} samples) vs sensor {} ({} Hz, t0 {}, {} samples)",
                first.name(),
                first.sample_rate(),
                first.t0(),
                first.len(),
                t.name(),
                t.sample_rate(),
                t.t0(),
                t.len()
            )));
        }
    }
    Ok(())
}

/// PID-style command trace: relative concentration held from each time
/// point until the next one (zero before the first point).
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusProfile {
    times: Vec<f64>,
    relative_concentration: Vec<f64>,
}

impl StimulusProfile {
    /// Values are clamped into `[0, 1]`.
    pub fn new(times: Vec<f64>, relative_concentration: Vec<f64>) -> Result<Self> {
        if times.len() != relative_concentration.len() {
            return Err(Error::InvalidArgument(format!(
                "profile has {} times but {} values",
                times.len(),
                relative_concentration.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::InvalidArgument("empty stimulus profile".into()));
        }
        if times
            .iter()
            .chain(&relative_concentration)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "profile contains non-finite values".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "profile times must be strictly increasing".into(),
            ));
        }
        let relative_concentration = relative_concentration
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        Ok(Self {
            times,
            relative_concentration,
        })
    }

    /// Rectangular pulses `(onset, width, level)`; overlapping pulses take the max.
    pub fn pulses(pulses: &[(f64, f64, f64)]) -> Result<Self> {
        let mut edges: Vec<f64> = pulses.iter().flat_map(|&(on, w, _)| [on, on + w]).collect();
        if pulses.iter().any(|&(_, w, _)| !(w > 0.0)) {
            return Err(Error::InvalidArgument(
                "pulse width must be positive".into(),
            ));
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let values = edges
            .iter()
            .map(|&t| {
                pulses
                    .iter()
                    .filter(|&&(on, w, _)| t >= on && t < on + w)
                    .map(|&(_, _, level)| level)
                    .fold(0.0, f64::max)
            })
            .collect();
        Self::new(edges, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.relative_concentration
    }

    /// Zero-order-hold value at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&pt| pt <= t + 1e-9);
        if k == 0 {
            0.0
        } else {
            self.relative_concentration[k - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concentration_percent_steps() {
        let p: Vec<f64> = ConcentrationLevel::ALL
            .iter()
            .map(|l| l.percent())
            .collect();
        assert_eq!(p, vec![20.0, 40.0, 60.0, 80.0, 100.0]);
        assert_eq!(
            ConcentrationLevel::from_percent(60.0).unwrap(),
            ConcentrationLevel::C3
        );
        assert!(ConcentrationLevel::from_percent(50.0).is_err());
        assert_eq!(
            "c4".parse::<ConcentrationLevel>().unwrap(),
            ConcentrationLevel::C4
        );
        assert_eq!(
            "40%".parse::<ConcentrationLevel>().unwrap(),
            ConcentrationLevel::C2
        );
    }

    #[test]
    fn bracketed_labels_parse() {
        let l: ConcentrationLabel = "C2-C3".parse().unwrap();
        assert_eq!(
            l,
            ConcentrationLabel::Between(ConcentrationLevel::C2, ConcentrationLevel::C3)
        );
        assert_eq!(l.to_string(), "C2-C3");
        assert!(l.level().is_none());
        assert!("C3-C2".parse::<ConcentrationLabel>().is_err());
    }

    #[test]
    fn gas_labels_compare_exactly() {
        assert_eq!("Eu".parse::<GasLabel>().unwrap(), GasLabel::Eu);
        assert_eq!(
            "EU".parse::<GasLabel>().unwrap(),
            GasLabel::Other("EU".into())
        );
        assert!(GasLabel::EB < GasLabel::Eu && GasLabel::Eu < GasLabel::IA);
    }

    #[test]
    fn trace_rejects_bad_input() {
        assert!(SensorTrace::from_samples(0.0, 0.0, vec![1.0]).is_err());
        assert!(SensorTrace::from_samples(100.0, 0.0, vec![]).is_err());
        assert!(SensorTrace::from_samples(100.0, 0.0, vec![1.0, f64::NAN]).is_err());
        let meta = TraceMeta {
            trial: Some(0),
            ..Default::default()
        };
        let t = SensorTrace::from_samples(100.0, 0.0, vec![1.0]).unwrap();
        assert!(t.with_meta(meta).is_err());
    }

    #[test]
    fn index_range_is_inclusive() {
        let t = SensorTrace::from_samples(100.0, -1.0, vec![0.0; 501]).unwrap();
        assert_eq!(t.index_range(0.0, 2.0), Some((100, 300)));
        assert_eq!(t.index_range(-5.0, 100.0), Some((0, 500)));
        assert_eq!(t.index_range(10.0, 11.0), None);
        assert_eq!(t.index_range(0.001, 0.009), None);
    }

    #[test]
    fn profile_holds_and_clamps() {
        let p = StimulusProfile::new(vec![0.0, 1.0, 2.0], vec![0.5, 1.7, -0.2]).unwrap();
        assert_eq!(p.values(), &[0.5, 1.0, 0.0]);
        assert_eq!(p.value_at(-0.1), 0.0);
        assert_eq!(p.value_at(0.99), 0.5);
        assert_eq!(p.value_at(1.0), 1.0);
        assert!(StimulusProfile::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());

        let two = StimulusProfile::pulses(&[(0.8, 0.5, 1.0), (3.5, 0.5, 0.6)]).unwrap();
        assert_eq!(two.times(), &[0.8, 1.3, 3.5, 4.0]);
        assert_eq!(two.values(), &[1.0, 0.0, 0.6, 0.0]);
    }
}
