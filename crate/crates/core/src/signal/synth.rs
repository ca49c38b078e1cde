//! Synthetic MOx recordings.
//!
//! Each sensor follows an asymmetric first-order response to the delivered
//! concentration: it rises towards `baseline + gain * u` with time constant
//! `tau_rise` and relaxes with `tau_decay`. The input is held constant over
//! each sample interval, so the recursion below is the exact solution of the
//! continuous model on the sample grid.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    ChannelKind, ConcentrationLabel, ConcentrationLevel, Environment, GasLabel, SensorTrace,
    StimulusProfile, TraceMeta,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    pub channel_kind: ChannelKind,
}

/// Parameters of the synthetic sensor array and of the recording grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub sample_rate: f64,
    /// Time of the first sample (negative: before stimulus onset). The
    /// default leaves three high-pass time constants of baseline at the
    /// slowest corner (0.04 Hz), so a noisy first sample has decayed by the
    /// time the stimulus arrives.
    pub t0: f64,
    /// Time of the last sample.
    pub t_end: f64,
    pub pulse_onset: f64,
    pub pulse_width: f64,
    pub tau_rise: f64,
    pub tau_decay: f64,
    pub baseline: f64,
    pub sensors: Vec<SensorSpec>,
    /// Per-gas response gain of each sensor, in sensor order.
    pub gains: BTreeMap<String, Vec<f64>>,
}

impl Default for SensorModel {
    fn default() -> Self {
        let sensor = |name: &str, channel_kind| SensorSpec {
            name: name.into(),
            channel_kind,
        };
        let gains = [
            ("EB", vec![1.0, 0.45, 0.75]),
            ("Eu", vec![0.55, 1.0, 0.4]),
            ("IA", vec![0.8, 0.7, 1.0]),
        ]
        .into_iter()
        .map(|(g, v)| (g.to_string(), v))
        .collect();
        Self {
            sample_rate: 100.0,
            t0: -12.0,
            t_end: 18.0,
            pulse_onset: 0.0,
            pulse_width: 2.0,
            tau_rise: 1.0,
            tau_decay: 4.0,
            baseline: 1.0,
            sensors: vec![
                sensor("s1", ChannelKind::Red),
                sensor("s2", ChannelKind::Ox),
                sensor("s3", ChannelKind::Other),
            ],
            gains,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sample_rate", self.sample_rate),
            ("pulse_width", self.pulse_width),
            ("tau_rise", self.tau_rise),
            ("tau_decay", self.tau_decay),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t_end > self.t0) {
            return Err(Error::InvalidArgument("t_end must exceed t0".into()));
        }
        if !self.baseline.is_finite() || !self.pulse_onset.is_finite() {
            return Err(Error::InvalidArgument(
                "baseline and onset must be finite".into(),
            ));
        }
        if self.sensors.is_empty() {
            return Err(Error::InvalidArgument("sensor model has no sensors".into()));
        }
        for (gas, g) in &self.gains {
            if g.len() != self.sensors.len() || g.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "gas {gas}: need {} finite non-negative gains",
                    self.sensors.len()
                )));
            }
        }
        Ok(())
    }

    pub fn gains(&self, gas: &GasLabel) -> Result<&[f64]> {
        self.gains
            .get(gas.as_str())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownGas(gas.to_string()))
    }

    pub fn gases(&self) -> Vec<GasLabel> {
        let mut g: Vec<GasLabel> = self.gains.keys().map(|k| k.parse().unwrap()).collect();
        g.sort();
        g
    }

    pub fn num_samples(&self) -> usize {
        ((self.t_end - self.t0) * self.sample_rate + 1e-9).floor() as usize + 1
    }

    /// The rectangular stimulus used for single pulses, at full strength.
    pub fn pulse_profile(&self) -> StimulusProfile {
        StimulusProfile::pulses(&[(self.pulse_onset, self.pulse_width, 1.0)])
            .expect("validated pulse width")
    }

    fn respond(
        &self,
        profile: &StimulusProfile,
        scale: f64,
        gas: &GasLabel,
        noise_sigma: f64,
        seed: u64,
        meta: TraceMeta,
    ) -> Result<Vec<SensorTrace>> {
        self.validate()?;
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be >= 0, got {noise_sigma}"
            )));
        }
        let gains = self.gains(gas)?;
        let n = self.num_samples();
        let dt = 1.0 / self.sample_rate;
        let rise = (-dt / self.tau_rise).exp();
        let decay = (-dt / self.tau_decay).exp();
        let drive: Vec<f64> = (0..n)
            .map(|i| scale * profile.value_at(self.t0 + i as f64 * dt))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal =
            Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;

        self.sensors
            .iter()
            .zip(gains)
            .enumerate()
            .map(|(k, (spec, &gain))| {
                let mut y = self.baseline;
                let mut samples = Vec::with_capacity(n);
                for &u in &drive {
                    let noise = if noise_sigma > 0.0 {
                        normal.sample(&mut rng)
                    } else {
                        0.0
                    };
                    samples.push(y + noise);
                    let target = self.baseline + gain * u;
                    let a = if target > y { rise } else { decay };
                    y = target + (y - target) * a;
                }
                SensorTrace::new(
                    k as u16 + 1,
                    spec.name.clone(),
                    spec.channel_kind,
                    self.sample_rate,
                    self.t0,
                    samples,
                    meta.clone(),
                )
            })
            .collect()
    }
}

/// One noisy single-pulse recording: a rectangular stimulus of amplitude
/// `level.percent() / 100` starting at `pulse_onset`, one trace per sensor.
pub fn synth_single_pulse(
    model: &SensorModel,
    gas: &GasLabel,
    level: ConcentrationLevel,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<SensorTrace>> {
    let meta = TraceMeta {
        gas_primary: Some(gas.clone()),
        concentration: Some(ConcentrationLabel::Level(level)),
        environment: Environment::SinglePulse,
        ..Default::default()
    };
    model.respond(
        &model.pulse_profile(),
        level.percent() / 100.0,
        gas,
        noise_sigma,
        seed,
        meta,
    )
}

/// Sensor response to a replayed plume profile, one trace per sensor.
pub fn synth_plume(
    model: &SensorModel,
    profile: &StimulusProfile,
    gas: &GasLabel,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<SensorTrace>> {
    let meta = TraceMeta {
        gas_primary: Some(gas.clone()),
        environment: Environment::Plume,
        ..Default::default()
    };
    model.respond(profile, 1.0, gas, noise_sigma, seed, meta)
}

/// Seed of one battery trial. Derived from the run seed and the trial
/// labels only, so any trial can be regenerated on its own.
pub fn trial_seed(seed: u64, gas: &GasLabel, level: ConcentrationLevel, trial: u32) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes = seed
        .to_le_bytes()
        .into_iter()
        .chain(gas.as_str().bytes())
        .chain([0xff, level.index()])
        .chain(trial.to_le_bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// `trials` single-pulse recordings for every gas and level, in gas, level,
/// trial order. Trials are numbered from 1.
pub fn synth_battery(
    model: &SensorModel,
    gases: &[GasLabel],
    levels: &[ConcentrationLevel],
    trials: u32,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<Vec<SensorTrace>>> {
    let mut out = Vec::with_capacity(gases.len() * levels.len() * trials as usize);
    for gas in gases {
        for &level in levels {
            for trial in 1..=trials {
                let traces = synth_single_pulse(
                    model,
                    gas,
                    level,
                    noise_sigma,
                    trial_seed(seed, gas, level, trial),
                )?;
                let meta = TraceMeta {
                    trial: Some(trial),
                    ..traces[0].meta().clone()
                };
                out.push(
                    traces
                        .into_iter()
                        .map(|t| t.with_meta(meta.clone()))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peak(t: &SensorTrace) -> f64 {
        t.samples().iter().copied().fold(f64::MIN, f64::max)
    }

    #[test]
    fn noiseless_peak_increases_with_level() {
        let m = SensorModel::default();
        for gas in m.gases() {
            let peaks: Vec<Vec<f64>> = ConcentrationLevel::ALL
                .iter()
                .map(|&l| {
                    synth_single_pulse(&m, &gas, l, 0.0, 1)
                        .unwrap()
                        .iter()
                        .map(peak)
                        .collect()
                })
                .collect();
            for w in peaks.windows(2) {
                for s in 0..m.sensors.len() {
                    assert!(w[1][s] > w[0][s], "{gas} sensor {s}");
                }
            }
        }
    }

    /// Closed-form step response: during the pulse the sensor follows
    /// `b0 + A (1 - exp(-(t - onset) / tau_rise))` on the sample grid.
    #[test]
    fn rising_edge_matches_closed_form_and_scales_with_amplitude() {
        let m = SensorModel::default();
        let c1 = synth_single_pulse(&m, &GasLabel::EB, ConcentrationLevel::C1, 0.0, 0).unwrap();
        let c5 = synth_single_pulse(&m, &GasLabel::EB, ConcentrationLevel::C5, 0.0, 0).unwrap();
        let onset = ((m.pulse_onset - m.t0) * m.sample_rate).round() as usize;
        let end = onset + (m.pulse_width * m.sample_rate).round() as usize;
        for (s, &g) in m.gains(&GasLabel::EB).unwrap().iter().enumerate() {
            for i in onset..=end {
                let tau = (i - onset) as f64 / m.sample_rate;
                let expect = m.baseline + g * (1.0 - (-tau / m.tau_rise).exp());
                assert!((c5[s].samples()[i] - expect).abs() < 1e-12);
            }
            let slope = |t: &SensorTrace| (t.samples()[end] - t.samples()[onset]) / (m.pulse_width);
            let ratio = slope(&c5[s]) / slope(&c1[s]);
            assert!((ratio - 5.0).abs() < 1e-6, "ratio {ratio}");
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let m = SensorModel::default();
        let a = synth_single_pulse(&m, &GasLabel::IA, ConcentrationLevel::C3, 0.05, 42).unwrap();
        let b = synth_single_pulse(&m, &GasLabel::IA, ConcentrationLevel::C3, 0.05, 42).unwrap();
        let c = synth_single_pulse(&m, &GasLabel::IA, ConcentrationLevel::C3, 0.05, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_profile_gives_flat_baseline() {
        let m = SensorModel::default();
        let p = StimulusProfile::new(vec![0.0, 5.0], vec![0.0, 0.0]).unwrap();
        for t in synth_plume(&m, &p, &GasLabel::Eu, 0.0, 9).unwrap() {
            assert!(t.samples().iter().all(|&x| x == m.baseline));
        }
    }

    #[test]
    fn rectangular_profile_equals_c5_pulse() {
        let m = SensorModel {
            pulse_width: 1.0,
            ..Default::default()
        };
        let p =
            StimulusProfile::new(vec![m.pulse_onset, m.pulse_onset + 1.0], vec![1.0, 0.0]).unwrap();
        let plume = synth_plume(&m, &p, &GasLabel::EB, 0.0, 3).unwrap();
        let pulse = synth_single_pulse(&m, &GasLabel::EB, ConcentrationLevel::C5, 0.0, 3).unwrap();
        for (a, b) in plume.iter().zip(&pulse) {
            let worst = a
                .samples()
                .iter()
                .zip(b.samples())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-9);
        }
    }

    #[test]
    fn two_pulses_give_two_local_maxima() {
        let m = SensorModel::default();
        let p = StimulusProfile::pulses(&[(0.5, 1.0, 1.0), (3.5, 1.0, 1.0)]).unwrap();
        for t in synth_plume(&m, &p, &GasLabel::IA, 0.0, 0).unwrap() {
            let x = t.samples();
            // brute-force scan for strict local maxima (plateaus count once)
            let mut count = 0;
            let mut i = 1;
            while i + 1 < x.len() {
                if x[i] > x[i - 1] {
                    let mut j = i;
                    while j + 1 < x.len() && x[j + 1] == x[i] {
                        j += 1;
                    }
                    if j + 1 < x.len() && x[j + 1] < x[i] {
                        count += 1;
                    }
                    i = j + 1;
                } else {
                    i += 1;
                }
            }
            assert_eq!(count, 2, "sensor {}", t.name());
        }
    }

    #[test]
    fn unknown_gas_and_negative_noise_are_errors() {
        let m = SensorModel::default();
        assert!(matches!(
            synth_single_pulse(
                &m,
                &GasLabel::Other("NH3".into()),
                ConcentrationLevel::C1,
                0.0,
                0
            ),
            Err(Error::UnknownGas(_))
        ));
        assert!(synth_single_pulse(&m, &GasLabel::EB, ConcentrationLevel::C1, -1.0, 0).is_err());
    }

    #[test]
    fn battery_layout_and_seeds() {
        let m = SensorModel::default();
        let gases = m.gases();
        let b = synth_battery(&m, &gases, &ConcentrationLevel::ALL, 2, 0.01, 5).unwrap();
        assert_eq!(b.len(), 3 * 5 * 2);
        assert_eq!(b[0][0].meta().trial_id(), "EB_C1_1");
        assert_eq!(b[1][0].meta().trial_id(), "EB_C1_2");
        assert_ne!(b[0][0].samples(), b[1][0].samples());
        let again = synth_single_pulse(
            &m,
            &GasLabel::EB,
            ConcentrationLevel::C1,
            0.01,
            trial_seed(5, &GasLabel::EB, ConcentrationLevel::C1, 2),
        )
        .unwrap();
        assert_eq!(again[0].samples(), b[1][0].samples());
        assert_ne!(
            trial_seed(5, &GasLabel::EB, ConcentrationLevel::C1, 2),
            trial_seed(6, &GasLabel::EB, ConcentrationLevel::C1, 2)
        );
    }
}
