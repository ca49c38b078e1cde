//! First-order IIR sections and the band-pass cascade.
//!
//! Both sections come from the analog prototypes `s / (s + w)` (high-pass)
//! and `w / (s + w)` (low-pass) through the bilinear transform with the
//! corner prewarped, so the digital corner sits exactly at the requested
//! frequency. The band-pass is the high-pass at `f_low` feeding the
//! low-pass at `f_high`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SensorTrace;

/// Minimum ratio of sample rate to the upper corner.
pub const MIN_OVERSAMPLING: f64 = 20.0;

/// Band-pass corners in hertz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(rename = "f_low_hz")]
    pub f_low: f64,
    #[serde(rename = "f_high_hz")]
    pub f_high: f64,
}

impl FilterSpec {
    /// Bout analysis on plume recordings.
    pub const PLUME_ANALYSIS: FilterSpec = FilterSpec {
        f_low: 0.1,
        f_high: 1.0,
    };
    /// Single-pulse recordings, both for bout analysis and in the gated front-end.
    pub const SINGLE_PULSE: FilterSpec = FilterSpec {
        f_low: 0.04,
        f_high: 1.0,
    };
    /// The ungated plume front-end.
    pub const PLUME_FRONT_END: FilterSpec = FilterSpec {
        f_low: 0.4,
        f_high: 1.0,
    };

    pub fn new(f_low: f64, f_high: f64) -> Result<Self> {
        let spec = Self { f_low, f_high };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_low.is_finite()
            && self.f_high.is_finite()
            && 0.0 < self.f_low
            && self.f_low < self.f_high)
        {
            return Err(Error::InvalidArgument(format!(
                "filter corners must satisfy 0 < f_low < f_high, got ({}, {})",
                self.f_low, self.f_high
            )));
        }
        Ok(())
    }

    /// Magnitude of the analog cascade at `f` hertz.
    pub fn analog_gain(&self, f: f64) -> f64 {
        let hp = f / (f * f + self.f_low * self.f_low).sqrt();
        let lp = self.f_high / (f * f + self.f_high * self.f_high).sqrt();
        hp * lp
    }
}

/// `y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1]`
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b0: f64,
    b1: f64,
    a1: f64,
    x1: f64,
    y1: f64,
}

impl Section {
    fn high_pass(f: f64, fs: f64) -> Self {
        let k = (PI * f / fs).tan();
        let norm = 1.0 / (1.0 + k);
        Self {
            b0: norm,
            b1: -norm,
            a1: (k - 1.0) * norm,
            x1: 0.0,
            y1: 0.0,
        }
    }

    fn low_pass(f: f64, fs: f64) -> Self {
        let k = (PI * f / fs).tan();
        let norm = 1.0 / (1.0 + k);
        Self {
            b0: k * norm,
            b1: k * norm,
            a1: (k - 1.0) * norm,
            x1: 0.0,
            y1: 0.0,
        }
    }

    #[inline]
    fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 - self.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }
}

/// Streaming band-pass state for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    spec: FilterSpec,
    sample_rate: f64,
    high: Section,
    low: Section,
    primed: bool,
}

impl FilterState {
    /// Fresh state. The first sample seen primes the high-pass memory, so a
    /// constant input produces exactly zero output.
    pub fn new(spec: FilterSpec, sample_rate: f64) -> Result<Self> {
        spec.validate()?;
        if !(sample_rate.is_finite() && sample_rate >= MIN_OVERSAMPLING * spec.f_high) {
            return Err(Error::RateGuard {
                sample_rate,
                f_high: spec.f_high,
            });
        }
        Ok(Self {
            spec,
            sample_rate,
            high: Section::high_pass(spec.f_low, sample_rate),
            low: Section::low_pass(spec.f_high, sample_rate),
            primed: false,
        })
    }

    /// State as if the filter had been sitting at `level` forever.
    pub fn primed_at(spec: FilterSpec, sample_rate: f64, level: f64) -> Result<Self> {
        let mut s = Self::new(spec, sample_rate)?;
        if !level.is_finite() {
            return Err(Error::NonFinite(level));
        }
        s.high.x1 = level;
        s.primed = true;
        Ok(s)
    }

    pub fn spec(&self) -> FilterSpec {
        self.spec
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Advances by one sample and returns the band-pass output.
    pub fn step(&mut self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        if !self.primed {
            self.high.x1 = x;
            self.primed = true;
        }
        let hp = self.high.step(x);
        Ok(self.low.step(hp))
    }
}

/// Value-style single step: returns the advanced state and the output.
pub fn filter_step(state: &FilterState, x: f64) -> Result<(FilterState, f64)> {
    let mut next = state.clone();
    let y = next.step(x)?;
    Ok((next, y))
}

/// Causal band-pass of a whole trace; timestamps and metadata are kept.
pub fn bandpass_filter(trace: &SensorTrace, spec: FilterSpec) -> Result<SensorTrace> {
    let mut state = FilterState::new(spec, trace.sample_rate())?;
    let out = trace
        .samples()
        .iter()
        .map(|&x| state.step(x))
        .collect::<Result<Vec<_>>>()?;
    trace.with_samples(out)
}

/// Filters every channel of an aligned set.
pub fn bandpass_all(traces: &[SensorTrace], spec: FilterSpec) -> Result<Vec<SensorTrace>> {
    traces.iter().map(|t| bandpass_filter(t, spec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    const FS: f64 = 100.0;

    fn trace(x: Vec<f64>) -> SensorTrace {
        SensorTrace::from_samples(FS, 0.0, x).unwrap()
    }

    fn sine(f: f64, secs: f64) -> Vec<f64> {
        (0..(secs * FS) as usize)
            .map(|i| (TAU * f * i as f64 / FS).sin())
            .collect()
    }

    /// Steady-state amplitude by least-squares projection on sin/cos over the
    /// last `periods` whole periods.
    fn measured_gain(spec: FilterSpec, f: f64) -> f64 {
        let settle = 12.0 / spec.f_low.min(f);
        let periods = 8.0;
        let secs = settle + periods / f;
        let y = bandpass_filter(&trace(sine(f, secs + 1.0)), spec).unwrap();
        let n0 = (settle * FS) as usize;
        let n1 = n0 + (periods / f * FS).round() as usize;
        let (mut s, mut c) = (0.0, 0.0);
        for i in n0..n1 {
            let ph = TAU * f * i as f64 / FS;
            s += y.samples()[i] * ph.sin();
            c += y.samples()[i] * ph.cos();
        }
        let n = (n1 - n0) as f64;
        2.0 * (s * s + c * c).sqrt() / n
    }

    #[test]
    fn constant_input_is_rejected_exactly() {
        let y = bandpass_filter(&trace(vec![2.5; 3000]), FilterSpec::SINGLE_PULSE).unwrap();
        assert!(y.samples().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn geometric_centre_gain_matches_analytic_cascade() {
        let spec = FilterSpec::PLUME_ANALYSIS;
        let f = (spec.f_low * spec.f_high).sqrt();
        let g = measured_gain(spec, f);
        let h = spec.analog_gain(f);
        assert!((g / h - 1.0).abs() < 0.01, "measured {g}, analytic {h}");
    }

    #[test]
    fn corner_gains_match_analytic_cascade() {
        for spec in [
            FilterSpec::SINGLE_PULSE,
            FilterSpec::PLUME_ANALYSIS,
            FilterSpec::PLUME_FRONT_END,
        ] {
            for f in [spec.f_low, spec.f_high] {
                let g = measured_gain(spec, f);
                let h = spec.analog_gain(f);
                assert!((g / h - 1.0).abs() < 0.01, "{spec:?} at {f}: {g} vs {h}");
            }
        }
    }

    #[test]
    fn removes_linear_drift_under_a_pulse() {
        use crate::signal::{synth_single_pulse, ConcentrationLevel, GasLabel, SensorModel};
        let model = SensorModel {
            t_end: 300.0,
            ..Default::default()
        };
        let raw =
            &synth_single_pulse(&model, &GasLabel::EB, ConcentrationLevel::C5, 0.0, 0).unwrap()[0];
        let amp = model.gains(&GasLabel::EB).unwrap()[0];
        // 0.1 % of the pulse amplitude per second. A first-order high-pass
        // leaves a floor of rate / (2 pi f_low) under a ramp, here 0.4 %.
        let rate = 1e-3 * amp;
        let drifted: Vec<f64> = raw
            .times()
            .zip(raw.samples())
            .map(|(t, &x)| x + rate * (t - model.t0))
            .collect();
        let y = bandpass_filter(
            &raw.with_samples(drifted).unwrap(),
            FilterSpec::SINGLE_PULSE,
        )
        .unwrap();
        // long-run mean over the final 100 s, well after the pulse has decayed
        let tail = &y.samples()[y.len() - 10_000..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(mean.abs() < 0.01 * amp, "mean {mean}");
    }

    #[test]
    fn zero_state_zero_input() {
        let s = FilterState::primed_at(FilterSpec::SINGLE_PULSE, FS, 0.0).unwrap();
        let (_, y) = filter_step(&s, 0.0).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut s = FilterState::new(FilterSpec::SINGLE_PULSE, FS).unwrap();
        assert!(matches!(s.step(f64::NAN), Err(Error::NonFinite(_))));
        assert!(s.step(f64::INFINITY).is_err());
    }

    #[test]
    fn rate_guard() {
        let t = SensorTrace::from_samples(19.0, 0.0, vec![0.0; 10]).unwrap();
        assert!(matches!(
            bandpass_filter(&t, FilterSpec::SINGLE_PULSE),
            Err(Error::RateGuard { .. })
        ));
        assert!(FilterSpec::new(1.0, 0.5).is_err());
        assert!(FilterSpec::new(0.0, 0.5).is_err());
    }

    #[test]
    fn constant_after_step_decays_geometrically() {
        let mut s = FilterState::primed_at(FilterSpec::PLUME_FRONT_END, FS, 0.0).unwrap();
        let out: Vec<f64> = (0..3000).map(|_| s.step(1.0).unwrap().abs()).collect();
        let late: Vec<f64> = out[1000..].to_vec();
        assert!(late.windows(2).all(|w| w[1] <= w[0]));
        assert!(out[2999] < 1e-8);
    }

    fn arb_signal() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, 2..400)
    }

    proptest! {
        #[test]
        fn streaming_fold_equals_batch(x in arb_signal()) {
            let spec = FilterSpec::PLUME_ANALYSIS;
            let batch = bandpass_filter(&trace(x.clone()), spec).unwrap();
            let mut state = FilterState::new(spec, FS).unwrap();
            let mut folded = Vec::new();
            for &v in &x {
                let (next, y) = filter_step(&state, v).unwrap();
                state = next;
                folded.push(y);
            }
            prop_assert_eq!(batch.samples(), folded.as_slice());
        }

        #[test]
        fn linear(x in arb_signal(), a in -3.0..3.0f64, b in -3.0..3.0f64, seed in 0u64..1000) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v * 0.7 + (i as u64 ^ seed) as f64 * 1e-3).cos()).collect();
            let spec = FilterSpec::PLUME_FRONT_END;
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let fm = bandpass_filter(&trace(mix), spec).unwrap();
            let fx = bandpass_filter(&trace(x), spec).unwrap();
            let fy = bandpass_filter(&trace(y), spec).unwrap();
            for i in 0..fm.len() {
                let expect = a * fx.samples()[i] + b * fy.samples()[i];
                prop_assert!((fm.samples()[i] - expect).abs() < 1e-9);
            }
        }

        #[test]
        fn time_invariant(x in arb_signal(), k in 1usize..50) {
            // prefixing k copies of the first sample delays the output by k
            let spec = FilterSpec::SINGLE_PULSE;
            let mut shifted = vec![x[0]; k];
            shifted.extend_from_slice(&x);
            let a = bandpass_filter(&trace(x), spec).unwrap();
            let b = bandpass_filter(&trace(shifted), spec).unwrap();
            prop_assert!(b.samples()[..k].iter().all(|&v| v == 0.0));
            for i in 0..a.len() {
                prop_assert!((a.samples()[i] - b.samples()[i + k]).abs() < 1e-12);
            }
        }

        #[test]
        fn bounded_input_bounded_output(x in prop::collection::vec(-1.0..1.0f64, 2..2000)) {
            for spec in [FilterSpec::SINGLE_PULSE, FilterSpec::PLUME_ANALYSIS, FilterSpec::PLUME_FRONT_END] {
                let y = bandpass_filter(&trace(x.clone()), spec).unwrap();
                // |x - x0| <= 2 and each section has l1 impulse norm <= 2
                prop_assert!(y.samples().iter().all(|v| v.abs() <= 8.0));
            }
        }
    }
}
