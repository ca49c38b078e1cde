//! Two-whiff plume through the ungated front end, checked against a
//! separately written filter and crossing scan.

use std::f64::consts::PI;

use moxfront::frontend::{simulate_front_end, FrontEndConfig, Variant};
use moxfront::signal::{synth_plume, GasLabel, SensorModel, SensorTrace, StimulusProfile};

/// First-order high-pass then first-order low-pass, bilinear with prewarped
/// corners, high-pass memory primed with the first sample.
fn reference_bandpass(x: &[f64], fs: f64, f_low: f64, f_high: f64) -> Vec<f64> {
    let a = (PI * f_low / fs).tan();
    let b = (PI * f_high / fs).tan();
    let (mut hx, mut hy) = (x[0], 0.0);
    let (mut lx, mut ly) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let h = (v - hx + (1.0 - a) * hy) / (1.0 + a);
            hx = v;
            hy = h;
            let l = (b * (h + lx) + (1.0 - b) * ly) / (1.0 + b);
            lx = h;
            ly = l;
            l
        })
        .collect()
}

/// Upward crossings of `level`, interpolated between samples.
fn crossings(y: &[f64], t0: f64, fs: f64, level: f64) -> Vec<f64> {
    (1..y.len())
        .filter(|&i| y[i - 1] < level && y[i] >= level)
        .map(|i| t0 + (i - 1) as f64 / fs + (level - y[i - 1]) / (y[i] - y[i - 1]) / fs)
        .collect()
}

fn plume(gas: &GasLabel) -> (SensorModel, Vec<SensorTrace>) {
    let model = SensorModel::default();
    let profile = StimulusProfile::pulses(&[(0.8, 0.5, 1.0), (3.5, 0.5, 1.0)]).unwrap();
    let raw = synth_plume(&model, &profile, gas, 0.0, 0).unwrap();
    (model, raw)
}

#[test]
fn two_whiffs_give_two_records_at_the_crossings() {
    for gas in SensorModel::default().gases() {
        let (model, raw) = plume(&gas);
        let fe = FrontEndConfig::calibrated(Variant::PlumeUngated, &model).unwrap();
        let records = simulate_front_end(&raw, &fe).unwrap();
        assert_eq!(records.len(), 2, "{gas}");

        // earliest sensor crossing after each whiff starts
        let mut all: Vec<f64> = raw
            .iter()
            .flat_map(|t| {
                let y = reference_bandpass(
                    t.samples(),
                    t.sample_rate(),
                    fe.filter.f_low,
                    fe.filter.f_high,
                );
                crossings(&y, t.time_at(0), t.sample_rate(), fe.cd_threshold)
            })
            .collect();
        all.sort_by(f64::total_cmp);
        for (rec, whiff) in records.iter().zip([0.8, 3.5]) {
            let expected = *all.iter().find(|&&c| c >= whiff).unwrap();
            assert!(
                (rec.trigger.onset - expected).abs() <= 0.1,
                "{gas}: trigger {} vs crossing {expected}",
                rec.trigger.onset
            );
            assert!(rec.trigger.onset >= whiff);
        }
    }
}

#[test]
fn ungated_sd_turns_off_before_reset() {
    for gas in SensorModel::default().gases() {
        let (model, raw) = plume(&gas);
        let fe = FrontEndConfig::calibrated(Variant::PlumeUngated, &model).unwrap();
        for rec in simulate_front_end(&raw, &fe).unwrap() {
            let reset = rec.trigger.offset.unwrap();
            for (k, e) in rec.sensors.iter().enumerate() {
                let sd =
                    e.sd.unwrap_or_else(|| panic!("{gas} s{}: no SD pulse", k + 1));
                assert!(
                    sd.offset.unwrap() <= reset,
                    "{gas} s{}: {sd:?} past {reset}",
                    k + 1
                );
            }
        }
    }
}
