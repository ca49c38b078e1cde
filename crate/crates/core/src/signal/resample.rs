use crate::error::{Error, Result};
use crate::signal::SensorTrace;

/// Linearly interpolates `trace` onto a uniform grid at `new_rate`, keeping `t0`.
///
/// The new grid covers `[t0, t_end]`; its last point lies within one new
/// sample period of the original end time.
pub fn resample(trace: &SensorTrace, new_rate: f64) -> Result<SensorTrace> {
    if !(new_rate.is_finite() && new_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "resample rate must be positive, got {new_rate}"
        )));
    }
    if trace.len() < 2 {
        return Err(Error::InsufficientSamples(
            "resampling needs at least two samples".into(),
        ));
    }
    if new_rate == trace.sample_rate() {
        return Ok(trace.clone());
    }
    let samples = interpolate_uniform(
        |i| trace.time_at(i),
        trace.samples(),
        trace.t0(),
        new_rate,
        grid_len(trace.t_end() - trace.t0(), new_rate),
    );
    SensorTrace::new(
        trace.sensor_id(),
        trace.name(),
        trace.channel_kind(),
        new_rate,
        trace.t0(),
        samples,
        trace.meta().clone(),
    )
}

/// Number of grid points at `rate` that fit in `span` seconds starting at 0.
pub(crate) fn grid_len(span: f64, rate: f64) -> usize {
    (span * rate + 1e-9).floor() as usize + 1
}

/// Samples the piecewise-linear interpolant of `(time_of(i), values[i])` at
/// `t0 + k / rate` for `k < len`. Times must be strictly increasing; grid
/// points beyond the last knot hold the last value.
pub(crate) fn interpolate_uniform(
    time_of: impl Fn(usize) -> f64,
    values: &[f64],
    t0: f64,
    rate: f64,
    len: usize,
) -> Vec<f64> {
    let n = values.len();
    let mut seg = 0;
    (0..len)
        .map(|k| {
            let t = t0 + k as f64 / rate;
            while seg + 2 < n && time_of(seg + 1) <= t {
                seg += 1;
            }
            let (ta, tb) = (time_of(seg), time_of(seg + 1));
            let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            values[seg] + frac * (values[seg + 1] - values[seg])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn constant_trace_stays_constant() {
        let t = SensorTrace::from_samples(100.0, 0.0, vec![3.3; 500]).unwrap();
        let r = resample(&t, 50.0).unwrap();
        assert_eq!(r.sample_rate(), 50.0);
        assert_eq!(r.len(), 250);
        assert!(r.samples().iter().all(|&x| (x - 3.3).abs() < 1e-15));
    }

    #[test]
    fn upsampled_sinusoid_matches_analytic_oracle() {
        // 0.2 Hz at 100 Hz, upsampled to 200 Hz
        let f = 0.2;
        let amp = 1.7;
        let x: Vec<f64> = (0..2001)
            .map(|i| amp * (TAU * f * i as f64 / 100.0).sin())
            .collect();
        let t = SensorTrace::from_samples(100.0, 0.0, x).unwrap();
        let r = resample(&t, 200.0).unwrap();
        assert_eq!(r.t0(), 0.0);
        assert!((r.t_end() - t.t_end()).abs() < 1.0 / 200.0);
        let worst = r
            .times()
            .zip(r.samples())
            .map(|(ti, &y)| (y - amp * (TAU * f * ti).sin()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4 * amp, "max error {worst}");
    }

    #[test]
    fn single_sample_is_rejected() {
        let t = SensorTrace::from_samples(100.0, 0.0, vec![1.0]).unwrap();
        assert!(matches!(
            resample(&t, 50.0),
            Err(Error::InsufficientSamples(_))
        ));
        let t = SensorTrace::from_samples(100.0, 0.0, vec![1.0, 2.0]).unwrap();
        assert!(resample(&t, 0.0).is_err());
        assert!(resample(&t, -5.0).is_err());
    }

    #[test]
    fn same_rate_is_identity() {
        let t = SensorTrace::from_samples(100.0, -2.0, vec![1.0, 4.0, 2.0, 8.0]).unwrap();
        assert_eq!(resample(&t, 100.0).unwrap(), t);
    }
}
