//! Bout location, bout slope and the exposure-measurement baseline.
//!
//! A bout is the rising edge of a band-pass filtered signal inside a query
//! window: it ends at the window maximum and starts at the lowest point
//! that precedes that maximum. Extremes are sample-aligned and ties go to
//! the earliest sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SensorTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
}

impl Window {
    /// The two peak windows used on plume recordings.
    pub const PEAK_1: Window = Window {
        t_start: 0.0,
        t_end: 2.0,
    };
    pub const PEAK_2: Window = Window {
        t_start: 2.0,
        t_end: 5.0,
    };

    pub fn new(t_start: f64, t_end: f64) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::InvalidArgument(format!(
                "window needs t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        Ok(Self { t_start, t_end })
    }

    /// Whole span of a trace.
    pub fn covering(trace: &SensorTrace) -> Self {
        Self {
            t_start: trace.t0(),
            t_end: trace.t_end().max(trace.t0() + trace.dt()),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start - 1e-9 && t <= self.t_end + 1e-9
    }

    fn indices(&self, trace: &SensorTrace) -> Result<(usize, usize)> {
        if !(self.t_start < self.t_end) {
            return Err(Error::InvalidArgument(
                "window needs t_start < t_end".into(),
            ));
        }
        trace
            .index_range(self.t_start, self.t_end)
            .ok_or(Error::WindowOutside {
                t_start: self.t_start,
                t_end: self.t_end,
            })
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    /// `start:end` in seconds, e.g. `0:2`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("window {s:?} is not start:end")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad window bound {v:?}")))
        };
        Window::new(parse(a)?, parse(b)?)
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.t_start, self.t_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bout {
    pub min_t: f64,
    pub max_t: f64,
    pub min_value: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoutSlope {
    pub slope: f64,
    pub bout: Bout,
}

/// Finds the largest rising edge of `filtered` inside `window`.
pub fn locate_largest_bout(filtered: &SensorTrace, window: Window) -> Result<Bout> {
    let (lo, hi) = window.indices(filtered)?;
    let x = filtered.samples();
    let no_bout = Error::NoBout {
        t_start: window.t_start,
        t_end: window.t_end,
    };

    let mut imax = lo;
    for i in lo + 1..=hi {
        if x[i] > x[imax] {
            imax = i;
        }
    }
    if imax == lo {
        return Err(no_bout);
    }
    let mut imin = lo;
    for i in lo + 1..imax {
        if x[i] < x[imin] {
            imin = i;
        }
    }
    Ok(Bout {
        min_t: filtered.time_at(imin),
        max_t: filtered.time_at(imax),
        min_value: x[imin],
        max_value: x[imax],
    })
}

/// `(max_value - min_value) / (max_t - min_t)`
pub fn bout_slope(bout: Bout) -> Result<BoutSlope> {
    let duration = bout.max_t - bout.min_t;
    if duration == 0.0 {
        return Err(Error::DegenerateBout);
    }
    Ok(BoutSlope {
        slope: (bout.max_value - bout.min_value) / duration,
        bout,
    })
}

/// Area under the linear interpolant of `trace` over `window`, clipped to
/// the trace span.
pub fn exposure_measure(trace: &SensorTrace, window: Window) -> Result<f64> {
    let outside = Error::WindowOutside {
        t_start: window.t_start,
        t_end: window.t_end,
    };
    if !(window.t_start < window.t_end) {
        return Err(Error::InvalidArgument(
            "window needs t_start < t_end".into(),
        ));
    }
    let a = window.t_start.max(trace.t0());
    let b = window.t_end.min(trace.t_end());
    if !(a < b) {
        return Err(outside);
    }
    let x = trace.samples();
    let fs = trace.sample_rate();
    let value_at = |t: f64| {
        let pos = ((t - trace.t0()) * fs).clamp(0.0, (x.len() - 1) as f64);
        let i = (pos.floor() as usize).min(x.len() - 2);
        let frac = pos - i as f64;
        x[i] + frac * (x[i + 1] - x[i])
    };
    // interior knots strictly inside (a, b)
    let first = ((a - trace.t0()) * fs).floor() as usize + 1;
    let last = ((b - trace.t0()) * fs).ceil() as usize - 1;
    let mut area = 0.0;
    let mut prev_t = a;
    let mut prev_v = value_at(a);
    for i in first..=last.min(x.len() - 1) {
        let t = trace.time_at(i);
        if t <= prev_t || t >= b {
            continue;
        }
        area += 0.5 * (prev_v + x[i]) * (t - prev_t);
        prev_t = t;
        prev_v = x[i];
    }
    area += 0.5 * (prev_v + value_at(b)) * (b - prev_t);
    Ok(area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: among all index pairs `i < j` in the window, keep
    /// the pair whose end is the (earliest) window maximum and whose start is
    /// the (earliest) lowest value before it.
    pub(crate) fn pair_scan(x: &[f64], lo: usize, hi: usize) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let gmax = x[lo..=hi].iter().copied().fold(f64::MIN, f64::max);
        for j in lo..=hi {
            for i in lo..j {
                if x[j] != gmax {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj)) => {
                        j < bj || (j == bj && (x[i] < x[bi] || (x[i] == x[bi] && i < bi)))
                    }
                };
                if better {
                    best = Some((i, j));
                }
            }
        }
        // a maximum sitting on the first sample has no rising edge
        if x[lo] == gmax {
            return None;
        }
        best
    }

    fn trace(x: Vec<f64>) -> SensorTrace {
        SensorTrace::from_samples(100.0, 0.0, x).unwrap()
    }

    fn triangle() -> SensorTrace {
        // 0 at t=0, down to -1 at t=1, up to +1 at t=2, back to 0 at t=3
        let x = (0..=300)
            .map(|i| {
                let t = i as f64 / 100.0;
                if t <= 1.0 {
                    -t
                } else if t <= 2.0 {
                    -1.0 + 2.0 * (t - 1.0)
                } else {
                    1.0 - (t - 2.0)
                }
            })
            .collect();
        trace(x)
    }

    #[test]
    fn triangle_bout() {
        let b = locate_largest_bout(&triangle(), Window::new(0.0, 2.0).unwrap()).unwrap();
        assert_eq!(b.min_t, 1.0);
        assert_eq!(b.max_t, 2.0);
        assert_eq!(b.min_value, -1.0);
        assert!((b.max_value - 1.0).abs() < 1e-12);
        let s = bout_slope(Bout {
            min_t: 1.0,
            max_t: 2.0,
            min_value: -1.0,
            max_value: 1.0,
        })
        .unwrap();
        assert_eq!(s.slope, 2.0);
    }

    #[test]
    fn minimum_is_searched_before_the_maximum() {
        // global minimum after the maximum is ignored
        let x = vec![0.0, -0.5, 2.0, -3.0, 1.0];
        let b = locate_largest_bout(&trace(x), Window::new(0.0, 0.04).unwrap()).unwrap();
        assert_eq!((b.min_value, b.max_value), (-0.5, 2.0));
    }

    #[test]
    fn ties_go_to_earliest_sample() {
        let x = vec![1.0, 0.0, 0.0, 3.0, 3.0, 0.0];
        let b = locate_largest_bout(&trace(x), Window::covering(&trace(vec![0.0; 6]))).unwrap();
        assert_eq!(b.min_t, 0.01);
        assert_eq!(b.max_t, 0.03);
    }

    #[test]
    fn errors() {
        let t = triangle();
        assert!(matches!(
            locate_largest_bout(&t, Window::new(10.0, 12.0).unwrap()),
            Err(Error::WindowOutside { .. })
        ));
        // falling segment only: max on the first sample
        assert!(matches!(
            locate_largest_bout(&t, Window::new(2.0, 3.0).unwrap()),
            Err(Error::NoBout { .. })
        ));
        let flat = trace(vec![1.0; 10]);
        assert!(locate_largest_bout(&flat, Window::covering(&flat)).is_err());
        let degenerate = Bout {
            min_t: 1.0,
            max_t: 1.0,
            min_value: 0.0,
            max_value: 1.0,
        };
        assert!(matches!(bout_slope(degenerate), Err(Error::DegenerateBout)));
        assert!(Window::new(2.0, 1.0).is_err());
        assert_eq!("0:2".parse::<Window>().unwrap(), Window::PEAK_1);
    }

    #[test]
    fn matches_pair_scan_oracle_on_random_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let x: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = trace(x.clone());
            let (lo, hi) = (rng.random_range(0..100), rng.random_range(100..200));
            let w = Window::new(t.time_at(lo), t.time_at(hi)).unwrap();
            match (locate_largest_bout(&t, w), pair_scan(&x, lo, hi)) {
                (Ok(b), Some((i, j))) => {
                    assert_eq!(b.min_t, t.time_at(i));
                    assert_eq!(b.max_t, t.time_at(j));
                }
                (Err(Error::NoBout { .. }), None) => {}
                (got, want) => panic!("{got:?} vs {want:?}"),
            }
        }
    }

    #[test]
    fn two_windows_on_two_peak_plume_give_two_bouts() {
        use crate::filter::{bandpass_filter, FilterSpec};
        use crate::signal::{synth_plume, GasLabel, SensorModel, StimulusProfile};
        let m = SensorModel::default();
        let p = StimulusProfile::pulses(&[(0.3, 0.8, 1.0), (2.6, 0.8, 1.0)]).unwrap();
        for raw in synth_plume(&m, &p, &GasLabel::Eu, 0.0, 0).unwrap() {
            let f = bandpass_filter(&raw, FilterSpec::PLUME_ANALYSIS).unwrap();
            let b1 = locate_largest_bout(&f, Window::PEAK_1).unwrap();
            let b2 = locate_largest_bout(&f, Window::PEAK_2).unwrap();
            assert!(b1.max_t < 2.0 && b2.min_t >= 2.0 && b2.max_t > b2.min_t);
            assert!(b1.max_t > 0.3 && b2.max_t > 2.6);
        }
    }

    #[test]
    fn exposure_basics() {
        let ones = trace(vec![1.0; 401]);
        let a = exposure_measure(&ones, Window::new(1.0, 3.0).unwrap()).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
        let tri: Vec<f64> = (0..=200)
            .map(|i| 1.0 - ((i as f64 - 100.0) / 100.0).abs())
            .collect();
        let a = exposure_measure(&trace(tri), Window::new(0.0, 2.0).unwrap()).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        assert!(exposure_measure(&ones, Window::new(5.0, 6.0).unwrap()).is_err());
    }

    #[test]
    fn exposure_matches_fine_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..300).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t = trace(x.clone());
            let a: f64 = rng.random_range(-0.5..1.4);
            let b = a.max(0.0) + rng.random_range(0.05..2.0);
            let w = Window::new(a, b).unwrap();
            // midpoint rule on the interpolant, 2000 points per sample period
            let (lo, hi) = (a.max(0.0), b.min(2.99));
            let n = ((hi - lo) * 100.0 * 2000.0).ceil() as usize;
            let h = (hi - lo) / n as f64;
            let oracle: f64 = (0..n)
                .map(|k| {
                    let tt = lo + (k as f64 + 0.5) * h;
                    let p = tt * 100.0;
                    let i = (p.floor() as usize).min(298);
                    x[i] + (p - i as f64) * (x[i + 1] - x[i])
                })
                .sum::<f64>()
                * h;
            let got = exposure_measure(&t, w).unwrap();
            assert!(
                (got - oracle).abs() <= 1e-6 * oracle.abs().max(1e-3),
                "{got} vs {oracle}"
            );
        }
    }

    proptest! {
        #[test]
        fn amplitude_and_time_equivariance(
            x in prop::collection::vec(-5.0..5.0f64, 3..300),
            k in 0.01..100.0f64,
            m in prop::sample::select(vec![2.0, 4.0, 0.5]),
        ) {
            let t = trace(x.clone());
            let w = Window::covering(&t);
            if let Ok(b) = locate_largest_bout(&t, w) {
                let s = bout_slope(b).unwrap().slope;
                prop_assert!(s > 0.0);
                let scaled = trace(x.iter().map(|v| v * k).collect());
                let sk = bout_slope(locate_largest_bout(&scaled, Window::covering(&scaled)).unwrap()).unwrap().slope;
                prop_assert!((sk - k * s).abs() <= 1e-12 * (k * s).abs());
                // same samples on a grid m times slower
                let slow = SensorTrace::from_samples(100.0 / m, 0.0, x.clone()).unwrap();
                let sm = bout_slope(locate_largest_bout(&slow, Window::covering(&slow)).unwrap()).unwrap().slope;
                prop_assert!((sm - s / m).abs() <= 1e-12 * s);
            }
        }

        #[test]
        fn enlarging_window_never_lowers_the_maximum(
            x in prop::collection::vec(-5.0..5.0f64, 10..300),
            a in 0usize..5, b in 5usize..10, grow in 1usize..5,
        ) {
            let t = trace(x);
            let small = Window::new(t.time_at(a), t.time_at(b)).unwrap();
            let big = Window::new(t.time_at(a.saturating_sub(grow)), t.time_at((b + grow).min(t.len() - 1))).unwrap();
            if let (Ok(s), Ok(l)) = (locate_largest_bout(&t, small), locate_largest_bout(&t, big)) {
                prop_assert!(l.max_value >= s.max_value);
            }
        }
    }
}
