use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{bandpass_all, FilterState};
use crate::frontend::FrontEndConfig;
use crate::signal::{check_aligned, SensorTrace};

/// Slack for comparing sample timestamps against interval edges.
const TIME_EPS: f64 = 1e-9;

/// Active interval `[onset, offset)`. `offset` is `None` while still high
/// at the end of the record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub onset: f64,
    pub offset: Option<f64>,
}

impl Pulse {
    pub fn new(onset: f64, offset: Option<f64>) -> Result<Self> {
        if !onset.is_finite() || offset.is_some_and(|o| !(o > onset)) {
            return Err(Error::InvalidArgument(format!(
                "pulse offset must follow onset, got ({onset}, {offset:?})"
            )));
        }
        Ok(Self { onset, offset })
    }

    fn end(&self) -> f64 {
        self.offset.unwrap_or(f64::INFINITY)
    }

    /// True when `self` lies inside `outer`.
    pub fn within(&self, outer: &Pulse) -> bool {
        self.onset >= outer.onset && self.end() <= outer.end()
    }
}

/// Slope-detection outcome of one sensor for one trigger.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorEvent {
    pub sd: Option<Pulse>,
    /// SD onset minus trigger onset; absent when there is no SD pulse or
    /// when the comparator was already high as the trigger rose.
    pub delta_t: Option<f64>,
    pub inv_delta_t: Option<f64>,
}

impl SensorEvent {
    fn new(sd: Option<Pulse>, trigger: &Pulse) -> Self {
        let delta_t = sd.map(|p| p.onset - trigger.onset).filter(|&d| d > 0.0);
        Self {
            sd,
            delta_t,
            inv_delta_t: delta_t.map(|d| 1.0 / d),
        }
    }
}

/// One global trigger and what every sensor did inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub trigger: Pulse,
    pub sensors: Vec<SensorEvent>,
}

/// Instant at which the segment from `(t_prev, x_prev)` to the next sample
/// `x_now`, one period `dt` later, passes `level`.
#[inline]
fn crossing_time(t_prev: f64, x_prev: f64, x_now: f64, level: f64, dt: f64) -> f64 {
    t_prev + (level - x_prev) / (x_now - x_prev) * dt
}

/// Onsets of upward crossings of `cd_threshold` by any channel, at least
/// `refractory` seconds apart. Comparators are continuous-time: a crossing
/// between two samples is placed on the line joining them, and the earliest
/// channel sets the onset.
pub fn change_detect(
    filtered: &[SensorTrace],
    cd_threshold: f64,
    refractory: f64,
) -> Result<Vec<f64>> {
    check_aligned(filtered)?;
    let first = &filtered[0];
    let dt = first.dt();
    let mut onsets: Vec<f64> = Vec::new();
    for i in 1..first.len() {
        let t_prev = first.time_at(i - 1);
        let earliest = filtered
            .iter()
            .filter_map(|t| {
                let x = t.samples();
                (x[i] >= cd_threshold && x[i - 1] < cd_threshold)
                    .then(|| crossing_time(t_prev, x[i - 1], x[i], cd_threshold, dt))
            })
            .reduce(f64::min);
        let Some(t) = earliest else { continue };
        if onsets
            .last()
            .is_none_or(|&last| t - last >= refractory - TIME_EPS)
        {
            onsets.push(t);
        }
    }
    Ok(onsets)
}

/// Global trigger started at `onset`.
pub fn ramp_timer(onset: f64, config: &FrontEndConfig) -> Pulse {
    Pulse {
        onset,
        offset: Some(onset + config.trigger_duration),
    }
}

/// Latch: a change arriving while a trigger is high is absorbed.
pub fn latch_triggers(onsets: &[f64], config: &FrontEndConfig) -> Vec<Pulse> {
    let mut out: Vec<Pulse> = Vec::new();
    for &t in onsets {
        if out.last().is_none_or(|p| t >= p.end() - TIME_EPS) {
            out.push(ramp_timer(t, config));
        }
    }
    out
}

/// First comparator pulse (`filtered >= sd_threshold`) that is high at or
/// after `within.onset` and rises before `within.offset`. An onset that
/// precedes `within.onset` is clipped to it.
pub fn slope_detect(filtered: &SensorTrace, sd_threshold: f64, within: &Pulse) -> Option<Pulse> {
    let x = filtered.samples();
    let dt = filtered.dt();
    let start = filtered.index_range(within.onset, f64::INFINITY)?.0;
    let limit = within.end() - TIME_EPS;
    let mut on = None;
    for i in start..x.len() {
        if x[i] >= sd_threshold {
            let rise = if i > 0 && x[i - 1] < sd_threshold {
                crossing_time(filtered.time_at(i - 1), x[i - 1], x[i], sd_threshold, dt)
            } else {
                filtered.time_at(i)
            };
            on = Some((i, rise.max(within.onset)));
            break;
        }
        if filtered.time_at(i) >= limit {
            break;
        }
    }
    let (i, onset) = on.filter(|&(_, t)| t < limit)?;
    let offset = (i + 1..x.len()).find(|&j| x[j] < sd_threshold).map(|j| {
        let fall = crossing_time(filtered.time_at(j - 1), x[j - 1], x[j], sd_threshold, dt);
        if fall > onset {
            fall
        } else {
            filtered.time_at(j)
        }
    });
    Some(Pulse { onset, offset })
}

/// Interval intersection, i.e. the AND gate on two active-high lines.
pub fn gate_and(sd: Option<Pulse>, trigger: &Pulse) -> Option<Pulse> {
    let sd = sd?;
    let onset = sd.onset.max(trigger.onset);
    let end = sd.end().min(trigger.end());
    if onset >= end {
        return None;
    }
    Some(Pulse {
        onset,
        offset: end.is_finite().then_some(end),
    })
}

/// Full front-end on raw aligned traces: band-pass, change detection,
/// ramp timer, per-sensor slope detection and (gated variant) AND gates.
pub fn simulate_front_end(
    traces: &[SensorTrace],
    config: &FrontEndConfig,
) -> Result<Vec<EventRecord>> {
    config.validate()?;
    check_aligned(traces)?;
    let filtered = bandpass_all(traces, config.filter)?;
    simulate_filtered(&filtered, config)
}

/// Same as [`simulate_front_end`] on traces that are already band-passed.
pub fn simulate_filtered(
    filtered: &[SensorTrace],
    config: &FrontEndConfig,
) -> Result<Vec<EventRecord>> {
    config.validate()?;
    check_aligned(filtered)?;
    let thresholds = (0..filtered.len())
        .map(|k| config.sd_threshold.for_sensor(k))
        .collect::<Result<Vec<_>>>()?;
    let onsets = change_detect(filtered, config.cd_threshold, config.refractory)?;
    Ok(latch_triggers(&onsets, config)
        .into_iter()
        .map(|trigger| {
            let sensors = filtered
                .iter()
                .zip(&thresholds)
                .map(|(f, &th)| {
                    let sd = slope_detect(f, th, &trigger);
                    let sd = if config.variant.is_gated() {
                        gate_and(sd, &trigger)
                    } else {
                        sd
                    };
                    SensorEvent::new(sd, &trigger)
                })
                .collect();
            EventRecord { trigger, sensors }
        })
        .collect())
}

#[derive(Debug, Clone)]
struct OpenRecord {
    trigger: Pulse,
    /// SD onset and, once seen, offset time per sensor.
    sd: Vec<Option<(f64, Option<f64>)>>,
    searching: Vec<bool>,
}

/// Sample-by-sample form of the front-end: one filter per channel, one
/// shared change-detection latch. Produces the same records as
/// [`simulate_front_end`].
#[derive(Debug, Clone)]
pub struct StreamingFrontEnd {
    config: FrontEndConfig,
    thresholds: Vec<f64>,
    filters: Vec<FilterState>,
    t0: f64,
    sample_rate: f64,
    index: usize,
    prev: Vec<f64>,
    last_onset: Option<f64>,
    open: Vec<OpenRecord>,
}

impl StreamingFrontEnd {
    pub fn new(config: FrontEndConfig, sensors: usize, sample_rate: f64, t0: f64) -> Result<Self> {
        config.validate()?;
        if sensors == 0 {
            return Err(Error::InvalidArgument("no sensors".into()));
        }
        let thresholds = (0..sensors)
            .map(|k| config.sd_threshold.for_sensor(k))
            .collect::<Result<Vec<_>>>()?;
        let filters = (0..sensors)
            .map(|_| FilterState::new(config.filter, sample_rate))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            thresholds,
            filters,
            t0,
            sample_rate,
            index: 0,
            prev: Vec::new(),
            last_onset: None,
            open: Vec::new(),
        })
    }

    fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    /// Feeds one raw sample per sensor; returns records that can no longer change.
    pub fn push(&mut self, raw: &[f64]) -> Result<Vec<EventRecord>> {
        if raw.len() != self.filters.len() {
            return Err(Error::Mismatch(format!(
                "expected {} channels, got {}",
                self.filters.len(),
                raw.len()
            )));
        }
        let x = self
            .filters
            .iter_mut()
            .zip(raw)
            .map(|(f, &v)| f.step(v))
            .collect::<Result<Vec<_>>>()?;
        let i = self.index;
        let t = self.time_at(i);
        let cd = self.config.cd_threshold;

        let dt = 1.0 / self.sample_rate;
        if i > 0 {
            let t_prev = self.time_at(i - 1);
            let earliest = x
                .iter()
                .zip(&self.prev)
                .filter(|&(&now, &before)| now >= cd && before < cd)
                .map(|(&now, &before)| crossing_time(t_prev, before, now, cd, dt))
                .reduce(f64::min);
            if let Some(onset) = earliest {
                let armed = self
                    .last_onset
                    .is_none_or(|last| onset - last >= self.config.refractory - TIME_EPS);
                if armed {
                    self.last_onset = Some(onset);
                    let latched = self
                        .open
                        .last()
                        .is_some_and(|r| onset < r.trigger.end() - TIME_EPS);
                    if !latched {
                        self.open.push(OpenRecord {
                            trigger: ramp_timer(onset, &self.config),
                            sd: vec![None; x.len()],
                            searching: vec![true; x.len()],
                        });
                    }
                }
            }
        }

        let t_prev = if i > 0 { self.time_at(i - 1) } else { t };
        for rec in &mut self.open {
            let limit = rec.trigger.end() - TIME_EPS;
            if t < rec.trigger.onset - TIME_EPS {
                continue;
            }
            for (k, &v) in x.iter().enumerate() {
                let th = self.thresholds[k];
                let before = (i > 0).then(|| self.prev[k]);
                match rec.sd[k] {
                    None if rec.searching[k] => {
                        if v >= th {
                            rec.searching[k] = false;
                            let rise = match before {
                                Some(b) if b < th => crossing_time(t_prev, b, v, th, dt),
                                _ => t,
                            };
                            let onset = rise.max(rec.trigger.onset);
                            if onset < limit {
                                rec.sd[k] = Some((onset, None));
                            }
                        } else if t >= limit {
                            rec.searching[k] = false;
                        }
                    }
                    Some((on, None)) if v < th => {
                        let b = before.expect("offset follows an onset sample");
                        let fall = crossing_time(t_prev, b, v, th, dt);
                        rec.sd[k] = Some((on, Some(if fall > on { fall } else { t })));
                    }
                    _ => {}
                }
            }
        }
        self.prev = x;
        self.index += 1;

        let done = self
            .open
            .iter()
            .take_while(|r| {
                !r.searching.iter().any(|&s| s)
                    && r.sd.iter().all(|s| !matches!(s, Some((_, None))))
            })
            .count();
        let finished: Vec<OpenRecord> = self.open.drain(..done).collect();
        Ok(finished.into_iter().map(|r| self.close(r)).collect())
    }

    /// Flushes records still waiting for a comparator to fall.
    pub fn finish(mut self) -> Vec<EventRecord> {
        let open = std::mem::take(&mut self.open);
        open.into_iter().map(|r| self.close(r)).collect()
    }

    fn close(&self, rec: OpenRecord) -> EventRecord {
        let sensors = rec
            .sd
            .iter()
            .map(|s| {
                let sd = s.map(|(onset, offset)| Pulse { onset, offset });
                let sd = if self.config.variant.is_gated() {
                    gate_and(sd, &rec.trigger)
                } else {
                    sd
                };
                SensorEvent::new(sd, &rec.trigger)
            })
            .collect();
        EventRecord {
            trigger: rec.trigger,
            sensors,
        }
    }
}
