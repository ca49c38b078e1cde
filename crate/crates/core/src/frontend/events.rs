//! JSON-lines form of event records: one object per trigger.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{EventRecord, Pulse, SensorEvent};
use crate::signal::{ConcentrationLabel, Environment, GasLabel, SensorTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorEventLine {
    pub sensor: String,
    pub sd_onset_s: Option<f64>,
    pub sd_offset_s: Option<f64>,
    pub delta_t_s: Option<f64>,
    pub inv_delta_t_per_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLine {
    pub trace_id: String,
    #[serde(default)]
    pub gas: Option<GasLabel>,
    #[serde(default)]
    pub concentration: Option<ConcentrationLabel>,
    #[serde(default)]
    pub environment: Environment,
    pub event_index: usize,
    /// 1-based peak window the trigger fell in, for plume recordings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak: Option<usize>,
    pub trigger_onset_s: f64,
    pub trigger_offset_s: Option<f64>,
    pub sensors: Vec<SensorEventLine>,
}

impl EventLine {
    /// Labels come from the first trace of the aligned set.
    pub fn from_record(
        trace_id: &str,
        traces: &[SensorTrace],
        event_index: usize,
        record: &EventRecord,
    ) -> Self {
        let meta = traces.first().map(|t| t.meta().clone()).unwrap_or_default();
        Self {
            trace_id: trace_id.to_string(),
            gas: meta.gas_primary,
            concentration: meta.concentration,
            environment: meta.environment,
            event_index,
            peak: None,
            trigger_onset_s: record.trigger.onset,
            trigger_offset_s: record.trigger.offset,
            sensors: record
                .sensors
                .iter()
                .enumerate()
                .map(|(k, e)| SensorEventLine {
                    sensor: traces
                        .get(k)
                        .map_or_else(|| format!("s{}", k + 1), |t| t.name().to_string()),
                    sd_onset_s: e.sd.map(|p| p.onset),
                    sd_offset_s: e.sd.and_then(|p| p.offset),
                    delta_t_s: e.delta_t,
                    inv_delta_t_per_s: e.inv_delta_t,
                })
                .collect(),
        }
    }

    pub fn to_record(&self) -> Result<EventRecord> {
        let trigger = Pulse::new(self.trigger_onset_s, self.trigger_offset_s)?;
        let sensors = self
            .sensors
            .iter()
            .map(|s| {
                let sd = s
                    .sd_onset_s
                    .map(|on| Pulse::new(on, s.sd_offset_s))
                    .transpose()?;
                Ok(SensorEvent {
                    sd,
                    delta_t: s.delta_t_s,
                    inv_delta_t: s.inv_delta_t_per_s,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EventRecord { trigger, sensors })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event lines serialize")
    }
}

pub fn read_events_jsonl(path: &Path) -> Result<Vec<EventLine>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
