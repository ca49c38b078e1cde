//! Trace CSV files and their JSON metadata sidecars.
//!
//! A trace file has a header `time_s,<sensor>...` followed by one row per
//! sample. All channels of a recording share the file and its time column.
//! The sidecar (`<stem>.meta.json`) carries the trial annotations and,
//! optionally, per-column sensor ids and channel kinds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::resample::{grid_len, interpolate_uniform};
use crate::signal::{check_aligned, ChannelKind, SensorTrace, StimulusProfile, TraceMeta};

/// Relative step deviation above which a time grid is rejected instead of resampled.
pub const MAX_JITTER: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorColumn {
    pub column: String,
    #[serde(default)]
    pub sensor_id: Option<u16>,
    #[serde(default)]
    pub channel_kind: ChannelKind,
}

/// Sidecar contents. Unknown keys are ignored so the file can carry notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Sidecar {
    #[serde(flatten)]
    pub meta: TraceMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensors: Vec<SensorColumn>,
}

/// How to read a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestSchema {
    pub time_column: String,
    /// Columns to keep, in order. `None` keeps every non-time column.
    pub sensor_columns: Option<Vec<String>>,
    pub sidecar: Sidecar,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            time_column: "time_s".into(),
            sensor_columns: None,
            sidecar: Sidecar::default(),
        }
    }
}

impl IngestSchema {
    /// Default schema with the sidecar next to `path`, if there is one.
    pub fn for_path(path: &Path) -> Result<Self> {
        let sidecar_path = sidecar_path(path);
        let sidecar = if sidecar_path.exists() {
            read_sidecar(&sidecar_path)?
        } else {
            Sidecar::default()
        };
        Ok(Self {
            sidecar,
            ..Self::default()
        })
    }
}

/// `dir/name.csv` -> `dir/name.meta.json`
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path)?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    sidecar.meta.validate()?;
    Ok(sidecar)
}

/// Reads one trace per sensor column from `path`.
pub fn ingest_trace_csv(path: &Path, schema: &IngestSchema) -> Result<Vec<SensorTrace>> {
    let text = fs::read_to_string(path)?;
    parse_trace_csv(path, &text, schema)
}

pub(crate) fn parse_trace_csv(
    path: &Path,
    text: &str,
    schema: &IngestSchema,
) -> Result<Vec<SensorTrace>> {
    let format_err = |message: String| Error::Format {
        path: path.to_owned(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(format_err("empty file".into()));
    }
    let time_idx = headers
        .iter()
        .position(|h| h == schema.time_column)
        .ok_or_else(|| format_err(format!("missing time column {:?}", schema.time_column)))?;
    let sensor_idx: Vec<(usize, String)> = match &schema.sensor_columns {
        Some(cols) => cols
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == c)
                    .map(|i| (i, c.clone()))
                    .ok_or_else(|| format_err(format!("missing sensor column {c:?}")))
            })
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != time_idx)
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };
    if sensor_idx.is_empty() {
        return Err(format_err("no sensor columns".into()));
    }

    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); sensor_idx.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                path: path.to_owned(),
                line,
                message: format!(
                    "column {} is not a number: {raw:?}",
                    headers.get(i).unwrap_or("?")
                ),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    message: format!(
                        "non-finite value in column {}",
                        headers.get(i).unwrap_or("?")
                    ),
                });
            }
            Ok(v)
        };
        let t = field(time_idx)?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    message: format!("time {t} does not increase (previous {prev})"),
                });
            }
        }
        times.push(t);
        for (col, &(i, _)) in columns.iter_mut().zip(&sensor_idx) {
            col.push(field(i)?);
        }
    }
    if times.is_empty() {
        return Err(format_err("empty file: no data rows".into()));
    }

    let grid = infer_grid(&times, schema.sidecar.sample_rate_hz).map_err(format_err)?;
    let by_column: BTreeMap<&str, &SensorColumn> = schema
        .sidecar
        .sensors
        .iter()
        .map(|s| (s.column.as_str(), s))
        .collect();

    sensor_idx
        .iter()
        .zip(columns)
        .enumerate()
        .map(|(k, ((_, name), values))| {
            let samples = match grid {
                Grid::Uniform { .. } => values,
                Grid::Resampled { rate, len } => {
                    interpolate_uniform(|i| times[i], &values, times[0], rate, len)
                }
            };
            let info = by_column.get(name.as_str());
            SensorTrace::new(
                info.and_then(|s| s.sensor_id).unwrap_or(k as u16 + 1),
                name.clone(),
                info.map(|s| s.channel_kind).unwrap_or_default(),
                grid.rate(),
                times[0],
                samples,
                schema.sidecar.meta.clone(),
            )
        })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy)]
enum Grid {
    Uniform { rate: f64 },
    Resampled { rate: f64, len: usize },
}

impl Grid {
    fn rate(self) -> f64 {
        match self {
            Grid::Uniform { rate } | Grid::Resampled { rate, .. } => rate,
        }
    }
}

/// Snap rates that are integers up to float noise in the time column.
fn snap_rate(rate: f64) -> f64 {
    let r = rate.round();
    if r > 0.0 && (rate - r).abs() <= 1e-6 * r {
        r
    } else {
        rate
    }
}

fn infer_grid(times: &[f64], declared_rate: Option<f64>) -> std::result::Result<Grid, String> {
    if times.len() < 2 {
        let rate = declared_rate.ok_or("a single row needs sample_rate_hz in the sidecar")?;
        return Ok(Grid::Uniform { rate });
    }
    let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    let median = steps[steps.len() / 2];
    let deviation = steps
        .iter()
        .map(|s| (s - median).abs() / median)
        .fold(0.0, f64::max);
    let span = times[times.len() - 1] - times[0];
    let mean_rate = snap_rate((times.len() - 1) as f64 / span);
    if deviation <= 1e-6 {
        let rate = match declared_rate {
            Some(r) if (r - mean_rate).abs() <= 1e-6 * r => r,
            Some(r) => {
                return Err(format!(
                    "declared sample rate {r} Hz disagrees with the time column ({mean_rate} Hz)"
                ))
            }
            None => mean_rate,
        };
        return Ok(Grid::Uniform { rate });
    }
    if deviation >= MAX_JITTER {
        return Err(format!(
            "irregular sampling: step deviates {:.1} % from the median step",
            deviation * 100.0
        ));
    }
    let rate = declared_rate.unwrap_or_else(|| snap_rate(1.0 / median));
    Ok(Grid::Resampled {
        rate,
        len: grid_len(span, rate),
    })
}

/// Writes aligned traces as one CSV (`time_s` first) with exact float text.
pub fn format_traces_csv(traces: &[SensorTrace]) -> Result<String> {
    check_aligned(traces)?;
    let mut out = String::from("time_s");
    for t in traces {
        if t.name().contains([',', '"', '\n']) {
            return Err(Error::InvalidArgument(format!(
                "sensor name {:?} cannot be a CSV header",
                t.name()
            )));
        }
        out.push(',');
        out.push_str(t.name());
    }
    out.push('\n');
    let first = &traces[0];
    for i in 0..first.len() {
        write!(out, "{}", first.time_at(i)).unwrap();
        for t in traces {
            write!(out, ",{}", t.samples()[i]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn sidecar_for(traces: &[SensorTrace]) -> Result<Sidecar> {
    check_aligned(traces)?;
    Ok(Sidecar {
        meta: traces[0].meta().clone(),
        sample_rate_hz: Some(traces[0].sample_rate()),
        sensors: traces
            .iter()
            .map(|t| SensorColumn {
                column: t.name().to_string(),
                sensor_id: Some(t.sensor_id()),
                channel_kind: t.channel_kind(),
            })
            .collect(),
    })
}

/// Writes `path` and its sidecar. Both files are replaced atomically.
pub fn export_traces(path: &Path, traces: &[SensorTrace]) -> Result<()> {
    let csv = format_traces_csv(traces)?;
    let sidecar = serde_json::to_string_pretty(&sidecar_for(traces)?)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    crate::io::write_atomic(path, csv.as_bytes())?;
    crate::io::write_atomic(&sidecar_path(path), format!("{sidecar}\n").as_bytes())
}

/// Reads a `time_s,relative_concentration` stimulus file.
pub fn read_profile_csv(path: &Path) -> Result<StimulusProfile> {
    let text = fs::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_owned(),
                    line,
                    message: format!("expected a number in column {}", i + 1),
                })
        };
        times.push(parse(0)?);
        values.push(parse(1)?);
    }
    StimulusProfile::new(times, values).map_err(|e| Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{ConcentrationLabel, ConcentrationLevel, Environment, GasLabel};
    use std::f64::consts::TAU;

    fn parse(text: &str) -> Result<Vec<SensorTrace>> {
        parse_trace_csv(Path::new("mem.csv"), text, &IngestSchema::default())
    }

    #[test]
    fn two_sensor_columns_at_100_hz() {
        let mut text = String::from("time_s,s1,s2\n");
        for i in 0..10 {
            text.push_str(&format!("{},{},{}\n", i as f64 * 0.01, i, 2 * i));
        }
        let traces = parse(&text).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].sample_rate(), 100.0);
        assert_eq!(traces[1].name(), "s2");
        assert_eq!(traces[1].samples()[9], 18.0);
        assert_eq!(traces[0].sensor_id(), 1);
    }

    #[test]
    fn time_only_file_is_rejected() {
        let err = parse("time_s\n0\n0.01\n").unwrap_err();
        assert!(err.to_string().contains("no sensor columns"), "{err}");
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(parse("").is_err());
        assert!(parse("time_s,s1\n")
            .unwrap_err()
            .to_string()
            .contains("empty"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("time_s,s1\n0,1\n0.01,abc\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let err = parse("time_s,s1\n0,1\n0.01,2,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn non_monotone_time_is_rejected() {
        let err = parse("time_s,s1\n0,1\n0.02,2\n0.01,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn heavy_jitter_is_rejected() {
        let err = parse("time_s,s1\n0,1\n0.01,2\n0.025,3\n0.035,4\n").unwrap_err();
        assert!(err.to_string().contains("irregular"), "{err}");
    }

    #[test]
    fn jittered_grid_is_resampled_against_analytic_sinusoid() {
        // steps of 0.0100 +/- 0.0002 s following a deterministic pattern
        let jitter = [0.0002, -0.0001, 0.0, -0.0002, 0.00015, 0.0001, -0.00015];
        let f = 0.5;
        let amp = 2.0;
        let mut t = 0.0;
        let mut text = String::from("time_s,s1\n");
        for i in 0..1500 {
            text.push_str(&format!("{t},{}\n", amp * (TAU * f * t).sin()));
            t += 0.01 + jitter[i % jitter.len()];
        }
        let traces = parse(&text).unwrap();
        let tr = &traces[0];
        assert_eq!(tr.sample_rate(), 100.0);
        let worst = tr
            .times()
            .zip(tr.samples())
            .map(|(ti, &y)| (y - amp * (TAU * f * ti).sin()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3 * amp, "max error {worst}");
    }

    #[test]
    fn schema_selects_and_orders_columns() {
        let schema = IngestSchema {
            time_column: "t".into(),
            sensor_columns: Some(vec!["b".into(), "a".into()]),
            sidecar: Sidecar::default(),
        };
        let traces =
            parse_trace_csv(Path::new("m.csv"), "a,t,b\n1,0,5\n2,0.5,6\n", &schema).unwrap();
        assert_eq!(traces[0].name(), "b");
        assert_eq!(traces[0].samples(), &[5.0, 6.0]);
        assert_eq!(traces[1].samples(), &[1.0, 2.0]);
        assert_eq!(traces[0].sample_rate(), 2.0);
    }

    #[test]
    fn sidecar_accepts_percent_or_level() {
        let s: Sidecar = serde_json::from_str(
            r#"{"gas_primary":"Eu","gas_secondary":"EB","trial":2,
                "environment":"plume","concentration":100,"note":"x"}"#,
        )
        .unwrap();
        assert_eq!(s.meta.gas_primary, Some(GasLabel::Eu));
        assert_eq!(s.meta.environment, Environment::Plume);
        assert_eq!(
            s.meta.concentration,
            Some(ConcentrationLabel::Level(ConcentrationLevel::C5))
        );
        let s: Sidecar = serde_json::from_str(r#"{"concentration":"C2-C3"}"#).unwrap();
        assert!(s.meta.concentration.unwrap().level().is_none());
    }
}
