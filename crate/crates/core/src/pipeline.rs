//! Batch processing behind the CLI: bout analysis, front-end simulation and
//! decoding over a set of recordings, plus the run manifest that pins the
//! configuration and every input so a run can be repeated exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bout::{bout_slope, exposure_measure, locate_largest_bout, Window};
use crate::config::AppConfig;
use crate::decode::{
    classify_gas, estimate_concentration, fit_calibration, CalibrationCurve, FeatureSpace,
    FeatureVector, GasModel, RangeFlag, Scope,
};
use crate::error::{Error, Result};
use crate::filter::bandpass_all;
use crate::frontend::{simulate_front_end, EventLine, FrontEndConfig, Variant};
use crate::io::write_atomic;
use crate::report::render_reports;
use crate::signal::{
    check_aligned, ingest_trace_csv, sidecar_path, synth_battery, ConcentrationLabel,
    ConcentrationLevel, Environment, GasLabel, IngestSchema, SensorTrace,
};

pub const MANIFEST_FILE: &str = "manifest.json";

/// One recording: aligned traces, one per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub traces: Vec<SensorTrace>,
}

impl Recording {
    pub fn new(id: impl Into<String>, traces: Vec<SensorTrace>) -> Result<Self> {
        let id = id.into();
        check_aligned(&traces).map_err(|e| e.at("ingest", id.clone()))?;
        Ok(Self { id, traces })
    }

    pub fn environment(&self) -> Environment {
        self.traces[0].meta().environment
    }

    pub fn sensor_names(&self) -> Vec<String> {
        self.traces.iter().map(|t| t.name().to_string()).collect()
    }
}

/// Trace files (`*.csv`) in `dir`, sorted by name.
pub fn list_trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries =
        fs::read_dir(dir).map_err(|e| Error::from(e).at("ingest", dir.display().to_string()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(
            Error::InvalidArgument(format!("no trace files (*.csv) in {}", dir.display()))
                .at("ingest", dir.display().to_string()),
        );
    }
    Ok(files)
}

/// Reads one recording per file; the id is the file stem.
pub fn load_recordings(paths: &[PathBuf]) -> Result<Vec<Recording>> {
    paths
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let traces = IngestSchema::for_path(p)
                .and_then(|schema| ingest_trace_csv(p, &schema))
                .map_err(|e| e.at("ingest", p.display().to_string()))?;
            Recording::new(id, traces)
        })
        .collect()
}

/// The configured single-pulse battery: every gas of the model at every
/// level, `synth.trials` times.
pub fn synthetic_recordings(cfg: &AppConfig) -> Result<Vec<Recording>> {
    let battery = synth_battery(
        &cfg.model,
        &cfg.model.gases(),
        &ConcentrationLevel::ALL,
        cfg.synth.trials,
        cfg.synth.noise_sigma,
        cfg.seed,
    )
    .map_err(|e| e.at("synth", "battery"))?;
    battery
        .into_iter()
        .map(|traces| Recording::new(traces[0].meta().trial_id(), traces))
        .collect()
}

/// Largest bout of one sensor in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoutRow {
    pub trace_id: String,
    pub gas: Option<GasLabel>,
    pub concentration: Option<ConcentrationLabel>,
    pub environment: Environment,
    pub sensor: String,
    /// 1-based peak window on plume recordings.
    pub peak: Option<usize>,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub min_t_s: f64,
    pub max_t_s: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub slope: f64,
    /// Area under the baseline-subtracted raw trace over the same window.
    pub exposure: f64,
}

/// Front-end settings for both variants, resolved once per run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: AppConfig,
    gated: FrontEndConfig,
    ungated: FrontEndConfig,
    windows: Option<Vec<Window>>,
}

impl Prepared {
    pub fn new(config: &AppConfig) -> Result<Self> {
        config.validate()?;
        let resolve = |v| {
            config
                .frontend_for(v)
                .map_err(|e| e.at("config", "frontend"))
        };
        Ok(Self {
            gated: resolve(Variant::SinglePulseGated)?,
            ungated: resolve(Variant::PlumeUngated)?,
            config: config.clone(),
            windows: None,
        })
    }

    /// Uses `windows` on every recording, numbered as peaks from 1.
    pub fn with_windows(mut self, windows: Vec<Window>) -> Self {
        self.windows = Some(windows);
        self
    }

    /// Explicit `frontend.variant`, else the one matching the recording.
    pub fn frontend(&self, environment: Environment) -> &FrontEndConfig {
        let variant = self.config.frontend.variant.unwrap_or(match environment {
            Environment::SinglePulse => Variant::SinglePulseGated,
            Environment::Plume => Variant::PlumeUngated,
        });
        match variant {
            Variant::SinglePulseGated => &self.gated,
            Variant::PlumeUngated => &self.ungated,
        }
    }

    /// Analysis windows with their 1-based peak number, if any.
    fn windows(&self, rec: &Recording) -> Vec<(Option<usize>, Window)> {
        if let Some(ws) = &self.windows {
            return ws
                .iter()
                .enumerate()
                .map(|(k, w)| (Some(k + 1), *w))
                .collect();
        }
        match rec.environment() {
            Environment::SinglePulse => vec![(None, Window::covering(&rec.traces[0]))],
            Environment::Plume => self
                .config
                .analysis
                .plume_windows
                .iter()
                .enumerate()
                .map(|(k, w)| (Some(k + 1), *w))
                .collect(),
        }
    }

    pub fn analyze_bouts(&self, rec: &Recording) -> Result<Vec<BoutRow>> {
        let a = &self.config.analysis;
        let spec = match rec.environment() {
            Environment::SinglePulse => a.single_pulse_filter,
            Environment::Plume => a.plume_filter,
        };
        let tag = |e: Error| e.at("bouts", rec.id.clone());
        let filtered = bandpass_all(&rec.traces, spec).map_err(tag)?;
        let meta = rec.traces[0].meta();
        let mut rows = Vec::new();
        for (raw, f) in rec.traces.iter().zip(&filtered) {
            let base = raw.samples()[0];
            let shifted = raw
                .with_samples(raw.samples().iter().map(|v| v - base).collect())
                .map_err(tag)?;
            for (peak, window) in self.windows(rec) {
                let bout = match locate_largest_bout(f, window) {
                    Ok(b) => b,
                    Err(Error::NoBout { .. } | Error::WindowOutside { .. }) => continue,
                    Err(e) => return Err(tag(e)),
                };
                let slope = bout_slope(bout).map_err(tag)?.slope;
                rows.push(BoutRow {
                    trace_id: rec.id.clone(),
                    gas: meta.gas_primary.clone(),
                    concentration: meta.concentration,
                    environment: meta.environment,
                    sensor: raw.name().to_string(),
                    peak,
                    window_start_s: window.t_start,
                    window_end_s: window.t_end,
                    min_t_s: bout.min_t,
                    max_t_s: bout.max_t,
                    min_value: bout.min_value,
                    max_value: bout.max_value,
                    slope,
                    exposure: exposure_measure(&shifted, window).map_err(tag)?,
                });
            }
        }
        Ok(rows)
    }

    pub fn simulate(&self, rec: &Recording) -> Result<Vec<EventLine>> {
        let records = simulate_front_end(&rec.traces, self.frontend(rec.environment()))
            .map_err(|e| e.at("simulate", rec.id.clone()))?;
        let windows = self.windows(rec);
        Ok(records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut line = EventLine::from_record(&rec.id, &rec.traces, i, r);
                line.peak = windows
                    .iter()
                    .find(|(p, w)| p.is_some() && w.contains(r.trigger.onset))
                    .and_then(|(p, _)| *p);
                line
            })
            .collect())
    }
}

/// Decoded feature of one recording (or one plume peak).
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeRow {
    pub trace_id: String,
    pub peak: Option<usize>,
    pub gas: Option<GasLabel>,
    pub concentration: Option<ConcentrationLabel>,
    pub environment: Environment,
    pub per_sensor: Vec<Option<f64>>,
    pub summed: Option<f64>,
    pub predicted_gas: Option<GasLabel>,
    pub estimated_percent: Option<f64>,
    pub flags: Vec<String>,
}

impl DecodeRow {
    fn feature(&self) -> Option<FeatureVector> {
        FeatureVector::new(self.per_sensor.clone()).ok()
    }

    fn level(&self) -> Option<ConcentrationLevel> {
        self.concentration.and_then(ConcentrationLabel::level)
    }

    /// Single-pulse row with a known level and a feature.
    fn labelled(&self) -> Option<(GasLabel, ConcentrationLevel, FeatureVector)> {
        if self.environment != Environment::SinglePulse || self.peak.is_some() {
            return None;
        }
        Some((self.gas.clone()?, self.level()?, self.feature()?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub sensors: Vec<String>,
    pub rows: Vec<DecodeRow>,
    pub curves: Vec<CalibrationCurve>,
    pub gas_model: Option<GasModel>,
    pub notes: Vec<String>,
}

/// Fitted decoders: calibration curves and, when it could be fitted, the
/// gas recognizer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decoders {
    pub curves: Vec<CalibrationCurve>,
    pub gas_model: Option<GasModel>,
    pub notes: Vec<String>,
}

/// One row per recording and plume peak, from the first event with a latency.
fn feature_rows(lines: &[EventLine]) -> Result<(Vec<String>, Vec<DecodeRow>)> {
    let tag = |e: Error| e.at("decode", "events");
    let sensors: Vec<String> = lines
        .first()
        .map(|l| l.sensors.iter().map(|s| s.sensor.clone()).collect())
        .unwrap_or_default();
    if let Some(l) = lines.iter().find(|l| l.sensors.len() != sensors.len()) {
        return Err(tag(Error::Mismatch(format!(
            "{} reports {} sensors, expected {}",
            l.trace_id,
            l.sensors.len(),
            sensors.len()
        ))));
    }

    let mut groups: Vec<((String, Option<usize>), Vec<&EventLine>)> = Vec::new();
    for l in lines {
        let key = (l.trace_id.clone(), l.peak);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(l),
            None => groups.push((key, vec![l])),
        }
    }
    let rows: Vec<DecodeRow> = groups
        .into_iter()
        .map(|((trace_id, peak), ls)| {
            let first = ls[0];
            let chosen = ls
                .iter()
                .find(|l| l.sensors.iter().any(|s| s.inv_delta_t_per_s.is_some()));
            let per_sensor = chosen.map_or_else(
                || vec![None; sensors.len()],
                |l| l.sensors.iter().map(|s| s.inv_delta_t_per_s).collect(),
            );
            let feature = FeatureVector::new(per_sensor.clone()).ok();
            let mut flags = Vec::new();
            match &feature {
                None => flags.push("no_feature".to_string()),
                Some(f) => {
                    for (name, m) in sensors.iter().zip(f.missing()) {
                        if m {
                            flags.push(format!("missing:{name}"));
                        }
                    }
                }
            }
            DecodeRow {
                trace_id,
                peak,
                gas: first.gas.clone(),
                concentration: first.concentration,
                environment: first.environment,
                per_sensor,
                summed: feature.map(|f| f.summed),
                predicted_gas: None,
                estimated_percent: None,
                flags,
            }
        })
        .collect();
    Ok((sensors, rows))
}

/// Calibration curves per gas and scope from the single-pulse rows, and the
/// gas recognizer from rows at the recognition level.
pub fn fit_decoders(rows: &[DecodeRow], sensors: usize, cfg: &AppConfig) -> Result<Decoders> {
    let mut notes = Vec::new();
    let mut by_gas: BTreeMap<GasLabel, Vec<(ConcentrationLevel, FeatureVector)>> = BTreeMap::new();
    for (gas, level, f) in rows.iter().filter_map(DecodeRow::labelled) {
        by_gas.entry(gas).or_default().push((level, f));
    }
    let scopes: Vec<Scope> = (0..sensors)
        .map(Scope::Sensor)
        .chain([Scope::Summed])
        .collect();
    let mut curves = Vec::new();
    for (gas, samples) in &by_gas {
        for &scope in &scopes {
            match fit_calibration(samples, gas.clone(), scope) {
                Ok(c) => curves.push(c),
                Err(e) => notes.push(format!("calibration {gas}/{scope} skipped: {e}")),
            }
        }
    }

    let reference = cfg
        .recognition_level()
        .map_err(|e| e.at("decode", "config"))?;
    let training: Vec<(GasLabel, FeatureVector)> = rows
        .iter()
        .filter_map(DecodeRow::labelled)
        .filter(|(_, l, _)| *l == reference)
        .map(|(g, _, f)| (g, f))
        .collect();
    let gas_model = if training.is_empty() {
        None
    } else {
        match GasModel::fit(&training, FeatureSpace::PerSensor) {
            Ok(m) => Some(m),
            Err(e) => {
                notes.push(format!("gas model skipped: {e}"));
                None
            }
        }
    };

    Ok(Decoders {
        curves,
        gas_model,
        notes,
    })
}

/// Fits decoders on `lines` and decodes them.
pub fn decode_events(lines: &[EventLine], cfg: &AppConfig) -> Result<Decoded> {
    let (sensors, rows) = feature_rows(lines)?;
    let decoders = fit_decoders(&rows, sensors.len(), cfg)?;
    apply_decoders(sensors, rows, decoders, cfg)
}

/// Decodes `lines` with decoders fitted elsewhere.
pub fn decode_events_with(
    lines: &[EventLine],
    decoders: Decoders,
    cfg: &AppConfig,
) -> Result<Decoded> {
    let (sensors, rows) = feature_rows(lines)?;
    apply_decoders(sensors, rows, decoders, cfg)
}

fn apply_decoders(
    sensors: Vec<String>,
    mut rows: Vec<DecodeRow>,
    decoders: Decoders,
    cfg: &AppConfig,
) -> Result<Decoded> {
    let tag = |e: Error| e.at("decode", "events");
    let reference = cfg.recognition_level().map_err(tag)?;
    let Decoders {
        curves,
        gas_model,
        notes,
    } = decoders;
    for row in &mut rows {
        let Some(f) = row.feature() else { continue };
        if let (Some(m), Some(level)) = (&gas_model, row.level()) {
            if level == reference && row.environment == Environment::SinglePulse {
                let c = classify_gas(m, &f).map_err(tag)?;
                if c.ambiguous {
                    row.flags.push("ambiguous".into());
                }
                row.predicted_gas = Some(c.gas);
            }
        }
        let curve = row.gas.as_ref().and_then(|g| {
            curves
                .iter()
                .find(|c| c.gas() == g && c.scope() == Scope::Summed)
        });
        if row.environment == Environment::SinglePulse {
            if let Some(curve) = curve {
                let est = estimate_concentration(curve, &f).map_err(tag)?;
                row.estimated_percent = Some(est.percent);
                match est.out_of_range {
                    Some(RangeFlag::Below) => row.flags.push("below_range".into()),
                    Some(RangeFlag::Above) => row.flags.push("above_range".into()),
                    None => {}
                }
            }
        }
    }
    Ok(Decoded {
        sensors,
        rows,
        curves,
        gas_model,
        notes,
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    w.into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

pub fn format_bouts_csv(rows: &[BoutRow]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        if rows.is_empty() {
            w.write_record([
                "trace_id",
                "gas",
                "concentration",
                "environment",
                "sensor",
                "peak",
                "window_start_s",
                "window_end_s",
                "min_t_s",
                "max_t_s",
                "min_value",
                "max_value",
                "slope",
                "exposure",
            ])?;
        }
        rows.iter().try_for_each(|r| w.serialize(r))
    })
}

pub fn read_bouts_csv(path: &Path) -> Result<Vec<BoutRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_read_error(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_read_error(path, e)))
        .collect()
}

fn csv_read_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

const INV_SUFFIX: &str = "_inv_delta_t";

pub fn format_decode_csv(decoded: &Decoded) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        let mut header: Vec<String> = ["trace_id", "peak", "gas", "concentration", "environment"]
            .map(String::from)
            .to_vec();
        header.extend(decoded.sensors.iter().map(|s| format!("{s}{INV_SUFFIX}")));
        header.extend(
            [
                "summed_inv_delta_t",
                "predicted_gas",
                "estimated_percent",
                "flags",
            ]
            .map(String::from),
        );
        w.write_record(&header)?;
        for r in &decoded.rows {
            let mut rec = vec![
                r.trace_id.clone(),
                opt(&r.peak),
                opt(&r.gas),
                opt(&r.concentration),
                environment_name(r.environment).to_string(),
            ];
            rec.extend(r.per_sensor.iter().map(opt));
            rec.extend([
                opt(&r.summed),
                opt(&r.predicted_gas),
                opt(&r.estimated_percent),
                r.flags.join(";"),
            ]);
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

fn environment_name(e: Environment) -> &'static str {
    match e {
        Environment::SinglePulse => "single_pulse",
        Environment::Plume => "plume",
    }
}

/// Sensor names and rows of a decode CSV.
pub fn read_decode_csv(path: &Path) -> Result<(Vec<String>, Vec<DecodeRow>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_read_error(path, e))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_read_error(path, e))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format {
                path: path.to_owned(),
                message: format!("missing column {name}"),
            })
    };
    let sensor_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.strip_suffix(INV_SUFFIX)
                .filter(|s| *s != "summed")
                .map(|s| (i, s.to_string()))
        })
        .collect();
    let [c_id, c_peak, c_gas, c_conc, c_env, c_sum, c_pred, c_est, c_flags] = [
        "trace_id",
        "peak",
        "gas",
        "concentration",
        "environment",
        "summed_inv_delta_t",
        "predicted_gas",
        "estimated_percent",
        "flags",
    ]
    .map(col);
    let (c_id, c_peak, c_gas, c_conc, c_env) = (c_id?, c_peak?, c_gas?, c_conc?, c_env?);
    let (c_sum, c_pred, c_est, c_flags) = (c_sum?, c_pred?, c_est?, c_flags?);

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_read_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str, v: &str| Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("bad {what} {v:?}"),
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        fn parse_opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, ()> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| ())
            }
        }
        let num = |i: usize| parse_opt::<f64>(field(i)).map_err(|_| bad("number", field(i)));
        let environment = match field(c_env) {
            "single_pulse" => Environment::SinglePulse,
            "plume" => Environment::Plume,
            v => return Err(bad("environment", v)),
        };
        rows.push(DecodeRow {
            trace_id: field(c_id).to_string(),
            peak: parse_opt(field(c_peak)).map_err(|_| bad("peak", field(c_peak)))?,
            gas: parse_opt(field(c_gas)).map_err(|_| bad("gas", field(c_gas)))?,
            concentration: parse_opt(field(c_conc))
                .map_err(|_| bad("concentration", field(c_conc)))?,
            environment,
            per_sensor: sensor_cols
                .iter()
                .map(|(i, _)| num(*i))
                .collect::<Result<_>>()?,
            summed: num(c_sum)?,
            predicted_gas: parse_opt(field(c_pred)).map_err(|_| bad("gas", field(c_pred)))?,
            estimated_percent: num(c_est)?,
            flags: field(c_flags)
                .split(';')
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        });
    }
    Ok((sensor_cols.into_iter().map(|(_, s)| s).collect(), rows))
}

pub fn format_events_jsonl(lines: &[EventLine]) -> Vec<u8> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.to_json());
        out.push('\n');
    }
    out.into_bytes()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Where a pipeline run takes its recordings from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// The configured synthetic battery.
    Synthetic,
    /// Every `*.csv` in a directory.
    Directory { path: String },
}

/// Everything needed to repeat a run: the resolved configuration, the
/// digests of every input and of every output it produced. Output paths are
/// relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub source: Source,
    pub config: AppConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

fn digest_inputs(files: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    for f in files {
        for p in [f.clone(), sidecar_path(f)] {
            if p == *f || p.exists() {
                out.push(FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_hex(&fs::read(&p)?),
                });
            }
        }
    }
    Ok(out)
}

/// Thread pool bounded by `jobs` (`None`: one thread per core).
pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Bouts and events of every recording, in input order.
pub fn analyze_all(
    prepared: &Prepared,
    recordings: &[Recording],
) -> Result<(Vec<BoutRow>, Vec<EventLine>)> {
    let per_rec = thread_pool(prepared.config.jobs)?.install(|| {
        recordings
            .par_iter()
            .map(|r| Ok((prepared.analyze_bouts(r)?, prepared.simulate(r)?)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut bouts = Vec::new();
    let mut events = Vec::new();
    for (b, e) in per_rec {
        bouts.extend(b);
        events.extend(e);
    }
    Ok((bouts, events))
}

/// Runs every stage and writes the outputs and `manifest.json` into `out_dir`.
pub fn run_pipeline(source: &Source, cfg: &AppConfig, out_dir: &Path) -> Result<RunManifest> {
    let prepared = Prepared::new(cfg)?;
    let (recordings, inputs) = match source {
        Source::Synthetic => (synthetic_recordings(cfg)?, Vec::new()),
        Source::Directory { path } => {
            let files = list_trace_files(Path::new(path))?;
            let inputs = digest_inputs(&files)?;
            (load_recordings(&files)?, inputs)
        }
    };
    let sensors = recordings[0].sensor_names();
    if let Some(r) = recordings.iter().find(|r| r.sensor_names() != sensors) {
        return Err(
            Error::Mismatch(format!("sensors differ from {}", recordings[0].id))
                .at("ingest", r.id.clone()),
        );
    }
    let (bouts, events) = analyze_all(&prepared, &recordings)?;
    let decoded = decode_events(&events, cfg)?;

    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("bouts.csv".into(), format_bouts_csv(&bouts)?),
        ("events.jsonl".into(), format_events_jsonl(&events)),
        ("decode.csv".into(), format_decode_csv(&decoded)?),
        ("calibration.json".into(), to_pretty_json(&decoded.curves)),
    ];
    if let Some(m) = &decoded.gas_model {
        files.push(("gas_model.json".into(), to_pretty_json(m)));
    }
    for (name, svg) in render_reports(&bouts, &decoded.rows, &decoded.sensors) {
        files.push((name, svg.into_bytes()));
    }

    let mut outputs = Vec::new();
    for (name, bytes) in &files {
        write_atomic(&out_dir.join(name), bytes).map_err(|e| e.at("write", name.clone()))?;
        outputs.push(FileDigest {
            path: name.clone(),
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        source: source.clone(),
        config: AppConfig {
            jobs: None,
            ..cfg.clone()
        },
        inputs,
        outputs,
        notes: decoded.notes,
    };
    write_atomic(&out_dir.join(MANIFEST_FILE), &to_pretty_json(&manifest))
        .map_err(|e| e.at("write", MANIFEST_FILE))?;
    Ok(manifest)
}

/// Repeats the run recorded in `manifest_path` into `out_dir`. Inputs whose
/// contents changed since the recorded run are rejected.
pub fn rerun_manifest(
    manifest_path: &Path,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<RunManifest> {
    let manifest = RunManifest::read(manifest_path)
        .map_err(|e| e.at("manifest", manifest_path.display().to_string()))?;
    for input in &manifest.inputs {
        let bytes =
            fs::read(&input.path).map_err(|e| Error::from(e).at("manifest", input.path.clone()))?;
        if sha256_hex(&bytes) != input.sha256 {
            return Err(
                Error::Mismatch("contents changed since the recorded run".into())
                    .at("manifest", input.path.clone()),
            );
        }
    }
    let cfg = AppConfig {
        jobs,
        ..manifest.config.clone()
    };
    run_pipeline(&manifest.source, &cfg, out_dir)
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}
