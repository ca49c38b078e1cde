use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use moxfront::bout::Window;
use moxfront::config::AppConfig;
use moxfront::decode::{CalibrationCurve, GasModel};
use moxfront::filter::{bandpass_all, FilterSpec};
use moxfront::frontend::{read_events_jsonl, Variant};
use moxfront::io::write_atomic;
use moxfront::pipeline::{
    analyze_all, decode_events, decode_events_with, format_bouts_csv, format_decode_csv,
    format_events_jsonl, load_recordings, read_bouts_csv, read_decode_csv, rerun_manifest,
    run_pipeline, to_pretty_json, Decoded, Decoders, Prepared, Source,
};
use moxfront::report::render_reports;
use moxfront::signal::{
    export_traces, ingest_trace_csv, read_profile_csv, read_sidecar, synth_battery, synth_plume,
    ConcentrationLevel, Environment, GasLabel, IngestSchema, StimulusProfile,
};

/// Event-based MOx e-nose front-end: filtering, bout analysis, analog
/// event-stage simulation and inverse-latency decoding.
///
/// Settings are layered: --config file, then MOXFRONT_* environment
/// variables (`__` separates table levels), then flags.
#[derive(Parser, Debug)]
#[command(name = "moxfront", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthetic recordings.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-recording stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for every output file.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a trace CSV and rewrite it on a uniform grid with its sidecar.
    Ingest(IngestArgs),
    /// Write synthetic recordings.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Band-pass filter trace files.
    Filter(FilterArgs),
    /// Largest bout, bout slope and exposure per sensor and window.
    Bouts(BoutsArgs),
    /// Run the front-end simulation and write events.jsonl.
    Simulate(SimulateArgs),
    /// Decode events into features, concentration estimates and gas labels.
    Decode(DecodeArgs),
    /// Bouts, simulation, decoding and figures with a run manifest.
    Pipeline(PipelineArgs),
    /// Redraw the figures from a finished run.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    input: PathBuf,
    #[arg(long, default_value = "time_s")]
    time_column: String,
    /// Sensor columns to keep, in order (default: all).
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Sidecar JSON (default: <stem>.meta.json next to the input).
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Single-pulse recordings, one file per trial.
    Pulse {
        /// Gases to synthesize (default: every gas of the model).
        #[arg(long)]
        gas: Vec<GasLabel>,
        /// Levels to synthesize (default: C1..C5).
        #[arg(long)]
        level: Vec<ConcentrationLevel>,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Response to a plume stimulus, one file with every sensor.
    Plume {
        /// Stimulus CSV (`time_s,relative_concentration`).
        #[arg(long, conflicts_with = "peaks", required_unless_present = "peaks")]
        profile: Option<PathBuf>,
        /// Whiff onsets in seconds, as a shortcut for a profile.
        #[arg(long, value_delimiter = ',')]
        peaks: Option<Vec<f64>>,
        /// Whiff length for --peaks.
        #[arg(long, default_value_t = 0.5)]
        whiff: f64,
        #[arg(long)]
        gas: GasLabel,
        #[arg(long)]
        noise: Option<f64>,
        /// Output file stem (default: plume_<gas>).
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Args, Debug)]
struct FilterArgs {
    inputs: Vec<PathBuf>,
    /// High-pass corner (default: the analysis filter for the recording).
    #[arg(long, requires = "f_high")]
    f_low: Option<f64>,
    #[arg(long, requires = "f_low")]
    f_high: Option<f64>,
}

#[derive(Args, Debug)]
struct BoutsArgs {
    inputs: Vec<PathBuf>,
    /// Analysis window `start:end` in seconds; repeat for several peaks.
    #[arg(long)]
    window: Vec<Window>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    inputs: Vec<PathBuf>,
    /// Front-end variant (default: chosen from each recording's environment).
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    events: PathBuf,
    /// Use these calibration curves instead of fitting them.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Use this gas model instead of fitting one.
    #[arg(long)]
    gas_model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Directory of trace CSVs.
    #[arg(long, conflicts_with_all = ["synthetic", "manifest"])]
    input: Option<PathBuf>,
    /// Use the configured synthetic battery.
    #[arg(long, conflicts_with = "manifest")]
    synthetic: bool,
    /// Repeat the run recorded in this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding bouts.csv and decode.csv.
    #[arg(long)]
    from: PathBuf,
}

fn load_config(cli: &Cli) -> Result<AppConfig> {
    let mut cfg = AppConfig::load_with_process_env(cli.config.as_deref()).context("config")?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    cfg.validate().context("config")?;
    Ok(cfg)
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = out.join(name);
    write_atomic(&path, bytes).with_context(|| format!("write: {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn need_inputs(inputs: &[PathBuf]) -> Result<()> {
    if inputs.is_empty() {
        bail!("no input files given");
    }
    Ok(())
}

fn write_decoded(out: &Path, decoded: &Decoded) -> Result<()> {
    write(out, "decode.csv", &format_decode_csv(decoded)?)?;
    write(out, "calibration.json", &to_pretty_json(&decoded.curves))?;
    if let Some(m) = &decoded.gas_model {
        write(out, "gas_model.json", &to_pretty_json(m))?;
    }
    for n in &decoded.notes {
        eprintln!("note: {n}");
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    serde_json::from_str(&text).with_context(|| path.display().to_string())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Ingest(a) => {
            let mut schema = IngestSchema::for_path(&a.input).context("ingest")?;
            if let Some(p) = &a.sidecar {
                schema.sidecar = read_sidecar(p).context("ingest")?;
            }
            schema.time_column = a.time_column;
            schema.sensor_columns = a.columns;
            let traces = ingest_trace_csv(&a.input, &schema).context("ingest")?;
            let path = out.join(format!("{}.csv", stem(&a.input)));
            export_traces(&path, &traces).context("ingest")?;
            println!(
                "{}: {} sensors, {} samples at {} Hz",
                path.display(),
                traces.len(),
                traces[0].len(),
                traces[0].sample_rate()
            );
        }
        Command::Synth(SynthCommand::Pulse {
            gas,
            level,
            trials,
            noise,
        }) => {
            let gases = if gas.is_empty() {
                cfg.model.gases()
            } else {
                gas
            };
            let levels = if level.is_empty() {
                ConcentrationLevel::ALL.to_vec()
            } else {
                level
            };
            let battery = synth_battery(
                &cfg.model,
                &gases,
                &levels,
                trials.unwrap_or(cfg.synth.trials),
                noise.unwrap_or(cfg.synth.noise_sigma),
                cfg.seed,
            )
            .context("synth")?;
            for traces in &battery {
                let path = out.join(format!("{}.csv", traces[0].meta().trial_id()));
                export_traces(&path, traces).context("synth")?;
                println!("{}", path.display());
            }
        }
        Command::Synth(SynthCommand::Plume {
            profile,
            peaks,
            whiff,
            gas,
            noise,
            name,
        }) => {
            let stimulus = match (profile, peaks) {
                (Some(p), _) => read_profile_csv(&p).context("synth")?,
                (None, Some(onsets)) => {
                    let pulses: Vec<_> = onsets.iter().map(|&t| (t, whiff, 1.0)).collect();
                    StimulusProfile::pulses(&pulses).context("synth")?
                }
                (None, None) => bail!("synth: give --profile or --peaks"),
            };
            let traces = synth_plume(
                &cfg.model,
                &stimulus,
                &gas,
                noise.unwrap_or(cfg.synth.noise_sigma),
                cfg.seed,
            )
            .context("synth")?;
            let path = out.join(format!(
                "{}.csv",
                name.unwrap_or_else(|| format!("plume_{gas}"))
            ));
            export_traces(&path, &traces).context("synth")?;
            println!("{}", path.display());
        }
        Command::Filter(a) => {
            need_inputs(&a.inputs)?;
            let fixed = match (a.f_low, a.f_high) {
                (Some(lo), Some(hi)) => Some(FilterSpec::new(lo, hi).context("filter")?),
                _ => None,
            };
            for rec in load_recordings(&a.inputs)? {
                let spec = fixed.unwrap_or(match rec.environment() {
                    Environment::SinglePulse => cfg.analysis.single_pulse_filter,
                    Environment::Plume => cfg.analysis.plume_filter,
                });
                let filtered = bandpass_all(&rec.traces, spec)
                    .with_context(|| format!("filter: {}", rec.id))?;
                let path = out.join(format!("{}_filtered.csv", rec.id));
                export_traces(&path, &filtered).context("filter")?;
                println!("{}", path.display());
            }
        }
        Command::Bouts(a) => {
            need_inputs(&a.inputs)?;
            let mut prepared = Prepared::new(&cfg)?;
            if !a.window.is_empty() {
                prepared = prepared.with_windows(a.window);
            }
            let recs = load_recordings(&a.inputs)?;
            let (bouts, _) = analyze_all(&prepared, &recs)?;
            write(out, "bouts.csv", &format_bouts_csv(&bouts)?)?;
        }
        Command::Simulate(a) => {
            need_inputs(&a.inputs)?;
            let mut cfg = cfg;
            if a.variant.is_some() {
                cfg.frontend.variant = a.variant;
            }
            let prepared = Prepared::new(&cfg)?;
            let recs = load_recordings(&a.inputs)?;
            let (_, events) = analyze_all(&prepared, &recs)?;
            write(out, "events.jsonl", &format_events_jsonl(&events))?;
        }
        Command::Decode(a) => {
            let lines = read_events_jsonl(&a.events).context("decode")?;
            let decoded = if a.calibration.is_some() || a.gas_model.is_some() {
                let curves: Vec<CalibrationCurve> = match &a.calibration {
                    Some(p) => read_json(p).context("decode")?,
                    None => Vec::new(),
                };
                let gas_model: Option<GasModel> = match &a.gas_model {
                    Some(p) => Some(read_json(p).context("decode")?),
                    None => None,
                };
                decode_events_with(
                    &lines,
                    Decoders {
                        curves,
                        gas_model,
                        notes: vec![],
                    },
                    &cfg,
                )?
            } else {
                decode_events(&lines, &cfg)?
            };
            write_decoded(out, &decoded)?;
        }
        Command::Pipeline(a) => {
            let manifest = if let Some(m) = &a.manifest {
                rerun_manifest(m, out, cfg.jobs)?
            } else {
                let source = match (a.input, a.synthetic) {
                    (Some(dir), false) => Source::Directory {
                        path: dir.display().to_string(),
                    },
                    (None, true) => Source::Synthetic,
                    _ => bail!("pipeline: give one of --input, --synthetic or --manifest"),
                };
                run_pipeline(&source, &cfg, out)?
            };
            for o in &manifest.outputs {
                println!("{}", out.join(&o.path).display());
            }
            println!("{}", out.join(moxfront::pipeline::MANIFEST_FILE).display());
            for n in &manifest.notes {
                eprintln!("note: {n}");
            }
        }
        Command::Report(a) => {
            let bouts = read_bouts_csv(&a.from.join("bouts.csv")).context("report")?;
            let (sensors, rows) = read_decode_csv(&a.from.join("decode.csv")).context("report")?;
            for (name, svg) in render_reports(&bouts, &rows, &sensors) {
                write(out, &name, svg.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
