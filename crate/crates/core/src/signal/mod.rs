//! Time-series types, trace files, resampling and the synthetic sensor model.

mod csvio;
mod resample;
mod synth;
mod trace;

pub use csvio::{
    export_traces, format_traces_csv, ingest_trace_csv, read_profile_csv, read_sidecar,
    sidecar_for, sidecar_path, IngestSchema, SensorColumn, Sidecar, MAX_JITTER,
};
pub use resample::resample;
pub use synth::{
    synth_battery, synth_plume, synth_single_pulse, trial_seed, SensorModel, SensorSpec,
};
pub use trace::{
    check_aligned, ChannelKind, ConcentrationLabel, ConcentrationLevel, Environment, GasLabel,
    SensorTrace, StimulusProfile, TraceMeta,
};
