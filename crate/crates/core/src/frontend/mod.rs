//! Behavioral model of the event front-end.
//!
//! Change detection raises a fixed-length global trigger (`Q_out`); each
//! sensor's slope-detection comparator raises an SD pulse when its band-pass
//! output reaches the sensor threshold. The gated variant ANDs every SD line
//! with the trigger. The latency from trigger onset to SD onset is the
//! concentration code.

mod config;
mod events;
mod sim;

pub use config::{
    FrontEndConfig, Threshold, Variant, CD_FRACTION_OF_C1_BOUT, DEFAULT_TRIGGER_DURATION,
    SD_FRACTION_OF_C1_BOUT,
};
pub use events::{read_events_jsonl, EventLine, SensorEventLine};
pub use sim::{
    change_detect, gate_and, latch_triggers, ramp_timer, simulate_filtered, simulate_front_end,
    slope_detect, EventRecord, Pulse, SensorEvent, StreamingFrontEnd,
};
