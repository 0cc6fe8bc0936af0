//! Deterministic discrete-event simulation: named RNG substreams, the
//! processor-sharing engine, trace logging, and experiment drivers.

pub mod engine;
pub mod rng;
pub mod trace;

pub use engine::{
    face_recognition_transaction, mm1_ps_mean_sojourn, run_simulation, serialization_ms,
    service_time, teleop_probe, transit_time, SimError, ROBOT_RUNTIME_OVERHEAD_GB,
};
pub use rng::{fnv1a64, splitmix64, RngStreams};
pub use trace::{EventKind, TraceLog, TraceRecord, TRACE_CSV_HEADER};
