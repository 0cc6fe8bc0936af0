//! Trace records, conservation counters and the deterministic digest.

use std::collections::BTreeMap;
use std::fmt;

use crate::sim::rng::fnv1a64;

/// Kinds of events a simulation logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    MessagePublished,
    MessageArrived,
    ServiceStarted,
    ServiceCompleted,
    ProbeSent,
    ProbeEchoed,
    SampleTick,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::MessagePublished => "message_published",
            EventKind::MessageArrived => "message_arrived",
            EventKind::ServiceStarted => "service_started",
            EventKind::ServiceCompleted => "service_completed",
            EventKind::ProbeSent => "probe_sent",
            EventKind::ProbeEchoed => "probe_echoed",
            EventKind::SampleTick => "sample_tick",
        };
        f.write_str(s)
    }
}

/// One logged event. Fields that do not apply stay empty / zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub timestamp_ms: f64,
    pub kind: EventKind,
    pub task: String,
    pub node: String,
    pub link: String,
    pub bytes: u64,
}

impl TraceRecord {
    fn csv_row(&self) -> String {
        format!(
            "{:.3},{},{},{},{},{}",
            self.timestamp_ms, self.kind, self.task, self.node, self.link, self.bytes
        )
    }
}

/// Complete, ordered log of one simulation run.
#[derive(Debug, Clone, Default)]
pub struct TraceLog {
    pub records: Vec<TraceRecord>,
    /// Per-node utilization samples (timestamp_ms, fraction in [0, 1]).
    pub utilization: BTreeMap<String, Vec<(f64, f64)>>,
    /// Resident memory the robot needs under this placement, in GB.
    pub robot_memory_gb: f64,
    /// Message deliveries initiated (one per publish x subscriber).
    pub messages_published: u64,
    /// Deliveries that arrived before the horizon.
    pub messages_arrived: u64,
    /// Deliveries still in flight when the run ended.
    pub messages_in_flight: u64,
}

pub const TRACE_CSV_HEADER: &str = "timestamp_ms,kind,task,node,link,bytes";

impl TraceLog {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    /// 64-bit checksum of the ordered record stream.
    pub fn digest(&self) -> u64 {
        let mut acc: u64 = 0xcbf29ce484222325;
        for r in &self.records {
            acc = fnv1a64(format!("{acc:016x}|{}", r.csv_row()).as_bytes());
        }
        acc
    }

    /// Renders the whole log as CSV (header + one row per record).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    /// True when every initiated delivery either arrived or is accounted
    /// for as in flight at the horizon.
    pub fn conserved(&self) -> bool {
        self.messages_published == self.messages_arrived + self.messages_in_flight
    }

    pub fn robot_utilization(&self) -> Option<&[(f64, f64)]> {
        self.utilization.get("robot").map(|v| v.as_slice())
    }
}
