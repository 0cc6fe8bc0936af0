//! Pub/sub robot workload: topics, service tasks and request pipelines.
//!
//! The workload is what the robot runs, independent of where it runs.
//! Sensor drivers publish periodic topics; service tasks subscribe to them
//! and optionally chain into request pipelines (e.g. detect faces, then
//! match them against a database). Task placement is a separate concern.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{build_topology, Topology, TopologyError, TopologySpec};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Topic {
    pub id: String,
    pub message_size_bytes: u64,
    pub publish_rate_hz: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum TaskClass {
    /// Hardware-bound: must stay on the robot.
    Anchor,
    /// Control-loop bound: placement is chosen for round-trip time.
    LatencyCritical,
    /// Throughput bound: placement is chosen for compute and data volume.
    DataHeavy,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ServiceTask {
    pub id: String,
    pub class: TaskClass,
    /// Compute demand of one request through this task, in compute-unit
    /// seconds (1 unit/s = one robot core).
    #[serde(default)]
    pub work_per_request: f64,
    pub memory_gb: f64,
    #[serde(default)]
    pub publishes: BTreeSet<String>,
    #[serde(default)]
    pub subscribes: BTreeSet<String>,
    #[serde(default)]
    pub pinned_to_robot: bool,
    /// Always-on compute the task consumes wherever it is placed, in
    /// compute-units per second.
    #[serde(default)]
    pub steady_work: f64,
    /// Compute an onboard companion agent (driver bridge, UI feed) costs
    /// the robot while this task runs remotely, in compute-units per
    /// second at full interactive rate.
    #[serde(default)]
    pub robot_agent_cpu: f64,
    /// Memory the onboard companion agent holds at full interactive rate.
    #[serde(default)]
    pub robot_agent_memory_gb: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PipelineStage {
    pub task: String,
    /// Share of the stage task's `work_per_request` this stage performs.
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RequestPipeline {
    pub id: String,
    pub stages: Vec<PipelineStage>,
    pub trigger_topic: String,
    pub response_topic: String,
    /// Bytes carried from the robot to the first stage per request.
    pub payload_bytes: u64,
    /// Closed-loop pipelines fire the next request as soon as the previous
    /// response reaches the robot; open-loop ones fire at the trigger
    /// topic's publish rate.
    #[serde(default)]
    pub closed_loop: bool,
}

/// Raw workload section of a scenario document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WorkloadSpec {
    pub topics: Vec<Topic>,
    pub tasks: Vec<ServiceTask>,
    pub pipelines: Vec<RequestPipeline>,
    /// Whether the hybrid policy splits multi-stage data-heavy pipelines
    /// across edge and cloud (first stage near, rest far).
    #[serde(default = "default_true")]
    pub hybrid_split: bool,
    /// Round-trip budget under which an onboard companion agent runs at
    /// full interactive rate; beyond it the agent throttles as budget/RTT.
    #[serde(default = "default_agent_budget")]
    pub agent_rtt_budget_ms: f64,
}

fn default_true() -> bool {
    true
}

fn default_agent_budget() -> f64 {
    4.0
}

/// Simulation constants of a scenario document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SimConfig {
    /// Time to render a pipeline response on the robot's display.
    pub display_overhead_ms: f64,
    /// One-way latency of an on-node (loopback) transfer.
    pub loopback_one_way_ms: f64,
    pub loopback_jitter_cv: f64,
    /// Task whose host the teleoperation probe targets.
    pub probe_target_task: String,
    pub probe_payload_bytes: u64,
    pub probe_rate_hz: f64,
    /// Spacing of utilization samples in the trace.
    pub utilization_tick_ms: f64,
    /// Horizon of the load-measurement simulation.
    pub load_horizon_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            display_overhead_ms: 20.0,
            loopback_one_way_ms: 0.008,
            loopback_jitter_cv: 0.1,
            probe_target_task: "navigation".into(),
            probe_payload_bytes: 64,
            probe_rate_hz: 1.0,
            utilization_tick_ms: 100.0,
            load_horizon_ms: 60_000.0,
        }
    }
}

/// A complete scenario document: where things can run, what runs, and the
/// simulation constants. This is the on-disk JSON schema.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioDoc {
    pub topology: TopologySpec,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub sim: SimConfig,
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("{kind} id `{id}` declared more than once")]
    DuplicateId { kind: &'static str, id: String },
    #[error("task `{task}` subscribes to topic `{topic}` which nobody publishes")]
    OrphanSubscription { task: String, topic: String },
    #[error("task `{task}` references unknown topic `{topic}`")]
    UnknownTopic { task: String, topic: String },
    #[error("task `{task}` both publishes and subscribes to topic `{topic}`")]
    SelfLoop { task: String, topic: String },
    #[error("pipeline `{pipeline}` references unknown task `{task}`")]
    UnknownTaskInPipeline { pipeline: String, task: String },
    #[error("pipeline `{pipeline}` stage graph contains a cycle")]
    CyclicPipeline { pipeline: String },
    #[error("pipeline `{pipeline}` references unknown topic `{topic}`")]
    UnknownTopicInPipeline { pipeline: String, topic: String },
    #[error("pipeline `{pipeline}` stage fractions must each be in (0, 1] and sum to 1, got sum {sum}")]
    BadStageFractions { pipeline: String, sum: f64 },
    #[error("pipeline `{pipeline}` has no stages")]
    EmptyPipeline { pipeline: String },
    #[error("{what} of `{id}` must be non-negative, got {value}")]
    Negative { what: &'static str, id: String, value: f64 },
}

/// A validated workload with id lookups.
#[derive(Debug, Clone)]
pub struct Workload {
    pub topics: Vec<Topic>,
    pub tasks: Vec<ServiceTask>,
    pub pipelines: Vec<RequestPipeline>,
    pub hybrid_split: bool,
    pub agent_rtt_budget_ms: f64,
    topic_ix: BTreeMap<String, usize>,
    task_ix: BTreeMap<String, usize>,
}

impl Workload {
    pub fn topic(&self, id: &str) -> Option<&Topic> {
        self.topic_ix.get(id).map(|&i| &self.topics[i])
    }

    pub fn task(&self, id: &str) -> Option<&ServiceTask> {
        self.task_ix.get(id).map(|&i| &self.tasks[i])
    }

    /// Tasks that publish the given topic.
    pub fn publishers<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = &'a ServiceTask> + 'a {
        self.tasks.iter().filter(move |t| t.publishes.contains(topic))
    }

    /// Tasks that subscribe to the given topic.
    pub fn subscribers<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = &'a ServiceTask> + 'a {
        self.tasks.iter().filter(move |t| t.subscribes.contains(topic))
    }

    /// True if the task is a stage of any pipeline (its publications are
    /// event-driven rather than periodic).
    pub fn is_stage_task(&self, task: &str) -> bool {
        self.pipelines.iter().any(|p| p.stages.iter().any(|s| s.task == task))
    }

    /// The topic connecting two consecutive stages, if the upstream stage
    /// publishes a topic the downstream stage subscribes to.
    pub fn connecting_topic(&self, upstream: &str, downstream: &str) -> Option<&Topic> {
        let up = self.task(upstream)?;
        let down = self.task(downstream)?;
        up.publishes
            .iter()
            .find(|t| down.subscribes.contains(*t))
            .and_then(|t| self.topic(t))
    }
}

/// A fully validated scenario, ready to place and simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub workload: Workload,
    pub sim: SimConfig,
}

impl Scenario {
    /// Builds and validates a scenario from its raw document.
    pub fn from_doc(doc: &ScenarioDoc) -> Result<Scenario, WorkloadError> {
        let topology = build_topology(&doc.topology)?;
        let workload = build_workload(&doc.workload)?;
        let violations = validate_workload(&workload);
        if let Some(v) = violations.into_iter().next() {
            return Err(v);
        }
        Ok(Scenario { topology, workload, sim: doc.sim.clone() })
    }

    /// The builtin airport scenario, validated.
    pub fn builtin() -> Scenario {
        Scenario::from_doc(&builtin_airport_scenario()).expect("builtin scenario is valid")
    }
}

fn build_workload(spec: &WorkloadSpec) -> Result<Workload, WorkloadError> {
    let mut topic_ix = BTreeMap::new();
    for (i, t) in spec.topics.iter().enumerate() {
        if topic_ix.insert(t.id.clone(), i).is_some() {
            return Err(WorkloadError::DuplicateId { kind: "topic", id: t.id.clone() });
        }
        if t.publish_rate_hz < 0.0 {
            return Err(WorkloadError::Negative {
                what: "publish_rate_hz",
                id: t.id.clone(),
                value: t.publish_rate_hz,
            });
        }
    }
    let mut task_ix = BTreeMap::new();
    for (i, t) in spec.tasks.iter().enumerate() {
        if task_ix.insert(t.id.clone(), i).is_some() {
            return Err(WorkloadError::DuplicateId { kind: "task", id: t.id.clone() });
        }
        for (what, value) in [
            ("work_per_request", t.work_per_request),
            ("memory_gb", t.memory_gb),
            ("steady_work", t.steady_work),
            ("robot_agent_cpu", t.robot_agent_cpu),
            ("robot_agent_memory_gb", t.robot_agent_memory_gb),
        ] {
            if value < 0.0 {
                return Err(WorkloadError::Negative { what, id: t.id.clone(), value });
            }
        }
    }
    for p in &spec.pipelines {
        if p.stages.is_empty() {
            return Err(WorkloadError::EmptyPipeline { pipeline: p.id.clone() });
        }
    }
    Ok(Workload {
        topics: spec.topics.clone(),
        tasks: spec.tasks.clone(),
        pipelines: spec.pipelines.clone(),
        hybrid_split: spec.hybrid_split,
        agent_rtt_budget_ms: spec.agent_rtt_budget_ms,
        topic_ix,
        task_ix,
    })
}

/// Structural validation of a built workload. Returns every violation
/// found rather than stopping at the first.
pub fn validate_workload(w: &Workload) -> Vec<WorkloadError> {
    let mut out = Vec::new();
    for task in &w.tasks {
        for topic in &task.publishes {
            if w.topic(topic).is_none() {
                out.push(WorkloadError::UnknownTopic {
                    task: task.id.clone(),
                    topic: topic.clone(),
                });
            }
        }
        for topic in &task.subscribes {
            if w.topic(topic).is_none() {
                out.push(WorkloadError::UnknownTopic {
                    task: task.id.clone(),
                    topic: topic.clone(),
                });
            } else if w.publishers(topic).next().is_none() {
                out.push(WorkloadError::OrphanSubscription {
                    task: task.id.clone(),
                    topic: topic.clone(),
                });
            }
            if task.publishes.contains(topic) {
                out.push(WorkloadError::SelfLoop { task: task.id.clone(), topic: topic.clone() });
            }
        }
    }
    for p in &w.pipelines {
        let mut sum = 0.0;
        let mut seen_tasks = BTreeSet::new();
        for stage in &p.stages {
            if w.task(&stage.task).is_none() {
                out.push(WorkloadError::UnknownTaskInPipeline {
                    pipeline: p.id.clone(),
                    task: stage.task.clone(),
                });
            }
            // A linear stage list cycles exactly when a task repeats.
            if !seen_tasks.insert(stage.task.clone()) {
                out.push(WorkloadError::CyclicPipeline { pipeline: p.id.clone() });
            }
            if !(stage.fraction > 0.0 && stage.fraction <= 1.0) {
                out.push(WorkloadError::BadStageFractions {
                    pipeline: p.id.clone(),
                    sum: stage.fraction,
                });
            }
            sum += stage.fraction;
        }
        if (sum - 1.0).abs() > 1e-9 {
            out.push(WorkloadError::BadStageFractions { pipeline: p.id.clone(), sum });
        }
        for topic in [&p.trigger_topic, &p.response_topic] {
            if w.topic(topic).is_none() {
                out.push(WorkloadError::UnknownTopicInPipeline {
                    pipeline: p.id.clone(),
                    topic: topic.clone(),
                });
            }
        }
    }
    out
}

/// Parses a scenario document from JSON without validating it; callers
/// that want the full failure list can run [`scenario_violations`].
pub fn parse_scenario_doc(json: &str) -> Result<ScenarioDoc, WorkloadError> {
    serde_json::from_str(json).map_err(|e| WorkloadError::Parse(e.to_string()))
}

/// Every structural problem in a scenario document, as human-readable
/// strings; empty means the document builds cleanly.
pub fn scenario_violations(doc: &ScenarioDoc) -> Vec<String> {
    if let Err(e) = build_topology(&doc.topology) {
        return vec![e.to_string()];
    }
    match build_workload(&doc.workload) {
        Err(e) => vec![e.to_string()],
        Ok(w) => validate_workload(&w).iter().map(|v| v.to_string()).collect(),
    }
}

/// Parses a scenario document from JSON and validates it.
pub fn load_scenario(json: &str) -> Result<Scenario, WorkloadError> {
    let doc: ScenarioDoc =
        serde_json::from_str(json).map_err(|e| WorkloadError::Parse(e.to_string()))?;
    Scenario::from_doc(&doc)
}

/// The builtin scenario: a service robot guiding travelers through an
/// airport. A camera and a lidar feed navigation and a two-stage face
/// recognition pipeline (detect, then match against a traveler database);
/// matches drive a personalized greeting on the robot's display, and a
/// teleoperation console echoes through whichever node hosts navigation.
///
/// Node capacities, link latencies and the internet bandwidth default to
/// round numbers near their calibrated values; `calibrate` output
/// overrides them.
pub fn builtin_airport_scenario() -> ScenarioDoc {
    let doc_json = r##"{
  "topology": {
    "nodes": [
      {
        "id": "robot",
        "cores": 4,
        "capacity_per_core": 1.0,
        "memory_gb": 2.0,
        "baseline_load_fraction": 0.05
      },
      {
        "id": "edge",
        "cores": 1,
        "capacity_per_core": 3.95,
        "memory_gb": 16.0,
        "baseline_load_fraction": 0.02
      },
      {
        "id": "cloud",
        "cores": 8,
        "capacity_per_core": 4.01,
        "memory_gb": 64.0,
        "baseline_load_fraction": 0.01
      }
    ],
    "links": [
      {
        "id": "robot-edge",
        "a": "robot",
        "b": "edge",
        "one_way_latency_ms": 0.815,
        "jitter_cv": 0.1,
        "bandwidth_mbps": 10000.0
      },
      {
        "id": "edge-cloud",
        "a": "edge",
        "b": "cloud",
        "one_way_latency_ms": 18.185,
        "jitter_cv": 0.1,
        "bandwidth_mbps": 460.0
      }
    ],
    "slices": [
      {
        "id": "robot-slice",
        "nodes": ["robot", "edge", "cloud"],
        "links": ["robot-edge", "edge-cloud"],
        "bandwidth_share": 0.5,
        "isolated": true
      }
    ],
    "background_traffic_mbps": {}
  },
  "workload": {
    "topics": [
      { "id": "camera_frames", "message_size_bytes": 2000000, "publish_rate_hz": 20.0 },
      { "id": "lidar_scan", "message_size_bytes": 40000, "publish_rate_hz": 5.0 },
      { "id": "nav_cmd", "message_size_bytes": 256, "publish_rate_hz": 5.0 },
      { "id": "teleop_ping", "message_size_bytes": 64, "publish_rate_hz": 1.0 },
      { "id": "teleop_pong", "message_size_bytes": 64, "publish_rate_hz": 1.0 },
      { "id": "face_request", "message_size_bytes": 1000, "publish_rate_hz": 0.5 },
      { "id": "face_crops", "message_size_bytes": 1200000, "publish_rate_hz": 0.5 },
      { "id": "match_result", "message_size_bytes": 2000, "publish_rate_hz": 0.5 },
      { "id": "personalized_response", "message_size_bytes": 2000, "publish_rate_hz": 0.5 }
    ],
    "tasks": [
      {
        "id": "camera_driver",
        "class": "anchor",
        "memory_gb": 0.12,
        "publishes": ["camera_frames", "face_request"],
        "pinned_to_robot": true,
        "steady_work": 0.16
      },
      {
        "id": "lidar_driver",
        "class": "anchor",
        "memory_gb": 0.06,
        "publishes": ["lidar_scan"],
        "pinned_to_robot": true,
        "steady_work": 0.08
      },
      {
        "id": "display",
        "class": "anchor",
        "memory_gb": 0.13,
        "publishes": ["teleop_ping"],
        "subscribes": ["match_result", "personalized_response", "teleop_pong", "nav_cmd"],
        "pinned_to_robot": true,
        "steady_work": 0.06
      },
      {
        "id": "navigation",
        "class": "latency_critical",
        "work_per_request": 0.010,
        "memory_gb": 0.50,
        "publishes": ["nav_cmd"],
        "subscribes": ["lidar_scan"],
        "steady_work": 0.95,
        "robot_agent_cpu": 0.06,
        "robot_agent_memory_gb": 0.01
      },
      {
        "id": "teleop_echo",
        "class": "latency_critical",
        "work_per_request": 0.008,
        "memory_gb": 0.01,
        "publishes": ["teleop_pong"],
        "subscribes": ["teleop_ping"],
        "steady_work": 0.01
      },
      {
        "id": "face_detect",
        "class": "data_heavy",
        "work_per_request": 2.354,
        "memory_gb": 0.35,
        "publishes": ["face_crops"],
        "subscribes": ["camera_frames", "face_request"],
        "robot_agent_cpu": 0.05,
        "robot_agent_memory_gb": 0.01
      },
      {
        "id": "face_match",
        "class": "data_heavy",
        "work_per_request": 2.354,
        "memory_gb": 0.30,
        "publishes": ["match_result"],
        "subscribes": ["face_crops"]
      },
      {
        "id": "personalization_responder",
        "class": "data_heavy",
        "memory_gb": 0.15,
        "publishes": ["personalized_response"],
        "subscribes": ["match_result"],
        "steady_work": 0.56,
        "robot_agent_cpu": 0.66,
        "robot_agent_memory_gb": 0.42
      }
    ],
    "pipelines": [
      {
        "id": "face_recognition",
        "stages": [
          { "task": "face_detect", "fraction": 0.3 },
          { "task": "face_match", "fraction": 0.7 }
        ],
        "trigger_topic": "face_request",
        "response_topic": "match_result",
        "payload_bytes": 200000,
        "closed_loop": true
      },
      {
        "id": "nav_tick",
        "stages": [{ "task": "navigation", "fraction": 1.0 }],
        "trigger_topic": "lidar_scan",
        "response_topic": "nav_cmd",
        "payload_bytes": 40000
      },
      {
        "id": "teleop_loop",
        "stages": [{ "task": "teleop_echo", "fraction": 1.0 }],
        "trigger_topic": "teleop_ping",
        "response_topic": "teleop_pong",
        "payload_bytes": 64
      }
    ],
    "hybrid_split": true,
    "agent_rtt_budget_ms": 4.0
  },
  "sim": {
    "display_overhead_ms": 20.0,
    "loopback_one_way_ms": 0.008,
    "loopback_jitter_cv": 0.1,
    "probe_target_task": "navigation",
    "probe_payload_bytes": 64,
    "probe_rate_hz": 1.0,
    "utilization_tick_ms": 100.0,
    "load_horizon_ms": 60000.0
  }
}"##;
    serde_json::from_str(doc_json).expect("builtin scenario document is well-formed")
}
