//! The discrete-event engine and the three experiment drivers.
//!
//! One engine run is strictly single-threaded and deterministic: a
//! binary heap pops events in (timestamp, sequence) order, network
//! transits draw jitter from per-link named RNG substreams, and each
//! compute node is a processor-sharing server — every active request
//! progresses at `capacity_per_core * min(1, cores / n_active)` units
//! per second, with completions rescheduled (and stale ones invalidated
//! by an epoch counter) whenever the active set changes.
//!
//! Three drivers share the engine:
//! - `run_simulation`: everything at once — periodic topics, pipelines,
//!   probes, utilization sampling — until a horizon.
//! - `teleop_probe`: only network echo probes against the node hosting
//!   the probe target task; returns RTT samples.
//! - `face_recognition_transaction`: only the closed-loop pipeline,
//!   back-to-back requests; returns (recognition, response) pairs.

use std::collections::BinaryHeap;

use thiserror::Error;

use crate::placement::Placement;
use crate::sim::rng::{fnv1a64, RngStreams};
use crate::sim::trace::{EventKind, TraceLog, TraceRecord};
use crate::topology::{effective_bandwidth, path_between, ComputeNode, Topology, TopologyError};
use crate::workload::{Scenario, ServiceTask};

/// Fixed resident overhead of the robot's container runtime, in GB.
pub const ROBOT_RUNTIME_OVERHEAD_GB: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("link `{link}` is not part of slice `{slice}`")]
    NotInSlice { link: String, slice: String },
    #[error("unknown slice `{slice}`")]
    UnknownSlice { slice: String },
    #[error("unknown link `{link}`")]
    UnknownLink { link: String },
    #[error("probe target task `{task}` does not exist in the workload")]
    MissingProbeTarget { task: String },
    #[error("no closed-loop pipeline to drive")]
    NoClosedLoopPipeline,
}

fn from_topology_error(e: TopologyError) -> SimError {
    match e {
        TopologyError::NotInSlice { link, slice } => SimError::NotInSlice { link, slice },
        TopologyError::UnknownSlice { id } => SimError::UnknownSlice { slice: id },
        TopologyError::DanglingReference { id, .. } => SimError::UnknownLink { link: id },
        other => panic!("unexpected topology error during simulation: {other}"),
    }
}

/// Serialization delay of a payload over a link, in ms.
pub fn serialization_ms(payload_bytes: u64, bandwidth_mbps: f64) -> f64 {
    payload_bytes as f64 * 8.0 / (bandwidth_mbps * 1e6) * 1000.0
}

/// One-hop transit time: a jittered latency draw plus serialization at
/// the link's effective bandwidth inside the slice. jitter_cv = 0 gives
/// exactly the mean latency and consumes no randomness.
pub fn transit_time(
    topo: &Topology,
    link_id: &str,
    slice_id: &str,
    payload_bytes: u64,
    rng: &mut RngStreams,
) -> Result<f64, SimError> {
    let bw = effective_bandwidth(topo, link_id, slice_id).map_err(from_topology_error)?;
    let link = topo.link(link_id).ok_or_else(|| SimError::UnknownLink { link: link_id.into() })?;
    let latency = rng.lognormal(&format!("link/{link_id}"), link.one_way_latency_ms, link.jitter_cv);
    Ok(latency + serialization_ms(payload_bytes, bw))
}

/// Nominal service time of one pipeline stage on an idle node, in ms.
/// Under load the engine's processor sharing stretches this.
pub fn service_time(task: &ServiceTask, stage_fraction: f64, node: &ComputeNode) -> f64 {
    task.work_per_request * stage_fraction / node.capacity_per_core * 1000.0
}

// ---------------------------------------------------------------------
// Processor-sharing node executor
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum JobCtx {
    /// A pipeline stage serving a tracked request.
    Stage { request: usize },
    /// A free-standing job (queueing validation).
    Plain { id: u64 },
}

#[derive(Debug, Clone)]
struct Job {
    key: u64,
    /// Unit-seconds of work left.
    remaining: f64,
    ctx: JobCtx,
}

/// A node executing concurrent requests under processor sharing.
#[derive(Debug)]
pub(crate) struct PsNode {
    cores: u32,
    capacity_per_core: f64,
    jobs: Vec<Job>,
    last_update_ms: f64,
    epoch: u64,
    next_key: u64,
    /// Unit-seconds of work completed since the start of the run.
    done_units: f64,
}

impl PsNode {
    fn new(cores: u32, capacity_per_core: f64) -> Self {
        PsNode {
            cores,
            capacity_per_core,
            jobs: Vec::new(),
            last_update_ms: 0.0,
            epoch: 0,
            next_key: 0,
            done_units: 0.0,
        }
    }

    /// Units per second each active job currently progresses at.
    fn rate_per_job(&self) -> f64 {
        if self.jobs.is_empty() {
            return 0.0;
        }
        let share = (self.cores as f64 / self.jobs.len() as f64).min(1.0);
        self.capacity_per_core * share
    }

    /// Advances all jobs to `now`, accruing completed work.
    fn advance(&mut self, now_ms: f64) {
        let dt_s = (now_ms - self.last_update_ms).max(0.0) / 1000.0;
        if dt_s > 0.0 && !self.jobs.is_empty() {
            let rate = self.rate_per_job();
            for j in &mut self.jobs {
                j.remaining -= rate * dt_s;
            }
            self.done_units += rate * self.jobs.len() as f64 * dt_s;
        }
        self.last_update_ms = now_ms;
    }

    fn add(&mut self, remaining: f64, ctx: JobCtx, now_ms: f64) -> u64 {
        self.advance(now_ms);
        let key = self.next_key;
        self.next_key += 1;
        self.jobs.push(Job { key, remaining, ctx });
        self.epoch += 1;
        key
    }

    /// Milliseconds until the next job finishes, with its key.
    fn next_completion(&self) -> Option<(f64, u64)> {
        let rate = self.rate_per_job();
        self.jobs
            .iter()
            .min_by(|a, b| a.remaining.total_cmp(&b.remaining).then(a.key.cmp(&b.key)))
            .map(|j| ((j.remaining / rate).max(0.0) * 1000.0, j.key))
    }

    fn remove(&mut self, key: u64) -> Option<Job> {
        let ix = self.jobs.iter().position(|j| j.key == key)?;
        self.epoch += 1;
        Some(self.jobs.remove(ix))
    }
}

// ---------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    /// All traffic sources until the horizon (ms).
    Full { horizon_ms: f64 },
    /// Probe echoes only.
    ProbesOnly,
    /// The closed-loop pipeline only, for a fixed number of requests.
    Transaction { pipeline: usize, target: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Ev {
    PeriodicPublish { topic: usize },
    Deliver { topic: Option<usize>, subscriber: usize, request: Option<usize>, bytes: u64, link: String },
    Completion { node: usize, epoch: u64, key: u64 },
    ClosedLoopFire { pipeline: usize },
    ProbeLaunch,
    ProbeBounce { sent_ms: f64 },
    ProbeReturn { sent_ms: f64 },
    Tick,
}

#[derive(Debug)]
struct HeapEntry {
    t: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.t.total_cmp(&other.t).is_eq() && self.seq == other.seq
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // Reversed so the BinaryHeap (a max-heap) pops smallest (t, seq).
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct RequestState {
    pipeline: usize,
    t0: f64,
    /// Index of the stage whose input is awaited next; == stage count
    /// once compute is done and the response is traveling home.
    next_stage: usize,
    recognition_ms: Option<f64>,
    response_ms: Option<f64>,
}

struct Engine<'a> {
    sc: &'a Scenario,
    mode: Mode,
    rng: RngStreams,
    heap: BinaryHeap<HeapEntry>,
    seq: u64,
    now: f64,
    nodes: Vec<PsNode>,
    /// Per-node always-on utilization: baseline + steady work share
    /// (+ companion agents, robot only).
    static_util: Vec<f64>,
    /// Effective bandwidth per link under the chosen slice.
    link_bw: Vec<f64>,
    /// Node index hosting each task.
    task_node: Vec<usize>,
    /// done_units at the previous utilization tick, per node.
    tick_done: Vec<f64>,
    trace: TraceLog,
    requests: Vec<RequestState>,
    rtt_samples: Vec<f64>,
    responses_done: usize,
    probe_target_node: usize,
    robot_ix: usize,
}

impl<'a> Engine<'a> {
    fn new(
        sc: &'a Scenario,
        placement: &'a Placement,
        slice_id: &str,
        seed: u64,
        mode: Mode,
    ) -> Result<Self, SimError> {
        let topo = &sc.topology;
        if topo.slice(slice_id).is_none() {
            return Err(SimError::UnknownSlice { slice: slice_id.into() });
        }
        let robot_ix = topo.node_index("robot").expect("validated topology has a robot");

        let task_node: Vec<usize> = sc
            .workload
            .tasks
            .iter()
            .map(|t| topo.node_index(placement.node_of(&t.id)).expect("placement uses known nodes"))
            .collect();

        // Resolve effective bandwidth for every link actually reachable
        // between nodes that host tasks or the robot, failing fast when
        // the slice does not cover a needed link.
        let mut link_bw = vec![f64::NAN; topo.links.len()];
        let mut used_nodes: Vec<usize> = task_node.clone();
        used_nodes.push(robot_ix);
        used_nodes.sort_unstable();
        used_nodes.dedup();
        for &a in &used_nodes {
            for &b in &used_nodes {
                if a == b {
                    continue;
                }
                let path = path_between(topo, &topo.nodes[a].id, &topo.nodes[b].id)
                    .map_err(from_topology_error)?;
                for lid in path {
                    let ix = topo.link_index(&lid).expect("path returns known links");
                    if link_bw[ix].is_nan() {
                        link_bw[ix] = effective_bandwidth(topo, &lid, slice_id)
                            .map_err(from_topology_error)?;
                    }
                }
            }
        }

        let nodes: Vec<PsNode> =
            topo.nodes.iter().map(|n| PsNode::new(n.cores, n.capacity_per_core)).collect();

        // Always-on utilization per node, and the robot's resident
        // memory: tasks placed there, plus the scaled-down companion
        // agents of offloaded tasks, plus the runtime overhead.
        let mut static_util: Vec<f64> = topo
            .nodes
            .iter()
            .enumerate()
            .map(|(ix, n)| {
                let pool = n.cores as f64 * n.capacity_per_core;
                let steady: f64 = sc
                    .workload
                    .tasks
                    .iter()
                    .zip(&task_node)
                    .filter(|(_, &tn)| tn == ix)
                    .map(|(t, _)| t.steady_work)
                    .sum();
                n.baseline_load_fraction + steady / pool
            })
            .collect();
        let robot_pool =
            topo.nodes[robot_ix].cores as f64 * topo.nodes[robot_ix].capacity_per_core;
        let mut robot_memory = ROBOT_RUNTIME_OVERHEAD_GB;
        for (t, &tn) in sc.workload.tasks.iter().zip(&task_node) {
            if tn == robot_ix {
                robot_memory += t.memory_gb;
            } else {
                let scale = agent_scale(sc, topo, robot_ix, tn);
                static_util[robot_ix] += t.robot_agent_cpu * scale / robot_pool;
                robot_memory += t.robot_agent_memory_gb * scale;
            }
        }

        let probe_target_node = sc
            .workload
            .task(&sc.sim.probe_target_task)
            .map(|t| {
                let pos = sc.workload.tasks.iter().position(|x| x.id == t.id).expect("present");
                task_node[pos]
            })
            .unwrap_or(robot_ix);

        let trace = TraceLog { robot_memory_gb: robot_memory, ..TraceLog::default() };
        let tick_done = vec![0.0; topo.nodes.len()];
        Ok(Engine {
            sc,
            mode,
            rng: RngStreams::new(seed),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            nodes,
            static_util,
            link_bw,
            task_node,
            tick_done,
            trace,
            requests: Vec::new(),
            rtt_samples: Vec::new(),
            responses_done: 0,
            probe_target_node,
            robot_ix,
        })
    }

    fn schedule(&mut self, t: f64, ev: Ev) {
        self.seq += 1;
        self.heap.push(HeapEntry { t, seq: self.seq, ev });
    }

    fn horizon(&self) -> Option<f64> {
        match self.mode {
            Mode::Full { horizon_ms } => Some(horizon_ms),
            _ => None,
        }
    }

    fn node_id(&self, ix: usize) -> &str {
        &self.sc.topology.nodes[ix].id
    }

    fn record(&mut self, kind: EventKind, task: &str, node: usize, link: &str, bytes: u64) {
        self.trace.push(TraceRecord {
            timestamp_ms: self.now,
            kind,
            task: task.to_string(),
            node: self.sc.topology.nodes[node].id.clone(),
            link: link.to_string(),
            bytes,
        });
    }

    /// Total transit time between two nodes, drawing per-link jitter;
    /// also returns the final link id for the arrival record.
    fn path_transit(&mut self, from: usize, to: usize, bytes: u64) -> (f64, String) {
        if from == to {
            let t = self.rng.lognormal(
                "loopback",
                self.sc.sim.loopback_one_way_ms,
                self.sc.sim.loopback_jitter_cv,
            );
            return (t, String::new());
        }
        let path = path_between(&self.sc.topology, self.node_id(from), self.node_id(to))
            .expect("validated connectivity");
        let mut total = 0.0;
        let mut last = String::new();
        for lid in path {
            let ix = self.sc.topology.link_index(&lid).expect("known link");
            let link = &self.sc.topology.links[ix];
            let latency =
                self.rng.lognormal(&format!("link/{lid}"), link.one_way_latency_ms, link.jitter_cv);
            total += latency + serialization_ms(bytes, self.link_bw[ix]);
            last = lid;
        }
        (total, last)
    }

    /// Publishes a topic from its publisher task. When `request` is set
    /// the delivery that advances the request's pipeline carries the
    /// right payload and context; all other subscribers receive plain
    /// data copies.
    fn publish_topic(&mut self, topic_ix: usize, from_task: usize, request: Option<usize>) {
        let topic_id = self.sc.workload.topics[topic_ix].id.clone();
        let topic_bytes = self.sc.workload.topics[topic_ix].message_size_bytes;
        let from_node = self.task_node[from_task];
        let from_task_id = self.sc.workload.tasks[from_task].id.clone();
        self.record(EventKind::MessagePublished, &from_task_id, from_node, &topic_id, topic_bytes);

        let subscribers: Vec<usize> = self
            .sc
            .workload
            .tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.subscribes.contains(&topic_id))
            .map(|(i, _)| i)
            .collect();
        for sub in subscribers {
            let (expects, bytes) = match request {
                Some(r) => {
                    let req = &self.requests[r];
                    let pl = &self.sc.workload.pipelines[req.pipeline];
                    if req.next_stage < pl.stages.len() {
                        let expected = &pl.stages[req.next_stage].task;
                        let is_target = self.sc.workload.tasks[sub].id == *expected;
                        let b = if is_target && req.next_stage == 0 {
                            pl.payload_bytes
                        } else {
                            topic_bytes
                        };
                        (is_target, b)
                    } else {
                        // Response leg: any robot-pinned subscriber can
                        // complete the loop at the operator's side.
                        (self.sc.workload.tasks[sub].pinned_to_robot, topic_bytes)
                    }
                }
                None => (false, topic_bytes),
            };
            let to_node = self.task_node[sub];
            let (transit, link) = self.path_transit(from_node, to_node, bytes);
            self.trace.messages_published += 1;
            let t = self.now + transit;
            self.schedule(
                t,
                Ev::Deliver {
                    topic: Some(topic_ix),
                    subscriber: sub,
                    request: if expects { request } else { None },
                    bytes,
                    link,
                },
            );
        }
    }

    /// Starts the next stage of a request on its assigned node.
    fn start_stage(&mut self, request: usize) {
        let req = &self.requests[request];
        let pl = &self.sc.workload.pipelines[req.pipeline];
        let stage = &pl.stages[req.next_stage];
        let task_ix =
            self.sc.workload.tasks.iter().position(|t| t.id == stage.task).expect("validated");
        let node_ix = self.task_node[task_ix];
        let work = self.sc.workload.tasks[task_ix].work_per_request * stage.fraction;
        let task_id = stage.task.clone();
        self.record(EventKind::ServiceStarted, &task_id, node_ix, "", 0);
        self.nodes[node_ix].add(work, JobCtx::Stage { request }, self.now);
        self.reschedule_node(node_ix);
    }

    fn reschedule_node(&mut self, node_ix: usize) {
        self.nodes[node_ix].advance(self.now);
        if let Some((dt_ms, key)) = self.nodes[node_ix].next_completion() {
            let epoch = self.nodes[node_ix].epoch;
            self.schedule(self.now + dt_ms, Ev::Completion { node: node_ix, epoch, key });
        }
    }

    fn finish_stage(&mut self, node_ix: usize, key: u64) {
        let job = match self.nodes[node_ix].remove(key) {
            Some(j) => j,
            None => return,
        };
        self.reschedule_node(node_ix);
        let request = match job.ctx {
            JobCtx::Stage { request } => request,
            JobCtx::Plain { .. } => return,
        };
        let (pipeline, stage_ix) = {
            let req = &self.requests[request];
            (req.pipeline, req.next_stage)
        };
        let pl = &self.sc.workload.pipelines[pipeline];
        let cur_task_id = pl.stages[stage_ix].task.clone();
        let cur_task_ix =
            self.sc.workload.tasks.iter().position(|t| t.id == cur_task_id).expect("validated");
        self.record(EventKind::ServiceCompleted, &cur_task_id, node_ix, "", 0);

        self.requests[request].next_stage += 1;
        let stage_count = pl.stages.len();
        if self.requests[request].next_stage == stage_count {
            // Compute done; recognition is measured here, then the
            // response travels back over the response topic.
            self.requests[request].recognition_ms = Some(self.now - self.requests[request].t0);
            let resp_topic = self.sc.workload.pipelines[pipeline].response_topic.clone();
            if let Some(ix) = self.sc.workload.topics.iter().position(|t| t.id == resp_topic) {
                self.publish_topic(ix, cur_task_ix, Some(request));
            }
        } else {
            let next_task_id =
                self.sc.workload.pipelines[pipeline].stages[stage_ix + 1].task.clone();
            match self.sc.workload.connecting_topic(&cur_task_id, &next_task_id) {
                Some(topic) => {
                    let tix = self
                        .sc
                        .workload
                        .topics
                        .iter()
                        .position(|t| t.id == topic.id)
                        .expect("topic exists");
                    self.publish_topic(tix, cur_task_ix, Some(request));
                }
                None => {
                    // No declared topic between the stages: hand the
                    // payload over directly.
                    let next_ix = self
                        .sc
                        .workload
                        .tasks
                        .iter()
                        .position(|t| t.id == next_task_id)
                        .expect("validated");
                    let bytes = self.sc.workload.pipelines[pipeline].payload_bytes;
                    let from = node_ix;
                    let to = self.task_node[next_ix];
                    self.record(EventKind::MessagePublished, &cur_task_id, from, "", bytes);
                    let (transit, link) = self.path_transit(from, to, bytes);
                    self.trace.messages_published += 1;
                    let t = self.now + transit;
                    self.schedule(
                        t,
                        Ev::Deliver {
                            topic: None,
                            subscriber: next_ix,
                            request: Some(request),
                            bytes,
                            link,
                        },
                    );
                }
            }
        }
    }

    fn handle_deliver(
        &mut self,
        topic: Option<usize>,
        subscriber: usize,
        request: Option<usize>,
        bytes: u64,
        link: String,
    ) {
        self.trace.messages_arrived += 1;
        let node_ix = self.task_node[subscriber];
        let sub_id = self.sc.workload.tasks[subscriber].id.clone();
        let topic_id = topic.map(|t| self.sc.workload.topics[t].id.clone()).unwrap_or_default();
        let label = if link.is_empty() { topic_id } else { link };
        self.record(EventKind::MessageArrived, &sub_id, node_ix, &label, bytes);

        let Some(r) = request else { return };
        let (next_stage, stage_count, closed_loop, pipeline) = {
            let req = &self.requests[r];
            let pl = &self.sc.workload.pipelines[req.pipeline];
            (req.next_stage, pl.stages.len(), pl.closed_loop, req.pipeline)
        };
        if next_stage < stage_count {
            self.start_stage(r);
        } else if self.requests[r].response_ms.is_none() {
            // Arrived back at the operator console; showing it costs the
            // display overhead on top.
            let shown_at = self.now + self.sc.sim.display_overhead_ms;
            self.requests[r].response_ms = Some(shown_at - self.requests[r].t0);
            self.responses_done += 1;
            let more = match self.mode {
                Mode::Transaction { target, .. } => closed_loop && self.responses_done < target,
                Mode::Full { horizon_ms } => closed_loop && shown_at <= horizon_ms,
                Mode::ProbesOnly => false,
            };
            if more {
                self.schedule(shown_at, Ev::ClosedLoopFire { pipeline });
            }
        }
    }

    fn fire_pipeline(&mut self, pipeline: usize) {
        let pl = &self.sc.workload.pipelines[pipeline];
        let trigger = pl.trigger_topic.clone();
        let topic_ix = self
            .sc
            .workload
            .topics
            .iter()
            .position(|t| t.id == trigger)
            .expect("validated pipeline trigger");
        let publisher = self
            .sc
            .workload
            .tasks
            .iter()
            .position(|t| t.publishes.contains(&trigger))
            .expect("validated trigger publisher");
        let request = self.requests.len();
        self.requests.push(RequestState {
            pipeline,
            t0: self.now,
            next_stage: 0,
            recognition_ms: None,
            response_ms: None,
        });
        self.publish_topic(topic_ix, publisher, Some(request));
    }

    fn handle_periodic(&mut self, topic_ix: usize) {
        // A periodic publish of an open-loop pipeline's trigger starts a
        // tracked request; other topics are plain sensor data.
        let topic_id = self.sc.workload.topics[topic_ix].id.clone();
        let open_pipeline = self
            .sc
            .workload
            .pipelines
            .iter()
            .position(|p| !p.closed_loop && p.trigger_topic == topic_id);
        match open_pipeline {
            Some(p) => self.fire_pipeline(p),
            None => {
                let publisher = self
                    .sc
                    .workload
                    .tasks
                    .iter()
                    .position(|t| t.publishes.contains(&topic_id));
                if let Some(pub_ix) = publisher {
                    self.publish_topic(topic_ix, pub_ix, None);
                }
            }
        }
        let rate = self.sc.workload.topics[topic_ix].publish_rate_hz;
        if rate > 0.0 {
            let next = self.now + 1000.0 / rate;
            if self.horizon().is_none_or(|h| next <= h) {
                self.schedule(next, Ev::PeriodicPublish { topic: topic_ix });
            }
        }
    }

    fn handle_probe_launch(&mut self) {
        let bytes = self.sc.sim.probe_payload_bytes;
        let target = self.sc.sim.probe_target_task.clone();
        self.record(EventKind::ProbeSent, &target, self.robot_ix, "", bytes);
        let (fwd, _) = self.path_transit(self.robot_ix, self.probe_target_node, bytes);
        let sent = self.now;
        self.schedule(self.now + fwd, Ev::ProbeBounce { sent_ms: sent });
    }

    fn handle_tick(&mut self) {
        let tick_s = self.sc.sim.utilization_tick_ms / 1000.0;
        for ix in 0..self.nodes.len() {
            self.nodes[ix].advance(self.now);
            let n = &self.sc.topology.nodes[ix];
            let pool = n.cores as f64 * n.capacity_per_core;
            let busy = (self.nodes[ix].done_units - self.tick_done[ix]) / (pool * tick_s);
            self.tick_done[ix] = self.nodes[ix].done_units;
            let util = (self.static_util[ix] + busy).clamp(0.0, 1.0);
            let node_id = self.sc.topology.nodes[ix].id.clone();
            self.trace.utilization.entry(node_id).or_default().push((self.now, util));
            self.record(EventKind::SampleTick, "", ix, "", 0);
        }
        let next = self.now + self.sc.sim.utilization_tick_ms;
        if self.horizon().is_none_or(|h| next <= h) {
            self.schedule(next, Ev::Tick);
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::PeriodicPublish { topic } => self.handle_periodic(topic),
            Ev::Deliver { topic, subscriber, request, bytes, link } => {
                self.handle_deliver(topic, subscriber, request, bytes, link)
            }
            Ev::Completion { node, epoch, key } => {
                if self.nodes[node].epoch == epoch {
                    self.nodes[node].advance(self.now);
                    self.finish_stage(node, key);
                }
            }
            Ev::ClosedLoopFire { pipeline } => self.fire_pipeline(pipeline),
            Ev::ProbeLaunch => self.handle_probe_launch(),
            Ev::ProbeBounce { sent_ms } => {
                let bytes = self.sc.sim.probe_payload_bytes;
                let (back, _) = self.path_transit(self.probe_target_node, self.robot_ix, bytes);
                self.schedule(self.now + back, Ev::ProbeReturn { sent_ms });
            }
            Ev::ProbeReturn { sent_ms } => {
                let bytes = self.sc.sim.probe_payload_bytes;
                let target = self.sc.sim.probe_target_task.clone();
                self.record(EventKind::ProbeEchoed, &target, self.robot_ix, "", bytes);
                self.rtt_samples.push(self.now - sent_ms);
            }
            Ev::Tick => self.handle_tick(),
        }
    }

    fn run(&mut self) {
        let horizon = self.horizon();
        while let Some(entry) = self.heap.pop() {
            if let Some(h) = horizon {
                if entry.t > h {
                    // Everything past the horizon stays in flight.
                    let pending = std::iter::once(&entry.ev)
                        .chain(self.heap.iter().map(|e| &e.ev))
                        .filter(|ev| matches!(ev, Ev::Deliver { .. }))
                        .count();
                    self.trace.messages_in_flight = pending as u64;
                    break;
                }
            }
            self.now = entry.t;
            self.handle(entry.ev);
        }
    }
}

/// Steady-phase fraction used to offset periodic sources from the
/// sampling grid; derived from the name so it is stable but not aligned.
fn phase_fraction(name: &str) -> f64 {
    ((fnv1a64(name.as_bytes()) % 4096) as f64 + 0.5) / 4096.0
}

/// Companion-agent duty scale for a task offloaded to `node`: full
/// effort within the round-trip budget, backing off inversely beyond it.
fn agent_scale(sc: &Scenario, topo: &Topology, robot_ix: usize, node_ix: usize) -> f64 {
    if node_ix == robot_ix {
        return 1.0;
    }
    let path = path_between(topo, &topo.nodes[robot_ix].id, &topo.nodes[node_ix].id)
        .expect("validated connectivity");
    let rtt: f64 = path
        .iter()
        .map(|l| 2.0 * topo.link(l).expect("known link").one_way_latency_ms)
        .sum();
    if rtt <= 0.0 {
        1.0
    } else {
        (sc.workload.agent_rtt_budget_ms / rtt).min(1.0)
    }
}

// ---------------------------------------------------------------------
// Experiment drivers
// ---------------------------------------------------------------------

/// Runs every traffic source for `duration_ms`: periodic topics, open-
/// and closed-loop pipelines, probes and utilization sampling.
pub fn run_simulation(
    sc: &Scenario,
    placement: &Placement,
    slice_id: &str,
    duration_ms: f64,
    seed: u64,
) -> Result<TraceLog, SimError> {
    let mut e = Engine::new(sc, placement, slice_id, seed, Mode::Full { horizon_ms: duration_ms })?;

    for (ix, topic) in sc.workload.topics.iter().enumerate() {
        if topic.publish_rate_hz <= 0.0 {
            continue;
        }
        let has_free_publisher = sc
            .workload
            .tasks
            .iter()
            .any(|t| t.publishes.contains(&topic.id) && !sc.workload.is_stage_task(&t.id));
        let drives_closed_loop =
            sc.workload.pipelines.iter().any(|p| p.closed_loop && p.trigger_topic == topic.id);
        if !has_free_publisher || drives_closed_loop {
            continue;
        }
        let period = 1000.0 / topic.publish_rate_hz;
        let phase = period * phase_fraction(&topic.id);
        if phase <= duration_ms {
            e.schedule(phase, Ev::PeriodicPublish { topic: ix });
        }
    }
    for (ix, pl) in sc.workload.pipelines.iter().enumerate() {
        if !pl.closed_loop {
            continue;
        }
        let rate = sc
            .workload
            .topic(&pl.trigger_topic)
            .map(|t| t.publish_rate_hz)
            .filter(|&r| r > 0.0)
            .unwrap_or(1.0);
        let phase = (1000.0 / rate) * phase_fraction(&pl.id);
        if phase <= duration_ms {
            e.schedule(phase, Ev::ClosedLoopFire { pipeline: ix });
        }
    }
    if sc.sim.probe_rate_hz > 0.0 && sc.workload.task(&sc.sim.probe_target_task).is_some() {
        let period = 1000.0 / sc.sim.probe_rate_hz;
        let mut t = period * phase_fraction("probe");
        while t <= duration_ms {
            e.schedule(t, Ev::ProbeLaunch);
            t += period;
        }
    }
    if sc.sim.utilization_tick_ms > 0.0 {
        e.schedule(sc.sim.utilization_tick_ms, Ev::Tick);
    }

    e.run();
    Ok(e.trace)
}

/// Round-trip echo probes from the robot to whichever node hosts the
/// probe target task. Pure network path, no compute.
pub fn teleop_probe(
    sc: &Scenario,
    placement: &Placement,
    slice_id: &str,
    n_samples: usize,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    if sc.workload.task(&sc.sim.probe_target_task).is_none() {
        return Err(SimError::MissingProbeTarget { task: sc.sim.probe_target_task.clone() });
    }
    let mut e = Engine::new(sc, placement, slice_id, seed, Mode::ProbesOnly)?;
    let period = 1000.0 / rate_hz;
    for k in 0..n_samples {
        e.schedule(k as f64 * period, Ev::ProbeLaunch);
    }
    e.run();
    Ok(e.rtt_samples)
}

/// Drives the closed-loop pipeline back to back for `n_requests` and
/// returns (recognition_ms, response_ms) per request. No other traffic.
pub fn face_recognition_transaction(
    sc: &Scenario,
    placement: &Placement,
    slice_id: &str,
    n_requests: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, SimError> {
    let pipeline = sc
        .workload
        .pipelines
        .iter()
        .position(|p| p.closed_loop)
        .ok_or(SimError::NoClosedLoopPipeline)?;
    let mut e = Engine::new(
        sc,
        placement,
        slice_id,
        seed,
        Mode::Transaction { pipeline, target: n_requests },
    )?;
    e.schedule(0.0, Ev::ClosedLoopFire { pipeline });
    e.run();
    Ok(e.requests
        .iter()
        .filter_map(|r| Some((r.recognition_ms?, r.response_ms?)))
        .collect())
}

/// Mean sojourn time (ms) of a single-core processor-sharing node fed
/// Poisson arrivals (rate `lambda`/s) of exponential work (mean
/// 1/`mu` unit-seconds), measured over `n_completions` finished jobs.
/// For an M/M/1 queue the analytic mean is 1000/(mu - lambda) ms.
pub fn mm1_ps_mean_sojourn(lambda: f64, mu: f64, n_completions: usize, seed: u64) -> f64 {
    let mut rng = RngStreams::new(seed);
    let mut node = PsNode::new(1, 1.0);
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let mut seq: u64 = 0;
    let push = |heap: &mut BinaryHeap<HeapEntry>, seq: &mut u64, t: f64, ev: Ev| {
        *seq += 1;
        heap.push(HeapEntry { t, seq: *seq, ev });
    };

    let mut started: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    let mut next_id: u64 = 0;
    let mut total_sojourn = 0.0;
    let mut completed = 0usize;

    let first = rng.exponential("arrivals", lambda) * 1000.0;
    push(&mut heap, &mut seq, first, Ev::ProbeLaunch); // reused as "arrival"

    while completed < n_completions {
        let entry = heap.pop().expect("arrival stream never runs dry");
        let now = entry.t;
        match entry.ev {
            Ev::ProbeLaunch => {
                let work = rng.exponential("service", mu);
                let id = next_id;
                next_id += 1;
                started.insert(id, now);
                node.add(work, JobCtx::Plain { id }, now);
                node.advance(now);
                if let Some((dt, key)) = node.next_completion() {
                    let epoch = node.epoch;
                    push(&mut heap, &mut seq, now + dt, Ev::Completion { node: 0, epoch, key });
                }
                let next_arrival = now + rng.exponential("arrivals", lambda) * 1000.0;
                push(&mut heap, &mut seq, next_arrival, Ev::ProbeLaunch);
            }
            Ev::Completion { epoch, key, .. } => {
                if node.epoch != epoch {
                    continue;
                }
                node.advance(now);
                if let Some(job) = node.remove(key) {
                    if let JobCtx::Plain { id } = job.ctx {
                        let t0 = started.remove(&id).expect("job was started");
                        total_sojourn += now - t0;
                        completed += 1;
                    }
                }
                if let Some((dt, key)) = node.next_completion() {
                    let epoch = node.epoch;
                    push(&mut heap, &mut seq, now + dt, Ev::Completion { node: 0, epoch, key });
                }
            }
            _ => unreachable!("queueing loop schedules only arrivals and completions"),
        }
    }
    total_sojourn / completed as f64
}
