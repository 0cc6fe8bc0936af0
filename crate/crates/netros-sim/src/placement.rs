//! Task placement policies and the static cost estimator.
//!
//! Placement maps every service task to a node. Policies range from the
//! trivial (everything on the robot) to a hybrid that keeps control loops
//! near the robot while pushing data-heavy work to the cloud, splitting
//! multi-stage pipelines at the first stage. A brute-force oracle
//! enumerates all assignments of unpinned tasks and minimizes the static
//! cost estimate.
//!
//! The estimator is deliberately simple and static: each node is treated
//! as a processor-sharing server whose utilization is its baseline load
//! plus the steady request flow of every stage task placed on it, and a
//! stage's time is its service time divided by the idle share 1 - rho.
//! Mean transfer times are added per hop, and a penalty is charged when
//! a topic's steady demand oversubscribes the bottleneck link on its
//! path. Always-on `steady_work` is bookkeeping load that does not
//! contend with requests (matching the simulator) and so never dilates a
//! stage; it only counts toward the robot CPU figure. The event
//! simulator, not this estimator, is the ground truth for KPIs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{carried_bandwidth, path_between};
use crate::workload::{RequestPipeline, Scenario, ServiceTask, TaskClass};

/// Largest unpinned-task count the brute-force oracle will enumerate.
pub const ORACLE_MAX_TASKS: usize = 12;

/// Minimum share of a core the estimator assumes a request can get, no
/// matter how loaded the node is.
const MIN_AVAILABLE_SHARE: f64 = 0.05;

/// Estimator penalty, in ms per unit of oversubscription, charged when a
/// topic's steady demand exceeds the bottleneck bandwidth on its path.
const OVERSUBSCRIPTION_PENALTY_MS: f64 = 1_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Local,
    EdgeOnly,
    CloudOnly,
    NetRosHybrid,
    Oracle,
}

impl Policy {
    /// Key used in CSV rows, reports and CLI flags.
    pub fn key(self) -> &'static str {
        match self {
            Policy::Local => "local",
            Policy::EdgeOnly => "edge",
            Policy::CloudOnly => "cloud",
            Policy::NetRosHybrid => "hybrid",
            Policy::Oracle => "oracle",
        }
    }

    pub fn from_key(key: &str) -> Option<Policy> {
        match key {
            "local" => Some(Policy::Local),
            "edge" => Some(Policy::EdgeOnly),
            "cloud" => Some(Policy::CloudOnly),
            "hybrid" => Some(Policy::NetRosHybrid),
            "oracle" => Some(Policy::Oracle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub policy: Policy,
    /// task id -> node id, every task assigned.
    pub assignment: BTreeMap<String, String>,
}

impl Placement {
    pub fn node_of(&self, task: &str) -> &str {
        &self.assignment[task]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementCost {
    /// Static per-request end-to-end estimate summed over pipelines, plus
    /// stream oversubscription penalties.
    pub latency_cost_ms: f64,
    pub robot_cpu_fraction: f64,
    pub feasible: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("placement needs {needed_gb:.2} GB on `{node}` but only {available_gb:.2} GB exist")]
    Infeasible { node: String, needed_gb: f64, available_gb: f64 },
    #[error("task `{task}`: pinned_to_robot must hold exactly for anchor tasks")]
    InconsistentClass { task: String },
    #[error("oracle supports at most {max} unpinned tasks, got {count}")]
    TooLarge { count: usize, max: usize },
    #[error("no feasible assignment exists")]
    NoFeasible,
    #[error("policy `{policy}` requires a node with id `{node}`")]
    MissingNode { policy: &'static str, node: String },
}

/// Validates the task's declared class against its pinning and returns
/// the class. Anchors and only anchors are pinned to the robot.
pub fn classify_task(task: &ServiceTask) -> Result<TaskClass, PlacementError> {
    let pinned_matches = task.pinned_to_robot == (task.class == TaskClass::Anchor);
    if !pinned_matches {
        return Err(PlacementError::InconsistentClass { task: task.id.clone() });
    }
    Ok(task.class)
}

/// Assigns every task to a node under the given policy.
pub fn place(scenario: &Scenario, policy: Policy) -> Result<Placement, PlacementError> {
    if policy == Policy::Oracle {
        return Ok(brute_force_optimal(scenario)?.0);
    }
    let need_node = |id: &str| -> Result<String, PlacementError> {
        scenario
            .topology
            .node(id)
            .map(|n| n.id.clone())
            .ok_or_else(|| PlacementError::MissingNode { policy: policy.key(), node: id.into() })
    };
    let mut assignment = BTreeMap::new();
    for task in &scenario.workload.tasks {
        let class = classify_task(task)?;
        let node = match (policy, class) {
            (_, TaskClass::Anchor) => "robot".to_string(),
            (Policy::Local, _) => "robot".to_string(),
            (Policy::EdgeOnly, _) => need_node("edge")?,
            (Policy::CloudOnly, _) => need_node("cloud")?,
            (Policy::NetRosHybrid, TaskClass::LatencyCritical) => need_node("edge")?,
            (Policy::NetRosHybrid, TaskClass::DataHeavy) => need_node("cloud")?,
            (Policy::Oracle, _) => unreachable!("handled above"),
        };
        assignment.insert(task.id.clone(), node);
    }
    if policy == Policy::NetRosHybrid && scenario.workload.hybrid_split {
        // Split multi-stage data-heavy pipelines: keep the first stage on
        // the edge (near the sensor stream), run the rest in the cloud.
        for pipeline in &scenario.workload.pipelines {
            let all_data_heavy = pipeline.stages.iter().all(|s| {
                scenario.workload.task(&s.task).map(|t| t.class == TaskClass::DataHeavy)
                    == Some(true)
            });
            if all_data_heavy && pipeline.stages.len() >= 2 {
                assignment.insert(pipeline.stages[0].task.clone(), need_node("edge")?);
            }
        }
    }
    let placement = Placement { policy, assignment };
    check_memory(scenario, &placement)?;
    Ok(placement)
}

fn check_memory(scenario: &Scenario, placement: &Placement) -> Result<(), PlacementError> {
    for node in &scenario.topology.nodes {
        let needed: f64 = scenario
            .workload
            .tasks
            .iter()
            .filter(|t| placement.node_of(&t.id) == node.id)
            .map(|t| t.memory_gb)
            .sum();
        if needed > node.memory_gb {
            return Err(PlacementError::Infeasible {
                node: node.id.clone(),
                needed_gb: needed,
                available_gb: node.memory_gb,
            });
        }
    }
    Ok(())
}

/// Nominal request rate of a pipeline: its trigger topic's publish rate.
fn pipeline_rate(scenario: &Scenario, p: &RequestPipeline) -> f64 {
    scenario.workload.topic(&p.trigger_topic).map(|t| t.publish_rate_hz).unwrap_or(0.0)
}

/// Request compute a task draws per second at nominal trigger rates, in
/// compute-units per second, summed over every stage it serves.
fn request_load_units(scenario: &Scenario, task: &ServiceTask) -> f64 {
    let mut load = 0.0;
    for p in &scenario.workload.pipelines {
        for stage in &p.stages {
            if stage.task == task.id {
                load += pipeline_rate(scenario, p) * task.work_per_request * stage.fraction;
            }
        }
    }
    load
}

/// Long-run compute a task draws: always-on work plus request work.
fn total_load_units(scenario: &Scenario, task: &ServiceTask) -> f64 {
    task.steady_work + request_load_units(scenario, task)
}

fn node_pool_units(scenario: &Scenario, node: &str) -> f64 {
    let n = scenario.topology.node(node).expect("placement references known nodes");
    n.cores as f64 * n.capacity_per_core
}

/// Share of a node's pool left for a request after its baseline load and
/// the steady request flow of every stage task placed there.
fn idle_share(scenario: &Scenario, placement: &Placement, node: &str) -> f64 {
    let pool = node_pool_units(scenario, node);
    let rho: f64 = scenario
        .workload
        .tasks
        .iter()
        .filter(|t| placement.node_of(&t.id) == node)
        .map(|t| request_load_units(scenario, t) / pool)
        .sum::<f64>()
        + scenario.topology.node(node).expect("known node").baseline_load_fraction;
    (1.0 - rho).max(MIN_AVAILABLE_SHARE)
}

/// Mean transfer time between two nodes for a payload: per-link one-way
/// latency plus serialization at the link's carried bandwidth; loopback
/// latency (no serialization) on the same node.
fn mean_transfer_ms(scenario: &Scenario, from: &str, to: &str, bytes: u64) -> f64 {
    if from == to {
        return scenario.sim.loopback_one_way_ms;
    }
    let path = path_between(&scenario.topology, from, to).expect("topology is connected");
    path.iter()
        .map(|lid| {
            let link = scenario.topology.link(lid).expect("path returns known links");
            let bw = carried_bandwidth(&scenario.topology, lid).expect("known link");
            link.one_way_latency_ms + bytes as f64 * 8.0 / (bw * 1e6) * 1000.0
        })
        .sum()
}

/// Static estimate of one request's end-to-end time through a pipeline:
/// payload transfer to the first stage, stage service times diluted by
/// other load on each serving node, inter-stage transfers sized by the
/// connecting topic, and the response transfer back to the robot.
fn pipeline_cost_ms(scenario: &Scenario, placement: &Placement, p: &RequestPipeline) -> f64 {
    let mut total = 0.0;
    let mut prev_node = "robot".to_string();
    for (i, stage) in p.stages.iter().enumerate() {
        let task = scenario.workload.task(&stage.task).expect("validated pipeline");
        let node = placement.node_of(&stage.task).to_string();
        let bytes = if i == 0 {
            p.payload_bytes
        } else {
            scenario
                .workload
                .connecting_topic(&p.stages[i - 1].task, &stage.task)
                .map(|t| t.message_size_bytes)
                .unwrap_or(p.payload_bytes)
        };
        total += mean_transfer_ms(scenario, &prev_node, &node, bytes);

        let node_spec = scenario.topology.node(&node).expect("known node");
        let available = idle_share(scenario, placement, &node);
        total += task.work_per_request * stage.fraction
            / (node_spec.capacity_per_core * available)
            * 1000.0;
        prev_node = node;
    }
    let response_bytes = scenario
        .workload
        .topic(&p.response_topic)
        .map(|t| t.message_size_bytes)
        .unwrap_or(0);
    total += mean_transfer_ms(scenario, &prev_node, "robot", response_bytes);
    total
}

/// Penalty for steady topic streams whose demand exceeds the bottleneck
/// bandwidth between publisher and subscriber.
fn stream_penalty_ms(scenario: &Scenario, placement: &Placement) -> f64 {
    let mut penalty = 0.0;
    for topic in &scenario.workload.topics {
        let demand_mbps = topic.message_size_bytes as f64 * 8.0 * topic.publish_rate_hz / 1e6;
        if demand_mbps <= 0.0 {
            continue;
        }
        for publisher in scenario.workload.publishers(&topic.id) {
            for subscriber in scenario.workload.subscribers(&topic.id) {
                let from = placement.node_of(&publisher.id);
                let to = placement.node_of(&subscriber.id);
                if from == to {
                    continue;
                }
                let path = path_between(&scenario.topology, from, to).expect("connected");
                let bottleneck = path
                    .iter()
                    .map(|l| carried_bandwidth(&scenario.topology, l).expect("known link"))
                    .fold(f64::INFINITY, f64::min);
                if demand_mbps > bottleneck {
                    penalty += (demand_mbps / bottleneck - 1.0) * OVERSUBSCRIPTION_PENALTY_MS;
                }
            }
        }
    }
    penalty
}

/// Static cost of a placement. Infeasible placements get infinite cost.
pub fn placement_cost(scenario: &Scenario, placement: &Placement) -> PlacementCost {
    if check_memory(scenario, placement).is_err() {
        return PlacementCost {
            latency_cost_ms: f64::INFINITY,
            robot_cpu_fraction: f64::INFINITY,
            feasible: false,
        };
    }
    let latency: f64 = scenario
        .workload
        .pipelines
        .iter()
        .map(|p| pipeline_cost_ms(scenario, placement, p))
        .sum::<f64>()
        + stream_penalty_ms(scenario, placement);

    let robot = scenario.topology.node("robot").expect("robot exists");
    let pool = node_pool_units(scenario, "robot");
    let cpu: f64 = scenario
        .workload
        .tasks
        .iter()
        .filter(|t| placement.node_of(&t.id) == "robot")
        .map(|t| total_load_units(scenario, t) / pool)
        .sum::<f64>()
        + robot.baseline_load_fraction;

    PlacementCost {
        latency_cost_ms: latency,
        robot_cpu_fraction: cpu.min(1.0),
        feasible: true,
    }
}

/// Exhaustively enumerates assignments of unpinned tasks over all nodes
/// and returns the feasible one with minimal cost. Ties break first on
/// lower robot CPU, then on lexicographic (task, node) order.
pub fn brute_force_optimal(
    scenario: &Scenario,
) -> Result<(Placement, PlacementCost), PlacementError> {
    let mut unpinned = Vec::new();
    for task in &scenario.workload.tasks {
        classify_task(task)?;
        if !task.pinned_to_robot {
            unpinned.push(task.id.clone());
        }
    }
    if unpinned.len() > ORACLE_MAX_TASKS {
        return Err(PlacementError::TooLarge { count: unpinned.len(), max: ORACLE_MAX_TASKS });
    }
    let nodes: Vec<String> = scenario.topology.nodes.iter().map(|n| n.id.clone()).collect();

    let mut best: Option<(Placement, PlacementCost)> = None;
    let combos = nodes.len().pow(unpinned.len() as u32);
    for combo in 0..combos {
        let mut assignment = BTreeMap::new();
        for task in &scenario.workload.tasks {
            if task.pinned_to_robot {
                assignment.insert(task.id.clone(), "robot".to_string());
            }
        }
        let mut rest = combo;
        for task in &unpinned {
            assignment.insert(task.clone(), nodes[rest % nodes.len()].clone());
            rest /= nodes.len();
        }
        let candidate = Placement { policy: Policy::Oracle, assignment };
        let cost = placement_cost(scenario, &candidate);
        if !cost.feasible {
            continue;
        }
        let better = match &best {
            None => true,
            Some((incumbent_placement, incumbent)) => {
                let key = (cost.latency_cost_ms, cost.robot_cpu_fraction);
                let inc_key = (incumbent.latency_cost_ms, incumbent.robot_cpu_fraction);
                if key != inc_key {
                    key < inc_key
                } else {
                    candidate.assignment < incumbent_placement.assignment
                }
            }
        };
        if better {
            best = Some((candidate, cost));
        }
    }
    best.ok_or(PlacementError::NoFeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{builtin_airport_scenario, Scenario};

    fn airport() -> Scenario {
        Scenario::builtin()
    }

    #[test]
    fn anchors_stay_on_robot_under_every_policy() {
        let s = airport();
        for policy in [Policy::Local, Policy::EdgeOnly, Policy::CloudOnly, Policy::NetRosHybrid] {
            let p = place(&s, policy).unwrap();
            for anchor in ["camera_driver", "lidar_driver", "display"] {
                assert_eq!(p.node_of(anchor), "robot", "{anchor} under {policy:?}");
            }
        }
    }

    #[test]
    fn hybrid_assignment_matches_design() {
        let s = airport();
        let p = place(&s, Policy::NetRosHybrid).unwrap();
        assert_eq!(p.node_of("navigation"), "edge");
        assert_eq!(p.node_of("teleop_echo"), "edge");
        assert_eq!(p.node_of("face_detect"), "edge");
        assert_eq!(p.node_of("face_match"), "cloud");
        assert_eq!(p.node_of("personalization_responder"), "cloud");
    }

    #[test]
    fn hybrid_without_split_sends_whole_pipeline_to_cloud() {
        let mut doc = builtin_airport_scenario();
        doc.workload.hybrid_split = false;
        let s = Scenario::from_doc(&doc).unwrap();
        let p = place(&s, Policy::NetRosHybrid).unwrap();
        assert_eq!(p.node_of("face_detect"), "cloud");
        assert_eq!(p.node_of("face_match"), "cloud");
        assert_eq!(p.node_of("navigation"), "edge");
    }

    #[test]
    fn edge_and_cloud_policies_offload_everything_unpinned() {
        let s = airport();
        let pe = place(&s, Policy::EdgeOnly).unwrap();
        let pc = place(&s, Policy::CloudOnly).unwrap();
        for t in ["navigation", "teleop_echo", "face_detect", "face_match", "personalization_responder"]
        {
            assert_eq!(pe.node_of(t), "edge");
            assert_eq!(pc.node_of(t), "cloud");
        }
    }

    #[test]
    fn zero_edge_memory_is_infeasible() {
        let mut doc = builtin_airport_scenario();
        doc.topology.nodes[1].memory_gb = 0.0;
        let s = Scenario::from_doc(&doc).unwrap();
        let err = place(&s, Policy::EdgeOnly).unwrap_err();
        assert!(matches!(err, PlacementError::Infeasible { ref node, .. } if node == "edge"));
    }

    #[test]
    fn pinned_non_anchor_is_inconsistent() {
        let mut doc = builtin_airport_scenario();
        // camera_driver: pinned anchor -> flip its class only.
        let cam = doc.workload.tasks.iter_mut().find(|t| t.id == "camera_driver").unwrap();
        cam.class = crate::workload::TaskClass::DataHeavy;
        let s = Scenario::from_doc(&doc).unwrap();
        let err = place(&s, Policy::Local).unwrap_err();
        assert_eq!(err, PlacementError::InconsistentClass { task: "camera_driver".into() });
    }

    #[test]
    fn local_cost_dominated_by_face_compute() {
        let s = airport();
        let p = place(&s, Policy::Local).unwrap();
        let cost = placement_cost(&s, &p);
        assert!(cost.feasible);
        // The 2354 ms on-robot face job dwarfs every other term.
        assert!(cost.latency_cost_ms > 2_354.0, "cost {}", cost.latency_cost_ms);
        assert!(cost.robot_cpu_fraction > 0.5);
    }

    #[test]
    fn empty_workload_cost_is_baseline_only() {
        let mut doc = builtin_airport_scenario();
        doc.workload.tasks.clear();
        doc.workload.pipelines.clear();
        doc.workload.topics.clear();
        let s = Scenario::from_doc(&doc).unwrap();
        let p = place(&s, Policy::NetRosHybrid).unwrap();
        let cost = placement_cost(&s, &p);
        assert_eq!(cost.latency_cost_ms, 0.0);
        assert_eq!(cost.robot_cpu_fraction, 0.05);
    }

    #[test]
    fn oracle_matches_hybrid_on_airport() {
        let s = airport();
        let hybrid = place(&s, Policy::NetRosHybrid).unwrap();
        let (oracle, cost) = brute_force_optimal(&s).unwrap();
        assert!(cost.feasible);
        assert_eq!(oracle.assignment, hybrid.assignment);
    }

    #[test]
    fn oracle_cost_bounds_every_policy() {
        let s = airport();
        let (_, oracle_cost) = brute_force_optimal(&s).unwrap();
        for policy in [Policy::Local, Policy::EdgeOnly, Policy::CloudOnly, Policy::NetRosHybrid] {
            let p = place(&s, policy).unwrap();
            let c = placement_cost(&s, &p);
            assert!(
                oracle_cost.latency_cost_ms <= c.latency_cost_ms + 1e-9,
                "{policy:?}: oracle {} vs {}",
                oracle_cost.latency_cost_ms,
                c.latency_cost_ms
            );
        }
    }

    #[test]
    fn doubling_latency_and_payloads_keeps_the_argmin() {
        let mut doc = builtin_airport_scenario();
        for l in &mut doc.topology.links {
            l.one_way_latency_ms *= 2.0;
        }
        for t in &mut doc.workload.topics {
            t.message_size_bytes *= 2;
        }
        for p in &mut doc.workload.pipelines {
            p.payload_bytes *= 2;
        }
        let scaled = Scenario::from_doc(&doc).unwrap();
        let hybrid = place(&scaled, Policy::NetRosHybrid).unwrap();
        let (oracle, _) = brute_force_optimal(&scaled).unwrap();
        assert_eq!(oracle.assignment, hybrid.assignment);
    }

    #[test]
    fn oracle_rejects_too_many_tasks() {
        let mut doc = builtin_airport_scenario();
        let template = doc.workload.tasks.iter().find(|t| t.id == "teleop_echo").unwrap().clone();
        for i in 0..9 {
            let mut t = template.clone();
            t.id = format!("extra_{i}");
            t.publishes.clear();
            t.subscribes.clear();
            doc.workload.tasks.push(t);
        }
        let s = Scenario::from_doc(&doc).unwrap();
        // 5 original unpinned + 9 extras = 14 > 12.
        let err = brute_force_optimal(&s).unwrap_err();
        assert_eq!(err, PlacementError::TooLarge { count: 14, max: ORACLE_MAX_TASKS });
    }

    #[test]
    fn no_feasible_assignment_reported() {
        let mut doc = builtin_airport_scenario();
        for n in &mut doc.topology.nodes {
            n.memory_gb = 0.2; // nothing fits anywhere
        }
        let s = Scenario::from_doc(&doc).unwrap();
        assert_eq!(brute_force_optimal(&s).unwrap_err(), PlacementError::NoFeasible);
    }
}
