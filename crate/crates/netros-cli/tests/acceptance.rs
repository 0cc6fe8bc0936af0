//! Acceptance checklist. One test per shipped guarantee; each prints a
//! single `[PASS]` line with the measured numbers when it holds (run
//! with `--nocapture` to see them), and fails loudly otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use netros_sim::calibrate::{apply_params, calibrate, CalibrationTargets};
use netros_sim::kpi::{robot_load, summarize, symmetric_percent_difference};
use netros_sim::placement::{
    brute_force_optimal, place, placement_cost, PlacementError, Policy,
};
use netros_sim::sim::{
    face_recognition_transaction, mm1_ps_mean_sojourn, run_simulation, teleop_probe,
    transit_time, serialization_ms, RngStreams,
};
use netros_sim::topology::{
    build_topology, ComputeNode, NetworkLink, NetworkSlice, TopologySpec, BANDWIDTH_FLOOR_MBPS,
};
use netros_sim::workload::{
    builtin_airport_scenario, PipelineStage, RequestPipeline, Scenario, ScenarioDoc,
    ServiceTask, SimConfig, TaskClass, Topic, WorkloadSpec,
};

const SLICE: &str = "robot-slice";

fn netros(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_netros"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// The calibrated builtin scenario every reproduction test runs on.
fn calibrated_scenario() -> (Scenario, f64) {
    let targets = CalibrationTargets::default();
    let scenario = Scenario::builtin();
    let params = calibrate(&targets, &scenario).expect("fit converges");
    let mut doc = builtin_airport_scenario();
    apply_params(&mut doc, &params).expect("builtin has the standard shape");
    (Scenario::from_doc(&doc).expect("calibrated scenario is valid"), params.residual)
}

fn within(value: f64, target: f64, rel_tol: f64) -> bool {
    (value - target).abs() <= rel_tol * target
}

fn latency_csv_means(path: &Path) -> BTreeMap<String, f64> {
    let text = fs::read_to_string(path).expect("latency.csv exists");
    text.lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            (cols[0].to_string(), cols[2].parse::<f64>().expect("mean column"))
        })
        .collect()
}

#[test]
fn a01_teleop_latency_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let started = Instant::now();
    let cal = netros(&["calibrate", "--out", out]);
    assert!(cal.status.success(), "calibrate failed: {}", String::from_utf8_lossy(&cal.stderr));
    let params = dir.path().join("fitted_params.json");
    let cmp = netros(&[
        "compare",
        "--params",
        params.to_str().unwrap(),
        "--samples",
        "1000",
        "--seed",
        "42",
        "--out",
        out,
    ]);
    assert!(cmp.status.success(), "compare failed: {}", String::from_utf8_lossy(&cmp.stderr));
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "calibrate + compare took {elapsed:?}");

    let means = latency_csv_means(&dir.path().join("latency.csv"));
    let local = means["local"];
    let edge = means["edge"];
    let cloud = means["cloud"];
    assert!(within(local, 0.016, 0.10), "local mean {local} outside 0.016 +/- 10%");
    assert!(within(cloud, 38.0, 0.05), "cloud mean {cloud} outside 38 +/- 5%");
    assert!(within(edge, 1.631, 0.05), "edge mean {edge} outside 1.631 +/- 5%");
    println!(
        "[PASS] a01 teleop latency: local {local:.4} ms, edge {edge:.4} ms, \
         cloud {cloud:.4} ms in {elapsed:.2?}"
    );
}

#[test]
fn a02_comparison_arithmetic() {
    let a = symmetric_percent_difference(38.0, 0.016).unwrap();
    let b = symmetric_percent_difference(2383.0, 684.0).unwrap();
    assert!((a - 199.832).abs() <= 0.001, "spd(38, 0.016) = {a}");
    assert!((b - 110.792).abs() <= 0.001, "spd(2383, 684) = {b}");
    println!("[PASS] a02 comparison arithmetic: spd(38, 0.016) = {a:.3}, spd(2383, 684) = {b:.3}");
}

#[test]
fn a03_pipeline_timing_reproduction() {
    let (scenario, residual) = calibrated_scenario();
    println!("calibration residual {residual:.6}");
    assert!(residual <= 0.15, "residual {residual} above 0.15");

    let recognition_targets =
        [(Policy::Local, 2354.0), (Policy::EdgeOnly, 596.0), (Policy::CloudOnly, 587.0), (Policy::NetRosHybrid, 657.0)];
    let response_targets =
        [(Policy::Local, 2383.0), (Policy::EdgeOnly, 615.0), (Policy::CloudOnly, 684.0), (Policy::NetRosHybrid, 698.0)];
    let mut shown = Vec::new();
    for ((policy, rec_target), (_, resp_target)) in
        recognition_targets.into_iter().zip(response_targets)
    {
        let placement = place(&scenario, policy).unwrap();
        let pairs =
            face_recognition_transaction(&scenario, &placement, SLICE, 1000, 42).unwrap();
        let n = pairs.len() as f64;
        let rec = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let resp = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        assert!(
            within(rec, rec_target, 0.05),
            "{} recognition {rec:.1} outside {rec_target} +/- 5%",
            policy.key()
        );
        assert!(
            within(resp, resp_target, 0.15),
            "{} response {resp:.1} outside {resp_target} +/- 15%",
            policy.key()
        );
        shown.push(format!("{} {rec:.0}/{resp:.0}", policy.key()));
    }
    println!(
        "[PASS] a03 pipeline timing (rec/resp ms): {}; residual {residual:.4}",
        shown.join(", ")
    );
}

#[test]
fn a04_robot_load_reproduction() {
    let (scenario, _) = calibrated_scenario();
    let cases = [
        (Policy::Local, 60.0, 85.0, 1.82),
        (Policy::EdgeOnly, 25.0, 38.0, 0.95),
        (Policy::CloudOnly, 10.0, 20.0, 0.51),
        (Policy::NetRosHybrid, 10.0, 20.0, 0.51),
    ];
    let mut shown = Vec::new();
    for (policy, band_lo, band_hi, mem_target) in cases {
        let placement = place(&scenario, policy).unwrap();
        let trace =
            run_simulation(&scenario, &placement, SLICE, scenario.sim.load_horizon_ms, 42)
                .unwrap();
        let (low, high, memory) = robot_load(&trace).unwrap();
        assert!(
            low >= band_lo && high <= band_hi,
            "{} cpu band [{low:.1}, {high:.1}] not inside [{band_lo}, {band_hi}]",
            policy.key()
        );
        assert!(
            (memory - mem_target).abs() <= 0.1,
            "{} memory {memory:.2} GB not within 0.1 of {mem_target}",
            policy.key()
        );
        shown.push(format!("{} [{low:.1},{high:.1}]% {memory:.2}GB", policy.key()));
    }
    println!("[PASS] a04 robot load: {}", shown.join(", "));
}

#[test]
fn a05_queueing_oracle() {
    let lambda = 0.5;
    let mu = 1.0;
    let analytic_ms = 1000.0 / (mu - lambda);
    let measured = mm1_ps_mean_sojourn(lambda, mu, 100_000, 42);
    assert!(
        within(measured, analytic_ms, 0.03),
        "sojourn {measured:.1} ms outside {analytic_ms} +/- 3%"
    );
    println!(
        "[PASS] a05 queueing oracle: mean sojourn {measured:.1} ms vs analytic {analytic_ms:.0} ms"
    );
}

fn u(streams: &mut RngStreams, name: &str, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * streams.uniform(name)
}

/// A small random scenario: the standard three-node chain with generous
/// memory, one closed-loop pipeline of 1-3 stages, and a few standalone
/// services, all with jitter disabled.
fn random_scenario(streams: &mut RngStreams, case: usize) -> Scenario {
    let t = |s: &str| format!("case{case}/{s}");
    let n_unpinned = 1 + (u(streams, &t("n"), 0.0, 1.0) * 8.0) as usize;
    let n_stages = 1 + (u(streams, &t("k"), 0.0, 1.0) * (n_unpinned.min(3) as f64)) as usize;
    let n_stages = n_stages.min(n_unpinned).min(3);

    let node = |id: &str, cores, cap, baseline| ComputeNode {
        id: id.into(),
        cores,
        capacity_per_core: cap,
        memory_gb: 64.0,
        baseline_load_fraction: baseline,
    };
    let topology = TopologySpec {
        nodes: vec![
            node("robot", 4, 1.0, u(streams, &t("B_r"), 0.0, 0.10)),
            node("edge", 1, u(streams, &t("c_e"), 2.0, 6.0), u(streams, &t("B_e"), 0.0, 0.05)),
            node("cloud", 8, u(streams, &t("c_c"), 2.0, 6.0), u(streams, &t("B_c"), 0.0, 0.02)),
        ],
        links: vec![
            NetworkLink {
                id: "re".into(),
                a: "robot".into(),
                b: "edge".into(),
                one_way_latency_ms: u(streams, &t("l_re"), 0.2, 5.0),
                jitter_cv: 0.0,
                bandwidth_mbps: u(streams, &t("b_re"), 100.0, 10_000.0),
            },
            NetworkLink {
                id: "ec".into(),
                a: "edge".into(),
                b: "cloud".into(),
                one_way_latency_ms: u(streams, &t("l_ec"), 5.0, 50.0),
                jitter_cv: 0.0,
                bandwidth_mbps: u(streams, &t("b_ec"), 50.0, 1_000.0),
            },
        ],
        slices: vec![NetworkSlice {
            id: "s".into(),
            nodes: vec!["robot".into(), "edge".into(), "cloud".into()],
            links: vec!["re".into(), "ec".into()],
            bandwidth_share: u(streams, &t("share"), 0.3, 1.0),
            isolated: true,
        }],
        background_traffic_mbps: BTreeMap::new(),
    };

    let mut topics = vec![
        Topic {
            id: "trigger".into(),
            message_size_bytes: u(streams, &t("sz_t"), 1e3, 5e5) as u64,
            publish_rate_hz: u(streams, &t("rate"), 0.2, 2.0),
        },
        Topic {
            id: "resp".into(),
            message_size_bytes: u(streams, &t("sz_r"), 200.0, 5e4) as u64,
            publish_rate_hz: 0.0,
        },
    ];
    for i in 0..n_stages.saturating_sub(1) {
        topics.push(Topic {
            id: format!("mid{i}"),
            message_size_bytes: u(streams, &t(&format!("sz_m{i}")), 1e4, 2e6) as u64,
            publish_rate_hz: 0.0,
        });
    }

    let anchor = |id: &str, publishes: &[&str], subscribes: &[&str]| ServiceTask {
        id: id.into(),
        class: TaskClass::Anchor,
        work_per_request: 0.0,
        memory_gb: 0.1,
        publishes: publishes.iter().map(|s| s.to_string()).collect(),
        subscribes: subscribes.iter().map(|s| s.to_string()).collect(),
        pinned_to_robot: true,
        steady_work: 0.05,
        robot_agent_cpu: 0.0,
        robot_agent_memory_gb: 0.0,
    };
    let mut tasks = vec![anchor("camera", &["trigger"], &[]), anchor("display", &[], &["resp"])];
    for i in 0..n_unpinned {
        let class = if u(streams, &t(&format!("cl{i}")), 0.0, 1.0) < 0.5 {
            TaskClass::LatencyCritical
        } else {
            TaskClass::DataHeavy
        };
        let mut publishes = BTreeSet::new();
        let mut subscribes = BTreeSet::new();
        if i < n_stages {
            if i == 0 {
                subscribes.insert("trigger".to_string());
            } else {
                subscribes.insert(format!("mid{}", i - 1));
            }
            if i + 1 == n_stages {
                publishes.insert("resp".to_string());
            } else {
                publishes.insert(format!("mid{i}"));
            }
        }
        tasks.push(ServiceTask {
            id: format!("svc{i}"),
            class,
            work_per_request: u(streams, &t(&format!("w{i}")), 0.05, 2.5),
            memory_gb: u(streams, &t(&format!("m{i}")), 0.05, 0.5),
            publishes,
            subscribes,
            pinned_to_robot: false,
            steady_work: u(streams, &t(&format!("s{i}")), 0.0, 0.4),
            robot_agent_cpu: 0.0,
            robot_agent_memory_gb: 0.0,
        });
    }

    let mut fractions: Vec<f64> =
        (0..n_stages).map(|i| u(streams, &t(&format!("f{i}")), 0.1, 1.0)).collect();
    let total: f64 = fractions.iter().sum();
    for f in &mut fractions {
        *f /= total;
    }
    let head: f64 = fractions[..n_stages - 1].iter().sum();
    fractions[n_stages - 1] = 1.0 - head;
    let stages = (0..n_stages)
        .map(|i| PipelineStage { task: format!("svc{i}"), fraction: fractions[i] })
        .collect();

    let doc = ScenarioDoc {
        topology,
        workload: WorkloadSpec {
            topics,
            tasks,
            pipelines: vec![RequestPipeline {
                id: "p".into(),
                stages,
                trigger_topic: "trigger".into(),
                response_topic: "resp".into(),
                payload_bytes: u(streams, &t("payload"), 1e4, 5e5) as u64,
                closed_loop: true,
            }],
            hybrid_split: u(streams, &t("split"), 0.0, 1.0) < 0.5,
            agent_rtt_budget_ms: 4.0,
        },
        sim: SimConfig::default(),
    };
    Scenario::from_doc(&doc).expect("generated scenario is valid")
}

#[test]
fn a06_placement_oracle_equivalence() {
    let builtin = Scenario::builtin();
    let (oracle, _) = brute_force_optimal(&builtin).unwrap();
    let hybrid = place(&builtin, Policy::NetRosHybrid).unwrap();
    assert_eq!(
        oracle.assignment, hybrid.assignment,
        "exhaustive optimum must equal the hybrid placement on the builtin scenario"
    );

    let mut streams = RngStreams::new(0x5eed);
    let fixed = [Policy::Local, Policy::EdgeOnly, Policy::CloudOnly, Policy::NetRosHybrid];
    for case in 0..50 {
        let scenario = random_scenario(&mut streams, case);
        let (_, oracle_cost) = brute_force_optimal(&scenario).unwrap();
        assert!(oracle_cost.feasible, "case {case}: oracle infeasible");
        for policy in fixed {
            match place(&scenario, policy) {
                Ok(placement) => {
                    let cost = placement_cost(&scenario, &placement);
                    assert!(
                        oracle_cost.latency_cost_ms <= cost.latency_cost_ms + 1e-6,
                        "case {case}: oracle {:.3} ms beaten by {} at {:.3} ms",
                        oracle_cost.latency_cost_ms,
                        policy.key(),
                        cost.latency_cost_ms
                    );
                }
                Err(PlacementError::Infeasible { .. } | PlacementError::NoFeasible) => {}
                Err(e) => panic!("case {case}: unexpected placement error {e}"),
            }
        }
    }
    println!(
        "[PASS] a06 placement oracle: equals hybrid on builtin; cost-minimal on 50 random workloads"
    );
}

#[test]
fn a07_run_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    for out in [&first, &second] {
        let run = netros(&["run", "--policy", "hybrid", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(run.status.success(), "run failed: {}", String::from_utf8_lossy(&run.stderr));
    }
    let trace_a = fs::read(first.join("trace.csv")).unwrap();
    let trace_b = fs::read(second.join("trace.csv")).unwrap();
    assert_eq!(trace_a, trace_b, "traces differ between identical runs");
    let report_a = fs::read(first.join("report.txt")).unwrap();
    let report_b = fs::read(second.join("report.txt")).unwrap();
    assert_eq!(report_a, report_b, "reports differ between identical runs");
    println!(
        "[PASS] a07 determinism: repeated `run --policy hybrid --seed 7` gave byte-identical \
         trace ({} bytes) and report",
        trace_a.len()
    );
}

#[test]
fn a08_slice_isolation() {
    let mut baseline: Option<Vec<f64>> = None;
    for background in [0.0, 100.0, 1000.0] {
        let mut doc = builtin_airport_scenario();
        doc.topology
            .background_traffic_mbps
            .extend([("robot-edge".to_string(), background), ("edge-cloud".to_string(), background)]);
        let scenario = Scenario::from_doc(&doc).unwrap();
        let placement = place(&scenario, Policy::CloudOnly).unwrap();
        let samples = teleop_probe(&scenario, &placement, SLICE, 200, 1.0, 11).unwrap();
        match &baseline {
            None => baseline = Some(samples),
            Some(reference) => {
                assert_eq!(
                    reference.len(),
                    samples.len(),
                    "sample count changed at background {background}"
                );
                for (i, (a, b)) in reference.iter().zip(&samples).enumerate() {
                    assert!(
                        a.to_bits() == b.to_bits(),
                        "sample {i} changed at background {background}: {a} vs {b}"
                    );
                }
            }
        }
    }
    println!(
        "[PASS] a08 slice isolation: 200 probe samples bit-identical across background \
         traffic {{0, 100, 1000}} mbps"
    );
}

#[test]
fn a09_randomized_property_suites() {
    let config = Config { cases: 1000, ..Config::default() };
    let check = |ok: bool, msg: &str| -> Result<(), TestCaseError> {
        if ok {
            Ok(())
        } else {
            Err(TestCaseError::fail(msg.to_string()))
        }
    };

    // Latency additivity with jitter disabled.
    TestRunner::new(config.clone())
        .run(
            &(
                0.001f64..50.0,
                1.0f64..10_000.0,
                0.05f64..1.0,
                any::<bool>(),
                0.0f64..500.0,
                0u64..=5_000_000,
                any::<u64>(),
            ),
            |(latency, bandwidth, share, isolated, background, bytes, seed)| {
                let spec = TopologySpec {
                    nodes: vec![
                        ComputeNode {
                            id: "robot".into(),
                            cores: 1,
                            capacity_per_core: 1.0,
                            memory_gb: 1.0,
                            baseline_load_fraction: 0.0,
                        },
                        ComputeNode {
                            id: "hub".into(),
                            cores: 1,
                            capacity_per_core: 1.0,
                            memory_gb: 1.0,
                            baseline_load_fraction: 0.0,
                        },
                    ],
                    links: vec![NetworkLink {
                        id: "l0".into(),
                        a: "robot".into(),
                        b: "hub".into(),
                        one_way_latency_ms: latency,
                        jitter_cv: 0.0,
                        bandwidth_mbps: bandwidth,
                    }],
                    slices: vec![NetworkSlice {
                        id: "s0".into(),
                        nodes: vec!["robot".into(), "hub".into()],
                        links: vec!["l0".into()],
                        bandwidth_share: share,
                        isolated,
                    }],
                    background_traffic_mbps: BTreeMap::from([("l0".to_string(), background)]),
                };
                let topo = build_topology(&spec).unwrap();
                let mut rng = RngStreams::new(seed);
                let got = transit_time(&topo, "l0", "s0", bytes, &mut rng).unwrap();
                let effective = if isolated {
                    bandwidth * share
                } else {
                    (bandwidth * share - background).max(BANDWIDTH_FLOOR_MBPS)
                };
                let expected = latency + serialization_ms(bytes, effective);
                check(
                    (got - expected).abs() <= 1e-9 * expected.max(1.0),
                    &format!("transit {got} != {expected}"),
                )
            },
        )
        .unwrap();

    // Message conservation at arbitrary horizons.
    TestRunner::new(config.clone())
        .run(
            &(any::<u64>(), 300.0f64..3_000.0, 0usize..4),
            |(seed, horizon, policy_ix)| {
                let scenario = Scenario::builtin();
                let policy = [
                    Policy::Local,
                    Policy::EdgeOnly,
                    Policy::CloudOnly,
                    Policy::NetRosHybrid,
                ][policy_ix];
                let placement = place(&scenario, policy).unwrap();
                let trace =
                    run_simulation(&scenario, &placement, SLICE, horizon, seed).unwrap();
                check(
                    trace.conserved() && trace.messages_published > 0,
                    &format!(
                        "published {} != arrived {} + in flight {}",
                        trace.messages_published,
                        trace.messages_arrived,
                        trace.messages_in_flight
                    ),
                )
            },
        )
        .unwrap();

    // Percentile monotonicity.
    TestRunner::new(config.clone())
        .run(&prop::collection::vec(0.0f64..1e6, 1..300), |samples| {
            let s = summarize(&samples).unwrap();
            check(
                s.min <= s.p50 && s.p50 <= s.p95 && s.p95 <= s.p99 && s.p99 <= s.max,
                "order statistics crossed",
            )
        })
        .unwrap();

    // Percent-difference symmetry and bounds.
    TestRunner::new(config)
        .run(&(1e-6f64..1e9, 1e-6f64..1e9), |(a, b)| {
            let x = symmetric_percent_difference(a, b).unwrap();
            let y = symmetric_percent_difference(b, a).unwrap();
            check(
                x == y && (0.0..200.0).contains(&x) && ((a == b) == (x == 0.0)),
                &format!("spd({a}, {b}) = {x}, reversed {y}"),
            )
        })
        .unwrap();

    println!(
        "[PASS] a09 property suites: additivity, conservation, percentile monotonicity, \
         percent-difference bounds — 1000 cases each"
    );
}
