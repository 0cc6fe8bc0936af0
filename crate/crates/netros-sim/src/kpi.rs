//! KPI aggregation and reporting: sample summaries, the symmetric
//! percent difference used for policy comparisons, robot load
//! extraction, CSV export and the plain-text report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::placement::Policy;
use crate::sim::TraceLog;

#[derive(Debug, Error)]
pub enum KpiError {
    #[error("cannot summarize an empty sample set")]
    EmptySamples,
    #[error("symmetric percent difference needs a pair with a positive sum")]
    BothZero,
    #[error("trace has no utilization samples for the robot")]
    NoUtilizationSamples,
    #[error("report needs policy `{policy}` in every section")]
    MissingPolicy { policy: &'static str },
    #[error("failed to write `{path}`: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Order statistics of a sample set. Percentiles are nearest-rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(samples: &[f64]) -> Result<Summary, KpiError> {
    if samples.is_empty() {
        return Err(KpiError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        n: sorted.len(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p50: percentile(&sorted, 50.0),
        p95: percentile(&sorted, 95.0),
        p99: percentile(&sorted, 99.0),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}

/// |a - b| relative to the pair's midpoint, in percent. Symmetric in its
/// arguments and bounded in [0, 200) for positive pairs.
pub fn symmetric_percent_difference(a: f64, b: f64) -> Result<f64, KpiError> {
    if a < 0.0 || b < 0.0 || a + b <= 0.0 {
        return Err(KpiError::BothZero);
    }
    Ok((a - b).abs() / ((a + b) / 2.0) * 100.0)
}

/// Robot CPU band (5th/95th percentile of the utilization series, in
/// percent) and resident memory from a full-simulation trace.
pub fn robot_load(trace: &TraceLog) -> Result<(f64, f64, f64), KpiError> {
    let series = trace.robot_utilization().ok_or(KpiError::NoUtilizationSamples)?;
    if series.is_empty() {
        return Err(KpiError::NoUtilizationSamples);
    }
    let mut utils: Vec<f64> = series.iter().map(|&(_, u)| u).collect();
    utils.sort_by(f64::total_cmp);
    let low = percentile(&utils, 5.0) * 100.0;
    let high = percentile(&utils, 95.0) * 100.0;
    Ok((low, high, trace.robot_memory_gb))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadRow {
    pub cpu_low_pct: f64,
    pub cpu_high_pct: f64,
    pub memory_gb: f64,
}

/// Per-policy robot computational load rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub rows: BTreeMap<Policy, LoadRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseRow {
    pub recognition_ms: f64,
    pub response_ms: f64,
}

/// Per-policy pipeline recognition/response means.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponseReport {
    pub rows: BTreeMap<Policy, ResponseRow>,
}

/// Per-policy probe round-trip summaries.
pub type LatencyReport = BTreeMap<Policy, Summary>;

/// Anything exportable as a deterministic CSV document.
pub trait CsvReport {
    fn to_csv(&self) -> String;
}

impl CsvReport for LatencyReport {
    fn to_csv(&self) -> String {
        let mut out = String::from("policy,n,mean_ms,p50_ms,p95_ms,p99_ms,min_ms,max_ms\n");
        for (policy, s) in self {
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
                policy.key(),
                s.n,
                s.mean,
                s.p50,
                s.p95,
                s.p99,
                s.min,
                s.max
            );
        }
        out
    }
}

impl CsvReport for LoadReport {
    fn to_csv(&self) -> String {
        let mut out = String::from("policy,cpu_low_pct,cpu_high_pct,memory_gb\n");
        for (policy, r) in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.3},{:.3},{:.3}",
                policy.key(),
                r.cpu_low_pct,
                r.cpu_high_pct,
                r.memory_gb
            );
        }
        out
    }
}

impl CsvReport for ResponseReport {
    fn to_csv(&self) -> String {
        let mut out = String::from("policy,recognition_ms,response_ms\n");
        for (policy, r) in &self.rows {
            let _ =
                writeln!(out, "{},{:.3},{:.3}", policy.key(), r.recognition_ms, r.response_ms);
        }
        out
    }
}

/// Writes a report as CSV; byte-identical output for identical inputs.
pub fn export_csv<R: CsvReport>(report: &R, path: &Path) -> Result<(), KpiError> {
    std::fs::write(path, report.to_csv())
        .map_err(|source| KpiError::IoFailure { path: path.display().to_string(), source })
}

const REQUIRED_POLICIES: [Policy; 4] =
    [Policy::Local, Policy::EdgeOnly, Policy::CloudOnly, Policy::NetRosHybrid];

/// Renders the comparison report: probe latency summaries with pairwise
/// symmetric percent differences, the robot load table and the pipeline
/// response table. The four base policies must be present everywhere;
/// an oracle row is included when available.
pub fn render_report(
    latency: &LatencyReport,
    load: &LoadReport,
    resp: &ResponseReport,
) -> Result<String, KpiError> {
    for policy in REQUIRED_POLICIES {
        if !latency.contains_key(&policy) {
            return Err(KpiError::MissingPolicy { policy: policy.key() });
        }
        if !load.rows.contains_key(&policy) {
            return Err(KpiError::MissingPolicy { policy: policy.key() });
        }
        if !resp.rows.contains_key(&policy) {
            return Err(KpiError::MissingPolicy { policy: policy.key() });
        }
    }

    let mut out = String::new();
    out.push_str("== Teleoperation probe round-trip latency (ms) ==\n");
    out.push_str(&format!(
        "{:<8} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
        "policy", "n", "mean", "p50", "p95", "p99", "min", "max"
    ));
    for (policy, s) in latency {
        out.push_str(&format!(
            "{:<8} {:>6} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>12.3}\n",
            policy.key(),
            s.n,
            s.mean,
            s.p50,
            s.p95,
            s.p99,
            s.min,
            s.max
        ));
    }
    out.push_str("\nPairwise symmetric percent difference of mean RTT:\n");
    let keys: Vec<Policy> = latency.keys().copied().collect();
    for (i, a) in keys.iter().enumerate() {
        for b in keys.iter().skip(i + 1) {
            let spd = symmetric_percent_difference(latency[a].mean, latency[b].mean)
                .unwrap_or(f64::NAN);
            out.push_str(&format!("  spd({}, {}) = {:.3}%\n", a.key(), b.key(), spd));
        }
    }

    out.push_str("\n== Robot computational load ==\n");
    out.push_str(&format!(
        "{:<8} {:>18} {:>12}\n",
        "policy", "cpu band (%)", "memory (GB)"
    ));
    for (policy, r) in &load.rows {
        out.push_str(&format!(
            "{:<8} {:>8.2} - {:>7.2} {:>12.2}\n",
            policy.key(),
            r.cpu_low_pct,
            r.cpu_high_pct,
            r.memory_gb
        ));
    }

    out.push_str("\n== Face pipeline timing (ms) ==\n");
    out.push_str(&format!(
        "{:<8} {:>14} {:>14}\n",
        "policy", "recognition", "response"
    ));
    for (policy, r) in &resp.rows {
        out.push_str(&format!(
            "{:<8} {:>14.3} {:>14.3}\n",
            policy.key(),
            r.recognition_ms,
            r.response_ms
        ));
    }
    // Recognition and response comparisons are easy to conflate, so both
    // are printed under explicit labels.
    let local = resp.rows[&Policy::Local];
    out.push_str("\nRecognition-time symmetric percent differences:\n");
    for policy in [Policy::EdgeOnly, Policy::CloudOnly, Policy::NetRosHybrid] {
        let spd =
            symmetric_percent_difference(local.recognition_ms, resp.rows[&policy].recognition_ms)
                .unwrap_or(f64::NAN);
        out.push_str(&format!("  spd(local, {}) = {:.3}%\n", policy.key(), spd));
    }
    out.push_str("\nResponse-time symmetric percent differences:\n");
    for policy in [Policy::EdgeOnly, Policy::CloudOnly, Policy::NetRosHybrid] {
        let spd = symmetric_percent_difference(local.response_ms, resp.rows[&policy].response_ms)
            .unwrap_or(f64::NAN);
        out.push_str(&format!("  spd(local, {}) = {:.3}%\n", policy.key(), spd));
    }
    Ok(out)
}
