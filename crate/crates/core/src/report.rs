//! Group statistics over batches of episodes: IQR filtering, means and
//! standard deviations per controller and scenario, Kruskal–Wallis across
//! controllers and pairwise Mann–Whitney tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decision::ControllerKind;
use crate::error::MetricsError;
use crate::metrics::{episode_averages, MetricsParams};
use crate::scenario::ScenarioGeometry;
use crate::sim::{EpisodeTrace, Outcome};
use crate::stats::{iqr_filter, kruskal_wallis, mann_whitney, mean_std, KruskalWallis, MannWhitney};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TtcAvg,
    DstAvg,
    TEnd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::TtcAvg, Metric::DstAvg, Metric::TEnd];

    pub fn label(self) -> &'static str {
        match self {
            Metric::TtcAvg => "TTC_avg [s]",
            Metric::DstAvg => "DST_avg [m/s^2]",
            Metric::TEnd => "T_end [s]",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub ttc_avg: f64,
    pub dst_avg: f64,
    pub t_end: f64,
    pub outcome: Outcome,
    /// Time-average of the squared commanded acceleration.
    pub mean_u_sq: f64,
    pub collision: bool,
}

impl EpisodeMetrics {
    pub fn value(&self, m: Metric) -> f64 {
        match m {
            Metric::TtcAvg => self.ttc_avg,
            Metric::DstAvg => self.dst_avg,
            Metric::TEnd => self.t_end,
        }
    }
}

pub fn episode_metrics(
    trace: &EpisodeTrace,
    geometry: &ScenarioGeometry,
    m: &MetricsParams,
) -> Result<EpisodeMetrics, MetricsError> {
    let avg = episode_averages(trace, geometry, m)?;
    let window: Vec<f64> = trace
        .records
        .iter()
        .filter(|r| r.t >= avg.t0 - 1e-9 && r.t <= avg.t_end + 1e-9)
        .map(|r| r.u * r.u)
        .collect();
    let mean_u_sq = if window.is_empty() { 0.0 } else { window.iter().sum::<f64>() / window.len() as f64 };
    Ok(EpisodeMetrics {
        scenario: trace.scenario.clone(),
        controller: trace.controller,
        seed: trace.seed,
        ttc_avg: avg.ttc_avg,
        dst_avg: avg.dst_avg,
        t_end: avg.t_end,
        outcome: trace.outcome,
        mean_u_sq,
        collision: trace.collision,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub scenario: String,
    pub controller: ControllerKind,
    pub metric: Metric,
    pub n_raw: usize,
    pub n_kept: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: ControllerKind,
    pub b: ControllerKind,
    pub result: MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTests {
    pub scenario: String,
    pub metric: Metric,
    pub kruskal_wallis: KruskalWallis,
    pub pairwise: Vec<PairTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub episodes: Vec<EpisodeMetrics>,
    pub groups: Vec<GroupSummary>,
    pub tests: Vec<ScenarioTests>,
    pub notes: Vec<String>,
}

/// Runs the analysis chain: IQR filter per group, then mean/std, then the
/// omnibus and pairwise tests on the filtered samples.
pub fn build_report(episodes: Vec<EpisodeMetrics>, config_hash: &str) -> MetricsReport {
    let mut by_group: BTreeMap<(String, ControllerKind), Vec<&EpisodeMetrics>> = BTreeMap::new();
    for e in &episodes {
        by_group.entry((e.scenario.clone(), e.controller)).or_default().push(e);
    }
    let mut groups = Vec::new();
    let mut filtered: BTreeMap<(String, ControllerKind, Metric), Vec<f64>> = BTreeMap::new();
    let mut notes = Vec::new();
    for ((scenario, controller), eps) in &by_group {
        for metric in Metric::ALL {
            let raw: Vec<f64> = eps.iter().map(|e| e.value(metric)).collect();
            let f = iqr_filter(&raw);
            if f.undersized {
                notes.push(format!("{scenario}/{controller}: {} episodes, outlier filter skipped", raw.len()));
            }
            let (mean, std) = mean_std(&f.kept);
            groups.push(GroupSummary {
                scenario: scenario.clone(),
                controller: *controller,
                metric,
                n_raw: raw.len(),
                n_kept: f.kept.len(),
                mean,
                std,
            });
            filtered.insert((scenario.clone(), *controller, metric), f.kept);
        }
    }
    notes.dedup();

    let scenarios: Vec<String> = {
        let mut s: Vec<String> = by_group.keys().map(|k| k.0.clone()).collect();
        s.dedup();
        s
    };
    let mut tests = Vec::new();
    for scenario in &scenarios {
        for metric in Metric::ALL {
            let present: Vec<(ControllerKind, &Vec<f64>)> = ControllerKind::ALL
                .iter()
                .filter_map(|c| filtered.get(&(scenario.clone(), *c, metric)).map(|v| (*c, v)))
                .filter(|(_, v)| !v.is_empty())
                .collect();
            if present.len() < 2 {
                continue;
            }
            let samples: Vec<&[f64]> = present.iter().map(|(_, v)| v.as_slice()).collect();
            let kw = kruskal_wallis(&samples);
            let mut pairwise = Vec::new();
            for i in 0..present.len() {
                for j in i + 1..present.len() {
                    pairwise.push(PairTest {
                        a: present[i].0,
                        b: present[j].0,
                        result: mann_whitney(present[i].1, present[j].1),
                    });
                }
            }
            tests.push(ScenarioTests { scenario: scenario.clone(), metric, kruskal_wallis: kw, pairwise });
        }
    }
    MetricsReport { schema_version: REPORT_SCHEMA_VERSION, config_hash: config_hash.to_owned(), episodes, groups, tests, notes }
}

/// Plain-text table: mean (std) per controller and scenario for each metric,
/// followed by the test statistics.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let mut scenarios: Vec<&str> = report.groups.iter().map(|g| g.scenario.as_str()).collect();
    scenarios.dedup();
    let controllers: Vec<ControllerKind> =
        ControllerKind::ALL.iter().copied().filter(|c| report.groups.iter().any(|g| g.controller == *c)).collect();
    for metric in Metric::ALL {
        let _ = writeln!(out, "{}", metric.label());
        let _ = write!(out, "{:<20}", "scenario");
        for c in &controllers {
            let _ = write!(out, " {:>20}", c.as_str().to_uppercase());
        }
        out.push('\n');
        for s in &scenarios {
            let _ = write!(out, "{s:<20}");
            for c in &controllers {
                match report.groups.iter().find(|g| g.scenario == *s && g.controller == *c && g.metric == metric) {
                    Some(g) => {
                        let _ = write!(out, " {:>20}", format!("{:.2} ({:.2}) n={}", g.mean, g.std, g.n_kept));
                    }
                    None => {
                        let _ = write!(out, " {:>20}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let _ = writeln!(out, "Kruskal-Wallis (critical value 9.21 at df=2, alpha=0.01) and pairwise Mann-Whitney p");
    for t in &report.tests {
        let kw = &t.kruskal_wallis;
        let mark = if kw.exceeds_critical == Some(true) { "*" } else { "" };
        let _ = write!(out, "{:<20} {:<16} H={:>8.3}{mark:<1} p={:.2e}", t.scenario, t.metric.label(), kw.h, kw.p_value);
        for p in &t.pairwise {
            let _ = write!(out, "  {}-{}: U={} p={:.3e}", p.a, p.b, p.result.u, p.result.p_value);
        }
        out.push('\n');
    }
    for n in &report.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}
