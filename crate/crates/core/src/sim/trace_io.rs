//! JSON-lines trace files and batch manifests.
//!
//! A trace file holds one header line, one line per tick and one end line:
//!
//! ```text
//! {"type":"header","schema_version":1,"config_hash":"…","seed":3,"scenario":"delayed_crossing","controller":"iampdm","dt_sim":0.05}
//! {"type":"tick","tick":0,"t":0.0,"state":{…},"u":0.0,…}
//! {"type":"end","t0":0.0,"t_end":7.85,"outcome":"veh_first","min_separation":3.1,"collision":false,"ticks":158}
//! ```
//!
//! No wall-clock data is written, so identical runs give identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decision::ControllerKind;
use crate::error::TraceIoError;

use super::batch::EpisodeJob;
use super::episode::{EpisodeTrace, Outcome, TickRecord};
use super::policy::ScenarioKind;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub scenario: String,
    pub controller: ControllerKind,
    pub dt_sim: f64,
}

impl TraceHeader {
    pub fn for_trace(trace: &EpisodeTrace, config_hash: &str) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            config_hash: config_hash.to_owned(),
            seed: trace.seed,
            scenario: trace.scenario.clone(),
            controller: trace.controller,
            dt_sim: trace.dt_sim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEnd {
    pub t0: Option<f64>,
    pub t_end: f64,
    pub outcome: Outcome,
    pub min_separation: f64,
    pub collision: bool,
    pub ticks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine {
    Header(TraceHeader),
    Tick(TickRecord),
    End(TraceEnd),
}

fn line(l: &TraceLine) -> String {
    serde_json::to_string(l).expect("trace lines always serialize")
}

/// The full file contents for `trace`.
pub fn trace_to_jsonl(trace: &EpisodeTrace, config_hash: &str) -> String {
    let mut out = line(&TraceLine::Header(TraceHeader::for_trace(trace, config_hash)));
    out.push('\n');
    for r in &trace.records {
        out.push_str(&line(&TraceLine::Tick(r.clone())));
        out.push('\n');
    }
    out.push_str(&line(&TraceLine::End(TraceEnd {
        t0: trace.t0,
        t_end: trace.t_end,
        outcome: trace.outcome,
        min_separation: trace.min_separation,
        collision: trace.collision,
        ticks: trace.records.len(),
    })));
    out.push('\n');
    out
}

pub fn trace_from_jsonl(text: &str, path: &Path) -> Result<(TraceHeader, EpisodeTrace), TraceIoError> {
    let err = |line: usize, message: String| TraceIoError::Format { path: path.to_owned(), line, message };
    let mut header: Option<TraceHeader> = None;
    let mut records = Vec::new();
    let mut end: Option<TraceEnd> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if end.is_some() {
            return Err(err(n, "content after end record".into()));
        }
        match serde_json::from_str::<TraceLine>(raw).map_err(|e| err(n, e.to_string()))? {
            TraceLine::Header(h) if header.is_none() && n == 1 => header = Some(h),
            TraceLine::Header(_) => return Err(err(n, "unexpected header".into())),
            TraceLine::Tick(_) if header.is_none() => return Err(err(n, "tick before header".into())),
            TraceLine::Tick(r) => records.push(r),
            TraceLine::End(e) => end = Some(e),
        }
    }
    let header = header.ok_or_else(|| err(1, "missing header".into()))?;
    if header.schema_version != TRACE_SCHEMA_VERSION {
        return Err(err(1, format!("unsupported schema version {}", header.schema_version)));
    }
    let end = end.ok_or_else(|| err(text.lines().count(), "missing end record".into()))?;
    if end.ticks != records.len() {
        return Err(err(text.lines().count(), format!("end record claims {} ticks, found {}", end.ticks, records.len())));
    }
    let trace = EpisodeTrace {
        scenario: header.scenario.clone(),
        controller: header.controller,
        seed: header.seed,
        dt_sim: header.dt_sim,
        records,
        t0: end.t0,
        t_end: end.t_end,
        outcome: end.outcome,
        min_separation: end.min_separation,
        collision: end.collision,
    };
    Ok((header, trace))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceIoError + '_ {
    move |source| TraceIoError::Io { path: path.to_owned(), source }
}

pub fn write_trace(path: &Path, trace: &EpisodeTrace, config_hash: &str) -> Result<(), TraceIoError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(trace_to_jsonl(trace, config_hash).as_bytes()).map_err(io_err(path))
}

pub fn read_trace(path: &Path) -> Result<(TraceHeader, EpisodeTrace), TraceIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    trace_from_jsonl(&text, path)
}

/// Canonical file name of an episode inside a batch directory.
pub fn trace_file_name(job: &EpisodeJob) -> String {
    format!("{}__{}__seed{}.jsonl", job.scenario, job.controller, job.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scenario: ScenarioKind,
    pub controller: ControllerKind,
    pub seed: u64,
    /// Relative to the manifest's directory; absent when the episode failed.
    pub file: Option<String>,
    pub outcome: Option<Outcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub scenarios: Vec<ScenarioKind>,
    pub controllers: Vec<ControllerKind>,
    pub seeds: Vec<u64>,
    pub episodes: Vec<ManifestEntry>,
}

pub fn write_manifest(path: &Path, manifest: &BatchManifest) -> Result<(), TraceIoError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<BatchManifest, TraceIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| TraceIoError::Format { path: path.to_owned(), line: e.line(), message: e.to_string() })
}

/// Paths of the traces a manifest lists, resolved against its directory.
pub fn manifest_trace_paths(manifest_path: &Path, manifest: &BatchManifest) -> Vec<(ManifestEntry, Option<PathBuf>)> {
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    manifest.episodes.iter().map(|e| (e.clone(), e.file.as_ref().map(|f| dir.join(f)))).collect()
}
