//! The offline subcommands. Each returns what it prints on success.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crossing_core::report::{build_report, episode_metrics, render_table, MetricsReport};
use crossing_core::sim::{
    manifest_trace_paths, read_manifest, read_trace, run_batch, run_episode, trace_file_name, write_manifest,
    write_trace, BatchManifest, EpisodeJob, ManifestEntry, ScenarioScript, TRACE_SCHEMA_VERSION,
};
use crossing_core::tuning::{expert_loop_step, run_tuning, ThetaParam, TuneResult};
use crossing_core::Config;

use crate::{BatchArgs, CliError, ConfigArg, RunArgs, StatsArgs, TuneArgs};

pub const THETA_SCHEMA_VERSION: u32 = 1;
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";
pub const BEST_THETA: &str = "best_theta.json";

/// Tuned parameter values, as written by `tune` and read by `run --theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFile {
    pub schema_version: u32,
    /// Hash of the config the tuning session started from.
    pub config_hash: String,
    pub objective: f64,
    pub params: Vec<ThetaValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaValue {
    pub param: ThetaParam,
    pub value: f64,
}

impl ConfigArg {
    pub fn load(&self) -> Result<Config, CliError> {
        match &self.config {
            Some(path) => Ok(Config::load(path)?),
            None => Ok(Config::default()),
        }
    }
}

fn load_theta(path: &Path) -> Result<ThetaFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("--theta {}: {e}", path.display())))?;
    let theta: ThetaFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("--theta {}: {e}", path.display())))?;
    if theta.schema_version != THETA_SCHEMA_VERSION {
        return Err(CliError::Validation(format!(
            "--theta {}: schema_version {} (expected {THETA_SCHEMA_VERSION})",
            path.display(),
            theta.schema_version
        )));
    }
    Ok(theta)
}

/// Applies a best-parameter file to `config` and re-validates.
pub fn apply_theta(config: &mut Config, theta: &ThetaFile) -> Result<(), CliError> {
    for v in &theta.params {
        v.param.set(&mut config.controller, v.value);
    }
    config.validate()?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

pub fn run(args: &RunArgs) -> Result<PathBuf, CliError> {
    let mut config = args.config.load()?;
    if let Some(path) = &args.theta {
        apply_theta(&mut config, &load_theta(path)?)?;
    }
    let script = ScenarioScript::new(args.scenario, config.script.clone(), args.seed);
    let trace = run_episode(&script, args.controller, &config.controller_setup(), &config.sim)?;
    create_dir(&args.out)?;
    let job = EpisodeJob { scenario: args.scenario, controller: args.controller, seed: args.seed };
    let path = args.out.join(trace_file_name(&job));
    write_trace(&path, &trace, &config.hash())?;
    Ok(path)
}

/// Parses `0..10` (half-open) or a comma list such as `1,4,7`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Validation(format!("--seeds: cannot parse `{spec}` (expected `a..b` or `n,m,...`)"));
    let spec = spec.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(CliError::Validation("--seeds: empty seed list".into()));
    }
    Ok(seeds)
}

pub fn batch(args: &BatchArgs) -> Result<PathBuf, CliError> {
    let mut config = args.config.load()?;
    if let Some(seeds) = &args.seeds {
        config.batch.seeds = parse_seeds(seeds)?;
    }
    if let Some(s) = &args.scenarios {
        config.batch.scenarios = s.clone();
    }
    if let Some(c) = &args.controllers {
        config.batch.controllers = c.clone();
    }
    if let Some(path) = &args.theta {
        apply_theta(&mut config, &load_theta(path)?)?;
    }
    config.validate()?;
    let hash = config.hash();
    create_dir(&args.out)?;
    write_file(&args.out.join(CONFIG_SNAPSHOT), &config.to_toml_string())?;

    let entries = run_batch(&config.batch, &config.controller_setup(), &config.script, &config.sim);
    let mut episodes = Vec::with_capacity(entries.len());
    for e in &entries {
        let base = ManifestEntry {
            scenario: e.job.scenario,
            controller: e.job.controller,
            seed: e.job.seed,
            file: None,
            outcome: None,
            error: None,
        };
        episodes.push(match &e.result {
            Ok(trace) => {
                let name = trace_file_name(&e.job);
                write_trace(&args.out.join(&name), trace, &hash)?;
                ManifestEntry { file: Some(name), outcome: Some(trace.outcome), ..base }
            }
            Err(msg) => {
                eprintln!("warning: {}/{}/seed {} failed: {msg}", e.job.scenario, e.job.controller, e.job.seed);
                ManifestEntry { error: Some(msg.clone()), ..base }
            }
        });
    }
    let manifest = BatchManifest {
        schema_version: TRACE_SCHEMA_VERSION,
        config_hash: hash,
        scenarios: config.batch.scenarios.clone(),
        controllers: config.batch.controllers.clone(),
        seeds: config.batch.seeds.clone(),
        episodes,
    };
    let path = args.out.join(MANIFEST);
    write_manifest(&path, &manifest)?;
    Ok(path)
}

pub fn stats(args: &StatsArgs) -> Result<String, CliError> {
    let mut episodes = Vec::new();
    let mut hashes = BTreeSet::new();
    let mut missing = Vec::new();
    let mut skipped = Vec::new();
    for manifest_path in &args.manifests {
        let manifest = read_manifest(manifest_path)?;
        hashes.insert(manifest.config_hash.clone());
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let snapshot = dir.join(CONFIG_SNAPSHOT);
        let config = Config::load(&snapshot)
            .map_err(|e| CliError::Validation(format!("{}: {e}", manifest_path.display())))?;
        if config.hash() != manifest.config_hash && !args.force {
            return Err(CliError::Validation(format!(
                "{} does not match the config hash in {}",
                snapshot.display(),
                manifest_path.display()
            )));
        }
        let mut loaded = Vec::new();
        for (entry, path) in manifest_trace_paths(manifest_path, &manifest) {
            let Some(path) = path else {
                skipped.push(format!("{}/{}/seed {}", entry.scenario, entry.controller, entry.seed));
                continue;
            };
            if !path.exists() {
                missing.push(path);
                continue;
            }
            loaded.push(path);
        }
        for path in loaded {
            let (header, trace) = read_trace(&path)?;
            if header.config_hash != manifest.config_hash && !args.force {
                return Err(CliError::Validation(format!(
                    "{} was produced by config {}, its manifest says {} (use --force to pool anyway)",
                    path.display(),
                    header.config_hash,
                    manifest.config_hash
                )));
            }
            hashes.insert(header.config_hash);
            let m = episode_metrics(&trace, &config.geometry, &config.metrics)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            episodes.push(m);
        }
    }
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| format!("  {}", p.display())).collect();
        return Err(CliError::Runtime(format!("missing traces:\n{}", list.join("\n"))));
    }
    if hashes.len() > 1 && !args.force {
        return Err(CliError::Validation(format!(
            "inputs come from {} different configs ({}); use --force to pool them",
            hashes.len(),
            hashes.iter().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    if episodes.is_empty() {
        return Err(CliError::Runtime("no episodes to summarize".into()));
    }
    let hash = hashes.into_iter().collect::<Vec<_>>().join("+");
    let mut report: MetricsReport = build_report(episodes, &hash);
    report.notes.extend(skipped.into_iter().map(|s| format!("{s}: episode failed, not included")));
    let table = render_table(&report);

    let out = match &args.out {
        Some(dir) => dir.clone(),
        None => args.manifests[0].parent().unwrap_or_else(|| Path::new(".")).to_owned(),
    };
    create_dir(&out)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_file(&out.join("report.json"), &json)?;
    write_file(&out.join("report.txt"), &format!("config {}\n\n{table}", report.config_hash))?;
    Ok(table)
}

fn theta_file(config: &Config, base_hash: &str, result: &TuneResult) -> ThetaFile {
    ThetaFile {
        schema_version: THETA_SCHEMA_VERSION,
        config_hash: base_hash.to_owned(),
        objective: result.value,
        params: config
            .tuning
            .theta_bounds
            .iter()
            .zip(&result.theta_star)
            .map(|(b, v)| ThetaValue { param: b.param, value: *v })
            .collect(),
    }
}

fn load_session(dir: &Path) -> Result<(Config, TuneResult), CliError> {
    let config = Config::load(&dir.join(CONFIG_SNAPSHOT))
        .map_err(|e| CliError::Validation(format!("--previous {}: {e}", dir.display())))?;
    let path = dir.join("result.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let result = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((config, result))
}

fn session_summary(config: &Config, result: &TuneResult) -> String {
    let mut out = format!("{:<14} {:>14} {:>14}\n", "", "start", "tuned");
    for (i, b) in config.tuning.theta_bounds.iter().enumerate() {
        let name = serde_json::to_value(b.param).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        out += &format!("{name:<14} {:>14.4} {:>14.4}\n", result.theta0[i], result.theta_star[i]);
    }
    out += &format!("{:<14} {:>14.4} {:>14.4}\n", "J_glob", result.value0, result.value);
    out += &format!("{:<14} {:>14}\n", "evaluations", result.log.len());
    out
}

/// Writes a tuning session directory and returns its summary.
pub fn tune(args: &TuneArgs) -> Result<String, CliError> {
    let (config, result, comparison) = match &args.previous {
        Some(prev_dir) => {
            let (mut prev, prev_result) = load_session(prev_dir)?;
            if let Some(b) = args.budget {
                prev.tuning.budget = b;
            }
            let k = match args.k.as_deref() {
                Some(&[k1, k2, k3, k4]) => [k1, k2, k3, k4],
                Some(other) => {
                    return Err(CliError::Validation(format!("--k: expected 4 weights, got {}", other.len())));
                }
                None => [prev.tuning.k1, prev.tuning.k2, prev.tuning.k3, prev.tuning.k4],
            };
            let (next, result, report) = expert_loop_step(k, &prev, &prev_result);
            next.validate()?;
            (next, result, Some(report))
        }
        None => {
            let mut config = args.config.load()?;
            if let Some(b) = args.budget {
                config.tuning.budget = b;
            }
            config.validate()?;
            let result = run_tuning(&config);
            (config, result, None)
        }
    };
    let hash = config.hash();
    create_dir(&args.out)?;
    write_file(&args.out.join(CONFIG_SNAPSHOT), &config.to_toml_string())?;
    let mut log = String::new();
    for e in &result.log {
        log.push_str(&serde_json::to_string(e).expect("evaluation serializes"));
        log.push('\n');
    }
    write_file(&args.out.join("evaluations.jsonl"), &log)?;
    let mut json = serde_json::to_string_pretty(&result).expect("result serializes");
    json.push('\n');
    write_file(&args.out.join("result.json"), &json)?;
    let mut best = serde_json::to_string_pretty(&theta_file(&config, &hash, &result)).expect("theta serializes");
    best.push('\n');
    write_file(&args.out.join(BEST_THETA), &best)?;

    let summary = match comparison {
        Some(report) => {
            write_file(&args.out.join("comparison.txt"), &report)?;
            report
        }
        None => session_summary(&config, &result),
    };
    write_file(&args.out.join("summary.txt"), &summary)?;
    Ok(summary)
}
