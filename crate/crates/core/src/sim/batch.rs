//! Parallel scenario × controller × seed grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{ControllerKind, ControllerSetup};

use super::episode::{run_episode, EpisodeTrace, SimConfig};
use super::policy::{ScenarioKind, ScenarioScript, ScriptParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchGrid {
    pub scenarios: Vec<ScenarioKind>,
    pub controllers: Vec<ControllerKind>,
    pub seeds: Vec<u64>,
}

impl Default for BatchGrid {
    fn default() -> Self {
        Self {
            scenarios: ScenarioKind::ALL.to_vec(),
            controllers: ControllerKind::ALL.to_vec(),
            seeds: (0..10).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpisodeJob {
    pub scenario: ScenarioKind,
    pub controller: ControllerKind,
    pub seed: u64,
}

impl BatchGrid {
    /// All jobs in canonical (scenario, controller, seed) order.
    pub fn jobs(&self) -> Vec<EpisodeJob> {
        let mut jobs = Vec::with_capacity(self.scenarios.len() * self.controllers.len() * self.seeds.len());
        for &scenario in &self.scenarios {
            for &controller in &self.controllers {
                for &seed in &self.seeds {
                    jobs.push(EpisodeJob { scenario, controller, seed });
                }
            }
        }
        jobs.sort();
        jobs.dedup();
        jobs
    }
}

#[derive(Debug, Clone)]
pub struct BatchEntry {
    pub job: EpisodeJob,
    /// Episode failures are kept, not propagated.
    pub result: Result<EpisodeTrace, String>,
}

/// Runs `jobs` in parallel and returns the entries in canonical order,
/// whatever order the jobs were given or executed in.
pub fn run_jobs(
    jobs: &[EpisodeJob],
    setup: &ControllerSetup,
    script: &ScriptParams,
    sim: &SimConfig,
) -> Vec<BatchEntry> {
    let mut entries: Vec<BatchEntry> = jobs
        .par_iter()
        .map(|job| {
            let s = ScenarioScript::new(job.scenario, script.clone(), job.seed);
            let result = run_episode(&s, job.controller, setup, sim).map_err(|e| e.to_string());
            BatchEntry { job: *job, result }
        })
        .collect();
    entries.sort_by_key(|e| e.job);
    entries
}

pub fn run_batch(grid: &BatchGrid, setup: &ControllerSetup, script: &ScriptParams, sim: &SimConfig) -> Vec<BatchEntry> {
    run_jobs(&grid.jobs(), setup, script, sim)
}
