//! Closed-loop simulation: scripted pedestrians, the plant, episodes and
//! batches, and trace files.

pub mod batch;
pub mod episode;
pub mod policy;
pub mod trace_io;

pub use batch::{run_batch, run_jobs, BatchEntry, BatchGrid, EpisodeJob};
pub use episode::{
    integrate_pedestrian, integrate_vehicle, run_episode, run_episode_with, EpisodeStepper, EpisodeTrace, Outcome,
    SimConfig, TickRecord,
};
pub use policy::{
    scripted_ped_policy, ConstantPedestrian, IntentionProfile, PedPhase, PedPolicyState, PedestrianPolicy,
    ScenarioKind, ScenarioScript, ScriptParams, ScriptedPedestrian,
};
pub use trace_io::{
    manifest_trace_paths, read_manifest, read_trace, trace_file_name, trace_from_jsonl, trace_to_jsonl, write_manifest, write_trace,
    BatchManifest, ManifestEntry, TraceEnd, TraceHeader, TRACE_SCHEMA_VERSION,
};
