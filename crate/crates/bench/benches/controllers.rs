use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use crossing_bench::negotiation_state;
use crossing_core::dynamics::{build_batch, predict, rollout_with_ped_model, DisturbanceSequence};
use crossing_core::mpc::{solve, MpcProblem, MpcSettings};
use crossing_core::pedestrian::PedModelParams;
use crossing_core::sim::{run_episode, ScenarioKind, ScenarioScript, ScriptParams, SimConfig};
use crossing_core::{Config, ControllerKind, ControllerParams, ScenarioGeometry};

fn bench_solve(c: &mut Criterion) {
    let params = ControllerParams::default();
    let geometry = ScenarioGeometry::default();
    let settings = MpcSettings::default();
    let problem = MpcProblem::new(negotiation_state(), &params, &geometry, 1.0, &settings);
    c.bench_function("mpc_solve_cold_n20", |b| b.iter(|| solve(black_box(&problem), None)));
    let warm = solve(&problem, None).unwrap().u_s_star;
    c.bench_function("mpc_solve_warm_n20", |b| b.iter(|| solve(black_box(&problem), Some(&warm))));
}

fn bench_predict(c: &mut Criterion) {
    let params = ControllerParams::default();
    let n = params.horizon;
    let ops = build_batch(n, params.dt);
    let x0 = negotiation_state();
    let u = vec![-1.0; n];
    let z = DisturbanceSequence::from_ped_speeds(vec![1.0; n]);
    c.bench_function("batch_predict_n20", |b| b.iter(|| predict(black_box(&x0), &u, &z, &ops)));
    let ped = PedModelParams { c: params.c, v_ped_ref: params.v_ped_ref, k_d: params.k_d, v_eps: 0.05 };
    let geometry = ScenarioGeometry::default();
    c.bench_function("model_rollout_n20", |b| {
        b.iter(|| rollout_with_ped_model(black_box(&x0), &u, &geometry, &ped, params.dt))
    });
}

fn bench_episode(c: &mut Criterion) {
    let config = Config::default();
    let setup = config.controller_setup();
    let sim = SimConfig::default();
    let mut group = c.benchmark_group("episode_delayed_crossing");
    group.sample_size(20);
    for kind in ControllerKind::ALL {
        let script = ScenarioScript::new(ScenarioKind::DelayedCrossing, ScriptParams::default(), 0);
        group.bench_function(kind.as_str(), |b| b.iter(|| run_episode(&script, kind, &setup, &sim).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_solve, bench_predict, bench_episode);
criterion_main!(benches);
