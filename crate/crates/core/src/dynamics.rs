//! Discrete joint dynamics and the N-step batch predictor.
//!
//! The state is `[x_veh, v_veh, y_ped, v_ped]`. The vehicle is a double
//! integrator driven by the commanded acceleration; the pedestrian speed row
//! of `A` is zero, so the next pedestrian speed is supplied entirely by the
//! disturbance term `z`.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::SolveError;
use crate::pedestrian::{ped_next_velocity, PedModelParams};
use crate::scenario::{JointState, ScenarioGeometry};

pub fn state_matrix(dt: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, dt, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, dt, //
        0.0, 0.0, 0.0, 0.0,
    )
}

pub fn input_matrix(dt: f64) -> Vector4<f64> {
    Vector4::new(0.5 * dt * dt, dt, 0.0, 0.0)
}

pub fn step(state: &JointState, u: f64, z_ped_speed: f64, dt: f64) -> JointState {
    debug_assert!(dt > 0.0);
    JointState {
        t: state.t + dt,
        x_veh: state.x_veh + dt * state.v_veh + 0.5 * dt * dt * u,
        v_veh: state.v_veh + dt * u,
        y_ped: state.y_ped + dt * state.v_ped,
        v_ped: z_ped_speed,
    }
}

/// Lifted prediction matrices for a horizon of `n` steps.
#[derive(Debug, Clone)]
pub struct BatchOperators {
    pub a_cal: DMatrix<f64>,
    pub b_cal: DMatrix<f64>,
    pub z_cal: DMatrix<f64>,
    pub n: usize,
    pub dt: f64,
}

pub fn build_batch(n: usize, dt: f64) -> BatchOperators {
    assert!(n >= 1, "horizon must be at least one step");
    let a = state_matrix(dt);
    let b = input_matrix(dt);

    // powers[k] = A^k
    let mut powers = Vec::with_capacity(n + 1);
    powers.push(Matrix4::identity());
    for k in 1..=n {
        let next = powers[k - 1] * a;
        powers.push(next);
    }

    let mut a_cal = DMatrix::zeros(4 * n, 4);
    let mut b_cal = DMatrix::zeros(4 * n, n);
    let mut z_cal = DMatrix::zeros(4 * n, 4 * n);
    for i in 0..n {
        a_cal.fixed_view_mut::<4, 4>(4 * i, 0).copy_from(&powers[i + 1]);
        for j in 0..=i {
            let ab = powers[i - j] * b;
            b_cal.fixed_view_mut::<4, 1>(4 * i, j).copy_from(&ab);
            z_cal.fixed_view_mut::<4, 4>(4 * i, 4 * j).copy_from(&powers[i - j]);
        }
    }
    BatchOperators { a_cal, b_cal, z_cal, n, dt }
}

/// Disturbance sequence; only the pedestrian-speed entry of each block is
/// nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSequence(Vec<f64>);

impl DisturbanceSequence {
    pub fn from_ped_speeds(speeds: Vec<f64>) -> Self {
        Self(speeds)
    }

    pub fn ped_speeds(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn stacked(&self) -> DVector<f64> {
        let mut z = DVector::zeros(4 * self.0.len());
        for (k, v) in self.0.iter().enumerate() {
            z[4 * k + 3] = *v;
        }
        z
    }
}

/// `x_s = A_cal x0 + B_cal u_s + Z_cal z_s`, returned as `n` states at
/// `t0 + dt, ..., t0 + n dt`.
pub fn predict(
    x0: &JointState,
    u_s: &[f64],
    z_s: &DisturbanceSequence,
    ops: &BatchOperators,
) -> Result<Vec<JointState>, SolveError> {
    if u_s.len() != ops.n {
        return Err(SolveError::LengthMismatch { expected: ops.n, got: u_s.len() });
    }
    if z_s.len() != ops.n {
        return Err(SolveError::LengthMismatch { expected: ops.n, got: z_s.len() });
    }
    let x = DVector::from_column_slice(&x0.vector());
    let u = DVector::from_column_slice(u_s);
    let stacked = &ops.a_cal * x + &ops.b_cal * u + &ops.z_cal * z_s.stacked();
    Ok((0..ops.n)
        .map(|k| {
            let t = x0.t + (k + 1) as f64 * ops.dt;
            JointState::new(t, stacked[4 * k], stacked[4 * k + 1], stacked[4 * k + 2], stacked[4 * k + 3])
        })
        .collect())
}

/// Forward simulation in which each disturbance entry is the model
/// pedestrian's speed choice at the current predicted state.
pub fn rollout_with_ped_model(
    x0: &JointState,
    u_s: &[f64],
    geometry: &ScenarioGeometry,
    ped: &PedModelParams,
    dt: f64,
) -> (Vec<JointState>, DisturbanceSequence) {
    let mut traj = Vec::with_capacity(u_s.len());
    let mut z = Vec::with_capacity(u_s.len());
    let mut s = *x0;
    for &u in u_s {
        let zk = ped_next_velocity(&s, geometry, ped);
        s = step(&s, u, zk, dt);
        z.push(zk);
        traj.push(s);
    }
    (traj, DisturbanceSequence(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn step_examples() {
        let s = JointState::new(0.0, -5.0, 0.0, -3.0, 0.0);
        let n = step(&s, 0.0, 0.0, 0.1);
        assert_eq!(n.vector(), s.vector());

        let s = JointState::new(0.0, 0.0, 10.0, 0.0, 0.0);
        let n = step(&s, 2.0, 0.0, 0.1);
        assert!(close(n.x_veh, 1.01, 1e-12));
        assert!(close(n.v_veh, 10.2, 1e-12));

        let s = JointState::new(0.0, 0.0, 0.0, -3.0, 1.4);
        let n = step(&s, 0.0, 0.7, 0.1);
        assert!(close(n.y_ped, -2.86, 1e-12));
        assert_eq!(n.v_ped, 0.7);
    }

    #[test]
    fn single_step_batch_is_a_b_identity() {
        let ops = build_batch(1, 0.2);
        let a = state_matrix(0.2);
        let b = input_matrix(0.2);
        assert_eq!(ops.a_cal.fixed_view::<4, 4>(0, 0), a);
        assert_eq!(ops.b_cal.fixed_view::<4, 1>(0, 0), b);
        assert_eq!(ops.z_cal, DMatrix::identity(4, 4));
    }

    #[test]
    fn batch_shapes() {
        let ops = build_batch(5, 0.2);
        assert_eq!(ops.a_cal.shape(), (20, 4));
        assert_eq!(ops.b_cal.shape(), (20, 5));
        assert_eq!(ops.z_cal.shape(), (20, 20));
    }

    #[test]
    fn batch_blocks_match_repeated_products() {
        let dt = 0.3;
        let n = 6;
        let ops = build_batch(n, dt);
        let a = state_matrix(dt);
        let b = input_matrix(dt);
        // naive powers by repeated multiplication
        let pow = |k: usize| (0..k).fold(Matrix4::identity(), |m, _| m * a);
        assert_eq!(ops.a_cal.fixed_view::<4, 4>(8, 0).into_owned(), a * a * a);
        for i in 0..n {
            assert_eq!(ops.a_cal.fixed_view::<4, 4>(4 * i, 0).into_owned(), pow(i + 1));
            for j in 0..n {
                let bij = ops.b_cal.fixed_view::<4, 1>(4 * i, j).into_owned();
                let zij = ops.z_cal.fixed_view::<4, 4>(4 * i, 4 * j).into_owned();
                if j > i {
                    assert_eq!(bij, Vector4::zeros());
                    assert_eq!(zij, Matrix4::zeros());
                } else {
                    assert_eq!(bij, pow(i - j) * b);
                    assert_eq!(zij, pow(i - j));
                }
            }
        }
    }

    #[test]
    fn zero_inputs_give_zero_trajectory() {
        let ops = build_batch(4, 0.2);
        let x0 = JointState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let z = DisturbanceSequence::from_ped_speeds(vec![0.0; 4]);
        let traj = predict(&x0, &[0.0; 4], &z, &ops).unwrap();
        assert!(traj.iter().all(|s| s.vector() == [0.0; 4]));
    }

    #[test]
    fn free_response_is_power_of_a() {
        let ops = build_batch(5, 0.2);
        let x0 = JointState::new(0.0, -20.0, 7.0, -4.0, 1.1);
        let z = DisturbanceSequence::from_ped_speeds(vec![0.0; 5]);
        let traj = predict(&x0, &[0.0; 5], &z, &ops).unwrap();
        let a = state_matrix(0.2);
        let mut v = Vector4::from(x0.vector());
        for s in &traj {
            v = a * v;
            for c in 0..4 {
                assert!(close(s.vector()[c], v[c], 1e-12));
            }
        }
    }

    #[test]
    fn length_mismatch_is_reported() {
        let ops = build_batch(3, 0.2);
        let x0 = JointState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let z = DisturbanceSequence::from_ped_speeds(vec![0.0; 3]);
        assert_eq!(
            predict(&x0, &[0.0; 2], &z, &ops).unwrap_err(),
            SolveError::LengthMismatch { expected: 3, got: 2 }
        );
    }

    #[test]
    fn rollout_single_step_equals_step() {
        let g = ScenarioGeometry::default();
        let p = PedModelParams { c: 2.0, v_ped_ref: 1.4, k_d: 1.0, v_eps: 0.05 };
        let x0 = JointState::new(0.0, -30.0, 8.0, -5.0, 1.2);
        let (traj, z) = rollout_with_ped_model(&x0, &[0.5], &g, &p, 0.2);
        let expect = step(&x0, 0.5, ped_next_velocity(&x0, &g, &p), 0.2);
        assert_eq!(traj, vec![expect]);
        assert_eq!(z.len(), 1);
    }

    #[test]
    fn rollout_saturates_when_vehicle_is_far_and_slow() {
        let g = ScenarioGeometry::default();
        let p = PedModelParams { c: 2.0, v_ped_ref: 1.4, k_d: 1.0, v_eps: 0.05 };
        let x0 = JointState::new(0.0, -100.0, 1.0, 5.0, 1.4);
        let (_, z) = rollout_with_ped_model(&x0, &[0.0; 10], &g, &p, 0.2);
        assert!(z.ped_speeds().iter().all(|v| (v - 1.4).abs() < 1e-9));
    }

    #[test]
    fn pedestrian_advances_when_vehicle_waits_far_away() {
        let g = ScenarioGeometry::default();
        let p = PedModelParams { c: 2.0, v_ped_ref: 1.4, k_d: 1.0, v_eps: 0.05 };
        let x0 = JointState::new(0.0, -60.0, 0.0, -6.0, 0.0);
        let (traj, _) = rollout_with_ped_model(&x0, &[0.0; 20], &g, &p, 0.2);
        let mut prev = x0.y_ped;
        for s in &traj {
            assert!(s.y_ped >= prev);
            prev = s.y_ped;
        }
        assert!(traj.last().unwrap().y_ped > x0.y_ped + 4.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (JointState, Vec<f64>, Vec<f64>, f64)> {
            (1usize..=20).prop_flat_map(|n| {
                (
                    (-80.0f64..10.0, 0.0f64..15.0, -10.0f64..5.0, 0.0f64..2.0)
                        .prop_map(|(x, v, y, vp)| JointState::new(0.0, x, v, y, vp)),
                    proptest::collection::vec(-4.0f64..2.0, n),
                    proptest::collection::vec(0.0f64..1.4, n),
                    0.05f64..0.5,
                )
            })
        }

        proptest! {
            #[test]
            fn batch_equals_sequential((x0, u, z, dt) in instance()) {
                let ops = build_batch(u.len(), dt);
                let zs = DisturbanceSequence::from_ped_speeds(z.clone());
                let batch = predict(&x0, &u, &zs, &ops).unwrap();
                let mut s = x0;
                for k in 0..u.len() {
                    s = step(&s, u[k], z[k], dt);
                    for c in 0..4 {
                        prop_assert!((batch[k].vector()[c] - s.vector()[c]).abs() <= 1e-9);
                    }
                }
            }

            #[test]
            fn prediction_is_linear_in_input((x0, u, z, dt) in instance(), shift in -1.0f64..1.0) {
                let ops = build_batch(u.len(), dt);
                let zs = DisturbanceSequence::from_ped_speeds(z);
                let v: Vec<f64> = u.iter().enumerate().map(|(k, _)| shift * (k as f64 + 1.0).sin()).collect();
                let uv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                let base = predict(&x0, &u, &zs, &ops).unwrap();
                let moved = predict(&x0, &uv, &zs, &ops).unwrap();
                let dv = &ops.b_cal * DVector::from_column_slice(&v);
                for k in 0..u.len() {
                    for c in 0..4 {
                        let lhs = moved[k].vector()[c];
                        let rhs = base[k].vector()[c] + dv[4 * k + c];
                        prop_assert!((lhs - rhs).abs() <= 1e-9);
                    }
                }
            }

            #[test]
            fn step_preserves_finiteness(x in -1e3f64..1e3, v in 0.0f64..50.0, y in -1e3f64..1e3,
                                         vp in -3.0f64..3.0, u in -10.0f64..10.0, z in -3.0f64..3.0) {
                let s = step(&JointState::new(0.0, x, v, y, vp), u, z, 0.2);
                prop_assert!(s.is_finite());
            }
        }
    }
}
