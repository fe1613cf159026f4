//! Criterion benchmarks live in `benches/`; run them with `cargo bench -p crossing-bench`.

use crossing_core::JointState;

/// A mid-negotiation state: the pedestrian is about to step off the curb
/// while the vehicle is 20 m out.
pub fn negotiation_state() -> JointState {
    JointState::new(0.0, -20.0, 8.33, -2.5, 0.8)
}
