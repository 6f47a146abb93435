use langcost_core::world::step_dynamics;
use langcost_core::{GridSpec, RobotState, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_ACCEL: f64 = 200.0;

// Velocity first, then position with the new velocity, written out per axis.
fn by_hand(q: (f64, f64), qd: (f64, f64), a: (f64, f64), dt: f64) -> ((f64, f64), (f64, f64)) {
    let vx = qd.0 + dt * a.0;
    let vy = qd.1 + dt * a.1;
    ((q.0 + dt * vx, q.1 + dt * vy), (vx, vy))
}

#[test]
fn matches_hand_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let q = (rng.random_range(-100.0..2200.0), rng.random_range(-100.0..2200.0));
        let qd = (rng.random_range(-800.0..800.0), rng.random_range(-800.0..800.0));
        let angle = rng.random_range(0.0..core::f64::consts::TAU);
        let mag = rng.random_range(0.0..MAX_ACCEL);
        let a = (mag * angle.cos(), mag * angle.sin());
        let dt = rng.random_range(0.001..0.5);

        let spec = GridSpec { dt, ..GridSpec::default() };
        let state = RobotState { q: Vec2::new(q.0, q.1), qd: Vec2::new(qd.0, qd.1), qdd: Vec2::ZERO };
        let next = step_dynamics(&state, Vec2::new(a.0, a.1), &spec, MAX_ACCEL).unwrap();
        let (eq, eqd) = by_hand(q, qd, a, dt);
        for err in [next.q.x - eq.0, next.q.y - eq.1, next.qd.x - eqd.0, next.qd.y - eqd.1] {
            worst = worst.max(err.abs());
        }
        assert_eq!(next.qdd, Vec2::new(a.0, a.1));
    }
    assert!(worst <= 1e-12, "max error {worst:e}");
}

#[test]
fn rejects_over_limit_and_non_finite() {
    let spec = GridSpec::default();
    let s = RobotState::at_rest(Vec2::new(10.0, 10.0));
    assert!(step_dynamics(&s, Vec2::new(201.0, 0.0), &spec, MAX_ACCEL).is_err());
    assert!(step_dynamics(&s, Vec2::new(f64::NAN, 0.0), &spec, MAX_ACCEL).is_err());
    let bad = RobotState { qd: Vec2::new(f64::INFINITY, 0.0), ..s };
    assert!(step_dynamics(&bad, Vec2::ZERO, &spec, MAX_ACCEL).is_err());
}
