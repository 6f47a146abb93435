use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::costmap::{evaluate_stack, evaluate_terms, CostStack};
use crate::math::{exp, Vec2};
use crate::world::{integrate, Environment, RobotState};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PlannerConfig {
    pub particles: usize,
    /// Rollout length in ticks.
    pub horizon: usize,
    /// Standard deviation of the acceleration perturbation, px/s².
    pub sampling_stddev: f64,
    /// Softmax temperature over rollout costs.
    pub temperature: f64,
    /// Acceleration magnitude limit, px/s².
    pub max_accel: f64,
    /// When set, language costs are only visible within this many cells
    /// (Chebyshev distance) of the robot's current cell.
    pub cost_window: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            particles: 500,
            horizon: 30,
            sampling_stddev: 60.0,
            temperature: 1.0,
            max_accel: 200.0,
            cost_window: None,
        }
    }
}

impl PlannerConfig {
    pub fn is_valid(&self) -> bool {
        self.particles >= 1
            && self.horizon >= 1
            && self.temperature > 0.0
            && self.sampling_stddev >= 0.0
            && self.max_accel > 0.0
    }
}

/// MPPI-style planner: perturbs a warm-started mean control sequence, rolls
/// every perturbation through the double integrator, and returns the
/// softmax-weighted first control.
#[derive(Clone, Debug)]
pub struct Mppi {
    cfg: PlannerConfig,
    mean: Vec<Vec2>,
    controls: Vec<Vec2>,
    costs: Vec<f64>,
}

impl Mppi {
    pub fn new(cfg: PlannerConfig) -> Self {
        assert!(cfg.is_valid(), "invalid planner config: {cfg:?}");
        Mppi {
            cfg,
            mean: vec![Vec2::ZERO; cfg.horizon],
            controls: vec![Vec2::ZERO; cfg.particles * cfg.horizon],
            costs: vec![0.0; cfg.particles],
        }
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    /// Forgets the warm start.
    pub fn reset(&mut self) {
        self.mean.iter_mut().for_each(|u| *u = Vec2::ZERO);
    }

    /// Warm-start mean sequence for the next call.
    pub fn mean_sequence(&self) -> &[Vec2] {
        &self.mean
    }

    /// Rollout costs of the most recent call, in particle order.
    pub fn particle_costs(&self) -> &[f64] {
        &self.costs
    }

    /// Control sampled for particle `k` at step `t` in the most recent call.
    pub fn particle_control(&self, k: usize, t: usize) -> Vec2 {
        self.controls[k * self.cfg.horizon + t]
    }

    /// Chooses the next acceleration. Reproducible given the same inputs and
    /// random stream state.
    pub fn plan_step<R: Rng + ?Sized>(
        &mut self,
        state: &RobotState,
        stack: &CostStack,
        env: &Environment,
        rng: &mut R,
    ) -> Vec2 {
        let PlannerConfig { particles, horizon, sampling_stddev, temperature, max_accel, cost_window } = self.cfg;
        let dt = env.spec.dt;

        for k in 0..particles {
            let row = &mut self.controls[k * horizon..(k + 1) * horizon];
            for (u, m) in row.iter_mut().zip(&self.mean) {
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                *u = (*m + Vec2::new(nx, ny) * sampling_stddev).clamp_norm(max_accel);
            }
        }

        let windowed = cost_window.map(|w| (w, env.spec.cell_of(state.q)));
        let mut min_cost = f64::INFINITY;
        for k in 0..particles {
            let row = &self.controls[k * horizon..(k + 1) * horizon];
            let mut s = *state;
            let mut total = 0.0;
            for &u in row {
                s = integrate(&s, u, dt);
                total += match windowed {
                    None => evaluate_stack(stack, &s, env),
                    Some((w, center)) => windowed_cost(stack, &s, env, w, center),
                };
            }
            self.costs[k] = total;
            min_cost = min_cost.min(total);
        }

        let inv_lambda = 1.0 / temperature;
        let mut weight_sum = 0.0;
        let mut next = vec![Vec2::ZERO; horizon];
        for k in 0..particles {
            let w = exp(-(self.costs[k] - min_cost) * inv_lambda);
            if w == 0.0 {
                continue;
            }
            weight_sum += w;
            let row = &self.controls[k * horizon..(k + 1) * horizon];
            for (acc, &u) in next.iter_mut().zip(row) {
                *acc += u * w;
            }
        }
        let norm = 1.0 / weight_sum;
        for u in next.iter_mut() {
            *u = (*u * norm).clamp_norm(max_accel);
        }

        let first = next[0];
        // warm start: shift by one tick, zero-pad the tail
        self.mean.copy_from_slice(&next);
        self.mean.rotate_left(1);
        if let Some(last) = self.mean.last_mut() {
            *last = Vec2::ZERO;
        }
        first
    }
}

fn windowed_cost(
    stack: &CostStack,
    s: &RobotState,
    env: &Environment,
    window: usize,
    center: crate::grid::Cell,
) -> f64 {
    let cell = env.spec.cell_of(s.q);
    let visible = cell.x.abs_diff(center.x) <= window && cell.y.abs_diff(center.y) <= window;
    evaluate_terms(stack, s, env, visible)
}
