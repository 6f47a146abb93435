//! Cost maps, masks, and the composed robot cost.
//!
//! A language-derived cost is a [`CostMap`] paired with a binary [`Mask`].
//! Corrections whose mask covers every cell are constraints and stay active
//! for the rest of an episode; corrections with a partial mask are
//! intermediate goals that temporarily replace the task cost.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::grid::Grid;
use crate::math::Vec2;
use crate::planner::{base_cost, BaseCostConfig};
use crate::world::{Environment, RobotState};

/// Upper end of the rescaled cost range.
pub const COST_CEILING: f64 = 255.0;

/// Cost assigned to states a goal directive's mask excludes.
pub const OFF_MASK_COST: f64 = COST_CEILING;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("cost grid contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("grid shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("velocity channel holds unknown directive code {0}")]
    BadDirective(u8),
    #[error("a {found:?} correction cannot be used as a {expected:?}")]
    WrongKind { expected: CorrectionKind, found: CorrectionKind },
}

/// Categorical velocity directive carried by a cost map's velocity channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum VelocityDirective {
    Faster,
    Slower,
    Unconstrained,
}

/// Channel codes for each velocity directive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VelocityCodes {
    pub faster: u8,
    pub slower: u8,
    pub unconstrained: u8,
}

/// speed-up, slow-down, unconstrained
pub const VELOCITY_CODES: VelocityCodes = VelocityCodes { faster: 0, slower: 1, unconstrained: 2 };

impl VelocityDirective {
    pub fn code(self) -> u8 {
        match self {
            VelocityDirective::Faster => VELOCITY_CODES.faster,
            VelocityDirective::Slower => VELOCITY_CODES.slower,
            VelocityDirective::Unconstrained => VELOCITY_CODES.unconstrained,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        if code == VELOCITY_CODES.faster {
            Some(VelocityDirective::Faster)
        } else if code == VELOCITY_CODES.slower {
            Some(VelocityDirective::Slower)
        } else if code == VELOCITY_CODES.unconstrained {
            Some(VelocityDirective::Unconstrained)
        } else {
            None
        }
    }
}

/// Two-channel cost grid: a position cost and a velocity directive per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMap {
    pub position: Grid<f64>,
    pub velocity: Grid<u8>,
}

impl CostMap {
    pub fn new(position: Grid<f64>, velocity: Grid<u8>) -> Result<Self, CostError> {
        if !position.same_shape(&velocity) {
            return Err(CostError::ShapeMismatch(
                position.width(),
                position.height(),
                velocity.width(),
                velocity.height(),
            ));
        }
        if let Some(&bad) = velocity.as_slice().iter().find(|&&c| VelocityDirective::from_code(c).is_none()) {
            return Err(CostError::BadDirective(bad));
        }
        Ok(CostMap { position, velocity })
    }

    /// Zero position cost with an unconstrained velocity channel.
    pub fn zeros(width: usize, height: usize) -> Self {
        CostMap {
            position: Grid::filled(width, height, 0.0),
            velocity: Grid::filled(width, height, VELOCITY_CODES.unconstrained),
        }
    }

    pub fn width(&self) -> usize {
        self.position.width()
    }

    pub fn height(&self) -> usize {
        self.position.height()
    }
}

/// Binary mask over cost-map cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask(pub Grid<bool>);

impl Mask {
    pub fn ones(width: usize, height: usize) -> Self {
        Mask(Grid::filled(width, height, true))
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Mask(Grid::filled(width, height, false))
    }

    pub fn is_all_ones(&self) -> bool {
        self.0.as_slice().iter().all(|&b| b)
    }

    pub fn count_ones(&self) -> usize {
        self.0.as_slice().iter().filter(|&&b| b).count()
    }

    pub fn grid(&self) -> &Grid<bool> {
        &self.0
    }
}

/// Constraint-vs-goal classification of a grounded correction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CorrectionKind {
    Constraint,
    Goal,
}

/// An all-ones mask is always a constraint; anything else is a goal directive.
pub fn classify_mask(mask: &Mask) -> CorrectionKind {
    if mask.is_all_ones() {
        CorrectionKind::Constraint
    } else {
        CorrectionKind::Goal
    }
}

/// The grounded form of one correction.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundedCorrection {
    pub cost: CostMap,
    pub mask: Mask,
    pub kind: CorrectionKind,
    /// Target point of a goal directive.
    pub goal_point: Option<Vec2>,
    /// Arc length in pixels of the guiding path of a goal directive.
    pub path_length: Option<f64>,
    pub source_text: String,
}

impl GroundedCorrection {
    /// Position cost of the masked map at a row-major cell index; cells the
    /// mask excludes read as the off-mask wall.
    #[inline]
    pub fn masked_position_at(&self, index: usize) -> f64 {
        if *self.mask.0.at(index) {
            *self.cost.position.at(index)
        } else {
            OFF_MASK_COST
        }
    }
}

/// Affine map of `raw` onto `[0, 255]`: minimum to 0, maximum to 255.
/// A constant grid maps to all zeros.
pub fn rescale(raw: &Grid<f64>) -> Result<Grid<f64>, CostError> {
    rescale_to(raw, COST_CEILING)
}

/// Affine map of `raw` onto `[0, ceiling]`.
pub fn rescale_to(raw: &Grid<f64>, ceiling: f64) -> Result<Grid<f64>, CostError> {
    if let Some(i) = raw.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(CostError::NonFinite(i));
    }
    let (lo, hi) = raw
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if raw.is_empty() || hi <= lo {
        return Ok(raw.map(|_| 0.0));
    }
    let span = hi - lo;
    Ok(raw.map(|&v| ((v - lo) / span * ceiling).clamp(0.0, ceiling)))
}

/// Elementwise product of the position channel with the mask. The velocity
/// channel passes through unmasked.
pub fn masked_cost(cost: &CostMap, mask: &Mask) -> Result<CostMap, CostError> {
    if !cost.position.same_shape(&mask.0) {
        return Err(CostError::ShapeMismatch(cost.width(), cost.height(), mask.0.width(), mask.0.height()));
    }
    let data = cost
        .position
        .as_slice()
        .iter()
        .zip(mask.0.as_slice())
        .map(|(&c, &m)| if m { c } else { 0.0 })
        .collect();
    let position = Grid::from_vec(cost.width(), cost.height(), data).expect("shape checked");
    Ok(CostMap { position, velocity: cost.velocity.clone() })
}

/// Euclidean distance to the goal in pixels.
#[inline]
pub fn task_cost_at(goal: Vec2, q: Vec2) -> f64 {
    goal.distance(q)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VelocityPenaltyConfig {
    pub weight: f64,
    /// Target speed for the speed-up directive, px/s.
    pub reference_speed: f64,
}

impl Default for VelocityPenaltyConfig {
    fn default() -> Self {
        VelocityPenaltyConfig { weight: 2.0, reference_speed: 400.0 }
    }
}

#[inline]
pub fn velocity_penalty(directive: VelocityDirective, qd: Vec2, cfg: &VelocityPenaltyConfig) -> f64 {
    match directive {
        VelocityDirective::Unconstrained => 0.0,
        VelocityDirective::Slower => cfg.weight * qd.norm(),
        VelocityDirective::Faster => cfg.weight * (cfg.reference_speed - qd.norm()).max(0.0),
    }
}

/// Every active term of the robot's composed cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostStack {
    /// Goal of the Euclidean task cost, if the task has one.
    pub task_goal: Option<Vec2>,
    pub task_cost_active: bool,
    pub base: BaseCostConfig,
    pub velocity: VelocityPenaltyConfig,
    /// Multiplier on the position cost of every constraint.
    pub constraint_weight: f64,
    language_goal: Option<GroundedCorrection>,
    constraints: Vec<GroundedCorrection>,
}

impl CostStack {
    pub fn new(task_goal: Option<Vec2>, base: BaseCostConfig, velocity: VelocityPenaltyConfig) -> Self {
        CostStack {
            task_goal,
            task_cost_active: task_goal.is_some(),
            base,
            velocity,
            constraint_weight: 1.0,
            language_goal: None,
            constraints: Vec::new(),
        }
    }

    pub fn language_goal(&self) -> Option<&GroundedCorrection> {
        self.language_goal.as_ref()
    }

    pub fn constraints(&self) -> &[GroundedCorrection] {
        &self.constraints
    }

    pub fn push_constraint(&mut self, gc: GroundedCorrection) -> Result<(), CostError> {
        if gc.kind != CorrectionKind::Constraint {
            return Err(CostError::WrongKind { expected: CorrectionKind::Constraint, found: gc.kind });
        }
        self.constraints.push(gc);
        Ok(())
    }

    /// Installs a goal directive, replacing any earlier one.
    pub fn set_language_goal(&mut self, gc: GroundedCorrection) -> Result<(), CostError> {
        if gc.kind != CorrectionKind::Goal {
            return Err(CostError::WrongKind { expected: CorrectionKind::Goal, found: gc.kind });
        }
        self.language_goal = Some(gc);
        Ok(())
    }

    pub fn clear_language_goal(&mut self) -> Option<GroundedCorrection> {
        self.language_goal.take()
    }

    /// Velocity directive in force at a cell: the most recent constraint that
    /// says anything about velocity there wins.
    #[inline]
    pub fn velocity_directive_at(&self, index: usize) -> VelocityDirective {
        let unconstrained = VELOCITY_CODES.unconstrained;
        let code = self
            .constraints
            .iter()
            .rev()
            .map(|c| *c.cost.velocity.at(index))
            .find(|&code| code != unconstrained)
            .unwrap_or(unconstrained);
        VelocityDirective::from_code(code).unwrap_or(VelocityDirective::Unconstrained)
    }

    /// Sum of every language-derived position term at a cell index.
    #[inline]
    pub fn language_cost_at(&self, index: usize) -> f64 {
        let mut total = 0.0;
        if let Some(goal) = &self.language_goal {
            total += goal.masked_position_at(index);
        }
        for c in &self.constraints {
            total += self.constraint_weight * *c.cost.position.at(index);
        }
        total
    }

    /// Composed language position cost over the whole grid.
    pub fn composed_language_cost(&self, width: usize, height: usize) -> Grid<f64> {
        Grid::from_fn(width, height, |cell| self.language_cost_at(cell.y * width + cell.x))
    }
}

/// Composed robot cost at a state: task, base, language goal, constraints,
/// and the velocity penalty.
#[inline]
pub fn evaluate_stack(stack: &CostStack, state: &RobotState, env: &Environment) -> f64 {
    evaluate_terms(stack, state, env, true)
}

/// [`evaluate_stack`] with the language-derived terms optionally hidden.
#[inline]
pub(crate) fn evaluate_terms(stack: &CostStack, state: &RobotState, env: &Environment, language: bool) -> f64 {
    let mut total = base_cost(state, env, &stack.base);
    if stack.task_cost_active {
        if let Some(goal) = stack.task_goal {
            total += task_cost_at(goal, state.q);
        }
    }
    if !language || (stack.language_goal.is_none() && stack.constraints.is_empty()) {
        return total;
    }
    let index = env.spec.index_of(state.q);
    total += stack.language_cost_at(index);
    let directive = stack.velocity_directive_at(index);
    total + velocity_penalty(directive, state.qd, &stack.velocity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn grid(w: usize, h: usize, v: &[f64]) -> Grid<f64> {
        Grid::from_vec(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn rescale_endpoints() {
        let g = rescale(&grid(3, 1, &[-10.0, 0.0, 10.0])).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 127.5, 255.0]);
    }

    #[test]
    fn rescale_constant_is_zero() {
        let g = rescale(&grid(2, 2, &[4.0; 4])).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rescale_rejects_nan() {
        assert_eq!(rescale(&grid(2, 1, &[0.0, f64::NAN])), Err(CostError::NonFinite(1)));
    }

    #[test]
    fn rescale_stay_away_small_grid() {
        // raw = -distance to the cell at (0, 0) on a 3x3 unit grid
        let raw = Grid::from_fn(3, 3, |c| -libm::sqrt((c.x * c.x + c.y * c.y) as f64));
        let g = rescale(&raw).unwrap();
        assert_eq!(*g.get(crate::grid::Cell::new(0, 0)), 255.0);
        assert_eq!(*g.get(crate::grid::Cell::new(2, 2)), 0.0);
        // (1,0) at distance 1 of max 2*sqrt(2)
        let expect = 255.0 * (1.0 - 1.0 / (2.0 * libm::sqrt(2.0)));
        assert!((g.get(crate::grid::Cell::new(1, 0)) - expect).abs() < 1e-12);
    }

    #[test]
    fn masked_cost_identity_zero_and_single() {
        let c = CostMap::new(grid(2, 2, &[1.0, 2.0, 3.0, 4.0]), Grid::filled(2, 2, 1)).unwrap();
        assert_eq!(masked_cost(&c, &Mask::ones(2, 2)).unwrap(), c);
        let z = masked_cost(&c, &Mask::zeros(2, 2)).unwrap();
        assert!(z.position.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(z.velocity, c.velocity);
        let mut single = Mask::zeros(2, 2);
        single.0.set(crate::grid::Cell::new(1, 1), true);
        assert_eq!(masked_cost(&c, &single).unwrap().position.as_slice(), &[0.0, 0.0, 0.0, 4.0]);
        assert!(matches!(masked_cost(&c, &Mask::ones(3, 2)), Err(CostError::ShapeMismatch(..))));
    }

    #[test]
    fn cost_map_rejects_bad_codes() {
        assert_eq!(
            CostMap::new(grid(1, 1, &[0.0]), Grid::filled(1, 1, 7)),
            Err(CostError::BadDirective(7))
        );
    }

    #[test]
    fn task_cost_values() {
        assert_eq!(task_cost_at(Vec2::new(3.0, 4.0), Vec2::new(3.0, 4.0)), 0.0);
        assert_eq!(task_cost_at(Vec2::new(3.0, 4.0), Vec2::ZERO), 5.0);
        assert_eq!(task_cost_at(Vec2::ZERO, Vec2::new(3.0, 4.0)), 5.0);
    }

    #[test]
    fn velocity_penalty_cases() {
        let cfg = VelocityPenaltyConfig { weight: 1.0, reference_speed: 100.0 };
        assert_eq!(velocity_penalty(VelocityDirective::Unconstrained, Vec2::new(500.0, 0.0), &cfg), 0.0);
        assert_eq!(velocity_penalty(VelocityDirective::Slower, Vec2::new(30.0, 40.0), &cfg), 50.0);
        assert_eq!(velocity_penalty(VelocityDirective::Faster, Vec2::new(120.0, 0.0), &cfg), 0.0);
        assert_eq!(velocity_penalty(VelocityDirective::Faster, Vec2::new(40.0, 0.0), &cfg), 60.0);
    }

    #[test]
    fn classify_by_mask() {
        assert_eq!(classify_mask(&Mask::ones(4, 4)), CorrectionKind::Constraint);
        let mut m = Mask::ones(4, 4);
        m.0.set(crate::grid::Cell::new(2, 3), false);
        assert_eq!(classify_mask(&m), CorrectionKind::Goal);
    }

    #[test]
    fn stack_rejects_wrong_kinds() {
        let mut stack = CostStack::new(None, BaseCostConfig::default(), VelocityPenaltyConfig::default());
        let gc = GroundedCorrection {
            cost: CostMap::zeros(2, 2),
            mask: Mask::ones(2, 2),
            kind: CorrectionKind::Constraint,
            goal_point: None,
            path_length: None,
            source_text: "go slower".to_string(),
        };
        assert!(stack.set_language_goal(gc.clone()).is_err());
        stack.push_constraint(gc).unwrap();
        assert_eq!(stack.constraints().len(), 1);
    }
}
