//! Deterministic grounding of templated corrections into (cost, mask, kind).
//!
//! Goal directives become a guiding tube along the shortest collision-free
//! path from the robot to the goal point, labeled with the remaining arc
//! length. Stay-away and velocity corrections become full-grid constraint
//! maps with an all-ones mask.

mod intent;
mod label;
mod lexicon;

pub use intent::{parse, render, templates, Direction, Intent, IntentCategory, RobotRelation, Speed, SpatialRelation};
pub use label::{label_polyline, PathLabel};
pub use lexicon::{tokenize, Lexicon, DEFAULT_LEXICON};

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::costmap::{classify_mask, rescale, CorrectionKind, CostMap, GroundedCorrection, Mask, VELOCITY_CODES};
use crate::grid::Grid;
use crate::math::Vec2;
use crate::planner::{nearest_free_cell, shortest_path_on, PlanError};
use crate::world::{collision, Environment, ObjectInstance, ObjectKind, RobotState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundingError {
    #[error("empty instruction")]
    Empty,
    #[error("could not understand '{span}'")]
    Unparsed { span: String },
    #[error("'{span}' needs an object to refer to")]
    MissingObject { span: String },
    #[error("{0:?} intent has the wrong object reference")]
    MalformedIntent(IntentCategory),
    #[error("no known object matches '{descriptor}'")]
    UnknownObject { descriptor: String },
    #[error("'{descriptor}' is ambiguous: {candidates} objects match")]
    Ambiguous { descriptor: String, candidates: usize },
    #[error("there is no {kind} in this scene")]
    ObjectNotPresent { kind: ObjectKind },
    #[error("no collision-free path to the goal point")]
    NoPath,
    #[error("no free cell near {0:?}")]
    NoFreeCell(Vec2),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GroundingConfig {
    /// Offset of edge and ray goals from the footprint, px.
    pub goal_offset: f64,
    /// Displacement of directional goals, px.
    pub directional_offset: f64,
    /// Margin kept between directional goals and the world edge, px.
    pub bounds_margin: f64,
    /// Guiding-tube radius around the path, in cells.
    pub tube_radius: f64,
    /// Largest on-path cost; off-path cells sit at 255 above it.
    pub on_path_ceiling: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        GroundingConfig {
            goal_offset: 20.0,
            directional_offset: 150.0,
            bounds_margin: 20.0,
            tube_radius: 2.0,
            on_path_ceiling: 229.0,
        }
    }
}

/// Relations that name a goal point relative to an object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GoalRelation {
    Above,
    Below,
    LeftOf,
    RightOf,
    Behind,
    InFrontOf,
}

impl GoalRelation {
    pub const ALL: [GoalRelation; 6] = [
        GoalRelation::Above,
        GoalRelation::Below,
        GoalRelation::LeftOf,
        GoalRelation::RightOf,
        GoalRelation::Behind,
        GoalRelation::InFrontOf,
    ];

    /// The four footprint-edge relations.
    pub const EDGES: [GoalRelation; 4] =
        [GoalRelation::Above, GoalRelation::Below, GoalRelation::LeftOf, GoalRelation::RightOf];

    pub fn category(self) -> IntentCategory {
        match self {
            GoalRelation::Above => IntentCategory::SpatialObject(SpatialRelation::Above),
            GoalRelation::Below => IntentCategory::SpatialObject(SpatialRelation::Below),
            GoalRelation::LeftOf => IntentCategory::SpatialObject(SpatialRelation::LeftOf),
            GoalRelation::RightOf => IntentCategory::SpatialObject(SpatialRelation::RightOf),
            GoalRelation::Behind => IntentCategory::RobotObject(RobotRelation::Behind),
            GoalRelation::InFrontOf => IntentCategory::RobotObject(RobotRelation::InFrontOf),
        }
    }

    pub fn from_category(category: IntentCategory) -> Option<GoalRelation> {
        GoalRelation::ALL.into_iter().find(|r| r.category() == category)
    }
}

/// Raw goal point for an object relation, before collision projection.
///
/// Edge relations offset the footprint edge midpoint outward; `InFrontOf`
/// and `Behind` sit on the ray from the robot through the object center,
/// before the near boundary and past the far boundary respectively.
pub fn relation_point(relation: GoalRelation, object: &ObjectInstance, robot_q: Vec2, offset: f64) -> Vec2 {
    let f = object.footprint;
    let c = f.center();
    match relation {
        GoalRelation::Above => Vec2::new(c.x, f.min.y - offset),
        GoalRelation::Below => Vec2::new(c.x, f.max.y + offset),
        GoalRelation::LeftOf => Vec2::new(f.min.x - offset, c.y),
        GoalRelation::RightOf => Vec2::new(f.max.x + offset, c.y),
        GoalRelation::Behind | GoalRelation::InFrontOf => {
            let mut dir = (c - robot_q).normalized();
            if dir == Vec2::ZERO {
                dir = Vec2::new(1.0, 0.0);
            }
            let (t_in, t_out) = f.ray_interval(robot_q, dir).unwrap_or((0.0, 0.0));
            if relation == GoalRelation::InFrontOf {
                robot_q + dir * (t_in - offset)
            } else {
                robot_q + dir * (t_out + offset)
            }
        }
    }
}

/// Raw goal point of a directional correction, clipped inside the bounds.
pub fn directional_point(direction: Direction, robot_q: Vec2, env: &Environment, cfg: &GroundingConfig) -> Vec2 {
    let step = match direction {
        Direction::Up => Vec2::new(0.0, -1.0),
        Direction::Down => Vec2::new(0.0, 1.0),
        Direction::Left => Vec2::new(-1.0, 0.0),
        Direction::Right => Vec2::new(1.0, 0.0),
    };
    clip_inside(robot_q + step * cfg.directional_offset, env, cfg.bounds_margin)
}

fn clip_inside(p: Vec2, env: &Environment, margin: f64) -> Vec2 {
    let (w, h) = (env.spec.world_width as f64, env.spec.world_height as f64);
    Vec2::new(p.x.clamp(margin, w - margin), p.y.clamp(margin, h - margin))
}

/// Moves a point that is in collision or out of bounds to the nearest free
/// cell center.
pub fn project_free(p: Vec2, env: &Environment) -> Result<Vec2, GroundingError> {
    let bounds = env.spec.bounds();
    if bounds.contains(p) && !collision(p, env) {
        return Ok(p);
    }
    nearest_free_cell(env, p).map(|c| env.spec.cell_center(c)).ok_or(GroundingError::NoFreeCell(p))
}

/// Goal point of an object relation after collision projection.
pub fn goal_point(
    relation: GoalRelation,
    object: &ObjectInstance,
    robot_q: Vec2,
    env: &Environment,
    cfg: &GroundingConfig,
) -> Result<Vec2, GroundingError> {
    project_free(relation_point(relation, object, robot_q, cfg.goal_offset), env)
}

/// Turns text into grounded corrections for one lexicon and configuration.
#[derive(Clone, Debug, Default)]
pub struct Grounder {
    pub lexicon: Lexicon,
    pub cfg: GroundingConfig,
}

impl Grounder {
    pub fn new(lexicon: Lexicon, cfg: GroundingConfig) -> Self {
        Grounder { lexicon, cfg }
    }

    pub fn parse(&self, text: &str) -> Result<Intent, GroundingError> {
        parse(text, &self.lexicon)
    }

    /// Resolves the intent's object reference to the single matching
    /// instance in the scene.
    pub fn resolve_object<'e>(&self, intent: &Intent, env: &'e Environment) -> Result<&'e ObjectInstance, GroundingError> {
        let descriptor = intent.object_ref.as_deref().ok_or(GroundingError::MalformedIntent(intent.category))?;
        let tokens = tokenize(descriptor);
        let matches = self.lexicon.object_matches(&tokens);
        let longest = matches.iter().map(|&(_, len)| len).max();
        let kinds: Vec<ObjectKind> = match longest {
            None => return Err(GroundingError::UnknownObject { descriptor: descriptor.to_string() }),
            Some(len) => matches.iter().filter(|&&(_, l)| l == len).map(|&(k, _)| k).collect(),
        };
        if kinds.len() > 1 {
            return Err(GroundingError::Ambiguous { descriptor: descriptor.to_string(), candidates: kinds.len() });
        }
        let kind = kinds[0];
        let mut found = env.objects.iter().filter(|o| o.kind == kind);
        match (found.next(), found.next()) {
            (None, _) => Err(GroundingError::ObjectNotPresent { kind }),
            (Some(o), None) => Ok(o),
            (Some(_), Some(_)) => Err(GroundingError::Ambiguous {
                descriptor: descriptor.to_string(),
                candidates: env.objects.iter().filter(|o| o.kind == kind).count(),
            }),
        }
    }

    /// Goal point of a goal-directed intent, or `None` for constraints.
    pub fn intent_goal_point(
        &self,
        intent: &Intent,
        env: &Environment,
        robot_q: Vec2,
    ) -> Result<Option<Vec2>, GroundingError> {
        match intent.category {
            IntentCategory::Directional(d) => Ok(Some(project_free(directional_point(d, robot_q, env, &self.cfg), env)?)),
            IntentCategory::SpatialObject(SpatialRelation::StayAway) | IntentCategory::Velocity(_) => Ok(None),
            category => {
                let relation = GoalRelation::from_category(category).expect("object goal relation");
                let object = self.resolve_object(intent, env)?;
                Ok(Some(goal_point(relation, object, robot_q, env, &self.cfg)?))
            }
        }
    }

    pub fn ground(&self, intent: &Intent, env: &Environment, state: &RobotState) -> Result<GroundedCorrection, GroundingError> {
        self.ground_with_text(intent, env, state, render(intent, 0))
    }

    pub fn ground_text(&self, text: &str, env: &Environment, state: &RobotState) -> Result<GroundedCorrection, GroundingError> {
        let intent = self.parse(text)?;
        self.ground_with_text(&intent, env, state, text.to_string())
    }

    fn ground_with_text(
        &self,
        intent: &Intent,
        env: &Environment,
        state: &RobotState,
        source_text: String,
    ) -> Result<GroundedCorrection, GroundingError> {
        let spec = &env.spec;
        let (w, h) = (spec.cols(), spec.rows());
        let (cost, mask, goal_point, path_length) = match intent.category {
            IntentCategory::Velocity(speed) => {
                let code = match speed {
                    Speed::Faster => VELOCITY_CODES.faster,
                    Speed::Slower => VELOCITY_CODES.slower,
                };
                let cost = CostMap { position: Grid::filled(w, h, 0.0), velocity: Grid::filled(w, h, code) };
                (cost, Mask::ones(w, h), None, None)
            }
            IntentCategory::SpatialObject(SpatialRelation::StayAway) => {
                let object = self.resolve_object(intent, env)?;
                (stay_away_map(env, object.center), Mask::ones(w, h), None, None)
            }
            _ => {
                let goal = self.intent_goal_point(intent, env, state.q)?.expect("goal intent");
                let label = self.guide_to(env, state.q, goal)?;
                (label.cost, label.mask, Some(goal), Some(label.length))
            }
        };
        let kind = classify_mask(&mask);
        Ok(GroundedCorrection { cost, mask, kind, goal_point, path_length, source_text })
    }

    /// Guiding-tube label along the oracle path from `from` to `goal`.
    pub fn guide_to(&self, env: &Environment, from: Vec2, goal: Vec2) -> Result<PathLabel, GroundingError> {
        let points = self.oracle_path(env, from, goal)?;
        Ok(label_polyline(&points, &env.spec, &self.cfg))
    }

    /// Cell-center polyline of the shortest collision-free path, with both
    /// endpoints snapped to the nearest traversable cells.
    pub fn oracle_path(&self, env: &Environment, from: Vec2, goal: Vec2) -> Result<Vec<Vec2>, GroundingError> {
        let start = nearest_free_cell(env, from).ok_or(GroundingError::NoFreeCell(from))?;
        let end = nearest_free_cell(env, goal).ok_or(GroundingError::NoFreeCell(goal))?;
        let path = shortest_path_on(env.traversable(), start, end)?.ok_or(GroundingError::NoPath)?;
        Ok(path.cells.iter().map(|&c| env.spec.cell_center(c)).collect())
    }
}

/// Stay-away map: negative distance to `center`, rescaled to [0, 255].
pub fn stay_away_map(env: &Environment, center: Vec2) -> CostMap {
    let spec = &env.spec;
    let raw = Grid::from_fn(spec.cols(), spec.rows(), |c| -spec.cell_center(c).distance(center));
    let position = rescale(&raw).expect("finite distances");
    CostMap { position, velocity: Grid::filled(spec.cols(), spec.rows(), VELOCITY_CODES.unconstrained) }
}

/// Constraint-vs-goal classification of a grounded correction.
pub fn classify(gc: &GroundedCorrection) -> CorrectionKind {
    classify_mask(&gc.mask)
}

#[cfg(test)]
mod tests;
