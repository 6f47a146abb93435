//! Environments, robot state, double-integrator dynamics, and occupancy.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use thiserror::Error;

use crate::grid::{Cell, Grid};
use crate::math::{floor, Rect, Vec2};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("non-finite robot state or control input")]
    InvalidState,
    #[error("acceleration magnitude {magnitude} exceeds limit {limit}")]
    AccelLimit { magnitude: f64, limit: f64 },
    #[error("invalid grid spec: {0}")]
    InvalidSpec(&'static str),
    #[error("object {index} footprint leaves the world bounds")]
    ObjectOutOfBounds { index: usize },
    #[error("objects {a} and {b} overlap")]
    Overlap { a: usize, b: usize },
    #[error("could not place object {index} after {attempts} attempts")]
    GenerationFailed { index: usize, attempts: usize },
    #[error("found only {found} of {requested} collision-free start positions")]
    NoFreeSpace { requested: usize, found: usize },
}

/// World extent, cost-grid discretization, and control period.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GridSpec {
    /// World width in pixels.
    pub world_width: u32,
    /// World height in pixels.
    pub world_height: u32,
    /// Cost-grid cells per side.
    pub grid_resolution: u32,
    /// Seconds per control tick.
    pub dt: f64,
    /// Radius of the disc robot in pixels.
    pub robot_radius: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            world_width: 2048,
            world_height: 2048,
            grid_resolution: 256,
            dt: 0.1,
            robot_radius: 10.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.grid_resolution == 0 || self.world_width == 0 || self.world_height == 0 {
            return Err(WorldError::InvalidSpec("dimensions must be positive"));
        }
        if !self.world_width.is_multiple_of(self.grid_resolution) || !self.world_height.is_multiple_of(self.grid_resolution) {
            return Err(WorldError::InvalidSpec("world dimensions must be divisible by grid_resolution"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(WorldError::InvalidSpec("dt must be positive"));
        }
        if !(self.robot_radius >= 0.0 && self.robot_radius.is_finite()) {
            return Err(WorldError::InvalidSpec("robot_radius must be non-negative"));
        }
        Ok(())
    }

    /// Cell side length in pixels.
    #[inline]
    pub fn cell_size(&self) -> f64 {
        self.world_width as f64 / self.grid_resolution as f64
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.grid_resolution as usize
    }

    #[inline]
    pub fn rows(&self) -> usize {
        (self.world_height / (self.world_width / self.grid_resolution)) as usize
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(Vec2::ZERO, Vec2::new(self.world_width as f64, self.world_height as f64))
    }

    /// Cell whose center is nearest to `p`, clamped to the grid.
    #[inline]
    pub fn cell_of(&self, p: Vec2) -> Cell {
        let size = self.cell_size();
        let cx = floor(p.x / size);
        let cy = floor(p.y / size);
        let max_x = (self.cols() - 1) as f64;
        let max_y = (self.rows() - 1) as f64;
        Cell::new(cx.clamp(0.0, max_x) as usize, cy.clamp(0.0, max_y) as usize)
    }

    /// Row-major index of [`GridSpec::cell_of`].
    #[inline]
    pub fn index_of(&self, p: Vec2) -> usize {
        let c = self.cell_of(p);
        c.y * self.cols() + c.x
    }

    #[inline]
    pub fn cell_center(&self, cell: Cell) -> Vec2 {
        let size = self.cell_size();
        Vec2::new((cell.x as f64 + 0.5) * size, (cell.y as f64 + 0.5) * size)
    }

    pub fn grid<T: Clone>(&self, value: T) -> Grid<T> {
        Grid::filled(self.cols(), self.rows(), value)
    }
}

/// Robot kinematic state: position, velocity, and last applied acceleration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RobotState {
    pub q: Vec2,
    pub qd: Vec2,
    pub qdd: Vec2,
}

impl RobotState {
    pub fn at_rest(q: Vec2) -> Self {
        RobotState { q, qd: Vec2::ZERO, qdd: Vec2::ZERO }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.qd.is_finite() && self.qdd.is_finite()
    }
}

/// Advances the double integrator by one tick. Velocity is updated first and
/// the new velocity moves the position.
pub fn step_dynamics(
    state: &RobotState,
    accel: Vec2,
    spec: &GridSpec,
    max_accel: f64,
) -> Result<RobotState, WorldError> {
    if !state.is_finite() || !accel.is_finite() {
        return Err(WorldError::InvalidState);
    }
    let magnitude = accel.norm();
    if magnitude > max_accel * (1.0 + 1e-12) {
        return Err(WorldError::AccelLimit { magnitude, limit: max_accel });
    }
    Ok(integrate(state, accel, spec.dt))
}

/// Unchecked integration step shared with planner rollouts.
#[inline(always)]
pub(crate) fn integrate(state: &RobotState, accel: Vec2, dt: f64) -> RobotState {
    let qd = state.qd + accel * dt;
    RobotState { q: state.q + qd * dt, qd, qdd: accel }
}

/// The four catalog object types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ObjectKind {
    CheezitBox,
    BleachBottle,
    SpamCan,
    MustardBottle,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] =
        [ObjectKind::CheezitBox, ObjectKind::BleachBottle, ObjectKind::SpamCan, ObjectKind::MustardBottle];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::CheezitBox => "cheezit-box",
            ObjectKind::BleachBottle => "bleach-bottle",
            ObjectKind::SpamCan => "spam-can",
            ObjectKind::MustardBottle => "mustard-bottle",
        }
    }

    pub fn from_name(name: &str) -> Option<ObjectKind> {
        ObjectKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Footprint (width, height) in pixels at 0° orientation.
    pub fn size(self) -> (f64, f64) {
        match self {
            ObjectKind::CheezitBox => (420.0, 300.0),
            ObjectKind::BleachBottle => (300.0, 200.0),
            ObjectKind::SpamCan => (260.0, 180.0),
            ObjectKind::MustardBottle => (320.0, 180.0),
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Orientation {
    Deg0,
    Deg90,
    Deg180,
    Deg270,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::Deg0, Orientation::Deg90, Orientation::Deg180, Orientation::Deg270];

    pub fn degrees(self) -> u32 {
        match self {
            Orientation::Deg0 => 0,
            Orientation::Deg90 => 90,
            Orientation::Deg180 => 180,
            Orientation::Deg270 => 270,
        }
    }

    fn swaps_axes(self) -> bool {
        matches!(self, Orientation::Deg90 | Orientation::Deg270)
    }
}

/// A placed object. The footprint is the axis-aligned rectangle after rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectInstance {
    pub kind: ObjectKind,
    pub center: Vec2,
    pub orientation: Orientation,
    pub footprint: Rect,
}

impl ObjectInstance {
    pub fn new(kind: ObjectKind, center: Vec2, orientation: Orientation) -> Self {
        let (w, h) = kind.size();
        let (w, h) = if orientation.swaps_axes() { (h, w) } else { (w, h) };
        ObjectInstance { kind, center, orientation, footprint: Rect::from_center(center, w, h) }
    }

    /// An object with an explicit footprint, for synthetic scenes.
    pub fn with_footprint(kind: ObjectKind, footprint: Rect) -> Self {
        ObjectInstance { kind, center: footprint.center(), orientation: Orientation::Deg0, footprint }
    }
}

/// A generated scene. Occupancy and traversability grids are derived from the
/// objects at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub id: u32,
    pub seed: u64,
    pub spec: GridSpec,
    pub objects: Vec<ObjectInstance>,
    occupancy: Grid<bool>,
    traversable: Grid<bool>,
}

impl Environment {
    pub fn new(id: u32, seed: u64, spec: GridSpec, objects: Vec<ObjectInstance>) -> Result<Self, WorldError> {
        spec.validate()?;
        let bounds = spec.bounds();
        for (i, o) in objects.iter().enumerate() {
            let f = o.footprint;
            if f.min.x < bounds.min.x || f.min.y < bounds.min.y || f.max.x > bounds.max.x || f.max.y > bounds.max.y {
                return Err(WorldError::ObjectOutOfBounds { index: i });
            }
            for (j, other) in objects.iter().enumerate().take(i) {
                if f.overlaps(&other.footprint) {
                    return Err(WorldError::Overlap { a: j, b: i });
                }
            }
        }
        let occupancy = Grid::from_fn(spec.cols(), spec.rows(), |c| {
            let p = spec.cell_center(c);
            objects.iter().any(|o| o.footprint.contains(p))
        });
        let r2 = spec.robot_radius * spec.robot_radius;
        let traversable = Grid::from_fn(spec.cols(), spec.rows(), |c| {
            let p = spec.cell_center(c);
            !objects.iter().any(|o| o.footprint.distance_sq_to(p) <= r2)
        });
        Ok(Environment { id, seed, spec, objects, occupancy, traversable })
    }

    /// An environment without objects.
    pub fn empty(spec: GridSpec) -> Result<Self, WorldError> {
        Environment::new(0, 0, spec, Vec::new())
    }

    /// Cells whose center lies inside some footprint.
    pub fn occupancy(&self) -> &Grid<bool> {
        &self.occupancy
    }

    /// Cells whose center the robot disc can occupy without collision.
    pub fn traversable(&self) -> &Grid<bool> {
        &self.traversable
    }

    /// Distance from `q` to the footprint boundary of object `index`.
    pub fn clearance(&self, q: Vec2, index: usize) -> f64 {
        self.objects[index].footprint.distance_to(q)
    }

    /// Whether the robot disc at `q` touches any footprint.
    #[inline]
    pub fn collides(&self, q: Vec2) -> bool {
        collision(q, self)
    }
}

/// True iff the robot disc centered at `q` intersects an object footprint.
#[inline]
pub fn collision(q: Vec2, env: &Environment) -> bool {
    let r2 = env.spec.robot_radius * env.spec.robot_radius;
    env.objects.iter().any(|o| o.footprint.distance_sq_to(q) <= r2)
}

pub const PLACEMENT_ATTEMPTS: usize = 1000;

/// Samples a scene with `n_objects` objects. Types are drawn without
/// replacement while the catalog allows it.
pub fn generate_environment(id: u32, seed: u64, spec: &GridSpec, n_objects: usize) -> Result<Environment, WorldError> {
    spec.validate()?;
    let mut rng = rng::stream(seed);
    let mut kinds: Vec<ObjectKind> = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let pool: Vec<ObjectKind> = if kinds.len() < ObjectKind::ALL.len() {
            ObjectKind::ALL.into_iter().filter(|k| !kinds.contains(k)).collect()
        } else {
            ObjectKind::ALL.to_vec()
        };
        kinds.push(pool[rng.random_range(0..pool.len())]);
    }
    let mut objects: Vec<ObjectInstance> = Vec::with_capacity(n_objects);
    for (index, kind) in kinds.into_iter().enumerate() {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let orientation = Orientation::ALL[rng.random_range(0..4)];
            let probe = ObjectInstance::new(kind, Vec2::ZERO, orientation);
            let hw = (probe.footprint.width() * 0.5) as i64;
            let hh = (probe.footprint.height() * 0.5) as i64;
            let max_x = spec.world_width as i64 - hw;
            let max_y = spec.world_height as i64 - hh;
            if hw > max_x || hh > max_y {
                continue;
            }
            let cx = rng.random_range(hw..=max_x) as f64;
            let cy = rng.random_range(hh..=max_y) as f64;
            let candidate = ObjectInstance::new(kind, Vec2::new(cx, cy), orientation);
            if objects.iter().all(|o| !o.footprint.overlaps(&candidate.footprint)) {
                placed = Some(candidate);
                break;
            }
        }
        match placed {
            Some(o) => objects.push(o),
            None => return Err(WorldError::GenerationFailed { index, attempts: PLACEMENT_ATTEMPTS }),
        }
    }
    Environment::new(id, seed, *spec, objects)
}

/// Samples `n` distinct collision-free positions with the robot disc inside
/// the world bounds.
pub fn sample_starts(env: &Environment, n: usize, seed: u64) -> Result<Vec<Vec2>, WorldError> {
    let mut rng = rng::stream(seed);
    let r = env.spec.robot_radius;
    let (w, h) = (env.spec.world_width as f64, env.spec.world_height as f64);
    let mut out: Vec<Vec2> = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    if w <= 2.0 * r || h <= 2.0 * r {
        return Err(WorldError::NoFreeSpace { requested: n, found: 0 });
    }
    let budget = PLACEMENT_ATTEMPTS * n;
    for _ in 0..budget {
        if out.len() == n {
            break;
        }
        let p = Vec2::new(rng.random_range(r..w - r), rng.random_range(r..h - r));
        if !collision(p, env) && !out.contains(&p) {
            out.push(p);
        }
    }
    if out.len() < n {
        return Err(WorldError::NoFreeSpace { requested: n, found: out.len() });
    }
    Ok(out)
}

/// One-hot semantic raster: a channel per catalog type followed by free space.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub channels: Vec<Grid<bool>>,
}

impl Observation {
    pub const FREE_CHANNEL: usize = ObjectKind::ALL.len();

    pub fn channel_of(&self, cell: Cell) -> Option<usize> {
        self.channels.iter().position(|ch| *ch.get(cell))
    }
}

pub fn rasterize_observation(env: &Environment) -> Observation {
    let spec = &env.spec;
    let mut channels: Vec<Grid<bool>> = (0..=ObjectKind::ALL.len()).map(|_| spec.grid(false)).collect();
    for y in 0..spec.rows() {
        for x in 0..spec.cols() {
            let cell = Cell::new(x, y);
            let p = spec.cell_center(cell);
            let channel = env
                .objects
                .iter()
                .find(|o| o.footprint.contains(p))
                .map_or(Observation::FREE_CHANNEL, |o| o.kind.index());
            channels[channel].set(cell, true);
        }
    }
    Observation { channels }
}

/// Start/goal pair with a tick budget.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Task {
    pub start: Vec2,
    pub goal: Vec2,
    pub max_steps: u32,
}

impl Task {
    pub const DEFAULT_MAX_STEPS: u32 = 500;

    pub fn new(start: Vec2, goal: Vec2) -> Self {
        Task { start, goal, max_steps: Self::DEFAULT_MAX_STEPS }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_dt(dt: f64) -> GridSpec {
        GridSpec { dt, ..GridSpec::default() }
    }

    #[test]
    fn dynamics_identity_at_rest() {
        let s = RobotState::at_rest(Vec2::ZERO);
        let n = step_dynamics(&s, Vec2::ZERO, &GridSpec::default(), 200.0).unwrap();
        assert_eq!(n.q, Vec2::ZERO);
        assert_eq!(n.qd, Vec2::ZERO);
    }

    #[test]
    fn dynamics_unit_accel_unit_dt() {
        let spec = spec_dt(1.0);
        let s = RobotState::at_rest(Vec2::ZERO);
        let s1 = step_dynamics(&s, Vec2::new(1.0, 0.0), &spec, 200.0).unwrap();
        assert_eq!((s1.q, s1.qd), (Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0)));
        let s2 = step_dynamics(&s1, Vec2::new(1.0, 0.0), &spec, 200.0).unwrap();
        assert_eq!((s2.q, s2.qd), (Vec2::new(3.0, 0.0), Vec2::new(2.0, 0.0)));
        assert_eq!(s2.qdd, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn dynamics_rejects_bad_input() {
        let s = RobotState::at_rest(Vec2::ZERO);
        let spec = GridSpec::default();
        assert_eq!(step_dynamics(&s, Vec2::new(f64::NAN, 0.0), &spec, 200.0), Err(WorldError::InvalidState));
        assert!(matches!(
            step_dynamics(&s, Vec2::new(300.0, 0.0), &spec, 200.0),
            Err(WorldError::AccelLimit { .. })
        ));
        let bad = RobotState { q: Vec2::new(f64::INFINITY, 0.0), ..s };
        assert_eq!(step_dynamics(&bad, Vec2::ZERO, &spec, 200.0), Err(WorldError::InvalidState));
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::default().validate().is_ok());
        assert!(GridSpec { grid_resolution: 300, ..GridSpec::default() }.validate().is_err());
        assert!(spec_dt(0.0).validate().is_err());
        assert_eq!(GridSpec::default().cell_size(), 8.0);
    }

    #[test]
    fn cell_lookup_clamps() {
        let spec = GridSpec::default();
        assert_eq!(spec.cell_of(Vec2::new(-5.0, 3000.0)), Cell::new(0, 255));
        assert_eq!(spec.cell_of(Vec2::new(8.0, 7.99)), Cell::new(1, 0));
        assert_eq!(spec.cell_center(Cell::new(0, 0)), Vec2::new(4.0, 4.0));
    }

    #[test]
    fn generated_environment_structure() {
        let env = generate_environment(0, 0, &GridSpec::default(), 2).unwrap();
        assert_eq!(env.objects.len(), 2);
        assert_ne!(env.objects[0].kind, env.objects[1].kind);
        assert!(env.occupancy().as_slice().iter().any(|&b| b));
        let again = generate_environment(0, 0, &GridSpec::default(), 2).unwrap();
        assert_eq!(env, again);
    }

    #[test]
    fn rotated_footprint_swaps_sides() {
        let a = ObjectInstance::new(ObjectKind::CheezitBox, Vec2::new(500.0, 500.0), Orientation::Deg90);
        assert_eq!((a.footprint.width(), a.footprint.height()), (300.0, 420.0));
        let b = ObjectInstance::new(ObjectKind::CheezitBox, Vec2::new(500.0, 500.0), Orientation::Deg180);
        assert_eq!((b.footprint.width(), b.footprint.height()), (420.0, 300.0));
    }

    #[test]
    fn collision_cases() {
        let spec = GridSpec::default();
        let rect = Rect::new(Vec2::new(1000.0, 1000.0), Vec2::new(1200.0, 1100.0));
        let env = Environment::new(1, 0, spec, vec![ObjectInstance::with_footprint(ObjectKind::SpamCan, rect)]).unwrap();
        assert!(collision(Vec2::new(1100.0, 1050.0), &env));
        assert!(!collision(Vec2::new(20.0, 20.0), &env));
        // r_robot + 1 outside the right edge
        assert!(!collision(Vec2::new(1200.0 + spec.robot_radius + 1.0, 1050.0), &env));
        assert!(collision(Vec2::new(1200.0 + spec.robot_radius - 1.0, 1050.0), &env));
    }

    #[test]
    fn environment_rejects_overlap_and_out_of_bounds() {
        let spec = GridSpec::default();
        let a = ObjectInstance::with_footprint(ObjectKind::SpamCan, Rect::new(Vec2::new(0.0, 0.0), Vec2::new(100.0, 100.0)));
        let b = ObjectInstance::with_footprint(ObjectKind::CheezitBox, Rect::new(Vec2::new(50.0, 50.0), Vec2::new(150.0, 150.0)));
        assert_eq!(Environment::new(0, 0, spec, vec![a, b]), Err(WorldError::Overlap { a: 0, b: 1 }));
        let c = ObjectInstance::with_footprint(ObjectKind::SpamCan, Rect::new(Vec2::new(2000.0, 0.0), Vec2::new(2100.0, 10.0)));
        assert_eq!(Environment::new(0, 0, spec, vec![c]), Err(WorldError::ObjectOutOfBounds { index: 0 }));
    }

    #[test]
    fn start_sampling() {
        let env = generate_environment(3, 3, &GridSpec::default(), 2).unwrap();
        let starts = sample_starts(&env, 10, 11).unwrap();
        assert_eq!(starts.len(), 10);
        assert!(starts.iter().all(|&p| !collision(p, &env)));
        assert!(sample_starts(&env, 0, 11).unwrap().is_empty());

        let spec = GridSpec::default();
        let full = ObjectInstance::with_footprint(ObjectKind::CheezitBox, spec.bounds());
        let blocked = Environment::new(9, 0, spec, vec![full]).unwrap();
        assert!(matches!(sample_starts(&blocked, 1, 0), Err(WorldError::NoFreeSpace { .. })));
    }

    #[test]
    fn observation_one_hot() {
        let env = generate_environment(5, 5, &GridSpec::default(), 2).unwrap();
        let obs = rasterize_observation(&env);
        assert_eq!(obs.channels.len(), 5);
        for (cell, &occ) in env.occupancy().iter() {
            let hot = obs.channels.iter().filter(|ch| *ch.get(cell)).count();
            assert_eq!(hot, 1);
            assert_eq!(occ, obs.channel_of(cell) != Some(Observation::FREE_CHANNEL));
        }
        let c = env.spec.cell_of(env.objects[0].center);
        assert_eq!(obs.channel_of(c), Some(env.objects[0].kind.index()));
    }
}
