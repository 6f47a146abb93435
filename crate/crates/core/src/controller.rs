//! The correction loop: a session owns the robot, the cost stack and the
//! planner, accepts corrections at any time and applies them at the next
//! tick boundary.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::costmap::{CorrectionKind, CostStack, VelocityPenaltyConfig};
use crate::grounding::{
    goal_point, render, Direction, GoalRelation, Grounder, GroundingConfig, GroundingError,
    Intent, IntentCategory, Lexicon, SpatialRelation,
};
use crate::math::Vec2;
use crate::planner::{BaseCostConfig, Mppi, PlannerConfig};
use crate::rng::{self, Stream};
use crate::world::{step_dynamics, Environment, RobotState, Task};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ControllerConfig {
    pub planner: PlannerConfig,
    pub base: BaseCostConfig,
    pub velocity: VelocityPenaltyConfig,
    pub grounding: GroundingConfig,
    /// Multiplier on constraint position costs.
    pub constraint_weight: f64,
    /// Success radius around the target, px.
    pub goal_tolerance: f64,
    /// Distance along the guiding path at which a language goal hands
    /// control back to the task cost, px.
    pub epsilon_px: f64,
    pub keep_task_cost_during_language_goal: bool,
    pub stuck_window: u32,
    /// Displacement over the stuck window below which the robot is stuck, px.
    pub stuck_displacement: f64,
    /// Largest distance between a scripted waypoint and the oracle path, px.
    pub waypoint_tolerance: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            planner: PlannerConfig::default(),
            base: BaseCostConfig::default(),
            velocity: VelocityPenaltyConfig::default(),
            grounding: GroundingConfig::default(),
            constraint_weight: 4.0,
            goal_tolerance: 20.0,
            epsilon_px: 20.0,
            keep_task_cost_during_language_goal: false,
            stuck_window: 50,
            stuck_displacement: 15.0,
            waypoint_tolerance: 40.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Status {
    Running,
    Success,
    /// Ran out of ticks.
    Failure,
    Error,
}

/// Which kind of correction an intent grounds into.
pub fn predicted_kind(category: IntentCategory) -> CorrectionKind {
    match category {
        IntentCategory::Velocity(_) | IntentCategory::SpatialObject(SpatialRelation::StayAway) => {
            CorrectionKind::Constraint
        }
        _ => CorrectionKind::Goal,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrectionAck {
    /// Tick at which the correction was accepted; it is applied at the
    /// start of this tick's step.
    pub tick: u32,
    pub kind: CorrectionKind,
}

/// Something that happened at a tick boundary.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TickEvent {
    Applied { text: String, kind: CorrectionKind },
    GroundingFailed { text: String, error: String },
    /// The language goal was reached and the task cost took over again.
    Reactivated,
}

#[derive(Clone, Debug)]
struct Pending {
    text: String,
    intent: Intent,
}

#[derive(Clone, Debug)]
pub struct Session {
    env: Environment,
    task: Task,
    cfg: ControllerConfig,
    grounder: Grounder,
    planner: Mppi,
    rng: Stream,
    state: RobotState,
    stack: CostStack,
    tick: u32,
    trajectory: Vec<RobotState>,
    status: Status,
    pending: VecDeque<Pending>,
    language_target: Option<Vec2>,
    reactivations: u32,
    stack_version: u64,
    events: Vec<TickEvent>,
}

impl Session {
    /// Session driven by the task cost toward `task.goal`.
    pub fn new(env: Environment, task: Task, lexicon: Lexicon, cfg: ControllerConfig, seed: u64) -> Self {
        Self::build(env, task, lexicon, cfg, seed, true)
    }

    /// Session without any task cost; only language goals move the robot and
    /// success is measured against the most recent language goal point.
    pub fn language_only(env: Environment, task: Task, lexicon: Lexicon, cfg: ControllerConfig, seed: u64) -> Self {
        Self::build(env, task, lexicon, cfg, seed, false)
    }

    fn build(env: Environment, task: Task, lexicon: Lexicon, cfg: ControllerConfig, seed: u64, task_cost: bool) -> Self {
        let state = RobotState::at_rest(task.start);
        let mut stack = CostStack::new(task_cost.then_some(task.goal), cfg.base, cfg.velocity);
        stack.constraint_weight = cfg.constraint_weight;
        let mut session = Session {
            grounder: Grounder::new(lexicon, cfg.grounding),
            planner: Mppi::new(cfg.planner),
            rng: rng::child_stream(seed, &[0x5e55]),
            state,
            stack,
            tick: 0,
            trajectory: alloc::vec![state],
            status: Status::Running,
            pending: VecDeque::new(),
            language_target: None,
            reactivations: 0,
            stack_version: 0,
            events: Vec::new(),
            env,
            task,
            cfg,
        };
        session.update_status();
        session
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn grounder(&self) -> &Grounder {
        &self.grounder
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn stack(&self) -> &CostStack {
        &self.stack
    }

    pub fn tick_count(&self) -> u32 {
        self.tick
    }

    pub fn trajectory(&self) -> &[RobotState] {
        &self.trajectory
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn reactivations(&self) -> u32 {
        self.reactivations
    }

    /// Bumped whenever the cost stack changes.
    pub fn stack_version(&self) -> u64 {
        self.stack_version
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Events of the most recent tick.
    pub fn events(&self) -> &[TickEvent] {
        &self.events
    }

    /// Point the episode is judged against: the task goal, or the language
    /// goal point when the session has no task cost.
    pub fn target(&self) -> Option<Vec2> {
        match self.stack.task_goal {
            Some(g) => Some(g),
            None => self.language_target,
        }
    }

    pub fn at_target(&self) -> bool {
        self.target().is_some_and(|g| self.state.q.distance(g) <= self.cfg.goal_tolerance)
    }

    /// Parses and resolves `text` against the scene and queues it for the
    /// next tick boundary. Nothing changes on error.
    pub fn submit_correction(&mut self, text: &str) -> Result<CorrectionAck, GroundingError> {
        let intent = self.grounder.parse(text)?;
        if intent.category.needs_object() {
            self.grounder.resolve_object(&intent, &self.env)?;
        }
        let kind = predicted_kind(intent.category);
        self.pending.push_back(Pending { text: text.into(), intent });
        Ok(CorrectionAck { tick: self.tick, kind })
    }

    /// Advances one control tick and returns the resulting status.
    pub fn tick(&mut self) -> Status {
        self.events.clear();
        if self.status != Status::Running {
            return self.status;
        }
        if let Some(p) = self.pending.pop_front() {
            self.apply(p);
        }
        self.check_reactivation();

        let accel = self.planner.plan_step(&self.state, &self.stack, &self.env, &mut self.rng);
        match step_dynamics(&self.state, accel, &self.env.spec, self.cfg.planner.max_accel) {
            Ok(next) => self.state = next,
            Err(_) => {
                self.status = Status::Error;
                return self.status;
            }
        }
        self.tick += 1;
        self.trajectory.push(self.state);
        self.update_status();
        self.status
    }

    fn apply(&mut self, p: Pending) {
        match self.grounder.ground(&p.intent, &self.env, &self.state) {
            Ok(mut gc) => {
                gc.source_text = p.text.clone();
                let kind = gc.kind;
                match kind {
                    CorrectionKind::Constraint => {
                        self.stack.push_constraint(gc).expect("constraint kind");
                    }
                    CorrectionKind::Goal => {
                        self.language_target = gc.goal_point;
                        self.stack.set_language_goal(gc).expect("goal kind");
                        if self.stack.task_goal.is_some() {
                            self.stack.task_cost_active = self.cfg.keep_task_cost_during_language_goal;
                        }
                    }
                }
                self.stack_version += 1;
                self.events.push(TickEvent::Applied { text: p.text, kind });
            }
            Err(e) => self.events.push(TickEvent::GroundingFailed { text: p.text, error: format!("{e}") }),
        }
    }

    /// Hands control back to the task cost once the language goal's cost at
    /// the robot's cell drops below ε. Without a task cost the language goal
    /// stays in force.
    fn check_reactivation(&mut self) {
        if self.stack.task_goal.is_none() {
            return;
        }
        let Some(goal) = self.stack.language_goal() else { return };
        let length = goal.path_length.unwrap_or(0.0).max(self.env.spec.cell_size());
        let epsilon = self.cfg.grounding.on_path_ceiling * self.cfg.epsilon_px / length;
        let here = goal.masked_position_at(self.env.spec.index_of(self.state.q));
        if here < epsilon {
            self.stack.clear_language_goal();
            self.stack.task_cost_active = true;
            self.reactivations += 1;
            self.stack_version += 1;
            self.events.push(TickEvent::Reactivated);
        }
    }

    fn update_status(&mut self) {
        if self.at_target() {
            self.status = Status::Success;
        } else if self.tick >= self.task.max_steps {
            self.status = Status::Failure;
        }
    }
}

/// Source of corrections during an episode; polled before every tick.
pub trait CorrectionPolicy {
    fn poll(&mut self, session: &Session) -> Option<String>;
}

/// Never corrects.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoCorrections;

impl CorrectionPolicy for NoCorrections {
    fn poll(&mut self, _: &Session) -> Option<String> {
        None
    }
}

/// Issues fixed texts at fixed ticks.
#[derive(Clone, Debug, Default)]
pub struct TimedScript {
    entries: VecDeque<(u32, String)>,
}

impl TimedScript {
    pub fn new(mut entries: Vec<(u32, String)>) -> Self {
        entries.sort_by_key(|e| e.0);
        TimedScript { entries: entries.into() }
    }
}

impl CorrectionPolicy for TimedScript {
    fn poll(&mut self, session: &Session) -> Option<String> {
        match self.entries.front() {
            Some((t, _)) if *t <= session.tick_count() => self.entries.pop_front().map(|e| e.1),
            _ => None,
        }
    }
}

/// Issues the first text at tick 0 and each following one right after the
/// previous language goal has handed back to the task cost.
#[derive(Clone, Debug, Default)]
pub struct ReactivationScript {
    texts: Vec<String>,
    issued: usize,
}

impl ReactivationScript {
    pub fn new(texts: Vec<String>) -> Self {
        ReactivationScript { texts, issued: 0 }
    }
}

impl CorrectionPolicy for ReactivationScript {
    fn poll(&mut self, session: &Session) -> Option<String> {
        let ready = self.issued == 0 || session.reactivations() as usize >= self.issued;
        if self.issued < self.texts.len() && ready && session.pending_len() == 0 {
            self.issued += 1;
            return Some(self.texts[self.issued - 1].clone());
        }
        None
    }
}

/// Simulated user who watches for the robot getting stuck and names a
/// waypoint on the shortest path to the true goal.
#[derive(Clone, Debug)]
pub struct ScriptedUser {
    pub budget: u32,
    issued: u32,
    last_tick: Option<u32>,
}

impl ScriptedUser {
    pub fn new(budget: u32) -> Self {
        ScriptedUser { budget, issued: 0, last_tick: None }
    }

    pub fn issued(&self) -> u32 {
        self.issued
    }

    /// Displacement over the stuck window fell below the threshold while
    /// away from the goal.
    pub fn is_stuck(session: &Session) -> bool {
        let cfg = session.config();
        let w = cfg.stuck_window as usize;
        let traj = session.trajectory();
        if traj.len() <= w || session.state().q.distance(session.task().goal) <= cfg.goal_tolerance {
            return false;
        }
        let now = traj[traj.len() - 1].q;
        now.distance(traj[traj.len() - 1 - w].q) < cfg.stuck_displacement
    }

    /// The correction the user would give right now, if any.
    pub fn suggest(session: &Session) -> Option<String> {
        let env = session.env();
        let grounder = session.grounder();
        let cfg = session.config();
        let state = *session.state();
        let path = grounder.oracle_path(env, state.q, session.task().goal).ok()?;
        if path.len() < 2 {
            return None;
        }
        let mut candidates: Vec<(usize, Intent)> = Vec::new();
        for object in &env.objects {
            for relation in GoalRelation::ALL {
                let Ok(gp) = goal_point(relation, object, state.q, env, &cfg.grounding) else { continue };
                let (index, d) = nearest_vertex(&path, gp);
                if index > 0 && d <= cfg.waypoint_tolerance {
                    let name = grounder.lexicon.display_name(object.kind);
                    candidates.push((index, Intent::new(relation.category(), Some(name)).expect("object relation")));
                }
            }
        }
        // Farthest along the path first; the sort is stable so enumeration
        // order breaks ties.
        candidates.sort_by_key(|c| core::cmp::Reverse(c.0));
        for (_, intent) in &candidates {
            if grounder.ground(intent, env, &state).is_ok() {
                return Some(render(intent, 0));
            }
        }
        let heading = path[(path.len() - 1).min(5)] - path[0];
        let direction = if heading.x.abs() >= heading.y.abs() {
            if heading.x >= 0.0 {
                Direction::Right
            } else {
                Direction::Left
            }
        } else if heading.y >= 0.0 {
            Direction::Down
        } else {
            Direction::Up
        };
        let intent = Intent::new(IntentCategory::Directional(direction), None).expect("directional");
        grounder.ground(&intent, env, &state).ok().map(|_| render(&intent, 0))
    }
}

fn nearest_vertex(path: &[Vec2], p: Vec2) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in path.iter().enumerate() {
        let d = v.distance(p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

impl CorrectionPolicy for ScriptedUser {
    fn poll(&mut self, session: &Session) -> Option<String> {
        if self.issued >= self.budget {
            return None;
        }
        let t = session.tick_count();
        if self.last_tick.is_some_and(|l| t - l < session.config().stuck_window) || !Self::is_stuck(session) {
            return None;
        }
        let text = Self::suggest(session)?;
        self.issued += 1;
        self.last_tick = Some(t);
        Some(text)
    }
}

/// A correction as seen by the episode log.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrectionRecord {
    pub tick: u32,
    pub text: String,
    pub kind: Option<CorrectionKind>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeOutcome {
    pub status: Status,
    pub ticks: u32,
    pub corrections: Vec<CorrectionRecord>,
    pub trajectory: Vec<RobotState>,
    /// Distance from the final position to the target, if there is one.
    pub final_distance: Option<f64>,
    pub reactivations: u32,
}

impl EpisodeOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == Status::Success
    }

    /// Mean speed over the executed ticks, px/s.
    pub fn mean_speed(&self) -> f64 {
        let n = self.trajectory.len().saturating_sub(1);
        if n == 0 {
            return 0.0;
        }
        self.trajectory[1..].iter().map(|s| s.qd.norm()).sum::<f64>() / n as f64
    }

    /// Smallest distance between a visited position and an object footprint.
    pub fn min_clearance(&self, env: &Environment, object: usize) -> f64 {
        self.trajectory.iter().map(|s| env.clearance(s.q, object)).fold(f64::INFINITY, f64::min)
    }
}

/// Runs a session to a terminal status, polling `policy` before every tick.
pub fn run_session(mut session: Session, policy: &mut dyn CorrectionPolicy) -> EpisodeOutcome {
    let mut corrections: Vec<CorrectionRecord> = Vec::new();
    while session.status() == Status::Running {
        if let Some(text) = policy.poll(&session) {
            let tick = session.tick_count();
            match session.submit_correction(&text) {
                Ok(_) => corrections.push(CorrectionRecord { tick, text, kind: None, error: None }),
                Err(e) => corrections.push(CorrectionRecord { tick, text, kind: None, error: Some(format!("{e}")) }),
            }
        }
        session.tick();
        for event in session.events() {
            match event {
                TickEvent::Applied { text, kind } => {
                    if let Some(r) = corrections.iter_mut().rev().find(|r| &r.text == text && r.kind.is_none() && r.error.is_none()) {
                        r.kind = Some(*kind);
                    }
                }
                TickEvent::GroundingFailed { text, error } => {
                    if let Some(r) = corrections.iter_mut().rev().find(|r| &r.text == text && r.kind.is_none() && r.error.is_none()) {
                        r.error = Some(error.clone());
                    }
                }
                TickEvent::Reactivated => {}
            }
        }
    }
    let final_distance = session.target().map(|g| session.state().q.distance(g));
    EpisodeOutcome {
        status: session.status(),
        ticks: session.tick_count(),
        corrections,
        reactivations: session.reactivations(),
        trajectory: session.trajectory,
        final_distance,
    }
}

/// Runs one episode toward `task.goal`.
pub fn run_episode(
    env: &Environment,
    task: &Task,
    policy: &mut dyn CorrectionPolicy,
    lexicon: &Lexicon,
    cfg: &ControllerConfig,
    seed: u64,
) -> EpisodeOutcome {
    run_session(Session::new(env.clone(), *task, lexicon.clone(), *cfg, seed), policy)
}
