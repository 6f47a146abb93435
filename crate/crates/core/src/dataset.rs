//! Corpus generation: environments, start/goal tasks, baseline runs, demo
//! labels, specified-map records and the environment-level splits.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::controller::{run_episode, ControllerConfig, EpisodeOutcome, NoCorrections, Status};
use crate::costmap::{CostMap, Mask};
use crate::grid::Grid;
use crate::grounding::{
    label_polyline, relation_point, render, stay_away_map, GoalRelation, Grounder, GroundingConfig, GroundingError,
    Intent, IntentCategory, Lexicon, Speed, SpatialRelation,
};
use crate::math::Vec2;
use crate::rng::{self, derive_seed};
use crate::world::{collision, generate_environment, sample_starts, Environment, GridSpec, RobotState, Task, WorldError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("trajectory ends {distance} px from its goal")]
    NotAtGoal { distance: f64 },
    #[error("corpus needs at least one environment")]
    NoEnvironments,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CorpusConfig {
    pub n_envs: u32,
    pub objects_per_env: usize,
    pub starts_per_env: usize,
    pub seed: u64,
    pub spec: GridSpec,
    pub max_steps: u32,
    /// Fractions of environments in the train and validation splits; the
    /// rest is the test split.
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_envs: 100,
            objects_per_env: 2,
            starts_per_env: 10,
            seed: 0,
            spec: GridSpec::default(),
            max_steps: Task::DEFAULT_MAX_STEPS,
            train_fraction: 0.8,
            val_fraction: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RecordOrigin {
    Demo,
    SpecifiedMap,
}

/// One supervision example: what the grounder should output for an
/// instruction given the scene and the robot state.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub cost: CostMap,
    pub mask: Mask,
    pub instruction: String,
    /// Environment id of the observation.
    pub observation_ref: u32,
    pub state: RobotState,
    pub origin: RecordOrigin,
}

/// Baseline-run summary kept for each task; trajectories are not stored.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineSummary {
    pub success: bool,
    pub ticks: u32,
    pub final_distance: f64,
    /// Minimum clearance to each object, in object order.
    pub min_clearance: Vec<f64>,
    pub mean_speed: f64,
}

impl BaselineSummary {
    pub fn from_outcome(outcome: &EpisodeOutcome, env: &Environment) -> Self {
        BaselineSummary {
            success: outcome.status == Status::Success,
            ticks: outcome.ticks,
            final_distance: outcome.final_distance.unwrap_or(f64::INFINITY),
            min_clearance: (0..env.objects.len()).map(|i| outcome.min_clearance(env, i)).collect(),
            mean_speed: outcome.mean_speed(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaskEntry {
    pub env_id: u32,
    pub start_index: u32,
    pub task: Task,
    /// Object whose edge the goal is offset from.
    pub object: usize,
    pub relation: GoalRelation,
    /// Templated instruction naming the goal.
    pub instruction: String,
    pub baseline: BaselineSummary,
}

impl TaskEntry {
    /// Episode seed shared by every run on this task.
    pub fn episode_seed(&self, corpus_seed: u64) -> u64 {
        derive_seed(corpus_seed, &[self.env_id as u64, self.start_index as u64, 0xe9])
    }

    pub fn intent(&self, env: &Environment, lexicon: &Lexicon) -> Intent {
        let name = lexicon.display_name(env.objects[self.object].kind);
        Intent::new(self.relation.category(), Some(name)).expect("edge relation takes an object")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Split {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
    /// (env id, start index) of every task the baseline failed.
    pub hard: Vec<(u32, u32)>,
}

/// Everything generated for one environment.
#[derive(Clone, Debug)]
pub struct EnvBundle {
    pub env: Environment,
    pub tasks: Vec<TaskEntry>,
    pub records: Vec<DatasetRecord>,
}

/// The corpus index: scenes, tasks and splits. Records live in per-env files.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub controller: ControllerConfig,
    pub lexicon_digest: u64,
    pub envs: Vec<Environment>,
    pub tasks: Vec<TaskEntry>,
    pub split: Split,
    pub record_counts: Vec<(u32, usize)>,
}

impl Corpus {
    pub fn env(&self, id: u32) -> Option<&Environment> {
        self.envs.iter().find(|e| e.id == id)
    }

    pub fn hard_tasks(&self) -> impl Iterator<Item = &TaskEntry> {
        self.tasks.iter().filter(|t| !t.baseline.success)
    }

    pub fn solvable_tasks(&self) -> impl Iterator<Item = &TaskEntry> {
        self.tasks.iter().filter(|t| t.baseline.success)
    }

    pub fn baseline_failure_rate(&self) -> f64 {
        if self.tasks.is_empty() {
            return 0.0;
        }
        self.hard_tasks().count() as f64 / self.tasks.len() as f64
    }
}

/// Every edge-offset goal of every object that lies inside the world and
/// is collision-free.
pub fn edge_goals(env: &Environment, cfg: &GroundingConfig) -> Vec<(usize, GoalRelation, Vec2)> {
    let bounds = env.spec.bounds().inflate(-env.spec.robot_radius);
    let mut out = Vec::new();
    for (i, object) in env.objects.iter().enumerate() {
        for relation in GoalRelation::EDGES {
            let p = relation_point(relation, object, object.center, cfg.goal_offset);
            if bounds.contains(p) && !collision(p, env) {
                out.push((i, relation, p));
            }
        }
    }
    out
}

/// (start index, task, goal object, relation, instruction).
pub type GeneratedTask = (u32, Task, usize, GoalRelation, String);

/// Pairs each sampled start with one reachable edge goal more than the
/// success radius away. Starts without such a goal are skipped.
pub fn generate_tasks(
    env: &Environment,
    grounder: &Grounder,
    cfg: &CorpusConfig,
    controller: &ControllerConfig,
) -> Result<Vec<GeneratedTask>, DatasetError> {
    let starts = sample_starts(env, cfg.starts_per_env, derive_seed(cfg.seed, &[env.id as u64, 1]))?;
    let goals = edge_goals(env, &grounder.cfg);
    let mut out = Vec::new();
    for (i, &start) in starts.iter().enumerate() {
        let valid: Vec<&(usize, GoalRelation, Vec2)> = goals
            .iter()
            .filter(|(_, _, g)| g.distance(start) > controller.goal_tolerance)
            .filter(|(_, _, g)| grounder.oracle_path(env, start, *g).is_ok())
            .collect();
        if valid.is_empty() {
            continue;
        }
        let mut pick = rng::child_stream(cfg.seed, &[env.id as u64, 2, i as u64]);
        let &(object, relation, goal) = valid[pick.random_range(0..valid.len())];
        let name = grounder.lexicon.display_name(env.objects[object].kind);
        let intent = Intent::new(relation.category(), Some(name)).expect("edge relation takes an object");
        let variant = pick.random_range(0..crate::grounding::templates(intent.category).len());
        let mut task = Task::new(start, goal);
        task.max_steps = cfg.max_steps;
        out.push((i as u32, task, object, relation, render(&intent, variant)));
    }
    Ok(out)
}

/// Demo label: remaining arc length along the executed trajectory, scaled
/// onto the on-path range, inside a tube around it.
pub fn label_demo(
    trajectory: &[Vec2],
    goal: Vec2,
    spec: &GridSpec,
    cfg: &GroundingConfig,
    tolerance: f64,
) -> Result<(CostMap, Mask), DatasetError> {
    let last = *trajectory.last().ok_or(DatasetError::EmptyTrajectory)?;
    let distance = last.distance(goal);
    if distance > tolerance {
        return Err(DatasetError::NotAtGoal { distance });
    }
    let label = label_polyline(trajectory, spec, cfg);
    Ok((label.cost, label.mask))
}

/// Stay-away records for every object plus the two velocity records.
pub fn specified_map_records(env: &Environment, grounder: &Grounder, state: RobotState) -> Vec<DatasetRecord> {
    let (w, h) = (env.spec.cols(), env.spec.rows());
    let mut out = Vec::new();
    for object in &env.objects {
        let name = grounder.lexicon.display_name(object.kind);
        let intent = Intent::new(IntentCategory::SpatialObject(SpatialRelation::StayAway), Some(name)).expect("stay-away");
        out.push(DatasetRecord {
            cost: stay_away_map(env, object.center),
            mask: Mask::ones(w, h),
            instruction: render(&intent, 0),
            observation_ref: env.id,
            state,
            origin: RecordOrigin::SpecifiedMap,
        });
    }
    for speed in [Speed::Faster, Speed::Slower] {
        let intent = Intent::new(IntentCategory::Velocity(speed), None).expect("velocity");
        let gc = grounder.ground(&intent, env, &state).expect("velocity grounding cannot fail");
        out.push(DatasetRecord {
            cost: gc.cost,
            mask: gc.mask,
            instruction: render(&intent, 0),
            observation_ref: env.id,
            state,
            origin: RecordOrigin::SpecifiedMap,
        });
    }
    out
}

/// The scene with the given id in a corpus generated from `cfg`.
pub fn corpus_environment(id: u32, cfg: &CorpusConfig) -> Result<Environment, WorldError> {
    generate_environment(id, derive_seed(cfg.seed, &[id as u64]), &cfg.spec, cfg.objects_per_env)
}

/// Runs the whole per-environment pipeline: scene, tasks, baseline runs,
/// demo records and specified-map records.
pub fn build_env(
    id: u32,
    cfg: &CorpusConfig,
    lexicon: &Lexicon,
    controller: &ControllerConfig,
) -> Result<EnvBundle, DatasetError> {
    let env = corpus_environment(id, cfg)?;
    let grounder = Grounder::new(lexicon.clone(), controller.grounding);
    let mut tasks = Vec::new();
    let mut records = Vec::new();
    for (start_index, task, object, relation, instruction) in generate_tasks(&env, &grounder, cfg, controller)? {
        let mut entry = TaskEntry {
            env_id: id,
            start_index,
            task,
            object,
            relation,
            instruction,
            baseline: BaselineSummary { success: false, ticks: 0, final_distance: 0.0, min_clearance: Vec::new(), mean_speed: 0.0 },
        };
        let outcome = run_episode(&env, &task, &mut NoCorrections, lexicon, controller, entry.episode_seed(cfg.seed));
        entry.baseline = BaselineSummary::from_outcome(&outcome, &env);
        if entry.baseline.success {
            let points: Vec<Vec2> = outcome.trajectory.iter().map(|s| s.q).collect();
            let (cost, mask) = label_demo(&points, task.goal, &cfg.spec, &controller.grounding, controller.goal_tolerance)?;
            records.push(DatasetRecord {
                cost,
                mask,
                instruction: entry.instruction.clone(),
                observation_ref: id,
                state: RobotState::at_rest(task.start),
                origin: RecordOrigin::Demo,
            });
        }
        tasks.push(entry);
    }
    let first = tasks.first().map(|t| t.task.start).unwrap_or(Vec2::new(0.0, 0.0));
    records.extend(specified_map_records(&env, &grounder, RobotState::at_rest(first)));
    Ok(EnvBundle { env, tasks, records })
}

/// Splits environment ids into train/val/test by a seeded shuffle.
pub fn split_envs(ids: &[u32], cfg: &CorpusConfig) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
    let mut ids = ids.to_vec();
    let mut r = rng::child_stream(cfg.seed, &[0x5b1]);
    for i in (1..ids.len()).rev() {
        let j = r.random_range(0..=i);
        ids.swap(i, j);
    }
    let n = ids.len();
    let n_train = ((n as f64 * cfg.train_fraction).round() as usize).min(n);
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).min(n - n_train);
    let mut train = ids[..n_train].to_vec();
    let mut val = ids[n_train..n_train + n_val].to_vec();
    let mut test = ids[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    (train, val, test)
}

/// Collects per-environment bundles (in any order) into a corpus index.
/// Records are handed to `sink` one environment at a time and not kept.
pub fn assemble(
    cfg: &CorpusConfig,
    controller: &ControllerConfig,
    lexicon: &Lexicon,
    bundles: impl IntoIterator<Item = EnvBundle>,
    mut sink: impl FnMut(&Environment, &[DatasetRecord]),
) -> Result<Corpus, DatasetError> {
    let mut envs = Vec::new();
    let mut tasks = Vec::new();
    let mut record_counts = Vec::new();
    for bundle in bundles {
        sink(&bundle.env, &bundle.records);
        record_counts.push((bundle.env.id, bundle.records.len()));
        envs.push(bundle.env);
        tasks.extend(bundle.tasks);
    }
    if envs.is_empty() {
        return Err(DatasetError::NoEnvironments);
    }
    envs.sort_by_key(|e| e.id);
    record_counts.sort_unstable();
    tasks.sort_by_key(|t| (t.env_id, t.start_index));
    let ids: Vec<u32> = envs.iter().map(|e| e.id).collect();
    let (train, val, test) = split_envs(&ids, cfg);
    let hard = tasks.iter().filter(|t| !t.baseline.success).map(|t| (t.env_id, t.start_index)).collect();
    Ok(Corpus {
        config: *cfg,
        controller: *controller,
        lexicon_digest: lexicon.digest(),
        envs,
        tasks,
        split: Split { train, val, test, hard },
        record_counts,
    })
}

/// Sequential corpus generation.
pub fn generate_corpus(
    cfg: &CorpusConfig,
    controller: &ControllerConfig,
    lexicon: &Lexicon,
    sink: impl FnMut(&Environment, &[DatasetRecord]),
) -> Result<Corpus, DatasetError> {
    let bundles = (0..cfg.n_envs).map(|id| build_env(id, cfg, lexicon, controller)).collect::<Result<Vec<_>, _>>()?;
    assemble(cfg, controller, lexicon, bundles, sink)
}

/// Position-cost grid of a record with off-mask cells set to the wall value.
pub fn masked_view(record: &DatasetRecord) -> Grid<f64> {
    let mut g = record.cost.position.clone();
    for (v, &m) in g.as_mut_slice().iter_mut().zip(record.mask.0.as_slice()) {
        if !m {
            *v = crate::costmap::OFF_MASK_COST;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_demo_hand_values() {
        let spec = GridSpec::default();
        let cfg = GroundingConfig::default();
        let pts = [Vec2::new(4.0, 4.0), Vec2::new(14.0, 4.0), Vec2::new(34.0, 4.0)];
        let (cost, mask) = label_demo(&pts, Vec2::new(34.0, 4.0), &spec, &cfg, 20.0).unwrap();
        let at = |p: Vec2| *cost.position.at(spec.index_of(p));
        assert_eq!(at(pts[0]), 229.0);
        assert!((at(pts[1]) - 152.666_666_666_666_66).abs() < 1e-9);
        assert_eq!(at(pts[2]), 0.0);
        for (i, &m) in mask.0.as_slice().iter().enumerate() {
            if !m {
                assert_eq!(*cost.position.at(i), 255.0);
            }
        }
        assert!(cost.velocity.as_slice().iter().all(|&v| v == 2));
    }

    #[test]
    fn label_demo_errors() {
        let spec = GridSpec::default();
        let cfg = GroundingConfig::default();
        assert_eq!(label_demo(&[], Vec2::ZERO, &spec, &cfg, 20.0), Err(DatasetError::EmptyTrajectory));
        assert!(matches!(
            label_demo(&[Vec2::new(0.0, 0.0)], Vec2::new(100.0, 0.0), &spec, &cfg, 20.0),
            Err(DatasetError::NotAtGoal { .. })
        ));
    }

    #[test]
    fn specified_maps_per_object() {
        let env = generate_environment(0, 9, &GridSpec::default(), 2).unwrap();
        let g = Grounder::default();
        let recs = specified_map_records(&env, &g, RobotState::at_rest(Vec2::new(5.0, 5.0)));
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.mask.is_all_ones() && r.origin == RecordOrigin::SpecifiedMap));
        for (r, o) in recs.iter().zip(&env.objects) {
            let peak = *r.cost.position.at(env.spec.index_of(o.center));
            assert!(r.cost.position.as_slice().iter().all(|&v| v <= peak));
        }
        assert!(recs[2].cost.position.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn splits_partition_ids() {
        let ids: Vec<u32> = (0..100).collect();
        let (a, b, c) = split_envs(&ids, &CorpusConfig::default());
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
        let mut all: Vec<u32> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ids);
    }

    #[test]
    fn edge_goals_are_free() {
        let env = generate_environment(4, 17, &GridSpec::default(), 2).unwrap();
        let goals = edge_goals(&env, &GroundingConfig::default());
        assert!(!goals.is_empty());
        assert!(goals.iter().all(|(_, _, g)| !collision(*g, &env)));
    }

    #[test]
    fn small_corpus_is_consistent() {
        let cfg = CorpusConfig { n_envs: 2, starts_per_env: 3, max_steps: 150, ..Default::default() };
        let controller = ControllerConfig::default();
        let mut seen = 0;
        let corpus = generate_corpus(&cfg, &controller, &Lexicon::default(), |_, r| seen += r.len()).unwrap();
        assert_eq!(corpus.envs.len(), 2);
        assert!(corpus.tasks.len() <= 6 && !corpus.tasks.is_empty());
        let demos = corpus.solvable_tasks().count();
        assert_eq!(seen, demos + 2 * 4);
        assert_eq!(corpus.split.hard.len(), corpus.hard_tasks().count());
        let again = generate_corpus(&cfg, &controller, &Lexicon::default(), |_, _| {}).unwrap();
        assert_eq!(corpus, again);
    }
}
