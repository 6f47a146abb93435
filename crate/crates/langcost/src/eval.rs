//! Evaluation harness over a generated corpus: baseline failures, rescue by
//! a scripted user, goal-as-language with the oracle grounder, constraint
//! effects and temporal composition of goal corrections.
//!
//! Episodes run on the rayon pool; results are collected in job order so
//! reports are identical across runs and thread counts.

use std::fmt::Write as _;

use langcost_core::controller::{
    run_episode, run_session, ControllerConfig, EpisodeOutcome, ReactivationScript, ScriptedUser, Session, TimedScript,
};
use langcost_core::dataset::{edge_goals, Corpus, TaskEntry};
use langcost_core::grounding::{
    render, Direction, GoalRelation, Grounder, Intent, IntentCategory, Lexicon, RobotRelation, Speed,
};
use langcost_core::{Environment, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("corpus has no tasks")]
    EmptyCorpus,
    #[error("corpus references missing environment {0}")]
    MissingEnvironment(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Paired runs per constraint directive.
    pub constraint_pairs: usize,
    /// Stay-away pairs are tasks whose baseline came closer than this to
    /// a non-goal object, px.
    pub near_pass: f64,
    pub temporal_runs: usize,
    /// Solvable tasks sampled for the behind / in-front-of / directional rows.
    pub variant_tasks: usize,
    /// Minimum spacing between the three temporal waypoints, px.
    pub waypoint_spacing: f64,
    /// Later waypoints must stay this far from earlier legs' paths, px.
    pub waypoint_separation: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            constraint_pairs: 50,
            near_pass: 30.0,
            temporal_runs: 20,
            variant_tasks: 100,
            waypoint_spacing: 100.0,
            waypoint_separation: 60.0,
        }
    }
}

/// Success count over a number of episodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub n: usize,
    pub success: usize,
}

impl Tally {
    pub fn add(&mut self, ok: bool) {
        self.n += 1;
        self.success += ok as usize;
    }

    pub fn rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.success as f64 / self.n as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthBucket {
    Short,
    Medium,
    Long,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 3] = [LengthBucket::Short, LengthBucket::Medium, LengthBucket::Long];

    /// Buckets by baseline episode length: under 40 ticks, 40 to 60, over 60.
    pub fn of(ticks: u32) -> Self {
        match ticks {
            0..40 => LengthBucket::Short,
            40..=60 => LengthBucket::Medium,
            _ => LengthBucket::Long,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LengthBucket::Short => "Short",
            LengthBucket::Medium => "Medium",
            LengthBucket::Long => "Long",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub label: String,
    pub all: Tally,
    /// Short, medium, long.
    pub by_length: [Tally; 3],
    /// Sampled instructions that could not be grounded and were not run.
    pub ungroundable: usize,
}

impl TypeRow {
    fn new(label: &str) -> Self {
        TypeRow { label: label.into(), ..Default::default() }
    }

    fn add(&mut self, baseline_ticks: u32, ok: bool) {
        self.all.add(ok);
        self.by_length[LengthBucket::of(baseline_ticks) as usize].add(ok);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub tasks: usize,
    pub failures: usize,
    pub failure_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescueRow {
    pub budget: u32,
    pub hard: Tally,
    /// Solvable tasks plus rescued hard tasks over all tasks.
    pub combined: Tally,
    pub corrections_issued: usize,
    pub corrections_rejected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub bucket: LengthBucket,
    pub tally: Tally,
    /// Mean episode length of the successful runs, ticks.
    pub mean_ticks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalAsLanguage {
    pub solvable: Tally,
    pub hard: Tally,
    /// Solvable-set results bucketed by baseline length; partitions the set.
    pub by_length: Vec<LengthRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedEffect {
    pub directive: Speed,
    /// Pairs whose speed ratio met the threshold.
    pub met: Tally,
    pub threshold: f64,
    pub mean_ratio: f64,
    pub still_successful: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearanceEffect {
    /// Pairs where the minimum clearance strictly increased.
    pub increased: Tally,
    pub mean_delta: f64,
    pub still_successful: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub slower: SpeedEffect,
    pub faster: SpeedEffect,
    pub stay_away: ClearanceEffect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    /// Runs that visited all three waypoints in order.
    pub completed: Tally,
    /// Environments skipped for lack of a usable waypoint triple.
    pub skipped_envs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus_seed: u64,
    pub n_envs: u32,
    pub lexicon_digest: u64,
    pub controller: ControllerConfig,
    pub config: EvalConfig,
    pub baseline: BaselineRow,
    pub rescue: Vec<RescueRow>,
    pub goal_as_language: GoalAsLanguage,
    pub per_type: Vec<TypeRow>,
    pub constraints: ConstraintReport,
    pub temporal: TemporalReport,
    pub episodes: usize,
    pub ticks: u64,
}

struct Ctx<'a> {
    corpus: &'a Corpus,
    lexicon: &'a Lexicon,
    ctl: &'a ControllerConfig,
    grounder: Grounder,
}

impl Ctx<'_> {
    fn env(&self, t: &TaskEntry) -> &Environment {
        self.corpus.env(t.env_id).expect("checked")
    }

    fn seed(&self, t: &TaskEntry) -> u64 {
        t.episode_seed(self.corpus.config.seed)
    }

    fn language_episode(&self, t: &TaskEntry, text: String) -> EpisodeOutcome {
        let s = Session::language_only(self.env(t).clone(), t.task, self.lexicon.clone(), *self.ctl, self.seed(t));
        run_session(s, &mut TimedScript::new(vec![(0, text)]))
    }

    fn scripted(&self, t: &TaskEntry, text: String) -> EpisodeOutcome {
        run_episode(self.env(t), &t.task, &mut TimedScript::new(vec![(0, text)]), self.lexicon, self.ctl, self.seed(t))
    }
}

#[derive(Default)]
struct Counter {
    episodes: usize,
    ticks: u64,
}

impl Counter {
    fn count(&mut self, outcomes: &[&EpisodeOutcome]) {
        self.episodes += outcomes.len();
        self.ticks += outcomes.iter().map(|o| o.ticks as u64).sum::<u64>();
    }
}

/// `n` items spread evenly over `items`, in order.
fn spread<T: Copy>(items: &[T], n: usize) -> Vec<T> {
    if items.len() <= n {
        return items.to_vec();
    }
    (0..n).map(|i| items[i * items.len() / n]).collect()
}

pub fn evaluate(
    corpus: &Corpus,
    lexicon: &Lexicon,
    ctl: &ControllerConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if corpus.tasks.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    if let Some(t) = corpus.tasks.iter().find(|t| corpus.env(t.env_id).is_none()) {
        return Err(EvalError::MissingEnvironment(t.env_id));
    }
    let ctx = Ctx { corpus, lexicon, ctl, grounder: Grounder::new(lexicon.clone(), ctl.grounding) };
    let mut counter = Counter::default();

    let hard: Vec<&TaskEntry> = corpus.hard_tasks().collect();
    let solvable: Vec<&TaskEntry> = corpus.solvable_tasks().collect();
    let baseline = BaselineRow {
        tasks: corpus.tasks.len(),
        failures: hard.len(),
        failure_rate: corpus.baseline_failure_rate(),
    };

    let rescue = [1, 2].iter().map(|&budget| rescue_row(&ctx, &hard, solvable.len(), budget, &mut counter)).collect();
    let (goal_as_language, solvable_ok) = goal_as_language(&ctx, &solvable, &hard, &mut counter);

    // The edge rows come straight from the goal-as-language runs.
    let mut per_type: Vec<TypeRow> = GoalRelation::EDGES
        .iter()
        .map(|&relation| {
            let mut row = TypeRow::new(relation.category().label());
            for (t, &ok) in solvable.iter().zip(&solvable_ok).filter(|(t, _)| t.relation == relation) {
                row.add(t.baseline.ticks, ok);
            }
            row
        })
        .collect();
    per_type.extend(variant_rows(&ctx, &spread(&solvable, cfg.variant_tasks), &mut counter));

    let (constraints, stay_row, velocity_row) = constraint_effects(&ctx, cfg, &solvable, &mut counter);
    per_type.push(stay_row);
    per_type.push(velocity_row);

    let temporal = temporal(&ctx, cfg, &mut counter);

    Ok(EvalReport {
        corpus_seed: corpus.config.seed,
        n_envs: corpus.envs.len() as u32,
        lexicon_digest: corpus.lexicon_digest,
        controller: *ctl,
        config: *cfg,
        baseline,
        rescue,
        goal_as_language,
        per_type,
        constraints,
        temporal,
        episodes: counter.episodes,
        ticks: counter.ticks,
    })
}

fn rescue_row(ctx: &Ctx, hard: &[&TaskEntry], solvable: usize, budget: u32, counter: &mut Counter) -> RescueRow {
    let outcomes: Vec<EpisodeOutcome> = hard
        .par_iter()
        .map(|t| run_episode(ctx.env(t), &t.task, &mut ScriptedUser::new(budget), ctx.lexicon, ctx.ctl, ctx.seed(t)))
        .collect();
    counter.count(&outcomes.iter().collect::<Vec<_>>());
    let mut row = RescueRow {
        budget,
        hard: Tally::default(),
        combined: Tally { n: solvable, success: solvable },
        corrections_issued: 0,
        corrections_rejected: 0,
    };
    for o in &outcomes {
        row.hard.add(o.succeeded());
        row.combined.add(o.succeeded());
        row.corrections_issued += o.corrections.len();
        row.corrections_rejected += o.corrections.iter().filter(|c| c.error.is_some()).count();
    }
    row
}

/// Language-only episodes on the solvable and hard sets. Also returns the
/// per-task success of the solvable runs.
fn goal_as_language(
    ctx: &Ctx,
    solvable: &[&TaskEntry],
    hard: &[&TaskEntry],
    counter: &mut Counter,
) -> (GoalAsLanguage, Vec<bool>) {
    let run = |tasks: &[&TaskEntry]| -> Vec<EpisodeOutcome> {
        tasks.par_iter().map(|t| ctx.language_episode(t, t.instruction.clone())).collect()
    };
    let on_solvable = run(solvable);
    let on_hard = run(hard);
    counter.count(&on_solvable.iter().chain(&on_hard).collect::<Vec<_>>());

    let mut out = GoalAsLanguage { solvable: Tally::default(), hard: Tally::default(), by_length: Vec::new() };
    let mut buckets = [(Tally::default(), 0u64); 3];
    for (t, o) in solvable.iter().zip(&on_solvable) {
        out.solvable.add(o.succeeded());
        let b = &mut buckets[LengthBucket::of(t.baseline.ticks) as usize];
        b.0.add(o.succeeded());
        if o.succeeded() {
            b.1 += o.ticks as u64;
        }
    }
    for o in &on_hard {
        out.hard.add(o.succeeded());
    }
    out.by_length = LengthBucket::ALL
        .iter()
        .zip(buckets)
        .map(|(&bucket, (tally, ticks))| LengthRow {
            bucket,
            tally,
            mean_ticks: if tally.success == 0 { 0.0 } else { ticks as f64 / tally.success as f64 },
        })
        .collect();
    (out, on_solvable.iter().map(|o| o.succeeded()).collect())
}

fn variant_rows(ctx: &Ctx, sample: &[&TaskEntry], counter: &mut Counter) -> Vec<TypeRow> {
    let directions = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];
    let categories = |t: &TaskEntry| {
        [
            IntentCategory::RobotObject(RobotRelation::Behind),
            IntentCategory::RobotObject(RobotRelation::InFrontOf),
            IntentCategory::Directional(directions[(t.env_id as usize + t.start_index as usize) % 4]),
        ]
    };
    let mut rows = vec![TypeRow::new("Behind"), TypeRow::new("In front of"), TypeRow::new("Positional")];
    let results: Vec<[Option<EpisodeOutcome>; 3]> = sample
        .par_iter()
        .map(|t| {
            let env = ctx.env(t);
            categories(t).map(|category| {
                let object = category.needs_object().then(|| ctx.lexicon.display_name(env.objects[t.object].kind));
                let intent = Intent::new(category, object).expect("well-formed");
                let state = langcost_core::RobotState::at_rest(t.task.start);
                ctx.grounder.ground(&intent, env, &state).ok()?;
                Some(ctx.language_episode(t, render(&intent, 0)))
            })
        })
        .collect();
    counter.count(&results.iter().flatten().flatten().collect::<Vec<_>>());
    for (t, r) in sample.iter().zip(&results) {
        for (row, ok) in rows.iter_mut().zip(r) {
            match ok {
                Some(o) => row.add(t.baseline.ticks, o.succeeded()),
                None => row.ungroundable += 1,
            }
        }
    }
    rows
}

/// Non-goal objects the baseline passed within `near_pass` px of, with the
/// start and goal both at least that far away so the close pass happens en
/// route. Objects whose kind appears twice are skipped since the name would
/// be ambiguous.
pub fn stay_away_pairs(corpus: &Corpus, near_pass: f64) -> Vec<(&TaskEntry, usize)> {
    let mut out = Vec::new();
    for t in &corpus.tasks {
        let env = corpus.env(t.env_id).expect("task environment");
        for (i, o) in env.objects.iter().enumerate() {
            let unique = env.objects.iter().filter(|p| p.kind == o.kind).count() == 1;
            if i == t.object || !unique || t.baseline.min_clearance[i] >= near_pass {
                continue;
            }
            if env.clearance(t.task.start, i) < near_pass || env.clearance(t.task.goal, i) < near_pass {
                continue;
            }
            out.push((t, i));
        }
    }
    out
}

pub const SLOWER_MAX_RATIO: f64 = 0.8;
pub const FASTER_MIN_RATIO: f64 = 1.1;

fn constraint_effects(
    ctx: &Ctx,
    cfg: &EvalConfig,
    solvable: &[&TaskEntry],
    counter: &mut Counter,
) -> (ConstraintReport, TypeRow, TypeRow) {
    let speed_tasks = spread(solvable, cfg.constraint_pairs);
    let mut velocity_row = TypeRow::new("Velocity");
    let mut speed = |directive: Speed, threshold: f64| {
        let intent = Intent::new(IntentCategory::Velocity(directive), None).expect("velocity");
        let text = render(&intent, 0);
        let outcomes: Vec<EpisodeOutcome> = speed_tasks.par_iter().map(|t| ctx.scripted(t, text.clone())).collect();
        counter.count(&outcomes.iter().collect::<Vec<_>>());
        let mut effect = SpeedEffect { directive, met: Tally::default(), threshold, mean_ratio: 0.0, still_successful: 0 };
        for (t, o) in speed_tasks.iter().zip(&outcomes) {
            let ratio = o.mean_speed() / t.baseline.mean_speed;
            let ok = match directive {
                Speed::Slower => ratio <= threshold,
                Speed::Faster => ratio >= threshold,
            };
            effect.met.add(ok);
            velocity_row.add(t.baseline.ticks, ok);
            effect.mean_ratio += ratio / outcomes.len().max(1) as f64;
            effect.still_successful += o.succeeded() as usize;
        }
        effect
    };
    let slower = speed(Speed::Slower, SLOWER_MAX_RATIO);
    let faster = speed(Speed::Faster, FASTER_MIN_RATIO);

    let pairs: Vec<_> = stay_away_pairs(ctx.corpus, cfg.near_pass).into_iter().take(cfg.constraint_pairs).collect();
    let outcomes: Vec<EpisodeOutcome> = pairs
        .par_iter()
        .map(|(t, i)| {
            let name = ctx.lexicon.display_name(ctx.env(t).objects[*i].kind);
            ctx.scripted(t, format!("stay away from the {name}"))
        })
        .collect();
    counter.count(&outcomes.iter().collect::<Vec<_>>());
    let mut stay_row = TypeRow::new("Stay Away");
    let mut stay_away = ClearanceEffect { increased: Tally::default(), mean_delta: 0.0, still_successful: 0 };
    for ((t, i), o) in pairs.iter().zip(&outcomes) {
        let before = t.baseline.min_clearance[*i];
        let after = o.min_clearance(ctx.env(t), *i);
        stay_away.increased.add(after > before);
        stay_row.add(t.baseline.ticks, after > before);
        stay_away.mean_delta += (after - before) / outcomes.len().max(1) as f64;
        stay_away.still_successful += o.succeeded() as usize;
    }
    (ConstraintReport { slower, faster, stay_away }, stay_row, velocity_row)
}

fn near(path: &[Vec2], p: Vec2, tol: f64) -> bool {
    path.iter().any(|q| q.distance(p) <= tol)
}

/// Three edge goals for a temporal run from `start`: pairwise spaced, all
/// legs reachable, each later waypoint off the earlier legs' shortest paths,
/// and the last one on a different object than the first two so the robot
/// cannot finish early by brushing past it.
pub fn temporal_waypoints(
    env: &Environment,
    grounder: &Grounder,
    start: Vec2,
    cfg: &EvalConfig,
) -> Option<[(usize, GoalRelation, Vec2); 3]> {
    let goals: Vec<_> = edge_goals(env, &grounder.cfg)
        .into_iter()
        .filter(|g| g.2.distance(start) > cfg.waypoint_separation)
        .collect();
    let spaced = |a: Vec2, b: Vec2| a.distance(b) >= cfg.waypoint_spacing;
    for a in &goals {
        for b in &goals {
            for c in &goals {
                if c.0 == a.0 || c.0 == b.0 || !spaced(a.2, b.2) || !spaced(b.2, c.2) || !spaced(a.2, c.2) {
                    continue;
                }
                let Ok(leg1) = grounder.oracle_path(env, start, a.2) else { continue };
                let Ok(leg2) = grounder.oracle_path(env, a.2, b.2) else { continue };
                if grounder.oracle_path(env, b.2, c.2).is_err() {
                    continue;
                }
                let sep = cfg.waypoint_separation;
                if near(&leg1, b.2, sep) || near(&leg1, c.2, sep) || near(&leg2, c.2, sep) {
                    continue;
                }
                return Some([*a, *b, *c]);
            }
        }
    }
    None
}

/// Whether `trajectory` comes within `tolerance` of each waypoint in order.
pub fn visits_in_order(trajectory: &[Vec2], waypoints: &[Vec2], tolerance: f64) -> bool {
    let mut next = 0;
    for q in trajectory {
        if next < waypoints.len() && q.distance(waypoints[next]) <= tolerance {
            next += 1;
        }
    }
    next == waypoints.len()
}

fn temporal(ctx: &Ctx, cfg: &EvalConfig, counter: &mut Counter) -> TemporalReport {
    let mut jobs = Vec::new();
    let mut skipped_envs = 0;
    for env in &ctx.corpus.envs {
        if jobs.len() >= cfg.temporal_runs {
            break;
        }
        let Some(t) = ctx.corpus.tasks.iter().find(|t| t.env_id == env.id) else { continue };
        match temporal_waypoints(env, &ctx.grounder, t.task.start, cfg) {
            Some(w) => jobs.push((t, w)),
            None => skipped_envs += 1,
        }
    }
    let results: Vec<(bool, u32)> = jobs
        .par_iter()
        .map(|(t, w)| {
            let env = ctx.env(t);
            let texts = w
                .iter()
                .map(|(o, r, _)| {
                    let name = ctx.lexicon.display_name(env.objects[*o].kind);
                    render(&Intent::new(r.category(), Some(name)).expect("edge relation"), 0)
                })
                .collect();
            let mut task = t.task;
            task.goal = w[2].2;
            let out = run_episode(env, &task, &mut ReactivationScript::new(texts), ctx.lexicon, ctx.ctl, ctx.seed(t));
            let path: Vec<Vec2> = out.trajectory.iter().map(|s| s.q).collect();
            let points: Vec<Vec2> = w.iter().map(|g| g.2).collect();
            (visits_in_order(&path, &points, ctx.ctl.goal_tolerance), out.ticks)
        })
        .collect();
    counter.episodes += results.len();
    counter.ticks += results.iter().map(|r| r.1 as u64).sum::<u64>();
    let mut completed = Tally::default();
    for (ok, _) in results {
        completed.add(ok);
    }
    TemporalReport { completed, skipped_envs }
}

fn pct(t: &Tally) -> String {
    if t.n == 0 {
        "-".into()
    } else {
        format!("{:.1}% ({}/{})", 100.0 * t.rate(), t.success, t.n)
    }
}

/// Human-readable tables: rescue rates, per-type success by length, the
/// length buckets and the constraint and temporal summaries.
pub fn render_tables(r: &EvalReport) -> String {
    let mut s = String::new();
    let solvable = r.baseline.tasks - r.baseline.failures;
    let _ = writeln!(s, "corpus seed {}  envs {}  tasks {}", r.corpus_seed, r.n_envs, r.baseline.tasks);
    let _ = writeln!(s);
    let _ = writeln!(s, "Rescue (oracle grounder, scripted user)");
    let _ = writeln!(s, "{:<28}{:>24}{:>26}", "Method", "Hard", "Solvable+Hard");
    let base_hard = Tally { n: r.baseline.failures, success: 0 };
    let base_all = Tally { n: r.baseline.tasks, success: solvable };
    let _ = writeln!(s, "{:<28}{:>24}{:>26}", "Baseline", pct(&base_hard), pct(&base_all));
    for row in &r.rescue {
        let name = if row.budget == 1 { "Single-correction".to_string() } else { format!("{}-corrections", row.budget) };
        let _ = writeln!(s, "{:<28}{:>24}{:>26}", name, pct(&row.hard), pct(&row.combined));
    }
    let g = &r.goal_as_language;
    let _ = writeln!(s, "{:<28}{:>24}{:>26}", "Goal-as-Language (oracle)", pct(&g.hard), pct(&g.solvable));
    let _ = writeln!(s, "  (goal-as-language right column: solvable set only)");
    let _ = writeln!(s);

    let _ = writeln!(s, "Success by instruction type and trajectory length");
    let _ = writeln!(s, "{:<14}{:>22}{:>22}{:>22}{:>22}", "Type", "All", "Short", "Medium", "Long");
    for row in &r.per_type {
        let _ = write!(s, "{:<14}{:>22}", row.label, pct(&row.all));
        for t in &row.by_length {
            let _ = write!(s, "{:>22}", pct(t));
        }
        if row.ungroundable > 0 {
            let _ = write!(s, "  ({} ungroundable)", row.ungroundable);
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);

    let _ = writeln!(s, "Goal-as-language by baseline length (<40 / 40-60 / >60 ticks)");
    for row in &g.by_length {
        let _ = writeln!(s, "{:<10}{:>22}  mean ticks {:.1}", row.bucket.label(), pct(&row.tally), row.mean_ticks);
    }
    let ordered = g.by_length.windows(2).all(|w| w[0].tally.rate() >= w[1].tally.rate());
    let _ = writeln!(s, "short >= medium >= long: {}", if ordered { "yes" } else { "no" });
    let _ = writeln!(s);

    let c = &r.constraints;
    let _ = writeln!(s, "Constraint effects");
    let _ = writeln!(
        s,
        "go slower    ratio <= {:.2}: {}  mean ratio {:.3}  successes {}",
        c.slower.threshold,
        pct(&c.slower.met),
        c.slower.mean_ratio,
        c.slower.still_successful
    );
    let _ = writeln!(
        s,
        "go faster    ratio >= {:.2}: {}  mean ratio {:.3}  successes {}",
        c.faster.threshold,
        pct(&c.faster.met),
        c.faster.mean_ratio,
        c.faster.still_successful
    );
    let _ = writeln!(
        s,
        "stay away    clearance up: {}  mean delta {:.1} px  successes {}",
        pct(&c.stay_away.increased),
        c.stay_away.mean_delta,
        c.stay_away.still_successful
    );
    let _ = writeln!(s, "temporal     3 waypoints in order: {}", pct(&r.temporal.completed));
    let _ = writeln!(s);
    let _ = writeln!(s, "episodes {}  ticks {}", r.episodes, r.ticks);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_edges() {
        assert_eq!(LengthBucket::of(0), LengthBucket::Short);
        assert_eq!(LengthBucket::of(39), LengthBucket::Short);
        assert_eq!(LengthBucket::of(40), LengthBucket::Medium);
        assert_eq!(LengthBucket::of(60), LengthBucket::Medium);
        assert_eq!(LengthBucket::of(61), LengthBucket::Long);
    }

    #[test]
    fn spread_is_even_and_ordered() {
        let v: Vec<u32> = (0..10).collect();
        assert_eq!(spread(&v, 5), vec![0, 2, 4, 6, 8]);
        assert_eq!(spread(&v, 20), v);
    }

    #[test]
    fn in_order_visits() {
        let w = [Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)];
        let there = [Vec2::new(1.0, 0.0), Vec2::new(50.0, 0.0), Vec2::new(99.0, 0.0)];
        assert!(visits_in_order(&there, &w, 20.0));
        let back: Vec<Vec2> = there.iter().rev().copied().collect();
        assert!(!visits_in_order(&back, &w, 20.0));
    }

    #[test]
    fn tally_rate() {
        let mut t = Tally::default();
        assert_eq!(t.rate(), 0.0);
        t.add(true);
        t.add(false);
        assert_eq!(t.rate(), 0.5);
    }
}
