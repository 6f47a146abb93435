use super::*;
use crate::math::Rect;
use crate::world::GridSpec;
use alloc::vec;

fn env_with(objects: Vec<ObjectInstance>) -> Environment {
    Environment::new(7, 0, GridSpec::default(), objects).unwrap()
}

fn boxed(kind: ObjectKind, min: (f64, f64), max: (f64, f64)) -> ObjectInstance {
    ObjectInstance::with_footprint(kind, Rect::new(Vec2::new(min.0, min.1), Vec2::new(max.0, max.1)))
}

fn intent(text: &str) -> Intent {
    parse(text, &Lexicon::default()).unwrap()
}

#[test]
fn left_of_offsets_edge_midpoint() {
    let obj = boxed(ObjectKind::SpamCan, (100.0, 300.0), (200.0, 400.0));
    let p = relation_point(GoalRelation::LeftOf, &obj, Vec2::new(1000.0, 1000.0), 20.0);
    assert_eq!(p, Vec2::new(80.0, 350.0));
    assert_eq!(relation_point(GoalRelation::Above, &obj, Vec2::ZERO, 20.0), Vec2::new(150.0, 280.0));
    assert_eq!(relation_point(GoalRelation::Below, &obj, Vec2::ZERO, 20.0), Vec2::new(150.0, 420.0));
    assert_eq!(relation_point(GoalRelation::RightOf, &obj, Vec2::ZERO, 20.0), Vec2::new(220.0, 350.0));
}

#[test]
fn front_and_behind_follow_the_ray() {
    let obj = boxed(ObjectKind::CheezitBox, (1000.0, 900.0), (1200.0, 1100.0));
    let robot = Vec2::new(400.0, 1000.0);
    let front = relation_point(GoalRelation::InFrontOf, &obj, robot, 20.0);
    let behind = relation_point(GoalRelation::Behind, &obj, robot, 20.0);
    assert_eq!(front, Vec2::new(980.0, 1000.0));
    assert_eq!(behind, Vec2::new(1220.0, 1000.0));

    // Oblique ray: center (1100, 1000) seen from (500, 400) enters the left edge
    // at x = 1000 and leaves the bottom edge at y = 1100.
    let robot = Vec2::new(500.0, 400.0);
    let dir = Vec2::new(1.0, 1.0).normalized();
    let behind = relation_point(GoalRelation::Behind, &obj, robot, 20.0);
    let expected = robot + dir * (700.0 * core::f64::consts::SQRT_2 + 20.0);
    assert!(behind.distance(expected) < 1e-9);
    assert!(behind.x > 1100.0 && behind.y > 1100.0);
}

#[test]
fn goal_point_projects_out_of_collision() {
    let env = env_with(vec![boxed(ObjectKind::SpamCan, (100.0, 300.0), (200.0, 400.0))]);
    let p = goal_point(GoalRelation::LeftOf, &env.objects[0], Vec2::new(1000.0, 1000.0), &env, &GroundingConfig {
        goal_offset: 5.0,
        ..Default::default()
    })
    .unwrap();
    assert!(!collision(p, &env));
    assert!(p.x < 100.0);
}

#[test]
fn directional_goal_is_clipped() {
    let env = Environment::empty(GridSpec::default()).unwrap();
    let cfg = GroundingConfig::default();
    assert_eq!(directional_point(Direction::Up, Vec2::new(500.0, 100.0), &env, &cfg), Vec2::new(500.0, 20.0));
    assert_eq!(directional_point(Direction::Right, Vec2::new(500.0, 100.0), &env, &cfg), Vec2::new(650.0, 100.0));
}

#[test]
fn resolve_object_cases() {
    let g = Grounder::default();
    let env = env_with(vec![
        boxed(ObjectKind::BleachBottle, (100.0, 100.0), (300.0, 400.0)),
        boxed(ObjectKind::SpamCan, (800.0, 800.0), (1000.0, 1000.0)),
    ]);
    assert_eq!(g.resolve_object(&intent("go above the bleach"), &env).unwrap().kind, ObjectKind::BleachBottle);
    let banana = Intent::new(IntentCategory::SpatialObject(SpatialRelation::Above), Some("banana".into())).unwrap();
    assert!(matches!(g.resolve_object(&banana, &env), Err(GroundingError::UnknownObject { .. })));
    assert!(matches!(
        g.resolve_object(&intent("go above the mustard"), &env),
        Err(GroundingError::ObjectNotPresent { kind: ObjectKind::MustardBottle })
    ));
    let twins = env_with(vec![
        boxed(ObjectKind::SpamCan, (100.0, 100.0), (300.0, 300.0)),
        boxed(ObjectKind::SpamCan, (800.0, 800.0), (1000.0, 1000.0)),
    ]);
    assert!(matches!(
        g.resolve_object(&intent("stay away from the spam"), &twins),
        Err(GroundingError::Ambiguous { candidates: 2, .. })
    ));
}

#[test]
fn velocity_grounding() {
    let env = Environment::empty(GridSpec::default()).unwrap();
    let g = Grounder::default();
    let gc = g.ground_text("go slower", &env, &RobotState::at_rest(Vec2::new(500.0, 500.0))).unwrap();
    assert_eq!(gc.kind, CorrectionKind::Constraint);
    assert!(gc.mask.is_all_ones());
    assert!(gc.cost.velocity.as_slice().iter().all(|&v| v == VELOCITY_CODES.slower));
    assert!(gc.cost.position.as_slice().iter().all(|&v| v == 0.0));
    assert_eq!(gc.source_text, "go slower");
}

#[test]
fn stay_away_peaks_at_object_center() {
    let env = env_with(vec![boxed(ObjectKind::SpamCan, (1000.0, 1000.0), (1200.0, 1200.0))]);
    let g = Grounder::default();
    let gc = g.ground_text("stay away from the spam", &env, &RobotState::at_rest(Vec2::new(300.0, 300.0))).unwrap();
    assert_eq!(gc.kind, CorrectionKind::Constraint);
    let center_cell = env.spec.index_of(Vec2::new(1100.0, 1100.0));
    let (argmax, _) = gc
        .cost
        .position
        .as_slice()
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    // The center lies on a cell corner; the four cells around it tie.
    let cc = env.spec.cell_of(Vec2::new(1100.0, 1100.0));
    let am = gc.cost.position.cell_of(argmax);
    assert!(am.x.abs_diff(cc.x) <= 1 && am.y.abs_diff(cc.y) <= 1);
    assert!((*gc.cost.position.at(center_cell) - 255.0).abs() < 1e-9);
    assert_eq!(*gc.cost.position.get(crate::grid::Cell::new(0, 0)), 0.0);
}

#[test]
fn goal_grounding_builds_decreasing_tube() {
    let env = env_with(vec![boxed(ObjectKind::BleachBottle, (900.0, 900.0), (1100.0, 1200.0))]);
    let g = Grounder::default();
    let state = RobotState::at_rest(Vec2::new(300.0, 1500.0));
    let gc = g.ground_text("go above the bleach", &env, &state).unwrap();
    assert_eq!(gc.kind, CorrectionKind::Goal);
    let goal = gc.goal_point.unwrap();
    assert_eq!(goal, Vec2::new(1000.0, 880.0));
    let path = g.oracle_path(&env, state.q, goal).unwrap();
    let costs: Vec<f64> = path.iter().map(|p| *gc.cost.position.at(env.spec.index_of(*p))).collect();
    assert!(costs.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(*costs.last().unwrap(), 0.0);
    assert_eq!(*gc.cost.position.at(env.spec.index_of(goal)), 0.0);
    for (i, &m) in gc.mask.0.as_slice().iter().enumerate() {
        let v = *gc.cost.position.at(i);
        if m {
            assert!(v <= 229.0);
        } else {
            assert_eq!(v, 255.0);
        }
    }
}

#[test]
fn unreachable_goal_is_an_error() {
    // A wall splitting the world in two.
    let env = env_with(vec![
        boxed(ObjectKind::CheezitBox, (1000.0, 0.0), (1100.0, 1024.0)),
        boxed(ObjectKind::BleachBottle, (1000.0, 1024.0), (1100.0, 2048.0)),
    ]);
    let g = Grounder::default();
    let err = g.ground_text("go to the right of the bleach", &env, &RobotState::at_rest(Vec2::new(300.0, 300.0)));
    assert_eq!(err.unwrap_err(), GroundingError::NoPath);
}

#[test]
fn label_polyline_hand_values() {
    let spec = GridSpec::default();
    let cfg = GroundingConfig { tube_radius: 0.0, ..Default::default() };
    let pts = [Vec2::new(4.0, 4.0), Vec2::new(14.0, 4.0), Vec2::new(34.0, 4.0)];
    let label = label_polyline(&pts, &spec, &cfg);
    assert_eq!(label.length, 30.0);
    let at = |p: Vec2| *label.cost.position.at(spec.index_of(p));
    assert_eq!(at(pts[0]), 229.0);
    assert!((at(pts[1]) - 229.0 * 20.0 / 30.0).abs() < 1e-12);
    assert_eq!(at(pts[2]), 0.0);
    assert_eq!(label.mask.count_ones(), 3);
}

#[test]
fn single_point_polyline() {
    let spec = GridSpec::default();
    let label = label_polyline(&[Vec2::new(100.0, 100.0)], &spec, &GroundingConfig::default());
    assert_eq!(label.length, 0.0);
    assert_eq!(*label.cost.position.at(spec.index_of(Vec2::new(100.0, 100.0))), 0.0);
    assert_eq!(label.mask.count_ones(), 13);
}

#[test]
fn classify_boundary() {
    let env = Environment::empty(GridSpec::default()).unwrap();
    let mut gc = Grounder::default().ground_text("go faster", &env, &RobotState::at_rest(Vec2::new(9.0, 9.0))).unwrap();
    assert_eq!(classify(&gc), CorrectionKind::Constraint);
    gc.mask.0.as_mut_slice()[17] = false;
    assert_eq!(classify(&gc), CorrectionKind::Goal);
}

#[test]
fn render_parse_round_trip() {
    let lex = Lexicon::default();
    for category in IntentCategory::ALL {
        let objects: Vec<Option<String>> = if category.needs_object() {
            ObjectKind::ALL.iter().flat_map(|&k| lex.synonyms(k).collect::<Vec<_>>()).map(Some).collect()
        } else {
            vec![None]
        };
        for obj in objects {
            let intent = Intent::new(category, obj).unwrap();
            for variant in 0..templates(category).len() {
                let text = render(&intent, variant);
                assert_eq!(parse(&text, &lex).unwrap(), intent, "{text}");
            }
        }
    }
}
