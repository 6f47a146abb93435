use std::io::Write;
use std::process::{Command, Output, Stdio};

fn langcost(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_langcost"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn field<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("no {key} in:\n{stdout}"))
}

#[test]
fn gen_writes_a_loadable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "[corpus]\nstarts_per_env = 3\n").unwrap();
    let out = dir.path().join("corpus");
    let o = langcost(
        &["--config", cfg.to_str().unwrap(), "gen", "--envs", "2", "--seed", "4", "--out", out.to_str().unwrap()],
        "",
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(field(&stdout, "envs"), "2");
    assert_eq!(field(&stdout, "seed"), "4");
    let tasks: usize = field(&stdout, "tasks").parse().unwrap();
    assert!(tasks > 0 && tasks <= 6);
    assert!(out.join("manifest.json").exists());
    assert!(out.join("env-00000.lcr.gz").exists());
    let corpus = langcost::load_corpus(&out, None).unwrap();
    assert_eq!(corpus.tasks.len(), tasks);
    assert_eq!(corpus.config.seed, 4);
}

#[test]
fn run_applies_scripted_corrections() {
    let o = langcost(&["run", "--env", "0", "--seed", "3"], "go slower\n40: xyzzy plugh\n");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(["Success", "Failure"].contains(&field(&stdout, "status")));
    let lines: Vec<_> = stdout.lines().filter(|l| l.starts_with("correction ")).collect();
    assert_eq!(lines.len(), 2, "{stdout}");
    assert!(lines[0].starts_with("correction 0 \"go slower\": Constraint"), "{}", lines[0]);
    assert!(lines[1].contains("error"), "{}", lines[1]);
}

#[test]
fn run_with_explicit_task_and_no_input() {
    let o = langcost(&["run", "--env", "1", "--start", "200,200", "--goal", "1800,1800"], "");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(field(&stdout, "start"), "200.0,200.0");
    assert_eq!(field(&stdout, "goal"), "1800.0,1800.0");
    assert!(!stdout.contains("correction "));
    let o = langcost(&["run", "--env", "1", "--start", "200,200"], "");
    assert!(!o.status.success());
}

#[test]
fn ground_reports_the_map() {
    let o = langcost(&["ground", "--env", "0", "--seed", "3", "--text", "go up"], "");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    // "object 0 cheezit box center_cell = (87,147)"
    let names: Vec<String> = stdout
        .lines()
        .filter_map(|l| l.strip_prefix("object "))
        .map(|l| l.split_once(' ').unwrap().1.split(" center_cell").next().unwrap().to_string())
        .collect();
    assert!(!names.is_empty());
    let unique = names.iter().find(|n| names.iter().filter(|m| m == n).count() == 1).expect("a unique object");

    let text = format!("stay away from the {unique}");
    let o = langcost(&["ground", "--env", "0", "--seed", "3", "--text", &text], "");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(field(&stdout, "kind"), "Constraint");
    assert_eq!(field(&stdout, "mask_cells"), "65536/65536");
    assert_eq!(field(&stdout, "cost_max"), "255.000");
    assert_eq!(field(&stdout, "cost_min"), "0.000");
    assert!(!stdout.contains("goal_point"));
}

#[test]
fn ground_goal_has_a_goal_point() {
    let o = langcost(&["ground", "--env", "2", "--text", "go up"], "");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(field(&stdout, "kind"), "Goal");
    assert_eq!(field(&stdout, "cost_min"), "0.000");
    field(&stdout, "goal_point");
    let mask: Vec<usize> = field(&stdout, "mask_cells").split('/').map(|n| n.parse().unwrap()).collect();
    assert!(mask[0] > 0 && mask[0] < mask[1]);
}

#[test]
fn failures_exit_nonzero() {
    let o = langcost(&["teleport"], "");
    assert!(!o.status.success());
    let o = langcost(&["ground", "--env", "0", "--text", "xyzzy plugh"], "");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = langcost(&["--config", "/nonexistent/langcost.toml", "ground", "--env", "0", "--text", "go up"], "");
    assert!(!o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[controller]\nconstraint_weight = \"heavy\"\n").unwrap();
    let o = langcost(&["--config", bad.to_str().unwrap(), "ground", "--env", "0", "--text", "go up"], "");
    assert!(!o.status.success());
    let o = langcost(&["eval", "--corpus", dir.path().to_str().unwrap()], "");
    assert!(!o.status.success());
}
