use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use langcost::io::{generate_in_memory, generate_to_dir, load_config, load_corpus, load_lexicon, Config};
use langcost::service::{serve, ServerState};
use langcost::{evaluate, render_tables};
use langcost_core::controller::{run_episode, TimedScript};
use langcost_core::dataset::{corpus_environment, generate_tasks, CorpusConfig};
use langcost_core::grounding::{Grounder, Lexicon};
use langcost_core::rng::derive_seed;
use langcost_core::{RobotState, Task, Vec2};

#[derive(Parser)]
#[command(name = "langcost", version, about = "Language-corrected cost maps for a sampling-based planner")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Lexicon file replacing the built-in one.
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus directory.
    Gen {
        #[arg(long)]
        envs: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a corpus and print the report tables.
    Eval {
        /// Corpus directory; without it a corpus is generated in memory.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        envs: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one episode. Corrections are read from standard input, one per
    /// line, optionally prefixed with the tick to issue them at ("25: go up").
    Run {
        #[arg(long)]
        env: u32,
        #[arg(long)]
        seed: Option<u64>,
        /// Task index within the environment when no start and goal are given.
        #[arg(long, default_value_t = 0)]
        task: usize,
        #[arg(long, value_parser = parse_point)]
        start: Option<Vec2>,
        #[arg(long, value_parser = parse_point)]
        goal: Option<Vec2>,
        /// Write the trajectory as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ground one instruction and print statistics of its cost and mask.
    Ground {
        #[arg(long)]
        env: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        text: String,
        /// Robot position; defaults to the environment's first task start.
        #[arg(long, value_parser = parse_point)]
        at: Option<Vec2>,
    },
    /// Serve live sessions over a websocket at /ws.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_point(s: &str) -> Result<Vec2, String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(Vec2::new(x, y))
}

fn corpus_cfg(config: &Config, envs: Option<u32>, seed: Option<u64>) -> CorpusConfig {
    CorpusConfig {
        n_envs: envs.unwrap_or(config.corpus.n_envs),
        seed: seed.unwrap_or(config.corpus.seed),
        ..config.corpus
    }
}

/// Parses "TICK: text" or plain "text" (tick 0) lines.
fn parse_script(input: &str) -> Result<Vec<(u32, String)>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entry = match line.split_once(':') {
            Some((tick, text)) if tick.trim().chars().all(|c| c.is_ascii_digit()) && !tick.trim().is_empty() => {
                (tick.trim().parse().with_context(|| format!("line {}", n + 1))?, text.trim().to_string())
            }
            _ => (0, line.to_string()),
        };
        out.push(entry);
    }
    Ok(out)
}

fn task_for(env: &langcost_core::Environment, cfg: &CorpusConfig, config: &Config, lexicon: &Lexicon, index: usize) -> Result<(u32, Task)> {
    let grounder = Grounder::new(lexicon.clone(), config.controller.grounding);
    let tasks = generate_tasks(env, &grounder, cfg, &config.controller)?;
    let t = tasks.get(index).with_context(|| format!("environment {} has {} tasks", env.id, tasks.len()))?;
    Ok((t.0, t.1))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => load_config(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    };
    let lexicon = match &cli.lexicon {
        Some(p) => load_lexicon(p).with_context(|| format!("reading {}", p.display()))?,
        None => Lexicon::default(),
    };

    match cli.command {
        Command::Gen { envs, seed, out } => {
            let cfg = corpus_cfg(&config, envs, seed);
            let corpus = generate_to_dir(&cfg, &config.controller, &lexicon, &out)?;
            let records: usize = corpus.record_counts.iter().map(|r| r.1).sum();
            println!("envs = {}", corpus.envs.len());
            println!("seed = {}", cfg.seed);
            println!("tasks = {}", corpus.tasks.len());
            println!("hard = {}", corpus.split.hard.len());
            println!("failure_rate = {:.4}", corpus.baseline_failure_rate());
            println!("records = {records}");
            println!("split = {}/{}/{}", corpus.split.train.len(), corpus.split.val.len(), corpus.split.test.len());
            println!("out = {}", out.display());
        }
        Command::Eval { corpus, envs, seed, out } => {
            let corpus = match corpus {
                Some(dir) => load_corpus(&dir, Some(&lexicon))?,
                None => generate_in_memory(&corpus_cfg(&config, envs, seed), &config.controller, &lexicon)?,
            };
            let report = evaluate(&corpus, &lexicon, &corpus.controller, &config.eval)?;
            print!("{}", render_tables(&report));
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Run { env, seed, task, start, goal, out } => {
            let cfg = corpus_cfg(&config, None, seed);
            let environment = corpus_environment(env, &cfg)?;
            let (start_index, task) = match (start, goal) {
                (Some(s), Some(g)) => (task as u32, Task::new(s, g)),
                (None, None) => task_for(&environment, &cfg, &config, &lexicon, task)?,
                _ => bail!("--start and --goal must be given together"),
            };
            let mut input = String::new();
            std::io::stdin().read_to_string(&mut input)?;
            let mut script = TimedScript::new(parse_script(&input)?);
            let episode_seed = derive_seed(cfg.seed, &[env as u64, start_index as u64, 0xe9]);
            let outcome = run_episode(&environment, &task, &mut script, &lexicon, &config.controller, episode_seed);
            println!("status = {:?}", outcome.status);
            println!("ticks = {}", outcome.ticks);
            println!("start = {:.1},{:.1}", task.start.x, task.start.y);
            println!("goal = {:.1},{:.1}", task.goal.x, task.goal.y);
            if let Some(d) = outcome.final_distance {
                println!("final_distance = {d:.2}");
            }
            println!("mean_speed = {:.2}", outcome.mean_speed());
            println!("reactivations = {}", outcome.reactivations);
            for c in &outcome.corrections {
                match (&c.kind, &c.error) {
                    (_, Some(e)) => println!("correction {} {:?}: error: {e}", c.tick, c.text),
                    (Some(k), None) => println!("correction {} {:?}: {k:?}", c.tick, c.text),
                    (None, None) => println!("correction {} {:?}: pending", c.tick, c.text),
                }
            }
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string(&outcome.trajectory)?)?;
            }
        }
        Command::Ground { env, seed, text, at } => {
            let cfg = corpus_cfg(&config, None, seed);
            let environment = corpus_environment(env, &cfg)?;
            let q = match at {
                Some(q) => q,
                None => task_for(&environment, &cfg, &config, &lexicon, 0)?.1.start,
            };
            let grounder = Grounder::new(lexicon.clone(), config.controller.grounding);
            let gc = grounder.ground_text(&text, &environment, &RobotState::at_rest(q))?;
            let spec = &environment.spec;
            let cost = gc.cost.position.as_slice();
            let max = cost.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = cost.iter().cloned().fold(f64::INFINITY, f64::min);
            let argmax: Vec<String> = cost
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == max)
                .map(|(i, _)| {
                    let c = gc.cost.position.cell_of(i);
                    format!("({},{})", c.x, c.y)
                })
                .collect();
            println!("kind = {:?}", gc.kind);
            println!("at = {:.1},{:.1}", q.x, q.y);
            println!("mask_cells = {}/{}", gc.mask.count_ones(), cost.len());
            println!("cost_min = {min:.3}");
            println!("cost_max = {max:.3}");
            if argmax.len() <= 8 {
                println!("max_cells = {}", argmax.join(" "));
            } else {
                println!("max_cells = {} cells", argmax.len());
            }
            if let Some(g) = gc.goal_point {
                let c = spec.cell_of(g);
                println!("goal_point = {:.1},{:.1}", g.x, g.y);
                println!("goal_cell = ({},{})", c.x, c.y);
            }
            if let Some(l) = gc.path_length {
                println!("path_length = {l:.1}");
            }
            for (i, o) in environment.objects.iter().enumerate() {
                let c = spec.cell_of(o.center);
                println!("object {i} {} center_cell = ({},{})", lexicon.display_name(o.kind), c.x, c.y);
            }
        }
        Command::Serve { bind, rate, seed } => {
            let mut service = config.service;
            if let Some(r) = rate {
                if !r.is_finite() || r <= 0.0 {
                    bail!("--rate must be positive");
                }
                service.rate_hz = r;
            }
            let corpus = corpus_cfg(&config, None, seed);
            let state = ServerState::new(service, corpus, config.controller, lexicon);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
                eprintln!("listening on ws://{}/ws", listener.local_addr()?);
                serve(listener, state).await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
    }
    Ok(())
}
