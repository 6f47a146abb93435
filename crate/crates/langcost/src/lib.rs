//! Std companion to `langcost-core`: corpus files, the evaluation harness,
//! the websocket session server and the `langcost` command-line tool.

pub mod eval;
pub mod io;
pub mod service;

pub use eval::{evaluate, render_tables, EvalConfig, EvalReport};
pub use io::{load_config, load_corpus, load_lexicon, Config};
