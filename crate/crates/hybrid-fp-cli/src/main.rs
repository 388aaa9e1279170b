//! `hybridfp`: trajectories, density evolution, hybrid Jacobians, reduction
//! checks and solver-versus-Monte-Carlo comparisons for hybrid systems.
//!
//! Exit codes: 0 success, 1 threshold failure, 2 Zeno run, 3 trajectory
//! left the chart, 64 usage or configuration error, 65 solver error,
//! 66 mismatched grids.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hybrid_fp::io::Manifest;
use hybrid_fp::models::MODEL_IDS;
use thiserror::Error;

use config::{apply_set, RunConfig, KEYS};

/// Failures mapped to the usage/solver/grid exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("solver error: {0}")]
    Solver(hybrid_fp::Error),
    #[error("grid mismatch: {0}")]
    Grid(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Solver(_) => 65,
            CliError::Grid(_) => 66,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "hybridfp", version, about = "Density transport for hybrid dynamical systems", after_help = after_help())]
struct Cli {
    /// Configuration file (`[section] key = value`; a manifest works too).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model id (model.id).
    #[arg(long, global = true)]
    model: Option<String>,
    /// Initial state, comma separated (run.x0).
    #[arg(long, global = true, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Final time (run.T).
    #[arg(long = "T", global = true)]
    t: Option<f64>,
    /// Restitution coefficient (model.c).
    #[arg(long, global = true)]
    c: Option<f64>,
    /// Filippov slope (model.alpha).
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Output directory (output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override any key: `--set section.key=value` (repeatable).
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory; writes trajectory.csv and events.csv.
    Trajectory,
    /// Evolve the initial density; writes snapshot_####.csv files.
    Evolve,
    /// Print hybrid Jacobians at sampled guard points (or at --x0).
    Jacobian,
    /// Compare an unreduced system with its reduction (gl2, chaplygin3d, aff1, aff1-scaled).
    Verify,
    /// Compare the solver against the Monte-Carlo reference, or two snapshot files.
    Compare {
        /// First snapshot file (two-file mode).
        #[arg(long, requires = "b")]
        a: Option<PathBuf>,
        /// Second snapshot file (two-file mode).
        #[arg(long, requires = "a")]
        b: Option<PathBuf>,
        /// L¹ threshold for two-file mode (default: oracle.threshold or 0.1).
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn after_help() -> String {
    let mut s = format!("Model ids: {}\n\nConfiguration keys:\n", MODEL_IDS.join(", "));
    for (sec, keys) in KEYS {
        s.push_str(&format!("  [{sec}] {}\n", keys.join(", ")));
    }
    s.push_str("\nExit codes: 0 ok, 1 threshold failure, 2 Zeno, 3 left domain, 64 usage, 65 solver error, 66 grid mismatch");
    s
}

fn build_doc(cli: &Cli) -> Result<Manifest, CliError> {
    let mut doc = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Manifest::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => Manifest::default(),
    };
    for s in &cli.sets {
        apply_set(&mut doc, s)?;
    }
    if let Some(m) = &cli.model {
        doc.set("model", "id", m);
    }
    if let Some(x) = &cli.x0 {
        doc.set("run", "x0", x);
    }
    if let Some(t) = cli.t {
        doc.set("run", "T", t);
    }
    if let Some(c) = cli.c {
        doc.set("model", "c", c);
    }
    if let Some(a) = cli.alpha {
        doc.set("model", "alpha", a);
    }
    if let Some(o) = &cli.out {
        doc.set("output", "dir", o.display());
    }
    Ok(doc)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let doc = build_doc(&cli)?;
    if let Command::Compare { a: Some(a), b: Some(b), threshold } = &cli.command {
        let th = match threshold {
            Some(t) => *t,
            None => match doc.get("oracle", "threshold") {
                Some(v) => v.parse().map_err(|_| CliError::Usage(format!("oracle.threshold: '{v}' is not a number")))?,
                None => 0.1,
            },
        };
        return commands::compare_files(a, b, th);
    }
    let mut cfg = RunConfig::resolve(&doc)?;
    match cli.command {
        Command::Trajectory => commands::trajectory(&mut cfg),
        Command::Evolve => commands::evolve(&cfg),
        Command::Jacobian => commands::jacobian(&cfg),
        Command::Verify => commands::verify(&cfg),
        Command::Compare { .. } => commands::compare_run(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("hybridfp: {e}");
            ExitCode::from(e.code())
        }
    }
}
