use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polymorph::coupling::solve_coupling;
use polymorph::symbolic::SymbolicConfig;
use polymorph::{Error, Rational, Scalar};
use polymorph_cli::config::split_list;
use polymorph_cli::{run, write_outputs, Command, ExperimentConfig, Mode, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "polymorph", version, about = "Experiments on polymorphisms and Markov operators")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write report.json and series/*.csv here instead of printing the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep length, or largest generated space for the scans.
    #[arg(long)]
    n: Option<usize>,
    /// Symbolic test windows lie in [-W, W].
    #[arg(long)]
    window: Option<i64>,
    /// Record wall-clock seconds in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Action {
    /// Run a suite from a config file or with defaults.
    Run {
        #[arg(value_enum)]
        command: Option<Command>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated probability vector for `coupling`.
        #[arg(long)]
        p: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Zero-diagonal couplings.
    Coupling {
        #[command(subcommand)]
        action: CouplingAction,
    },
    /// Symbolic-model suites driven by a symbolic config.
    Symbolic {
        #[arg(value_enum)]
        command: SymbolicCommand,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the normalized config or the list of violations.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum CouplingAction {
    /// Print the coupling matrix for a probability vector.
    Solve {
        #[arg(long)]
        p: String,
        /// Rational arithmetic instead of f64.
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SymbolicCommand {
    Limits,
    Intertwine,
    MixingScan,
    Corollary1,
}

impl From<SymbolicCommand> for Command {
    fn from(c: SymbolicCommand) -> Self {
        match c {
            SymbolicCommand::Limits => Command::Limits,
            SymbolicCommand::Intertwine => Command::Intertwine,
            SymbolicCommand::MixingScan => Command::MixingScan,
            SymbolicCommand::Corollary1 => Command::Corollary1,
        }
    }
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::Io(path.display().to_string(), e))
}

fn parent_dir(path: Option<&Path>) -> PathBuf {
    path.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default()
}

fn apply_common(cfg: &mut ExperimentConfig, common: &Common) {
    if let Some(mode) = common.mode {
        cfg.mode = mode;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.n.is_some() {
        cfg.n = common.n;
    }
    if let Some(w) = common.window {
        cfg.symbolic.get_or_insert_with(SymbolicConfig::biased_four).sweeps.w = w;
    }
}

fn execute(cfg: ExperimentConfig, base_dir: PathBuf, common: &Common) -> Result<i32, RunError> {
    let report = run(&cfg, &RunOptions { base_dir, timing: common.timing })?;
    match &common.out {
        Some(dir) => write_outputs(&report, dir)?,
        None => print!("{}", report.to_json()),
    }
    for c in report.failing_checks() {
        eprintln!("violated: {} (residual {}, tolerance {})", c.name, c.residual, c.tolerance);
    }
    if report.status == polymorph_cli::Status::Infeasible {
        eprintln!("infeasible input");
    }
    Ok(report.status.exit_code())
}

fn solve<S: Scalar>(p: &[String]) -> Result<i32, RunError> {
    let p = p.iter().map(|s| S::parse(s)).collect::<polymorph::Result<Vec<S>>>()?;
    match solve_coupling(&p) {
        Ok(c) => {
            println!("{}", serde_json::to_string_pretty(&c.to_wire()).expect("coupling serializes"));
            Ok(0)
        }
        Err(e @ Error::Infeasible { .. }) => {
            eprintln!("{e}");
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

fn dispatch(cli: Cli) -> Result<i32, RunError> {
    match cli.action {
        Action::Run { command, config, p, common } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_json(&read(path)?).map_err(RunError::Invalid)?,
                None => {
                    let command =
                        command.ok_or_else(|| RunError::Invalid(vec!["command: required without --config".into()]))?;
                    ExperimentConfig::new(command)
                }
            };
            if let Some(command) = command {
                cfg.command = command;
            }
            if let Some(p) = p {
                cfg.p = Some(split_list(&p));
            }
            apply_common(&mut cfg, &common);
            execute(cfg, parent_dir(config.as_deref()), &common)
        }
        Action::Coupling { action: CouplingAction::Solve { p, exact } } => {
            let p = split_list(&p);
            if exact {
                solve::<Rational>(&p)
            } else {
                solve::<f64>(&p)
            }
        }
        Action::Symbolic { command, config, common } => {
            let mut cfg = ExperimentConfig::new(command.into());
            if let Some(path) = &config {
                let sym: SymbolicConfig = serde_json::from_str(&read(path)?)
                    .map_err(|e| RunError::Invalid(vec![format!("symbolic: {e}")]))?;
                cfg.symbolic = Some(sym);
            }
            apply_common(&mut cfg, &common);
            execute(cfg, parent_dir(config.as_deref()), &common)
        }
        Action::Validate { config } => {
            let cfg = ExperimentConfig::from_json(&read(&config)?).map_err(RunError::Invalid)?;
            let cfg = cfg.validate().map_err(RunError::Invalid)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let code = dispatch(Cli::parse()).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
