//! Command-line front end: scenario runs, built-in example generation, and
//! batch execution.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gradsoc::models::ModelKind;
use gradsoc::run::{run_scenario, RunMode, EXIT_BAD_INPUT, EXIT_OK};
use gradsoc::scenario::{generate_example, Scenario};

#[derive(Parser)]
#[command(
    name = "gradsoc",
    about = "Second-order cone optimization of networked bioreactors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Rc,
    Rmx,
    Rme,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> ModelKind {
        match m {
            ModelArg::Rc => ModelKind::Rc,
            ModelArg::Rmx => ModelKind::Rmx,
            ModelArg::Rme => ModelKind::Rme,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    scenario: PathBuf,
    /// Override the growth model of the scenario.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Override the disjunction constant of design models.
    #[arg(long)]
    gamma: Option<f64>,
    /// Relative optimality gap (branch-and-bound and solver).
    #[arg(long)]
    gap: Option<f64>,
    /// Reproducible serial search order.
    #[arg(long, default_value_t = true)]
    deterministic: bool,
    /// Output directory for CSV/SVG artifacts.
    #[arg(long, default_value = "gradsoc-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the steady-state operation problem on the fixed topology.
    Solve(RunArgs),
    /// Choose pipe activations by branch-and-bound (MISOCP).
    Design(RunArgs),
    /// Solve the multi-period operation problem.
    Dynamic(RunArgs),
    /// Run the scenario in its natural mode and emphasize verification.
    Validate(RunArgs),
    /// Write a built-in example scenario
    /// (four_tank, four_tank_modified, dynamic_four_tank, wheel:<n>:<easy|hard>).
    Example {
        name: String,
        #[arg(long, default_value = "gradsoc-out")]
        out: PathBuf,
    },
    /// Run every scenario JSON in a directory (parallel processes).
    Batch {
        dir: PathBuf,
        #[arg(long, default_value = "gradsoc-out")]
        out: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    let mut sc = Scenario::from_json(&text).map_err(|e| e.to_string())?;
    if let Some(m) = args.model {
        sc = sc.with_model(m.into());
    }
    if let Some(g) = args.gamma {
        sc.model.gamma = Some(g);
    }
    if let Some(g) = args.gap {
        sc.bnb.rel_gap = g;
        sc.solver.eps_gap = g.min(1e-8);
    }
    sc.bnb.deterministic = args.deterministic;
    Ok(sc)
}

fn execute(args: &RunArgs, mode: RunMode) -> ExitCode {
    let sc = match load(args) {
        Ok(sc) => sc,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_BAD_INPUT as u8);
        }
    };
    let out = run_scenario(&sc, Some(&args.out), mode);
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", out.summary());
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    ExitCode::from(out.exit_code as u8)
}

const EXIT_SOLVER_FAILURE_I32: i32 = gradsoc::run::EXIT_SOLVER_FAILURE;

fn batch(dir: &Path, out_root: &Path) -> ExitCode {
    let mut entries: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => {
            eprintln!("error: {}: {e}", dir.display());
            return ExitCode::from(EXIT_BAD_INPUT as u8);
        }
    };
    entries.sort();
    if entries.is_empty() {
        eprintln!("error: no scenario files in {}", dir.display());
        return ExitCode::from(EXIT_BAD_INPUT as u8);
    }
    let exe = match std::env::current_exe() {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_INPUT as u8);
        }
    };
    let jobs = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut worst = EXIT_OK;
    for chunk in entries.chunks(jobs) {
        let children: Vec<_> = chunk
            .iter()
            .map(|path| {
                let stem = path
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .to_string();
                let sub = out_root.join(&stem);
                let child = std::process::Command::new(&exe)
                    .arg("validate")
                    .arg(path)
                    .arg("--out")
                    .arg(&sub)
                    .stdout(std::process::Stdio::piped())
                    .stderr(std::process::Stdio::piped())
                    .spawn();
                (path.clone(), child)
            })
            .collect();
        for (path, child) in children {
            match child.and_then(|c| c.wait_with_output()) {
                Ok(outp) => {
                    let code = outp.status.code().unwrap_or(EXIT_SOLVER_FAILURE_I32);
                    print!("{}", String::from_utf8_lossy(&outp.stdout));
                    if code != 0 {
                        eprintln!("{}: exit {code}", path.display());
                        worst = worst.max(code);
                    }
                }
                Err(e) => {
                    eprintln!("{}: spawn failed: {e}", path.display());
                    worst = worst.max(EXIT_SOLVER_FAILURE_I32);
                }
            }
        }
    }
    ExitCode::from(worst as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Solve(args) => execute(&args, RunMode::Steady),
        Command::Design(args) => execute(&args, RunMode::Design),
        Command::Dynamic(args) => execute(&args, RunMode::Dynamic),
        Command::Validate(args) => execute(&args, RunMode::Auto),
        Command::Example { name, out } => {
            let sc = match generate_example(&name) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_BAD_INPUT as u8);
                }
            };
            if let Err(e) = std::fs::create_dir_all(&out) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_BAD_INPUT as u8);
            }
            let path = out.join(format!("{}.json", sc.name));
            if let Err(e) = std::fs::write(&path, sc.to_json()) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_BAD_INPUT as u8);
            }
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Command::Batch { dir, out } => batch(&dir, &out),
    }
}
