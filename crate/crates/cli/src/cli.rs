//! Command line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::emit::{emit, Format};
use crate::error::CliError;
use crate::presets::{self, preset, PRESETS};
use crate::runner::{resolve_workers, run_scenario, with_workers};
use crate::scenario::{load_config, Scenario};
use crate::verify;

#[derive(Debug, Parser)]
#[command(name = "impact-game", version, about = "Equilibrium execution strategies of two large traders")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the equilibrium policy coefficients of a scenario file or preset.
    Solve {
        /// Preset name or path to a scenario file.
        target: String,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Solve and simulate a scenario file.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve and simulate a built-in preset.
    Scenario {
        preset: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the self-checks and report pass/fail for each.
    Verify {
        /// Worker threads (overridden by IMPACT_GAME_WORKERS).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the built-in presets.
    List,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Random seed (default: the scenario's).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated paths (default: the scenario's).
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads (overridden by IMPACT_GAME_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
}

/// Parses `argv` and runs the command, writing reports to `out`.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = write!(out, "{e}");
            return Ok(());
        }
        Err(e) => {
            let help = Cli::command().render_help();
            return Err(CliError::Usage(format!("{e}\n{help}")));
        }
    };
    let print = |out: &mut dyn Write, text: &str| out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e));
    match cli.command {
        Command::List => {
            let width = presets::names().map(str::len).max().unwrap_or(0);
            for p in PRESETS {
                print(out, &format!("{:width$}  {}\n", p.name, p.description))?;
            }
        }
        Command::Solve { target, json } => {
            let scenario = match preset(&target) {
                Some(s) => s,
                None => load_config(&target)?,
            };
            print(out, &solve_report(&scenario, json)?)?;
        }
        Command::Simulate { config, run } => simulate(load_config(&config)?, run, out)?,
        Command::Scenario { preset: name, run } => {
            let scenario = preset(&name).ok_or_else(|| {
                let known: Vec<&str> = presets::names().collect();
                CliError::Usage(format!("unknown preset `{name}`; available: {}", known.join(", ")))
            })?;
            simulate(scenario, run, out)?
        }
        Command::Verify { workers } => {
            let workers = resolve_workers(workers)?;
            let reports = with_workers(workers, verify::run_all);
            let failed = reports.iter().filter(|r| !r.passed).count();
            for r in &reports {
                let status = if r.passed { "PASS" } else { "FAIL" };
                print(out, &format!("{:<4} {status}  {}: {}\n", r.id, r.name, r.detail))?;
            }
            if failed > 0 {
                return Err(CliError::VerifyFailed {
                    failed,
                    total: reports.len(),
                });
            }
        }
    }
    Ok(())
}

fn simulate(mut scenario: Scenario, args: RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(seed) = args.seed {
        scenario.simulation.seed = seed;
    }
    if let Some(paths) = args.paths {
        if paths == 0 {
            return Err(CliError::Usage("--paths must be at least 1".to_string()));
        }
        scenario.simulation.num_paths = paths;
    }
    let workers = resolve_workers(args.workers)?;
    let results = run_scenario(&scenario, workers)?;
    for path in emit(&scenario, &results, args.format, &args.out)? {
        writeln!(out, "{}", path.display()).map_err(|e| CliError::io("<stdout>", e))?;
    }
    Ok(())
}

fn solve_report(scenario: &Scenario, json: bool) -> Result<String, CliError> {
    let grid = scenario.grid()?;
    let mut tables = Vec::with_capacity(grid.len());
    for point in &grid {
        let sol = impact_game_core::solve_equilibrium(&point.params, &point.env, &point.traders)
            .map_err(|e| CliError::core(point.context(&scenario.name), e))?;
        tables.push((point, sol));
    }
    if json {
        let doc: Vec<_> = tables
            .iter()
            .map(|(p, sol)| serde_json::json!({ "label": p.label(), "policy": sol.policy }))
            .collect();
        let mut s = serde_json::to_string_pretty(&doc).expect("tables serialise");
        s.push('\n');
        return Ok(s);
    }
    let mut s = String::new();
    for (point, sol) in &tables {
        s.push_str(&format!("# {}: {}\n", scenario.name, point.label()));
        s.push_str(&format!(
            "{:>3} {:>6} {:>14} {:>14} {:>14} {:>14} {:>14}\n",
            "t", "trader", "a", "b", "c", "d", "e"
        ));
        for (k, row) in sol.policy.iter().enumerate() {
            for (i, c) in row.iter().enumerate() {
                s.push_str(&format!(
                    "{:>3} {:>6} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}\n",
                    k + 1,
                    i + 1,
                    c.a,
                    c.b,
                    c.c,
                    c.d,
                    c.e
                ));
            }
        }
    }
    Ok(s)
}

/// Runs the tool and returns the process exit code, reporting errors on
/// standard error.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(argv, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
