//! Solving and simulating every grid point of a scenario.

use impact_game_core::{
    simulate_path, solve_equilibrium, summarize_paths, EnvParams, EquilibriumSolution, MarketParams,
    PathRecord, Result as CoreResult, SimulationConfig, SimulationSummary, TraderSpec,
};
use rayon::prelude::*;

use crate::error::CliError;
use crate::scenario::{GridPoint, Scenario};

/// Environment variable that, when set, takes precedence over `--workers`.
pub const WORKERS_ENV: &str = "IMPACT_GAME_WORKERS";

#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: GridPoint,
    pub solution: EquilibriumSolution,
    pub summary: SimulationSummary,
}

/// Worker count from the environment, falling back to `flag`.
pub fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{WORKERS_ENV} must be a positive integer (got `{v}`)"))),
        },
        Err(_) => Ok(flag),
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// All paths of one game, simulated in parallel and returned in index order.
pub fn simulate_parallel(
    solution: &EquilibriumSolution,
    params: &MarketParams,
    env: &EnvParams,
    traders: &[TraderSpec; 2],
    config: &SimulationConfig,
) -> CoreResult<Vec<PathRecord>> {
    (0..config.num_paths)
        .into_par_iter()
        .map(|k| simulate_path(solution, params, env, traders, config, k))
        .collect()
}

pub fn run_point(scenario: &str, point: &GridPoint) -> Result<PointResult, CliError> {
    let context = || point.context(scenario);
    let solution =
        solve_equilibrium(&point.params, &point.env, &point.traders).map_err(|e| CliError::core(context(), e))?;
    let paths = simulate_parallel(&solution, &point.params, &point.env, &point.traders, &point.simulation)
        .map_err(|e| CliError::core(context(), e))?;
    let summary = summarize_paths(&paths).map_err(|e| CliError::core(context(), e))?;
    Ok(PointResult {
        point: point.clone(),
        solution,
        summary,
    })
}

/// Solves and simulates every grid point. The output does not depend on the
/// number of workers.
pub fn run_scenario(scenario: &Scenario, workers: Option<usize>) -> Result<Vec<PointResult>, CliError> {
    let grid = scenario.grid()?;
    with_workers(workers, || {
        grid.par_iter()
            .map(|p| run_point(&scenario.name, p))
            .collect()
    })
}
