//! Self-checks of the solver against independent references and against the
//! qualitative patterns expected of the presets.

use impact_game_core::{
    mc_check_quad_exp, solve_equilibrium, solve_single_trader, BivariateGaussian, EnvParams,
    EquilibriumSolution, MarketParams, MarketState, Oracle, PathRecord, SimulationConfig, TraderSpec,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::emit::csv_string;
use crate::presets::{self, preset};
use crate::runner::{run_point, run_scenario, simulate_parallel};

const SEED: u64 = 20_240_001;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// `Ok` carries a summary of what was measured, `Err` what went wrong.
type Outcome = Result<String, String>;

pub struct Check {
    pub id: &'static str,
    pub name: &'static str,
    run: fn() -> Outcome,
}

impl Check {
    pub fn run(&self) -> CheckReport {
        let outcome = (self.run)();
        CheckReport {
            id: self.id,
            name: self.name,
            passed: outcome.is_ok(),
            detail: outcome.unwrap_or_else(|e| e),
        }
    }
}

pub const CHECKS: &[Check] = &[
    Check { id: "A1", name: "gaussian kernel against Monte Carlo", run: gaussian_kernel },
    Check { id: "A2", name: "closed form against quadrature fixed point", run: small_game_equivalence },
    Check { id: "A3", name: "one-stage deviations do not pay", run: one_stage_deviation },
    Check { id: "A4", name: "every path ends flat", run: terminal_liquidation },
    Check { id: "A5", name: "deterministic environment gives deterministic volumes", run: deterministic_environment },
    Check { id: "A6", name: "no autoregression means no environment loading", run: no_environment_loading },
    Check { id: "A7", name: "very risk-averse idle opponent", run: idle_opponent },
    Check { id: "A8", name: "front-loading grows with environment volatility", run: front_loading },
    Check { id: "A9", name: "fast resilience matches the permanent-impact model", run: fast_resilience },
    Check { id: "A10", name: "U-shaped total volume and round trips under a trend", run: u_shaped_volume },
    Check { id: "A11", name: "exchanging traders", run: symmetry },
    Check { id: "A12", name: "preset output is independent of worker count", run: determinism },
];

pub fn run_all() -> Vec<CheckReport> {
    CHECKS.iter().map(Check::run).collect()
}

fn fail(e: impl ToString) -> String {
    e.to_string()
}

fn benchmark_game(horizon: usize, q: [f64; 2]) -> (MarketParams, EnvParams, [TraderSpec; 2]) {
    (
        MarketParams::benchmark(horizon),
        EnvParams::benchmark(horizon),
        [TraderSpec::new(q[0], 0.001), TraderSpec::new(q[1], 0.001)],
    )
}

fn random_state(rng: &mut StdRng, t: usize) -> MarketState {
    MarketState {
        time: t,
        wealth: [0.0; 2],
        price: 100.0,
        remaining: [rng.random_range(-2e5..2e5), rng.random_range(-2e5..2e5)],
        residual: rng.random_range(-50.0..50.0),
        env_prev: rng.random_range(-0.05..0.05),
    }
}

fn config(num_paths: usize) -> SimulationConfig {
    SimulationConfig {
        num_paths,
        seed: SEED,
        ..SimulationConfig::default()
    }
}

fn solve_and_simulate(
    params: &MarketParams,
    env: &EnvParams,
    traders: &[TraderSpec; 2],
    num_paths: usize,
) -> Result<(EquilibriumSolution, Vec<PathRecord>), String> {
    let sol = solve_equilibrium(params, env, traders).map_err(fail)?;
    let paths = simulate_parallel(&sol, params, env, traders, &config(num_paths)).map_err(fail)?;
    Ok((sol, paths))
}

fn gaussian_kernel() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut cases = Vec::with_capacity(50);
    for _ in 0..50 {
        let sx: f64 = rng.random_range(0.1..1.5);
        let g = BivariateGaussian::new(
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            [sx, rng.random_range(0.1..1.5)],
            rng.random_range(-0.9..0.9),
        )
        .map_err(fail)?;
        // 1 - 4 a sx^2 >= 0.4 keeps the integrand's variance finite
        let a = rng.random_range(-1.0..0.15) / (sx * sx);
        cases.push((g, a, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    }
    let checks = cases
        .par_iter()
        .enumerate()
        .map(|(k, (g, a, b, c))| mc_check_quad_exp(g, *a, *b, *c, 1_000_000, SEED + k as u64))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    let z = checks
        .iter()
        .map(|c| (c.mc_estimate - c.closed_form).abs() / c.std_error)
        .fold(0.0, f64::max);
    let rel = checks.iter().map(|c| c.relative_error()).fold(0.0, f64::max);
    let detail = format!("50 cases, 1e6 draws each: max |z| = {z:.2}, max relative error = {rel:.2e}");
    if checks.iter().all(|c| c.within(3.0)) && rel < 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn small_game_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED + 2);
    let draws: Vec<(usize, usize, [f64; 2], MarketState)> = (0..100)
        .map(|k| {
            let horizon = 2 + k % 2;
            let t = rng.random_range(1..horizon);
            let q = [rng.random_range(-2e5..2e5), rng.random_range(-2e5..2e5)];
            (horizon, t, q, random_state(&mut rng, t))
        })
        .collect();
    let errors = draws
        .par_iter()
        .map(|(horizon, t, q, state)| {
            let (p, e, tr) = benchmark_game(*horizon, *q);
            let sol = solve_equilibrium(&p, &e, &tr)?;
            let fp = Oracle::new(&p, &e, &tr, 32).fixed_point_equilibrium(&sol.value[*t], state)?;
            let cf = sol.policy_action(*t, state)?;
            Ok((0..2).map(|i| (fp[i] - cf[i]).abs() / (1.0 + cf[i].abs())).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>, impact_game_core::Error>>()
        .map_err(fail)?;
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    let detail = format!("100 draws, T in {{2, 3}}, order 32: max |dq| / (1 + |q|) = {worst:.2e}");
    if worst < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn one_stage_deviation() -> Outcome {
    let (p, e, tr) = benchmark_game(10, [1e5, 1e5]);
    let sol = solve_equilibrium(&p, &e, &tr).map_err(fail)?;
    let oracle = Oracle::new(&p, &e, &tr, 32);
    let mut rng = StdRng::seed_from_u64(SEED + 3);
    let states: Vec<MarketState> = (1..=10)
        .flat_map(|t| (0..100).map(move |_| t))
        .map(|t| random_state(&mut rng, t))
        .collect();
    let violations = states
        .par_iter()
        .map(|s| -> Result<usize, impact_game_core::Error> {
            let t = s.time;
            let q = sol.policy_action(t, s)?;
            let mut bad = 0;
            for i in 0..2 {
                let d = 1e-2 * (q[i].abs() + 1.0);
                let (j, qi) = (q[1 - i], q[i]);
                let closed = |x: f64| sol.stage_objective(t, s, i, x, j);
                let best = closed(qi)?;
                if !(closed(qi + d)? < best && closed(qi - d)? < best) {
                    bad += 1;
                }
                // at T a deviation leaves inventory on the book and is
                // infeasible under either objective
                if t < 10 {
                    let quad = |x: f64| oracle.objective(&sol.value[t], s, i, x, j);
                    let best = quad(qi)?;
                    if !(quad(qi + d)? < best && quad(qi - d)? < best) {
                        bad += 1;
                    }
                }
            }
            Ok(bad)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    let bad: usize = violations.iter().sum();
    let detail = format!("1000 states x 2 traders, closed form and quadrature: {bad} profitable deviations");
    if bad == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn terminal_liquidation() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for name in ["benchmark", "fig4", "fig5", "fig6", "fig8", "fig12"] {
        let scenario = preset(name).ok_or("missing preset")?;
        for point in scenario.grid().map_err(fail)? {
            let (_, paths) = solve_and_simulate(&point.params, &point.env, &point.traders, 10_000)?;
            for path in &paths {
                for r in path.terminal().remaining {
                    worst = worst.max(r.abs());
                }
            }
            count += paths.len();
        }
    }
    let detail = format!("{count} paths: max |terminal inventory| = {worst:.2e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn deterministic_environment() -> Outcome {
    let p = MarketParams::benchmark(10);
    let e = EnvParams::constant(10, 0.3, -0.5, 0.0, 0.0, 0.0);
    let tr = [TraderSpec::new(1e5, 0.001), TraderSpec::new(-4e4, 0.002)];
    let (_, paths) = solve_and_simulate(&p, &e, &tr, 10_000)?;
    let spread = paths
        .iter()
        .flat_map(|path| path.volumes.iter().zip(&paths[0].volumes))
        .flat_map(|(u, v)| [(u[0] - v[0]).abs(), (u[1] - v[1]).abs()])
        .fold(0.0, f64::max);
    let detail = format!("10000 paths: max deviation from path 1 = {spread:e}");
    if spread == 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn no_environment_loading() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED + 6);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let horizon = rng.random_range(2..15);
        let p = MarketParams::constant(horizon, rng.random_range(2e-4..5e-3), 0.5, 0.5, rng.random_range(0.0..2.0));
        let e = EnvParams::constant(
            horizon,
            rng.random_range(-1.0..1.0),
            0.0,
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..0.1),
            rng.random_range(-0.8..0.8),
        );
        let tr = [
            TraderSpec::new(rng.random_range(-2e5..2e5), rng.random_range(1e-4..1e-2)),
            TraderSpec::new(rng.random_range(-2e5..2e5), rng.random_range(1e-4..1e-2)),
        ];
        let sol = solve_equilibrium(&p, &e, &tr).map_err(fail)?;
        for row in &sol.policy {
            for r in row {
                worst = worst.max(r.e.abs());
            }
        }
    }
    let detail = format!("50 random games with b_env = 0: max |e| = {worst:e}");
    if worst < 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn idle_opponent() -> Outcome {
    let p = MarketParams::benchmark(10);
    let e = EnvParams::benchmark(10);
    let tr = [TraderSpec::new(2e5, 0.001), TraderSpec::new(0.0, 1000.0)];
    let (sol, paths) = solve_and_simulate(&p, &e, &tr, 10_000)?;
    let single = solve_single_trader(&p, &e, &tr[0]).map_err(fail)?;
    let n = paths.len() as f64;
    let mut opp = 0.0f64;
    for t in 0..9 {
        let mean_abs = paths.iter().map(|r| r.volumes[t][1].abs()).sum::<f64>() / n;
        opp = opp.max(mean_abs);
    }
    // the opponent-inventory coefficient c has no counterpart when the
    // opponent holds nothing, so only a, b, d and e are compared
    let mut worst = 0.0f64;
    let mut ok = true;
    for (row, y) in sol.policy.iter().zip(&single) {
        let x = row[0];
        for (u, v) in [(x.a, y.a), (x.b, y.b), (x.d, y.d), (x.e, y.e)] {
            let gap = (u - v).abs();
            ok &= gap <= 0.01 * v.abs() + 1e-12;
            if v != 0.0 {
                worst = worst.max(gap / v.abs());
            }
        }
    }
    let detail = format!("max_t<T mean |q_2| = {opp:.3} (limit 200); max relative policy gap = {worst:.2e}");
    if ok && opp < 1e-3 * 2e5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn front_loading() -> Outcome {
    let scenario = preset("fig2").ok_or("missing preset")?;
    let results = run_scenario(&scenario, None).map_err(fail)?;
    let first: Vec<f64> = results.iter().map(|r| r.summary.volumes[0][0].mean).collect();
    let detail = format!("mean q_1 at sigma_env = 0.01, 1, 10: {first:.1?}");
    if first.windows(2).all(|w| w[0] < w[1]) && first[2] > 1e5 / 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fast_resilience() -> Outcome {
    let mut p = MarketParams::benchmark(10);
    p.rho = 50.0;
    let e = EnvParams::benchmark(10);
    let tr = [TraderSpec::new(1e5, 0.001), TraderSpec::new(1e5, 0.001)];
    let (_, a) = solve_and_simulate(&p, &e, &tr, 10_000)?;
    let mut p0 = p.clone();
    p0.alpha = vec![0.0; 10];
    let (_, b) = solve_and_simulate(&p0, &e, &tr, 10_000)?;
    let residual = a
        .iter()
        .flat_map(|r| r.states.iter().map(|s| s.residual.abs()))
        .fold(0.0, f64::max);
    let mut gap = 0.0f64;
    for (x, y) in a.iter().zip(&b) {
        for (u, v) in x.volumes.iter().zip(&y.volumes) {
            for i in 0..2 {
                gap = gap.max((u[i] - v[i]).abs() / v[i].abs().max(1.0));
            }
        }
    }
    let detail = format!("max |R_t| = {residual:.2e}; max relative gap to alpha = 0 = {gap:.2e}");
    if residual < 1e-10 && gap <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn u_shaped_volume() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["fig6", "fig8"] {
        let scenario = preset(name).ok_or("missing preset")?;
        let point = &scenario.grid().map_err(fail)?[0];
        let r = run_point(&scenario.name, point).map_err(fail)?;
        let tv = &r.summary.total_volume;
        let min = tv.iter().cloned().fold(f64::INFINITY, f64::min);
        let (first, last) = (tv[0], tv[tv.len() - 1]);
        ok &= first.min(last) > min;
        let q1 = r.summary.volumes[0][0].mean;
        if name == "fig6" {
            ok &= q1 < 0.0;
        }
        notes.push(format!("{name}: TV_1 = {first:.0}, min TV = {min:.0}, TV_T = {last:.0}, mean q_1 = {q1:.0}"));
    }
    let detail = notes.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn symmetry() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED + 11);
    let mut games = vec![benchmark_game(10, [1e5, -1e5])];
    for _ in 0..20 {
        let horizon = rng.random_range(2..12);
        let (alpha, rho): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..2.0));
        let beta = rng.random_range(0.0..0.95) * (1.0 - alpha * (-rho).exp());
        games.push((
            MarketParams::constant(horizon, 0.001, alpha, beta, rho),
            EnvParams::constant(
                horizon,
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..2.0),
                0.02,
                rng.random_range(-0.5..0.5),
            ),
            [
                TraderSpec::new(rng.random_range(-2e5..2e5), rng.random_range(1e-4..1e-2)),
                TraderSpec::new(rng.random_range(-2e5..2e5), rng.random_range(1e-4..1e-2)),
            ],
        ));
    }
    for (p, e, tr) in &games {
        let a = solve_equilibrium(p, e, tr).map_err(fail)?;
        let b = solve_equilibrium(p, e, &[tr[1], tr[0]]).map_err(fail)?;
        let tables_swap = (0..p.horizon).all(|t| swapped(&a.policy[t], &b.policy[t]) && swapped(&a.value[t], &b.value[t]))
            && a.stage.iter().zip(&b.stage).all(|(x, y)| swapped(x, y));
        if !tables_swap {
            return Err(format!("tables do not swap exactly for {tr:?}"));
        }
    }
    let p = MarketParams::benchmark(10);
    let e = EnvParams::constant(10, 0.0, -0.5, 1.0, 0.02, 0.0);
    let tr = [TraderSpec::new(1e5, 0.001); 2];
    let r = run_point(
        "symmetric",
        &crate::scenario::GridPoint {
            index: 0,
            overrides: Vec::new(),
            params: p,
            env: e,
            traders: tr,
            simulation: config(10_000),
        },
    )
    .map_err(fail)?;
    let equal = r.summary.volumes.iter().all(|row| row[0] == row[1])
        && r.summary.terminal_wealth[0] == r.summary.terminal_wealth[1];
    let detail = format!("{} games swap exactly; symmetric summaries equal: {equal}", games.len());
    if equal {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn swapped<T: PartialEq>(x: &[T; 2], y: &[T; 2]) -> bool {
    x[0] == y[1] && x[1] == y[0]
}

fn determinism() -> Outcome {
    let mut files = 0;
    for name in presets::names() {
        let scenario = preset(name).ok_or("missing preset")?;
        let one = run_scenario(&scenario, Some(1)).map_err(fail)?;
        let many = run_scenario(&scenario, Some(4)).map_err(fail)?;
        for (x, y) in one.iter().zip(&many) {
            if csv_string(&x.summary) != csv_string(&y.summary) {
                return Err(format!("{name}: grid point {} differs between 1 and 4 workers", x.point.index + 1));
            }
            files += 1;
        }
    }
    Ok(format!("{files} CSV files byte-identical with 1 and 4 workers"))
}
