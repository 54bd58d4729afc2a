//! Forward Monte Carlo of an execution policy and box-plot summaries.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market::{step_state, EnvParams, MarketParams, MarketState, TraderSpec};
use crate::rng::draw_shocks;
use crate::solver::EquilibriumSolution;

/// Largest terminal inventory accepted as "fully executed".
const LEAK_TOLERANCE: f64 = 1e-9;

/// A rule mapping the time-`t` state to both traders' volumes.
pub trait ExecutionPolicy {
    fn horizon(&self) -> usize;
    fn action(&self, t: usize, state: &MarketState) -> Result<[f64; 2]>;
}

impl ExecutionPolicy for EquilibriumSolution {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn action(&self, t: usize, state: &MarketState) -> Result<[f64; 2]> {
        self.policy_action(t, state)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationConfig {
    pub num_paths: usize,
    pub seed: u64,
    /// Quoted price at the first decision epoch.
    pub initial_price: f64,
    /// Parallelism hint for callers that fan paths out; results never depend
    /// on it.
    pub max_workers: Option<usize>,
    /// Return every [`PathRecord`] alongside the summary.
    pub keep_paths: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            num_paths: 10_000,
            seed: 20_240_001,
            initial_price: 100.0,
            max_workers: None,
            keep_paths: false,
        }
    }
}

/// One simulated trajectory. `states[k]` is the state at `t = k + 1`
/// (so the last entry is the terminal state at `T + 1`) and `volumes[k]` the
/// volumes executed at `t = k + 1`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathRecord {
    pub volumes: Vec<[f64; 2]>,
    pub states: Vec<MarketState>,
}

impl PathRecord {
    pub fn terminal(&self) -> &MarketState {
        self.states.last().expect("a path has at least its initial state")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`; zero for one sample).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationSummary {
    pub num_paths: usize,
    /// `volumes[t - 1][i]`: statistics of trader `i`'s volume at `t`.
    pub volumes: Vec<[BoxStats; 2]>,
    /// Path average of `|q^1_t| + |q^2_t|`.
    pub total_volume: Vec<f64>,
    pub terminal_wealth: [MeanStd; 2],
}

impl SimulationSummary {
    pub fn horizon(&self) -> usize {
        self.volumes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub summary: SimulationSummary,
    pub paths: Option<Vec<PathRecord>>,
}

/// Simulates path number `path` under `policy`.
pub fn simulate_path<P: ExecutionPolicy + ?Sized>(
    policy: &P,
    params: &MarketParams,
    env: &EnvParams,
    traders: &[TraderSpec; 2],
    config: &SimulationConfig,
    path: usize,
) -> Result<PathRecord> {
    let horizon = params.horizon;
    if policy.horizon() != horizon {
        return Err(Error::LengthMismatch {
            field: "policy",
            expected: horizon,
            found: policy.horizon(),
        });
    }
    let mut state = MarketState::initial(traders, config.initial_price);
    let mut volumes = Vec::with_capacity(horizon);
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(state);
    for t in 1..=horizon {
        let q = policy.action(t, &state)?;
        let shocks = draw_shocks(config.seed, path as u64, t, env);
        state = step_state(&state, q, shocks, params, env)?;
        volumes.push(q);
        states.push(state);
    }
    for (i, residual) in state.remaining.into_iter().enumerate() {
        if !(residual.abs() <= LEAK_TOLERANCE) {
            return Err(Error::InventoryLeak {
                path,
                trader: i + 1,
                residual,
            });
        }
    }
    Ok(PathRecord { volumes, states })
}

/// Simulates `config.num_paths` paths in index order and summarises them.
pub fn simulate_paths<P: ExecutionPolicy + ?Sized>(
    policy: &P,
    params: &MarketParams,
    env: &EnvParams,
    traders: &[TraderSpec; 2],
    config: &SimulationConfig,
) -> Result<SimulationOutput> {
    let paths = (0..config.num_paths)
        .map(|k| simulate_path(policy, params, env, traders, config, k))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_paths(&paths)?;
    Ok(SimulationOutput {
        summary,
        paths: config.keep_paths.then_some(paths),
    })
}

/// Per-time statistics of a set of paths. The reduction runs over the paths
/// in slice order, so the result depends only on the slice contents.
pub fn summarize_paths(paths: &[PathRecord]) -> Result<SimulationSummary> {
    let first = paths.first().ok_or(Error::EmptySample)?;
    let horizon = first.volumes.len();
    let n = paths.len();
    let mut column = Vec::with_capacity(n);
    let mut volumes = Vec::with_capacity(horizon);
    let mut total_volume = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut row = [None, None];
        for (i, slot) in row.iter_mut().enumerate() {
            column.clear();
            column.extend(paths.iter().map(|p| p.volumes[t][i]));
            *slot = Some(summarize(&column)?);
        }
        volumes.push(row.map(|s| s.expect("filled above")));
        column.clear();
        column.extend(paths.iter().map(|p| p.volumes[t][0].abs() + p.volumes[t][1].abs()));
        total_volume.push(shifted_mean(&column));
    }
    let terminal_wealth = [0, 1].map(|i| {
        column.clear();
        column.extend(paths.iter().map(|p| p.terminal().wealth[i]));
        mean_std(&column)
    });
    Ok(SimulationSummary {
        num_paths: n,
        volumes,
        total_volume,
        terminal_wealth,
    })
}

/// Mean computed around the first sample, exact for constant samples.
fn shifted_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    let s: f64 = xs.iter().map(|x| x - x0).sum();
    x0 + s / xs.len() as f64
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let mean = shifted_mean(xs);
    let n = xs.len();
    let std = if n < 2 {
        0.0
    } else {
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        libm::sqrt(ss / (n - 1) as f64)
    };
    MeanStd { mean, std }
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let w = h - lo as f64;
    if w == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + w * (sorted[lo + 1] - sorted[lo])
    }
}

/// Box-plot statistics: interpolated quartiles and whiskers at the most
/// extreme samples within 1.5 IQR of the box.
pub fn summarize(samples: &[f64]) -> Result<BoxStats> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let whisker_lo = sorted.iter().copied().find(|&x| x >= lo_fence).unwrap_or(q1);
    let whisker_hi = sorted.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(q3);
    Ok(BoxStats {
        mean: shifted_mean(samples),
        median,
        q1,
        q3,
        whisker_lo: whisker_lo.min(q1),
        whisker_hi: whisker_hi.max(q3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_equilibrium;

    #[test]
    fn singleton() {
        let s = summarize(&[5.0]).unwrap();
        for v in [s.mean, s.median, s.q1, s.q3, s.whisker_lo, s.whisker_hi] {
            assert_eq!(v, 5.0);
        }
    }

    #[test]
    fn outlier_is_outside_whisker() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!(s.whisker_hi, 4.0);
        assert_eq!(s.whisker_lo, 1.0);
        assert_eq!(s.mean, 22.0);
    }

    #[test]
    fn symmetric_sample() {
        let s = summarize(&[-3.0, -1.5, 0.0, 1.5, 3.0]).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.median, 0.0);
    }

    #[test]
    fn interpolated_quartiles() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
    }

    #[test]
    fn empty_sample() {
        assert_eq!(summarize(&[]), Err(Error::EmptySample));
        assert_eq!(summarize_paths(&[]), Err(Error::EmptySample));
    }

    #[test]
    fn constant_sample_has_exact_mean() {
        let xs = alloc::vec![0.1f64; 10_000];
        assert_eq!(shifted_mean(&xs), 0.1);
        assert_eq!(mean_std(&xs).std, 0.0);
    }

    #[test]
    fn path_conserves_inventory() {
        let p = MarketParams::benchmark(10);
        let e = EnvParams::benchmark(10);
        let tr = [TraderSpec::new(1e5, 0.001), TraderSpec::new(-3e4, 0.002)];
        let sol = solve_equilibrium(&p, &e, &tr).unwrap();
        let cfg = SimulationConfig::default();
        let rec = simulate_path(&sol, &p, &e, &tr, &cfg, 17).unwrap();
        assert_eq!(rec.volumes.len(), 10);
        assert_eq!(rec.states.len(), 11);
        for i in 0..2 {
            let total: f64 = rec.volumes.iter().map(|v| v[i]).sum();
            assert!((total - tr[i].initial_inventory).abs() < 1e-9 * 1e5);
        }
        assert_eq!(rec, simulate_path(&sol, &p, &e, &tr, &cfg, 17).unwrap());
    }

    struct Leaky;

    impl ExecutionPolicy for Leaky {
        fn horizon(&self) -> usize {
            3
        }
        fn action(&self, _t: usize, _s: &MarketState) -> Result<[f64; 2]> {
            Ok([1.0, 0.0])
        }
    }

    #[test]
    fn leak_is_reported() {
        let p = MarketParams::benchmark(3);
        let e = EnvParams::benchmark(3);
        let tr = [TraderSpec::new(10.0, 0.001), TraderSpec::new(0.0, 0.001)];
        let err = simulate_path(&Leaky, &p, &e, &tr, &SimulationConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::InventoryLeak { path: 0, trader: 1, .. }));
    }
}
