//! Market parameters, the environment law and the exact one-period state
//! transition.
//!
//! Time is 1-based throughout: decisions are taken at `t = 1..=T` and the
//! terminal state lives at `t = T + 1`. Per-period parameter vectors have
//! length `T` and are indexed with `t - 1` internally.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Price impact and resilience parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarketParams {
    /// Number of trading periods `T`.
    pub horizon: usize,
    /// Instantaneous impact per unit volume, `lambda_t > 0`.
    pub lambda: Vec<f64>,
    /// Temporary-impact fraction `alpha_t` in `[0, 1]`.
    pub alpha: Vec<f64>,
    /// Permanent-impact fraction `beta_t` in `[0, 1]`.
    pub beta: Vec<f64>,
    /// Resilience speed `rho >= 0`.
    pub rho: f64,
}

impl MarketParams {
    /// Time-homogeneous parameters broadcast over `horizon` periods.
    pub fn constant(horizon: usize, lambda: f64, alpha: f64, beta: f64, rho: f64) -> Self {
        Self {
            horizon,
            lambda: vec![lambda; horizon],
            alpha: vec![alpha; horizon],
            beta: vec![beta; horizon],
            rho,
        }
    }

    /// Benchmark values: `lambda = 0.001`, `alpha = beta = 0.5`, `rho = 0.1`.
    pub fn benchmark(horizon: usize) -> Self {
        Self::constant(horizon, 0.001, 0.5, 0.5, 0.1)
    }

    pub fn lambda(&self, t: usize) -> f64 {
        self.lambda[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    /// One-period decay factor `exp(-rho)`.
    pub fn decay(&self) -> f64 {
        decay_kernel(1.0, self.rho)
    }

    /// Share of the period-`t` impact still in the price one period later,
    /// `alpha_t exp(-rho) + beta_t`.
    pub fn carried_impact(&self, t: usize) -> f64 {
        self.alpha(t) * self.decay() + self.beta(t)
    }
}

/// Law of the Markovian environment `I_t` and of the public-news shock
/// `eps_t`.
///
/// `I_t = a_t - b_t I_{t-1} + sigma^I_t omega_t` with `I_0 = 0`, and
/// `(I_t, eps_t)` given `I_{t-1}` is jointly Gaussian with correlation
/// `rho_env_eps`.
///
/// Note the minus sign in front of `b_t`: `b = -1` is a random walk and
/// `b in (-1, 1)` mean-reverts at speed `1 + b`. Some of the experiment
/// write-ups use the opposite sign when describing the mean path; presets in
/// this workspace always use the convention above.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvParams {
    pub a_env: Vec<f64>,
    pub b_env: Vec<f64>,
    pub sigma_env: Vec<f64>,
    pub sigma_eps: Vec<f64>,
    pub rho_env_eps: f64,
    /// Mean of `eps_t`. Must be zero; kept for completeness of the law.
    pub mu_eps: Vec<f64>,
}

impl EnvParams {
    pub fn constant(
        horizon: usize,
        a_env: f64,
        b_env: f64,
        sigma_env: f64,
        sigma_eps: f64,
        rho_env_eps: f64,
    ) -> Self {
        Self {
            a_env: vec![a_env; horizon],
            b_env: vec![b_env; horizon],
            sigma_env: vec![sigma_env; horizon],
            sigma_eps: vec![sigma_eps; horizon],
            rho_env_eps,
            mu_eps: vec![0.0; horizon],
        }
    }

    /// Benchmark values: `sigma^eps = 0.02`, `sigma^I = 0.01`, no drift, no
    /// autoregression, independent shocks.
    pub fn benchmark(horizon: usize) -> Self {
        Self::constant(horizon, 0.0, 0.0, 0.01, 0.02, 0.0)
    }

    pub fn a_env(&self, t: usize) -> f64 {
        self.a_env[t - 1]
    }

    pub fn b_env(&self, t: usize) -> f64 {
        self.b_env[t - 1]
    }

    pub fn sigma_env(&self, t: usize) -> f64 {
        self.sigma_env[t - 1]
    }

    pub fn sigma_eps(&self, t: usize) -> f64 {
        self.sigma_eps[t - 1]
    }

    /// Conditional mean of `I_t` given `I_{t-1}`.
    pub fn env_mean(&self, t: usize, env_prev: f64) -> f64 {
        self.a_env(t) - self.b_env(t) * env_prev
    }
}

/// Type of one large trader.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraderSpec {
    /// Shares to acquire by `T + 1`; negative for a sell program.
    pub initial_inventory: f64,
    /// CARA coefficient `gamma > 0`.
    pub risk_aversion: f64,
    pub initial_wealth: f64,
}

impl TraderSpec {
    pub fn new(initial_inventory: f64, risk_aversion: f64) -> Self {
        Self {
            initial_inventory,
            risk_aversion,
            initial_wealth: 0.0,
        }
    }
}

/// The state `(W^1, W^2, P, Qbar^1, Qbar^2, R, I_{t-1})` at decision time
/// `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarketState {
    pub time: usize,
    pub wealth: [f64; 2],
    pub price: f64,
    pub remaining: [f64; 2],
    pub residual: f64,
    pub env_prev: f64,
}

impl MarketState {
    /// State at the first decision epoch: no residual impact, `I_0 = 0`.
    pub fn initial(traders: &[TraderSpec; 2], price: f64) -> Self {
        Self {
            time: 1,
            wealth: [traders[0].initial_wealth, traders[1].initial_wealth],
            price,
            remaining: [traders[0].initial_inventory, traders[1].initial_inventory],
            residual: 0.0,
            env_prev: 0.0,
        }
    }

    /// The same state seen with the two traders relabelled.
    pub fn swapped(&self) -> Self {
        Self {
            wealth: [self.wealth[1], self.wealth[0]],
            remaining: [self.remaining[1], self.remaining[0]],
            ..*self
        }
    }
}

/// Standardised environment innovation `omega_t` and news shock `eps_t`
/// realised in the `t -> t + 1` transition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Shocks {
    pub omega: f64,
    pub eps: f64,
}

/// A validated configuration: market, environment and both traders.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Game {
    params: MarketParams,
    env: EnvParams,
    traders: [TraderSpec; 2],
}

impl Game {
    pub fn new(params: MarketParams, env: EnvParams, traders: [TraderSpec; 2]) -> Result<Self> {
        validate(&params, &env, &traders)?;
        Ok(Self {
            params,
            env,
            traders,
        })
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn env(&self) -> &EnvParams {
        &self.env
    }

    pub fn traders(&self) -> &[TraderSpec; 2] {
        &self.traders
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// The same game with the traders exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            params: self.params.clone(),
            env: self.env.clone(),
            traders: [self.traders[1], self.traders[0]],
        }
    }

    pub fn into_parts(self) -> (MarketParams, EnvParams, [TraderSpec; 2]) {
        (self.params, self.env, self.traders)
    }
}

/// Checks every parameter invariant; returns `Ok(())` when the configuration
/// is admissible.
pub fn validate(params: &MarketParams, env: &EnvParams, traders: &[TraderSpec; 2]) -> Result<()> {
    let horizon = params.horizon;
    if horizon == 0 {
        return Err(Error::NonPositive {
            field: "horizon",
            value: 0.0,
        });
    }
    let lengths: [(&'static str, usize); 9] = [
        ("lambda", params.lambda.len()),
        ("alpha", params.alpha.len()),
        ("beta", params.beta.len()),
        ("a_env", env.a_env.len()),
        ("b_env", env.b_env.len()),
        ("sigma_env", env.sigma_env.len()),
        ("sigma_eps", env.sigma_eps.len()),
        ("mu_eps", env.mu_eps.len()),
        ("horizon", horizon),
    ];
    for (field, found) in lengths {
        if found != horizon {
            return Err(Error::LengthMismatch {
                field,
                expected: horizon,
                found,
            });
        }
    }

    if !(params.rho >= 0.0) || !params.rho.is_finite() {
        return Err(Error::OutOfRange {
            field: "rho",
            reason: "resilience speed must be finite and >= 0",
        });
    }
    for &lambda in &params.lambda {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::NonPositive {
                field: "lambda",
                value: lambda,
            });
        }
    }
    for (field, values) in [("alpha", &params.alpha), ("beta", &params.beta)] {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange {
                field,
                reason: "must lie in [0, 1]",
            });
        }
    }
    for t in 1..=horizon {
        let value = params.carried_impact(t);
        if value >= 1.0 {
            return Err(Error::Assumption32Violated { t, value });
        }
    }

    for (field, values) in [("sigma_env", &env.sigma_env), ("sigma_eps", &env.sigma_eps)] {
        for &v in values.iter() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NonPositive { field, value: v });
            }
        }
    }
    for (field, values) in [("a_env", &env.a_env), ("b_env", &env.b_env)] {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange {
                field,
                reason: "must be finite",
            });
        }
    }
    if !(env.rho_env_eps > -1.0 && env.rho_env_eps < 1.0) {
        return Err(Error::OutOfRange {
            field: "rho_env_eps",
            reason: "correlation must lie strictly inside (-1, 1)",
        });
    }
    if env.mu_eps.iter().any(|&m| m != 0.0) {
        return Err(Error::OutOfRange {
            field: "mu_eps",
            reason: "the news shock must have zero mean",
        });
    }

    for trader in traders {
        if !(trader.risk_aversion > 0.0) || !trader.risk_aversion.is_finite() {
            return Err(Error::NonPositive {
                field: "risk_aversion",
                value: trader.risk_aversion,
            });
        }
        if !trader.initial_inventory.is_finite() || !trader.initial_wealth.is_finite() {
            return Err(Error::OutOfRange {
                field: "trader",
                reason: "inventory and wealth must be finite",
            });
        }
    }
    Ok(())
}

/// Exponential decay kernel `exp(-rho t)`.
pub fn decay_kernel(t: f64, rho: f64) -> f64 {
    libm::exp(-rho * t)
}

/// Applies executed volumes `q` and shocks to `state` (at time `t`) and
/// returns the state at `t + 1`.
///
/// All components are updated jointly from the time-`t` values: the
/// environment draws `I_t`, the residual decays after absorbing the temporary
/// impact, the quoted price moves by the lost residual, the carried impact and
/// `I_t + eps_t`, and both traders pay `P_t + lambda_t (q^1 + q^2)` per share.
pub fn step_state(
    state: &MarketState,
    q: [f64; 2],
    shocks: Shocks,
    params: &MarketParams,
    env: &EnvParams,
) -> Result<MarketState> {
    let t = state.time;
    if t == 0 || t > params.horizon {
        return Err(Error::TimeOutOfRange {
            t,
            max: params.horizon,
        });
    }
    let lambda = params.lambda(t);
    let decay = params.decay();
    let total = q[0] + q[1];

    let env_now = env.env_mean(t, state.env_prev) + env.sigma_env(t) * shocks.omega;
    let residual = decay * (state.residual + params.alpha(t) * lambda * total);
    let price = state.price - (1.0 - decay) * state.residual
        + params.carried_impact(t) * lambda * total
        + env_now
        + shocks.eps;
    let exec_price = state.price + lambda * total;

    Ok(MarketState {
        time: t + 1,
        wealth: [
            state.wealth[0] - exec_price * q[0],
            state.wealth[1] - exec_price * q[1],
        ],
        price,
        remaining: [state.remaining[0] - q[0], state.remaining[1] - q[1]],
        residual,
        env_prev: env_now,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traders() -> [TraderSpec; 2] {
        [TraderSpec::new(1e5, 0.001), TraderSpec::new(1e5, 0.001)]
    }

    #[test]
    fn benchmark_is_admissible() {
        let p = MarketParams::benchmark(10);
        assert!(validate(&p, &EnvParams::benchmark(10), &traders()).is_ok());
        assert!((p.carried_impact(1) - 0.952_418_7).abs() < 1e-6);
    }

    #[test]
    fn full_impact_violates_assumption() {
        let p = MarketParams::constant(10, 0.001, 1.0, 1.0, 0.0);
        let err = validate(&p, &EnvParams::benchmark(10), &traders()).unwrap_err();
        assert!(matches!(err, Error::Assumption32Violated { t: 1, .. }));
    }

    #[test]
    fn equality_is_a_violation() {
        let p = MarketParams::constant(10, 0.001, 1.0, 0.0, 0.0);
        let err = validate(&p, &EnvParams::benchmark(10), &traders()).unwrap_err();
        assert!(matches!(err, Error::Assumption32Violated { value, .. } if value == 1.0));
    }

    #[test]
    fn rejects_bad_fields() {
        let env = EnvParams::benchmark(10);
        let mut p = MarketParams::benchmark(10);
        p.lambda[3] = 0.0;
        assert!(matches!(
            validate(&p, &env, &traders()),
            Err(Error::NonPositive { field: "lambda", .. })
        ));

        let mut p = MarketParams::benchmark(10);
        p.alpha.pop();
        assert!(matches!(
            validate(&p, &env, &traders()),
            Err(Error::LengthMismatch { field: "alpha", expected: 10, found: 9 })
        ));

        let p = MarketParams::benchmark(10);
        let mut e = env.clone();
        e.sigma_env[0] = -1.0;
        assert!(matches!(
            validate(&p, &e, &traders()),
            Err(Error::NonPositive { field: "sigma_env", .. })
        ));

        let mut e = env.clone();
        e.mu_eps[2] = 0.1;
        assert!(matches!(validate(&p, &e, &traders()), Err(Error::OutOfRange { field: "mu_eps", .. })));

        let mut e = env.clone();
        e.rho_env_eps = 1.0;
        assert!(validate(&p, &e, &traders()).is_err());

        let mut tr = traders();
        tr[1].risk_aversion = 0.0;
        assert!(matches!(
            validate(&p, &env, &tr),
            Err(Error::NonPositive { field: "risk_aversion", .. })
        ));
    }

    #[test]
    fn decay_kernel_values() {
        assert_eq!(decay_kernel(0.0, 3.7), 1.0);
        assert!((decay_kernel(1.0, 0.1) - 0.904_837_4).abs() < 1e-7);
        for t in [0.0, 0.5, 10.0, 1e6] {
            assert_eq!(decay_kernel(t, 0.0), 1.0);
        }
    }

    #[test]
    fn residual_after_symmetric_trade() {
        let p = MarketParams::benchmark(10);
        let env = EnvParams::benchmark(10);
        let s = MarketState::initial(&traders(), 100.0);
        let next = step_state(&s, [1e5, 1e5], Shocks::default(), &p, &env).unwrap();
        assert!((next.residual - 90.483_74).abs() < 1e-4);
        assert_eq!(next.time, 2);
    }

    #[test]
    fn wealth_pays_execution_price() {
        let p = MarketParams::benchmark(10);
        let env = EnvParams::benchmark(10);
        let s = MarketState::initial(&traders(), 100.0);
        let next = step_state(&s, [1e5, 1e5], Shocks::default(), &p, &env).unwrap();
        assert_eq!(next.wealth, [-3.0e7, -3.0e7]);
        assert_eq!(next.remaining, [0.0, 0.0]);
    }

    #[test]
    fn no_trade_only_releases_residual() {
        let p = MarketParams::benchmark(10);
        let env = EnvParams::benchmark(10);
        let mut s = MarketState::initial(&traders(), 100.0);
        s.residual = 12.0;
        let next = step_state(&s, [0.0, 0.0], Shocks::default(), &p, &env).unwrap();
        assert_eq!(next.price, 100.0 - (1.0 - p.decay()) * 12.0);
        assert_eq!(next.wealth, s.wealth);
        assert_eq!(next.remaining, s.remaining);
        assert_eq!(next.env_prev, 0.0);
    }

    #[test]
    fn step_past_horizon_fails() {
        let p = MarketParams::benchmark(2);
        let env = EnvParams::benchmark(2);
        let mut s = MarketState::initial(&traders(), 100.0);
        s.time = 3;
        assert_eq!(
            step_state(&s, [0.0, 0.0], Shocks::default(), &p, &env),
            Err(Error::TimeOutOfRange { t: 3, max: 2 })
        );
    }

    #[test]
    fn permanent_residual_is_a_plain_sum() {
        let horizon = 6;
        let p = MarketParams::constant(horizon, 0.002, 0.4, 0.3, 0.0);
        let env = EnvParams::benchmark(horizon);
        let mut s = MarketState::initial(&traders(), 50.0);
        let mut sum = 0.0;
        for t in 1..=horizon {
            let q = [1000.0 * t as f64, -300.0];
            sum += 0.4 * 0.002 * (q[0] + q[1]);
            s = step_state(&s, q, Shocks { omega: 0.3, eps: -0.1 }, &p, &env).unwrap();
            assert!((s.residual - sum).abs() < 1e-9 * sum.abs().max(1.0));
        }
    }

    #[test]
    fn fast_resilience_kills_residual() {
        let p = MarketParams::constant(10, 0.001, 0.5, 0.5, 50.0);
        let env = EnvParams::benchmark(10);
        let mut s = MarketState::initial(&traders(), 100.0);
        let mut max_r: f64 = 0.0;
        let mut max_impact: f64 = 0.0;
        for _ in 0..10 {
            let q: [f64; 2] = [1e4, 1e4];
            max_impact = max_impact.max((0.5 * 0.001 * (q[0] + q[1])).abs());
            s = step_state(&s, q, Shocks::default(), &p, &env).unwrap();
            max_r = max_r.max(s.residual.abs());
        }
        assert!(max_r < 1e-15 * max_impact);
    }
}
