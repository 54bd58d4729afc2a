//! Backward induction for the Markov perfect equilibrium.
//!
//! Each trader's value at time `t` has the form
//!
//! ```text
//! V_t = -exp(-gamma [W - P Q + G1 Q^2 + G2 Q + H1 Q R + H2 R^2 + H3 R
//!                    + J1 Q K + J2 K R + J3 K^2 + J4 K
//!                    + L1 Q y + L2 R y + L3 K y + L4 y^2 + L5 y + Z])
//! ```
//!
//! where `Q`/`K` are the trader's own/opponent's remaining inventory, `R` the
//! residual impact and `y = I_{t-1}`. The bracket is the certainty equivalent.
//! One step back, the expectation over `(I_t, eps_t)` is done with
//! [`quad_exp_expectation`], which leaves a quadratic stage objective in both
//! actions. Its own-action curvature is `-A`, and the two first-order
//! conditions are solved jointly for the affine equilibrium actions.
//!
//! All per-trader computations are written in the trader's own frame and run
//! through the same code, so relabelling the traders relabels the output
//! bit for bit.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gaussian::{quad_exp_expectation, BivariateGaussian};
use crate::market::{validate, EnvParams, MarketParams, MarketState, TraderSpec};
use crate::quadform::{
    Affine, QuadForm, DIM, ENV, INV_OPP, INV_OWN, ONE, Q_OPP, Q_OWN, RES,
};

/// Relative tolerance on `zeta` below which the best-response system is
/// declared singular.
const ZETA_TOLERANCE: f64 = 1e-10;

/// Coefficients of the certainty-equivalent bracket of one trader's value
/// function at one time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValueCoefficients {
    pub g1: f64,
    pub g2: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    pub z: f64,
}

impl ValueCoefficients {
    /// The quadratic part of the bracket (everything except `W - P Q`).
    pub fn bracket(&self, own: f64, opp: f64, residual: f64, env_prev: f64) -> f64 {
        let (q, k, r, y) = (own, opp, residual, env_prev);
        self.g1 * q * q
            + self.g2 * q
            + self.h1 * q * r
            + self.h2 * r * r
            + self.h3 * r
            + self.j1 * q * k
            + self.j2 * k * r
            + self.j3 * k * k
            + self.j4 * k
            + self.l1 * q * y
            + self.l2 * r * y
            + self.l3 * k * y
            + self.l4 * y * y
            + self.l5 * y
            + self.z
    }

    /// Certainty equivalent of `trader` (0 or 1) in `state`:
    /// `W - P Q + bracket`.
    pub fn certainty_equivalent(&self, state: &MarketState, trader: usize) -> f64 {
        let (own, opp) = frame(state, trader);
        state.wealth[trader] - state.price * own + self.bracket(own, opp, state.residual, state.env_prev)
    }

    /// Expected utility `-exp(-gamma * certainty_equivalent)`.
    pub fn utility(&self, state: &MarketState, trader: usize, gamma: f64) -> f64 {
        -libm::exp(-gamma * self.certainty_equivalent(state, trader))
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// Coefficients in declaration order `g1, g2, h1..h3, j1..j4, l1..l5, z`.
    pub fn as_array(&self) -> [f64; 15] {
        [
            self.g1, self.g2, self.h1, self.h2, self.h3, self.j1, self.j2, self.j3, self.j4,
            self.l1, self.l2, self.l3, self.l4, self.l5, self.z,
        ]
    }

    fn from_form(f: &QuadForm) -> Self {
        Self {
            g1: f.coef(INV_OWN, INV_OWN),
            g2: f.coef(INV_OWN, ONE),
            h1: f.coef(INV_OWN, RES),
            h2: f.coef(RES, RES),
            h3: f.coef(RES, ONE),
            j1: f.coef(INV_OWN, INV_OPP),
            j2: f.coef(INV_OPP, RES),
            j3: f.coef(INV_OPP, INV_OPP),
            j4: f.coef(INV_OPP, ONE),
            l1: f.coef(INV_OWN, ENV),
            l2: f.coef(RES, ENV),
            l3: f.coef(INV_OPP, ENV),
            l4: f.coef(ENV, ENV),
            l5: f.coef(ENV, ONE),
            z: f.coef(ONE, ONE),
        }
    }
}

/// Affine execution rule `q = a + b Q_own + c Q_opp + d R + e I_{t-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl PolicyCoefficients {
    /// Sell (or buy) everything that is left.
    pub fn liquidation() -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            c: 0.0,
            d: 0.0,
            e: 0.0,
        }
    }

    pub fn action(&self, own: f64, opp: f64, residual: f64, env_prev: f64) -> f64 {
        self.a + self.b * own + self.c * opp + self.d * residual + self.e * env_prev
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.a, self.b, self.c, self.d, self.e]
    }

    /// The rule as an affine map of the stage variables. With `swap` the rule
    /// belongs to the opponent, so its own inventory is `INV_OPP`.
    fn affine(&self, swap: bool) -> Affine {
        let (own, opp) = if swap { (INV_OPP, INV_OWN) } else { (INV_OWN, INV_OPP) };
        let mut c = [0.0; DIM];
        c[own] = self.b;
        c[opp] = self.c;
        c[RES] = self.d;
        c[ENV] = self.e;
        c[ONE] = self.a;
        Affine(c)
    }
}

/// Coefficients of one trader's stage objective at time `t < T`:
///
/// ```text
/// -A q^2 + q (B Q + C K + D R + F y + M + N p)
///   + X p^2 + p (Y1 Q + Y2 R + Y3 K + Y4 y + Y5) + rest(Q, K, R, y)
/// ```
///
/// with `q` the own action and `p` the opponent's.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub f: f64,
    pub m: f64,
    pub n: f64,
    /// Sensitivity of the environment loading of next period's bracket to
    /// the own action.
    pub theta: f64,
    /// Same, with respect to the own inventory.
    pub delta: f64,
    /// Same, with respect to the opponent's action.
    pub phi: f64,
    pub pi: [[f64; 2]; 2],
    /// Precision matrix of the period's shock pair; `None` when one of the
    /// shocks is deterministic.
    pub sigma_inv: Option<[[f64; 2]; 2]>,
    /// Opponent-action curvature `X`.
    pub x_opp: f64,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
    pub y5: f64,
    /// Log-prefactor contribution `-(1/gamma) log_prefactor`.
    pub x: f64,
    pub zeta: f64,
    /// `B + N c^j`, `C + N b^j`, `D + N d^j`, `F + N e^j`, `M + N a^j`
    /// with the opponent's equilibrium rule.
    pub b_ss: f64,
    pub c_ss: f64,
    pub d_ss: f64,
    pub f_ss: f64,
    pub m_ss: f64,
    /// Terms free of both actions.
    pub rest: ValueCoefficients,
}

impl StageCoefficients {
    /// Evaluates the bracket of the stage objective (without `W - P Q`).
    pub fn bracket(&self, own: f64, opp: f64, residual: f64, env_prev: f64, q: f64, p: f64) -> f64 {
        let (qq, k, r, y) = (own, opp, residual, env_prev);
        let own_lin = self.b * qq + self.c * k + self.d * r + self.f * y + self.m + self.n * p;
        let opp_lin = self.y1 * qq + self.y2 * r + self.y3 * k + self.y4 * y + self.y5;
        -self.a * q * q + q * own_lin + self.x_opp * p * p + p * opp_lin + self.rest.bracket(qq, k, r, y)
    }

    /// Own best response to a fixed opponent action.
    pub fn best_response(&self, own: f64, opp: f64, residual: f64, env_prev: f64, p: f64) -> f64 {
        (self.b * own + self.c * opp + self.d * residual + self.f * env_prev + self.m + self.n * p)
            / (2.0 * self.a)
    }
}

/// Output of one backward step, indexed by trader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub stage: [StageCoefficients; 2],
    pub policy: [PolicyCoefficients; 2],
    pub value: [ValueCoefficients; 2],
}

/// Coefficient tables of the equilibrium. `policy` and `value` are indexed by
/// `t - 1` for `t = 1..=T`; `stage` covers `t = 1..T` (there is no choice at
/// `T`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquilibriumSolution {
    pub horizon: usize,
    pub policy: Vec<[PolicyCoefficients; 2]>,
    pub value: Vec<[ValueCoefficients; 2]>,
    pub stage: Vec<[StageCoefficients; 2]>,
}

impl EquilibriumSolution {
    pub fn policy(&self, t: usize) -> Result<&[PolicyCoefficients; 2]> {
        self.check_time(t)?;
        Ok(&self.policy[t - 1])
    }

    pub fn value(&self, t: usize) -> Result<&[ValueCoefficients; 2]> {
        self.check_time(t)?;
        Ok(&self.value[t - 1])
    }

    /// Stage coefficients for `t < T`.
    pub fn stage(&self, t: usize) -> Result<&[StageCoefficients; 2]> {
        if t == 0 || t >= self.horizon {
            return Err(Error::TimeOutOfRange {
                t,
                max: self.horizon.saturating_sub(1),
            });
        }
        Ok(&self.stage[t - 1])
    }

    /// Equilibrium volumes `(q^1, q^2)` at time `t` in `state`. At `T` this is
    /// exactly the remaining inventory.
    pub fn policy_action(&self, t: usize, state: &MarketState) -> Result<[f64; 2]> {
        self.check_time(t)?;
        if t == self.horizon {
            return Ok(state.remaining);
        }
        let rows = &self.policy[t - 1];
        Ok([0, 1].map(|i| {
            let (own, opp) = frame(state, i);
            rows[i].action(own, opp, state.residual, state.env_prev)
        }))
    }

    /// Certainty equivalent of trader `trader` (0 or 1) at time `t` when it
    /// trades `q_i` against a fixed opponent volume `q_j`, all later play
    /// being in equilibrium. Maximised by the equilibrium action.
    ///
    /// At `T` any volume other than the remaining inventory leaves shares on
    /// the book, which is infeasible; the objective is then `-inf`.
    pub fn stage_objective(
        &self,
        t: usize,
        state: &MarketState,
        trader: usize,
        q_i: f64,
        q_j: f64,
    ) -> Result<f64> {
        self.check_time(t)?;
        let (own, opp) = frame(state, trader);
        let cash = state.wealth[trader] - state.price * own;
        if t == self.horizon {
            if q_i != own {
                return Ok(f64::NEG_INFINITY);
            }
            let v = &self.value[t - 1][trader];
            // forced liquidation; the opponent's volume only enters through
            // the execution price
            return Ok(cash + v.g1 * own * own + v.j1 * own * q_j);
        }
        let s = &self.stage[t - 1][trader];
        Ok(cash + s.bracket(own, opp, state.residual, state.env_prev, q_i, q_j))
    }

    fn check_time(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::TimeOutOfRange {
                t,
                max: self.horizon,
            });
        }
        Ok(())
    }
}

/// `(own, opponent)` remaining inventories seen by `trader`.
pub(crate) fn frame(state: &MarketState, trader: usize) -> (f64, f64) {
    (state.remaining[trader], state.remaining[1 - trader])
}

/// Value coefficients at `T`: both traders liquidate, so the bracket is
/// `-lambda_T Q (Q + K)`.
pub fn terminal_coefficients(params: &MarketParams, _traders: &[TraderSpec; 2]) -> [ValueCoefficients; 2] {
    let lambda = params.lambda(params.horizon);
    let v = ValueCoefficients {
        g1: -lambda,
        j1: -lambda,
        ..ValueCoefficients::default()
    };
    [v, v]
}

/// Auxiliary quantities produced while building a stage objective.
pub(crate) struct StageForm {
    pub form: QuadForm,
    pub theta: f64,
    pub delta: f64,
    pub phi: f64,
    pub pi: [[f64; 2]; 2],
    pub sigma_inv: Option<[[f64; 2]; 2]>,
    pub x: f64,
}

/// Certainty-equivalent stage objective of a trader with risk aversion
/// `gamma` and continuation bracket `next`, as a quadratic form in the stage
/// variables. `trader` (1-based) is only used in error reports.
pub(crate) fn stage_form(
    t: usize,
    next: &ValueCoefficients,
    gamma: f64,
    params: &MarketParams,
    env: &EnvParams,
    trader: usize,
) -> Result<StageForm> {
    let decay = params.decay();
    let lambda = params.lambda(t);
    let kappa = params.alpha(t) * lambda * decay;

    let q = Affine::var(Q_OWN);
    let p = Affine::var(Q_OPP);
    let total = q.plus(p);
    let one = Affine::constant(1.0);
    let r = Affine::var(RES);
    let qn = Affine::var(INV_OWN).minus(q);
    let kn = Affine::var(INV_OPP).minus(p);
    let rn = r.scale(decay).plus(total.scale(kappa));
    let mean = Affine::constant(env.a_env(t)).plus(Affine::var(ENV).scale(-env.b_env(t)));

    let mut f = QuadForm::default();
    // cash: execution cost and the deterministic part of next period's
    // mark-to-market
    f.add_product(-lambda, &total, &q);
    f.add_product(1.0 - decay, &r, &qn);
    f.add_product(-params.carried_impact(t) * lambda, &total, &qn);

    f.add_product(next.g1, &qn, &qn);
    f.add_linear(next.g2, &qn);
    f.add_product(next.h1, &qn, &rn);
    f.add_product(next.h2, &rn, &rn);
    f.add_linear(next.h3, &rn);
    f.add_product(next.j1, &qn, &kn);
    f.add_product(next.j2, &kn, &rn);
    f.add_product(next.j3, &kn, &kn);
    f.add_linear(next.j4, &kn);
    f.add_linear(next.z, &one);

    // loadings on I_t and eps_t
    let load_env = qn
        .scale(next.l1 - 1.0)
        .plus(rn.scale(next.l2))
        .plus(kn.scale(next.l3))
        .plus(one.scale(next.l5));
    let load_eps = qn.scale(-1.0);

    let law = BivariateGaussian::new(
        [1.0, 0.0],
        [env.sigma_env(t), env.sigma_eps(t)],
        env.rho_env_eps,
    )?;
    let k = quad_exp_expectation(&law, -gamma * next.l4, 0.0, 0.0).map_err(|e| match e {
        Error::NotPositiveDefinite => Error::UnboundedObjective { t, trader },
        other => other,
    })?;
    let x = -k.log_prefactor / gamma;
    let [[p11, p12], [_, p22]] = k.pi;

    f.add_linear(x, &one);
    f.add_product(-0.5 * gamma * p11, &load_env, &load_env);
    f.add_product(-gamma * p12, &load_env, &load_eps);
    f.add_product(-0.5 * gamma * p22, &load_eps, &load_eps);
    f.add_product(k.mu_b, &mean, &load_env);
    f.add_product(k.mu_c, &mean, &load_eps);
    f.add_product(-k.mu_a / (2.0 * gamma), &mean, &mean);

    Ok(StageForm {
        form: f,
        theta: -load_env.coef(Q_OWN),
        delta: load_env.coef(INV_OWN),
        phi: load_env.coef(Q_OPP),
        pi: k.pi,
        sigma_inv: law.precision(),
        x,
    })
}

/// Reads the stage coefficients off a stage form. The equilibrium-dependent
/// fields (`zeta` and the double-starred terms) are left at zero.
pub(crate) fn extract(sf: &StageForm) -> StageCoefficients {
    let f = &sf.form;
    let mut rest = sf.form;
    for i in 0..DIM {
        for j in [Q_OWN, Q_OPP] {
            rest.0[i][j] = 0.0;
            rest.0[j][i] = 0.0;
        }
    }
    StageCoefficients {
        a: -f.coef(Q_OWN, Q_OWN),
        b: f.coef(Q_OWN, INV_OWN),
        c: f.coef(Q_OWN, INV_OPP),
        d: f.coef(Q_OWN, RES),
        f: f.coef(Q_OWN, ENV),
        m: f.coef(Q_OWN, ONE),
        n: f.coef(Q_OWN, Q_OPP),
        theta: sf.theta,
        delta: sf.delta,
        phi: sf.phi,
        pi: sf.pi,
        sigma_inv: sf.sigma_inv,
        x_opp: f.coef(Q_OPP, Q_OPP),
        y1: f.coef(Q_OPP, INV_OWN),
        y2: f.coef(Q_OPP, RES),
        y3: f.coef(Q_OPP, INV_OPP),
        y4: f.coef(Q_OPP, ENV),
        y5: f.coef(Q_OPP, ONE),
        x: sf.x,
        zeta: 0.0,
        b_ss: 0.0,
        c_ss: 0.0,
        d_ss: 0.0,
        f_ss: 0.0,
        m_ss: 0.0,
        rest: ValueCoefficients::from_form(&rest),
    }
}

/// Value bracket at `t` when the own action is optimised against the
/// opponent rule `opp_rule`, given in the opponent's own frame.
pub(crate) fn value_after_best_response(s: &StageCoefficients, opp_rule: &PolicyCoefficients) -> ValueCoefficients {
    let p = opp_rule.affine(true);
    let own_lin = Affine({
        let mut c = [0.0; DIM];
        c[INV_OWN] = s.b_ss;
        c[INV_OPP] = s.c_ss;
        c[RES] = s.d_ss;
        c[ENV] = s.f_ss;
        c[ONE] = s.m_ss;
        c
    });
    let opp_lin = Affine({
        let mut c = [0.0; DIM];
        c[INV_OWN] = s.y1;
        c[RES] = s.y2;
        c[INV_OPP] = s.y3;
        c[ENV] = s.y4;
        c[ONE] = s.y5;
        c
    });
    let mut f = value_form(&s.rest);
    f.add_product(s.x_opp, &p, &p);
    f.add_product(1.0, &opp_lin, &p);
    f.add_product(1.0 / (4.0 * s.a), &own_lin, &own_lin);
    ValueCoefficients::from_form(&f)
}

fn value_form(v: &ValueCoefficients) -> QuadForm {
    let q = Affine::var(INV_OWN);
    let k = Affine::var(INV_OPP);
    let r = Affine::var(RES);
    let y = Affine::var(ENV);
    let one = Affine::constant(1.0);
    let mut f = QuadForm::default();
    f.add_product(v.g1, &q, &q);
    f.add_linear(v.g2, &q);
    f.add_product(v.h1, &q, &r);
    f.add_product(v.h2, &r, &r);
    f.add_linear(v.h3, &r);
    f.add_product(v.j1, &q, &k);
    f.add_product(v.j2, &k, &r);
    f.add_product(v.j3, &k, &k);
    f.add_linear(v.j4, &k);
    f.add_product(v.l1, &q, &y);
    f.add_product(v.l2, &r, &y);
    f.add_product(v.l3, &k, &y);
    f.add_product(v.l4, &y, &y);
    f.add_linear(v.l5, &y);
    f.add_linear(v.z, &one);
    f
}

/// Equilibrium rule of the trader with stage coefficients `own` against an
/// opponent with stage coefficients `opp`.
fn starred(own: &StageCoefficients, opp: &StageCoefficients) -> (f64, PolicyCoefficients) {
    let r = own.n / (2.0 * opp.a);
    let zeta = 2.0 * own.a - own.n * opp.n / (2.0 * opp.a);
    let rule = PolicyCoefficients {
        a: (own.m + r * opp.m) / zeta,
        b: (own.b + r * opp.c) / zeta,
        c: (own.c + r * opp.b) / zeta,
        d: (own.d + r * opp.d) / zeta,
        e: (own.f + r * opp.f) / zeta,
    };
    (zeta, rule)
}

fn double_star(s: &mut StageCoefficients, opp_rule: &PolicyCoefficients) {
    s.b_ss = s.b + s.n * opp_rule.c;
    s.c_ss = s.c + s.n * opp_rule.b;
    s.d_ss = s.d + s.n * opp_rule.d;
    s.f_ss = s.f + s.n * opp_rule.e;
    s.m_ss = s.m + s.n * opp_rule.a;
}

/// One step of the backward recursion: from the value brackets at `t + 1` to
/// the stage objectives, equilibrium rules and value brackets at `t`.
pub fn backward_step(
    t: usize,
    value_next: &[ValueCoefficients; 2],
    params: &MarketParams,
    env: &EnvParams,
    traders: &[TraderSpec; 2],
) -> Result<StepOutput> {
    if t == 0 || t >= params.horizon {
        return Err(Error::TimeOutOfRange {
            t,
            max: params.horizon.saturating_sub(1),
        });
    }
    let st = [0, 1].map(|i| {
        stage_form(t, &value_next[i], traders[i].risk_aversion, params, env, i + 1).map(|sf| extract(&sf))
    });
    let mut st = match st {
        [Ok(a), Ok(b)] => [a, b],
        [Err(e), _] | [_, Err(e)] => return Err(e),
    };
    for (i, s) in st.iter().enumerate() {
        if !(s.a > 0.0) {
            return Err(Error::ConcavityLost {
                t,
                trader: i + 1,
                a: s.a,
            });
        }
    }
    let (z0, p0) = starred(&st[0], &st[1]);
    let (z1, p1) = starred(&st[1], &st[0]);
    for (i, z) in [z0, z1].into_iter().enumerate() {
        let s = &st[i];
        if !(z.abs() >= ZETA_TOLERANCE * s.a.abs().max(s.n.abs())) {
            return Err(Error::SingularEquilibrium { t });
        }
    }
    let policy = [p0, p1];
    st[0].zeta = z0;
    st[1].zeta = z1;
    double_star(&mut st[0], &p1);
    double_star(&mut st[1], &p0);
    let value = [
        value_after_best_response(&st[0], &p1),
        value_after_best_response(&st[1], &p0),
    ];
    Ok(StepOutput {
        stage: st,
        policy,
        value,
    })
}

/// Solves the game by backward induction from `T`.
pub fn solve_equilibrium(
    params: &MarketParams,
    env: &EnvParams,
    traders: &[TraderSpec; 2],
) -> Result<EquilibriumSolution> {
    validate(params, env, traders)?;
    let horizon = params.horizon;
    let mut policy = alloc::vec![[PolicyCoefficients::liquidation(); 2]; horizon];
    let mut value = alloc::vec![terminal_coefficients(params, traders); horizon];
    let mut stage = Vec::with_capacity(horizon - 1);
    for t in (1..horizon).rev() {
        let out = backward_step(t, &value[t], params, env, traders)?;
        policy[t - 1] = out.policy;
        value[t - 1] = out.value;
        stage.push(out.stage);
    }
    stage.reverse();
    Ok(EquilibriumSolution {
        horizon,
        policy,
        value,
        stage,
    })
}

/// Optimal rule of one trader facing an opponent that never trades, by the
/// same recursion with the opponent's rule pinned to zero. Used as the
/// reference for the very-risk-averse-opponent limit.
pub fn solve_single_trader(
    params: &MarketParams,
    env: &EnvParams,
    trader: &TraderSpec,
) -> Result<Vec<PolicyCoefficients>> {
    let traders = [*trader, TraderSpec::new(0.0, 1.0)];
    validate(params, env, &traders)?;
    let horizon = params.horizon;
    let mut policy = alloc::vec![PolicyCoefficients::liquidation(); horizon];
    let mut next = terminal_coefficients(params, &traders)[0];
    let idle = PolicyCoefficients::default();
    for t in (1..horizon).rev() {
        let mut s = extract(&stage_form(t, &next, trader.risk_aversion, params, env, 1)?);
        if !(s.a > 0.0) {
            return Err(Error::ConcavityLost { t, trader: 1, a: s.a });
        }
        double_star(&mut s, &idle);
        let two_a = 2.0 * s.a;
        policy[t - 1] = PolicyCoefficients {
            a: s.m / two_a,
            b: s.b / two_a,
            c: s.c / two_a,
            d: s.d / two_a,
            e: s.f / two_a,
        };
        next = value_after_best_response(&s, &idle);
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark(horizon: usize) -> (MarketParams, EnvParams, [TraderSpec; 2]) {
        (
            MarketParams::benchmark(horizon),
            EnvParams::benchmark(horizon),
            [TraderSpec::new(1e5, 0.001), TraderSpec::new(1e5, 0.001)],
        )
    }

    #[test]
    fn terminal_values() {
        let (p, _, tr) = benchmark(10);
        let v = terminal_coefficients(&p, &tr);
        assert_eq!(v[0], v[1]);
        assert_eq!(v[0].g1, -0.001);
        assert_eq!(v[0].j1, -0.001);
        assert_eq!(v[0].h2, 0.0);
        assert_eq!(v[0].l4, 0.0);
        assert_eq!(v[0].z, 0.0);
    }

    #[test]
    fn last_step_matches_hand_coefficients() {
        let (p, e, tr) = benchmark(10);
        let out = backward_step(9, &terminal_coefficients(&p, &tr), &p, &e, &tr).unwrap();
        let s = &out.stage[0];
        let lam = 0.001;
        let carried = p.carried_impact(9);
        let var_sum = 0.01f64 * 0.01 + 0.02 * 0.02;
        let a = lam - carried * lam + lam + 0.5 * 0.001 * var_sum;
        assert!((s.a - a).abs() < 1e-15);
        // with a^I = b^I = 0 nothing reads I_{t-1}
        assert_eq!(s.f, 0.0);
        assert_eq!(out.policy[0].e, 0.0);
    }

    #[test]
    fn last_step_environment_terms() {
        let (p, mut e, tr) = benchmark(10);
        e.a_env = alloc::vec![0.3; 10];
        e.b_env = alloc::vec![-0.6; 10];
        let out = backward_step(9, &terminal_coefficients(&p, &tr), &p, &e, &tr).unwrap();
        assert!((out.stage[0].m - 0.3).abs() < 1e-15);
        assert!((out.stage[0].f - 0.6).abs() < 1e-15);
    }

    #[test]
    fn symmetric_traders_share_coefficients() {
        let (p, e, tr) = benchmark(10);
        let sol = solve_equilibrium(&p, &e, &tr).unwrap();
        for t in 1..10 {
            let s = sol.stage(t).unwrap();
            assert_eq!(s[0], s[1]);
            assert_eq!(sol.policy[t - 1][0], sol.policy[t - 1][1]);
            assert_eq!(sol.value[t - 1][0], sol.value[t - 1][1]);
        }
    }

    #[test]
    fn swap_symmetry_is_exact() {
        let p = MarketParams::benchmark(8);
        let mut e = EnvParams::benchmark(8);
        e.a_env = alloc::vec![0.2; 8];
        e.b_env = alloc::vec![-0.4; 8];
        e.rho_env_eps = 0.3;
        let tr = [TraderSpec::new(2e5, 0.002), TraderSpec::new(-5e4, 0.0005)];
        let a = solve_equilibrium(&p, &e, &tr).unwrap();
        let b = solve_equilibrium(&p, &e, &[tr[1], tr[0]]).unwrap();
        for t in 0..8 {
            assert_eq!(a.policy[t][0], b.policy[t][1]);
            assert_eq!(a.policy[t][1], b.policy[t][0]);
            assert_eq!(a.value[t][0], b.value[t][1]);
        }
    }

    #[test]
    fn value_routes_agree() {
        // substitute both equilibrium rules into the full stage form and
        // compare with the completed-square route
        let p = MarketParams::benchmark(5);
        let mut e = EnvParams::benchmark(5);
        e.a_env = alloc::vec![0.1; 5];
        e.b_env = alloc::vec![0.5; 5];
        e.sigma_env = alloc::vec![0.5; 5];
        e.rho_env_eps = -0.2;
        let tr = [TraderSpec::new(1e5, 0.001), TraderSpec::new(3e4, 0.01)];
        let sol = solve_equilibrium(&p, &e, &tr).unwrap();
        for t in (1..5).rev() {
            for (i, trader) in tr.iter().enumerate() {
                let sf = stage_form(t, &sol.value[t][i], trader.risk_aversion, &p, &e, i + 1).unwrap();
                let mut map = [Affine::default(); DIM];
                for (k, m) in map.iter_mut().enumerate() {
                    *m = Affine::var(k);
                }
                map[Q_OWN] = sol.policy[t - 1][i].affine(false);
                map[Q_OPP] = sol.policy[t - 1][1 - i].affine(true);
                let direct = ValueCoefficients::from_form(&sf.form.substitute(&map));
                let emitted = sol.value[t - 1][i];
                for (x, y) in direct.as_array().iter().zip(emitted.as_array()) {
                    assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "t={t} i={i}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn policy_action_properties() {
        let (p, e, tr) = benchmark(10);
        let sol = solve_equilibrium(&p, &e, &tr).unwrap();
        let mut s = MarketState::initial(&tr, 100.0);
        s.time = 10;
        s.remaining = [123.0, -7.5];
        s.residual = 4.0;
        assert_eq!(sol.policy_action(10, &s).unwrap(), [123.0, -7.5]);

        let origin = MarketState {
            time: 4,
            wealth: [0.0; 2],
            price: 100.0,
            remaining: [0.0; 2],
            residual: 0.0,
            env_prev: 0.0,
        };
        let q = sol.policy_action(4, &origin).unwrap();
        assert_eq!(q, [sol.policy[3][0].a, sol.policy[3][1].a]);
        assert!(sol.policy_action(11, &origin).is_err());
        assert!(sol.policy_action(0, &origin).is_err());
    }

    #[test]
    fn proposition_4_1_holds() {
        let p = MarketParams::benchmark(10);
        let mut e = EnvParams::benchmark(10);
        e.a_env = alloc::vec![0.7; 10];
        e.sigma_env = alloc::vec![3.0; 10];
        let tr = [TraderSpec::new(1e5, 0.001), TraderSpec::new(-4e4, 0.003)];
        let sol = solve_equilibrium(&p, &e, &tr).unwrap();
        for row in &sol.policy {
            for r in row {
                assert!(r.e.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equilibrium_maximises_stage_objective() {
        let (p, e, tr) = benchmark(6);
        let sol = solve_equilibrium(&p, &e, &tr).unwrap();
        let state = MarketState {
            time: 2,
            wealth: [1e3, -2e3],
            price: 101.0,
            remaining: [8e4, 6e4],
            residual: 12.0,
            env_prev: 0.1,
        };
        let q = sol.policy_action(2, &state).unwrap();
        for i in 0..2 {
            let best = sol.stage_objective(2, &state, i, q[i], q[1 - i]).unwrap();
            let delta = 1e-2 * (q[i].abs() + 1.0);
            for d in [delta, -delta] {
                assert!(sol.stage_objective(2, &state, i, q[i] + d, q[1 - i]).unwrap() < best);
            }
            let br = sol.stage[1][i].best_response(
                state.remaining[i],
                state.remaining[1 - i],
                state.residual,
                state.env_prev,
                q[1 - i],
            );
            assert!((br - q[i]).abs() < 1e-9 * q[i].abs());
        }
        assert_eq!(
            sol.stage_objective(6, &state, 0, 1.0, 0.0).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn value_matches_stage_at_equilibrium() {
        let (p, e, tr) = benchmark(6);
        let sol = solve_equilibrium(&p, &e, &tr).unwrap();
        let state = MarketState {
            time: 3,
            wealth: [0.0; 2],
            price: 100.0,
            remaining: [5e4, 7e4],
            residual: 3.0,
            env_prev: -0.2,
        };
        let q = sol.policy_action(3, &state).unwrap();
        for i in 0..2 {
            let obj = sol.stage_objective(3, &state, i, q[i], q[1 - i]).unwrap();
            let ce = sol.value[2][i].certainty_equivalent(&state, i);
            assert!((obj - ce).abs() < 1e-8 * ce.abs().max(1.0));
        }
    }

    #[test]
    fn unbounded_objective_is_reported() {
        // a huge environment variance with a large L4 makes the tilt blow up
        let p = MarketParams::benchmark(4);
        let mut e = EnvParams::benchmark(4);
        e.b_env = alloc::vec![-1.0; 4];
        e.sigma_env = alloc::vec![1e4; 4];
        let tr = [TraderSpec::new(1e5, 5.0), TraderSpec::new(1e5, 5.0)];
        match solve_equilibrium(&p, &e, &tr) {
            Ok(sol) => assert!(sol.value.iter().all(|v| v[0].is_finite())),
            Err(err) => assert!(matches!(
                err,
                Error::UnboundedObjective { .. } | Error::ConcavityLost { .. }
            )),
        }
    }

    #[test]
    fn single_trader_reference_liquidates() {
        let p = MarketParams::benchmark(10);
        let e = EnvParams::benchmark(10);
        let pol = solve_single_trader(&p, &e, &TraderSpec::new(2e5, 0.001)).unwrap();
        assert_eq!(pol[9], PolicyCoefficients::liquidation());
        let mut remaining = 2e5;
        let mut residual = 0.0;
        for (t, row) in pol.iter().enumerate() {
            let q = row.action(remaining, 0.0, residual, 0.0);
            remaining -= q;
            residual = p.decay() * (residual + p.alpha(t + 1) * p.lambda(t + 1) * q);
        }
        assert!(remaining.abs() < 1e-9);
    }
}
