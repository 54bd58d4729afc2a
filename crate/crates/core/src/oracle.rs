//! Brute-force reference computations used to check the closed forms.
//!
//! Nothing here calls the Gaussian kernel or the stage-coefficient algebra:
//! conditional expectations are integrated numerically over the exact state
//! transition, best responses are found by line search, and equilibria by
//! iterating best responses.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gaussian::{quad_exp_expectation, BivariateGaussian};
use crate::market::{step_state, EnvParams, MarketParams, MarketState, Shocks, TraderSpec};
use crate::rng::NormalStream;
use crate::solver::ValueCoefficients;

const MAX_FIXED_POINT_ITERATIONS: usize = 10_000;
const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Probabilists' Gauss-Hermite rule: `sum w_k f(x_k)` approximates `E[f(Z)]`
/// for standard normal `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_hermite(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut x = alloc::vec![0.0; n];
        let mut w = alloc::vec![0.0; n];
        // roots of the physicists' Hermite polynomial by Newton's method on
        // the orthonormal recurrence
        let pim4 = 0.751_125_544_464_942_5;
        let nf = n as f64;
        let mut z: f64 = 0.0;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => libm::sqrt(2.0 * nf + 1.0) - 1.855_75 * libm::pow(2.0 * nf + 1.0, -1.0 / 6.0),
                1 => z - 1.14 * libm::pow(nf, 0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * libm::sqrt(2.0 / (jf + 1.0)) * p2 - libm::sqrt(jf / (jf + 1.0)) * p3;
                }
                pp = libm::sqrt(2.0 * nf) * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        let sqrt2 = core::f64::consts::SQRT_2;
        let total: f64 = w.iter().sum();
        Self {
            nodes: x.into_iter().map(|v| v * sqrt2).collect(),
            weights: w.into_iter().map(|v| v / total).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Numerical reference solver for one stage of the game.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    params: &'a MarketParams,
    env: &'a EnvParams,
    traders: &'a [TraderSpec; 2],
    rule: QuadratureRule,
}

impl<'a> Oracle<'a> {
    pub fn new(params: &'a MarketParams, env: &'a EnvParams, traders: &'a [TraderSpec; 2], order: usize) -> Self {
        Self {
            params,
            env,
            traders,
            rule: QuadratureRule::gauss_hermite(order),
        }
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    /// Certainty equivalents `-(1/gamma^i) log E[exp(-gamma^i CE^i_{t+1})]`
    /// of both traders after volumes `q` are executed in `state`, where
    /// `CE^i_{t+1}` is the bracket of `value_next` evaluated at the exact next
    /// state.
    pub fn quadrature_continuation(
        &self,
        value_next: &[ValueCoefficients; 2],
        state: &MarketState,
        q: [f64; 2],
    ) -> Result<[f64; 2]> {
        Ok([
            self.continuation(value_next, state, q, 0)?,
            self.continuation(value_next, state, q, 1)?,
        ])
    }

    fn continuation(
        &self,
        value_next: &[ValueCoefficients; 2],
        state: &MarketState,
        q: [f64; 2],
        trader: usize,
    ) -> Result<f64> {
        let t = state.time;
        let gamma = self.traders[trader].risk_aversion;
        let sig_eps = self.env.sigma_eps(t);
        let rho = self.env.rho_env_eps;
        let root = libm::sqrt(1.0 - rho * rho);
        let v = &value_next[trader];

        // log of the integrand against the standard bivariate normal density,
        // in independent standard coordinates
        let log_f = |x: f64, y: f64| -> Result<f64> {
            let shocks = Shocks {
                omega: x,
                eps: sig_eps * (rho * x + root * y),
            };
            let next = step_state(state, q, shocks, self.params, self.env)?;
            Ok(-gamma * v.certainty_equivalent(&next, trader))
        };
        // centre and scale the rule on the peak of integrand times density
        let h = 1.0;
        let g = |x: f64, y: f64| -> Result<f64> { Ok(log_f(x, y)? - 0.5 * (x * x + y * y)) };
        let g0 = g(0.0, 0.0)?;
        let gxp = g(h, 0.0)?;
        let gxm = g(-h, 0.0)?;
        let gyp = g(0.0, h)?;
        let gym = g(0.0, -h)?;
        let gpp = g(h, h)?;
        let gpm = g(h, -h)?;
        let gmp = g(-h, h)?;
        let gmm = g(-h, -h)?;
        let grad = [(gxp - gxm) / (2.0 * h), (gyp - gym) / (2.0 * h)];
        let hxx = (gxp - 2.0 * g0 + gxm) / (h * h);
        let hyy = (gyp - 2.0 * g0 + gym) / (h * h);
        let hxy = (gpp - gpm - gmp + gmm) / (4.0 * h * h);
        // precision of the tilted density
        let (c11, c12, c22) = (-hxx, -hxy, -hyy);
        let det = c11 * c22 - c12 * c12;
        if !(c11 > 0.0 && det > 0.0) || !g0.is_finite() {
            return Err(Error::IntegrandOverflow);
        }
        let mode = [
            (c22 * grad[0] - c12 * grad[1]) / det,
            (-c12 * grad[0] + c11 * grad[1]) / det,
        ];
        // Cholesky factor of the tilted covariance
        let (s11, s12, s22) = (c22 / det, -c12 / det, c11 / det);
        let l11 = libm::sqrt(s11);
        let l21 = s12 / l11;
        let l22 = libm::sqrt(s22 - l21 * l21);
        let log_det_l = libm::log(l11 * l22);

        let n = self.rule.order();
        let mut terms = Vec::with_capacity(n * n);
        for a in 0..n {
            let ea = self.rule.nodes[a];
            for b in 0..n {
                let eb = self.rule.nodes[b];
                let x = mode[0] + l11 * ea;
                let y = mode[1] + l21 * ea + l22 * eb;
                let val = g(x, y)? + 0.5 * (ea * ea + eb * eb);
                if !val.is_finite() {
                    return Err(Error::IntegrandOverflow);
                }
                terms.push((val, self.rule.weights[a] * self.rule.weights[b]));
            }
        }
        let peak = terms.iter().fold(f64::NEG_INFINITY, |m, &(v, _)| m.max(v));
        let sum: f64 = terms.iter().map(|&(v, w)| w * libm::exp(v - peak)).sum();
        let log_mean = peak + libm::log(sum) + log_det_l;
        Ok(-log_mean / gamma)
    }

    /// Trader `trader`'s (0 or 1) certainty-equivalent objective when it
    /// trades `q_i` and the opponent trades `q_j`.
    pub fn objective(
        &self,
        value_next: &[ValueCoefficients; 2],
        state: &MarketState,
        trader: usize,
        q_i: f64,
        q_j: f64,
    ) -> Result<f64> {
        let mut q = [0.0; 2];
        q[trader] = q_i;
        q[1 - trader] = q_j;
        self.continuation(value_next, state, q, trader)
    }

    /// Maximiser of [`Oracle::objective`] over `q_i`.
    ///
    /// Golden-section search on `center +- 5 (|center| + scale)`, where
    /// `scale` is the largest remaining inventory. The objective is of order
    /// `P Q` while its curvature is of order `lambda`, so rounding limits the
    /// line search to a few shares; the result is then polished with
    /// parabolic steps on a stencil as wide as the bracket scale, where
    /// rounding is negligible relative to the curvature.
    pub fn numeric_best_response(
        &self,
        value_next: &[ValueCoefficients; 2],
        state: &MarketState,
        trader: usize,
        q_j: f64,
        center: f64,
    ) -> Result<f64> {
        let f = |q: f64| self.objective(value_next, state, trader, q, q_j);
        let scale = inventory_scale(state);
        let mut half = 5.0 * (center.abs() + scale);
        let mut found = None;
        for _ in 0..6 {
            let (lo, hi) = (center - half, center + half);
            let x = golden_section(&f, lo, hi, 1e-8 * (center.abs() + scale))?;
            let margin = 1e-6 * (hi - lo);
            if x - lo > margin && hi - x > margin {
                found = Some(x);
                break;
            }
            half *= 4.0;
        }
        let mut x = found.ok_or(Error::BracketFailure)?;
        let w = 0.1 * (scale + x.abs());
        for _ in 0..3 {
            let (fm, f0, fp) = (f(x - w)?, f(x)?, f(x + w)?);
            let curvature = fp - 2.0 * f0 + fm;
            if !(curvature < 0.0) {
                return Err(Error::BracketFailure);
            }
            let step = -w * (fp - fm) / (2.0 * curvature);
            x += step;
            if step.abs() <= 1e-12 * (scale + x.abs()) {
                break;
            }
        }
        Ok(x)
    }

    /// Iterates `q1 <- BR1(q2)`, `q2 <- BR2(q1)` from `(0, 0)` until both
    /// volumes move by less than `1e-8 (scale + |q|)`, `scale` being the
    /// largest remaining inventory.
    pub fn fixed_point_equilibrium(&self, value_next: &[ValueCoefficients; 2], state: &MarketState) -> Result<[f64; 2]> {
        let scale = inventory_scale(state);
        let mut q = [0.0f64; 2];
        for _ in 0..MAX_FIXED_POINT_ITERATIONS {
            let prev = q;
            q[0] = self.numeric_best_response(value_next, state, 0, q[1], q[0])?;
            q[1] = self.numeric_best_response(value_next, state, 1, q[0], q[1])?;
            let settled = (0..2).all(|i| (q[i] - prev[i]).abs() < 1e-8 * (scale + q[i].abs()));
            if settled {
                return Ok(q);
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_FIXED_POINT_ITERATIONS,
        })
    }
}

fn inventory_scale(state: &MarketState) -> f64 {
    state.remaining[0].abs().max(state.remaining[1].abs()).max(1.0)
}

fn golden_section<F: Fn(f64) -> Result<f64>>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut x1 = hi - INV_GOLDEN * (hi - lo);
    let mut x2 = lo + INV_GOLDEN * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_GOLDEN * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_GOLDEN * (hi - lo);
            f2 = f(x2)?;
        }
        if x1 == x2 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed form and Monte Carlo estimate of `E[exp(a X^2 + b X + c Y)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCheck {
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub std_error: f64,
}

impl McCheck {
    /// Whether the estimate is within `k` standard errors of the closed form.
    pub fn within(&self, k: f64) -> bool {
        (self.mc_estimate - self.closed_form).abs() <= k * self.std_error
    }

    pub fn relative_error(&self) -> f64 {
        (self.mc_estimate - self.closed_form).abs() / self.closed_form.abs()
    }
}

pub fn mc_check_quad_exp(
    g: &BivariateGaussian,
    a: f64,
    b: f64,
    c: f64,
    n_samples: usize,
    seed: u64,
) -> Result<McCheck> {
    let closed_form = quad_exp_expectation(g, a, b, c)?.value;
    let mut stream = NormalStream::new(seed, 0);
    let root = libm::sqrt(1.0 - g.rho_xy * g.rho_xy);
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..n_samples {
        let z1 = stream.next_normal();
        let z2 = stream.next_normal();
        let x = g.mu[0] + g.sigma[0] * z1;
        let y = g.mu[1] + g.sigma[1] * (g.rho_xy * z1 + root * z2);
        let v = libm::exp(a * x * x + b * x + c * y);
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let var = if n_samples > 1 { m2 / (n_samples - 1) as f64 } else { 0.0 };
    Ok(McCheck {
        closed_form,
        mc_estimate: mean,
        std_error: libm::sqrt(var / n_samples as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_equilibrium, terminal_coefficients};

    #[test]
    fn rule_integrates_polynomials() {
        for order in [1, 2, 5, 32, 64] {
            let r = QuadratureRule::gauss_hermite(order);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            if order >= 3 {
                let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
                let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m2 - 1.0).abs() < 1e-12, "order {order}: {m2}");
                assert!((m4 - 3.0).abs() < 1e-11, "order {order}: {m4}");
            }
        }
    }

    #[test]
    fn rule_nodes_are_symmetric() {
        let r = QuadratureRule::gauss_hermite(7);
        for k in 0..7 {
            assert_eq!(r.nodes[k], -r.nodes[6 - k]);
        }
    }

    #[test]
    fn golden_section_finds_vertex() {
        let f = |x: f64| Ok(-(x - 3.0) * (x - 3.0));
        let x = golden_section(&f, -10.0, 10.0, 1e-10).unwrap();
        assert!((x - 3.0).abs() < 1e-8);
    }

    #[test]
    fn mc_trivial_cases() {
        let g = BivariateGaussian::standard();
        let r = mc_check_quad_exp(&g, 0.0, 0.0, 0.0, 1000, 1).unwrap();
        assert_eq!((r.closed_form, r.mc_estimate), (1.0, 1.0));
        let r = mc_check_quad_exp(&g, 0.25, 0.0, 0.0, 1_000_000, 2).unwrap();
        assert!(r.within(3.0));
    }

    #[test]
    fn deterministic_continuation_is_exact() {
        let p = MarketParams::benchmark(2);
        let e = EnvParams::constant(2, 0.0, 0.0, 0.0, 0.0, 0.0);
        let tr = [TraderSpec::new(1e5, 0.001), TraderSpec::new(1e5, 0.001)];
        let v = terminal_coefficients(&p, &tr);
        let s = MarketState::initial(&tr, 100.0);
        let o = Oracle::new(&p, &e, &tr, 8);
        let q = [4e4, 6e4];
        let got = o.quadrature_continuation(&v, &s, q).unwrap();
        let next = step_state(&s, q, Shocks::default(), &p, &e).unwrap();
        for i in 0..2 {
            let direct = v[i].certainty_equivalent(&next, i);
            assert!((got[i] - direct).abs() <= 1e-12 * direct.abs());
        }
    }

    #[test]
    fn best_response_matches_closed_form_at_t_minus_one() {
        let p = MarketParams::benchmark(3);
        let e = EnvParams::benchmark(3);
        let tr = [TraderSpec::new(1e5, 0.001), TraderSpec::new(1e5, 0.001)];
        let sol = solve_equilibrium(&p, &e, &tr).unwrap();
        let mut s = MarketState::initial(&tr, 100.0);
        s.time = 2;
        s.remaining = [6e4, 3e4];
        s.residual = 20.0;
        let o = Oracle::new(&p, &e, &tr, 16);
        let br = o.numeric_best_response(&sol.value[2], &s, 0, 1e4, 0.0).unwrap();
        let closed = sol.stage[1][0].best_response(6e4, 3e4, 20.0, 0.0, 1e4);
        assert!((br - closed).abs() < 1e-6 * closed.abs(), "{br} vs {closed}");
    }
}
