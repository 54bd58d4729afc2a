//! Closed-form expectations of exponential-quadratic functionals of a
//! bivariate Gaussian pair `(X, Y)`.
//!
//! For `E[exp(a X^2 + b X + c Y)]` the logarithm is
//!
//! ```text
//! log_prefactor + 1/2 (pi11 b^2 + 2 pi12 b c + pi22 c^2 + 2 mu_b b + 2 mu_c c + mu_a)
//! ```
//!
//! with `pi = (Sigma^-1 - diag(2a, 0))^-1`. The solver consumes the split form
//! directly because it needs the dependence on `(b, c)` coefficient by
//! coefficient.

use crate::error::{Error, Result};

/// Relative tolerance of the positive-definiteness test on the tilted
/// precision matrix.
const PD_TOLERANCE: f64 = 1e-12;

/// Law of a Gaussian pair `(X, Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BivariateGaussian {
    pub mu: [f64; 2],
    /// Standard deviations. Zero is allowed and makes that coordinate
    /// deterministic.
    pub sigma: [f64; 2],
    pub rho_xy: f64,
}

impl BivariateGaussian {
    pub fn new(mu: [f64; 2], sigma: [f64; 2], rho_xy: f64) -> Result<Self> {
        for s in sigma {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::NonPositive {
                    field: "sigma",
                    value: s,
                });
            }
        }
        if !(rho_xy > -1.0 && rho_xy < 1.0) {
            return Err(Error::OutOfRange {
                field: "rho_xy",
                reason: "correlation must lie strictly inside (-1, 1)",
            });
        }
        Ok(Self { mu, sigma, rho_xy })
    }

    /// Independent standard normal pair.
    pub fn standard() -> Self {
        Self {
            mu: [0.0, 0.0],
            sigma: [1.0, 1.0],
            rho_xy: 0.0,
        }
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let [sx, sy] = self.sigma;
        let cxy = self.rho_xy * sx * sy;
        [[sx * sx, cxy], [cxy, sy * sy]]
    }

    /// `Sigma^-1`, or `None` when a coordinate is deterministic.
    pub fn precision(&self) -> Option<[[f64; 2]; 2]> {
        let [sx, sy] = self.sigma;
        if sx == 0.0 || sy == 0.0 {
            return None;
        }
        let [[s11, s12], [_, s22]] = self.covariance();
        let det = s11 * s22 - s12 * s12;
        Some([[s22 / det, -s12 / det], [-s12 / det, s11 / det]])
    }
}

/// Result of [`quad_exp_expectation`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadExpResult {
    /// `E[exp(a X^2 + b X + c Y)]`; may be `inf` when only the logarithm is
    /// representable.
    pub value: f64,
    pub log_value: f64,
    /// `-1/2 log(det Sigma* det Sigma)`.
    pub log_prefactor: f64,
    /// `(Sigma*)^-1`, symmetric.
    pub pi: [[f64; 2]; 2],
    pub mu_a: f64,
    pub mu_b: f64,
    pub mu_c: f64,
}

/// `E[exp(c1 X + c2 Y)]`.
pub fn mgf_linear(g: &BivariateGaussian, coeffs: [f64; 2]) -> f64 {
    let [c1, c2] = coeffs;
    let [[s11, s12], [_, s22]] = g.covariance();
    let mean = c1 * g.mu[0] + c2 * g.mu[1];
    let var = c1 * c1 * s11 + c2 * c2 * s22 + 2.0 * c1 * c2 * s12;
    libm::exp(mean + 0.5 * var)
}

/// `E[exp(a X^2 + b X + c Y)]` together with its decomposition in `(b, c)`.
///
/// Fails with [`Error::NotPositiveDefinite`] when `Sigma^-1 - diag(2a, 0)` is
/// not positive definite, i.e. when the expectation is infinite.
pub fn quad_exp_expectation(g: &BivariateGaussian, a: f64, b: f64, c: f64) -> Result<QuadExpResult> {
    let parts = match g.precision() {
        Some(prec) => precision_route(g, &prec, a)?,
        None => covariance_route(g, a)?,
    };
    Ok(parts.assemble(b, c))
}

struct Parts {
    log_prefactor: f64,
    pi: [[f64; 2]; 2],
    mu_a: f64,
    mu_b: f64,
    mu_c: f64,
}

impl Parts {
    fn assemble(self, b: f64, c: f64) -> QuadExpResult {
        let [[p11, p12], [_, p22]] = self.pi;
        let quad = p11 * b * b + 2.0 * p12 * b * c + p22 * c * c;
        let log_value =
            self.log_prefactor + 0.5 * (quad + 2.0 * self.mu_b * b + 2.0 * self.mu_c * c + self.mu_a);
        QuadExpResult {
            value: libm::exp(log_value),
            log_value,
            log_prefactor: self.log_prefactor,
            pi: self.pi,
            mu_a: self.mu_a,
            mu_b: self.mu_b,
            mu_c: self.mu_c,
        }
    }
}

/// Completing the square against the joint density: `Sigma* = Sigma^-1 -
/// diag(2a, 0)`, `mu* = Sigma^-1 mu + (b, c)`.
fn precision_route(g: &BivariateGaussian, prec: &[[f64; 2]; 2], a: f64) -> Result<Parts> {
    let [[t11, t12], [_, t22]] = *prec;
    let s11 = t11 - 2.0 * a;
    let det_star = s11 * t22 - t12 * t12;
    // relative to the diagonal, so the test does not depend on the units of
    // either coordinate
    if !(s11 > PD_TOLERANCE * t11) || !(det_star > PD_TOLERANCE * t11 * t22) {
        return Err(Error::NotPositiveDefinite);
    }
    let pi = [
        [t22 / det_star, -t12 / det_star],
        [-t12 / det_star, s11 / det_star],
    ];
    let det_prec = t11 * t22 - t12 * t12;

    let [mx, my] = g.mu;
    // h = Sigma^-1 mu
    let h = [t11 * mx + t12 * my, t12 * mx + t22 * my];
    let ph = [
        pi[0][0] * h[0] + pi[0][1] * h[1],
        pi[1][0] * h[0] + pi[1][1] * h[1],
    ];
    let mu_a = h[0] * ph[0] + h[1] * ph[1] - (mx * h[0] + my * h[1]);
    // det Sigma = 1 / det Sigma^-1
    let log_prefactor = -0.5 * libm::log(det_star / det_prec);
    Ok(Parts {
        log_prefactor,
        pi,
        mu_a,
        mu_b: ph[0],
        mu_c: ph[1],
    })
}

/// Same quantities written with the covariance matrix only, valid when a
/// coordinate has zero variance.
fn covariance_route(g: &BivariateGaussian, a: f64) -> Result<Parts> {
    let [sx, sy] = g.sigma;
    let [mx, my] = g.mu;
    let k = 1.0 - 2.0 * a * sx * sx;
    if !(k > PD_TOLERANCE) {
        return Err(Error::NotPositiveDefinite);
    }
    let cxy = g.rho_xy * sx * sy;
    let p11 = sx * sx / k;
    let p12 = cxy / k;
    let p22 = sy * sy + 2.0 * a * cxy * cxy / k;
    Ok(Parts {
        log_prefactor: -0.5 * libm::log(k),
        pi: [[p11, p12], [p12, p22]],
        mu_a: 2.0 * a * mx * mx / k,
        mu_b: mx / k,
        mu_c: my + 2.0 * a * mx * p12,
    })
}
