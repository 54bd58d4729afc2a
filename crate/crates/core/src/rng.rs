//! Counter-based Gaussian shocks.
//!
//! Every `(seed, path, t)` triple addresses its own position in a ChaCha8
//! keystream (stream = path, word offset = t), so a path can be simulated on
//! any worker in any order and still see the same numbers.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::market::{EnvParams, Shocks};

/// 32-bit words reserved per period; one normal pair uses four.
const WORDS_PER_PERIOD: u128 = 8;

/// Uniform in `(0, 1]` from the top 53 bits.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Two independent standard normals by Box-Muller.
fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = open_unit(rng);
    let u2 = open_unit(rng);
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let (s, c) = libm::sincos(core::f64::consts::TAU * u2);
    (r * c, r * s)
}

/// Shocks `(omega_t, eps_t)` of path `path` in the `t -> t + 1` transition:
/// `omega_t` is standard normal and `eps_t = sigma^eps_t (rho w + sqrt(1 -
/// rho^2) w')`.
pub fn draw_shocks(seed: u64, path: u64, t: usize, env: &EnvParams) -> Shocks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng.set_word_pos(t as u128 * WORDS_PER_PERIOD);
    let (w, w2) = normal_pair(&mut rng);
    let rho = env.rho_env_eps;
    Shocks {
        omega: w,
        eps: env.sigma_eps(t) * (rho * w + libm::sqrt(1.0 - rho * rho) * w2),
    }
}

/// Sequential stream of independent standard normals, for bulk Monte Carlo
/// where per-draw addressing is not needed.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (a, b) = normal_pair(&mut self.rng);
        self.spare = Some(b);
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(xs: &[(f64, f64)]) -> f64 {
        let n = xs.len() as f64;
        let (mx, my) = xs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for &(x, y) in xs {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        sxy / libm::sqrt(sxx * syy)
    }

    #[test]
    fn addressing_is_pure() {
        let env = EnvParams::benchmark(10);
        let a = draw_shocks(7, 3, 5, &env);
        let _ = draw_shocks(7, 4, 5, &env);
        assert_eq!(a, draw_shocks(7, 3, 5, &env));
        assert_ne!(a, draw_shocks(7, 3, 6, &env));
        assert_ne!(a, draw_shocks(7, 2, 5, &env));
        assert_ne!(a, draw_shocks(8, 3, 5, &env));
    }

    #[test]
    fn zero_news_variance() {
        let mut env = EnvParams::benchmark(4);
        env.sigma_eps = alloc::vec![0.0; 4];
        env.rho_env_eps = 0.5;
        for p in 0..100 {
            assert_eq!(draw_shocks(1, p, 2, &env).eps, 0.0);
        }
    }

    #[test]
    fn correlation_of_shock_pair() {
        for (rho, tol) in [(0.0, 0.005), (0.8, 0.01)] {
            let mut env = EnvParams::constant(1, 0.0, 0.0, 1.0, 1.0, rho);
            env.sigma_eps[0] = 1.0;
            let xs: alloc::vec::Vec<(f64, f64)> = (0..1_000_000u64)
                .map(|p| {
                    let s = draw_shocks(11, p, 1, &env);
                    (s.omega, s.eps)
                })
                .collect();
            assert!((corr(&xs) - rho).abs() < tol, "rho {rho}: {}", corr(&xs));
        }
    }

    #[test]
    fn stream_moments() {
        let mut s = NormalStream::new(3, 0);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.next_normal();
            m1 += z;
            m2 += z * z;
        }
        assert!((m1 / n as f64).abs() < 0.01);
        assert!((m2 / n as f64 - 1.0).abs() < 0.02);
    }
}
