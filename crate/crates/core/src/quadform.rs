//! Quadratic forms in the stage variables
//! `z = (q_own, q_opp, Q_own, Q_opp, R, y, 1)`.
//!
//! The backward recursion builds each trader's certainty-equivalent stage
//! objective as a form `z' S z` and reads the coefficients off `S`, so no
//! coefficient formula has to be expanded by hand.

pub(crate) const DIM: usize = 7;

pub(crate) const Q_OWN: usize = 0;
pub(crate) const Q_OPP: usize = 1;
pub(crate) const INV_OWN: usize = 2;
pub(crate) const INV_OPP: usize = 3;
pub(crate) const RES: usize = 4;
pub(crate) const ENV: usize = 5;
pub(crate) const ONE: usize = 6;

/// Affine function `l . z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Affine(pub [f64; DIM]);

impl Affine {
    pub fn var(i: usize) -> Self {
        let mut c = [0.0; DIM];
        c[i] = 1.0;
        Self(c)
    }

    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; DIM];
        c[ONE] = v;
        Self(c)
    }

    pub fn scale(self, k: f64) -> Self {
        let mut c = self.0;
        for v in &mut c {
            *v *= k;
        }
        Self(c)
    }

    pub fn plus(self, other: Self) -> Self {
        let mut c = self.0;
        for (v, o) in c.iter_mut().zip(other.0) {
            *v += o;
        }
        Self(c)
    }

    pub fn minus(self, other: Self) -> Self {
        self.plus(other.scale(-1.0))
    }

    pub fn coef(&self, i: usize) -> f64 {
        self.0[i]
    }

    #[cfg(test)]
    pub fn eval(&self, z: &[f64; DIM]) -> f64 {
        self.0.iter().zip(z).map(|(c, v)| c * v).sum()
    }
}

/// Symmetric quadratic form `z' S z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct QuadForm(pub [[f64; DIM]; DIM]);

impl QuadForm {
    /// Adds `k * l1(z) * l2(z)`.
    pub fn add_product(&mut self, k: f64, l1: &Affine, l2: &Affine) {
        for i in 0..DIM {
            for j in 0..DIM {
                self.0[i][j] += 0.5 * k * (l1.0[i] * l2.0[j] + l1.0[j] * l2.0[i]);
            }
        }
    }

    /// Adds `k * l(z)`.
    pub fn add_linear(&mut self, k: f64, l: &Affine) {
        self.add_product(k, l, &Affine::constant(1.0));
    }

    /// Coefficient of the monomial `z_i z_j` in the expanded polynomial.
    pub fn coef(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.0[i][i]
        } else {
            self.0[i][j] + self.0[j][i]
        }
    }

    #[cfg(test)]
    pub fn eval(&self, z: &[f64; DIM]) -> f64 {
        let mut acc = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                acc += z[i] * self.0[i][j] * z[j];
            }
        }
        acc
    }

    /// Form obtained by replacing every variable `z_i` with the affine map
    /// `map[i]` of new variables.
    #[cfg(test)]
    pub fn substitute(&self, map: &[Affine; DIM]) -> QuadForm {
        let mut out = QuadForm::default();
        for i in 0..DIM {
            for j in 0..DIM {
                let s = self.0[i][j];
                if s != 0.0 {
                    out.add_product(s, &map[i], &map[j]);
                }
            }
        }
        out
    }
}
