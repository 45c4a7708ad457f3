//! Recursive prediction error kernel for one branch.
//!
//! Per step, with `psi` the postdistorter basis vector:
//!
//! ```text
//! xi <- rho xi + 1 - rho
//! Z  <- psi^T P psi* + xi                       (scalar)
//! P  <- (P - P psi* Z^-1 psi^T P) / xi
//! c  <- c + P psi* e
//! ```
//!
//! `P` is re-symmetrized after each update to suppress Hermitian drift.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpemHyper {
    pub rho: f64,
    pub lambda0: f64,
    pub mu: f64,
}

impl Default for RpemHyper {
    fn default() -> Self {
        Self {
            rho: 0.95,
            lambda0: 0.99,
            mu: 0.2,
        }
    }
}

impl RpemHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if !(self.lambda0 > 0.0 && self.lambda0 <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda0 must lie in (0, 1], got {}",
                self.lambda0
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// Covariance, forgetting factor and coefficients of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct RpemBranch {
    dim: usize,
    /// Row-major `dim x dim`.
    p: Vec<Complex64>,
    xi: f64,
    coeffs: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RpemBranch {
    /// `P = mu I`, `xi = lambda0`.
    pub fn new(coeffs: Vec<Complex64>, hyper: &RpemHyper) -> Self {
        let dim = coeffs.len();
        let mut p = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            p[i * dim + i] = Complex64::new(hyper.mu, 0.0);
        }
        Self {
            dim,
            p,
            xi: hyper.lambda0,
            coeffs,
            scratch: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> &[Complex64] {
        &self.p
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Postdistorter output `c^T psi`.
    #[inline]
    pub fn output(&self, psi: &[Complex64]) -> Complex64 {
        self.coeffs.iter().zip(psi).map(|(c, p)| c * p).sum()
    }

    /// Largest `|P - P^H|` entry.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.p[i * n + j] - self.p[j * n + i].conj()).norm());
            }
        }
        worst
    }

    /// Advances `xi` and `P` and leaves the gain `P psi*` in the scratch
    /// buffer. Returns `Z`.
    fn advance(&mut self, psi: &[Complex64], hyper: &RpemHyper) -> Result<f64> {
        let n = self.dim;
        if psi.len() != n {
            return Err(Error::shape("RPEM basis vector", n, psi.len()));
        }
        self.xi = hyper.rho * self.xi + 1.0 - hyper.rho;

        // v = P psi*, Z = psi^T v + xi
        let v = &mut self.scratch;
        let mut z = Complex64::new(self.xi, 0.0);
        for i in 0..n {
            let row = &self.p[i * n..(i + 1) * n];
            v[i] = row.iter().zip(psi).map(|(a, b)| a * b.conj()).sum();
            z += psi[i] * v[i];
        }
        let z = z.re;
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::NumericalBreakdown(format!(
                "Z = {z} is not positive"
            )));
        }

        // P <- (P - v v^H / Z) / xi, then (P + P^H) / 2
        let (inv_z, inv_xi) = (1.0 / z, 1.0 / self.xi);
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                self.p[k] = (self.p[k] - v[i] * v[j].conj() * inv_z) * inv_xi;
            }
        }
        for i in 0..n {
            self.p[i * n + i].im = 0.0;
            for j in i + 1..n {
                let avg = (self.p[i * n + j] + self.p[j * n + i].conj()) * 0.5;
                self.p[i * n + j] = avg;
                self.p[j * n + i] = avg.conj();
            }
        }

        // gain = P_new psi*
        for i in 0..n {
            let row = &self.p[i * n..(i + 1) * n];
            v[i] = row.iter().zip(psi).map(|(a, b)| a * b.conj()).sum();
        }
        Ok(z)
    }

    /// One recursion with a scalar prediction error.
    pub fn step(&mut self, psi: &[Complex64], e: Complex64, hyper: &RpemHyper) -> Result<f64> {
        if !e.is_finite() || psi.iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericalBreakdown("non-finite RPEM input".into()));
        }
        let z = self.advance(psi, hyper)?;
        for (c, g) in self.coeffs.iter_mut().zip(&self.scratch) {
            *c += g * e;
        }
        Ok(z)
    }

    /// One recursion where each coefficient has its own error (Hadamard form).
    pub fn step_hadamard(
        &mut self,
        psi: &[Complex64],
        errors: &[Complex64],
        hyper: &RpemHyper,
    ) -> Result<f64> {
        if errors.len() != self.dim {
            return Err(Error::shape("RPEM error vector", self.dim, errors.len()));
        }
        if errors.iter().chain(psi).any(|x| !x.is_finite()) {
            return Err(Error::NumericalBreakdown("non-finite RPEM input".into()));
        }
        let z = self.advance(psi, hyper)?;
        for ((c, g), e) in self.coeffs.iter_mut().zip(&self.scratch).zip(errors) {
            *c += g * e;
        }
        Ok(z)
    }
}

/// Free-function form of [`RpemBranch::step`].
pub fn rpem_step(
    state: &mut RpemBranch,
    psi_prime: &[Complex64],
    e: Complex64,
    hyper: &RpemHyper,
) -> Result<()> {
    state.step(psi_prime, e, hyper).map(|_| ())
}
