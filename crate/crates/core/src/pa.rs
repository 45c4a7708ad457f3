//! Saleh-model power amplifiers for an `S`-element subarray.
//!
//! AM/AM: `A(r) = alpha_a r / (1 + beta_a r^2)`,
//! AM/PM: `Phi(r) = alpha_phi r^2 / (1 + beta_phi r^2)`.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub(crate) const PA_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalehParams {
    pub alpha_a: f64,
    pub beta_a: f64,
    pub alpha_phi: f64,
    pub beta_phi: f64,
}

impl SalehParams {
    /// Base parameters of the randomized PA population.
    pub const fn nominal() -> Self {
        Self {
            alpha_a: 0.9445,
            beta_a: 0.5138,
            alpha_phi: 4.0033,
            beta_phi: 9.1040,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_a > 0.0
            && self.beta_a > 0.0
            && self.beta_phi > 0.0
            && self.alpha_phi.is_finite()
            && self.alpha_a.is_finite()
            && self.beta_a.is_finite()
            && self.beta_phi.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid Saleh parameters {self:?}"
            )))
        }
    }

    /// Small-signal gain `G` of the AM/AM curve, used to scale the feedback path.
    pub fn linear_gain(&self) -> f64 {
        self.alpha_a
    }

    /// Input amplitude at which the AM/AM curve peaks, `1/sqrt(beta_a)`.
    pub fn saturation_amplitude(&self) -> f64 {
        1.0 / self.beta_a.sqrt()
    }
}

fn check_amplitude(r: f64) -> Result<()> {
    if r >= 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!(
            "amplitude must be non-negative, got {r}"
        )))
    }
}

pub fn saleh_amam(r: f64, p: &SalehParams) -> Result<f64> {
    check_amplitude(r)?;
    Ok(amam(r, p))
}

pub fn saleh_ampm(r: f64, p: &SalehParams) -> Result<f64> {
    check_amplitude(r)?;
    Ok(ampm(r, p))
}

#[inline]
fn amam(r: f64, p: &SalehParams) -> f64 {
    p.alpha_a * r / (1.0 + p.beta_a * r * r)
}

#[inline]
fn ampm(r: f64, p: &SalehParams) -> f64 {
    let r2 = r * r;
    p.alpha_phi * r2 / (1.0 + p.beta_phi * r2)
}

/// Memoryless Saleh nonlinearity applied to a complex input.
#[inline]
pub fn saleh(u: Complex64, p: &SalehParams) -> Complex64 {
    let r = u.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    // u/r carries arg(u); rotate by the AM/PM shift and scale to the AM/AM amplitude.
    (u / r) * Complex64::from_polar(amam(r, p), ampm(r, p))
}

/// The subarray: one Saleh PA and one unit-modulus beamforming weight per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaBank {
    pas: Vec<SalehParams>,
    weights: Vec<Complex64>,
}

impl PaBank {
    /// Bank with unit beamforming weights.
    pub fn new(pas: Vec<SalehParams>) -> Result<Self> {
        let weights = vec![Complex64::new(1.0, 0.0); pas.len()];
        Self::with_weights(pas, weights)
    }

    pub fn with_weights(pas: Vec<SalehParams>, weights: Vec<Complex64>) -> Result<Self> {
        if pas.is_empty() {
            return Err(Error::InvalidConfig("PA bank needs at least one PA".into()));
        }
        if weights.len() != pas.len() {
            return Err(Error::shape(
                "beamforming weights",
                pas.len(),
                weights.len(),
            ));
        }
        for p in &pas {
            p.validate()?;
        }
        if let Some(w) = weights.iter().find(|w| (w.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "beamforming weight {w} is not unit modulus"
            )));
        }
        Ok(Self { pas, weights })
    }

    pub fn len(&self) -> usize {
        self.pas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pas.is_empty()
    }

    pub fn params(&self) -> &[SalehParams] {
        &self.pas
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bank: PaBank = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::with_weights(bank.pas, bank.weights)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Output of PA `l` for predistorted input `x`: `f_l(w_l x)`.
#[inline]
pub fn apply_pa(x: Complex64, l: usize, bank: &PaBank) -> Complex64 {
    saleh(bank.weights[l] * x, &bank.pas[l])
}

/// Draws `s` PA parameter sets around the nominal values with independent
/// uniform offsets: `alpha_a + 0.1u`, `beta_a + 0.1v`, `alpha_phi + u'`,
/// `beta_phi + v'`.
pub fn sample_pa_params(s: usize, seed: u64) -> Result<Vec<SalehParams>> {
    if s == 0 {
        return Err(Error::InvalidConfig("need at least one PA".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PA_STREAM);
    let base = SalehParams::nominal();
    Ok((0..s)
        .map(|_| SalehParams {
            alpha_a: base.alpha_a + 0.1 * rng.gen::<f64>(),
            beta_a: base.beta_a + 0.1 * rng.gen::<f64>(),
            alpha_phi: base.alpha_phi + rng.gen::<f64>(),
            beta_phi: base.beta_phi + rng.gen::<f64>(),
        })
        .collect())
}

/// Inverse-gain scaling of a PA output for the feedback path, `y / G`.
#[inline]
pub fn feedback_scale(y: Complex64, p: &SalehParams) -> Complex64 {
    y / p.linear_gain()
}
