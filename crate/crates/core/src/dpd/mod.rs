//! Fully-featured (FF) and low-complexity (LC) predistorter structures.
//!
//! An FF predistorter gives every PA its own `Q` coefficients, stored as the
//! block vector `phi = [phi_1; ...; phi_S]`. An LC predistorter shares
//! coefficients across PAs according to a [`GroupingScheme`] and stores the
//! `N_m` distinct coefficients in `phi_bar`.

mod graph;
mod scheme;

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::gmp::BasisVector;
use crate::reshape;
use crate::{Error, Result};

pub use graph::structural_count;
pub use scheme::{build_scheme, ff_layout_hash, GroupingScheme, SchemeCase, SchemeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffShape {
    /// `Q * S` entries, PA-major.
    Ff,
    /// `N_m` entries in `phi_bar` order.
    Lc,
    /// `N_m` entries in the reshaped `phi_bar'` order.
    LcPrime,
    /// One `Q`-vector shared by every PA.
    Single,
}

/// A coefficient vector tagged with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVec {
    shape: CoeffShape,
    data: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct CoeffFile {
    scheme_hash: String,
    shape: CoeffShape,
    data: Vec<Complex64>,
}

impl CoeffVec {
    pub fn new(shape: CoeffShape, data: Vec<Complex64>) -> Self {
        Self { shape, data }
    }

    pub fn zeros(shape: CoeffShape, len: usize) -> Self {
        Self::new(shape, vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn shape(&self) -> CoeffShape {
        self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Checks finiteness and the length implied by the shape.
    pub fn validate(&self, s: usize, q: usize, scheme: Option<&GroupingScheme>) -> Result<()> {
        let expected = match (self.shape, scheme) {
            (CoeffShape::Ff, _) => q * s,
            (CoeffShape::Single, _) => q,
            (CoeffShape::Lc | CoeffShape::LcPrime, Some(sc)) => sc.n_m(),
            (CoeffShape::Lc | CoeffShape::LcPrime, None) => {
                return Err(Error::InvalidConfig(
                    "LC coefficient vector needs a grouping scheme".into(),
                ))
            }
        };
        if self.data.len() != expected {
            return Err(Error::shape(
                "coefficient vector",
                expected,
                self.data.len(),
            ));
        }
        if self.data.iter().any(|c| !c.is_finite()) {
            return Err(Error::NumericalBreakdown("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// JSON with a `{scheme_hash, shape}` header and `[re, im]` pairs.
    pub fn to_json(&self, scheme_hash: &str) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CoeffFile {
            scheme_hash: scheme_hash.to_owned(),
            shape: self.shape,
            data: self.data.clone(),
        })?)
    }

    /// Parses [`CoeffVec::to_json`] output, rejecting a mismatched scheme hash.
    pub fn from_json(text: &str, expected_hash: &str) -> Result<Self> {
        let file: CoeffFile = serde_json::from_str(text)?;
        if file.scheme_hash != expected_hash {
            return Err(Error::InvalidConfig(format!(
                "coefficient file was written for scheme {}, expected {expected_hash}",
                file.scheme_hash
            )));
        }
        Ok(Self::new(file.shape, file.data))
    }

    pub fn load(path: &Path, expected_hash: &str) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, expected_hash)
    }
}

/// Multiplier, adder and RF-chain counts of a predistorter structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub n_m: usize,
    pub n_a: usize,
    pub n_rf: usize,
}

impl ComplexityReport {
    /// Element-wise ratios `self / other` for (multipliers, adders, RF chains).
    pub fn ratios_over(&self, other: &ComplexityReport) -> (f64, f64, f64) {
        (
            self.n_m as f64 / other.n_m as f64,
            self.n_a as f64 / other.n_a as f64,
            self.n_rf as f64 / other.n_rf as f64,
        )
    }
}

/// Closed-form LC counts: `N_m = sum L_i`, `N_a = N_m - ceil(S r^(nu+g-1))`,
/// `N_RF = S r^nu`.
pub fn complexity(scheme: &GroupingScheme) -> ComplexityReport {
    let s = scheme.s();
    let n_m = match scheme.case() {
        SchemeCase::CaseI => scheme
            .n()
            .iter()
            .zip(scheme.repetition())
            .map(|(n, d)| n * s / d)
            .sum(),
        SchemeCase::CaseII => {
            let g = scheme.g();
            scheme.n()[..g - 1]
                .iter()
                .zip(scheme.repetition())
                .map(|(n, d)| n * s / d)
                .sum::<usize>()
                + scheme.n()[g - 1]
        }
    };
    ComplexityReport {
        n_m,
        n_a: n_m - scheme.independent_outputs(),
        n_rf: scheme.num_signals(),
    }
}

/// FF counts: `(Q S, (Q - 1) S, S)`.
pub fn ff_complexity(s: usize, q: usize) -> ComplexityReport {
    ComplexityReport {
        n_m: q * s,
        n_a: q.saturating_sub(1) * s,
        n_rf: s,
    }
}

/// Geometric-series form of `N_m` when every group has the same size `n`;
/// `None` for unequal group sizes.
pub fn equal_n_multipliers(scheme: &GroupingScheme) -> Option<f64> {
    let n = scheme.n();
    if n.windows(2).any(|w| w[0] != w[1]) {
        return None;
    }
    let (s, r, g) = (scheme.s() as f64, scheme.r(), scheme.g() as i32);
    let nn = n[0] as f64;
    let lead = nn * s * r.powi(scheme.nu() as i32);
    Some(match scheme.case() {
        SchemeCase::CaseI => lead * (1.0 - r.powi(g)) / (1.0 - r),
        SchemeCase::CaseII => lead * (1.0 - r.powi(g - 1)) / (1.0 - r) + n[n.len() - 1] as f64,
    })
}

#[inline]
fn dot(coeffs: &[Complex64], psi: &[Complex64]) -> Complex64 {
    coeffs.iter().zip(psi).map(|(c, p)| c * p).sum()
}

/// `x_l = phi_l^T psi` for every PA.
pub fn ff_predistort(phi: &CoeffVec, psi: &BasisVector, s: usize) -> Result<Vec<Complex64>> {
    let q = psi.len();
    if phi.shape() != CoeffShape::Ff {
        return Err(Error::InvalidConfig(format!(
            "expected FF coefficients, got {:?}",
            phi.shape()
        )));
    }
    if phi.len() != q * s {
        return Err(Error::shape("FF coefficients (Q*S)", q * s, phi.len()));
    }
    Ok(phi
        .data()
        .chunks_exact(q)
        .map(|c| dot(c, psi.values()))
        .collect())
}

/// The `sigma_bar_g` distinct predistorted signals of an LC predistorter.
pub fn lc_predistort(
    phi_bar: &CoeffVec,
    psi: &BasisVector,
    scheme: &GroupingScheme,
) -> Result<Vec<Complex64>> {
    if phi_bar.shape() != CoeffShape::Lc {
        return Err(Error::InvalidConfig(format!(
            "expected LC coefficients, got {:?}",
            phi_bar.shape()
        )));
    }
    if psi.len() != scheme.q() {
        return Err(Error::shape("basis vector", scheme.q(), psi.len()));
    }
    let m1 = reshape::build_m1(scheme);
    let expanded = CoeffVec::new(CoeffShape::Ff, m1.apply(phi_bar.data())?);
    let all = ff_predistort(&expanded, psi, scheme.s())?;
    Ok(all.into_iter().step_by(scheme.pas_per_signal()).collect())
}

/// Distributes signal `k` to PAs `k r^-nu .. (k + 1) r^-nu - 1`.
pub fn fan_out(x_bar: &[Complex64], scheme: &GroupingScheme) -> Result<Vec<Complex64>> {
    if x_bar.len() != scheme.num_signals() {
        return Err(Error::shape(
            "predistorted signals",
            scheme.num_signals(),
            x_bar.len(),
        ));
    }
    Ok((0..scheme.s())
        .map(|l| x_bar[scheme.signal_of_pa(l)])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn rand_vec(len: usize, seed: &mut u64) -> Vec<Complex64> {
        (0..len).map(|_| c(lcg(seed), lcg(seed))).collect()
    }

    #[test]
    fn two_group_scheme_complexity_and_ratios() {
        let sc = build_scheme(4, 1, 2, &[2, 2]).unwrap();
        let lc = complexity(&sc);
        let ff = ff_complexity(4, 4);
        assert_eq!(
            lc,
            ComplexityReport {
                n_m: 6,
                n_a: 5,
                n_rf: 2
            }
        );
        assert_eq!(
            ff,
            ComplexityReport {
                n_m: 16,
                n_a: 12,
                n_rf: 4
            }
        );
        let (m, a, rf) = ff.ratios_over(&lc);
        assert_eq!(format!("{m:.2}/{a:.1}/{rf:.0}"), "2.67/2.4/2");
    }

    #[test]
    fn evaluation_and_case_two_complexity() {
        let sc = build_scheme(8, 1, 2, &[4, 6]).unwrap();
        assert_eq!(
            complexity(&sc),
            ComplexityReport {
                n_m: 28,
                n_a: 26,
                n_rf: 4
            }
        );
        assert_eq!(
            ff_complexity(8, 10),
            ComplexityReport {
                n_m: 80,
                n_a: 72,
                n_rf: 8
            }
        );
        let sc2 = build_scheme(4, 1, 2, &[1, 1, 2]).unwrap();
        assert_eq!(
            complexity(&sc2),
            ComplexityReport {
                n_m: 5,
                n_a: 4,
                n_rf: 2
            }
        );
    }

    #[test]
    fn equal_n_form_agrees() {
        for (s, nu, r_inv, n) in [
            (4usize, 1u32, 2usize, vec![2usize, 2]),
            (16, 1, 2, vec![3, 3, 3]),
            (4, 1, 2, vec![2, 2, 2]),
            (32, 0, 4, vec![1, 1, 1]),
        ] {
            let sc = build_scheme(s, nu, r_inv, &n).unwrap();
            let eq = equal_n_multipliers(&sc).unwrap();
            assert!((eq - complexity(&sc).n_m as f64).abs() < 1e-9, "{n:?}");
        }
        let sc = build_scheme(8, 1, 2, &[4, 6]).unwrap();
        assert!(equal_n_multipliers(&sc).is_none());
    }

    #[test]
    fn ff_predistort_examples() {
        let psi = BasisVector(vec![c(0.5, -1.0)]);
        let phi = CoeffVec::new(CoeffShape::Ff, vec![c(2.0, 0.0), c(0.0, 1.0)]);
        let x = ff_predistort(&phi, &psi, 2).unwrap();
        assert_eq!(x, vec![c(1.0, -2.0), c(1.0, 0.5)]);
        let zero = CoeffVec::zeros(CoeffShape::Ff, 2);
        assert_eq!(ff_predistort(&zero, &psi, 2).unwrap(), vec![c(0.0, 0.0); 2]);
        assert!(ff_predistort(&phi, &psi, 3).is_err());

        let mut seed = 5;
        let row = rand_vec(3, &mut seed);
        let dup = CoeffVec::new(CoeffShape::Ff, [row.clone(), row].concat());
        let x = ff_predistort(&dup, &BasisVector(rand_vec(3, &mut seed)), 2).unwrap();
        assert_eq!(x[0], x[1]);
    }

    #[test]
    fn ff_predistort_is_bilinear() {
        let mut seed = 11;
        let (s, q) = (3, 4);
        let a = CoeffVec::new(CoeffShape::Ff, rand_vec(q * s, &mut seed));
        let b = CoeffVec::new(CoeffShape::Ff, rand_vec(q * s, &mut seed));
        let u = BasisVector(rand_vec(q, &mut seed));
        let v = BasisVector(rand_vec(q, &mut seed));
        let (al, be) = (c(0.3, -1.2), c(-0.7, 0.4));
        let mix_phi = CoeffVec::new(
            CoeffShape::Ff,
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| al * x + be * y)
                .collect(),
        );
        let lhs = ff_predistort(&mix_phi, &u, s).unwrap();
        let xa = ff_predistort(&a, &u, s).unwrap();
        let xb = ff_predistort(&b, &u, s).unwrap();
        for l in 0..s {
            assert!((lhs[l] - (al * xa[l] + be * xb[l])).norm() < 1e-13);
        }
        let mix_psi = BasisVector(u.0.iter().zip(&v.0).map(|(x, y)| al * x + be * y).collect());
        let lhs = ff_predistort(&a, &mix_psi, s).unwrap();
        let xv = ff_predistort(&a, &v, s).unwrap();
        for l in 0..s {
            assert!((lhs[l] - (al * xa[l] + be * xv[l])).norm() < 1e-13);
        }
    }

    #[test]
    fn lc_predistort_matches_expansion() {
        let sc = build_scheme(4, 1, 2, &[2, 2]).unwrap();
        let mut seed = 3;
        let phi_bar = CoeffVec::new(CoeffShape::Lc, rand_vec(6, &mut seed));
        let psi = BasisVector(rand_vec(4, &mut seed));
        let xb = lc_predistort(&phi_bar, &psi, &sc).unwrap();
        assert_eq!(xb.len(), 2);
        let x = fan_out(&xb, &sc).unwrap();
        assert_eq!(x[0], x[1]);
        assert_eq!(x[2], x[3]);
        let expanded = CoeffVec::new(
            CoeffShape::Ff,
            reshape::build_m1(&sc).apply(phi_bar.data()).unwrap(),
        );
        assert_eq!(x, ff_predistort(&expanded, &psi, 4).unwrap());

        let zero = CoeffVec::zeros(CoeffShape::Lc, 6);
        assert_eq!(
            lc_predistort(&zero, &psi, &sc).unwrap(),
            vec![c(0.0, 0.0); 2]
        );
        assert!(fan_out(&xb[..1], &sc).is_err());
    }

    #[test]
    fn coeff_json_round_trip() {
        let sc = build_scheme(4, 1, 2, &[2, 2]).unwrap();
        let v = CoeffVec::new(CoeffShape::Lc, vec![c(1.5, -0.25), c(0.0, 3.0)]);
        let json = v.to_json(&sc.hash()).unwrap();
        assert!(json.contains("\"shape\": \"lc\""));
        assert_eq!(CoeffVec::from_json(&json, &sc.hash()).unwrap(), v);
        assert!(CoeffVec::from_json(&json, &ff_layout_hash(4, 4)).is_err());
    }
}
