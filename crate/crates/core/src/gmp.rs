//! Generalized memory polynomial basis: terms `s(n-m) |s(n-m)|^p` over a
//! configurable active subset of the `P x M` grid.

use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dpd::{CoeffShape, CoeffVec};
use crate::waveform::ComplexSignal;
use crate::{Error, Result};

/// Mapping between grid cells `(p, m)` and the 1-based flat basis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexConvention {
    /// `p * M + m + 1`
    #[default]
    OrderMajor,
    /// `m * P + p + 1`
    DelayMajor,
}

/// Nonzero-coefficient index set observed for Saleh PAs with `P = M = 5`.
pub const SALEH_ACTIVE_SET: [usize; 10] = [4, 5, 9, 10, 14, 15, 19, 20, 24, 25];

/// Dominance ordering of [`SALEH_ACTIVE_SET`] used for the LC grouping.
pub const SALEH_DOMINANCE_ORDER: [usize; 10] = [4, 5, 14, 15, 19, 20, 24, 25, 9, 10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GmpConfig {
    order: usize,
    memory: usize,
    active_indices: Vec<usize>,
    dominance_order: Vec<usize>,
    #[serde(default)]
    convention: IndexConvention,
}

impl GmpConfig {
    /// Active set in the given order, which also serves as the dominance order.
    pub fn new(
        order: usize,
        memory: usize,
        active_indices: Vec<usize>,
        convention: IndexConvention,
    ) -> Result<Self> {
        let dominance = active_indices.clone();
        Self::with_dominance(order, memory, active_indices, dominance, convention)
    }

    pub fn with_dominance(
        order: usize,
        memory: usize,
        active_indices: Vec<usize>,
        dominance_order: Vec<usize>,
        convention: IndexConvention,
    ) -> Result<Self> {
        let cfg = Self {
            order,
            memory,
            active_indices,
            dominance_order,
            convention,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `P = M = 5` with the ten-element active set and its dominance ordering.
    pub fn saleh_default() -> Self {
        Self::with_dominance(
            5,
            5,
            SALEH_ACTIVE_SET.to_vec(),
            SALEH_DOMINANCE_ORDER.to_vec(),
            IndexConvention::OrderMajor,
        )
        .expect("built-in configuration is valid")
    }

    /// Every grid cell active, ordered by flat index.
    pub fn full(order: usize, memory: usize) -> Result<Self> {
        Self::new(
            order,
            memory,
            (1..=order * memory).collect(),
            IndexConvention::OrderMajor,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.memory == 0 {
            return Err(Error::InvalidConfig(
                "GMP order and memory must be positive".into(),
            ));
        }
        if self.active_indices.is_empty() {
            return Err(Error::InvalidConfig("GMP active index set is empty".into()));
        }
        let cells = self.order * self.memory;
        let mut seen = HashSet::new();
        for &i in &self.active_indices {
            if i == 0 || i > cells {
                return Err(Error::InvalidConfig(format!(
                    "active index {i} outside [1, {cells}]"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidConfig(format!("active index {i} repeated")));
            }
        }
        let mut dom: Vec<usize> = self.dominance_order.clone();
        let mut act: Vec<usize> = self.active_indices.clone();
        dom.sort_unstable();
        act.sort_unstable();
        if dom != act {
            return Err(Error::InvalidConfig(
                "dominance order is not a permutation of the active indices".into(),
            ));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.active_indices
    }

    pub fn dominance_order(&self) -> &[usize] {
        &self.dominance_order
    }

    pub fn convention(&self) -> IndexConvention {
        self.convention
    }

    /// Number of active basis functions.
    pub fn q(&self) -> usize {
        self.active_indices.len()
    }

    /// Replaces the dominance ordering.
    pub fn reordered(&self, dominance_order: Vec<usize>) -> Result<Self> {
        Self::with_dominance(
            self.order,
            self.memory,
            self.active_indices.clone(),
            dominance_order,
            self.convention,
        )
    }

    /// Inverse of [`flat_index`].
    pub fn cell(&self, index: usize) -> Result<(usize, usize)> {
        let cells = self.order * self.memory;
        if index == 0 || index > cells {
            return Err(Error::OutOfRange(format!(
                "basis index {index} outside [1, {cells}]"
            )));
        }
        let k = index - 1;
        Ok(match self.convention {
            IndexConvention::OrderMajor => (k / self.memory, k % self.memory),
            IndexConvention::DelayMajor => (k % self.order, k / self.order),
        })
    }

    /// `(p, m)` of each basis vector entry, in dominance order.
    pub fn terms(&self) -> Vec<(usize, usize)> {
        self.dominance_order
            .iter()
            .map(|&i| self.cell(i).expect("validated"))
            .collect()
    }

    /// Smallest delay among the active terms.
    ///
    /// A predistorter built from this basis cannot respond to `s(n)` before
    /// `s(n - latency)`, so the linearized output is compared against the
    /// reference delayed by this many samples.
    pub fn latency(&self) -> usize {
        self.terms()
            .iter()
            .map(|&(_, m)| m)
            .min()
            .expect("non-empty")
    }

    /// Position in the basis vector of the linear term `s(n - latency)`, if
    /// active; otherwise the lowest-order term at that delay.
    pub fn bypass_position(&self) -> usize {
        let d = self.latency();
        self.terms()
            .iter()
            .enumerate()
            .filter(|(_, &(_, m))| m == d)
            .min_by_key(|(_, &(p, _))| p)
            .map(|(pos, _)| pos)
            .expect("latency delay is active")
    }
}

/// 1-based flat index of grid cell `(p, m)`.
pub fn flat_index(p: usize, m: usize, config: &GmpConfig) -> Result<usize> {
    if p >= config.order || m >= config.memory {
        return Err(Error::OutOfRange(format!(
            "cell (p={p}, m={m}) outside P={} x M={}",
            config.order, config.memory
        )));
    }
    Ok(match config.convention {
        IndexConvention::OrderMajor => p * config.memory + m + 1,
        IndexConvention::DelayMajor => m * config.order + p + 1,
    })
}

/// `s(n-m) |s(n-m)|^p` where `history[k] = s(n-k)`; missing history is zero.
#[inline]
pub fn eval_basis_term(history: &[Complex64], p: usize, m: usize) -> Complex64 {
    match history.get(m) {
        Some(&z) => term(z, p),
        None => Complex64::new(0.0, 0.0),
    }
}

#[inline]
fn term(z: Complex64, p: usize) -> Complex64 {
    if p == 0 {
        z
    } else {
        z * z.norm().powi(p as i32)
    }
}

/// The evaluated length-`Q` basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector(pub Vec<Complex64>);

impl BasisVector {
    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Basis vector of `signal` at sample `n`, entries in dominance order.
/// Samples before the start of the record are treated as zero.
pub fn build_basis_vector(
    signal: &ComplexSignal,
    n: usize,
    config: &GmpConfig,
) -> Result<BasisVector> {
    let s = signal.samples();
    if n >= s.len() {
        return Err(Error::OutOfRange(format!(
            "sample {n} outside signal of length {}",
            s.len()
        )));
    }
    let history: Vec<Complex64> = (0..config.memory())
        .map_while(|m| n.checked_sub(m).map(|k| s[k]))
        .collect();
    Ok(BasisVector(
        config
            .terms()
            .into_iter()
            .map(|(p, m)| eval_basis_term(&history, p, m))
            .collect(),
    ))
}

/// Orders the active indices by decreasing mean coefficient magnitude across
/// the PAs of a trained FF coefficient vector; ties go to the smaller index.
pub fn estimate_dominance(ff_coeffs: &CoeffVec, config: &GmpConfig) -> Result<Vec<usize>> {
    let q = config.q();
    if ff_coeffs.shape() != CoeffShape::Ff {
        return Err(Error::InvalidConfig(format!(
            "dominance needs FF coefficients, got {:?}",
            ff_coeffs.shape()
        )));
    }
    let data = ff_coeffs.data();
    if data.is_empty() || data.len() % q != 0 {
        return Err(Error::shape(
            "FF coefficient vector (multiple of Q)",
            q,
            data.len(),
        ));
    }
    if data.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::Untrained);
    }
    let s = data.len() / q;
    let mut scored: Vec<(usize, f64)> = config
        .dominance_order()
        .iter()
        .enumerate()
        .map(|(pos, &idx)| {
            let mean = (0..s).map(|l| data[l * q + pos].norm()).sum::<f64>() / s as f64;
            (idx, mean)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(idx, _)| idx).collect())
}

/// Fixed-length history, newest sample first.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<Complex64>,
}

impl DelayLine {
    pub fn new(len: usize) -> Self {
        Self {
            buf: vec![Complex64::new(0.0, 0.0); len.max(1)],
        }
    }

    #[inline]
    pub fn push(&mut self, z: Complex64) {
        self.buf.rotate_right(1);
        self.buf[0] = z;
    }

    /// `history()[k]` is the sample pushed `k` steps ago.
    #[inline]
    pub fn history(&self) -> &[Complex64] {
        &self.buf
    }

    #[inline]
    pub fn oldest(&self) -> Complex64 {
        *self.buf.last().expect("non-empty")
    }
}

/// Precomputed term list for fast repeated evaluation from a [`DelayLine`].
#[derive(Debug, Clone)]
pub struct BasisEvaluator {
    terms: Vec<(usize, usize)>,
    memory: usize,
}

impl BasisEvaluator {
    pub fn new(config: &GmpConfig) -> Self {
        Self {
            terms: config.terms(),
            memory: config.memory(),
        }
    }

    pub fn q(&self) -> usize {
        self.terms.len()
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    #[inline]
    pub fn eval_into(&self, history: &[Complex64], out: &mut [Complex64]) {
        for (o, &(p, m)) in out.iter_mut().zip(&self.terms) {
            *o = eval_basis_term(history, p, m);
        }
    }
}
