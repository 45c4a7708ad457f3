//! Sparse reshape operators between the FF and LC coefficient layouts.
//!
//! * `M1` expands `phi_bar` (length `N_m`) into the FF layout (length `Q S`).
//! * `M2` averages FF coefficients back into `phi_bar`.
//! * `M3` permutes `phi_bar` into the per-signal branch layout `phi_bar'`.
//! * `M4,t` permutes `phi_bar` so that the `t`-th set of distinct coefficients,
//!   together with the common coefficients they share, comes first.
//!
//! Every nonzero entry is `1/den` for a positive integer `den`, so operator
//! identities can be checked in exact rational arithmetic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dpd::GroupingScheme;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    M1,
    M2,
    M3,
    /// 0-based position in the sequence.
    M4(usize),
    Other,
}

/// One nonzero matrix entry with value `1/den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub den: u32,
}

impl Entry {
    pub fn value(&self) -> f64 {
        1.0 / self.den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReshapeOp {
    kind: OpKind,
    rows: usize,
    cols: usize,
    /// Sorted by `(row, col)`.
    entries: Vec<Entry>,
}

impl ReshapeOp {
    pub fn new(kind: OpKind, rows: usize, cols: usize, mut entries: Vec<Entry>) -> Result<Self> {
        for e in &entries {
            if e.row >= rows || e.col >= cols || e.den == 0 {
                return Err(Error::OutOfRange(format!(
                    "entry ({}, {}, 1/{}) outside {rows}x{cols}",
                    e.row, e.col, e.den
                )));
            }
        }
        entries.sort_by_key(|e| (e.row, e.col));
        if entries
            .windows(2)
            .any(|w| (w[0].row, w[0].col) == (w[1].row, w[1].col))
        {
            return Err(Error::InvalidConfig("duplicate operator entry".into()));
        }
        Ok(Self {
            kind,
            rows,
            cols,
            entries,
        })
    }

    /// Row `i` takes column `cols_of_rows[i]` with value 1.
    fn gather(kind: OpKind, cols: usize, cols_of_rows: &[usize]) -> Self {
        let entries = cols_of_rows
            .iter()
            .enumerate()
            .map(|(row, &col)| Entry { row, col, den: 1 })
            .collect();
        Self::new(kind, cols_of_rows.len(), cols, entries).expect("indices in range")
    }

    pub fn identity(n: usize) -> Self {
        Self::gather(OpKind::Other, n, &(0..n).collect::<Vec<_>>())
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| Entry {
                row: e.col,
                col: e.row,
                den: e.den,
            })
            .collect();
        Self::new(self.kind, self.cols, self.rows, entries).expect("transpose stays in range")
    }

    /// `op * v`. Rows whose entries share one denominator are summed first and
    /// divided once, so pure gathers perform no arithmetic on the values.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::shape("reshape operand", self.cols, v.len()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        let mut k = 0;
        while k < self.entries.len() {
            let row = self.entries[k].row;
            let end = k + self.entries[k..]
                .iter()
                .take_while(|e| e.row == row)
                .count();
            let run = &self.entries[k..end];
            let den = run[0].den;
            out[row] = if run.iter().all(|e| e.den == den) {
                let sum = run[1..].iter().fold(v[run[0].col], |acc, e| acc + v[e.col]);
                if den == 1 {
                    sum
                } else {
                    sum / den as f64
                }
            } else {
                run.iter().map(|e| v[e.col] / e.den as f64).sum()
            };
            k = end;
        }
        Ok(out)
    }

    /// `op^T * v`.
    pub fn apply_transpose(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.transpose().apply(v)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.cols]; self.rows];
        for e in &self.entries {
            m[e.row][e.col] = e.value();
        }
        m
    }

    /// Sparse triplet dump for debugging.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Whether every row and every column holds exactly one entry equal to 1.
    pub fn is_permutation(&self) -> bool {
        if self.rows != self.cols || self.entries.len() != self.rows {
            return false;
        }
        let mut col_seen = vec![false; self.cols];
        let mut row_seen = vec![false; self.rows];
        for e in &self.entries {
            if e.den != 1 || row_seen[e.row] || col_seen[e.col] {
                return false;
            }
            row_seen[e.row] = true;
            col_seen[e.col] = true;
        }
        true
    }

    /// Columns feeding rows `0..len` of a gather operator.
    pub fn gathered_columns(&self, len: usize) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.row < len)
            .map(|e| e.col)
            .collect()
    }
}

/// Expansion `phi = M1 phi_bar` (`Q S x N_m`).
pub fn build_m1(scheme: &GroupingScheme) -> ReshapeOp {
    let q = scheme.q();
    let cols: Vec<usize> = (0..scheme.s() * q)
        .map(|row| scheme.coeff_index(row / q, row % q))
        .collect();
    ReshapeOp::gather(OpKind::M1, scheme.n_m(), &cols)
}

/// Averaging `phi_bar = M2 phi` (`N_m x Q S`); each nonzero is one over the
/// number of FF replicas of that LC coefficient.
pub fn build_m2(scheme: &GroupingScheme) -> ReshapeOp {
    let q = scheme.q();
    let entries = (0..scheme.s() * q)
        .map(|col| {
            let bf = col % q;
            Entry {
                row: scheme.coeff_index(col / q, bf),
                col,
                den: scheme.block_sizes()[scheme.group_of_bf(bf)] as u32,
            }
        })
        .collect();
    ReshapeOp::new(OpKind::M2, scheme.n_m(), scheme.s() * q, entries).expect("indices in range")
}

/// Permutation `phi_bar' = M3 phi_bar` into per-signal branches.
pub fn build_m3(scheme: &GroupingScheme) -> ReshapeOp {
    let cols: Vec<usize> = scheme.branches().concat();
    ReshapeOp::gather(OpKind::M3, scheme.n_m(), &cols)
}

/// The Method-III sequence. Operator `t` places, for each of the `T_1`
/// common-coefficient blocks, the full `Q` coefficients of signal
/// `b * K + t` (`K` = sequence length) first, followed by all remaining
/// coefficients in ascending `phi_bar` order.
pub fn build_m4_sequence(scheme: &GroupingScheme) -> Vec<ReshapeOp> {
    let k = scheme.m4_count();
    let n_m = scheme.n_m();
    (0..k)
        .map(|t| {
            let mut cols = Vec::with_capacity(n_m);
            for b in 0..scheme.t()[0] {
                cols.extend(scheme.signal_coeffs(b * k + t));
            }
            let mut used = vec![false; n_m];
            for &c in &cols {
                used[c] = true;
            }
            cols.extend((0..n_m).filter(|&c| !used[c]));
            ReshapeOp::gather(OpKind::M4(t), n_m, &cols)
        })
        .collect()
}

/// First `q` entries of `v`.
pub fn trunc(v: &[Complex64], q: usize) -> Result<Vec<Complex64>> {
    if v.len() < q {
        return Err(Error::TooShort {
            needed: q,
            have: v.len(),
        });
    }
    Ok(v[..q].to_vec())
}

/// `b` with its first `q` entries replaced by `a`.
pub fn merge(a: &[Complex64], b: &[Complex64], q: usize) -> Result<Vec<Complex64>> {
    if a.len() != q {
        return Err(Error::shape("merge head", q, a.len()));
    }
    if b.len() < q {
        return Err(Error::TooShort {
            needed: q,
            have: b.len(),
        });
    }
    let mut out = b.to_vec();
    out[..q].copy_from_slice(a);
    Ok(out)
}
