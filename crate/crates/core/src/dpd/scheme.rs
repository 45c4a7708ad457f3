//! Geometric grouping of basis functions for the LC structure.
//!
//! The `Q` dominance-ordered basis functions are split into `g` groups of
//! sizes `n_1..n_g`. Each basis function of group `i` is multiplied by
//! `S r^(nu+i-1)` distinct coefficients, each shared by a block of
//! `r^-(nu+i-1)` consecutive PAs. When `S r^(nu+g-1) < 1` (Case II) the
//! last group collapses to a single coefficient per basis function shared by
//! all `S` PAs.
//!
//! Layout of the LC vector `phi_bar`: group-major, then basis function, then
//! block. Layout of the reshaped `phi_bar'`: one branch per predistorted
//! signal, holding every coefficient that signal is the first to use.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeCase {
    CaseI,
    CaseII,
}

/// User-facing parameters of a grouping scheme. `r = 1 / r_inv`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeParams {
    pub s: usize,
    pub nu: u32,
    pub r_inv: usize,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingScheme {
    params: SchemeParams,
    case: SchemeCase,
    q: usize,
    /// `r^-(nu+i-1)` per group.
    denom: Vec<usize>,
    /// Coefficients per basis function in each group.
    coeffs_per_bf: Vec<usize>,
    /// Number of PAs sharing each coefficient of a group.
    block: Vec<usize>,
    /// `sigma_i`: number of basis functions before group `i`.
    sigma: Vec<usize>,
    /// Offset of each group in `phi_bar`.
    offset: Vec<usize>,
    group_of_bf: Vec<usize>,
    /// Number of leading groups whose coefficients each signal owns.
    depth: Vec<usize>,
    t: Vec<usize>,
    j: Vec<usize>,
    /// Signal order of the `phi_bar'` branches.
    branch_signals: Vec<usize>,
}

fn checked_pow(base: usize, exp: u32) -> Result<usize> {
    base.checked_pow(exp)
        .ok_or_else(|| Error::InvalidScheme(format!("{base}^{exp} overflows")))
}

/// Builds and classifies a grouping scheme with `r = 1 / r_inv`.
pub fn build_scheme(s: usize, nu: u32, r_inv: usize, n: &[usize]) -> Result<GroupingScheme> {
    GroupingScheme::new(SchemeParams {
        s,
        nu,
        r_inv,
        n: n.to_vec(),
    })
}

impl GroupingScheme {
    pub fn new(params: SchemeParams) -> Result<Self> {
        let SchemeParams {
            s,
            nu,
            r_inv,
            ref n,
        } = params;
        if s == 0 {
            return Err(Error::InvalidScheme("S must be positive".into()));
        }
        if r_inv < 2 {
            return Err(Error::InvalidScheme(format!(
                "common ratio must be 1/k with integer k >= 2, got 1/{r_inv}"
            )));
        }
        if n.is_empty() {
            return Err(Error::InvalidScheme("n-list is empty".into()));
        }
        if let Some(pos) = n.iter().position(|&x| x == 0) {
            return Err(Error::InvalidScheme(format!("n[{pos}] must be positive")));
        }
        let g = n.len();
        let denom = (0..g)
            .map(|i| checked_pow(r_inv, nu + i as u32))
            .collect::<Result<Vec<_>>>()?;

        let case = if s >= denom[g - 1] {
            SchemeCase::CaseI
        } else if g >= 2 && s >= denom[g - 2] {
            SchemeCase::CaseII
        } else {
            return Err(Error::InvalidScheme(format!(
                "S r^(nu+g-2) = {s}/{} < 1: neither case holds",
                denom[g.saturating_sub(2)]
            )));
        };
        let integral_groups = match case {
            SchemeCase::CaseI => g,
            SchemeCase::CaseII => g - 1,
        };
        for (i, &d) in denom.iter().take(integral_groups).enumerate() {
            if s % d != 0 {
                return Err(Error::InvalidScheme(format!(
                    "S r^(nu+{i}) = {s}/{d} is not an integer (group {})",
                    i + 1
                )));
            }
        }

        let mut coeffs_per_bf: Vec<usize> = denom.iter().map(|&d| s / d).collect();
        let mut block = denom.clone();
        if case == SchemeCase::CaseII {
            coeffs_per_bf[g - 1] = 1;
            block[g - 1] = s;
        }

        let q = n.iter().sum();
        let mut sigma = Vec::with_capacity(g);
        let mut offset = Vec::with_capacity(g);
        let (mut acc_bf, mut acc_off) = (0, 0);
        let mut group_of_bf = Vec::with_capacity(q);
        for i in 0..g {
            sigma.push(acc_bf);
            offset.push(acc_off);
            acc_bf += n[i];
            acc_off += n[i] * coeffs_per_bf[i];
            group_of_bf.extend(std::iter::repeat(i).take(n[i]));
        }

        let signals = s / denom[0];
        let depth: Vec<usize> = (0..signals)
            .map(|k| {
                block
                    .iter()
                    .take_while(|&&b| (k * denom[0]) % b == 0)
                    .count()
            })
            .collect();
        let t: Vec<usize> = (0..g)
            .map(|jj| depth.iter().filter(|&&h| h == g - jj).count())
            .collect();
        let j: Vec<usize> = (0..g).map(|jj| n[..g - jj].iter().sum()).collect();
        let mut branch_signals: Vec<usize> = (0..signals).collect();
        branch_signals.sort_by_key(|&k| (std::cmp::Reverse(depth[k]), k));

        Ok(Self {
            params,
            case,
            q,
            denom,
            coeffs_per_bf,
            block,
            sigma,
            offset,
            group_of_bf,
            depth,
            t,
            j,
            branch_signals,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn s(&self) -> usize {
        self.params.s
    }

    pub fn nu(&self) -> u32 {
        self.params.nu
    }

    pub fn r_inv(&self) -> usize {
        self.params.r_inv
    }

    pub fn r(&self) -> f64 {
        1.0 / self.params.r_inv as f64
    }

    pub fn n(&self) -> &[usize] {
        &self.params.n
    }

    pub fn g(&self) -> usize {
        self.params.n.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn case(&self) -> SchemeCase {
        self.case
    }

    /// Coefficients per basis function in each group (`S r^(nu+i-1)`, or 1
    /// for the last group in Case II).
    pub fn coeffs_per_bf(&self) -> &[usize] {
        &self.coeffs_per_bf
    }

    /// PAs sharing one coefficient of each group.
    pub fn block_sizes(&self) -> &[usize] {
        &self.block
    }

    /// `r^-(nu+i-1)` for every group.
    pub fn repetition(&self) -> &[usize] {
        &self.denom
    }

    /// Coefficient count per group, `L_i = n_i * coeffs_per_bf_i`.
    pub fn group_lengths(&self) -> Vec<usize> {
        self.params
            .n
            .iter()
            .zip(&self.coeffs_per_bf)
            .map(|(n, c)| n * c)
            .collect()
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn group_offsets(&self) -> &[usize] {
        &self.offset
    }

    pub fn group_of_bf(&self, q: usize) -> usize {
        self.group_of_bf[q]
    }

    /// Total LC coefficient count `N_m`.
    pub fn n_m(&self) -> usize {
        self.group_lengths().iter().sum()
    }

    /// PAs fed by each predistorted signal, `r^-nu`.
    pub fn pas_per_signal(&self) -> usize {
        self.denom[0]
    }

    /// Number of distinct predistorted signals, `sigma_bar_g = S r^nu`.
    pub fn num_signals(&self) -> usize {
        self.params.s / self.denom[0]
    }

    /// Signal feeding PA `l`.
    pub fn signal_of_pa(&self, l: usize) -> usize {
        l / self.denom[0]
    }

    /// Number of predistorted outputs using a fully distinct coefficient set,
    /// `ceil(S r^(nu+g-1))`.
    pub fn independent_outputs(&self) -> usize {
        self.params.s.div_ceil(self.denom[self.g() - 1])
    }

    pub fn t(&self) -> &[usize] {
        &self.t
    }

    pub fn j(&self) -> &[usize] {
        &self.j
    }

    /// Prefix sums `sigma_bar_j = T_1 + ... + T_j`.
    pub fn sigma_bar(&self) -> Vec<usize> {
        self.t
            .iter()
            .scan(0, |acc, &x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }

    /// Number of operators in the Method-III sequence, `sigma_bar_g / T_1`
    /// (equal to `r^-(g-1)` in Case I).
    pub fn m4_count(&self) -> usize {
        self.num_signals() / self.t[0]
    }

    /// Index in `phi_bar` of the coefficient that multiplies basis function
    /// `q` for PA `l` (both 0-based).
    #[inline]
    pub fn coeff_index(&self, l: usize, q: usize) -> usize {
        let i = self.group_of_bf[q];
        self.offset[i] + (q - self.sigma[i]) * self.coeffs_per_bf[i] + l / self.block[i]
    }

    /// `phi_bar` indices used by signal `k`, in basis-function order.
    pub fn signal_coeffs(&self, k: usize) -> Vec<usize> {
        let lead = k * self.denom[0];
        (0..self.q).map(|q| self.coeff_index(lead, q)).collect()
    }

    /// Number of leading groups whose coefficients signal `k` is the first
    /// user of.
    pub fn signal_depth(&self, k: usize) -> usize {
        self.depth[k]
    }

    /// Signals in `phi_bar'` branch order.
    pub fn branch_signals(&self) -> &[usize] {
        &self.branch_signals
    }

    /// `phi_bar` indices of each `phi_bar'` branch.
    pub fn branches(&self) -> Vec<Vec<usize>> {
        self.branch_signals
            .iter()
            .map(|&k| {
                let n_bf = self.sigma.get(self.depth[k]).copied().unwrap_or(self.q);
                let lead = k * self.denom[0];
                (0..n_bf).map(|q| self.coeff_index(lead, q)).collect()
            })
            .collect()
    }

    /// Stable hash of the scheme parameters, used to tag serialized
    /// coefficient vectors.
    pub fn hash(&self) -> String {
        let p = &self.params;
        let text = format!("lc;S={};nu={};r_inv={};n={:?}", p.s, p.nu, p.r_inv, p.n);
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Hash tag for coefficient vectors without an LC scheme (FF and single DPD).
pub fn ff_layout_hash(s: usize, q: usize) -> String {
    hex::encode(Sha256::digest(format!("ff;S={s};Q={q}").as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_scheme_counts() {
        let sc = build_scheme(4, 1, 2, &[2, 2]).unwrap();
        assert_eq!(sc.case(), SchemeCase::CaseI);
        assert_eq!(sc.coeffs_per_bf(), &[2, 1]);
        assert_eq!(sc.group_lengths(), vec![4, 2]);
        assert_eq!(sc.t(), &[1, 1]);
        assert_eq!(sc.j(), &[4, 2]);
        assert_eq!(sc.num_signals(), 2);
        assert_eq!(sc.branches(), vec![vec![0, 2, 4, 5], vec![1, 3]]);
    }

    #[test]
    fn evaluation_scheme() {
        let sc = build_scheme(8, 1, 2, &[4, 6]).unwrap();
        assert_eq!(sc.case(), SchemeCase::CaseI);
        assert_eq!(sc.group_lengths(), vec![16, 12]);
        assert_eq!(sc.t(), &[2, 2]);
        assert_eq!(sc.j(), &[10, 4]);
        assert_eq!(sc.n_m(), 28);
        assert_eq!(sc.m4_count(), 2);
        assert_eq!(sc.branch_signals(), &[0, 2, 1, 3]);
    }

    #[test]
    fn case_two_scheme() {
        let sc = build_scheme(4, 1, 2, &[1, 1, 2]).unwrap();
        assert_eq!(sc.case(), SchemeCase::CaseII);
        assert_eq!(sc.group_lengths(), vec![2, 1, 2]);
        assert_eq!(sc.n_m(), 5);
        assert_eq!(sc.independent_outputs(), 1);
        let tj: usize = sc.t().iter().zip(sc.j()).map(|(t, j)| t * j).sum();
        assert_eq!(tj, 5);
    }

    #[test]
    fn rejects_invalid_schemes() {
        // 8/3 is fractional
        assert!(matches!(
            build_scheme(8, 1, 3, &[5, 5]),
            Err(Error::InvalidScheme(_))
        ));
        // S r^(nu+g-2) < 1
        assert!(build_scheme(2, 2, 2, &[1, 1]).is_err());
        // a single group cannot fall into Case II
        assert!(build_scheme(2, 2, 2, &[3]).is_err());
        // S >= r^-(nu+g-1) but not divisible
        assert!(build_scheme(6, 1, 2, &[1, 1]).is_err());
        assert!(build_scheme(8, 1, 1, &[1]).is_err());
        assert!(build_scheme(8, 1, 2, &[0, 2]).is_err());
    }

    #[test]
    fn closed_form_t_j_in_case_one() {
        for (s, nu, r_inv, n) in [
            (8usize, 1u32, 2usize, vec![4usize, 6]),
            (16, 0, 2, vec![1, 2, 3]),
            (16, 1, 4, vec![2, 2]),
            (32, 1, 2, vec![1, 1, 1, 2]),
        ] {
            let sc = build_scheme(s, nu, r_inv, &n).unwrap();
            assert_eq!(sc.case(), SchemeCase::CaseI);
            let g = n.len();
            let q: usize = n.iter().sum();
            for jj in 1..=g {
                let t = if jj == 1 {
                    s / r_inv.pow(nu + g as u32 - 1)
                } else {
                    s / r_inv.pow(nu + (g - jj) as u32) * (r_inv - 1) / r_inv
                };
                let jv = q - (1..jj).map(|k| n[g - k]).sum::<usize>();
                assert_eq!(sc.t()[jj - 1], t, "T_{jj} for {n:?}");
                assert_eq!(sc.j()[jj - 1], jv, "J_{jj} for {n:?}");
            }
        }
    }

    #[test]
    fn hash_depends_on_params() {
        let a = build_scheme(8, 1, 2, &[4, 6]).unwrap();
        let b = build_scheme(8, 1, 2, &[5, 5]).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
