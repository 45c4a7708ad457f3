//! Brute-force structural count of an LC predistorter.
//!
//! Every distinct output is realized as a chain of two-input adders over
//! its coefficient-times-basis products. Products are ordered so that terms
//! shared with other outputs come first, and partial sums over identical term
//! sets are shared between outputs. Counting the distinct nodes gives the
//! hardware cost independently of the closed-form expressions.

use std::collections::HashSet;

use super::{ComplexityReport, GroupingScheme};

/// One product node: (`phi_bar` index, basis function).
type Term = (usize, usize);

/// Counts multipliers, adders and RF chains of the realized structure.
pub fn structural_count(scheme: &GroupingScheme) -> ComplexityReport {
    let q = scheme.q();
    // Outputs are identified by their full term lists; PAs fed by the same
    // list share one RF chain.
    let mut outputs: Vec<Vec<Term>> = Vec::new();
    let mut seen = HashSet::new();
    for l in 0..scheme.s() {
        let mut terms: Vec<Term> = (0..q).map(|bf| (scheme.coeff_index(l, bf), bf)).collect();
        // most widely shared groups first
        terms.sort_by_key(|&(_, bf)| (std::cmp::Reverse(scheme.group_of_bf(bf)), bf));
        if seen.insert(terms.clone()) {
            outputs.push(terms);
        }
    }

    let mut products: HashSet<Term> = HashSet::new();
    let mut sums: HashSet<Vec<Term>> = HashSet::new();
    for terms in &outputs {
        products.extend(terms.iter().copied());
        for len in 2..=terms.len() {
            let mut prefix = terms[..len].to_vec();
            prefix.sort_unstable();
            sums.insert(prefix);
        }
    }

    ComplexityReport {
        n_m: products.len(),
        n_a: sums.len(),
        n_rf: outputs.len(),
    }
}
