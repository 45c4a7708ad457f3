//! Simulation laboratory for linearizing a subarray of nonlinear power
//! amplifiers with digital predistortion.
//!
//! The crate is organised bottom-up:
//!
//! * [`waveform`] generates and conditions the baseband excitation.
//! * [`gmp`] evaluates generalized-memory-polynomial basis functions.
//! * [`pa`] models the subarray of Saleh amplifiers.
//! * [`dpd`] holds the fully-featured (FF) and low-complexity (LC) coefficient
//!   structures, the geometric grouping scheme and complexity accounting.
//! * [`reshape`] builds the sparse reshape operators that move coefficients
//!   between the FF and LC layouts.
//! * [`trainer`] implements the recursive prediction error (RPEM) kernel and
//!   the indirect-learning training loops.
//! * [`metrics`] computes EVM, PSD and ACPR.

pub mod dpd;
pub mod error;
pub mod gmp;
pub mod metrics;
pub mod pa;
pub mod reshape;
pub mod trainer;
pub mod waveform;

pub use num_complex::Complex64;

pub use error::{Error, Result};
