//! RPEM-based indirect-learning training for every predistorter structure.
//!
//! | Algorithm   | Coefficients | Recursion                                      |
//! |-------------|--------------|------------------------------------------------|
//! | `Ff`        | `Q S`        | one branch per PA                              |
//! | `LcI`       | `N_m`        | FF recursion, then `phi~ <- M1 M2 phi~`        |
//! | `LcII`      | `N_m`        | one branch per block of `phi_bar'`             |
//! | `LcIII`     | `N_m`        | `T_1` branches per gather operator, cycled     |
//! | `SingleDpd` | `Q`          | one branch fed by the average PA output        |
//!
//! Every loop targets `x(n - d)` where `d` is the smallest delay of the active
//! basis, and starts from the linear bypass `s(n - d)`.

mod ila;
mod rpem;

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dpd::{CoeffShape, CoeffVec, GroupingScheme};
use crate::gmp::{build_basis_vector, BasisEvaluator, DelayLine, GmpConfig};
use crate::pa::{apply_pa, PaBank};
use crate::reshape;
use crate::waveform::ComplexSignal;
use crate::{Error, Result};

pub use rpem::{rpem_step, RpemBranch, RpemHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ff")]
    Ff,
    #[serde(rename = "lc_i")]
    LcI,
    #[serde(rename = "lc_ii")]
    LcII,
    #[serde(rename = "lc_iii")]
    LcIII,
    #[serde(rename = "single")]
    SingleDpd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Ff,
        Algorithm::LcI,
        Algorithm::LcII,
        Algorithm::LcIII,
        Algorithm::SingleDpd,
    ];

    /// Short name used in file names and tables.
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ff => "ff",
            Algorithm::LcI => "lc_i",
            Algorithm::LcII => "lc_ii",
            Algorithm::LcIII => "lc_iii",
            Algorithm::SingleDpd => "single",
        }
    }

    pub fn needs_scheme(&self) -> bool {
        matches!(self, Algorithm::LcI | Algorithm::LcII | Algorithm::LcIII)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key || (key == "single_dpd" && *a == Algorithm::SingleDpd))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub hyper: RpemHyper,
    /// Samples between publications of the trained coefficients.
    pub block_len: usize,
    /// Upper bound on the number of blocks.
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Recursions per gather operator in Method III.
    pub update_period: usize,
    /// Optional AWGN on the feedback path.
    pub noise_snr_db: Option<f64>,
    pub noise_seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            hyper: RpemHyper::default(),
            block_len: 4096,
            max_iters: usize::MAX,
            convergence_tol: 1e-5,
            convergence_window: 5,
            update_period: 1,
            noise_snr_db: None,
            noise_seed: 0,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.block_len == 0 {
            return Err(Error::InvalidConfig("block_len must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig(
                "convergence tolerance must be positive".into(),
            ));
        }
        if self.convergence_window == 0 {
            return Err(Error::InvalidConfig(
                "convergence window must be positive".into(),
            ));
        }
        if self.update_period == 0 {
            return Err(Error::InvalidConfig(
                "update period must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Telemetry of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Samples processed so far.
    pub samples: usize,
    /// Mean `|e|` per feedback branch over the block.
    pub mean_abs_error: Vec<f64>,
    /// Largest coefficient change over the block, relative to the largest
    /// coefficient magnitude.
    pub max_coeff_delta: f64,
}

impl IterationRecord {
    pub fn mean_error(&self) -> f64 {
        self.mean_abs_error.iter().sum::<f64>() / self.mean_abs_error.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub algorithm: Algorithm,
    pub settings: TrainSettings,
    pub coeffs: CoeffVec,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub samples_used: usize,
}

/// True once the last `window` blocks all changed the coefficients by less
/// than `tol` (relative).
pub fn convergence_check(history: &[IterationRecord], tol: f64, window: usize) -> bool {
    window > 0
        && history.len() >= window
        && history[history.len() - window..]
            .iter()
            .all(|r| r.max_coeff_delta < tol)
}

fn require_scheme(scheme: &GroupingScheme, bank: &PaBank, gmp: &GmpConfig) -> Result<()> {
    if scheme.s() != bank.len() {
        return Err(Error::shape("scheme S vs PA count", bank.len(), scheme.s()));
    }
    if scheme.q() != gmp.q() {
        return Err(Error::shape(
            "scheme Q vs active basis",
            gmp.q(),
            scheme.q(),
        ));
    }
    Ok(())
}

/// FF training, one RPEM branch per PA.
pub fn train_ff(
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    settings: &TrainSettings,
) -> Result<TrainRun> {
    let mut learner = ila::FfLearner::new(bank.len(), gmp, settings.hyper);
    ila::run_ila(Algorithm::Ff, &mut learner, signal, bank, gmp, settings)
}

/// LC Method I: FF recursion with the shared-coefficient projection.
pub fn train_lc_method1(
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    scheme: &GroupingScheme,
    settings: &TrainSettings,
) -> Result<TrainRun> {
    require_scheme(scheme, bank, gmp)?;
    let mut learner = ila::FfLearner::with_projection(bank.len(), gmp, scheme, settings.hyper);
    ila::run_ila(Algorithm::LcI, &mut learner, signal, bank, gmp, settings)
}

/// LC Method II: branches follow the reshaped `phi_bar'` layout.
pub fn train_lc_method2(
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    scheme: &GroupingScheme,
    settings: &TrainSettings,
) -> Result<TrainRun> {
    require_scheme(scheme, bank, gmp)?;
    let mut learner = ila::LcMethod2::new(gmp, scheme, settings.hyper);
    ila::run_ila(Algorithm::LcII, &mut learner, signal, bank, gmp, settings)
}

/// LC Method III: cycles the gather operators every `update_period` samples.
pub fn train_lc_method3(
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    scheme: &GroupingScheme,
    settings: &TrainSettings,
) -> Result<TrainRun> {
    require_scheme(scheme, bank, gmp)?;
    let mut learner = ila::LcMethod3::new(gmp, scheme, settings.hyper, settings.update_period);
    ila::run_ila(Algorithm::LcIII, &mut learner, signal, bank, gmp, settings)
}

/// One predistorter for all PAs, trained on the mean scaled PA output.
pub fn train_single_dpd(
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    settings: &TrainSettings,
) -> Result<TrainRun> {
    let mut learner = ila::SingleLearner::new(gmp, settings.hyper);
    ila::run_ila(
        Algorithm::SingleDpd,
        &mut learner,
        signal,
        bank,
        gmp,
        settings,
    )
}

/// Dispatches to the training routine of `algorithm`.
pub fn train(
    algorithm: Algorithm,
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    scheme: Option<&GroupingScheme>,
    settings: &TrainSettings,
) -> Result<TrainRun> {
    let need = || {
        scheme.ok_or_else(|| {
            Error::InvalidConfig(format!("algorithm {algorithm} needs a grouping scheme"))
        })
    };
    match algorithm {
        Algorithm::Ff => train_ff(signal, bank, gmp, settings),
        Algorithm::LcI => train_lc_method1(signal, bank, gmp, need()?, settings),
        Algorithm::LcII => train_lc_method2(signal, bank, gmp, need()?, settings),
        Algorithm::LcIII => train_lc_method3(signal, bank, gmp, need()?, settings),
        Algorithm::SingleDpd => train_single_dpd(signal, bank, gmp, settings),
    }
}

/// Postdistorter output `coeffs^T psi(y')` at sample `n`.
pub fn postdistort(
    coeffs: &[Complex64],
    y_prime: &ComplexSignal,
    n: usize,
    config: &GmpConfig,
) -> Result<Complex64> {
    if coeffs.len() != config.q() {
        return Err(Error::shape(
            "postdistorter coefficients",
            config.q(),
            coeffs.len(),
        ));
    }
    let psi = build_basis_vector(y_prime, n, config)?;
    Ok(coeffs.iter().zip(psi.values()).map(|(c, p)| c * p).sum())
}

/// Expands any coefficient layout into the per-PA FF layout.
pub fn expand_to_ff(
    coeffs: &CoeffVec,
    s: usize,
    q: usize,
    scheme: Option<&GroupingScheme>,
) -> Result<Vec<Complex64>> {
    coeffs.validate(s, q, scheme)?;
    match (coeffs.shape(), scheme) {
        (CoeffShape::Ff, _) => Ok(coeffs.data().to_vec()),
        (CoeffShape::Single, _) => Ok(coeffs.data().repeat(s)),
        (CoeffShape::Lc, Some(sc)) => reshape::build_m1(sc).apply(coeffs.data()),
        (CoeffShape::LcPrime, Some(sc)) => {
            let bar = reshape::build_m3(sc).apply_transpose(coeffs.data())?;
            reshape::build_m1(sc).apply(&bar)
        }
        (_, None) => unreachable!("validate rejects LC layouts without a scheme"),
    }
}

/// Scaled PA outputs `y'_l = f_l(w_l x_l) / G_l` of the frozen predistorter.
pub fn evaluate(
    coeffs: &CoeffVec,
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    scheme: Option<&GroupingScheme>,
) -> Result<Vec<ComplexSignal>> {
    let s = bank.len();
    let q = gmp.q();
    let phi = expand_to_ff(coeffs, s, q, scheme)?;
    let eval = BasisEvaluator::new(gmp);
    let mut line = DelayLine::new(gmp.memory());
    let mut psi = vec![Complex64::new(0.0, 0.0); q];
    let mut outs: Vec<Vec<Complex64>> = vec![Vec::with_capacity(signal.len()); s];
    for &sn in signal.samples() {
        line.push(sn);
        eval.eval_into(line.history(), &mut psi);
        for (l, (c, out)) in phi.chunks_exact(q).zip(outs.iter_mut()).enumerate() {
            let x: Complex64 = c.iter().zip(&psi).map(|(a, b)| a * b).sum();
            out.push(apply_pa(x, l, bank) / bank.params()[l].linear_gain());
        }
    }
    outs.into_iter().map(|y| signal.with_samples(y)).collect()
}

/// Scaled PA outputs with no predistortion.
pub fn evaluate_without_dpd(signal: &ComplexSignal, bank: &PaBank) -> Result<Vec<ComplexSignal>> {
    (0..bank.len())
        .map(|l| {
            let g = bank.params()[l].linear_gain();
            signal.with_samples(
                signal
                    .samples()
                    .iter()
                    .map(|&x| apply_pa(x, l, bank) / g)
                    .collect(),
            )
        })
        .collect()
}

/// Writes `iteration,samples,err_0..err_{C-1},max_coeff_delta` as CSV.
pub fn write_telemetry_csv<W: Write>(history: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let channels = history.first().map_or(0, |r| r.mean_abs_error.len());
    let mut header = vec!["iteration".to_string(), "samples".to_string()];
    header.extend((0..channels).map(|c| format!("mean_abs_error_{c}")));
    header.push("max_coeff_delta".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in history {
        let mut row = vec![r.iteration.to_string(), r.samples.to_string()];
        row.extend(r.mean_abs_error.iter().map(|e| format!("{e:.12e}")));
        row.push(format!("{:.12e}", r.max_coeff_delta));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes telemetry to `path`.
pub fn save_telemetry(history: &[IterationRecord], path: &Path) -> Result<()> {
    write_telemetry_csv(history, std::fs::File::create(path)?)
}
