//! Experiment runner: trains the selected algorithms and writes artifacts.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! file in the output directory is either complete or absent.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use dpdlab::dpd::{complexity, ff_complexity, ff_layout_hash, ComplexityReport, GroupingScheme};
use dpdlab::gmp::{estimate_dominance, GmpConfig};
use dpdlab::metrics::{psd, report, MetricsReport, Psd};
use dpdlab::pa::PaBank;
use dpdlab::trainer::{
    evaluate, evaluate_without_dpd, train, write_telemetry_csv, Algorithm, IterationRecord,
    TrainRun, TrainSettings,
};
use dpdlab::waveform::{write_dump, ComplexSignal};

use crate::config::{Dominance, ExperimentConfig, Issue};

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    /// Replaces both the waveform seed and the PA parameter seed.
    pub seed: Option<u64>,
    pub algorithms: Option<Vec<Algorithm>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = cfg.clone();
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.waveform.seed = seed;
            cfg.pa.param_seed = seed;
        }
        if let Some(algs) = &self.algorithms {
            cfg.trainer.algorithms = algs.clone();
        }
        cfg
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(Vec<Issue>),
    Io(String),
    /// Training failed for these algorithms; artifacts of the others exist.
    Diverged(Vec<(Algorithm, String)>),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(issues) => {
                writeln!(f, "invalid configuration:")?;
                for i in issues {
                    writeln!(f, "  {i}")?;
                }
                Ok(())
            }
            RunError::Io(m) => write!(f, "{m}"),
            RunError::Diverged(list) => {
                for (alg, m) in list {
                    writeln!(f, "{alg}: {m}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for RunError {}

fn io_err(what: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> RunError {
    move |e| RunError::Io(format!("{what}: {e}"))
}

fn core_err(e: dpdlab::Error) -> RunError {
    RunError::Io(e.to_string())
}

/// Per-algorithm metrics file contents.
#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmMetrics {
    pub algorithm: String,
    pub converged: bool,
    pub iterations: usize,
    pub samples_used: usize,
    pub complexity: Option<ComplexityReport>,
    pub evm_percent: Vec<f64>,
    pub mean_evm_percent: f64,
    pub acpr_per_pa_db: Vec<f64>,
    pub acpr_db: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub dominance_order: Vec<usize>,
    pub rows: Vec<(Algorithm, Vec<f64>)>,
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), RunError> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir.display()))?;
    tmp.write_all(bytes).map_err(io_err(path.display()))?;
    tmp.persist(&path)
        .map_err(|e| RunError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn psd_csv(p: &Psd) -> Result<Vec<u8>, RunError> {
    let mut buf = Vec::new();
    p.write_csv(&mut buf).map_err(core_err)?;
    Ok(buf)
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("metrics serialize");
    s.push(b'\n');
    s
}

fn telemetry_csv(history: &[IterationRecord]) -> Result<Vec<u8>, RunError> {
    let mut buf = Vec::new();
    write_telemetry_csv(history, &mut buf).map_err(core_err)?;
    Ok(buf)
}

fn dump_atomic(dir: &Path, name: &str, signal: &ComplexSignal) -> Result<(), RunError> {
    let staging = tempfile::TempDir::new_in(dir).map_err(io_err(dir.display()))?;
    let tmp = staging.path().join(name);
    write_dump(signal, &tmp).map_err(core_err)?;
    let sidecar = format!("{name}.json");
    fs::rename(staging.path().join(&sidecar), dir.join(&sidecar)).map_err(io_err(&sidecar))?;
    fs::rename(&tmp, dir.join(name)).map_err(io_err(name))?;
    Ok(())
}

struct Trained {
    algorithm: Algorithm,
    outcome: Result<(TrainRun, Vec<ComplexSignal>, MetricsReport), dpdlab::Error>,
}

fn train_and_measure(
    algorithm: Algorithm,
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    scheme: &GroupingScheme,
    settings: &TrainSettings,
    cfg: &ExperimentConfig,
) -> Trained {
    let outcome = (|| {
        let sc = algorithm.needs_scheme().then_some(scheme);
        let run = train(algorithm, signal, bank, gmp, sc, settings)?;
        let outs = evaluate(&run.coeffs, signal, bank, gmp, sc)?;
        let r = report(
            &outs,
            signal,
            gmp.latency(),
            cfg.metrics.skip,
            &cfg.psd_settings(),
        )?;
        Ok((run, outs, r))
    })();
    Trained { algorithm, outcome }
}

/// Ranks the active basis functions with a preliminary FF run.
fn auto_dominance(
    signal: &ComplexSignal,
    bank: &PaBank,
    gmp: &GmpConfig,
    settings: &TrainSettings,
) -> Result<GmpConfig, RunError> {
    let run = train(Algorithm::Ff, signal, bank, gmp, None, settings).map_err(|e| {
        RunError::Diverged(vec![(Algorithm::Ff, format!("dominance estimation: {e}"))])
    })?;
    let order = estimate_dominance(&run.coeffs, gmp).map_err(core_err)?;
    gmp.reordered(order).map_err(core_err)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(RunError::Config(issues));
    }
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(io_err(dir.display()))?;

    let signal = cfg.signal().map_err(core_err)?;
    let bank = cfg.bank().map_err(core_err)?;
    let settings = cfg.train_settings();
    let mut gmp = cfg.gmp().map_err(core_err)?;
    if matches!(cfg.gmp.dominance, Dominance::Auto(_)) {
        gmp = auto_dominance(&signal, &bank, &gmp, &settings)?;
    }
    let scheme = cfg.scheme().map_err(|m| {
        RunError::Config(vec![Issue {
            path: "scheme".into(),
            message: m,
        }])
    })?;
    write_atomic(&dir, "config.toml", cfg.to_toml().as_bytes())?;

    let skip = cfg.metrics.skip;
    let psd_settings = cfg.psd_settings();
    let trimmed = signal
        .with_samples(signal.samples()[skip..].to_vec())
        .map_err(core_err)?;
    let input_psd =
        psd(&trimmed, psd_settings.segment_len, psd_settings.overlap).map_err(core_err)?;
    write_atomic(&dir, "psd_input.csv", &psd_csv(&input_psd)?)?;

    let raw = evaluate_without_dpd(&signal, &bank).map_err(core_err)?;
    let none = report(&raw, &signal, 0, skip, &psd_settings).map_err(core_err)?;
    write_atomic(&dir, "psd_no_dpd.csv", &psd_csv(&none.psd)?)?;
    let none_metrics = AlgorithmMetrics {
        algorithm: "no_dpd".into(),
        converged: true,
        iterations: 0,
        samples_used: 0,
        complexity: None,
        evm_percent: none.evm_percent.clone(),
        mean_evm_percent: none.mean_evm_percent,
        acpr_per_pa_db: none.acpr_per_pa_db.clone(),
        acpr_db: none.acpr_db,
    };
    write_atomic(&dir, "metrics_no_dpd.json", &json(&none_metrics))?;
    if cfg.output.dump_signals {
        dump_atomic(&dir, "input.iq", &signal)?;
    }

    let mut algorithms = cfg.trainer.algorithms.clone();
    algorithms.dedup();
    let trained: Vec<Trained> = std::thread::scope(|scope| {
        let handles: Vec<_> = algorithms
            .iter()
            .map(|&alg| {
                let (signal, bank, gmp, scheme, settings) =
                    (&signal, &bank, &gmp, &scheme, &settings);
                scope
                    .spawn(move || train_and_measure(alg, signal, bank, gmp, scheme, settings, cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });

    let s = bank.len();
    let q = gmp.q();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for t in trained {
        let name = t.algorithm.name();
        match t.outcome {
            Ok((run, outs, r)) => {
                let (hash, cx) = match t.algorithm {
                    Algorithm::Ff => (ff_layout_hash(s, q), Some(ff_complexity(s, q))),
                    Algorithm::SingleDpd => (ff_layout_hash(1, q), Some(ff_complexity(1, q))),
                    _ => (scheme.hash(), Some(complexity(&scheme))),
                };
                let coeffs = run.coeffs.to_json(&hash).map_err(core_err)?;
                write_atomic(&dir, &format!("coeffs_{name}.json"), coeffs.as_bytes())?;
                write_atomic(
                    &dir,
                    &format!("telemetry_{name}.csv"),
                    &telemetry_csv(&run.history)?,
                )?;
                write_atomic(&dir, &format!("psd_{name}.csv"), &psd_csv(&r.psd)?)?;
                let m = AlgorithmMetrics {
                    algorithm: name.into(),
                    converged: run.converged,
                    iterations: run.history.len(),
                    samples_used: run.samples_used,
                    complexity: cx,
                    evm_percent: r.evm_percent.clone(),
                    mean_evm_percent: r.mean_evm_percent,
                    acpr_per_pa_db: r.acpr_per_pa_db.clone(),
                    acpr_db: r.acpr_db,
                };
                write_atomic(&dir, &format!("metrics_{name}.json"), &json(&m))?;
                if cfg.output.dump_signals {
                    for (l, y) in outs.iter().enumerate() {
                        dump_atomic(&dir, &format!("output_{name}_pa{}.iq", l + 1), y)?;
                    }
                }
                rows.push((t.algorithm, r.evm_percent));
            }
            Err(dpdlab::Error::Diverged { history }) => {
                write_atomic(
                    &dir,
                    &format!("telemetry_{name}.csv"),
                    &telemetry_csv(&history)?,
                )?;
                failures.push((
                    t.algorithm,
                    format!("training diverged after {} blocks", history.len()),
                ));
            }
            Err(e) => failures.push((t.algorithm, e.to_string())),
        }
    }

    write_atomic(&dir, "summary.csv", &summary_csv(&rows, s)?)?;
    if !failures.is_empty() {
        return Err(RunError::Diverged(failures));
    }
    Ok(RunSummary {
        out_dir: dir,
        dominance_order: gmp.dominance_order().to_vec(),
        rows,
    })
}

/// `algorithm,pa_1,...,pa_S` with one row of EVM percentages per algorithm.
pub fn summary_csv(rows: &[(Algorithm, Vec<f64>)], s: usize) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["algorithm".to_string()];
    header.extend((1..=s).map(|l| format!("pa_{l}")));
    w.write_record(&header)
        .map_err(|e| RunError::Io(e.to_string()))?;
    for (alg, evm) in rows {
        let mut rec = vec![alg.name().to_string()];
        rec.extend(evm.iter().map(|v| format!("{v:.12}")));
        w.write_record(&rec)
            .map_err(|e| RunError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| RunError::Io(e.to_string()))
}

/// Multiplier, adder and RF-chain counts of the FF structure and the
/// configured LC scheme, with the FF/LC ratios.
pub fn complexity_table(cfg: &ExperimentConfig) -> Result<String, RunError> {
    let scheme = cfg.scheme().map_err(|m| {
        RunError::Config(vec![Issue {
            path: "scheme".into(),
            message: m,
        }])
    })?;
    let ff = ff_complexity(scheme.s(), scheme.q());
    let lc = complexity(&scheme);
    let (m, a, rf) = ff.ratios_over(&lc);
    let mut out = String::new();
    out.push_str(&format!(
        "S = {}, Q = {}, nu = {}, r = 1/{}, n = {:?} ({:?})\n",
        scheme.s(),
        scheme.q(),
        scheme.nu(),
        scheme.r_inv(),
        scheme.n(),
        scheme.case()
    ));
    out.push_str(&format!(
        "{:<10}{:>12}{:>12}{:>12}\n",
        "structure", "multipliers", "adders", "rf_chains"
    ));
    out.push_str(&format!(
        "{:<10}{:>12}{:>12}{:>12}\n",
        "FF", ff.n_m, ff.n_a, ff.n_rf
    ));
    out.push_str(&format!(
        "{:<10}{:>12}{:>12}{:>12}\n",
        "LC", lc.n_m, lc.n_a, lc.n_rf
    ));
    out.push_str(&format!(
        "{:<10}{:>12.2}{:>12.2}{:>12.2}\n",
        "FF/LC", m, a, rf
    ));
    Ok(out)
}
