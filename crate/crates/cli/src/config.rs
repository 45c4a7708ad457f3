//! Experiment configuration file (TOML) and its validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dpdlab::dpd::{build_scheme, GroupingScheme};
use dpdlab::gmp::{GmpConfig, IndexConvention, SALEH_ACTIVE_SET, SALEH_DOMINANCE_ORDER};
use dpdlab::metrics::PsdSettings;
use dpdlab::pa::{sample_pa_params, PaBank, SalehParams};
use dpdlab::trainer::{Algorithm, RpemHyper, TrainSettings};
use dpdlab::waveform::{generate_multitone, set_drive_level, ComplexSignal};
use dpdlab::Complex64;

pub const SECTIONS: [&str; 7] = [
    "waveform", "pa", "gmp", "scheme", "trainer", "metrics", "output",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub waveform: WaveformSection,
    pub pa: PaSection,
    pub gmp: GmpSection,
    pub scheme: SchemeSection,
    pub trainer: TrainerSection,
    pub metrics: MetricsSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    pub num_samples: usize,
    pub tones: usize,
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
    /// Peak backoff from the nominal PA's saturation amplitude.
    pub backoff_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaSection {
    pub s: usize,
    pub param_seed: u64,
    /// Explicit per-PA parameters; replaces the seeded population when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<SalehParams>>,
    /// Beamforming weight phases in degrees; unit weights when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_phases_deg: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dominance {
    Auto(AutoKeyword),
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmpSection {
    pub order: usize,
    pub memory: usize,
    pub active_indices: Vec<usize>,
    /// Explicit ordering, or `"auto"` to rank by a preliminary FF run.
    pub dominance: Dominance,
    #[serde(default)]
    pub convention: IndexConvention,
}

/// Common ratio as a number (`0.5`) or a fraction string (`"1/2"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ratio {
    Number(f64),
    Text(String),
}

impl Ratio {
    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Number(v) => Some(*v),
            Ratio::Text(t) => match t.split_once('/') {
                Some((a, b)) => {
                    let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
                    (b != 0.0).then(|| a / b)
                }
                None => t.trim().parse().ok(),
            },
        }
    }

    /// `1 / r` when it is an integer of at least 2.
    pub fn inverse(&self) -> Option<usize> {
        let r = self.value()?;
        if !(r > 0.0 && r < 1.0) {
            return None;
        }
        let inv = 1.0 / r;
        let rounded = inv.round();
        ((inv - rounded).abs() < 1e-9 && rounded >= 2.0).then_some(rounded as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub nu: u32,
    pub r: Ratio,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub algorithms: Vec<Algorithm>,
    pub rho: f64,
    pub lambda0: f64,
    pub mu: f64,
    /// Recursions per gather operator in Method III.
    pub update_period: usize,
    pub block_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    pub tol: f64,
    #[serde(default = "default_window")]
    pub convergence_window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_snr_db: Option<f64>,
    #[serde(default)]
    pub noise_seed: u64,
}

fn default_window() -> usize {
    TrainSettings::default().convergence_window
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub psd_segment: usize,
    pub psd_overlap: usize,
    /// Adjacent-channel offset; one occupied bandwidth when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acpr_offset_hz: Option<f64>,
    /// Start-up samples excluded from EVM and PSD.
    pub skip: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write raw PA output dumps for every algorithm.
    #[serde(default)]
    pub dump_signals: bool,
}

/// One violated invariant, addressed by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn issue(path: impl Into<String>, message: impl fmt::Display) -> Issue {
    Issue {
        path: path.into(),
        message: message.to_string(),
    }
}

impl ExperimentConfig {
    /// Parses TOML text. On failure returns every issue found: missing
    /// sections first, then the first type error with its field path.
    pub fn parse(text: &str) -> Result<Self, Vec<Issue>> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| vec![issue("<file>", e.message())])?;
        let mut issues: Vec<Issue> = SECTIONS
            .iter()
            .filter(|s| !table.contains_key(**s))
            .map(|s| issue(*s, "missing section"))
            .collect();
        for key in table.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                issues.push(issue(key.as_str(), "unknown section"));
            }
        }
        if !issues.is_empty() {
            return Err(issues);
        }
        let de = toml::Value::Table(table);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            vec![issue(path, e.into_inner().message())]
        })
    }

    pub fn load(path: &Path) -> Result<Self, Vec<Issue>> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![issue(
                "<file>",
                format!("cannot read {}: {e}", path.display()),
            )]
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Lists every violated invariant without running anything.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut push = |path: &str, r: Result<(), String>| {
            if let Err(m) = r {
                issues.push(issue(path, m));
            }
        };
        push(
            "waveform",
            self.signal().map(drop).map_err(|e| e.to_string()),
        );
        push("pa", self.bank().map(drop).map_err(|e| e.to_string()));
        push("gmp", self.gmp().map(drop).map_err(|e| e.to_string()));
        push("scheme", self.scheme().map(drop));
        push(
            "trainer",
            self.train_settings().validate().map_err(|e| e.to_string()),
        );
        push(
            "trainer.algorithms",
            if self.trainer.algorithms.is_empty() {
                Err("no algorithms selected".into())
            } else {
                Ok(())
            },
        );
        let m = &self.metrics;
        push(
            "metrics.psd_segment",
            if m.psd_segment.is_power_of_two() && m.psd_segment >= 2 {
                Ok(())
            } else {
                Err(format!("must be a power of two, got {}", m.psd_segment))
            },
        );
        push(
            "metrics.psd_overlap",
            if m.psd_overlap < m.psd_segment {
                Ok(())
            } else {
                Err(format!(
                    "must be below the segment length {}",
                    m.psd_segment
                ))
            },
        );
        push(
            "metrics.skip",
            if m.skip + m.psd_segment <= self.waveform.num_samples {
                Ok(())
            } else {
                Err(format!(
                    "leaves fewer than {} samples of {}",
                    m.psd_segment, self.waveform.num_samples
                ))
            },
        );
        if let Some(off) = m.acpr_offset_hz {
            let edge = off + self.waveform.bandwidth_hz / 2.0;
            push(
                "metrics.acpr_offset_hz",
                if off > 0.0 && edge <= self.waveform.sample_rate_hz / 2.0 {
                    Ok(())
                } else {
                    Err(format!("adjacent band edge {edge} Hz lies beyond Nyquist"))
                },
            );
        }
        issues
    }

    pub fn signal(&self) -> dpdlab::Result<ComplexSignal> {
        let w = &self.waveform;
        let raw = generate_multitone(
            w.num_samples,
            w.tones,
            w.bandwidth_hz,
            w.sample_rate_hz,
            w.seed,
        )?;
        set_drive_level(&raw, w.backoff_db, &SalehParams::nominal())
    }

    pub fn bank(&self) -> dpdlab::Result<PaBank> {
        let p = &self.pa;
        let params = match &p.params {
            Some(v) if v.len() != p.s => {
                return Err(dpdlab::Error::InvalidConfig(format!(
                    "{} explicit PA parameter sets for S = {}",
                    v.len(),
                    p.s
                )))
            }
            Some(v) => v.clone(),
            None => sample_pa_params(p.s, p.param_seed)?,
        };
        match &p.weight_phases_deg {
            Some(ph) => {
                let w = ph
                    .iter()
                    .map(|d| Complex64::from_polar(1.0, d.to_radians()))
                    .collect();
                PaBank::with_weights(params, w)
            }
            None => PaBank::new(params),
        }
    }

    /// GMP configuration; an `"auto"` dominance keeps the active-set order
    /// until the runner re-ranks it.
    pub fn gmp(&self) -> dpdlab::Result<GmpConfig> {
        let g = &self.gmp;
        let dominance = match &g.dominance {
            Dominance::Auto(_) => g.active_indices.clone(),
            Dominance::Explicit(v) => v.clone(),
        };
        GmpConfig::with_dominance(
            g.order,
            g.memory,
            g.active_indices.clone(),
            dominance,
            g.convention,
        )
    }

    pub fn scheme(&self) -> Result<GroupingScheme, String> {
        let sc = &self.scheme;
        let r_inv =
            sc.r.inverse()
                .ok_or_else(|| format!("r must be 1/k for an integer k >= 2, got {:?}", sc.r))?;
        let q = self.gmp.active_indices.len();
        let total: usize = sc.n.iter().sum();
        if total != q {
            return Err(format!("group sizes sum to {total}, but Q = {q}"));
        }
        build_scheme(self.pa.s, sc.nu, r_inv, &sc.n).map_err(|e| e.to_string())
    }

    pub fn train_settings(&self) -> TrainSettings {
        let t = &self.trainer;
        TrainSettings {
            hyper: RpemHyper {
                rho: t.rho,
                lambda0: t.lambda0,
                mu: t.mu,
            },
            block_len: t.block_len,
            max_iters: t.max_iters.unwrap_or(usize::MAX),
            convergence_tol: t.tol,
            convergence_window: t.convergence_window,
            update_period: t.update_period,
            noise_snr_db: t.noise_snr_db,
            noise_seed: t.noise_seed,
        }
    }

    pub fn psd_settings(&self) -> PsdSettings {
        PsdSettings {
            segment_len: self.metrics.psd_segment,
            overlap: self.metrics.psd_overlap,
            acpr_offset_hz: self.metrics.acpr_offset_hz,
        }
    }

    /// The evaluation setup with S = 8 Saleh PAs and the ten-term GMP basis.
    pub fn s8_default() -> Self {
        let hyper = RpemHyper::default();
        Self {
            waveform: WaveformSection {
                num_samples: 200_000,
                tones: 64,
                bandwidth_hz: 4e6,
                sample_rate_hz: 32e6,
                backoff_db: 8.0,
                seed: 1,
            },
            pa: PaSection {
                s: 8,
                param_seed: 1,
                params: None,
                weight_phases_deg: None,
            },
            gmp: GmpSection {
                order: 5,
                memory: 5,
                active_indices: SALEH_ACTIVE_SET.to_vec(),
                dominance: Dominance::Explicit(SALEH_DOMINANCE_ORDER.to_vec()),
                convention: IndexConvention::OrderMajor,
            },
            scheme: SchemeSection {
                nu: 1,
                r: Ratio::Text("1/2".into()),
                n: vec![4, 6],
            },
            trainer: TrainerSection {
                algorithms: Algorithm::ALL.to_vec(),
                rho: hyper.rho,
                lambda0: hyper.lambda0,
                mu: hyper.mu,
                update_period: 1,
                block_len: 4096,
                max_iters: None,
                tol: 1e-5,
                convergence_window: default_window(),
                noise_snr_db: None,
                noise_seed: 0,
            },
            metrics: MetricsSection {
                psd_segment: 1024,
                psd_overlap: 512,
                acpr_offset_hz: None,
                skip: 5000,
            },
            output: OutputSection {
                dir: PathBuf::from("results/s8"),
                dump_signals: false,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_forms() {
        assert_eq!(Ratio::Text("1/2".into()).inverse(), Some(2));
        assert_eq!(Ratio::Number(0.25).inverse(), Some(4));
        assert_eq!(Ratio::Text("0.5".into()).inverse(), Some(2));
        assert_eq!(Ratio::Number(0.4).inverse(), None);
        assert_eq!(Ratio::Number(1.0).inverse(), None);
        assert_eq!(Ratio::Text("x/2".into()).inverse(), None);
    }

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::s8_default();
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn type_errors_carry_field_paths() {
        let text = ExperimentConfig::s8_default()
            .to_toml()
            .replace("tones = 64", "tones = \"many\"");
        let issues = ExperimentConfig::parse(&text).unwrap_err();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "waveform.tones");
    }
}
