//! Baseband excitation: multitone generation, power normalization and PA
//! drive-level setting.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pa::SalehParams;
use crate::{Error, Result};

/// Minimum ratio between sample rate and occupied bandwidth. Keeps the
/// spectral regrowth of the odd-order terms inside the Nyquist band.
pub const MIN_OVERSAMPLING: f64 = 4.0;

/// RNG stream used for waveform phases; other concerns use their own stream.
pub(crate) const WAVEFORM_STREAM: u64 = 1;

/// Uniformly sampled complex baseband sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    occupied_bandwidth_hz: f64,
}

impl ComplexSignal {
    pub fn new(
        samples: Vec<Complex64>,
        sample_rate_hz: f64,
        occupied_bandwidth_hz: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::DegenerateSignal("signal has no samples".into()));
        }
        if !(occupied_bandwidth_hz > 0.0 && occupied_bandwidth_hz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "occupied bandwidth must be positive, got {occupied_bandwidth_hz}"
            )));
        }
        if !(sample_rate_hz.is_finite()
            && sample_rate_hz >= MIN_OVERSAMPLING * occupied_bandwidth_hz)
        {
            return Err(Error::InvalidConfig(format!(
                "sample rate {sample_rate_hz} Hz is below {MIN_OVERSAMPLING} x bandwidth {occupied_bandwidth_hz} Hz"
            )));
        }
        if let Some(n) = samples
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::DegenerateSignal(format!(
                "non-finite sample at index {n}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            occupied_bandwidth_hz,
        })
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self> {
        Self::new(samples, self.sample_rate_hz, self.occupied_bandwidth_hz)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn occupied_bandwidth_hz(&self) -> f64 {
        self.occupied_bandwidth_hz
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn scaled(&self, gain: f64) -> Result<Self> {
        self.with_samples(self.samples.iter().map(|z| z * gain).collect())
    }
}

pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Sum of `num_tones` equally spaced unit tones with seeded uniform phases,
/// normalized to unit mean power.
///
/// Tone `k` sits at `(k + 1/2 - num_tones/2) * bw / num_tones`, so the comb is
/// symmetric about DC and every tone lies strictly inside `±bw/2`.
pub fn generate_multitone(
    num_samples: usize,
    num_tones: usize,
    occupied_bandwidth_hz: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<ComplexSignal> {
    if num_samples == 0 {
        return Err(Error::InvalidConfig("num_samples must be positive".into()));
    }
    if num_tones == 0 {
        return Err(Error::InvalidConfig("num_tones must be positive".into()));
    }
    if !(occupied_bandwidth_hz > 0.0)
        || !(sample_rate_hz >= MIN_OVERSAMPLING * occupied_bandwidth_hz)
    {
        return Err(Error::InvalidConfig(format!(
            "need sample_rate >= {MIN_OVERSAMPLING} x bandwidth (got fs={sample_rate_hz}, bw={occupied_bandwidth_hz})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(WAVEFORM_STREAM);
    let spacing = occupied_bandwidth_hz / num_tones as f64;
    let tones: Vec<(f64, f64)> = (0..num_tones)
        .map(|k| {
            let freq = (k as f64 + 0.5 - num_tones as f64 / 2.0) * spacing;
            let phase = rng.gen::<f64>() * TAU;
            (freq / sample_rate_hz, phase)
        })
        .collect();

    let samples: Vec<Complex64> = (0..num_samples)
        .map(|n| {
            tones
                .iter()
                .map(|&(f, phase)| {
                    // Reduce the cycle count before scaling so long records keep full phase precision.
                    let cycles = (f * n as f64).fract();
                    Complex64::from_polar(1.0, TAU * cycles + phase)
                })
                .sum()
        })
        .collect();

    let signal = ComplexSignal::new(samples, sample_rate_hz, occupied_bandwidth_hz)?;
    normalize_power(&signal, 0.0)
}

/// Scales `signal` so its mean power equals `10^(target_db/10)`.
pub fn normalize_power(signal: &ComplexSignal, target_db: f64) -> Result<ComplexSignal> {
    let power = signal.mean_power();
    if power == 0.0 {
        return Err(Error::DegenerateSignal(
            "cannot normalize an all-zero signal".into(),
        ));
    }
    let target = 10f64.powf(target_db / 10.0);
    signal.scaled((target / power).sqrt())
}

/// Scales `signal` so its peak amplitude sits `backoff_db` below the input
/// amplitude that saturates the AM/AM curve of `pa`.
pub fn set_drive_level(
    signal: &ComplexSignal,
    backoff_db: f64,
    pa: &SalehParams,
) -> Result<ComplexSignal> {
    if !(backoff_db >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "backoff must be non-negative, got {backoff_db} dB"
        )));
    }
    let peak = signal.peak_amplitude();
    if peak == 0.0 {
        return Err(Error::DegenerateSignal(
            "cannot set drive level of an all-zero signal".into(),
        ));
    }
    let target_peak = pa.saturation_amplitude() * 10f64.powf(-backoff_db / 20.0);
    signal.scaled(target_peak / peak)
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpSidecar {
    sample_rate_hz: f64,
    occupied_bandwidth_hz: f64,
    num_samples: usize,
    format: String,
}

const DUMP_FORMAT: &str = "f64le-interleaved-iq";

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes interleaved little-endian `f64` (re, im) pairs to `path` and a JSON
/// sidecar with the metadata to `<path>.json`.
pub fn write_dump(signal: &ComplexSignal, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(signal.len() * 16);
    for z in signal.samples() {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&bytes)?;
    let sidecar = DumpSidecar {
        sample_rate_hz: signal.sample_rate_hz(),
        occupied_bandwidth_hz: signal.occupied_bandwidth_hz(),
        num_samples: signal.len(),
        format: DUMP_FORMAT.to_string(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<ComplexSignal> {
    let sidecar: DumpSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    if bytes.len() != sidecar.num_samples * 16 {
        return Err(Error::shape(
            "signal dump bytes",
            sidecar.num_samples * 16,
            bytes.len(),
        ));
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    ComplexSignal::new(
        samples,
        sidecar.sample_rate_hz,
        sidecar.occupied_bandwidth_hz,
    )
}
