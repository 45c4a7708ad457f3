//! Linearization metrics: EVM, Welch PSD and adjacent-channel power ratio.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::trainer::csv_err;
use crate::waveform::ComplexSignal;
use crate::{Error, Result};

/// `100 sqrt(sum |y - s|^2 / sum |s|^2)`.
pub fn evm_samples(y: &[Complex64], s: &[Complex64]) -> Result<f64> {
    if y.len() != s.len() {
        return Err(Error::shape("EVM operands", s.len(), y.len()));
    }
    let ref_power: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    if ref_power == 0.0 {
        return Err(Error::DegenerateSignal(
            "EVM reference has zero power".into(),
        ));
    }
    let err: f64 = y.iter().zip(s).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(100.0 * (err / ref_power).sqrt())
}

/// EVM of a gain-scaled PA output against the reference, both full length.
pub fn evm(y: &ComplexSignal, s: &ComplexSignal) -> Result<f64> {
    evm_samples(y.samples(), s.samples())
}

/// EVM of `y(n)` against `s(n - delay)` over `n >= skip + delay`.
pub fn evm_aligned(y: &[Complex64], s: &[Complex64], delay: usize, skip: usize) -> Result<f64> {
    if y.len() != s.len() {
        return Err(Error::shape("EVM operands", s.len(), y.len()));
    }
    let start = skip + delay;
    if start >= y.len() {
        return Err(Error::TooShort {
            needed: start + 1,
            have: y.len(),
        });
    }
    evm_samples(&y[start..], &s[start - delay..s.len() - delay])
}

/// Welch estimate, frequencies ascending from `-fs/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub frequency_hz: Vec<f64>,
    /// Power spectral density in power units per Hz.
    pub density: Vec<f64>,
    /// Density in dB relative to the in-band mean.
    pub power_db: Vec<f64>,
    pub occupied_bandwidth_hz: f64,
}

impl Psd {
    pub fn bin_width_hz(&self) -> f64 {
        self.frequency_hz[1] - self.frequency_hz[0]
    }

    /// Total power, `sum density * df`.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width_hz()
    }

    /// Mean density over `[lo, hi]`, or over `(lo, hi)` when `open`.
    fn band_mean(&self, lo: f64, hi: f64, open: bool) -> Option<f64> {
        let tol = if open { -1e-9 } else { 1e-9 };
        let vals: Vec<f64> = self
            .frequency_hz
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo - tol && **f <= hi + tol)
            .map(|(_, d)| *d)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean density over `|f| <= bw/2`.
    pub fn in_band_mean(&self) -> f64 {
        let half = self.occupied_bandwidth_hz / 2.0;
        self.band_mean(-half, half, false).unwrap_or(0.0)
    }

    /// Mean of several estimates (e.g. over PAs), renormalized.
    pub fn average(items: &[Psd]) -> Result<Psd> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidConfig("no spectra to average".into()))?;
        let mut density = vec![0.0; first.density.len()];
        for p in items {
            if p.density.len() != density.len() {
                return Err(Error::shape("PSD bins", density.len(), p.density.len()));
            }
            for (acc, d) in density.iter_mut().zip(&p.density) {
                *acc += d / items.len() as f64;
            }
        }
        Ok(Psd::from_density(
            first.frequency_hz.clone(),
            density,
            first.occupied_bandwidth_hz,
        ))
    }

    fn from_density(frequency_hz: Vec<f64>, density: Vec<f64>, bw: f64) -> Psd {
        let mut out = Psd {
            frequency_hz,
            density,
            power_db: Vec::new(),
            occupied_bandwidth_hz: bw,
        };
        let reference = out.in_band_mean();
        out.power_db = out
            .density
            .iter()
            .map(|&d| 10.0 * (d.max(1e-300) / reference).log10())
            .collect();
        out
    }

    /// CSV with header `frequency_hz,power_db`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frequency_hz", "power_db"])
            .map_err(csv_err)?;
        for (f, p) in self.frequency_hz.iter().zip(&self.power_db) {
            w.write_record([format!("{f:.6}"), format!("{p:.9}")])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Welch averaged periodogram with a periodic Hann taper.
pub fn psd(x: &ComplexSignal, segment_len: usize, overlap: usize) -> Result<Psd> {
    if !segment_len.is_power_of_two() || segment_len < 2 {
        return Err(Error::InvalidConfig(format!(
            "segment length must be a power of two, got {segment_len}"
        )));
    }
    if overlap >= segment_len {
        return Err(Error::InvalidConfig(
            "overlap must be shorter than a segment".into(),
        ));
    }
    if x.len() < segment_len {
        return Err(Error::TooShort {
            needed: segment_len,
            have: x.len(),
        });
    }
    let fs = x.sample_rate_hz();
    let window: Vec<f64> = (0..segment_len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / segment_len as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let hop = segment_len - overlap;

    let mut acc = vec![0.0; segment_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    let mut segments = 0;
    let samples = x.samples();
    let mut start = 0;
    while start + segment_len <= samples.len() {
        for (b, (z, w)) in buf.iter_mut().zip(samples[start..].iter().zip(&window)) {
            *b = z * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let scale = 1.0 / (segments as f64 * fs * window_power);
    let half = segment_len / 2;
    let df = fs / segment_len as f64;
    let mut frequency_hz = Vec::with_capacity(segment_len);
    let mut density = Vec::with_capacity(segment_len);
    for k in 0..segment_len {
        let bin = (k + half) % segment_len;
        frequency_hz.push((k as f64 - half as f64) * df);
        density.push(acc[bin] * scale);
    }
    Ok(Psd::from_density(
        frequency_hz,
        density,
        x.occupied_bandwidth_hz(),
    ))
}

/// Mean density in the two adjacent channels (width `band_hz`, centred at
/// `±offset_hz`, edges excluded) relative to the in-band mean, in dB.
pub fn acpr(psd: &Psd, band_hz: f64, offset_hz: f64) -> Result<f64> {
    let nyquist = -psd.frequency_hz[0];
    if !(band_hz > 0.0) || offset_hz + band_hz / 2.0 > nyquist + 1e-9 {
        return Err(Error::OutOfRange(format!(
            "adjacent band {offset_hz} +/- {} Hz exceeds Nyquist {nyquist} Hz",
            band_hz / 2.0
        )));
    }
    let in_band = psd
        .band_mean(-band_hz / 2.0, band_hz / 2.0, false)
        .ok_or_else(|| Error::OutOfRange("in-band region holds no bins".into()))?;
    let lo = psd.band_mean(-offset_hz - band_hz / 2.0, -offset_hz + band_hz / 2.0, true);
    let hi = psd.band_mean(offset_hz - band_hz / 2.0, offset_hz + band_hz / 2.0, true);
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok(10.0 * (((lo + hi) / 2.0).max(1e-300) / in_band).log10()),
        _ => Err(Error::OutOfRange("adjacent band holds no bins".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdSettings {
    pub segment_len: usize,
    pub overlap: usize,
    /// Adjacent-channel offset; `None` means one occupied bandwidth.
    pub acpr_offset_hz: Option<f64>,
}

impl Default for PsdSettings {
    fn default() -> Self {
        Self {
            segment_len: 1024,
            overlap: 512,
            acpr_offset_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub evm_percent: Vec<f64>,
    pub mean_evm_percent: f64,
    /// ACPR of each PA output.
    pub acpr_per_pa_db: Vec<f64>,
    /// ACPR of the PA-averaged spectrum.
    pub acpr_db: f64,
    pub psd: Psd,
}

/// Metrics of a set of scaled PA outputs against `reference`, comparing
/// `y(n)` with `s(n - delay)` and skipping `skip` start-up samples.
pub fn report(
    outputs: &[ComplexSignal],
    reference: &ComplexSignal,
    delay: usize,
    skip: usize,
    settings: &PsdSettings,
) -> Result<MetricsReport> {
    if outputs.is_empty() {
        return Err(Error::InvalidConfig("no PA outputs to measure".into()));
    }
    let bw = reference.occupied_bandwidth_hz();
    let offset = settings.acpr_offset_hz.unwrap_or(bw);
    let mut evm_percent = Vec::with_capacity(outputs.len());
    let mut spectra = Vec::with_capacity(outputs.len());
    let mut acpr_per_pa_db = Vec::with_capacity(outputs.len());
    for y in outputs {
        evm_percent.push(evm_aligned(y.samples(), reference.samples(), delay, skip)?);
        let trimmed = y.with_samples(y.samples()[skip.min(y.len())..].to_vec())?;
        let p = psd(&trimmed, settings.segment_len, settings.overlap)?;
        acpr_per_pa_db.push(acpr(&p, bw, offset)?);
        spectra.push(p);
    }
    let psd = Psd::average(&spectra)?;
    Ok(MetricsReport {
        mean_evm_percent: evm_percent.iter().sum::<f64>() / evm_percent.len() as f64,
        acpr_db: acpr(&psd, bw, offset)?,
        evm_percent,
        acpr_per_pa_db,
        psd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::generate_multitone;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(samples: Vec<Complex64>, fs: f64, bw: f64) -> ComplexSignal {
        ComplexSignal::new(samples, fs, bw).unwrap()
    }

    #[test]
    fn evm_examples() {
        let s = generate_multitone(1024, 8, 1.0, 8.0, 1).unwrap();
        assert_eq!(evm(&s, &s).unwrap(), 0.0);
        let scaled = s
            .with_samples(s.samples().iter().map(|z| z * 1.1).collect())
            .unwrap();
        assert!((evm(&scaled, &s).unwrap() - 10.0).abs() < 1e-9);
        let rot = Complex64::from_polar(1.0, 0.1);
        let turned = s
            .with_samples(s.samples().iter().map(|z| z * rot).collect())
            .unwrap();
        let expect = 100.0 * (rot - 1.0).norm();
        assert!((evm(&turned, &s).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 9.99583).abs() < 1e-5);
    }

    #[test]
    fn evm_error_scaling_is_linear() {
        let s = generate_multitone(512, 4, 1.0, 8.0, 3).unwrap();
        let d: Vec<Complex64> = (0..512)
            .map(|k| Complex64::new((k as f64).sin(), 0.3))
            .collect();
        let base = evm_samples(
            &s.samples()
                .iter()
                .zip(&d)
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>(),
            s.samples(),
        )
        .unwrap();
        let twice = evm_samples(
            &s.samples()
                .iter()
                .zip(&d)
                .map(|(a, b)| a + b * 2.5)
                .collect::<Vec<_>>(),
            s.samples(),
        )
        .unwrap();
        assert!((twice / base - 2.5).abs() < 1e-12);
        assert!(evm_samples(&[Complex64::new(1.0, 0.0)], &[Complex64::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn evm_aligned_uses_delay() {
        let s: Vec<Complex64> = (0..50)
            .map(|k| Complex64::new(k as f64 + 1.0, 0.0))
            .collect();
        let mut y = vec![Complex64::new(0.0, 0.0); 3];
        y.extend_from_slice(&s[..47]);
        assert_eq!(evm_aligned(&y, &s, 3, 5).unwrap(), 0.0);
    }

    #[test]
    fn pure_tone_single_bin_band() {
        let fs = 1024.0;
        let tone = sig(vec![Complex64::new(1.0, 0.0); 4096], fs, 0.5);
        let p = psd(&tone, 256, 128).unwrap();
        let dc = p.frequency_hz.iter().position(|&f| f == 0.0).unwrap();
        assert!(p.power_db[dc].abs() < 1e-9);
    }

    #[test]
    fn white_noise_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<Complex64> = (0..1 << 19)
            .map(|_| {
                // Box-Muller pair
                let (u, v): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
                Complex64::from_polar((-2.0 * u.ln()).sqrt(), 2.0 * PI * v)
            })
            .collect();
        let x = sig(samples, 8.0, 2.0);
        let p = psd(&x, 1024, 512).unwrap();
        assert!(p.in_band_mean() > 0.0);
        for db in &p.power_db {
            assert!(db.abs() < 1.5, "bin at {db} dB");
        }
        // Parseval
        assert!((p.total_power() / x.mean_power() - 1.0).abs() < 0.01);
    }

    #[test]
    fn multitone_is_contained() {
        let x = generate_multitone(1 << 16, 64, 4e6, 32e6, 7).unwrap();
        let p = psd(&x, 1024, 512).unwrap();
        let in_band: f64 = p
            .frequency_hz
            .iter()
            .zip(&p.power_db)
            .filter(|(f, _)| f.abs() <= 2e6)
            .map(|(_, d)| *d)
            .sum::<f64>();
        assert!(in_band.is_finite());
        for (f, db) in p.frequency_hz.iter().zip(&p.power_db) {
            if f.abs() > 2e6 + 1.0 {
                assert!(*db < -100.0, "{f} Hz at {db} dB");
            }
        }
        assert!(acpr(&p, 4e6, 4e6).unwrap() <= -60.0);
        assert!(acpr(&p, 4e6, 15e6).is_err());
    }

    #[test]
    fn psd_rejects_bad_arguments() {
        let x = generate_multitone(512, 4, 1.0, 8.0, 0).unwrap();
        assert!(psd(&x, 1024, 512).is_err());
        assert!(psd(&x, 100, 50).is_err());
        assert!(psd(&x, 256, 256).is_err());
    }

    #[test]
    fn psd_csv_header() {
        let x = generate_multitone(2048, 4, 1.0, 8.0, 0).unwrap();
        let p = psd(&x, 256, 128).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("frequency_hz,power_db\n"));
        assert_eq!(text.lines().count(), 257);
    }
}
