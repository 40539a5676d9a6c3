//! Welch cross-spectral density and the coherency-based estimators.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Taper {
    Rectangular,
    /// Periodic Hann window.
    Hann,
}

impl Taper {
    pub fn weights(self, len: usize) -> Vec<f64> {
        match self {
            Taper::Rectangular => vec![1.0; len],
            Taper::Hann => (0..len)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchParams {
    pub seg_len: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap: f64,
    pub taper: Taper,
}

/// One-sided cross-spectral density matrices, one per frequency bin.
#[derive(Clone, Debug)]
pub struct CrossSpectrum {
    pub freqs_hz: Vec<f64>,
    pub matrices: Vec<DMatrix<Complex64>>,
    /// Number of averaged segments.
    pub segments: usize,
}

/// Real per-frequency matrices plus the number of entries zeroed because an
/// auto-spectrum vanished.
#[derive(Clone, Debug)]
pub struct SpectralMatrices {
    pub freqs_hz: Vec<f64>,
    pub matrices: Vec<DMatrix<f64>>,
    pub flagged: usize,
}

/// Welch average of tapered segment periodograms.
///
/// Scaling is a one-sided density: `X_i X_j^* / (fs Σw²)`, doubled for bins
/// strictly between DC and Nyquist.
pub fn cross_spectral_density(
    trial: &DMatrix<f64>,
    fs_hz: f64,
    params: WelchParams,
) -> Result<CrossSpectrum> {
    let (channels, samples) = trial.shape();
    let WelchParams { seg_len, overlap, taper } = params;
    if seg_len < 2 || seg_len > samples {
        return Err(Error::invalid(format!(
            "segment length {seg_len} must lie in [2, {samples}]"
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(format!("overlap {overlap} must lie in [0, 1)")));
    }
    let step = ((seg_len as f64 * (1.0 - overlap)).floor() as usize).max(1);
    let window = taper.weights(seg_len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let n_bins = seg_len / 2 + 1;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg_len);
    let mut acc = vec![DMatrix::<Complex64>::zeros(channels, channels); n_bins];
    let mut spectra = vec![vec![Complex64::default(); seg_len]; channels];
    let mut segments = 0;
    let mut start = 0;
    while start + seg_len <= samples {
        for (c, buf) in spectra.iter_mut().enumerate() {
            let row = trial.row(c);
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(row[start + k] * window[k], 0.0);
            }
            fft.process(buf);
        }
        for (bin, m) in acc.iter_mut().enumerate() {
            for i in 0..channels {
                m[(i, i)].re += spectra[i][bin].norm_sqr();
                for j in (i + 1)..channels {
                    m[(i, j)] += spectra[i][bin] * spectra[j][bin].conj();
                }
            }
        }
        segments += 1;
        start += step;
    }

    let base = 1.0 / (fs_hz * window_power * segments as f64);
    let freqs_hz = (0..n_bins).map(|k| k as f64 * fs_hz / seg_len as f64).collect();
    for (bin, m) in acc.iter_mut().enumerate() {
        let one_sided = bin != 0 && !(seg_len % 2 == 0 && bin == seg_len / 2);
        let scale = if one_sided { 2.0 * base } else { base };
        for i in 0..channels {
            m[(i, i)] = Complex64::new(m[(i, i)].re * scale, 0.0);
            for j in (i + 1)..channels {
                let v = m[(i, j)] * scale;
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
    }
    Ok(CrossSpectrum { freqs_hz, matrices: acc, segments })
}

/// Per channel, the bins where the auto-spectrum is indistinguishable from zero
/// relative to that channel's strongest bin.
fn vanishing_auto_spectra(csd: &CrossSpectrum) -> Vec<Vec<bool>> {
    let channels = csd.matrices.first().map(|m| m.nrows()).unwrap_or(0);
    (0..channels)
        .map(|i| {
            let peak = csd.matrices.iter().fold(0.0f64, |p, m| p.max(m[(i, i)].re));
            csd.matrices
                .iter()
                .map(|m| {
                    let s = m[(i, i)].re;
                    s <= 0.0 || s <= 1e-24 * peak
                })
                .collect()
        })
        .collect()
}

fn normalized_coherency(
    csd: &CrossSpectrum,
    diagonal: f64,
    f: impl Fn(Complex64, f64) -> f64,
) -> SpectralMatrices {
    let dead = vanishing_auto_spectra(csd);
    let mut flagged = 0;
    let matrices = csd
        .matrices
        .iter()
        .enumerate()
        .map(|(bin, s)| {
            let n = s.nrows();
            let mut out = DMatrix::zeros(n, n);
            for i in 0..n {
                out[(i, i)] = diagonal;
                for j in (i + 1)..n {
                    if dead[i][bin] || dead[j][bin] {
                        flagged += 1;
                        continue;
                    }
                    let denom = s[(i, i)].re * s[(j, j)].re;
                    let v = f(s[(i, j)], denom);
                    out[(i, j)] = v;
                    out[(j, i)] = v;
                }
            }
            out
        })
        .collect();
    SpectralMatrices { freqs_hz: csd.freqs_hz.clone(), matrices, flagged }
}

/// Magnitude-squared coherence `|S_ij|² / (S_ii S_jj)`, unit diagonal.
pub fn coherence(csd: &CrossSpectrum) -> SpectralMatrices {
    normalized_coherency(csd, 1.0, |sij, denom| (sij.norm_sqr() / denom).clamp(0.0, 1.0))
}

/// Imaginary part of coherency `Im(S_ij) / √(S_ii S_jj)`, zero diagonal.
///
/// The stored matrix is symmetric and carries the sign of `Im(S_ij)` for
/// `i < j`; the `(j, i)` coherency is the negative of that value.
pub fn imaginary_coherence(csd: &CrossSpectrum) -> SpectralMatrices {
    normalized_coherency(csd, 0.0, |sij, denom| (sij.im / denom.sqrt()).clamp(-1.0, 1.0))
}

/// Arithmetic mean of the matrices whose bin frequency lies in `[low, high]`.
pub fn band_average(
    freqs_hz: &[f64],
    matrices: &[DMatrix<f64>],
    low_hz: f64,
    high_hz: f64,
) -> Result<DMatrix<f64>> {
    if freqs_hz.len() != matrices.len() {
        return Err(Error::invalid("frequency and matrix counts differ"));
    }
    let mut sum: Option<DMatrix<f64>> = None;
    let mut count = 0usize;
    for (f, m) in freqs_hz.iter().zip(matrices) {
        if *f >= low_hz && *f <= high_hz {
            match sum.as_mut() {
                Some(s) => *s += m,
                None => sum = Some(m.clone()),
            }
            count += 1;
        }
    }
    sum.map(|s| s / count as f64).ok_or_else(|| {
        Error::invalid(format!("no frequency bin inside [{low_hz}, {high_hz}] Hz"))
    })
}
