//! Frequency-domain band filtering, analytic signals, and the two
//! Hilbert-based couplings: phase locking value and amplitude envelope
//! correlation.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Complex analytic signal `s + i·H(s)` of each channel of one trial.
#[derive(Clone, Debug)]
pub struct AnalyticSignal {
    pub channels: Vec<Vec<Complex64>>,
}

impl AnalyticSignal {
    pub fn envelope(&self, ch: usize) -> Vec<f64> {
        self.channels[ch].iter().map(|z| z.norm()).collect()
    }

    pub fn phase(&self, ch: usize) -> Vec<f64> {
        self.channels[ch].iter().map(|z| z.arg()).collect()
    }
}

/// A symmetric coupling matrix for one trial plus the count of off-diagonal
/// entries set to zero because a channel carried no usable signal.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub values: DMatrix<f64>,
    pub flagged: usize,
}

fn check_band(fs_hz: f64, low_hz: f64, high_hz: f64) -> Result<()> {
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs_hz / 2.0) {
        return Err(Error::invalid(format!(
            "band [{low_hz}, {high_hz}] Hz must satisfy 0 < low < high < fs/2 = {}",
            fs_hz / 2.0
        )));
    }
    Ok(())
}

/// Frequency of FFT bin `k` for an `n`-point transform, folded to `[0, fs/2]`.
fn bin_freq(k: usize, n: usize, fs_hz: f64) -> f64 {
    let folded = if k <= n / 2 { k } else { n - k };
    folded as f64 * fs_hz / n as f64
}

/// Spectral gain applied per bin: band mask for filtering, the one-sided
/// Hilbert multiplier for analytic signals, or both.
fn spectral_gain(n: usize, fs_hz: f64, band: Option<(f64, f64)>, analytic: bool) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let pass = band.is_none_or(|(lo, hi)| {
                let f = bin_freq(k, n, fs_hz);
                f >= lo && f <= hi
            });
            if !pass {
                return 0.0;
            }
            if !analytic {
                return 1.0;
            }
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else if k < n.div_ceil(2) {
                2.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Applies a real per-bin gain to each channel: FFT, scale, inverse FFT.
fn filter_channels(trial: &DMatrix<f64>, gain: &[f64]) -> Vec<Vec<Complex64>> {
    let n = trial.ncols();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    trial
        .row_iter()
        .map(|row| {
            let mut buf: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fwd.process(&mut buf);
            for (z, g) in buf.iter_mut().zip(gain) {
                *z *= *g / n as f64;
            }
            inv.process(&mut buf);
            buf
        })
        .collect()
}

/// Zero-phase band-pass by masking the spectrum to `[low, high]` Hz.
pub fn band_filter(trial: &DMatrix<f64>, fs_hz: f64, low_hz: f64, high_hz: f64) -> Result<DMatrix<f64>> {
    check_band(fs_hz, low_hz, high_hz)?;
    let gain = spectral_gain(trial.ncols(), fs_hz, Some((low_hz, high_hz)), false);
    let out = filter_channels(trial, &gain);
    Ok(DMatrix::from_fn(trial.nrows(), trial.ncols(), |i, j| out[i][j].re))
}

/// Analytic signal by zeroing negative frequencies.
pub fn analytic_signal(trial: &DMatrix<f64>) -> Result<AnalyticSignal> {
    if trial.ncols() < 4 {
        return Err(Error::invalid("analytic signal needs at least four samples"));
    }
    let gain = spectral_gain(trial.ncols(), 1.0, None, true);
    Ok(AnalyticSignal { channels: filter_channels(trial, &gain) })
}

/// Analytic signal of the band-filtered trial in a single FFT round trip.
pub(crate) fn band_analytic(trial: &DMatrix<f64>, fs_hz: f64, low_hz: f64, high_hz: f64) -> Result<AnalyticSignal> {
    check_band(fs_hz, low_hz, high_hz)?;
    let gain = spectral_gain(trial.ncols(), fs_hz, Some((low_hz, high_hz)), true);
    Ok(AnalyticSignal { channels: filter_channels(trial, &gain) })
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 { 0.0 } else { (sum / n as f64).sqrt() }
}

/// Channels whose in-band content is negligible against the raw signal.
fn silent_channels(trial: &DMatrix<f64>, z: &AnalyticSignal) -> Vec<bool> {
    trial
        .row_iter()
        .zip(&z.channels)
        .map(|(raw, band)| {
            let raw_rms = rms(raw.iter().copied());
            let band_rms = rms(band.iter().map(|c| c.re));
            band_rms == 0.0 || band_rms <= 1e-10 * raw_rms
        })
        .collect()
}

fn interior(len: usize, edge: usize) -> Result<std::ops::Range<usize>> {
    if len < 2 * edge + 2 {
        return Err(Error::invalid(format!(
            "{len} samples leave fewer than two after trimming {edge} from each edge"
        )));
    }
    Ok(edge..len - edge)
}

/// Phase locking value `|mean_t exp(i(φ_a − φ_b))|` over the interior
/// samples of each band-filtered channel pair.
pub fn plv_trial(
    trial: &DMatrix<f64>,
    fs_hz: f64,
    band: (f64, f64),
    edge_samples: usize,
) -> Result<Coupling> {
    let range = interior(trial.ncols(), edge_samples)?;
    let z = band_analytic(trial, fs_hz, band.0, band.1)?;
    let silent = silent_channels(trial, &z);
    let phasors: Vec<Vec<Complex64>> = z
        .channels
        .iter()
        .map(|ch| {
            ch[range.clone()]
                .iter()
                .map(|c| {
                    let r = c.norm();
                    if r > 0.0 { c / r } else { Complex64::default() }
                })
                .collect()
        })
        .collect();
    let n = trial.nrows();
    let len = range.len() as f64;
    let mut values = DMatrix::identity(n, n);
    let mut flagged = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if silent[i] || silent[j] {
                flagged += 1;
                continue;
            }
            let s: Complex64 = phasors[i].iter().zip(&phasors[j]).map(|(a, b)| a * b.conj()).sum();
            let v = (s.norm() / len).min(1.0);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(Coupling { values, flagged })
}

/// Pearson correlation of Hilbert envelopes over the interior samples.
pub fn aec_trial(
    trial: &DMatrix<f64>,
    fs_hz: f64,
    band: (f64, f64),
    edge_samples: usize,
) -> Result<Coupling> {
    let range = interior(trial.ncols(), edge_samples)?;
    let z = band_analytic(trial, fs_hz, band.0, band.1)?;
    let silent = silent_channels(trial, &z);
    let len = range.len() as f64;
    // Centered envelopes; `None` marks a zero-variance envelope.
    let centered: Vec<Option<Vec<f64>>> = z
        .channels
        .iter()
        .zip(&silent)
        .map(|(ch, &quiet)| {
            if quiet {
                return None;
            }
            let env: Vec<f64> = ch[range.clone()].iter().map(|c| c.norm()).collect();
            let mean = env.iter().sum::<f64>() / len;
            let dev: Vec<f64> = env.iter().map(|e| e - mean).collect();
            let sd = rms(dev.iter().copied());
            if sd <= 1e-8 * mean.abs() || sd == 0.0 { None } else { Some(dev) }
        })
        .collect();
    let n = trial.nrows();
    let mut values = DMatrix::identity(n, n);
    let mut flagged = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (Some(a), Some(b)) = (&centered[i], &centered[j]) else {
                flagged += 1;
                continue;
            };
            let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let saa: f64 = a.iter().map(|x| x * x).sum();
            let sbb: f64 = b.iter().map(|y| y * y).sum();
            let v = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(Coupling { values, flagged })
}
