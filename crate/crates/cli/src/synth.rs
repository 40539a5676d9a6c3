//! Synthetic two-class epochs standing in for recorded EEG.
//!
//! Each subject mixes latent band-limited sources through its own matrix.
//! The class shows up in two ways: sources 0 and 1 swap power (a covariance
//! effect), and the pairs (2, 3) and (4, 5) are phase-coupled in one class
//! and independent in the other (a connectivity effect with equal power).
//! Subject mixings are `C_s · A`, a shared base `A` under a per-subject
//! congruence `C_s`; with clones enabled, odd subjects reuse the congruence
//! of the preceding subject up to a small perturbation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rigoletto_core::connectivity::{band_filter, EpochSet};
use rigoletto_core::spd::{matrix_exp, SymmetricMatrix};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub subjects: usize,
    pub trials_per_class: usize,
    pub channels: usize,
    pub fs_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Subject `2k+1` is a congruence-perturbed clone of subject `2k`.
    pub clones: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { subjects: 4, trials_per_class: 40, channels: 12, fs_hz: 512.0, duration_s: 8.0, seed: 42, clones: false }
    }
}

const BAND: (f64, f64) = (8.0, 30.0);
const COUPLING_BAND: (f64, f64) = (9.0, 15.0);
const STRONG_GAIN: f64 = 1.2;
const WEAK_GAIN: f64 = 0.85;
const COUPLING_GAIN: f64 = 0.6;
const COUPLING_LAG_S: f64 = 0.008;
const SUBJECT_SPREAD: f64 = 0.6;
const CLONE_SPREAD: f64 = 0.03;
const BROADBAND: f64 = 0.3;
const SENSOR_NOISE: f64 = 0.1;
/// Log-normal spread of per-trial source gains, independent of class.
const GAIN_JITTER: f64 = 0.25;
const MIN_CHANNELS: usize = 6;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.trials_per_class < 2 {
            return Err(CliError::Usage("need at least one subject and two trials per class".into()));
        }
        if self.channels < MIN_CHANNELS {
            return Err(CliError::Usage(format!("synthetic data needs at least {MIN_CHANNELS} channels")));
        }
        if !(self.fs_hz > 2.0 * BAND.1) || !(self.duration_s > 0.0) {
            return Err(CliError::Usage(format!("sampling rate must exceed {} Hz and duration must be positive", 2.0 * BAND.1)));
        }
        if self.samples() < 64 {
            return Err(CliError::Usage("epochs are too short".into()));
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        (self.fs_hz * self.duration_s).round() as usize
    }

    /// Per-subject mixing matrices, in subject order.
    pub fn mixings(&self) -> Result<Vec<DMatrix<f64>>> {
        let n = self.channels;
        let mut rng = rng_for(self.seed, 0);
        let scale = 1.0 / (n as f64).sqrt();
        let base = DMatrix::identity(n, n) + gaussian(&mut rng, n, n) * (0.25 * scale);
        let mut congruences: Vec<DMatrix<f64>> = Vec::with_capacity(self.subjects);
        for s in 0..self.subjects {
            let c = if self.clones && s % 2 == 1 {
                let bump = DMatrix::identity(n, n) + gaussian(&mut rng, n, n) * (CLONE_SPREAD * scale);
                &congruences[s - 1] * bump
            } else {
                let g = gaussian(&mut rng, n, n) * (SUBJECT_SPREAD * scale);
                let sym = SymmetricMatrix::from_symmetric_part(g)?;
                matrix_exp(&sym)?.as_matrix().clone()
            };
            congruences.push(c);
        }
        Ok(congruences.into_iter().map(|c| c * &base).collect())
    }
}

/// Rows scaled to unit RMS.
fn unit_rms(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64).sqrt();
        if rms > 0.0 {
            row /= rms;
        }
    }
    m
}

fn band_noise(rng: &mut ChaCha8Rng, rows: usize, samples: usize, fs: f64, band: (f64, f64)) -> Result<DMatrix<f64>> {
    Ok(unit_rms(band_filter(&gaussian(rng, rows, samples), fs, band.0, band.1)?))
}

fn trial(rng: &mut ChaCha8Rng, p: &SynthParams, mixing: &DMatrix<f64>, class: i32) -> Result<DMatrix<f64>> {
    let (n, t) = (p.channels, p.samples());
    let mut latent = band_noise(rng, n, t, p.fs_hz, BAND)?;
    for mut row in latent.row_iter_mut() {
        row *= (GAIN_JITTER * normal(rng)).exp();
    }
    let (g0, g1) = if class == 0 { (STRONG_GAIN, WEAK_GAIN) } else { (WEAK_GAIN, STRONG_GAIN) };
    latent.row_mut(0).scale_mut(g0);
    latent.row_mut(1).scale_mut(g1);

    // Three narrowband drivers: one shared, two private.
    let drivers = band_noise(rng, 3, t, p.fs_hz, COUPLING_BAND)?;
    let lag = (COUPLING_LAG_S * p.fs_hz).round() as usize;
    let shared = drivers.row(0).into_owned();
    let mut lagged = shared.clone();
    for j in 0..t {
        lagged[j] = shared[(j + t - lag % t) % t];
    }
    let coupled_pair = if class == 1 { 2 } else { 4 };
    for pair in [2, 4] {
        let partner = if pair == coupled_pair {
            lagged.clone()
        } else {
            drivers.row(if pair == 2 { 1 } else { 2 }).into_owned()
        };
        let mut a = latent.row_mut(pair);
        a += &shared * COUPLING_GAIN;
        let mut b = latent.row_mut(pair + 1);
        b += partner * COUPLING_GAIN;
    }
    latent += gaussian(rng, n, t) * BROADBAND;
    latent *= (0.1 * normal(rng)).exp();

    let mut x = mixing * latent + gaussian(rng, n, t) * SENSOR_NOISE;
    // Stored as f32 on disk; round here so in-memory and loaded data agree.
    x.apply(|v| *v = *v as f32 as f64);
    Ok(x)
}

/// Trials of one subject with balanced, shuffled labels.
pub fn generate_subject(p: &SynthParams, index: usize, mixing: &DMatrix<f64>) -> Result<EpochSet> {
    let mut rng = rng_for(p.seed, index as u64 + 1);
    let mut labels: Vec<i32> = (0..2 * p.trials_per_class).map(|i| (i % 2) as i32).collect();
    labels.shuffle(&mut rng);
    let trials = labels.iter().map(|&c| trial(&mut rng, p, mixing, c)).collect::<Result<Vec<_>>>()?;
    let names = (1..=p.channels).map(|i| format!("C{i:02}")).collect();
    Ok(EpochSet::new(p.fs_hz, names, trials, labels)?)
}

pub fn subject_id(index: usize) -> String {
    format!("S{:02}", index + 1)
}

pub fn generate(p: &SynthParams) -> Result<Vec<(String, EpochSet)>> {
    p.validate()?;
    let mixings = p.mixings()?;
    mixings
        .par_iter()
        .enumerate()
        .map(|(i, w)| Ok((subject_id(i), generate_subject(p, i, w)?)))
        .collect()
}
