#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rigoletto_core::spd::{matrix_exp, SpdMatrix, SymmetricMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn spd_of(m: DMatrix<f64>) -> SpdMatrix {
    SpdMatrix::new(SymmetricMatrix::from_symmetric_part(m).unwrap()).unwrap()
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> SymmetricMatrix {
    SymmetricMatrix::from_upper_fn(n, |_, _| scale * normal(rng)).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> SpdMatrix {
    matrix_exp(&random_symmetric(rng, n, spread)).unwrap()
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    gaussian(rng, n, n).qr().q()
}

pub fn congruence(w: &DMatrix<f64>, a: &SpdMatrix) -> SpdMatrix {
    spd_of(w * a.as_matrix() * w.transpose())
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Two classes of sample covariances; class `c` has extra variance on axis `c`.
pub fn two_class_covs(rng: &mut ChaCha8Rng, n: usize, per_class: usize, gain: f64) -> (Vec<SpdMatrix>, Vec<i32>) {
    let mut covs = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2 {
        for _ in 0..per_class {
            let x = DMatrix::from_fn(n, 4 * n, |i, _| if i == class { gain } else { 1.0 } * normal(rng));
            covs.push(spd_of(&x * x.transpose() / (4 * n) as f64));
            labels.push(class as i32);
        }
    }
    (covs, labels)
}
