//! Seeding and complex random draws.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CMat, CVec, C64};

pub type SimRng = ChaCha12Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stable 64-bit mixing (splitmix64 finalizer) of a sequence of words.
pub fn mix_seed(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        h ^= w
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// One draw from CN(0, var).
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn cn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    // column-major draw order
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = cn(rng, var);
        }
    }
    m
}

pub fn cn_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, var: f64) -> CVec {
    CVec::from_iterator(len, (0..len).map(|_| cn(rng, var)))
}

/// Unit-modulus entries with phases uniform on [0, 2pi).
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVec {
    CVec::from_iterator(
        len,
        (0..len).map(|_| C64::from_polar(1.0, 2.0 * PI * rng.random::<f64>())),
    )
}

pub fn random_phase_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = C64::from_polar(1.0, 2.0 * PI * rng.random::<f64>());
        }
    }
    m
}
