//! Reproducible random streams keyed by (seed, experiment, realization).
//!
//! Each key hashes to a ChaCha key, so a realization's draws do not depend on
//! which thread runs it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::numerics::{c, CMat};

pub type Stream = ChaCha12Rng;

pub fn stream(seed: u64, experiment: &str, realization: u64) -> Stream {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((experiment.len() as u64).to_le_bytes());
    h.update(experiment.as_bytes());
    h.update(realization.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha12Rng::from_seed(key)
}

pub fn uniform(rng: &mut Stream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Standard normal by Box-Muller.
pub fn normal(rng: &mut Stream) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn ginibre(rng: &mut Stream, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(normal(rng), normal(rng)) * (0.5f64).sqrt())
}

/// Haar-distributed unitary (QR of a Ginibre matrix with phase-fixed R).
pub fn haar_unitary(rng: &mut Stream, n: usize) -> CMat {
    let g = ginibre(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

pub fn random_hermitian(rng: &mut Stream, n: usize) -> CMat {
    let g = ginibre(rng, n, n);
    (&g + g.adjoint()) * c(0.5, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs;

    #[test]
    fn streams_are_keyed() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, "x", 3).random()).collect();
        let mut s = stream(7, "x", 3);
        let b: Vec<u64> = (0..4).map(|_| s.random()).collect();
        assert_eq!(a[0], b[0]);
        let mut t = stream(7, "x", 4);
        assert_ne!(b[0], t.random::<u64>());
        let mut u = stream(7, "y", 3);
        assert_ne!(b[0], u.random::<u64>());
    }

    #[test]
    fn haar_is_unitary() {
        let mut s = stream(1, "haar", 0);
        let u = haar_unitary(&mut s, 5);
        assert!(max_abs(&(u.adjoint() * &u - CMat::identity(5, 5))) < 1e-13);
    }
}
