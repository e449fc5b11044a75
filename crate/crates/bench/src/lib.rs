//! Shared fixtures for the criterion benches.

use mfl_core::stats::Matrix;
use mfl_core::synth::SynthRng;

pub fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let mut rng = SynthRng::new(seed, 0);
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.normal();
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

pub fn random_series(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = SynthRng::new(seed, 1);
    (0..len).map(|_| rng.normal()).collect()
}
