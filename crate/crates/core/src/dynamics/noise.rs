use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::linalg::Vector;

/// Counter-based Gaussian noise source.
///
/// The draws at time index `t` depend only on `(seed, t)`: each step seeds a
/// ChaCha stream from the run seed and selects stream number `t`. Any two
/// rollouts built on the same `NoiseStream` therefore see element-wise
/// identical standard-normal draws, without storing noise arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    silent: bool,
}

/// Standard-normal draws for one step, before scaling by the covariance factors.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSample {
    pub process: Vector,
    pub measurement: Vector,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        NoiseStream { seed, silent: false }
    }

    /// A stream whose draws are identically zero.
    pub fn silent() -> Self {
        NoiseStream { seed: 0, silent: true }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_silent(&self) -> bool {
        self.silent
    }

    /// Independent standard normals for step `t`: `n` process then `p` measurement.
    pub fn standard_normals(&self, t: i64, n: usize, p: usize) -> NoiseSample {
        if self.silent {
            return NoiseSample {
                process: Vector::zeros(n),
                measurement: Vector::zeros(p),
            };
        }
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(t as u64);
        let process = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let measurement = Vector::from_fn(p, |_, _| rng.sample(StandardNormal));
        NoiseSample { process, measurement }
    }
}
