//! Seeded random states for tests, examples and CLI initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::fock::{grade, FockVector, ModeSpace, C64};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Gaussian amplitudes on every basis state whose index passes `keep`.
pub fn random_filtered(modes: ModeSpace, rng: &mut impl Rng, scale: f64, keep: impl Fn(usize) -> bool) -> FockVector {
    let mut v = FockVector::zeros(modes);
    for (i, a) in v.amplitudes_mut().iter_mut().enumerate() {
        if keep(i) {
            *a = gaussian(rng) * scale;
        }
    }
    v
}

pub fn random_state(modes: ModeSpace, rng: &mut impl Rng) -> FockVector {
    random_filtered(modes, rng, 1.0, |_| true)
}

/// Pure `n`-particle state.
pub fn random_grade(modes: ModeSpace, rng: &mut impl Rng, n: u32) -> FockVector {
    random_filtered(modes, rng, 1.0, |i| grade(i) == n)
}

pub fn random_even(modes: ModeSpace, rng: &mut impl Rng, scale: f64) -> FockVector {
    random_filtered(modes, rng, scale, |i| grade(i).is_multiple_of(2))
}

/// Creator with unit-order vacuum amplitude, safely invertible.
pub fn random_invertible(modes: ModeSpace, rng: &mut impl Rng, scale: f64) -> FockVector {
    let mut v = random_filtered(modes, rng, scale, |i| i != 0);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    v.amplitudes_mut()[0] = C64::from_polar(rng.random_range(0.5..1.5), phase);
    v
}

/// Random exponent with modest vacuum part and fluctuation amplitudes of size `scale`.
pub fn random_exponent(modes: ModeSpace, rng: &mut impl Rng, scale: f64, even_only: bool) -> FockVector {
    let mut v = random_filtered(modes, rng, scale, |i| i != 0 && (!even_only || grade(i).is_multiple_of(2)));
    v.amplitudes_mut()[0] = gaussian(rng) * 0.1;
    v
}
