#![allow(dead_code)]

use fockdyn::decomposition::{Decomposition, DirectSumVector, Permutation};
use fockdyn::operators::{number_op, Hamiltonian, HubbardParams, ManyBodyOperator};
use fockdyn::random::{random_even, random_exponent, random_state, rng_from_seed, SimRng};
use fockdyn::{FockVector, C64};

/// Interacting control: L = 4 spinless chain, t = 1, V = 2.
pub fn control_hamiltonian() -> Hamiltonian {
    Hamiltonian::hubbard(&HubbardParams::spinless(4, 1.0, 2.0)).unwrap()
}

pub fn free_hamiltonian() -> Hamiltonian {
    Hamiltonian::hubbard(&HubbardParams::spinless(4, 1.0, 0.0)).unwrap()
}

/// Seeded three-subsystem decomposition with exponent fluctuations of size `scale`.
pub fn seeded_decomposition(h: &Hamiltonian, seed: u64, scale: f64, even: bool) -> Decomposition {
    let modes = h.modes();
    let mut rng = rng_from_seed(seed);
    let v = if even { random_even(modes, &mut rng, 1.0) } else { random_state(modes, &mut rng) };
    let xs = (0..2).map(|_| random_exponent(modes, &mut rng, scale, even)).collect();
    Decomposition::new(v.normalize().unwrap(), xs, Permutation::identity(3)).unwrap()
}

pub fn control(seed: u64) -> (Decomposition, Hamiltonian) {
    let h = control_hamiltonian();
    (seeded_decomposition(&h, seed, 0.3, false), h)
}

pub fn occupations(h: &Hamiltonian) -> Vec<ManyBodyOperator> {
    (0..h.modes().modes()).map(|i| number_op(h.modes(), i).unwrap()).collect()
}

/// Random subsystem change with components of norm `scale`.
pub fn random_delta(dec: &Decomposition, rng: &mut SimRng, scale: f64) -> DirectSumVector {
    let comps: Vec<FockVector> = dec
        .states()
        .iter()
        .map(|u| {
            let r = random_state(u.modes(), rng);
            r.scale(C64::new(scale / r.norm(), 0.0))
        })
        .collect();
    DirectSumVector::for_decomposition(dec, comps).unwrap()
}
