//! Fermionic Fock space over `d` modes.
//!
//! Basis state `|f_i⟩` is labelled by the occupation bitmask `i` (bit `k` set
//! means mode `e_k` is occupied) and equals the ψ-product of its occupied
//! modes taken in descending mode order, so `|f_5⟩ = |e_2⟩ ⊙ |e_0⟩`.
//! The same amplitude table read as an operator is the creator of the state.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative vacuum-amplitude threshold below which a creator counts as singular.
pub const INVERTIBILITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ModeSpace {
    d: usize,
}

impl ModeSpace {
    pub const MAX_MODES: usize = 16;

    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d > Self::MAX_MODES {
            return Err(Error::InvalidModes(d));
        }
        Ok(Self { d })
    }

    pub fn modes(&self) -> usize {
        self.d
    }

    /// Number of Fock basis states, `2^d`.
    pub fn dim(&self) -> usize {
        1usize << self.d
    }

    pub fn full_mask(&self) -> usize {
        self.dim() - 1
    }

    /// Largest power of a vacuum-free creator that can be nonzero: `⌈d/2⌉`.
    pub fn nilpotency_bound(&self) -> usize {
        self.d.div_ceil(2)
    }

    /// Bitmasks sorted by particle number, then by index.
    pub fn graded_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by_key(|&i| (i.count_ones(), i));
        order
    }

    pub fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.d {
            return Err(Error::ModeOutOfRange { mode: k, modes: self.d });
        }
        Ok(())
    }

    pub fn ensure_same(&self, other: &ModeSpace) -> Result<()> {
        if self.d != other.d {
            return Err(Error::ModeMismatch { left: self.d, right: other.d });
        }
        Ok(())
    }
}

impl TryFrom<usize> for ModeSpace {
    type Error = Error;
    fn try_from(d: usize) -> Result<Self> {
        ModeSpace::new(d)
    }
}

impl From<ModeSpace> for usize {
    fn from(m: ModeSpace) -> usize {
        m.d
    }
}

/// Particle number of a basis index.
pub fn grade(i: usize) -> u32 {
    i.count_ones()
}

/// Sign of `|f_i⟩ ⊙ |f_j⟩` relative to `|f_{i|j}⟩` for disjoint masks.
///
/// Counts the transpositions needed to merge two descending mode lists:
/// one for every pair `a ∈ i`, `b ∈ j` with `a < b`.
pub fn merge_sign(i: usize, j: usize) -> f64 {
    debug_assert_eq!(i & j, 0);
    let mut swaps = 0u32;
    let mut rest = j;
    while rest != 0 {
        let b = rest.trailing_zeros();
        swaps += (i & ((1usize << b) - 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Amplitude table over all `2^d` occupation bitmasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockVector {
    modes: ModeSpace,
    amps: Vec<C64>,
}

impl FockVector {
    pub fn zeros(modes: ModeSpace) -> Self {
        Self { modes, amps: vec![C64::new(0.0, 0.0); modes.dim()] }
    }

    /// The vacuum, which as a creator is the multiplicative identity.
    pub fn vacuum(modes: ModeSpace) -> Self {
        Self::basis(modes, 0)
    }

    pub fn basis(modes: ModeSpace, i: usize) -> Self {
        let mut v = Self::zeros(modes);
        v.amps[i] = C64::new(1.0, 0.0);
        v
    }

    /// Single-mode state `|e_k⟩`.
    pub fn mode(modes: ModeSpace, k: usize) -> Result<Self> {
        modes.check_mode(k)?;
        Ok(Self::basis(modes, 1 << k))
    }

    pub fn scalar(modes: ModeSpace, c: C64) -> Self {
        let mut v = Self::zeros(modes);
        v.amps[0] = c;
        v
    }

    pub fn from_amplitudes(modes: ModeSpace, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != modes.dim() {
            return Err(Error::DimensionMismatch { expected: modes.dim(), found: amps.len() });
        }
        Ok(Self { modes, amps })
    }

    pub fn modes(&self) -> ModeSpace {
        self.modes
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn amplitude(&self, i: usize) -> C64 {
        self.amps[i]
    }

    pub fn vacuum_amplitude(&self) -> C64 {
        self.amps[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.amps.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { modes: self.modes, amps: self.amps.iter().map(|a| a * c).collect() }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// `self += c·other`.
    pub fn axpy(&mut self, c: C64, other: &FockVector) {
        debug_assert_eq!(self.modes, other.modes);
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += c * b;
        }
    }

    /// Keeps amplitudes of particle number `n` only.
    pub fn grade_part(&self, n: u32) -> Self {
        let mut out = Self::zeros(self.modes);
        for (i, a) in self.amps.iter().enumerate() {
            if grade(i) == n {
                out.amps[i] = *a;
            }
        }
        out
    }

    /// Squared norm of the odd-particle-number amplitudes.
    pub fn odd_mass(&self) -> f64 {
        self.amps.iter().enumerate().filter(|(i, _)| grade(*i) % 2 == 1).map(|(_, a)| a.norm_sqr()).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Euclidean distance between amplitude tables.
    pub fn distance(&self, other: &FockVector) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scale_real(1.0 / n))
    }
}

impl Add<&FockVector> for &FockVector {
    type Output = FockVector;
    fn add(self, rhs: &FockVector) -> FockVector {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&FockVector> for &FockVector {
    type Output = FockVector;
    fn sub(self, rhs: &FockVector) -> FockVector {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&FockVector> for FockVector {
    fn add_assign(&mut self, rhs: &FockVector) {
        debug_assert_eq!(self.modes, rhs.modes);
        for (a, b) in self.amps.iter_mut().zip(&rhs.amps) {
            *a += b;
        }
    }
}

impl SubAssign<&FockVector> for FockVector {
    fn sub_assign(&mut self, rhs: &FockVector) {
        debug_assert_eq!(self.modes, rhs.modes);
        for (a, b) in self.amps.iter_mut().zip(&rhs.amps) {
            *a -= b;
        }
    }
}

impl Mul<C64> for &FockVector {
    type Output = FockVector;
    fn mul(self, rhs: C64) -> FockVector {
        self.scale(rhs)
    }
}

impl Neg for &FockVector {
    type Output = FockVector;
    fn neg(self) -> FockVector {
        self.scale_real(-1.0)
    }
}

/// `Σ_i conj(a_i) b_i`.
pub fn inner_product(a: &FockVector, b: &FockVector) -> Result<C64> {
    a.modes.ensure_same(&b.modes)?;
    Ok(inner_unchecked(a, b))
}

pub(crate) fn inner_unchecked(a: &FockVector, b: &FockVector) -> C64 {
    a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum()
}

/// The ψ-product `a ⊙ b`, i.e. the state created by the operator product `AB`.
pub fn psi_product(a: &FockVector, b: &FockVector) -> Result<FockVector> {
    a.modes.ensure_same(&b.modes)?;
    Ok(psi_unchecked(a, b))
}

pub(crate) fn psi_unchecked(a: &FockVector, b: &FockVector) -> FockVector {
    let full = a.modes.full_mask();
    let mut out = FockVector::zeros(a.modes);
    for (i, &ai) in a.amps.iter().enumerate() {
        if ai == C64::new(0.0, 0.0) {
            continue;
        }
        // walk every submask j of the complement of i, including 0
        let comp = full & !i;
        let mut j = comp;
        loop {
            let bj = b.amps[j];
            if bj != C64::new(0.0, 0.0) {
                out.amps[i | j] += ai * bj * merge_sign(i, j);
            }
            if j == 0 {
                break;
            }
            j = (j - 1) & comp;
        }
    }
    out
}

/// Splits into even- and odd-particle-number parts.
pub fn even_odd_split(a: &FockVector) -> (FockVector, FockVector) {
    let mut even = FockVector::zeros(a.modes);
    let mut odd = FockVector::zeros(a.modes);
    for (i, c) in a.amps.iter().enumerate() {
        if grade(i).is_multiple_of(2) {
            even.amps[i] = *c;
        } else {
            odd.amps[i] = *c;
        }
    }
    (even, odd)
}

/// `{a, b} = ½(a⊙b + b⊙a)`.
pub fn symmetrized_product(a: &FockVector, b: &FockVector) -> Result<FockVector> {
    a.modes.ensure_same(&b.modes)?;
    Ok(symmetrized_unchecked(a, b))
}

pub(crate) fn symmetrized_unchecked(a: &FockVector, b: &FockVector) -> FockVector {
    let mut out = psi_unchecked(a, b);
    out += &psi_unchecked(b, a);
    out.scale_real(0.5)
}

/// `[a, b] = a⊙b − b⊙a`, which reduces to `2 a₋⊙b₋`.
pub fn creator_commutator(a: &FockVector, b: &FockVector) -> Result<FockVector> {
    a.modes.ensure_same(&b.modes)?;
    let (_, ao) = even_odd_split(a);
    let (_, bo) = even_odd_split(b);
    Ok(psi_unchecked(&ao, &bo).scale_real(2.0))
}

fn check_invertible(u: &FockVector) -> Result<C64> {
    let c0 = u.vacuum_amplitude();
    let scale = u.max_abs();
    if !(c0.norm() > INVERTIBILITY_TOL * scale) {
        return Err(Error::NonInvertible { vacuum: c0.norm(), scale });
    }
    Ok(c0)
}

pub fn is_invertible(u: &FockVector) -> bool {
    check_invertible(u).is_ok()
}

/// `Σ_{n=0}^{⌈d/2⌉} coeff(n) zⁿ` for a vacuum-free `z`.
fn nilpotent_series(z: &FockVector, coeff: impl Fn(usize) -> C64) -> FockVector {
    let bound = z.modes.nilpotency_bound();
    let mut out = FockVector::scalar(z.modes, coeff(0));
    let mut power = FockVector::vacuum(z.modes);
    for n in 1..=bound {
        power = psi_unchecked(&power, z);
        out.axpy(coeff(n), &power);
    }
    out
}

fn without_vacuum(u: &FockVector) -> FockVector {
    let mut z = u.clone();
    z.amps[0] = C64::new(0.0, 0.0);
    z
}

/// `exp X`, exact by nilpotency of the vacuum-free part.
pub fn creator_exp(x: &FockVector) -> FockVector {
    let x0 = x.vacuum_amplitude();
    let z = without_vacuum(x);
    let mut fact = 1.0;
    let mut coeffs = vec![1.0];
    for n in 1..=x.modes.nilpotency_bound() {
        fact *= n as f64;
        coeffs.push(1.0 / fact);
    }
    nilpotent_series(&z, |n| C64::new(coeffs[n], 0.0)).scale(x0.exp())
}

/// Principal logarithm; `creator_exp(creator_log(u)) = u`.
pub fn creator_log(u: &FockVector) -> Result<FockVector> {
    let c0 = check_invertible(u)?;
    let z = without_vacuum(u).scale(c0.inv());
    let mut out = nilpotent_series(&z, |n| {
        if n == 0 {
            C64::new(0.0, 0.0)
        } else {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            C64::new(sign / n as f64, 0.0)
        }
    });
    out.amps[0] = c0.ln();
    Ok(out)
}

pub fn creator_inverse(u: &FockVector) -> Result<FockVector> {
    let c0 = check_invertible(u)?;
    let z = without_vacuum(u).scale(c0.inv());
    let series = nilpotent_series(&z, |n| C64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0));
    Ok(series.scale(c0.inv()))
}

/// `zⁿ` under the ψ-product.
///
/// Uses `(E + O)ⁿ = Eⁿ + n Eⁿ⁻¹ O`: the even part commutes with everything and
/// the odd part squares to zero, so vanishing powers come out as exact zeros.
pub fn creator_power(z: &FockVector, n: usize) -> FockVector {
    if n == 0 {
        return FockVector::vacuum(z.modes);
    }
    let (even, odd) = even_odd_split(z);
    let mut lower = FockVector::vacuum(z.modes);
    for _ in 1..n {
        lower = psi_unchecked(&lower, &even);
    }
    let mut out = psi_unchecked(&lower, &even);
    out.axpy(C64::new(n as f64, 0.0), &psi_unchecked(&lower, &odd));
    out
}

/// Matrix of a creator, stored in graded lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct CreatorMatrix {
    order: Vec<usize>,
    entries: DMatrix<C64>,
}

impl CreatorMatrix {
    /// Position `p` of the graded basis holds bitmask `order()[p]`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    /// Same operator with rows and columns in plain bitmask order.
    pub fn bitmask_matrix(&self) -> DMatrix<C64> {
        let n = self.order.len();
        let mut m = DMatrix::zeros(n, n);
        for (p, &i) in self.order.iter().enumerate() {
            for (q, &j) in self.order.iter().enumerate() {
                m[(i, j)] = self.entries[(p, q)];
            }
        }
        m
    }

    /// Largest modulus strictly above the diagonal.
    pub fn upper_max(&self) -> f64 {
        let n = self.entries.nrows();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                worst = worst.max(self.entries[(r, c)].norm());
            }
        }
        worst
    }
}

/// Column `j` is `u ⊙ |f_j⟩`.
pub fn creator_matrix(u: &FockVector) -> CreatorMatrix {
    let order = u.modes.graded_order();
    let n = order.len();
    let mut pos = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = p;
    }
    let mut entries = DMatrix::zeros(n, n);
    for (i, &ui) in u.amps.iter().enumerate() {
        if ui == C64::new(0.0, 0.0) {
            continue;
        }
        for j in 0..n {
            if i & j == 0 {
                entries[(pos[i | j], pos[j])] += ui * merge_sign(i, j);
            }
        }
    }
    CreatorMatrix { order, entries }
}
