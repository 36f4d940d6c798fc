//! Dense many-body operators on the `2^d`-dimensional Fock space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{grade, inner_unchecked, FockVector, ModeSpace, C64};

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ManyBodyOperator {
    modes: ModeSpace,
    matrix: DMatrix<C64>,
    hermitian: bool,
}

/// Sign picked up by moving past every occupied mode above `k`.
fn string_sign(state: usize, k: usize) -> f64 {
    if (state >> (k + 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `a_j` on basis state `s`: `(sign, target)` or `None`.
fn annihilate(s: usize, j: usize) -> Option<(f64, usize)> {
    if s & (1 << j) == 0 {
        return None;
    }
    let t = s ^ (1 << j);
    Some((string_sign(t, j), t))
}

/// `a†_i` on basis state `s`.
fn create(s: usize, i: usize) -> Option<(f64, usize)> {
    if s & (1 << i) != 0 {
        return None;
    }
    Some((string_sign(s, i), s | (1 << i)))
}

impl ManyBodyOperator {
    /// Wraps a matrix; the hermitian flag is set when it holds to 1e−12.
    pub fn from_matrix(modes: ModeSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let n = modes.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.nrows().max(matrix.ncols()) });
        }
        let hermitian = hermitian_defect(&matrix) < HERMITIAN_TOL;
        Ok(Self { modes, matrix, hermitian })
    }

    pub fn zero(modes: ModeSpace) -> Self {
        Self { modes, matrix: DMatrix::zeros(modes.dim(), modes.dim()), hermitian: true }
    }

    pub fn identity(modes: ModeSpace) -> Self {
        Self { modes, matrix: DMatrix::identity(modes.dim(), modes.dim()), hermitian: true }
    }

    /// Diagonal operator with entries `f(i)` on `|f_i⟩`.
    pub fn diagonal(modes: ModeSpace, f: impl Fn(usize) -> f64) -> Self {
        let mut matrix = DMatrix::zeros(modes.dim(), modes.dim());
        for i in 0..modes.dim() {
            matrix[(i, i)] = C64::new(f(i), 0.0);
        }
        Self { modes, matrix, hermitian: true }
    }

    pub fn modes(&self) -> ModeSpace {
        self.modes
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn apply(&self, u: &FockVector) -> FockVector {
        debug_assert_eq!(u.modes(), self.modes);
        let n = self.modes.dim();
        let mut out = vec![C64::new(0.0, 0.0); n];
        let amps = u.amplitudes();
        for (col, &a) in amps.iter().enumerate() {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let column = self.matrix.column(col);
            for (o, m) in out.iter_mut().zip(column.iter()) {
                *o += m * a;
            }
        }
        FockVector::from_amplitudes(self.modes, out).expect("dimension fixed by operator")
    }

    pub fn adjoint(&self) -> Self {
        Self { modes: self.modes, matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        let m = &self.matrix * &rhs.matrix;
        Self::from_matrix(self.modes, m).expect("same dimensions")
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self::from_matrix(self.modes, &self.matrix + &rhs.matrix).expect("same dimensions")
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_matrix(self.modes, &self.matrix * c).expect("same dimensions")
    }

    pub fn commutator(&self, rhs: &Self) -> DMatrix<C64> {
        &self.matrix * &rhs.matrix - &rhs.matrix * &self.matrix
    }

    /// Max entry of `A − A†`.
    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.matrix)
    }

    /// Max absolute matrix entry.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// `a†_k`.
pub fn creation(modes: ModeSpace, k: usize) -> Result<ManyBodyOperator> {
    modes.check_mode(k)?;
    let mut m = DMatrix::zeros(modes.dim(), modes.dim());
    for s in 0..modes.dim() {
        if let Some((sg, t)) = create(s, k) {
            m[(t, s)] = C64::new(sg, 0.0);
        }
    }
    ManyBodyOperator::from_matrix(modes, m)
}

/// `a_k`.
pub fn annihilation(modes: ModeSpace, k: usize) -> Result<ManyBodyOperator> {
    Ok(creation(modes, k)?.adjoint())
}

/// `a†_i a_j`.
pub fn hopping_op(modes: ModeSpace, i: usize, j: usize) -> Result<ManyBodyOperator> {
    modes.check_mode(i)?;
    modes.check_mode(j)?;
    let mut m = DMatrix::zeros(modes.dim(), modes.dim());
    add_hopping(&mut m, modes, C64::new(1.0, 0.0), i, j);
    ManyBodyOperator::from_matrix(modes, m)
}

fn add_hopping(m: &mut DMatrix<C64>, modes: ModeSpace, coef: C64, i: usize, j: usize) {
    for s in 0..modes.dim() {
        let Some((s1, mid)) = annihilate(s, j) else { continue };
        let Some((s2, t)) = create(mid, i) else { continue };
        m[(t, s)] += coef * s1 * s2;
    }
}

pub fn number_op(modes: ModeSpace, i: usize) -> Result<ManyBodyOperator> {
    modes.check_mode(i)?;
    Ok(ManyBodyOperator::diagonal(modes, |s| ((s >> i) & 1) as f64))
}

/// `P_ij = N_i N_j − δ_ij N_i`.
pub fn pair_distribution(modes: ModeSpace, i: usize, j: usize) -> Result<ManyBodyOperator> {
    modes.check_mode(i)?;
    modes.check_mode(j)?;
    Ok(ManyBodyOperator::diagonal(modes, |s| {
        let ni = ((s >> i) & 1) as f64;
        let nj = ((s >> j) & 1) as f64;
        ni * nj - if i == j { ni } else { 0.0 }
    }))
}

pub fn total_number(modes: ModeSpace) -> ManyBodyOperator {
    ManyBodyOperator::diagonal(modes, |s| grade(s) as f64)
}

/// Fermion number modulo 2.
pub fn univalence(modes: ModeSpace) -> ManyBodyOperator {
    ManyBodyOperator::diagonal(modes, |s| (grade(s) % 2) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubbardParams {
    pub sites: usize,
    #[serde(default)]
    pub spinful: bool,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default)]
    pub u: f64,
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

fn one() -> f64 {
    1.0
}

impl HubbardParams {
    pub fn spinless(sites: usize, t: f64, v: f64) -> Self {
        Self { sites, spinful: false, t, u: 0.0, v, boundary: Boundary::Open }
    }

    pub fn spinful(sites: usize, t: f64, u: f64, v: f64) -> Self {
        Self { sites, spinful: true, t, u, v, boundary: Boundary::Open }
    }

    pub fn mode_count(&self) -> usize {
        if self.spinful {
            2 * self.sites
        } else {
            self.sites
        }
    }

    pub fn mode_space(&self) -> Result<ModeSpace> {
        ModeSpace::new(self.mode_count())
    }

    fn bonds(&self) -> Result<Vec<(usize, usize)>> {
        let l = self.sites;
        if l == 0 {
            return Err(Error::InvalidGeometry("lattice needs at least one site".into()));
        }
        match self.boundary {
            Boundary::Open => Ok((0..l.saturating_sub(1)).map(|s| (s, s + 1)).collect()),
            Boundary::Periodic if l < 3 => {
                Err(Error::InvalidGeometry(format!("periodic ring needs at least 3 sites, got {l}")))
            }
            Boundary::Periodic => Ok((0..l).map(|s| (s, (s + 1) % l)).collect()),
        }
    }

    /// Mode indices holding site `s`.
    pub fn site_modes(&self, s: usize) -> Vec<usize> {
        if self.spinful {
            vec![2 * s, 2 * s + 1]
        } else {
            vec![s]
        }
    }
}

/// Extended Hubbard chain with vacuum energy zero.
pub fn build_hubbard(p: &HubbardParams) -> Result<ManyBodyOperator> {
    for (name, x) in [("t", p.t), ("u", p.u), ("v", p.v)] {
        if !x.is_finite() {
            return Err(Error::InvalidArgument(format!("coupling {name} is not finite")));
        }
    }
    let modes = p
        .mode_space()
        .map_err(|_| Error::InvalidGeometry(format!("{} modes outside supported range 1..=16", p.mode_count())))?;
    let bonds = p.bonds()?;
    let n = modes.dim();
    let mut m = DMatrix::zeros(n, n);
    let hop = C64::new(-p.t, 0.0);
    for &(a, b) in &bonds {
        for (ma, mb) in p.site_modes(a).into_iter().zip(p.site_modes(b)) {
            add_hopping(&mut m, modes, hop, ma, mb);
            add_hopping(&mut m, modes, hop, mb, ma);
        }
    }
    let occ = |s: usize, site: usize| -> f64 { p.site_modes(site).iter().map(|&k| ((s >> k) & 1) as f64).sum() };
    for s in 0..n {
        let mut e = 0.0;
        for &(a, b) in &bonds {
            e += p.v * occ(s, a) * occ(s, b);
        }
        if p.spinful {
            for site in 0..p.sites {
                e += p.u * (((s >> (2 * site)) & 1) * ((s >> (2 * site + 1)) & 1)) as f64;
            }
        }
        m[(s, s)] += C64::new(e, 0.0);
    }
    ManyBodyOperator::from_matrix(modes, m)
}

/// `⟨u|A|u⟩/⟨u|u⟩`.
pub fn expectation(a: &ManyBodyOperator, u: &FockVector) -> Result<C64> {
    a.modes.ensure_same(&u.modes())?;
    let nrm = u.norm_sqr();
    if nrm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let val = inner_unchecked(u, &a.apply(u)) / nrm;
    Ok(if a.hermitian { C64::new(val.re, 0.0) } else { val })
}

/// Eigen-decomposition of a hermitian operator.
#[derive(Clone, Debug)]
pub struct SpectralCache {
    modes: ModeSpace,
    energies: DVector<f64>,
    vectors: DMatrix<C64>,
}

impl SpectralCache {
    pub fn new(h: &ManyBodyOperator) -> Result<Self> {
        if !h.hermitian {
            return Err(Error::InvalidArgument("spectral cache needs a hermitian operator".into()));
        }
        let eig = SymmetricEigen::new(h.matrix.clone());
        Ok(Self { modes: h.modes, energies: eig.eigenvalues, vectors: eig.eigenvectors })
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    pub fn spectral_radius(&self) -> f64 {
        self.energies.iter().map(|e| e.abs()).fold(0.0, f64::max)
    }

    pub fn reconstruct(&self) -> DMatrix<C64> {
        let d = DMatrix::from_diagonal(&self.energies.map(|e| C64::new(e, 0.0)));
        &self.vectors * d * self.vectors.adjoint()
    }

    /// Eigenvector `idx` in ascending energy order.
    pub fn eigenstate(&self, idx: usize) -> Result<(f64, FockVector)> {
        let mut order: Vec<usize> = (0..self.energies.len()).collect();
        order.sort_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]));
        let &col = order.get(idx).ok_or(Error::IndexOutOfRange { index: idx, limit: order.len() })?;
        let amps = self.vectors.column(col).iter().copied().collect();
        Ok((self.energies[col], FockVector::from_amplitudes(self.modes, amps)?))
    }
}

/// `e^{−iHt}|ψ⟩`.
pub fn propagate_exact(psi: &FockVector, h: &SpectralCache, t: f64) -> FockVector {
    let coeffs = h.vectors.adjoint() * DVector::from_column_slice(psi.amplitudes());
    let phased = DVector::from_iterator(
        coeffs.len(),
        coeffs.iter().zip(h.energies.iter()).map(|(c, e)| c * C64::new(0.0, -e * t).exp()),
    );
    let out = &h.vectors * phased;
    FockVector::from_amplitudes(h.modes, out.iter().copied().collect()).expect("same dimension")
}

/// A Hamiltonian together with its spectrum.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    op: ManyBodyOperator,
    spectrum: SpectralCache,
}

impl Hamiltonian {
    pub fn new(op: ManyBodyOperator) -> Result<Self> {
        let spectrum = SpectralCache::new(&op)?;
        Ok(Self { op, spectrum })
    }

    pub fn hubbard(p: &HubbardParams) -> Result<Self> {
        Self::new(build_hubbard(p)?)
    }

    pub fn op(&self) -> &ManyBodyOperator {
        &self.op
    }

    pub fn spectrum(&self) -> &SpectralCache {
        &self.spectrum
    }

    pub fn modes(&self) -> ModeSpace {
        self.op.modes
    }

    pub fn apply(&self, u: &FockVector) -> FockVector {
        self.op.apply(u)
    }

    pub fn propagate(&self, psi: &FockVector, t: f64) -> FockVector {
        propagate_exact(psi, &self.spectrum, t)
    }
}
