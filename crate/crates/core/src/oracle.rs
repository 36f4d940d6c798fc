//! Brute-force references for tests.
//!
//! Nothing here calls the bitwise product, the creator series or the step
//! solvers. Products are built from dense antisymmetrized tensors, creators
//! from ladder-operator matrices, and the χ landscape from a Cholesky-whitened
//! eigenproblem.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{FockVector, ModeSpace, C64};
use crate::operators::creation;
use crate::random::gaussian;

/// Largest particle count the antisymmetrizer accepts.
pub const MAX_PARTICLES: usize = 6;
/// Largest mode count for dense tensors.
pub const MAX_TENSOR_MODES: usize = 6;
/// Largest mode count for ladder-operator matrices.
pub const MAX_LADDER_MODES: usize = 8;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All permutations of `0..n` with their signs.
pub fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    fn rec(k: usize, cur: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
        if k == cur.len() {
            let mut inv = 0;
            for i in 0..cur.len() {
                for j in i + 1..cur.len() {
                    if cur[i] > cur[j] {
                        inv += 1;
                    }
                }
            }
            out.push((cur.clone(), if inv % 2 == 0 { 1.0 } else { -1.0 }));
            return;
        }
        for i in k..cur.len() {
            cur.swap(k, i);
            rec(k + 1, cur, out);
            cur.swap(k, i);
        }
    }
    rec(0, &mut cur, &mut out);
    out
}

/// `n`-particle amplitude tensor over `d` single-particle modes, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensorState {
    modes: usize,
    particles: usize,
    data: Vec<C64>,
}

impl DenseTensorState {
    pub fn zeros(modes: usize, particles: usize) -> Result<Self> {
        if modes > MAX_TENSOR_MODES {
            return Err(Error::OracleCap(format!("{modes} modes exceeds tensor cap {MAX_TENSOR_MODES}")));
        }
        let len = modes.checked_pow(particles as u32).filter(|&l| l <= 1 << 24);
        let len = len.ok_or_else(|| Error::OracleCap(format!("{modes}^{particles} tensor entries")))?;
        Ok(Self { modes, particles, data: vec![C64::new(0.0, 0.0); len] })
    }

    pub fn from_fn(modes: usize, particles: usize, f: impl Fn(&[usize]) -> C64) -> Result<Self> {
        let mut t = Self::zeros(modes, particles)?;
        let mut idx = vec![0; particles];
        for flat in 0..t.data.len() {
            t.digits(flat, &mut idx);
            t.data[flat] = f(&idx);
        }
        Ok(t)
    }

    pub fn random(modes: usize, particles: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut t = Self::zeros(modes, particles)?;
        for a in t.data.iter_mut() {
            *a = gaussian(rng);
        }
        Ok(t)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    fn digits(&self, mut flat: usize, out: &mut [usize]) {
        for j in (0..self.particles).rev() {
            out[j] = flat % self.modes;
            flat /= self.modes;
        }
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.modes + i)
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.flat(idx)]
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { data: self.data.iter().map(|a| a * c).collect(), ..self.clone() }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    /// `u ⊗ v`.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.modes != other.modes {
            return Err(Error::ModeMismatch { left: self.modes, right: other.modes });
        }
        let mut t = Self::zeros(self.modes, self.particles + other.particles)?;
        let nb = other.data.len();
        for (i, a) in self.data.iter().enumerate() {
            for (j, b) in other.data.iter().enumerate() {
                t.data[i * nb + j] = a * b;
            }
        }
        Ok(t)
    }
}

/// `(1/n!) Σ_σ sgn(σ) σ` applied to the tensor indices.
pub fn antisymmetrize(t: &DenseTensorState) -> Result<DenseTensorState> {
    let n = t.particles;
    if n > MAX_PARTICLES {
        return Err(Error::OracleCap(format!("{n} particles exceeds antisymmetrizer cap {MAX_PARTICLES}")));
    }
    let perms = permutations(n);
    let inv = 1.0 / factorial(n);
    let mut out = DenseTensorState::zeros(t.modes, n)?;
    let mut idx = vec![0; n];
    let mut src = vec![0; n];
    for flat in 0..t.data.len() {
        t.digits(flat, &mut idx);
        let mut acc = C64::new(0.0, 0.0);
        for (p, s) in &perms {
            for j in 0..n {
                src[j] = idx[p[j]];
            }
            acc += t.get(&src) * *s;
        }
        out.data[flat] = acc * inv;
    }
    Ok(out)
}

/// `c(p,q)·S(u⊗v)` with `c(p,q) = √((p+q)!/(p!q!))`.
pub fn oracle_psi_product(u: &DenseTensorState, v: &DenseTensorState) -> Result<DenseTensorState> {
    let (p, q) = (u.particles, v.particles);
    if p + q > MAX_PARTICLES {
        return Err(Error::OracleCap(format!("{} particles exceeds antisymmetrizer cap {MAX_PARTICLES}", p + q)));
    }
    let c = (factorial(p + q) / (factorial(p) * factorial(q))).sqrt();
    Ok(antisymmetrize(&u.tensor(v)?)?.scale(C64::new(c, 0.0)))
}

fn descending_modes(mask: usize) -> Vec<usize> {
    let mut m: Vec<usize> = (0..usize::BITS as usize).filter(|b| mask >> b & 1 == 1).collect();
    m.reverse();
    m
}

/// Tensor of the basis state with occupied modes `mask`: `√(n!) S(e_{a1}⊗…⊗e_{an})`, `a1 > … > an`.
pub fn basis_tensor(modes: usize, mask: usize) -> Result<DenseTensorState> {
    let occ = descending_modes(mask);
    let n = occ.len();
    let mut t = DenseTensorState::zeros(modes, n)?;
    let w = factorial(n).sqrt() / factorial(n);
    let mut idx = vec![0; n];
    for (p, s) in permutations(n) {
        for j in 0..n {
            idx[j] = occ[p[j]];
        }
        let f = t.flat(&idx);
        t.data[f] += C64::new(s * w, 0.0);
    }
    Ok(t)
}

/// Particle-number-`n` part of a Fock vector as an antisymmetric tensor.
pub fn fock_to_tensor(v: &FockVector, n: usize) -> Result<DenseTensorState> {
    let d = v.modes().modes();
    let mut t = DenseTensorState::zeros(d, n)?;
    for (mask, a) in v.amplitudes().iter().enumerate() {
        if mask.count_ones() as usize == n && *a != C64::new(0.0, 0.0) {
            let b = basis_tensor(d, mask)?;
            for (x, y) in t.data.iter_mut().zip(&b.data) {
                *x += a * y;
            }
        }
    }
    Ok(t)
}

/// Inverse of [`fock_to_tensor`]: amplitudes are overlaps with the basis tensors.
pub fn tensor_to_fock(t: &DenseTensorState, modes: ModeSpace) -> Result<FockVector> {
    let mut out = FockVector::zeros(modes);
    if t.modes != modes.modes() {
        return Err(Error::ModeMismatch { left: t.modes, right: modes.modes() });
    }
    for mask in 0..modes.dim() {
        if mask.count_ones() as usize == t.particles {
            let b = basis_tensor(t.modes, mask)?;
            let amp: C64 = b.data.iter().zip(&t.data).map(|(x, y)| x.conj() * y).sum();
            out.amplitudes_mut()[mask] = amp;
        }
    }
    Ok(out)
}

/// Fock-space product summed over particle-number sectors of both factors.
pub fn oracle_fock_product(u: &FockVector, v: &FockVector) -> Result<FockVector> {
    let modes = u.modes();
    modes.ensure_same(&v.modes())?;
    let d = modes.modes();
    if d > MAX_TENSOR_MODES {
        return Err(Error::OracleCap(format!("{d} modes exceeds tensor cap {MAX_TENSOR_MODES}")));
    }
    let mut out = FockVector::zeros(modes);
    let empty = |w: &FockVector, n: usize| w.grade_part(n as u32).max_abs() == 0.0;
    for p in 0..=d {
        if empty(u, p) {
            continue;
        }
        let up = fock_to_tensor(u, p)?;
        // exterior powers above d vanish
        for q in 0..=d - p {
            if empty(v, q) {
                continue;
            }
            let vq = fock_to_tensor(v, q)?;
            let w = tensor_to_fock(&oracle_psi_product(&up, &vq)?, modes)?;
            out = &out + &w;
        }
    }
    Ok(out)
}

/// Ladder-operator matrix of the creator `Σ_i z_i a†_{a1}⋯a†_{an}` (descending modes), bitmask order.
pub fn creator_operator(z: &FockVector) -> Result<DMatrix<C64>> {
    let modes = z.modes();
    if modes.modes() > MAX_LADDER_MODES {
        return Err(Error::OracleCap(format!("{} modes exceeds ladder cap {MAX_LADDER_MODES}", modes.modes())));
    }
    let dim = modes.dim();
    // each ladder matrix has at most one nonzero per column: column -> (row, entry)
    let mut ladders = Vec::with_capacity(modes.modes());
    for k in 0..modes.modes() {
        let m = creation(modes, k)?;
        let cols: Vec<Option<(usize, C64)>> = (0..dim)
            .map(|c| (0..dim).find(|&r| m.matrix()[(r, c)] != C64::new(0.0, 0.0)).map(|r| (r, m.matrix()[(r, c)])))
            .collect();
        ladders.push(cols);
    }
    let mut out = DMatrix::zeros(dim, dim);
    for (mask, a) in z.amplitudes().iter().enumerate() {
        if *a == C64::new(0.0, 0.0) {
            continue;
        }
        // rightmost factor acts first
        let mut chain = descending_modes(mask);
        chain.reverse();
        for col in 0..dim {
            let mut state = Some((col, *a));
            for &k in &chain {
                state = state.and_then(|(c, amp)| ladders[k][c].map(|(r, e)| (r, amp * e)));
            }
            if let Some((row, amp)) = state {
                out[(row, col)] += amp;
            }
        }
    }
    Ok(out)
}

fn apply_to_vacuum(m: &DMatrix<C64>, modes: ModeSpace) -> Result<FockVector> {
    FockVector::from_amplitudes(modes, m.column(0).iter().copied().collect())
}

/// `Ẑ⁻¹|0⟩` by a dense LU solve.
pub fn dense_inverse(z: &FockVector) -> Result<FockVector> {
    let m = creator_operator(z)?;
    let scale = z.max_abs();
    let mut vac = DVector::zeros(m.nrows());
    vac[0] = C64::new(1.0, 0.0);
    let x = m.lu().solve(&vac).ok_or(Error::NonInvertible { vacuum: z.vacuum_amplitude().norm(), scale })?;
    FockVector::from_amplitudes(z.modes(), x.iter().copied().collect())
}

/// `exp(X̂)|0⟩` by dense matrix exponential.
pub fn dense_exp(x: &FockVector) -> Result<FockVector> {
    apply_to_vacuum(&creator_operator(x)?.exp(), x.modes())
}

/// `Â|b⟩` with `Â` the ladder-matrix creator of `a`.
pub fn dense_product(a: &FockVector, b: &FockVector) -> Result<FockVector> {
    a.modes().ensure_same(&b.modes())?;
    let m = creator_operator(a)?;
    FockVector::from_amplitudes(a.modes(), (m * DVector::from_column_slice(b.amplitudes())).iter().copied().collect())
}

/// `Σ_k ‖(1−ρ_k)(Δu_k + iτ Ĥ u_k)‖²/⟨u_k|u_k⟩` from the dense Hamiltonian matrix.
pub fn dense_lambda(states: &[FockVector], h: &DMatrix<C64>, delta: &[FockVector], tau: f64) -> f64 {
    let mut total = 0.0;
    for (u, du) in states.iter().zip(delta) {
        let uv = DVector::from_column_slice(u.amplitudes());
        let r = DVector::from_column_slice(du.amplitudes()) + (h * &uv) * C64::new(0.0, tau);
        let nn = uv.norm_squared();
        let proj = &r - &uv * (uv.dotc(&r) / nn);
        total += proj.norm_squared() / nn;
    }
    total
}

/// Grid scan of [`dense_lambda`] with a parabola through the best grid point and its neighbours.
pub fn scan_lambda(states: &[FockVector], h: &DMatrix<C64>, delta: &[FockVector], grid: &[f64]) -> (f64, f64) {
    let vals: Vec<f64> = grid.iter().map(|&t| dense_lambda(states, h, delta, t)).collect();
    let (best, _) =
        vals.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if best == 0 || best + 1 == grid.len() {
        return (grid[best], vals[best]);
    }
    let (x0, x1, x2) = (grid[best - 1], grid[best], grid[best + 1]);
    let (y0, y1, y2) = (vals[best - 1], vals[best], vals[best + 1]);
    let den = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
    if !(a > 0.0) {
        return (x1, y1);
    }
    let t = -b / (2.0 * a);
    (t, dense_lambda(states, h, delta, t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiLandscape {
    pub chi_solution: f64,
    pub max_sampled: f64,
    pub samples: usize,
    /// Largest eigenvalue of `|σ)(σ| y = γ η̃ y`.
    pub gamma_max: f64,
    /// `(σ|η̃⁻¹|σ)` from the Cholesky factor.
    pub sigma_form: f64,
    /// `|cos|` between the top generalized eigenvector and the solution.
    pub collinearity: f64,
}

/// Samples `χ = (σ|y)²/(y|η̃|y)` at random `y` with the solution's norm and solves the rank-one eigenproblem.
pub fn chi_landscape(
    matrix: &DMatrix<f64>,
    rhs: &DVector<f64>,
    solution: &DVector<f64>,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<ChiLandscape> {
    let n = rhs.len();
    if matrix.nrows() != n || matrix.ncols() != n || solution.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: solution.len() });
    }
    let chi = |y: &DVector<f64>| {
        let s = rhs.dot(y);
        s * s / y.dot(&(matrix * y))
    };
    let chi_solution = chi(solution);
    let norm = solution.norm();
    let mut max_sampled = f64::NEG_INFINITY;
    for _ in 0..samples {
        let mut y = DVector::from_iterator(n, (0..n).map(|_| gaussian(rng).re));
        y *= norm / y.norm();
        max_sampled = max_sampled.max(chi(&y));
    }
    let chol = Cholesky::new(matrix.clone()).ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    let l = chol.l();
    let w = l.solve_lower_triangular(rhs).ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    let a = &w * w.transpose();
    let eig = SymmetricEigen::new(a);
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let z = eig.eigenvectors.column(top.0).into_owned();
    let x = l.transpose().solve_upper_triangular(&z).ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    let collinearity = (x.dot(solution) / (x.norm() * norm)).abs();
    Ok(ChiLandscape {
        chi_solution,
        max_sampled,
        samples,
        gamma_max: top.1,
        sigma_form: w.norm_squared(),
        collinearity,
    })
}
