//! Product decompositions `Ψ = U_{π(1)} ⊙ … ⊙ U_{π(m)}`.
//!
//! Subsystems carry labels `0..m`. Label 0 is the non-quasiclassical creator
//! `V`, solved from `Ψ`; labels `1..m` are quasiclassical and stored through
//! their exponents, `U_k = exp X_k`. The permutation lists the label found at
//! each position of the product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    creator_exp, creator_inverse, grade, inner_unchecked, psi_unchecked, symmetrized_unchecked, FockVector, ModeSpace,
    C64,
};
use crate::operators::{expectation, ManyBodyOperator};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(m: usize) -> Self {
        Self((0..m).collect())
    }

    /// `order[p]` is the subsystem label at product position `p`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let m = order.len();
        let mut seen = vec![false; m];
        for &l in &order {
            if l >= m || seen[l] {
                return Err(Error::InvalidArgument(format!("{order:?} is not a permutation of 0..{m}")));
            }
            seen[l] = true;
        }
        Ok(Self(order))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn position_of(&self, label: usize) -> usize {
        self.0.iter().position(|&l| l == label).expect("label present")
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Psi,
    Inverse(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DecompositionRecord", into = "DecompositionRecord")]
pub struct Decomposition {
    modes: ModeSpace,
    permutation: Permutation,
    v: FockVector,
    exponents: Vec<FockVector>,
    creators: Vec<FockVector>,
    inverses: Vec<FockVector>,
}

/// On-disk form: the creator `V`, exponents `X_1..X_{m-1}` and the permutation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionRecord {
    pub permutation: Vec<usize>,
    pub v: FockVector,
    pub exponents: Vec<FockVector>,
}

impl TryFrom<DecompositionRecord> for Decomposition {
    type Error = Error;
    fn try_from(r: DecompositionRecord) -> Result<Self> {
        Decomposition::new(r.v, r.exponents, Permutation::new(r.permutation)?)
    }
}

impl From<Decomposition> for DecompositionRecord {
    fn from(d: Decomposition) -> Self {
        Self { permutation: d.permutation.0, v: d.v, exponents: d.exponents }
    }
}

impl Decomposition {
    pub fn new(v: FockVector, exponents: Vec<FockVector>, permutation: Permutation) -> Result<Self> {
        let m = exponents.len() + 1;
        if m < 2 {
            return Err(Error::InvalidArgument("a decomposition needs at least two subsystems".into()));
        }
        if permutation.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: permutation.len() });
        }
        let modes = v.modes();
        for x in &exponents {
            modes.ensure_same(&x.modes())?;
            if !x.is_finite() {
                return Err(Error::InvalidArgument("non-finite exponent amplitude".into()));
            }
        }
        let creators: Vec<FockVector> = exponents.iter().map(creator_exp).collect();
        let inverses = creators.iter().map(creator_inverse).collect::<Result<Vec<_>>>()?;
        Ok(Self { modes, permutation, v, exponents, creators, inverses })
    }

    /// Builds the quasiclassical part from exponents and solves `V` from `psi`.
    pub fn from_psi(psi: &FockVector, exponents: Vec<FockVector>, permutation: Permutation) -> Result<Self> {
        let mut dec = Self::new(FockVector::zeros(psi.modes()), exponents, permutation)?;
        dec.v = dec.solve_v(psi)?;
        Ok(dec)
    }

    pub fn modes(&self) -> ModeSpace {
        self.modes
    }

    /// Number of subsystems `m`.
    pub fn m(&self) -> usize {
        self.exponents.len() + 1
    }

    pub fn permutation(&self) -> &Permutation {
        &self.permutation
    }

    pub fn v(&self) -> &FockVector {
        &self.v
    }

    /// Exponent of quasiclassical label `k ≥ 1`.
    pub fn exponent(&self, k: usize) -> &FockVector {
        &self.exponents[k - 1]
    }

    pub fn exponents(&self) -> &[FockVector] {
        &self.exponents
    }

    pub fn creator(&self, k: usize) -> &FockVector {
        &self.creators[k - 1]
    }

    pub fn inverse(&self, k: usize) -> &FockVector {
        &self.inverses[k - 1]
    }

    /// Creator of subsystem `label`, with label 0 meaning `V`.
    pub fn subsystem(&self, label: usize) -> &FockVector {
        if label == 0 {
            &self.v
        } else {
            &self.creators[label - 1]
        }
    }

    /// All subsystem states in label order.
    pub fn states(&self) -> Vec<FockVector> {
        (0..self.m()).map(|l| self.subsystem(l).clone()).collect()
    }

    pub fn compose(&self) -> FockVector {
        let mut out = FockVector::vacuum(self.modes);
        for &l in self.permutation.order() {
            out = psi_unchecked(&out, self.subsystem(l));
        }
        out
    }

    /// Factors of the `V` expression in product order.
    fn slots(&self) -> Vec<Slot> {
        let order = self.permutation.order();
        let kv = self.permutation.position_of(0);
        let mut s: Vec<Slot> = order[..kv].iter().rev().map(|&l| Slot::Inverse(l)).collect();
        s.push(Slot::Psi);
        s.extend(order[kv + 1..].iter().rev().map(|&l| Slot::Inverse(l)));
        s
    }

    /// Products of inverses to the left and right of the `Ψ` slot.
    fn psi_cofactors(&self) -> (FockVector, FockVector) {
        let slots = self.slots();
        let idx = slots.iter().position(|s| *s == Slot::Psi).expect("psi slot");
        let product = |range: &[Slot]| {
            let mut out = FockVector::vacuum(self.modes);
            for s in range {
                if let Slot::Inverse(l) = s {
                    out = psi_unchecked(&out, self.inverse(*l));
                }
            }
            out
        };
        (product(&slots[..idx]), product(&slots[idx + 1..]))
    }

    /// `V_X`: the `V` expression with `Ψ` replaced by `x`.
    pub fn v_of(&self, x: &FockVector) -> FockVector {
        let (l, r) = self.psi_cofactors();
        psi_unchecked(&psi_unchecked(&l, x), &r)
    }

    pub fn solve_v(&self, psi: &FockVector) -> Result<FockVector> {
        self.modes.ensure_same(&psi.modes())?;
        Ok(self.v_of(psi))
    }

    /// Replaces `V` by the solution for `psi`, keeping exponents and order.
    pub fn with_psi(&self, psi: &FockVector) -> Result<Self> {
        let mut out = self.clone();
        out.v = self.solve_v(psi)?;
        Ok(out)
    }

    /// New exponents with `V` re-solved from `psi`.
    pub fn with_exponents(&self, exponents: Vec<FockVector>, psi: &FockVector) -> Result<Self> {
        if exponents.len() != self.exponents.len() {
            return Err(Error::DimensionMismatch { expected: self.exponents.len(), found: exponents.len() });
        }
        Self::from_psi(psi, exponents, self.permutation.clone())
    }

    /// Same subsystems in a different product order.
    pub fn with_permutation(&self, permutation: Permutation) -> Result<Self> {
        if permutation.len() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), found: permutation.len() });
        }
        let mut out = self.clone();
        out.permutation = permutation;
        Ok(out)
    }

    /// `Ṽ_k[y]` for `Ψ` given: the `V` expression with `U_k⁻¹` replaced by `y`.
    pub fn v_functional_with(&self, k: usize, y: &FockVector, psi: &FockVector) -> Result<FockVector> {
        if k == 0 || k >= self.m() {
            return Err(Error::IndexOutOfRange { index: k, limit: self.m() });
        }
        self.modes.ensure_same(&y.modes())?;
        let mut out = FockVector::vacuum(self.modes);
        for s in self.slots() {
            let f = match s {
                Slot::Psi => psi,
                Slot::Inverse(l) if l == k => y,
                Slot::Inverse(l) => self.inverse(l),
            };
            out = psi_unchecked(&out, f);
        }
        Ok(out)
    }

    /// `Ṽ_k[y]` with `Ψ = compose()`.
    pub fn v_functional(&self, k: usize, y: &FockVector) -> Result<FockVector> {
        self.v_functional_with(k, y, &self.compose())
    }

    /// Multiplies every amplitude `c_i` of every subsystem by `e^{i|i|φ}`.
    pub fn apply_phase(&self, phi: f64) -> Self {
        let rot = |u: &FockVector| {
            let mut out = u.clone();
            for (i, a) in out.amplitudes_mut().iter_mut().enumerate() {
                *a *= C64::from_polar(1.0, grade(i) as f64 * phi);
            }
            out
        };
        let exponents: Vec<FockVector> = self.exponents.iter().map(rot).collect();
        let creators = self.creators.iter().map(rot).collect();
        let inverses = self.inverses.iter().map(rot).collect();
        Self {
            modes: self.modes,
            permutation: self.permutation.clone(),
            v: rot(&self.v),
            exponents,
            creators,
            inverses,
        }
    }

    /// Subsystem norms in label order, for diagnostics.
    pub fn norms(&self) -> Vec<f64> {
        (0..self.m()).map(|l| self.subsystem(l).norm()).collect()
    }
}

pub fn compose(dec: &Decomposition) -> FockVector {
    dec.compose()
}

pub fn solve_v(psi: &FockVector, dec: &Decomposition) -> Result<FockVector> {
    dec.solve_v(psi)
}

pub fn v_functional(dec: &Decomposition, k: usize, y: &FockVector) -> Result<FockVector> {
    dec.v_functional(k, y)
}

pub fn apply_phase(dec: &Decomposition, phi: f64) -> Decomposition {
    dec.apply_phase(phi)
}

/// Weighted direct sum `⊕_k φ_k` with weights `1/⟨u_k|u_k⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectSumVector {
    pub components: Vec<FockVector>,
    pub weights: Vec<f64>,
}

impl DirectSumVector {
    pub fn new(components: Vec<FockVector>, weights: Vec<f64>) -> Result<Self> {
        if components.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: weights.len(), found: components.len() });
        }
        Ok(Self { components, weights })
    }

    /// Components paired with the weights of `dec`.
    pub fn for_decomposition(dec: &Decomposition, components: Vec<FockVector>) -> Result<Self> {
        Self::new(components, subsystem_weights(&dec.states())?)
    }

    pub fn inner(&self, other: &DirectSumVector) -> C64 {
        self.components
            .iter()
            .zip(&other.components)
            .zip(&self.weights)
            .map(|((a, b), w)| inner_unchecked(a, b) * *w)
            .sum()
    }
}

/// `1/⟨u_k|u_k⟩` per state.
pub fn subsystem_weights(states: &[FockVector]) -> Result<Vec<f64>> {
    states
        .iter()
        .map(|u| {
            let n = u.norm_sqr();
            if n > 0.0 && n.is_finite() {
                Ok(1.0 / n)
            } else {
                Err(Error::ZeroNorm)
            }
        })
        .collect()
}

/// Tangent vectors of a decomposition: `f_ki = {e_ki, U_k}` and
/// `g_ki = −Ṽ_k[{e_ki, U_k⁻¹}]`, with `e_ki` the non-vacuum Fock basis.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    modes: ModeSpace,
    m: usize,
    weights: Vec<f64>,
    f: Vec<Vec<FockVector>>,
    g: Vec<Vec<FockVector>>,
    psi_left: FockVector,
    psi_right: FockVector,
}

impl TangentFrame {
    pub fn new(dec: &Decomposition) -> Result<Self> {
        let modes = dec.modes();
        let m = dec.m();
        let weights = subsystem_weights(&dec.states())?;
        let (psi_left, psi_right) = dec.psi_cofactors();
        let psi = dec.compose();
        let slots = dec.slots();
        let n = modes.dim();

        let mut f = Vec::with_capacity(m - 1);
        let mut g = Vec::with_capacity(m - 1);
        for k in 1..m {
            let u = dec.creator(k);
            let uinv = dec.inverse(k);
            let idx = slots.iter().position(|s| *s == Slot::Inverse(k)).expect("slot present");
            let side = |range: &[Slot]| {
                let mut out = FockVector::vacuum(modes);
                for s in range {
                    let fct = match s {
                        Slot::Psi => &psi,
                        Slot::Inverse(l) => dec.inverse(*l),
                    };
                    out = psi_unchecked(&out, fct);
                }
                out
            };
            let left = side(&slots[..idx]);
            let right = side(&slots[idx + 1..]);
            let mut fk = Vec::with_capacity(n - 1);
            let mut gk = Vec::with_capacity(n - 1);
            for i in 1..n {
                let e = FockVector::basis(modes, i);
                fk.push(symmetrized_unchecked(&e, u));
                let s = symmetrized_unchecked(&e, uinv);
                gk.push(-&psi_unchecked(&psi_unchecked(&left, &s), &right));
            }
            f.push(fk);
            g.push(gk);
        }
        Ok(Self { modes, m, weights, f, g, psi_left, psi_right })
    }

    pub fn modes(&self) -> ModeSpace {
        self.modes
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Tangent basis size per quasiclassical subsystem, `2^d − 1`.
    pub fn block(&self) -> usize {
        self.modes.dim() - 1
    }

    /// Total number of exponent coefficients, `(m−1)(2^d−1)`.
    pub fn dim(&self) -> usize {
        (self.m - 1) * self.block()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `f_ki` for label `k ≥ 1` and basis index `i ≥ 1`.
    pub fn f(&self, k: usize, i: usize) -> &FockVector {
        &self.f[k - 1][i - 1]
    }

    pub fn g(&self, k: usize, i: usize) -> &FockVector {
        &self.g[k - 1][i - 1]
    }

    /// Position of `(k, i)` in a flat coefficient vector.
    pub fn index(&self, k: usize, i: usize) -> usize {
        (k - 1) * self.block() + (i - 1)
    }

    /// `V_X`.
    pub fn v_of(&self, x: &FockVector) -> FockVector {
        psi_unchecked(&psi_unchecked(&self.psi_left, x), &self.psi_right)
    }

    fn check_len(&self, dx: &[C64]) -> Result<()> {
        if dx.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: dx.len() });
        }
        Ok(())
    }

    /// `Δu_k = Σ_i Δc_ki f_ki` for every quasiclassical label, in label order.
    pub fn delta_quasi(&self, dx: &[C64]) -> Result<Vec<FockVector>> {
        self.check_len(dx)?;
        let b = self.block();
        Ok((0..self.m - 1)
            .map(|k| {
                let mut out = FockVector::zeros(self.modes);
                for (c, fv) in dx[k * b..(k + 1) * b].iter().zip(&self.f[k]) {
                    if *c != C64::new(0.0, 0.0) {
                        out.axpy(*c, fv);
                    }
                }
                out
            })
            .collect())
    }

    /// `Δv = V_{ΔΨ} + Σ Δc_ki g_ki`.
    pub fn delta_v(&self, delta_psi: Option<&FockVector>, dx: &[C64]) -> Result<FockVector> {
        self.check_len(dx)?;
        let mut out = match delta_psi {
            Some(dp) => {
                self.modes.ensure_same(&dp.modes())?;
                self.v_of(dp)
            }
            None => FockVector::zeros(self.modes),
        };
        let b = self.block();
        for (k, gk) in self.g.iter().enumerate() {
            for (c, gv) in dx[k * b..(k + 1) * b].iter().zip(gk) {
                if *c != C64::new(0.0, 0.0) {
                    out.axpy(*c, gv);
                }
            }
        }
        Ok(out)
    }

    /// Full first-order change in label order, `Δv` first.
    pub fn delta_u(&self, delta_psi: Option<&FockVector>, dx: &[C64]) -> Result<DirectSumVector> {
        let mut comps = vec![self.delta_v(delta_psi, dx)?];
        comps.extend(self.delta_quasi(dx)?);
        DirectSumVector::new(comps, self.weights.clone())
    }
}

pub fn tangent_frame(dec: &Decomposition) -> Result<TangentFrame> {
    TangentFrame::new(dec)
}

pub fn delta_v(frame: &TangentFrame, delta_psi: &FockVector, delta_x: &[C64]) -> Result<FockVector> {
    frame.delta_v(Some(delta_psi), delta_x)
}

/// Splits a flat coefficient vector into exponent changes `ΔX_k`.
pub fn coefficients_to_exponents(modes: ModeSpace, m: usize, dx: &[C64]) -> Result<Vec<FockVector>> {
    let b = modes.dim() - 1;
    if dx.len() != (m - 1) * b {
        return Err(Error::DimensionMismatch { expected: (m - 1) * b, found: dx.len() });
    }
    (0..m - 1)
        .map(|k| {
            let mut amps = vec![C64::new(0.0, 0.0)];
            amps.extend_from_slice(&dx[k * b..(k + 1) * b]);
            FockVector::from_amplitudes(modes, amps)
        })
        .collect()
}

/// Per-subsystem expectation values, indexed `[label][observable]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeableTable {
    pub values: Vec<Vec<f64>>,
}

impl BeableTable {
    pub fn get(&self, label: usize, obs: usize) -> f64 {
        self.values[label][obs]
    }

    pub fn max_abs_diff(&self, other: &BeableTable) -> f64 {
        self.values.iter().flatten().zip(other.values.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn beables(dec: &Decomposition, obs: &[ManyBodyOperator]) -> Result<BeableTable> {
    for o in obs {
        if !o.is_hermitian() {
            return Err(Error::InvalidArgument("beables need hermitian observables".into()));
        }
    }
    let values = (0..dec.m())
        .map(|l| obs.iter().map(|o| expectation(o, dec.subsystem(l)).map(|c| c.re)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(BeableTable { values })
}
