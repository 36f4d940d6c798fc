//! Distances between decompositions, the time functional, and the quadratic
//! forms of the stability functional.

use nalgebra::{DMatrix, DVector};

use crate::decomposition::{subsystem_weights, Decomposition, DirectSumVector, TangentFrame};
use crate::error::{Error, Result};
use crate::fock::{grade, inner_unchecked, FockVector, C64};
use crate::operators::Hamiltonian;
use crate::superselection::{build_orbit_terms, OrbitTerms};

/// Relative threshold for a vanishing energy (or `K`) spread.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// `(1 − ρ_u) x`.
pub fn project_out(u: &FockVector, x: &FockVector) -> FockVector {
    let c = inner_unchecked(u, x) / u.norm_sqr();
    let mut out = x.clone();
    out.axpy(-c, u);
    out
}

fn check_pair(a: &[FockVector], b: &[FockVector]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    for (x, y) in a.iter().zip(b) {
        x.modes().ensure_same(&y.modes())?;
    }
    Ok(())
}

/// `Σ_k [1 − |⟨u_k|u'_k⟩|²/(⟨u_k|u_k⟩⟨u'_k|u'_k⟩)]` over state lists.
///
/// Each term is evaluated as `‖(1−ρ_k)u'_k‖²/⟨u'_k|u'_k⟩`, which avoids the
/// cancellation of the difference form for nearby states.
pub fn hs_distance_sq_states(a: &[FockVector], b: &[FockVector]) -> Result<f64> {
    check_pair(a, b)?;
    subsystem_weights(a)?;
    let wb = subsystem_weights(b)?;
    Ok(a.iter().zip(b).zip(&wb).map(|((x, y), q)| project_out(x, y).norm_sqr() * q).sum())
}

/// Squared Hilbert–Schmidt distance between two decompositions, compared label by label.
pub fn hs_distance_sq(a: &Decomposition, b: &Decomposition) -> Result<f64> {
    hs_distance_sq_states(&a.states(), &b.states())
}

/// `Σ_k ⟨Δu_k|(1−ρ_k)|Δu_k⟩/⟨u_k|u_k⟩`.
pub fn fs_eta_states(states: &[FockVector], delta: &[FockVector]) -> Result<f64> {
    check_pair(states, delta)?;
    let w = subsystem_weights(states)?;
    Ok(states.iter().zip(delta).zip(&w).map(|((u, du), wk)| project_out(u, du).norm_sqr() * wk).sum())
}

pub fn fs_eta(dec: &Decomposition, delta_u: &DirectSumVector) -> Result<f64> {
    fs_eta_states(&dec.states(), &delta_u.components)
}

/// Energy data of a list of subsystem states.
#[derive(Clone, Debug)]
pub struct GeometryContext {
    states: Vec<FockVector>,
    weights: Vec<f64>,
    h_components: Vec<FockVector>,
    delta_e: f64,
    spectral_radius: f64,
}

impl GeometryContext {
    pub fn from_states(states: Vec<FockVector>, h: &Hamiltonian) -> Result<Self> {
        let weights = subsystem_weights(&states)?;
        let h_components: Vec<FockVector> = states.iter().map(|u| project_out(u, &h.apply(u))).collect();
        let delta_e = weighted_norm(&h_components, &weights);
        Ok(Self { states, weights, h_components, delta_e, spectral_radius: h.spectrum().spectral_radius() })
    }

    pub fn new(dec: &Decomposition, h: &Hamiltonian) -> Result<Self> {
        Self::from_states(dec.states(), h)
    }

    pub fn states(&self) -> &[FockVector] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(1−ρ_k)H|u_k⟩` per subsystem.
    pub fn h_components(&self) -> &[FockVector] {
        &self.h_components
    }

    /// Combined energy spread `ΔE = √⟨H|H⟩`.
    pub fn delta_e(&self) -> f64 {
        self.delta_e
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn h_vector(&self) -> DirectSumVector {
        DirectSumVector { components: self.h_components.clone(), weights: self.weights.clone() }
    }

    /// Weighted `⟨a|b⟩` over component lists.
    pub fn inner(&self, a: &[FockVector], b: &[FockVector]) -> C64 {
        weighted_inner(a, b, &self.weights)
    }

    pub fn ensure_nondegenerate(&self) -> Result<()> {
        check_spread(self.delta_e, self.spectral_radius)
    }
}

pub(crate) fn weighted_inner(a: &[FockVector], b: &[FockVector], w: &[f64]) -> C64 {
    a.iter().zip(b).zip(w).map(|((x, y), wk)| inner_unchecked(x, y) * *wk).sum()
}

pub(crate) fn weighted_norm(a: &[FockVector], w: &[f64]) -> f64 {
    a.iter().zip(w).map(|(x, wk)| x.norm_sqr() * wk).sum::<f64>().sqrt()
}

pub(crate) fn check_spread(spread: f64, radius: f64) -> Result<()> {
    let threshold = DEGENERACY_TOL * radius;
    if !(spread > threshold) {
        return Err(Error::DegenerateEnergy { spread, threshold });
    }
    Ok(())
}

fn check_delta(ctx: &GeometryContext, delta_u: &DirectSumVector) -> Result<()> {
    check_pair(&ctx.states, &delta_u.components)
}

/// `Δt = Im⟨Δu|H⟩/⟨H|H⟩`.
pub fn time_functional(ctx: &GeometryContext, delta_u: &DirectSumVector) -> Result<f64> {
    check_delta(ctx, delta_u)?;
    ctx.ensure_nondegenerate()?;
    let num = ctx.inner(&delta_u.components, &ctx.h_components).im;
    Ok(num / (ctx.delta_e * ctx.delta_e))
}

/// `λ(Δτ) = η − 2Δτ Im⟨Δu|H⟩ + Δτ²⟨H|H⟩`.
pub fn lambda_curve(ctx: &GeometryContext, delta_u: &DirectSumVector, tau: f64) -> Result<f64> {
    check_delta(ctx, delta_u)?;
    let eta = fs_eta_states(&ctx.states, &delta_u.components)?;
    let im = ctx.inner(&delta_u.components, &ctx.h_components).im;
    Ok(eta - 2.0 * tau * im + tau * tau * ctx.delta_e * ctx.delta_e)
}

/// `(1−ρ_k)N̂|u_k⟩` per subsystem.
pub fn number_components(states: &[FockVector]) -> Vec<FockVector> {
    states
        .iter()
        .map(|u| {
            let mut nu = u.clone();
            for (i, a) in nu.amplitudes_mut().iter_mut().enumerate() {
                *a *= grade(i) as f64;
            }
            project_out(u, &nu)
        })
        .collect()
}

fn number_spread(states: &[FockVector], w: &[f64]) -> Result<(Vec<FockVector>, f64)> {
    let n = number_components(states);
    let dn = weighted_norm(&n, w);
    let scale = states.first().map(|u| u.modes().modes()).unwrap_or(1) as f64;
    if !(dn > DEGENERACY_TOL * scale) {
        return Err(Error::DegenerateNumber { spread: dn });
    }
    Ok((n, dn))
}

/// `η₀ − (Im⟨Δu|N⟩)²/⟨N|N⟩`, the squared distance between neighbouring phase orbits.
pub fn phase_orbit_distance_small(dec: &Decomposition, delta_u: &DirectSumVector) -> Result<f64> {
    phase_orbit_distance_small_states(&dec.states(), &delta_u.components)
}

pub fn phase_orbit_distance_small_states(states: &[FockVector], delta: &[FockVector]) -> Result<f64> {
    check_pair(states, delta)?;
    let w = subsystem_weights(states)?;
    let (n, dn) = number_spread(states, &w)?;
    let eta0 = fs_eta_states(states, delta)?;
    let xi = weighted_inner(delta, &n, &w).im / dn;
    Ok(eta0 - xi * xi)
}

/// Result of minimizing the Hilbert–Schmidt distance over a global number phase.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitDistance {
    /// Minimum over `φ` of the squared distance.
    pub distance_sq: f64,
    /// Minimizing phase in `[0, 2π)`, applied to the second argument.
    pub phi: f64,
    /// Squared distance at `φ = 0`.
    pub plain_distance_sq: f64,
    /// `m`.
    pub m: usize,
    /// `G_l` for `l = 0..=d`.
    pub g_coeffs: Vec<C64>,
}

impl OrbitDistance {
    /// `g(φ) = −Σ_{l>0} Re G_l cos lφ + Σ_{l>0} Im G_l sin lφ`.
    pub fn g(&self, phi: f64) -> f64 {
        self.g_derivs(phi).0
    }

    /// `(g, g', g'')` at `φ`.
    pub fn g_derivs(&self, phi: f64) -> (f64, f64, f64) {
        let (mut g, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for (l, gl) in self.g_coeffs.iter().enumerate().skip(1) {
            let lf = l as f64;
            let (s, c) = (lf * phi).sin_cos();
            g += -gl.re * c + gl.im * s;
            g1 += lf * (gl.re * s + gl.im * c);
            g2 += lf * lf * (gl.re * c - gl.im * s);
        }
        (g, g1, g2)
    }

    /// `λ(φ) = m − G₀ + 2g(φ)`.
    pub fn lambda(&self, phi: f64) -> f64 {
        self.m as f64 - self.g_coeffs[0].re + 2.0 * self.g(phi)
    }

    /// `(φ, λ(φ))` on a uniform grid over `[0, 2π)`.
    pub fn curve(&self, samples: usize) -> Vec<(f64, f64)> {
        (0..samples)
            .map(|s| {
                let phi = std::f64::consts::TAU * s as f64 / samples as f64;
                (phi, self.lambda(phi))
            })
            .collect()
    }
}

const ORBIT_GRID: usize = 256;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX: usize = 50;

/// Matrix `M_nn' = Σ_k ⟨u_k|Π_n|u'_k⟩⟨u'_k|Π_n'|u_k⟩/(⟨u_k|u_k⟩⟨u'_k|u'_k⟩)`.
pub fn orbit_overlap_matrix(a: &[FockVector], b: &[FockVector]) -> Result<DMatrix<C64>> {
    check_pair(a, b)?;
    let d = a.first().ok_or(Error::InvalidArgument("empty decomposition".into()))?.modes().modes();
    let wa = subsystem_weights(a)?;
    let wb = subsystem_weights(b)?;
    let mut m = DMatrix::zeros(d + 1, d + 1);
    for ((u, up), (p, q)) in a.iter().zip(b).zip(wa.iter().zip(&wb)) {
        let mut proj = vec![C64::new(0.0, 0.0); d + 1];
        for (i, (x, y)) in u.amplitudes().iter().zip(up.amplitudes()).enumerate() {
            proj[grade(i) as usize] += x.conj() * y;
        }
        for n in 0..=d {
            for np in 0..=d {
                m[(n, np)] += proj[n] * proj[np].conj() * (p * q);
            }
        }
    }
    Ok(m)
}

/// Orbit distance between two state lists, by grid search plus Newton polish.
pub fn phase_orbit_distance_finite_states(a: &[FockVector], b: &[FockVector]) -> Result<OrbitDistance> {
    let m = orbit_overlap_matrix(a, b)?;
    let d = m.nrows() - 1;
    let g_coeffs: Vec<C64> = (0..=d).map(|l| (0..=d - l).map(|n| m[(n + l, n)]).sum()).collect();
    let mut out = OrbitDistance { distance_sq: 0.0, phi: 0.0, plain_distance_sq: 0.0, m: a.len(), g_coeffs };
    out.plain_distance_sq = out.lambda(0.0);

    let tau = std::f64::consts::TAU;
    let step = tau / ORBIT_GRID as f64;
    let (best_idx, _) = (0..ORBIT_GRID).map(|s| (s, out.g(s as f64 * step))).fold((0, f64::INFINITY), |acc, (s, g)| {
        if g < acc.1 {
            (s, g)
        } else {
            acc
        }
    });
    let grid_phi = best_idx as f64 * step;

    let mut phi = grid_phi;
    let mut converged = false;
    for _ in 0..NEWTON_MAX {
        let (_, g1, g2) = out.g_derivs(phi);
        if g1.abs() < NEWTON_TOL {
            converged = true;
            break;
        }
        if g2 <= 0.0 {
            break;
        }
        phi -= g1 / g2;
    }
    if !converged {
        let (_, g1, g2) = out.g_derivs(phi);
        converged = g1.abs() < NEWTON_TOL && g2 >= 0.0;
    }
    // a flat g (e.g. identical number distributions) never needs polishing
    if !converged || out.g(phi) > out.g(grid_phi) {
        phi = grid_phi;
    }
    out.phi = phi.rem_euclid(tau);
    out.distance_sq = out.lambda(out.phi);
    Ok(out)
}

pub fn phase_orbit_distance_finite(a: &Decomposition, b: &Decomposition) -> Result<OrbitDistance> {
    phase_orbit_distance_finite_states(&a.states(), &b.states())
}

/// Components of `K = H − (⟨H|N⟩/⟨N|N⟩)N` on a decomposition.
#[derive(Clone, Debug)]
pub struct KProjection {
    pub k_components: Vec<FockVector>,
    pub n_components: Vec<FockVector>,
    pub delta_k: f64,
    pub delta_n: f64,
    /// `⟨H|N⟩/⟨N|N⟩`.
    pub ratio: C64,
    /// `⟨N|H⟩`; real when `[H, N] = 0`.
    pub n_dot_h: C64,
}

pub fn k_operator(ctx: &GeometryContext) -> Result<KProjection> {
    let w = &ctx.weights;
    let (n_components, delta_n) = number_spread(&ctx.states, w)?;
    let hn = weighted_inner(&ctx.h_components, &n_components, w);
    let ratio = hn / (delta_n * delta_n);
    let k_components: Vec<FockVector> = ctx
        .h_components
        .iter()
        .zip(&n_components)
        .map(|(hk, nk)| {
            let mut out = hk.clone();
            out.axpy(-ratio, nk);
            out
        })
        .collect();
    let delta_k = weighted_norm(&k_components, w);
    Ok(KProjection { k_components, n_components, delta_k, delta_n, ratio, n_dot_h: hn.conj() })
}

/// Which variational problem the quadratic forms describe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormMode {
    /// `Ψ` held fixed during the step.
    Plain,
    /// `Ψ` follows the Schrödinger equation.
    TimeDependent,
    /// Time-dependent `Ψ` with distances measured between phase orbits.
    PhaseOrbit,
    /// No constraint: every term derived from `V` is dropped.
    Unconstrained,
}

/// Coefficient-space data of one stability step.
#[derive(Clone, Debug)]
pub struct QuadraticForms {
    pub mode: FormMode,
    /// `η̂`, hermitian and positive definite.
    pub eta_hat: DMatrix<C64>,
    pub sigma: DVector<C64>,
    pub beta: DVector<C64>,
    pub kappa: f64,
    pub omega: f64,
    /// `ΔE`, or `ΔK` in phase-orbit mode: the spread that converts `σ` into `Δt`.
    pub spread: f64,
    /// Full `ΔE` over every subsystem.
    pub delta_e: f64,
    pub orbit: Option<OrbitTerms>,
}

impl QuadraticForms {
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// `σ = Im⟨Δx|σ⟩`.
    pub fn sigma_of(&self, dx: &DVector<C64>) -> f64 {
        dx.dotc(&self.sigma).im
    }

    /// `η` of a coefficient vector, `Re(Δc†μΔc) + Re(Δcᵀ… ν …)`.
    pub fn eta_of(&self, dx: &DVector<C64>) -> f64 {
        let (mu, nu) = crate::superselection::mu_nu(self);
        let conj = dx.map(|c| c.conj());
        let mu_part = dx.dotc(&(&mu * dx)).re;
        let nu_part = conj.transpose() * (&nu * &conj);
        mu_part + nu_part[(0, 0)].re
    }

    /// `χ = σ²/η`.
    pub fn chi_of(&self, dx: &DVector<C64>) -> f64 {
        let s = self.sigma_of(dx);
        s * s / self.eta_of(dx)
    }
}

/// Everything the forms need about the current `Ψ`, shared by all modes.
pub(crate) struct FormInputs<'a> {
    pub frame: &'a TangentFrame,
    pub states: Vec<FockVector>,
    pub weights: Vec<f64>,
    pub h_components: Vec<FockVector>,
    /// `(1−ρ_v) V_{H·Ψ}`.
    pub v_h_psi: FockVector,
    pub radius: f64,
}

/// Stacked `(1−ρ_k) f_ki` for one label, as columns.
fn projected_f(frame: &TangentFrame, u: &FockVector, k: usize) -> DMatrix<C64> {
    let n = frame.modes().dim();
    let b = frame.block();
    let mut out = DMatrix::zeros(n, b);
    for i in 1..=b {
        let p = project_out(u, frame.f(k, i));
        out.column_mut(i - 1).copy_from_slice(p.amplitudes());
    }
    out
}

fn projected_g(frame: &TangentFrame, v: &FockVector) -> DMatrix<C64> {
    let n = frame.modes().dim();
    let b = frame.block();
    let mut out = DMatrix::zeros(n, frame.dim());
    for k in 1..frame.m() {
        for i in 1..=b {
            let p = project_out(v, frame.g(k, i));
            out.column_mut(frame.index(k, i)).copy_from_slice(p.amplitudes());
        }
    }
    out
}

fn as_dvec(u: &FockVector) -> DVector<C64> {
    DVector::from_column_slice(u.amplitudes())
}

/// Projected tangent columns and `η̂`, shared by every mode.
pub(crate) struct FrameMatrices {
    pub pf: Vec<DMatrix<C64>>,
    pub pg: Option<DMatrix<C64>>,
    pub eta_hat: DMatrix<C64>,
}

impl FrameMatrices {
    pub fn new(inp: &FormInputs, constrained: bool) -> Self {
        let frame = inp.frame;
        let b = frame.block();
        let nx = frame.dim();
        let mut eta_hat = DMatrix::zeros(nx, nx);
        let mut pf = Vec::with_capacity(frame.m() - 1);
        for k in 1..frame.m() {
            let p = projected_f(frame, &inp.states[k], k);
            let blk = p.adjoint() * &p * C64::new(inp.weights[k], 0.0);
            eta_hat.view_mut(((k - 1) * b, (k - 1) * b), (b, b)).copy_from(&blk);
            pf.push(p);
        }
        let pg = constrained.then(|| {
            let pg = projected_g(frame, &inp.states[0]);
            eta_hat += pg.adjoint() * &pg * C64::new(inp.weights[0], 0.0);
            pg
        });
        // exact hermitian symmetry for downstream eigen-solves
        let sym = (&eta_hat + eta_hat.adjoint()) * C64::new(0.5, 0.0);
        Self { pf, pg, eta_hat: sym }
    }

    /// `[w_k⟨f_ki|x_k⟩ + w_v⟨g_ki|x_v⟩]` for a direct-sum vector `x` (label order).
    pub fn project(&self, inp: &FormInputs, x: &[FockVector]) -> DVector<C64> {
        let b = inp.frame.block();
        let mut out = DVector::zeros(inp.frame.dim());
        for k in 1..inp.frame.m() {
            let blk = self.pf[k - 1].adjoint() * as_dvec(&x[k]) * C64::new(inp.weights[k], 0.0);
            out.rows_mut((k - 1) * b, b).copy_from(&blk);
        }
        if let Some(pg) = &self.pg {
            out += pg.adjoint() * as_dvec(&x[0]) * C64::new(inp.weights[0], 0.0);
        }
        out
    }

    /// `w_v⟨g_ki|(1−ρ_v)|y⟩` for a single `V`-slot vector.
    pub fn project_v(&self, inp: &FormInputs, y: &FockVector) -> DVector<C64> {
        match &self.pg {
            Some(pg) => pg.adjoint() * as_dvec(y) * C64::new(inp.weights[0], 0.0),
            None => DVector::zeros(inp.frame.dim()),
        }
    }
}

pub fn build_quadratic_forms(dec: &Decomposition, h: &Hamiltonian, mode: FormMode) -> Result<QuadraticForms> {
    let frame = TangentFrame::new(dec)?;
    build_quadratic_forms_with_frame(dec, &frame, h, mode)
}

pub fn build_quadratic_forms_with_frame(
    dec: &Decomposition,
    frame: &TangentFrame,
    h: &Hamiltonian,
    mode: FormMode,
) -> Result<QuadraticForms> {
    let ctx = GeometryContext::new(dec, h)?;
    let psi = dec.compose();
    let v_h_psi = project_out(dec.v(), &frame.v_of(&h.apply(&psi)));
    let inp = FormInputs {
        frame,
        states: ctx.states.clone(),
        weights: ctx.weights.clone(),
        h_components: ctx.h_components.clone(),
        v_h_psi,
        radius: ctx.spectral_radius,
    };
    let constrained = mode != FormMode::Unconstrained;
    let mats = FrameMatrices::new(&inp, constrained);
    let nx = frame.dim();
    let zero = DVector::zeros(nx);

    match mode {
        FormMode::Plain | FormMode::TimeDependent | FormMode::Unconstrained => {
            let spread =
                if constrained { ctx.delta_e } else { weighted_norm(&inp.h_components[1..], &inp.weights[1..]) };
            check_spread(spread, inp.radius)?;
            let sigma0 = mats.project(&inp, &inp.h_components) / C64::new(spread, 0.0);
            let (omega, beta, kappa) = if mode == FormMode::TimeDependent {
                let w = inp.weights[0];
                let omega = 1.0 - w * inner_unchecked(&inp.v_h_psi, &inp.h_components[0]).re / (spread * spread);
                let beta = mats.project_v(&inp, &inp.v_h_psi) / C64::new(spread, 0.0);
                let kappa = w * inp.v_h_psi.norm_sqr() / (spread * spread);
                (omega, beta, kappa)
            } else {
                (1.0, zero, 0.0)
            };
            Ok(QuadraticForms {
                mode,
                eta_hat: mats.eta_hat.clone(),
                sigma: sigma0 / C64::new(omega, 0.0),
                beta,
                kappa,
                omega,
                spread,
                delta_e: ctx.delta_e,
                orbit: None,
            })
        }
        FormMode::PhaseOrbit => {
            let kp = k_operator(&ctx)?;
            let (sigma, beta, kappa, omega, terms) = build_orbit_terms(&inp, &mats, &kp)?;
            Ok(QuadraticForms {
                mode,
                eta_hat: mats.eta_hat.clone(),
                sigma,
                beta,
                kappa,
                omega,
                spread: kp.delta_k,
                delta_e: ctx.delta_e,
                orbit: Some(terms),
            })
        }
    }
}
