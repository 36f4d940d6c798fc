//! Dynamics between phase orbits of the global number phase `e^{iNφ}`.
//!
//! Here `H` is replaced by `K`, its component orthogonal to `N`, and the
//! squared distance loses the part of a change that only moves along an orbit.

use nalgebra::{DMatrix, DVector};

use crate::decomposition::Decomposition;
use crate::error::Result;
use crate::fock::{inner_unchecked, FockVector, C64};
use crate::geometry::{
    build_quadratic_forms, check_spread, k_operator, FormInputs, FormMode, FrameMatrices, GeometryContext, KProjection,
    QuadraticForms,
};
use crate::operators::Hamiltonian;

/// Terms that only appear when distances are taken between phase orbits.
#[derive(Clone, Debug)]
pub struct OrbitTerms {
    pub xi: DVector<C64>,
    pub theta: f64,
    pub delta_n: f64,
    pub delta_k: f64,
    pub k_components: Vec<FockVector>,
}

/// Orbit-mode quadratic forms together with the `K` projection they were built from.
#[derive(Clone, Debug)]
pub struct OrbitForms {
    pub forms: QuadraticForms,
    pub k: KProjection,
}

impl OrbitForms {
    pub fn terms(&self) -> &OrbitTerms {
        self.forms.orbit.as_ref().expect("orbit forms carry orbit terms")
    }

    pub fn delta_k(&self) -> f64 {
        self.k.delta_k
    }

    pub fn omega(&self) -> f64 {
        self.forms.omega
    }

    pub fn kappa(&self) -> f64 {
        self.forms.kappa
    }

    pub fn theta(&self) -> f64 {
        self.terms().theta
    }

    pub fn sigma(&self) -> &DVector<C64> {
        &self.forms.sigma
    }

    pub fn beta(&self) -> &DVector<C64> {
        &self.forms.beta
    }

    pub fn xi(&self) -> &DVector<C64> {
        &self.terms().xi
    }
}

pub fn build_orbit_forms(dec: &Decomposition, h: &Hamiltonian) -> Result<OrbitForms> {
    let forms = build_quadratic_forms(dec, h, FormMode::PhaseOrbit)?;
    let k = k_operator(&GeometryContext::new(dec, h)?)?;
    Ok(OrbitForms { forms, k })
}

/// `(σ, β, κ, ω, orbit terms)` with `K` and `ΔK` in place of `H` and `ΔE`.
pub(crate) fn build_orbit_terms(
    inp: &FormInputs,
    mats: &FrameMatrices,
    kp: &KProjection,
) -> Result<(DVector<C64>, DVector<C64>, f64, f64, OrbitTerms)> {
    let dk = kp.delta_k;
    check_spread(dk, inp.radius)?;
    let dn = kp.delta_n;
    let w = inp.weights[0];
    let vh = &inp.v_h_psi;
    let omega = 1.0 - w * inner_unchecked(vh, &kp.k_components[0]).re / (dk * dk);
    let sigma = mats.project(inp, &kp.k_components) / C64::new(omega * dk, 0.0);
    let beta = mats.project_v(inp, vh) / C64::new(dk, 0.0);
    let kappa = w * vh.norm_sqr() / (dk * dk);
    let theta = w * inner_unchecked(vh, &kp.n_components[0]).re / (dn * dk);
    let xi = mats.project(inp, &kp.n_components) / C64::new(dn, 0.0);
    let terms = OrbitTerms { xi, theta, delta_n: dn, delta_k: dk, k_components: kp.k_components.clone() };
    Ok((sigma, beta, kappa, omega, terms))
}

fn outer(a: &DVector<C64>, b: &DVector<C64>, conj: bool) -> DMatrix<C64> {
    if conj {
        a * b.adjoint()
    } else {
        a * b.transpose()
    }
}

/// `μ` and `ν` such that `η = Re(Δc†μΔc) + Re(Δc†ν Δc*)`.
///
/// Without orbit terms this is the time-dependent pair; with them the `ξ` and
/// `θ` corrections enter with `κ − θ²` grouped as one coefficient.
pub fn mu_nu(forms: &QuadraticForms) -> (DMatrix<C64>, DMatrix<C64>) {
    let s = &forms.sigma;
    let b = &forms.beta;
    let (theta, xi) = match &forms.orbit {
        Some(t) => (t.theta, Some(&t.xi)),
        None => (0.0, None),
    };
    let coef = C64::new(forms.kappa - theta * theta, 0.0);
    let half = C64::new(0.5, 0.0);
    let build = |conj: bool| {
        let mut m = outer(b, s, conj) + outer(s, b, conj) + outer(s, s, conj) * coef;
        if let Some(x) = xi {
            m -= outer(x, x, conj);
            m -= (outer(x, s, conj) + outer(s, x, conj)) * C64::new(theta, 0.0);
        }
        m * half
    };
    let mu = &forms.eta_hat + build(true);
    let nu = -build(false);
    (mu, nu)
}

pub fn orbit_mu_nu(forms: &OrbitForms) -> (DMatrix<C64>, DMatrix<C64>) {
    mu_nu(&forms.forms)
}
