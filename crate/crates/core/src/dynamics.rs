//! Dynamically stable subsystem steps and fixed-step trajectories.
//!
//! A step picks the exponent change `Δx` that maximizes `χ = σ²/η` for a
//! requested time interval. The complex solve handles a fixed `Ψ`; the real
//! block solve handles a Schrödinger-evolving `Ψ` and phase orbits.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{beables, coefficients_to_exponents, BeableTable, Decomposition, Permutation, TangentFrame};
use crate::error::{Error, Result};
use crate::fock::{FockVector, C64};
use crate::geometry::{build_quadratic_forms_with_frame, hs_distance_sq, FormMode, QuadraticForms};
use crate::operators::{Hamiltonian, ManyBodyOperator};
use crate::random::gaussian;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub mode: FormMode,
    /// Largest squared step distance `η` accepted.
    pub eta_guard: f64,
    /// Largest condition estimate accepted by the linear solves.
    pub condition_limit: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { mode: FormMode::TimeDependent, eta_guard: 1e-2, condition_limit: 1e12 }
    }
}

impl StepConfig {
    pub fn with_mode(mode: FormMode) -> Self {
        Self { mode, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub chi: f64,
    /// `σ = spread · Δt`.
    pub sigma: f64,
    pub eta: f64,
    /// `C = σ/χ`.
    pub c: f64,
    pub dt: f64,
    /// `ΔE`, or `ΔK` for phase orbits.
    pub spread: f64,
    pub delta_e: f64,
    pub omega: f64,
    pub condition: f64,
    /// `‖η̃Δx − Cσ‖` of the solved system.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct StepSolution {
    pub delta_x: DVector<C64>,
    pub report: StabilityReport,
}

/// Eigen-solve of a hermitian system, returning the solution and `max|λ|/min|λ|`.
fn hermitian_solve<T>(a: &DMatrix<T>, b: &DVector<T>, limit: f64) -> Result<(DVector<T>, f64)>
where
    T: ComplexField<RealField = f64>,
{
    let eig = SymmetricEigen::new(a.clone());
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
    let max = abs.iter().copied().fold(0.0, f64::max);
    let min = abs.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= limit) {
        return Err(Error::SingularSystem { condition });
    }
    let v = &eig.eigenvectors;
    let mut coeffs = v.adjoint() * b;
    for (c, l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c = c.clone().unscale(*l);
    }
    Ok((v * coeffs, condition))
}

/// `η̃` and `|σ)` over real coordinates `(Δc', Δc'')`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealBlockSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl RealBlockSystem {
    pub fn from_forms(forms: &QuadraticForms) -> Self {
        let (mu, nu) = crate::superselection::mu_nu(forms);
        let n = mu.nrows();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                let (mr, mi) = (mu[(r, c)].re, mu[(r, c)].im);
                let (nr, ni) = (nu[(r, c)].re, nu[(r, c)].im);
                m[(r, c)] = mr + nr;
                m[(r, c + n)] = -mi + ni;
                m[(r + n, c)] = mi + ni;
                m[(r + n, c + n)] = mr - nr;
            }
        }
        // symmetric by construction; remove rounding asymmetry
        let m = (&m + m.transpose()) * 0.5;
        let mut rhs = DVector::zeros(2 * n);
        for (i, s) in forms.sigma.iter().enumerate() {
            rhs[i] = s.im;
            rhs[i + n] = -s.re;
        }
        Self { matrix: m, rhs }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn to_complex(y: &DVector<f64>) -> DVector<C64> {
        let n = y.len() / 2;
        DVector::from_iterator(n, (0..n).map(|i| C64::new(y[i], y[i + n])))
    }

    pub fn from_complex(dx: &DVector<C64>) -> DVector<f64> {
        let n = dx.len();
        DVector::from_iterator(2 * n, (0..2 * n).map(|i| if i < n { dx[i].re } else { dx[i - n].im }))
    }

    pub fn eta(&self, y: &DVector<f64>) -> f64 {
        y.dot(&(&self.matrix * y))
    }

    pub fn sigma(&self, y: &DVector<f64>) -> f64 {
        self.rhs.dot(y)
    }

    pub fn chi(&self, y: &DVector<f64>) -> f64 {
        let s = self.sigma(y);
        s * s / self.eta(y)
    }

    /// `(η̃⁻¹|σ), condition)`.
    pub fn solve(&self, limit: f64) -> Result<(DVector<f64>, f64)> {
        hermitian_solve(&self.matrix, &self.rhs, limit)
    }
}

fn finish(forms: &QuadraticForms, dt: f64, chi: f64, condition: f64, cfg: &StepConfig) -> Result<(f64, f64, f64)> {
    if !(chi > 0.0) || !chi.is_finite() {
        return Err(Error::DegenerateEnergy { spread: forms.spread, threshold: 0.0 });
    }
    let sigma = forms.spread * dt;
    let c = sigma / chi;
    let eta = c * c * chi;
    if !(eta <= cfg.eta_guard) {
        return Err(Error::StepTooLarge { eta, guard: cfg.eta_guard });
    }
    let _ = condition;
    Ok((sigma, c, eta))
}

/// Complex solve `Δx = −iC η̂⁻¹|σ⟩` of prebuilt forms.
pub fn solve_complex(forms: &QuadraticForms, dt: f64, cfg: &StepConfig) -> Result<StepSolution> {
    let (y, condition) = hermitian_solve(&forms.eta_hat, &forms.sigma, cfg.condition_limit)?;
    let chi = forms.sigma.dotc(&y).re;
    let (sigma, c, eta) = finish(forms, dt, chi, condition, cfg)?;
    let delta_x = &y * C64::new(0.0, -c);
    let residual = (&forms.eta_hat * &delta_x - &forms.sigma * C64::new(0.0, -c)).norm();
    let report = StabilityReport {
        chi,
        sigma,
        eta,
        c,
        dt,
        spread: forms.spread,
        delta_e: forms.delta_e,
        omega: forms.omega,
        condition,
        residual,
    };
    Ok(StepSolution { delta_x, report })
}

/// Real block solve `(Δx| = C η̃⁻¹|σ)` of prebuilt forms.
pub fn solve_real_block(forms: &QuadraticForms, dt: f64, cfg: &StepConfig) -> Result<StepSolution> {
    let sys = RealBlockSystem::from_forms(forms);
    let (y, condition) = sys.solve(cfg.condition_limit)?;
    let chi = sys.rhs.dot(&y);
    let (sigma, c, eta) = finish(forms, dt, chi, condition, cfg)?;
    let yc = &y * c;
    let residual = (&sys.matrix * &yc - &sys.rhs * c).norm();
    let report = StabilityReport {
        chi,
        sigma,
        eta,
        c,
        dt,
        spread: forms.spread,
        delta_e: forms.delta_e,
        omega: forms.omega,
        condition,
        residual,
    };
    Ok(StepSolution { delta_x: RealBlockSystem::to_complex(&yc), report })
}

/// Step with `Ψ` held fixed.
pub fn step_time_independent(dec: &Decomposition, h: &Hamiltonian, dt: f64, cfg: &StepConfig) -> Result<StepSolution> {
    let frame = TangentFrame::new(dec)?;
    let forms = build_quadratic_forms_with_frame(dec, &frame, h, FormMode::Plain)?;
    solve_complex(&forms, dt, cfg)
}

/// Step in the mode of `cfg` (time-dependent, phase-orbit or unconstrained) via the real block system.
///
/// In phase-orbit mode a decomposition without number fluctuations has
/// point-like orbits and `K = H`, so the time-dependent forms are used.
pub fn step_time_dependent(dec: &Decomposition, h: &Hamiltonian, dt: f64, cfg: &StepConfig) -> Result<StepSolution> {
    let frame = TangentFrame::new(dec)?;
    let forms = match build_quadratic_forms_with_frame(dec, &frame, h, cfg.mode) {
        Err(Error::DegenerateNumber { .. }) if cfg.mode == FormMode::PhaseOrbit => {
            build_quadratic_forms_with_frame(dec, &frame, h, FormMode::TimeDependent)?
        }
        other => other?,
    };
    solve_real_block(&forms, dt, cfg)
}

/// Dispatches on `cfg.mode`.
pub fn step(dec: &Decomposition, h: &Hamiltonian, dt: f64, cfg: &StepConfig) -> Result<StepSolution> {
    match cfg.mode {
        FormMode::Plain => step_time_independent(dec, h, dt, cfg),
        _ => step_time_dependent(dec, h, dt, cfg),
    }
}

/// How a trajectory advances between grid points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// One stability step per interval; first order.
    Euler,
    /// Stability step evaluated at the half-interval state; second order.
    #[default]
    Midpoint,
}

#[derive(Clone, Debug)]
pub struct IntegrateConfig {
    pub step: StepConfig,
    pub integrator: Integrator,
    pub observables: Vec<ManyBodyOperator>,
}

impl IntegrateConfig {
    pub fn new(step: StepConfig, observables: Vec<ManyBodyOperator>) -> Self {
        Self { step, integrator: Integrator::Midpoint, observables }
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub dec: Decomposition,
    pub psi: FockVector,
    pub beables: BeableTable,
    /// Report of the step that produced this snapshot; `None` at the start.
    pub report: Option<StabilityReport>,
    /// `‖compose − Ψ‖/‖Ψ‖`.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub mode: FormMode,
    pub snapshots: Vec<Snapshot>,
    /// Step error that stopped the run early.
    pub abort: Option<Error>,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }

    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    pub fn reports(&self) -> impl Iterator<Item = &StabilityReport> {
        self.snapshots.iter().filter_map(|s| s.report.as_ref())
    }
}

fn advance(dec: &Decomposition, dx: &DVector<C64>, psi: &FockVector) -> Result<Decomposition> {
    let deltas = coefficients_to_exponents(dec.modes(), dec.m(), dx.as_slice())?;
    let xs = dec.exponents().iter().zip(&deltas).map(|(x, d)| x + d).collect();
    dec.with_exponents(xs, psi)
}

fn evolve_psi(h: &Hamiltonian, psi: &FockVector, dt: f64, mode: FormMode) -> FockVector {
    match mode {
        FormMode::Plain => psi.clone(),
        _ => h.propagate(psi, dt),
    }
}

/// One grid interval of length `dt`, returning the new state and the step report.
pub fn integrate_step(
    dec: &Decomposition,
    psi: &FockVector,
    h: &Hamiltonian,
    dt: f64,
    step_cfg: &StepConfig,
    integrator: Integrator,
) -> Result<(Decomposition, FockVector, StabilityReport)> {
    let psi_new = evolve_psi(h, psi, dt, step_cfg.mode);
    let sol = match integrator {
        Integrator::Euler => step(dec, h, dt, step_cfg)?,
        Integrator::Midpoint => {
            let half = step(dec, h, 0.5 * dt, step_cfg)?;
            let psi_half = evolve_psi(h, psi, 0.5 * dt, step_cfg.mode);
            let mid = advance(dec, &half.delta_x, &psi_half)?;
            step(&mid, h, dt, step_cfg)?
        }
    };
    let next = advance(dec, &sol.delta_x, &psi_new)?;
    Ok((next, psi_new, sol.report))
}

fn snapshot(
    t: f64,
    dec: Decomposition,
    psi: FockVector,
    obs: &[ManyBodyOperator],
    report: Option<StabilityReport>,
) -> Result<Snapshot> {
    let beables = beables(&dec, obs)?;
    let residual = dec.compose().distance(&psi) / psi.norm();
    Ok(Snapshot { t, dec, psi, beables, report, residual })
}

/// Fixed-step trajectory over `[0, T]` from `dec0` with `Ψ(0) = compose(dec0)`.
///
/// A negative `dt` runs the same number of steps backwards in time. Step
/// failures stop the run and are kept in `abort` with the partial trajectory.
pub fn integrate(
    dec0: &Decomposition,
    h: &Hamiltonian,
    t_total: f64,
    dt: f64,
    cfg: &IntegrateConfig,
) -> Result<Trajectory> {
    integrate_from(dec0, &dec0.compose(), h, t_total, dt, cfg)
}

/// As [`integrate`] with an explicit starting `Ψ`.
pub fn integrate_from(
    dec0: &Decomposition,
    psi0: &FockVector,
    h: &Hamiltonian,
    t_total: f64,
    dt: f64,
    cfg: &IntegrateConfig,
) -> Result<Trajectory> {
    let steps = step_count(t_total, dt)?;
    let mut snaps = vec![snapshot(0.0, dec0.clone(), psi0.clone(), &cfg.observables, None)?];
    let mut abort = None;
    let (mut dec, mut psi) = (dec0.clone(), psi0.clone());
    for n in 1..=steps {
        match integrate_step(&dec, &psi, h, dt, &cfg.step, cfg.integrator) {
            Ok((d, p, rep)) => {
                match snapshot(n as f64 * dt, d.clone(), p.clone(), &cfg.observables, Some(rep)) {
                    Ok(s) => snaps.push(s),
                    Err(e) => {
                        abort = Some(e);
                        break;
                    }
                }
                dec = d;
                psi = p;
            }
            Err(e) => {
                abort = Some(e);
                break;
            }
        }
    }
    Ok(Trajectory { dt, mode: cfg.step.mode, snapshots: snaps, abort })
}

/// Number of `|dt|` steps covering `t_total`.
pub fn step_count(t_total: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt != 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be finite and nonzero, got {dt}")));
    }
    if !(t_total.is_finite() && t_total >= 0.0) {
        return Err(Error::InvalidArgument(format!("total time must be finite and nonnegative, got {t_total}")));
    }
    let n = (t_total / dt.abs()).round();
    if (n * dt.abs() - t_total).abs() > 1e-9 * t_total.max(dt.abs()) {
        return Err(Error::InvalidArgument(format!("total time {t_total} is not a multiple of the step {dt}")));
    }
    Ok(n as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReversibilityReport {
    pub steps: usize,
    /// Squared Hilbert–Schmidt distance between start and return.
    pub distance_sq: f64,
    /// Its square root, which scales like the integration error.
    pub distance: f64,
    /// `‖X_return − X_start‖` over all exponents.
    pub exponent_error: f64,
}

/// Forward over `T`, then back with `−dt`, compared with the start.
pub fn reversibility_test(
    dec0: &Decomposition,
    h: &Hamiltonian,
    t_total: f64,
    dt: f64,
    cfg: &IntegrateConfig,
) -> Result<ReversibilityReport> {
    let fwd = integrate(dec0, h, t_total, dt, cfg)?;
    if let Some(e) = fwd.abort {
        return Err(e);
    }
    let end = fwd.last();
    let back = integrate_from(&end.dec, &end.psi, h, t_total, -dt, cfg)?;
    if let Some(e) = back.abort {
        return Err(e);
    }
    let ret = &back.last().dec;
    let distance_sq = hs_distance_sq(dec0, ret)?.max(0.0);
    let exponent_error =
        dec0.exponents().iter().zip(ret.exponents()).map(|(a, b)| a.distance(b).powi(2)).sum::<f64>().sqrt();
    Ok(ReversibilityReport {
        steps: fwd.snapshots.len() - 1,
        distance_sq,
        distance: distance_sq.sqrt(),
        exponent_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub trials: usize,
    pub chi: f64,
    /// Largest `χ(Δx + εδx) − χ(Δx)` seen.
    pub max_increase: f64,
    /// Scale-free gradient `‖Δx‖·|∇χ|` by central differences.
    pub gradient: f64,
    /// `|χ((1+ε)Δx) − χ(Δx)|`.
    pub scale_defect: f64,
    /// `‖η̃Δx − Cσ‖`.
    pub residual: f64,
}

impl StationarityReport {
    pub fn all_decrease(&self) -> bool {
        self.max_increase <= 1e-12
    }
}

/// Probes a solved step: random perturbations never raise `χ`, and the gradient vanishes.
pub fn stationarity_audit(
    forms: &QuadraticForms,
    solution: &StepSolution,
    trials: usize,
    rng: &mut impl Rng,
) -> StationarityReport {
    let sys = RealBlockSystem::from_forms(forms);
    let y = RealBlockSystem::from_complex(&solution.delta_x);
    let chi0 = sys.chi(&y);
    let ynorm = y.norm();
    let eps = 1e-4;
    let mut max_increase = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut d = DVector::from_iterator(y.len(), (0..y.len()).map(|_| gaussian(rng).re));
        d /= d.norm();
        let trial = &y + &d * (eps * ynorm);
        max_increase = max_increase.max(sys.chi(&trial) - chi0);
    }
    // fourth-order central differences
    let h = 1e-4 * ynorm;
    let at = |i: usize, s: f64| {
        let mut p = y.clone();
        p[i] += s * h;
        sys.chi(&p)
    };
    let mut grad2 = 0.0;
    for i in 0..y.len() {
        let g = (8.0 * (at(i, 1.0) - at(i, -1.0)) - (at(i, 2.0) - at(i, -2.0))) / (12.0 * h);
        grad2 += g * g;
    }
    let scale_defect = (sys.chi(&(&y * (1.0 + eps))) - chi0).abs();
    let c = solution.report.c;
    let residual = (&sys.matrix * &y - &sys.rhs * c).norm();
    StationarityReport { trials, chi: chi0, max_increase, gradient: grad2.sqrt() * ynorm, scale_defect, residual }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    /// Beable distance at `t = 0`.
    pub initial: f64,
    /// Beable distance after each step.
    pub after: Vec<f64>,
}

/// Runs `steps` grid intervals under two product orders of the same subsystems.
pub fn permutation_divergence(
    dec: &Decomposition,
    h: &Hamiltonian,
    dt: f64,
    pi1: &Permutation,
    pi2: &Permutation,
    steps: usize,
    cfg: &IntegrateConfig,
) -> Result<PermutationReport> {
    let a = dec.with_permutation(pi1.clone())?;
    let b = dec.with_permutation(pi2.clone())?;
    let t = steps as f64 * dt.abs();
    let ta = integrate(&a, h, t, dt, cfg)?;
    let tb = integrate(&b, h, t, dt, cfg)?;
    for tr in [&ta, &tb] {
        if let Some(e) = &tr.abort {
            return Err(e.clone());
        }
    }
    let dist: Vec<f64> =
        ta.snapshots.iter().zip(&tb.snapshots).map(|(x, y)| x.beables.max_abs_diff(&y.beables)).collect();
    Ok(PermutationReport { initial: dist[0], after: dist[1..].to_vec() })
}

/// Odd-particle-number mass of each quasiclassical creator, in label order.
pub fn odd_leakage(dec: &Decomposition) -> Vec<f64> {
    (1..dec.m()).map(|k| dec.creator(k).odd_mass()).collect()
}

/// Initial decompositions are expected to have subsystems of definite parity for univalence checks.
pub fn exponent_vector(dec: &Decomposition) -> Vec<C64> {
    dec.exponents().iter().flat_map(|x| x.amplitudes().iter().copied()).collect::<Vec<C64>>()
}

/// Exponent-space distance between two decompositions of the same shape.
pub fn exponent_distance(a: &Decomposition, b: &Decomposition) -> f64 {
    let x = exponent_vector(a);
    let y = exponent_vector(b);
    x.iter().zip(&y).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt()
}
