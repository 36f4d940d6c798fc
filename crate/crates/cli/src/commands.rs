//! The four subcommands. Each writes its files under the output directory and
//! reports whether the numerics ran to completion.

use std::path::Path;

use fockdyn::decomposition::{Decomposition, Permutation};
use fockdyn::dynamics::{
    exponent_distance, integrate, reversibility_test, IntegrateConfig, ReversibilityReport, Trajectory,
};
use fockdyn::geometry::{
    hs_distance_sq, phase_orbit_distance_finite, phase_orbit_distance_finite_states, phase_orbit_distance_small_states,
    OrbitDistance,
};
use fockdyn::operators::Hamiltonian;
use fockdyn::random::{random_state, rng_from_seed};
use fockdyn::{Error, FockVector, C64};
use serde::Serialize;

use crate::config::{OrbitSource, RunConfig};
use crate::output::{float, opt_float, write_json, write_table, Table};
use crate::CliError;

/// Orders outside this band fail the convergence check.
pub const ORDER_BAND: (f64, f64) = (1.7, 2.3);
/// Endpoint distances below this are treated as exact and skip the order estimate.
pub const DISTANCE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// A step failed; partial output was written.
    Aborted,
}

#[derive(Debug, Serialize)]
struct ErrorInfo {
    tag: &'static str,
    message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        Self { tag: e.tag(), message: e.to_string() }
    }
}

fn status(abort: bool) -> &'static str {
    if abort {
        "aborted"
    } else {
        "ok"
    }
}

fn is_guard(e: &Error) -> bool {
    matches!(e, Error::StepTooLarge { .. } | Error::SingularSystem { .. })
}

struct Context {
    h: Hamiltonian,
    dec0: Decomposition,
    icfg: IntegrateConfig,
    obs_labels: Vec<String>,
}

fn context(cfg: &RunConfig) -> Result<Context, CliError> {
    let h = cfg.hamiltonian()?;
    let dec0 = cfg.decomposition()?;
    let obs = cfg.observables()?;
    let obs_labels = obs.iter().map(|o| o.label.clone()).collect();
    let mut icfg = IntegrateConfig::new(cfg.step_config(), obs.into_iter().map(|o| o.op).collect());
    icfg.integrator = cfg.integrator;
    Ok(Context { h, dec0, icfg, obs_labels })
}

#[derive(Debug, Serialize)]
struct ChiStats {
    #[serde(rename = "final")]
    last: f64,
    min: f64,
    max: f64,
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    command: &'static str,
    status: &'static str,
    error: Option<ErrorInfo>,
    guards_triggered: Vec<&'static str>,
    steps_requested: usize,
    steps_completed: usize,
    t_final: f64,
    chi: Option<ChiStats>,
    max_eta: Option<f64>,
    max_compose_residual: f64,
    config: &'a RunConfig,
}

fn trajectory_table(traj: &Trajectory, obs_labels: &[String]) -> Table {
    let m = traj.snapshots[0].dec.m();
    let mut header: Vec<String> = [
        "step",
        "t",
        "chi",
        "spread",
        "delta_e",
        "omega",
        "sigma",
        "eta",
        "c",
        "dt",
        "condition",
        "solve_residual",
        "compose_residual",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..m).map(|l| format!("norm_{l}")));
    for l in 0..m {
        header.extend(obs_labels.iter().map(|o| format!("beable_{l}_{o}")));
    }
    let mut table = Table::new(&header);
    for (n, s) in traj.snapshots.iter().enumerate() {
        let r = s.report.as_ref();
        let mut row = vec![n.to_string(), float(s.t)];
        let fields =
            r.map(|r| [r.chi, r.spread, r.delta_e, r.omega, r.sigma, r.eta, r.c, r.dt, r.condition, r.residual]);
        row.extend((0..10).map(|i| opt_float(fields.map(|f| f[i]))));
        row.push(float(s.residual));
        row.extend(s.dec.norms().into_iter().map(float));
        row.extend(s.beables.values.iter().flatten().map(|&b| float(b)));
        table.row(&row);
    }
    table
}

pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let ctx = context(cfg)?;
    let steps = fockdyn::dynamics::step_count(cfg.duration, cfg.dt)?;
    let traj = integrate(&ctx.dec0, &ctx.h, cfg.duration, cfg.dt, &ctx.icfg)?;
    write_table(&out.join(&cfg.output.trajectory), &trajectory_table(&traj, &ctx.obs_labels))?;
    write_json(&out.join(&cfg.output.final_state), &traj.last().dec)?;

    let chis: Vec<f64> = traj.reports().map(|r| r.chi).collect();
    let chi = chis.last().map(|&last| ChiStats {
        last,
        min: chis.iter().copied().fold(f64::INFINITY, f64::min),
        max: chis.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    let summary = RunSummary {
        command: "run",
        status: status(traj.abort.is_some()),
        error: traj.abort.as_ref().map(ErrorInfo::from),
        guards_triggered: traj.abort.iter().filter(|e| is_guard(e)).map(Error::tag).collect(),
        steps_requested: steps,
        steps_completed: traj.snapshots.len() - 1,
        t_final: traj.last().t,
        chi,
        max_eta: traj.reports().map(|r| r.eta).reduce(f64::max),
        max_compose_residual: traj.snapshots.iter().map(|s| s.residual).fold(0.0, f64::max),
        config: cfg,
    };
    write_json(&out.join(&cfg.output.summary), &summary)?;
    Ok(if traj.abort.is_some() { Outcome::Aborted } else { Outcome::Completed })
}

struct Level {
    dt: f64,
    traj: Trajectory,
    reversibility: Option<Result<ReversibilityReport, Error>>,
}

#[derive(Debug, Serialize)]
struct LevelSummary {
    level: usize,
    dt: f64,
    status: &'static str,
    error: Option<ErrorInfo>,
    chi_min: Option<f64>,
    chi_max: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ConvergeSummary<'a> {
    command: &'static str,
    status: &'static str,
    levels: Vec<LevelSummary>,
    /// `log2` of successive endpoint-distance ratios; `null` where skipped.
    orders: Vec<Option<f64>>,
    order_band: [f64; 2],
    order_in_range: Option<bool>,
    /// Set when endpoint distances were at the floor and no order was estimated.
    floor_skip: bool,
    return_shrink: Vec<Option<f64>>,
    config: &'a RunConfig,
}

pub fn cmd_converge(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let levels = cfg.converge.levels;
    if levels < 3 {
        return Err(CliError::Config(format!("converge needs at least 3 levels, got {levels}")));
    }
    let ctx = context(cfg)?;
    let dts: Vec<f64> = (0..levels).map(|k| cfg.dt / f64::powi(2.0, k as i32)).collect();
    for &dt in &dts {
        fockdyn::dynamics::step_count(cfg.duration, dt)?;
    }

    let runs: Vec<Result<Level, Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = dts
            .iter()
            .map(|&dt| {
                let ctx = &ctx;
                s.spawn(move || {
                    let traj = integrate(&ctx.dec0, &ctx.h, cfg.duration, dt, &ctx.icfg)?;
                    let reversibility = cfg
                        .converge
                        .reversibility
                        .then(|| reversibility_test(&ctx.dec0, &ctx.h, cfg.duration, dt, &ctx.icfg));
                    Ok(Level { dt, traj, reversibility })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("convergence worker panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<Level>, Error>>()?;

    let ends: Vec<Option<&Decomposition>> =
        runs.iter().map(|r| r.traj.completed().then(|| &r.traj.last().dec)).collect();
    let mut endpoint = Vec::new();
    let mut exponent = Vec::new();
    for k in 0..levels {
        let pair = ends[k].zip(ends.get(k + 1).copied().flatten());
        endpoint.push(pair.map(|(a, b)| hs_distance_sq(a, b).map(|d| d.max(0.0).sqrt())).transpose()?);
        exponent.push(pair.map(|(a, b)| exponent_distance(a, b)));
    }
    let returns: Vec<Option<f64>> =
        runs.iter().map(|r| r.reversibility.as_ref().and_then(|x| x.as_ref().ok()).map(|x| x.distance)).collect();
    let return_shrink: Vec<Option<f64>> = (0..levels)
        .map(|k| match (k.checked_sub(1).and_then(|j| returns[j]), returns[k]) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        })
        .collect();

    let mut floor_skip = false;
    let orders: Vec<Option<f64>> = (0..levels.saturating_sub(2))
        .map(|k| match (endpoint[k], endpoint[k + 1]) {
            (Some(_), Some(b)) if b < DISTANCE_FLOOR => {
                floor_skip = true;
                None
            }
            (Some(a), Some(b)) => Some((a / b).log2()),
            _ => None,
        })
        .collect();
    let estimated: Vec<f64> = orders.iter().flatten().copied().collect();
    let order_in_range =
        (!estimated.is_empty()).then(|| estimated.iter().all(|p| (ORDER_BAND.0..=ORDER_BAND.1).contains(p)));

    let mut table = Table::new(&[
        "level",
        "dt",
        "steps",
        "endpoint_distance",
        "exponent_distance",
        "return_error",
        "return_shrink",
        "chi_min",
        "chi_max",
    ]);
    let mut level_summaries = Vec::new();
    let mut aborted = false;
    for (k, r) in runs.iter().enumerate() {
        let chis: Vec<f64> = r.traj.reports().map(|x| x.chi).collect();
        let chi_min = chis.iter().copied().reduce(f64::min);
        let chi_max = chis.iter().copied().reduce(f64::max);
        table.row(&[
            k.to_string(),
            float(r.dt),
            (r.traj.snapshots.len() - 1).to_string(),
            opt_float(endpoint[k]),
            opt_float(exponent[k]),
            opt_float(returns[k]),
            opt_float(return_shrink[k]),
            opt_float(chi_min),
            opt_float(chi_max),
        ]);
        let err = r.traj.abort.as_ref().or(r.reversibility.as_ref().and_then(|x| x.as_ref().err()));
        aborted |= err.is_some();
        level_summaries.push(LevelSummary {
            level: k,
            dt: r.dt,
            status: status(err.is_some()),
            error: err.map(ErrorInfo::from),
            chi_min,
            chi_max,
        });
    }
    write_table(&out.join(&cfg.output.converge), &table)?;
    let summary = ConvergeSummary {
        command: "converge",
        status: status(aborted),
        levels: level_summaries,
        orders,
        order_band: [ORDER_BAND.0, ORDER_BAND.1],
        order_in_range,
        floor_skip,
        return_shrink,
        config: cfg,
    };
    write_json(&out.join(&cfg.output.converge_summary), &summary)?;
    Ok(if aborted { Outcome::Aborted } else { Outcome::Completed })
}

/// Every order of `0..m` for small `m`, otherwise the reversal and one rotation.
fn default_permutations(m: usize) -> Vec<Vec<usize>> {
    if m <= 4 {
        let mut all = Vec::new();
        let mut cur: Vec<usize> = (0..m).collect();
        heap_permutations(m, &mut cur, &mut all);
        all.sort();
        all
    } else {
        let rev = (0..m).rev().collect();
        let rot = (0..m).map(|i| (i + 1) % m).collect();
        vec![rev, rot]
    }
}

fn heap_permutations(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(cur.clone());
        return;
    }
    for i in 0..k {
        heap_permutations(k - 1, cur, out);
        let j = if k.is_multiple_of(2) { i } else { 0 };
        cur.swap(j, k - 1);
    }
}

fn perm_label(p: &[usize]) -> String {
    p.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

#[derive(Debug, Serialize)]
struct CaseSummary {
    case: &'static str,
    reference: String,
    status: &'static str,
    error: Option<ErrorInfo>,
    /// Largest divergence at `t = 0` over all orders.
    initial_max: f64,
    /// Largest divergence after the first step.
    first_step_max: Option<f64>,
    overall_max: f64,
}

#[derive(Debug, Serialize)]
struct PermtestSummary<'a> {
    command: &'static str,
    status: &'static str,
    cases: Vec<CaseSummary>,
    config: &'a RunConfig,
}

pub fn cmd_permtest(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    if cfg.m < 2 {
        return Err(CliError::Config(format!("permtest needs m >= 2, got {}", cfg.m)));
    }
    let ctx = context(cfg)?;
    let opts = &cfg.permtest;
    let perms = if opts.permutations.is_empty() { default_permutations(cfg.m) } else { opts.permutations.clone() };
    let perms = perms.into_iter().map(Permutation::new).collect::<Result<Vec<_>, _>>()?;
    for p in &perms {
        if p.len() != cfg.m {
            return Err(CliError::Config(format!(
                "permutation {} has wrong length for m = {}",
                perm_label(p.order()),
                cfg.m
            )));
        }
    }
    let t_total = opts.steps as f64 * cfg.dt.abs();

    let mut cases = vec![("generic", ctx.dec0.clone())];
    if opts.control {
        cases.push(("even", cfg.even_decomposition()?));
    }
    let mut table = Table::new(&["case", "reference", "permutation", "step", "t", "distance"]);
    let mut summaries = Vec::new();
    let mut aborted = false;
    for (name, dec) in cases {
        let reference = perm_label(dec.permutation().order());
        let base = integrate(&dec, &ctx.h, t_total, cfg.dt, &ctx.icfg)?;
        let mut abort = base.abort.clone();
        let (mut initial_max, mut first, mut overall) = (0.0f64, None::<f64>, 0.0f64);
        for p in &perms {
            if abort.is_some() {
                break;
            }
            let other = integrate(&dec.with_permutation(p.clone())?, &ctx.h, t_total, cfg.dt, &ctx.icfg)?;
            for (n, (a, b)) in base.snapshots.iter().zip(&other.snapshots).enumerate() {
                let d = a.beables.max_abs_diff(&b.beables);
                table.row(&[
                    name.to_string(),
                    reference.clone(),
                    perm_label(p.order()),
                    n.to_string(),
                    float(a.t),
                    float(d),
                ]);
                overall = overall.max(d);
                match n {
                    0 => initial_max = initial_max.max(d),
                    1 => first = Some(first.unwrap_or(0.0).max(d)),
                    _ => {}
                }
            }
            abort = other.abort;
        }
        aborted |= abort.is_some();
        summaries.push(CaseSummary {
            case: name,
            reference,
            status: status(abort.is_some()),
            error: abort.as_ref().map(ErrorInfo::from),
            initial_max,
            first_step_max: first,
            overall_max: overall,
        });
    }
    write_table(&out.join(&cfg.output.permtest), &table)?;
    let summary = PermtestSummary { command: "permtest", status: status(aborted), cases: summaries, config: cfg };
    write_json(&out.join(&cfg.output.permtest_summary), &summary)?;
    Ok(if aborted { Outcome::Aborted } else { Outcome::Completed })
}

#[derive(Debug, Serialize)]
struct OrbitSummary<'a> {
    command: &'static str,
    status: &'static str,
    error: Option<ErrorInfo>,
    source: OrbitSource,
    plain_distance_sq: f64,
    orbit_distance_sq: f64,
    /// Minimizing phase applied to the second decomposition.
    phi_star: f64,
    orbit_le_plain: bool,
    /// Leading-order orbit distance, for `perturb` pairs only.
    small_closed_form: Option<f64>,
    config: &'a RunConfig,
}

fn load_decomposition(path: &str) -> Result<Decomposition, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))
}

pub fn cmd_orbit_distance(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let opts = &cfg.orbit;
    let dec0 = || cfg.decomposition();
    let mut abort = None;
    let mut small = None;
    let orbit: OrbitDistance = match opts.source {
        OrbitSource::Phase => {
            let a = dec0()?;
            phase_orbit_distance_finite(&a, &a.apply_phase(opts.phi))?
        }
        OrbitSource::Seed => phase_orbit_distance_finite(&dec0()?, &cfg.build_decomposition(opts.other_seed, false)?)?,
        OrbitSource::Run => {
            let ctx = context(cfg)?;
            let traj = integrate(&ctx.dec0, &ctx.h, cfg.duration, cfg.dt, &ctx.icfg)?;
            abort = traj.abort.clone();
            phase_orbit_distance_finite(&ctx.dec0, &traj.last().dec)?
        }
        OrbitSource::Files => {
            let [a, b] = opts.files.as_slice() else {
                return Err(CliError::Config("orbit source \"files\" needs exactly two paths".into()));
            };
            phase_orbit_distance_finite(&load_decomposition(a)?, &load_decomposition(b)?)?
        }
        OrbitSource::Perturb => {
            let states = dec0()?.states();
            let mut rng = rng_from_seed(opts.other_seed);
            let delta: Vec<FockVector> = states
                .iter()
                .map(|u| {
                    let r = random_state(u.modes(), &mut rng);
                    r.scale(C64::new(opts.eps * u.norm() / r.norm(), 0.0))
                })
                .collect();
            let moved: Vec<FockVector> = states.iter().zip(&delta).map(|(u, d)| u + d).collect();
            small = Some(phase_orbit_distance_small_states(&states, &delta)?);
            phase_orbit_distance_finite_states(&states, &moved)?
        }
    };

    let samples = opts.samples.max(1);
    let mut table = Table::new(&["phi", "g", "lambda"]);
    for (phi, lambda) in orbit.curve(samples) {
        table.row(&[float(phi), float(orbit.g(phi)), float(lambda)]);
    }
    write_table(&out.join(&cfg.output.orbit_curve), &table)?;
    let summary = OrbitSummary {
        command: "orbit-distance",
        status: status(abort.is_some()),
        error: abort.as_ref().map(ErrorInfo::from),
        source: opts.source,
        plain_distance_sq: orbit.plain_distance_sq,
        orbit_distance_sq: orbit.distance_sq,
        phi_star: orbit.phi,
        orbit_le_plain: orbit.distance_sq <= orbit.plain_distance_sq + 1e-12,
        small_closed_form: small,
        config: cfg,
    };
    write_json(&out.join(&cfg.output.orbit), &summary)?;
    Ok(if abort.is_some() { Outcome::Aborted } else { Outcome::Completed })
}
