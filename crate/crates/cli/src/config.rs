//! Run configuration: TOML on disk, echoed as JSON in every summary.

use std::path::Path;

use fockdyn::decomposition::{Decomposition, Permutation};
use fockdyn::dynamics::{Integrator, StepConfig};
use fockdyn::geometry::FormMode;
use fockdyn::operators::{number_op, total_number, univalence, Hamiltonian, HubbardParams, ManyBodyOperator};
use fockdyn::random::{random_even, random_exponent, random_state, rng_from_seed};
use fockdyn::{FockVector, ModeSpace, C64};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Dense problems above this many modes are refused up front.
pub const MAX_CLI_MODES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: HubbardParams,
    /// Subsystem count, `V` included.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub init: InitSpec,
    /// Product order of subsystem labels; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
    #[serde(default = "default_mode")]
    pub mode: FormMode,
    #[serde(default)]
    pub integrator: Integrator,
    pub dt: f64,
    /// Total simulated time.
    pub duration: f64,
    #[serde(default = "default_guard")]
    pub eta_guard: f64,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(default)]
    pub converge: ConvergeSpec,
    #[serde(default)]
    pub permtest: PermtestSpec,
    #[serde(default)]
    pub orbit: OrbitSpec,
}

fn default_m() -> usize {
    3
}

fn default_mode() -> FormMode {
    FormMode::TimeDependent
}

fn default_guard() -> f64 {
    1e-2
}

fn default_observables() -> Vec<String> {
    vec!["occupations".into()]
}

fn default_scale() -> f64 {
    0.3
}

/// Complex amplitude written as `[re, im]`.
pub type Amp = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    /// Normalized random `V` and exponents with fluctuations of size `scale`.
    Random {
        #[serde(default = "default_scale")]
        scale: f64,
        /// Keep every amplitude in even particle-number sectors.
        #[serde(default)]
        even: bool,
    },
    /// Amplitude tables indexed by occupation bitmask. At most one of `v` and
    /// `psi` may be given; with `psi`, `V` is solved so that the product is `psi`.
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v: Option<Vec<Amp>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        psi: Option<Vec<Amp>>,
        exponents: Vec<Vec<Amp>>,
    },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Random { scale: default_scale(), even: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub trajectory: String,
    pub summary: String,
    pub final_state: String,
    pub converge: String,
    pub converge_summary: String,
    pub permtest: String,
    pub permtest_summary: String,
    pub orbit: String,
    pub orbit_curve: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            trajectory: "trajectory.csv".into(),
            summary: "summary.json".into(),
            final_state: "final_state.json".into(),
            converge: "converge.csv".into(),
            converge_summary: "converge.json".into(),
            permtest: "permtest.csv".into(),
            permtest_summary: "permtest.json".into(),
            orbit: "orbit.json".into(),
            orbit_curve: "orbit_curve.csv".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSpec {
    /// Number of step sizes `dt, dt/2, dt/4, …`.
    pub levels: usize,
    /// Also run forward then back at each level.
    pub reversibility: bool,
}

impl Default for ConvergeSpec {
    fn default() -> Self {
        Self { levels: 3, reversibility: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermtestSpec {
    /// Orders compared against the reference order; every order of `0..m`
    /// when empty and `m ≤ 4`, otherwise the reversal and a rotation.
    pub permutations: Vec<Vec<usize>>,
    pub steps: usize,
    /// Add the all-even control case.
    pub control: bool,
}

impl Default for PermtestSpec {
    fn default() -> Self {
        Self { permutations: Vec::new(), steps: 3, control: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitSource {
    /// The initial decomposition against itself with a global phase `phi`.
    Phase,
    /// The initial decomposition against the end of a run.
    Run,
    /// The initial decomposition against one built from `other_seed`.
    Seed,
    /// The initial subsystem states against a random move of size `eps`.
    Perturb,
    /// Two decomposition files written by `run`.
    Files,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSpec {
    pub source: OrbitSource,
    pub phi: f64,
    pub eps: f64,
    pub other_seed: u64,
    /// Points on the `λ(φ)` curve.
    pub samples: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self { source: OrbitSource::Phase, phi: 0.7, eps: 1e-3, other_seed: 1, samples: 256, files: Vec::new() }
    }
}

/// Named observable evaluated per subsystem.
pub struct Observable {
    pub label: String,
    pub op: ManyBodyOperator,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let modes = self.model.mode_count();
        if modes == 0 || modes > MAX_CLI_MODES {
            return bad(format!("model has {modes} modes; supported range is 1..={MAX_CLI_MODES}"));
        }
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        if !(self.dt.is_finite() && self.dt != 0.0) {
            return bad(format!("dt must be finite and nonzero, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad(format!("duration must be finite and nonnegative, got {}", self.duration));
        }
        if !(self.eta_guard.is_finite() && self.eta_guard > 0.0) {
            return bad(format!("eta_guard must be positive, got {}", self.eta_guard));
        }
        if let Some(p) = &self.permutation {
            if p.len() != self.m {
                return bad(format!("permutation has {} entries for m = {}", p.len(), self.m));
            }
        }
        match &self.init {
            InitSpec::Random { scale, .. } if !(scale.is_finite() && *scale >= 0.0) => {
                return bad(format!("init scale must be finite and nonnegative, got {scale}"));
            }
            InitSpec::Explicit { v, psi, exponents } => {
                if v.is_some() && psi.is_some() {
                    return bad("explicit init takes v or psi, not both".into());
                }
                if exponents.len() + 1 != self.m {
                    return bad(format!("explicit init has {} exponents for m = {}", exponents.len(), self.m));
                }
            }
            _ => {}
        }
        for name in &self.observables {
            parse_observable(name, &self.model)?;
        }
        Ok(())
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig { eta_guard: self.eta_guard, ..StepConfig::with_mode(self.mode) }
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian, CliError> {
        Ok(Hamiltonian::hubbard(&self.model)?)
    }

    pub fn permutation(&self) -> Result<Permutation, CliError> {
        Ok(match &self.permutation {
            Some(p) => Permutation::new(p.clone())?,
            None => Permutation::identity(self.m),
        })
    }

    /// Initial decomposition; `Ψ(0)` is its product.
    pub fn decomposition(&self) -> Result<Decomposition, CliError> {
        self.build_decomposition(self.seed, false)
    }

    /// Same construction with every amplitude restricted to even sectors.
    pub fn even_decomposition(&self) -> Result<Decomposition, CliError> {
        self.build_decomposition(self.seed, true)
    }

    pub fn build_decomposition(&self, seed: u64, force_even: bool) -> Result<Decomposition, CliError> {
        let modes = self.model.mode_space()?;
        let perm = self.permutation()?;
        let dec = match &self.init {
            InitSpec::Random { scale, even } => {
                let even = *even || force_even;
                let mut rng = rng_from_seed(seed);
                let v = if even { random_even(modes, &mut rng, 1.0) } else { random_state(modes, &mut rng) };
                let xs = (1..self.m).map(|_| random_exponent(modes, &mut rng, *scale, even)).collect();
                Decomposition::new(v.normalize()?, xs, perm)?
            }
            InitSpec::Explicit { v, psi, exponents } => {
                let fix = |f: FockVector| if force_even { even_part(&f) } else { f };
                let xs = exponents.iter().map(|x| amps_to_vector(modes, x).map(fix)).collect::<Result<Vec<_>, _>>()?;
                match (v, psi) {
                    (_, Some(p)) => Decomposition::from_psi(&fix(amps_to_vector(modes, p)?), xs, perm)?,
                    (Some(v), None) => Decomposition::new(fix(amps_to_vector(modes, v)?), xs, perm)?,
                    (None, None) => Decomposition::new(FockVector::vacuum(modes), xs, perm)?,
                }
            }
        };
        Ok(dec)
    }

    pub fn observables(&self) -> Result<Vec<Observable>, CliError> {
        let mut out = Vec::new();
        for name in &self.observables {
            out.extend(parse_observable(name, &self.model)?);
        }
        Ok(out)
    }
}

fn even_part(f: &FockVector) -> FockVector {
    let mut out = f.clone();
    for (i, a) in out.amplitudes_mut().iter_mut().enumerate() {
        if i.count_ones() % 2 == 1 {
            *a = C64::new(0.0, 0.0);
        }
    }
    out
}

fn amps_to_vector(modes: ModeSpace, amps: &[Amp]) -> Result<FockVector, CliError> {
    if amps.len() != modes.dim() {
        return Err(CliError::Config(format!(
            "amplitude table has {} entries; {} modes need {}",
            amps.len(),
            modes.modes(),
            modes.dim()
        )));
    }
    Ok(FockVector::from_amplitudes(modes, amps.iter().map(|[re, im]| C64::new(*re, *im)).collect())?)
}

fn site_occupation(model: &HubbardParams, s: usize) -> Result<ManyBodyOperator, CliError> {
    let modes = model.mode_space()?;
    let mut op = ManyBodyOperator::zero(modes);
    for k in model.site_modes(s) {
        op = op.add(&number_op(modes, k)?);
    }
    Ok(op)
}

/// `occupations`, `occupation:<site>`, `energy`, `number` or `odd`.
fn parse_observable(name: &str, model: &HubbardParams) -> Result<Vec<Observable>, CliError> {
    let modes = model.mode_space()?;
    let one = |label: &str, op| Ok(vec![Observable { label: label.into(), op }]);
    match name {
        "occupations" => (0..model.sites)
            .map(|s| Ok(Observable { label: format!("n{s}"), op: site_occupation(model, s)? }))
            .collect(),
        "energy" => one("energy", Hamiltonian::hubbard(model)?.op().clone()),
        "number" => one("number", total_number(modes)),
        "odd" => one("odd", univalence(modes)),
        _ => match name.strip_prefix("occupation:").map(str::parse::<usize>) {
            Some(Ok(s)) if s < model.sites => one(&format!("n{s}"), site_occupation(model, s)?),
            _ => Err(CliError::Config(format!("unknown observable {name:?}"))),
        },
    }
}
