//! Run configuration in TOML.
//!
//! Complex numbers are `[re, im]`, matrices are lists of rows, and modes are
//! quadruples `[g_re, g_im, w_re, w_im]`. See `examples/` for complete files.

use openhier::bcf::{merged_fermionic_modes, Scheme};
use openhier::linalg::from_rows;
use openhier::master::FermionSigns;
use openhier::oracle::{bath_to_modes, DiscreteBathSpec, DiscreteChannel};
use openhier::{
    validate_system, Method, Mode, ModeSet, PoleSpectralDensity, SolverOptions, Statistics,
    SystemSpec, ThermalParams, TimeGrid, Truncation, C64,
};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Hops,
    MasterBoson,
    MasterFermion,
    Oracle,
    Bcf,
    Verify,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Hops => "hops",
            Task::MasterBoson => "master-boson",
            Task::MasterFermion => "master-fermion",
            Task::Oracle => "oracle",
            Task::Bcf => "bcf",
            Task::Verify => "verify",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        Ok(match s {
            "hops" => Task::Hops,
            "master-boson" => Task::MasterBoson,
            "master-fermion" => Task::MasterFermion,
            "oracle" => Task::Oracle,
            "bcf" => Task::Bcf,
            "verify" => Task::Verify,
            _ => return Err(CliError::Schema(format!("unknown solver `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Depth,
    Energy,
    Trajectories,
    PadeCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub solver: Task,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBath {
    pub density: PoleSpectralDensity,
    pub thermal: ThermalParams,
    pub scheme: Scheme,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bath {
    Modes(ModeSet),
    Discrete(DiscreteBathSpec),
    /// The same density on every channel.
    Spectral(SpectralBath),
    /// Only allowed for `verify`.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub options: SolverOptions,
    pub trajectories: usize,
    pub seed: u64,
    pub terminator: bool,
    pub signs: FermionSigns,
    /// Tolerance for the Fock-cutoff convergence of the oracle.
    pub oracle_tol: f64,
    /// Compare master runs on a discrete bath with the oracle.
    pub compare_oracle: bool,
    pub identity_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: Option<Task>,
    pub system: Option<SystemSpec>,
    pub initial: Vec<C64>,
    pub bath: Bath,
    pub grid: Option<TimeGrid>,
    pub truncation: Option<Truncation>,
    pub settings: SolverSection,
    pub sweep: Option<SweepSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    solver: Option<String>,
    system: Option<RawSystem>,
    #[serde(default)]
    bath: RawBath,
    grid: Option<RawGrid>,
    truncation: Option<RawTruncation>,
    #[serde(default)]
    settings: RawSettings,
    sweep: Option<RawSweep>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    statistics: String,
    hamiltonian: Vec<Vec<[f64; 2]>>,
    couplings: Vec<Vec<Vec<[f64; 2]>>>,
    initial: Vec<[f64; 2]>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBath {
    modes: Option<Vec<Vec<[f64; 4]>>>,
    discrete: Option<RawDiscrete>,
    spectral: Option<RawSpectral>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscrete {
    #[serde(default = "default_n_max")]
    n_max: usize,
    channels: Vec<RawChannel>,
}

fn default_n_max() -> usize {
    4
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    couplings: Vec<[f64; 2]>,
    frequencies: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectral {
    /// `[pole_re, pole_im, residue_re, residue_im]`
    poles: Option<Vec<[f64; 4]>>,
    lorentzian: Option<RawLorentzian>,
    temperature: f64,
    #[serde(default)]
    chemical_potential: f64,
    #[serde(default = "default_scheme")]
    scheme: String,
    #[serde(default = "default_count")]
    count: usize,
}

fn default_scheme() -> String {
    "pade".into()
}

fn default_count() -> usize {
    4
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLorentzian {
    kappa: f64,
    omega: f64,
    gamma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default)]
    t0: f64,
    t1: f64,
    steps: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruncation {
    kind: String,
    depth: Option<usize>,
    max: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSettings {
    method: String,
    tol: f64,
    trajectories: usize,
    seed: u64,
    terminator: bool,
    signs: String,
    oracle_tol: f64,
    compare_oracle: bool,
    identity_trials: usize,
}

impl Default for RawSettings {
    fn default() -> Self {
        Self {
            method: "rk4".into(),
            tol: 1e-9,
            trajectories: 1000,
            seed: 0,
            terminator: false,
            signs: "derived".into(),
            oracle_tol: 1e-8,
            compare_oracle: true,
            identity_trials: 100,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    solver: String,
    axis: String,
    values: Vec<f64>,
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn complex(v: &[f64; 2]) -> C64 {
    C64::new(v[0], v[1])
}

fn matrix(field: &str, rows: &[Vec<[f64; 2]>], dim: usize) -> CliResult<openhier::CMatrix> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(schema(format!("{field}: expected a {dim}x{dim} matrix")));
    }
    let flat: Vec<C64> = rows.iter().flatten().map(complex).collect();
    Ok(from_rows(dim, &flat))
}

pub fn parse_method(s: &str) -> CliResult<Method> {
    match s {
        "rk4" => Ok(Method::Rk4),
        "rkf45" => Ok(Method::Rkf45),
        _ => Err(schema(format!("settings.method: unknown method `{s}` (rk4 or rkf45)"))),
    }
}

fn parse_statistics(s: &str) -> CliResult<Statistics> {
    match s {
        "bosonic" => Ok(Statistics::Bosonic),
        "fermionic" => Ok(Statistics::Fermionic),
        _ => Err(schema(format!("system.statistics: `{s}` is neither bosonic nor fermionic"))),
    }
}

fn parse_axis(s: &str) -> CliResult<SweepAxis> {
    match s {
        "depth" => Ok(SweepAxis::Depth),
        "energy" => Ok(SweepAxis::Energy),
        "trajectories" => Ok(SweepAxis::Trajectories),
        "pade-count" => Ok(SweepAxis::PadeCount),
        _ => Err(schema(format!("sweep.axis: unknown axis `{s}`"))),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| schema(e.to_string()))?;

    let solver = raw.solver.as_deref().map(Task::parse).transpose()?;

    let (system, initial) = match &raw.system {
        Some(s) => {
            let stat = parse_statistics(&s.statistics)?;
            let dim = s.hamiltonian.len();
            if dim == 0 {
                return Err(schema("system.hamiltonian: empty matrix"));
            }
            let h = matrix("system.hamiltonian", &s.hamiltonian, dim)?;
            let ls = s
                .couplings
                .iter()
                .enumerate()
                .map(|(j, l)| matrix(&format!("system.couplings[{j}]"), l, dim))
                .collect::<CliResult<Vec<_>>>()?;
            if s.initial.len() != dim {
                return Err(schema(format!("system.initial: expected {dim} entries")));
            }
            let spec = validate_system(SystemSpec::new(h, ls, stat))?;
            (Some(spec), s.initial.iter().map(complex).collect())
        }
        None => (None, vec![]),
    };

    let present = [raw.bath.modes.is_some(), raw.bath.discrete.is_some(), raw.bath.spectral.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if present > 1 {
        return Err(schema("bath: give exactly one of modes, discrete, spectral"));
    }
    let bath = if let Some(m) = &raw.bath.modes {
        let channels = m
            .iter()
            .map(|ch| {
                ch.iter()
                    .map(|q| Mode::new(C64::new(q[0], q[1]), C64::new(q[2], q[3])))
                    .collect::<openhier::Result<Vec<_>>>()
            })
            .collect::<openhier::Result<Vec<_>>>()?;
        Bath::Modes(ModeSet::new(channels))
    } else if let Some(d) = &raw.bath.discrete {
        let stat = system
            .as_ref()
            .map(|s| s.statistics)
            .ok_or_else(|| schema("bath.discrete needs a system section"))?;
        Bath::Discrete(DiscreteBathSpec {
            channels: d
                .channels
                .iter()
                .map(|c| DiscreteChannel {
                    couplings: c.couplings.iter().map(complex).collect(),
                    frequencies: c.frequencies.clone(),
                })
                .collect(),
            statistics: stat,
            n_max: d.n_max,
        })
    } else if let Some(s) = &raw.bath.spectral {
        let density = match (&s.poles, &s.lorentzian) {
            (Some(p), None) => PoleSpectralDensity::new(
                p.iter()
                    .map(|q| (C64::new(q[0], q[1]), C64::new(q[2], q[3])))
                    .collect(),
                "configured",
            )?,
            (None, Some(l)) => PoleSpectralDensity::lorentzian_pair(l.kappa, l.omega, l.gamma)?,
            _ => return Err(schema("bath.spectral: give exactly one of poles, lorentzian")),
        };
        let scheme = match s.scheme.as_str() {
            "pade" => Scheme::Pade,
            "matsubara" => Scheme::Matsubara,
            o => return Err(schema(format!("bath.spectral.scheme: unknown scheme `{o}`"))),
        };
        Bath::Spectral(SpectralBath {
            density,
            thermal: ThermalParams::new(s.temperature, s.chemical_potential)?,
            scheme,
            count: s.count,
        })
    } else {
        Bath::None
    };

    let grid = raw
        .grid
        .as_ref()
        .map(|g| TimeGrid::new(g.t0, g.t1, g.steps))
        .transpose()?;

    let truncation = raw
        .truncation
        .as_ref()
        .map(|t| {
            let need_depth = || t.depth.ok_or_else(|| schema("truncation.depth is required"));
            let need_max = || t.max.ok_or_else(|| schema("truncation.max is required"));
            Ok(match t.kind.as_str() {
                "full" => Truncation::Full,
                "depth" => Truncation::Depth(need_depth()?),
                "energy" => Truncation::Energy { max: need_max()?, w: vec![] },
                "combined" => Truncation::Combined {
                    depth: need_depth()?,
                    max: need_max()?,
                    w: vec![],
                },
                o => return Err(schema(format!("truncation.kind: unknown kind `{o}`"))),
            })
        })
        .transpose()?;

    let s = &raw.settings;
    let settings = SolverSection {
        options: SolverOptions {
            method: parse_method(&s.method)?,
            tol: s.tol,
        },
        trajectories: s.trajectories,
        seed: s.seed,
        terminator: s.terminator,
        signs: match s.signs.as_str() {
            "derived" => FermionSigns::Derived,
            "printed" => FermionSigns::Printed,
            o => return Err(schema(format!("settings.signs: unknown convention `{o}`"))),
        },
        oracle_tol: s.oracle_tol,
        compare_oracle: s.compare_oracle,
        identity_trials: s.identity_trials,
    };

    let sweep = raw
        .sweep
        .as_ref()
        .map(|sw| {
            Ok::<_, CliError>(SweepSpec {
                solver: Task::parse(&sw.solver)?,
                axis: parse_axis(&sw.axis)?,
                values: sw.values.clone(),
            })
        })
        .transpose()?;

    Ok(RunConfig {
        solver,
        system,
        initial,
        bath,
        grid,
        truncation,
        settings,
        sweep,
    })
}

impl RunConfig {
    pub fn system(&self) -> CliResult<&SystemSpec> {
        self.system.as_ref().ok_or_else(|| schema("a system section is required"))
    }

    pub fn grid(&self) -> CliResult<TimeGrid> {
        self.grid.ok_or_else(|| schema("a grid section is required"))
    }

    /// Truncation with the solver default (Depth(4) bosonic, Full fermionic).
    pub fn truncation_for(&self, stat: Statistics) -> Truncation {
        self.truncation.clone().unwrap_or(match stat {
            Statistics::Bosonic => Truncation::Depth(4),
            Statistics::Fermionic => Truncation::Full,
        })
    }

    /// Checks that the configuration can be run by `task`.
    pub fn check_task(&self, task: Task) -> CliResult<()> {
        let incompatible = |m: &str| Err(CliError::IncompatibleSolver(format!("{}: {m}", task.name())));
        if let Some(s) = self.solver {
            if s != task {
                return incompatible(&format!("configuration is for `{}`", s.name()));
            }
        }
        if task == Task::Verify {
            return Ok(());
        }
        if task == Task::Bcf {
            return match self.bath {
                Bath::Spectral(_) => self.grid().map(|_| ()),
                _ => incompatible("needs a spectral bath"),
            };
        }
        let stat = self.system()?.statistics;
        self.grid()?;
        match (task, stat) {
            (Task::Hops, Statistics::Fermionic) => {
                return incompatible("fermionic noise cannot be sampled; use master-fermion")
            }
            (Task::MasterBoson, Statistics::Fermionic) => return incompatible("system is fermionic"),
            (Task::MasterFermion, Statistics::Bosonic) => return incompatible("system is bosonic"),
            _ => {}
        }
        match (&self.bath, task) {
            (Bath::None, _) => Err(schema("a bath section is required")),
            (Bath::Discrete(_), _) => Ok(()),
            (_, Task::Oracle) => incompatible("needs a discrete bath"),
            (Bath::Spectral(_), Task::Hops | Task::MasterBoson) => {
                incompatible("thermal pole expansions are implemented for fermionic baths only")
            }
            _ => Ok(()),
        }
    }

    /// Exponential modes of the bath for the hierarchy solvers.
    pub fn modes(&self) -> CliResult<ModeSet> {
        match &self.bath {
            Bath::Modes(m) => Ok(m.clone()),
            Bath::Discrete(d) => Ok(bath_to_modes(d)?),
            Bath::Spectral(s) => {
                let spec = self.system()?;
                let modes = merged_fermionic_modes(
                    &s.density,
                    &s.thermal,
                    s.scheme,
                    s.count,
                    spec.self_adjoint_couplings(),
                )?;
                Ok(ModeSet::new(vec![modes; spec.channels()]))
            }
            Bath::None => Err(schema("a bath section is required")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
statistics = "bosonic"
hamiltonian = [[[0.5, 0.0], [0.1, 0.0]], [[0.1, 0.0], [-0.5, 0.0]]]
couplings = [[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]]]
initial = [[1.0, 0.0], [0.0, 0.0]]

[bath]
modes = [[[0.3, 0.0, 1.0, 0.5]]]

[grid]
t1 = 1.0
steps = 100
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.settings.options.method, Method::Rk4);
        assert_eq!(c.truncation_for(Statistics::Bosonic), Truncation::Depth(4));
        assert_eq!(c.grid().unwrap().steps, 100);
        c.check_task(Task::Hops).unwrap();
        c.check_task(Task::MasterBoson).unwrap();
    }

    #[test]
    fn fermionic_hops_is_rejected() {
        let text = MINIMAL.replace("\"bosonic\"", "\"fermionic\"");
        let c = parse_config(&text).unwrap();
        assert!(matches!(c.check_task(Task::Hops), Err(CliError::IncompatibleSolver(_))));
        c.check_task(Task::MasterFermion).unwrap();
    }

    #[test]
    fn two_bath_representations_are_rejected() {
        let text = MINIMAL.replace(
            "[grid]",
            "[bath.discrete]\nchannels = [{ couplings = [[0.1, 0.0]], frequencies = [1.0] }]\n\n[grid]",
        );
        assert!(matches!(parse_config(&text), Err(CliError::Schema(_))));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = MINIMAL.replace("steps = 100", "steps = \"many\"");
        match parse_config(&text) {
            Err(CliError::Schema(m)) => assert!(m.contains("steps"), "{m}"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("t1 = 1.0", "t1 = 1.0\nbogus = 3");
        assert!(matches!(parse_config(&text), Err(CliError::Schema(_))));
    }

    #[test]
    fn oracle_needs_discrete_bath() {
        let c = parse_config(MINIMAL).unwrap();
        assert!(matches!(c.check_task(Task::Oracle), Err(CliError::IncompatibleSolver(_))));
    }
}
