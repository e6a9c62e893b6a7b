//! Solver dispatch and artifact output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use openhier::bcf::{bcf_convergence, residue_expand, thermal_bcf_quadrature, BcfKind, Scheme};
use openhier::bcf::eval_modes;
use openhier::grassmann::check_identities;
use openhier::hops::{run_ensemble, HopsHierarchy, HopsRun};
use openhier::linalg::trace;
use openhier::master::{propagate_master, MasterRun};
use openhier::oracle::exact_propagate_converged;
use openhier::{DensitySeries, Statistics, Truncation};
use serde_json::{json, Map, Value};

use crate::config::{Bath, RunConfig, SweepAxis, SweepSpec, Task};
use crate::error::{CliError, CliResult};

pub type Summary = Map<String, Value>;

fn write_series(series: &DensitySeries, out: &Path) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(out.join("rho.csv"))?);
    series.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn seeds(cfg: &RunConfig) -> Vec<u64> {
    let s = cfg.settings.seed;
    (0..cfg.settings.trajectories as u64).map(|i| s + i).collect()
}

/// Runs one solver, writes its CSV output into `out` and returns the solver
/// part of the summary together with the density series (if any).
pub fn run_task(task: Task, cfg: &RunConfig, out: &Path) -> CliResult<(Summary, Option<DensitySeries>)> {
    cfg.check_task(task)?;
    fs::create_dir_all(out)?;
    let mut s = Summary::new();
    let series = match task {
        Task::Hops => {
            let spec = cfg.system()?.clone();
            let run = HopsRun {
                modes: cfg.modes()?,
                grid: cfg.grid()?,
                truncation: cfg.truncation_for(Statistics::Bosonic),
                terminator: cfg.settings.terminator,
                options: cfg.settings.options,
                initial: cfg.initial.clone(),
                spec,
            };
            let hier = HopsHierarchy::new(&run)?;
            let seeds = seeds(cfg);
            let series = run_ensemble(&run, &seeds)?;
            let drift = series
                .rho
                .iter()
                .map(|r| (trace(r) - 1.0).norm())
                .fold(0.0, f64::max);
            s.insert("space_size".into(), json!(hier.space.len()));
            s.insert("trace_drift".into(), json!(drift));
            s.insert(
                "seeds".into(),
                json!({ "first": cfg.settings.seed, "count": seeds.len() }),
            );
            Some(series)
        }
        Task::MasterBoson | Task::MasterFermion => {
            let spec = cfg.system()?.clone();
            let grid = cfg.grid()?;
            let mut run = MasterRun::new(spec.clone(), cfg.modes()?, grid, cfg.initial.clone());
            run.truncation = cfg.truncation_for(spec.statistics);
            run.options = cfg.settings.options;
            run.signs = cfg.settings.signs;
            let out_m = propagate_master(&run)?;
            s.insert("space_size".into(), json!(out_m.space_size));
            s.insert("trace_drift".into(), json!(out_m.trace_drift));
            s.insert("pairing_residual".into(), json!(out_m.pairing_residual));
            if let (Bath::Discrete(bath), true) = (&cfg.bath, cfg.settings.compare_oracle) {
                match exact_propagate_converged(&spec, bath, &cfg.initial, &grid, cfg.settings.oracle_tol) {
                    Ok((o, n_max, _)) => {
                        s.insert(
                            "max_deviation_vs_oracle".into(),
                            json!(out_m.series.max_deviation(&o.series)),
                        );
                        if spec.statistics == Statistics::Bosonic {
                            s.insert("oracle_n_max".into(), json!(n_max));
                        }
                    }
                    Err(e) if e.is_guard() => {
                        s.insert("oracle_skipped".into(), json!(e.to_string()));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Some(out_m.series)
        }
        Task::Oracle => {
            let Bath::Discrete(bath) = &cfg.bath else {
                unreachable!("checked by check_task")
            };
            let spec = cfg.system()?;
            let (o, n_max, change) =
                exact_propagate_converged(spec, bath, &cfg.initial, &cfg.grid()?, cfg.settings.oracle_tol)?;
            s.insert("dimension".into(), json!(o.dimension));
            s.insert("norm_drift".into(), json!(o.norm_drift));
            if spec.statistics == Statistics::Bosonic {
                s.insert("n_max".into(), json!(n_max));
                s.insert("cutoff_change".into(), json!(change));
            }
            Some(o.series)
        }
        Task::Bcf => {
            run_bcf(cfg, out, &mut s)?;
            None
        }
        Task::Verify => {
            let trials = cfg.settings.identity_trials;
            let rep = check_identities(trials, cfg.settings.seed);
            print!("{rep}");
            let mut w = BufWriter::new(File::create(out.join("identities.csv"))?);
            writeln!(w, "identity,max_residual,trials,informational")?;
            for r in &rep.rows {
                writeln!(w, "{},{:e},{},{}", r.name, r.max_residual, r.trials, r.informational)?;
            }
            w.flush()?;
            s.insert("max_residual".into(), json!(rep.max_residual()));
            s.insert("trials".into(), json!(trials));
            s.insert("identities_hold".into(), json!(rep.passed(1e-12)));
            None
        }
    };
    if let Some(series) = &series {
        write_series(series, out)?;
    }
    Ok((s, series))
}

fn run_bcf(cfg: &RunConfig, out: &Path, s: &mut Summary) -> CliResult<()> {
    let Bath::Spectral(sp) = &cfg.bath else {
        unreachable!("checked by check_task")
    };
    let times = cfg.grid()?.times();
    let modes = residue_expand(&sp.density, &sp.thermal, sp.scheme, sp.count)?;
    let mut w = BufWriter::new(File::create(out.join("bcf.csv"))?);
    writeln!(w, "t,re_expansion,im_expansion,re_quadrature,im_quadrature")?;
    let mut err: f64 = 0.0;
    for &t in &times {
        let a = eval_modes(&modes, t)?;
        let q = thermal_bcf_quadrature(&sp.density, &sp.thermal, BcfKind::SpinBathAlpha, t)?;
        err = err.max((a - q).norm());
        writeln!(w, "{t:.12e},{:.15e},{:.15e},{:.15e},{:.15e}", a.re, a.im, q.re, q.im)?;
    }
    w.flush()?;
    let counts: Vec<usize> = (1..=sp.count).collect();
    let mut w = BufWriter::new(File::create(out.join("convergence.csv"))?);
    writeln!(w, "scheme,count,n_modes,max_abs_error,rel_error")?;
    let mut rows = vec![];
    for (name, scheme) in [("pade", Scheme::Pade), ("matsubara", Scheme::Matsubara)] {
        for r in bcf_convergence(&sp.density, &sp.thermal, scheme, &counts, &times)? {
            writeln!(w, "{name},{},{},{:e},{:e}", r.count, r.n_modes, r.max_abs_error, r.rel_error)?;
            rows.push(json!({
                "scheme": name, "count": r.count, "max_abs_error": r.max_abs_error, "rel_error": r.rel_error
            }));
        }
    }
    w.flush()?;
    s.insert("n_modes".into(), json!(modes.len()));
    s.insert("max_abs_error".into(), json!(err));
    s.insert("convergence".into(), Value::Array(rows));
    Ok(())
}

fn label(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Depth => "depth",
        SweepAxis::Energy => "energy",
        SweepAxis::Trajectories => "trajectories",
        SweepAxis::PadeCount => "pade-count",
    }
}

fn as_count(axis: SweepAxis, v: f64) -> CliResult<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(CliError::Schema(format!(
            "sweep.values: {} needs non-negative integers, got {v}",
            label(axis)
        )));
    }
    Ok(v as usize)
}

/// Configuration for one sweep value.
fn sweep_point(cfg: &RunConfig, sw: &SweepSpec, v: f64) -> CliResult<RunConfig> {
    let mut c = cfg.clone();
    c.solver = None;
    match sw.axis {
        SweepAxis::Depth => c.truncation = Some(Truncation::Depth(as_count(sw.axis, v)?)),
        SweepAxis::Energy => c.truncation = Some(Truncation::Energy { max: v, w: vec![] }),
        SweepAxis::Trajectories => {
            if sw.solver != Task::Hops {
                return Err(CliError::IncompatibleSolver("trajectory sweeps need hops".into()));
            }
            c.settings.trajectories = as_count(sw.axis, v)?;
        }
        SweepAxis::PadeCount => match &mut c.bath {
            Bath::Spectral(sp) => sp.count = as_count(sw.axis, v)?,
            _ => {
                return Err(CliError::IncompatibleSolver(
                    "pade-count sweeps need a spectral bath".into(),
                ))
            }
        },
    }
    Ok(c)
}

fn mean_se(series: &DensitySeries) -> Option<f64> {
    let se = series.se.as_ref()?;
    let vals: Vec<f64> = se
        .iter()
        .flat_map(|m| m.iter().flat_map(|x| [x.re, x.im]))
        .filter(|&x| x > 0.0)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Runs the sweep solver for every value and reports consecutive differences.
pub fn run_sweep(cfg: &RunConfig, out: &Path) -> CliResult<Summary> {
    let sw = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Schema("a sweep section is required".into()))?;
    if sw.values.is_empty() {
        return Err(CliError::Schema("sweep.values is empty".into()));
    }
    if sw.axis == SweepAxis::PadeCount && sw.solver == Task::Bcf {
        // handled below without density output
    } else if matches!(sw.solver, Task::Bcf | Task::Verify) {
        return Err(CliError::IncompatibleSolver(format!(
            "cannot sweep {} over {}",
            sw.solver.name(),
            label(sw.axis)
        )));
    }
    fs::create_dir_all(out)?;
    let mut rows = vec![];
    let mut prev: Option<DensitySeries> = None;
    let mut w = BufWriter::new(File::create(out.join("sweep.csv"))?);
    writeln!(w, "value,max_diff_to_previous,mean_se,bcf_rel_error")?;
    for &v in &sw.values {
        let c = sweep_point(cfg, &sw, v)?;
        let dir = out.join(format!("{}-{v}", label(sw.axis)));
        let (mut s, series) = run_task(sw.solver, &c, &dir)?;
        s.insert("value".into(), json!(v));
        let diff = match (&prev, &series) {
            (Some(p), Some(q)) => Some(p.max_deviation(q)),
            _ => None,
        };
        let se = series.as_ref().and_then(mean_se);
        let bcf_err = match (&c.bath, sw.axis) {
            (Bath::Spectral(sp), SweepAxis::PadeCount) => {
                let times = c.grid()?.times();
                let r = bcf_convergence(&sp.density, &sp.thermal, sp.scheme, &[sp.count], &times)?;
                Some(r[0].rel_error)
            }
            _ => None,
        };
        let fmt = |x: Option<f64>| x.map_or(String::new(), |x| format!("{x:e}"));
        writeln!(w, "{v},{},{},{}", fmt(diff), fmt(se), fmt(bcf_err))?;
        s.insert("max_diff_to_previous".into(), json!(diff));
        s.insert("mean_se".into(), json!(se));
        s.insert("bcf_rel_error".into(), json!(bcf_err));
        write_summary(&dir, "ok", sw.solver.name(), s.clone(), None)?;
        rows.push(Value::Object(s));
        if series.is_some() {
            prev = series;
        }
    }
    w.flush()?;
    let mut s = Summary::new();
    s.insert("solver".into(), json!(sw.solver.name()));
    s.insert("axis".into(), json!(label(sw.axis)));
    s.insert("points".into(), Value::Array(rows));
    Ok(s)
}

/// Writes `summary.json`; `error` marks a failed run.
pub fn write_summary(
    out: &Path,
    status: &str,
    verb: &str,
    mut body: Summary,
    error: Option<&CliError>,
) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    body.insert("verb".into(), json!(verb));
    body.insert("status".into(), json!(status));
    body.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    if let Some(e) = error {
        body.insert(
            "error".into(),
            json!({ "kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() }),
        );
    }
    let mut f = File::create(out.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &Value::Object(body))?;
    writeln!(f)?;
    Ok(())
}
