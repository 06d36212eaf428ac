//! Run configuration, run directories and the checks behind `verify`.
//!
//! A run directory holds:
//! - `timeseries.csv`: `t,a,a1,mass,E_total,E_kin,E_int,E_grav,dissipation_cum,H,Y,mean_pressure`
//! - `diagnostics.csv`: the remaining per-record scalars
//! - `meta.json`: model, mass bounds and discrete initial energy
//! - `run_config.txt`: the configuration text as given
//! - `snapshots/snap_NNNNN.csv`: `x,r,rho,u,F` per node, cell values on the
//!   row of the cell's inner node
//!
//! Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{fit_expansion, DiagnosticsRecord, ExpansionFit};
use crate::error::{Error, Result};
use crate::mass_bounds::{CriticalMassReport, Verdict, DEFAULT_A_GAMMA};
use crate::model::{self, in_admissible_range, snap_gamma, GasModel, LagrangianState};
use crate::solver::{self, MonitorSpec, OuterBoundary, SolverConfig, TimeSeries, ViscousScheme};
use crate::stationary::{
    hydrostatic_initial_data, perturbed_initial_data, solve_lane_emden, DensityProfile, InitialData,
    TabulatedDensity, VelocityShape,
};

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    LaneEmden,
    Uniform,
    File,
}

/// How the total mass is fixed; the density profile is rescaled to hit it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassTarget {
    Absolute(f64),
    CriticalFraction(f64),
    StrictFraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: GasModel,
    pub solver: SolverConfig,
    pub initial: InitialKind,
    pub rho_c: Option<f64>,
    /// Outer radius of uniform data.
    pub radius: Option<f64>,
    pub initial_file: Option<PathBuf>,
    pub mass: Option<MassTarget>,
    pub perturbation_amplitude: f64,
    pub perturbation_mode: VelocityShape,
    pub a_gamma: f64,
    pub l: Option<f64>,
    pub alpha: Option<f64>,
    pub output_dir: PathBuf,
    pub seed_label: String,
    /// Every k-th output record gets a snapshot; 0 keeps only the first and last.
    pub snapshot_interval: usize,
    pub track_x_min: f64,
    pub lane_emden_tol: f64,
    pub truncation_floor: Option<f64>,
    pub source_text: String,
}

const KEYS: &[&str] = &[
    "gamma",
    "kappa",
    "mu",
    "lambda",
    "gravity",
    "N",
    "eps_radius",
    "cfl",
    "viscous_scheme",
    "viscous_theta",
    "t_end",
    "output_interval",
    "dt_max",
    "dt_min",
    "density_floor",
    "outer_boundary",
    "initial",
    "rho_c",
    "radius",
    "initial_file",
    "mass",
    "mass_ratio_mc",
    "mass_ratio_mbar",
    "perturbation_amplitude",
    "perturbation_mode",
    "a_gamma",
    "l",
    "alpha",
    "output_dir",
    "seed_label",
    "snapshot_interval",
    "track_x_min",
    "lane_emden_tol",
    "truncation_floor",
];

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::config(key, format!("expected a finite number, got `{v}`")))
            })
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        self.required(key)?;
        Ok(self.f64_opt(key)?.expect("present"))
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        self.raw(key)
            .map(|v| v.parse::<usize>().map_err(|_| Error::config(key, format!("expected a nonnegative integer, got `{v}`"))))
            .transpose()
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some("false" | "off" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::config(key, format!("expected true or false, got `{v}`"))),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

/// Parse the flat `key = value` format. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            source_name: "config".into(),
            message: format!("line {}: expected `key = value`", lineno + 1),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }
    let e = Entries(map);

    let gamma = snap_gamma(e.f64_req("gamma")?);
    if !in_admissible_range(gamma) {
        return Err(Error::config("gamma", format!("{gamma} lies outside (6/5, 4/3] required for simulation")));
    }
    let mu = e.f64_req("mu")?;
    let lambda = e.f64_req("lambda")?;
    let model = GasModel::new(gamma, mu, lambda)
        .map_err(|err| Error::config(if mu > 0.0 { "lambda" } else { "mu" }, err.to_string()))?
        .with_kappa(e.f64_or("kappa", 1.0)?)
        .map_err(|err| Error::config("kappa", err.to_string()))?
        .with_gravity(e.bool_or("gravity", true)?);

    let defaults = SolverConfig::default();
    let t_end = e.f64_req("t_end")?;
    let n_cells = e.usize_opt("N")?.ok_or_else(|| Error::config("N", "missing required key"))?;
    let output_interval = e.f64_or("output_interval", defaults.output_interval)?;
    let solver = SolverConfig {
        n_cells,
        eps_radius: e.f64_or("eps_radius", defaults.eps_radius)?,
        cfl: e.f64_or("cfl", defaults.cfl)?,
        viscous: match (e.raw("viscous_scheme"), e.f64_opt("viscous_theta")?) {
            (None | Some("sdirk2"), None) => ViscousScheme::Sdirk2,
            (None | Some("theta"), Some(theta)) => ViscousScheme::Theta(theta),
            (Some("theta"), None) => ViscousScheme::Theta(1.0),
            (Some("sdirk2"), Some(_)) => {
                return Err(Error::config("viscous_theta", "only used with viscous_scheme = theta"))
            }
            (Some(other), _) => {
                return Err(Error::config("viscous_scheme", format!("expected sdirk2 or theta, got `{other}`")))
            }
        },
        t_end,
        output_interval,
        dt_max: e.f64_or("dt_max", defaults.dt_max)?,
        dt_min: e.f64_or("dt_min", defaults.dt_min)?,
        density_floor: e.f64_or("density_floor", defaults.density_floor)?,
        outer_boundary: match e.raw("outer_boundary").unwrap_or("stress-free") {
            "stress-free" => OuterBoundary::StressFree,
            "wall" => OuterBoundary::Wall,
            other => return Err(Error::config("outer_boundary", format!("expected stress-free or wall, got `{other}`"))),
        },
    };
    solver.validate()?;

    let initial = match e.required("initial")? {
        "lane-emden" => InitialKind::LaneEmden,
        "uniform" => InitialKind::Uniform,
        "file" => InitialKind::File,
        other => return Err(Error::config("initial", format!("expected lane-emden, uniform or file, got `{other}`"))),
    };
    let rho_c = e.f64_opt("rho_c")?.map(|v| positive("rho_c", v)).transpose()?;
    let radius = e.f64_opt("radius")?.map(|v| positive("radius", v)).transpose()?;
    let initial_file = e.raw("initial_file").map(PathBuf::from);
    match initial {
        InitialKind::LaneEmden if rho_c.is_none() => return Err(Error::config("rho_c", "missing required key")),
        InitialKind::Uniform if rho_c.is_none() => return Err(Error::config("rho_c", "missing required key")),
        InitialKind::Uniform if radius.is_none() => return Err(Error::config("radius", "missing required key")),
        InitialKind::File if initial_file.is_none() => {
            return Err(Error::config("initial_file", "missing required key"))
        }
        _ => {}
    }

    let mut targets = Vec::new();
    if let Some(m) = e.f64_opt("mass")? {
        targets.push(MassTarget::Absolute(positive("mass", m)?));
    }
    if let Some(m) = e.f64_opt("mass_ratio_mc")? {
        targets.push(MassTarget::CriticalFraction(positive("mass_ratio_mc", m)?));
    }
    if let Some(m) = e.f64_opt("mass_ratio_mbar")? {
        targets.push(MassTarget::StrictFraction(positive("mass_ratio_mbar", m)?));
    }
    if targets.len() > 1 {
        return Err(Error::config("mass", "give at most one of mass, mass_ratio_mc, mass_ratio_mbar"));
    }

    let perturbation_mode = match e.raw("perturbation_mode") {
        None => VelocityShape::Cubic,
        Some(v) => v.parse().map_err(|_| Error::config("perturbation_mode", format!("expected cubic or quintic, got `{v}`")))?,
    };
    let track_x_min = e.f64_or("track_x_min", 0.2)?;
    if !(track_x_min > 0.0 && track_x_min <= 1.0) {
        return Err(Error::config("track_x_min", "must lie in (0, 1]"));
    }
    let lane_emden_tol = positive("lane_emden_tol", e.f64_or("lane_emden_tol", 1e-10)?)?;
    let a_gamma = e.f64_or("a_gamma", DEFAULT_A_GAMMA)?;
    if !(a_gamma >= 0.0) {
        return Err(Error::config("a_gamma", "must be nonnegative"));
    }
    let l = e.f64_opt("l")?;
    let alpha = e.f64_opt("alpha")?;
    crate::mass_bounds::splitting(gamma, l, alpha).map_err(|err| Error::config("l", err.to_string()))?;

    Ok(RunConfig {
        model,
        solver,
        initial,
        rho_c,
        radius,
        initial_file,
        mass: targets.pop(),
        perturbation_amplitude: e.f64_or("perturbation_amplitude", 0.0)?,
        perturbation_mode,
        a_gamma,
        l,
        alpha,
        output_dir: PathBuf::from(e.raw("output_dir").unwrap_or("run")),
        seed_label: e.raw("seed_label").unwrap_or("").to_string(),
        snapshot_interval: e.usize_opt("snapshot_interval")?.unwrap_or(10),
        track_x_min,
        lane_emden_tol,
        truncation_floor: e.f64_opt("truncation_floor")?,
        source_text: text.to_string(),
    })
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
    parse_config(&text)
}

/// Two-column `r,rho` table, header optional, `#` comments allowed.
pub fn read_density_table(path: &Path) -> Result<TabulatedDensity> {
    let text = fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
    let name = path.display().to_string();
    let rows = parse_numeric_rows(&text, &name, 2)?;
    TabulatedDensity::new(rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect())
}

/// Everything a run needs, built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub model: GasModel,
    pub solver: SolverConfig,
    pub data: InitialData,
    pub state0: LagrangianState,
    /// Discrete initial energy `E_kin + E_int` on the grid.
    pub e0: f64,
    pub report: CriticalMassReport,
    pub monitor: Option<MonitorSpec>,
}

fn mass_for_target(target: MassTarget, data: &InitialData, cfg: &RunConfig, factor: f64) -> Result<f64> {
    let g = cfg.model.gamma();
    let e0 = factor * data.kinetic_energy() + factor.powf(g) * data.internal_energy();
    let report = CriticalMassReport::new(g, cfg.a_gamma, e0, None, cfg.l, cfg.alpha)?;
    Ok(match target {
        MassTarget::Absolute(m) => m,
        MassTarget::CriticalFraction(f) => f * report.m_c,
        MassTarget::StrictFraction(f) => f * report.m_bar,
    })
}

/// Density factor that makes the data's mass meet the target. The target
/// decreases with the factor when it depends on the energy, so the root is
/// unique and bisection in `ln f` finds it.
fn density_factor(target: MassTarget, data: &InitialData, cfg: &RunConfig) -> Result<f64> {
    let gap = |lf: f64| -> Result<f64> {
        let f = lf.exp();
        Ok((f * data.mass()).ln() - mass_for_target(target, data, cfg, f)?.ln())
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    let (glo, ghi) = (gap(lo)?, gap(hi)?);
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::config("mass", "no density scaling reaches the requested mass"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

pub fn prepare(cfg: &RunConfig) -> Result<PreparedRun> {
    let model = cfg.model;
    let eps = cfg.solver.eps_radius;
    let base = match cfg.initial {
        InitialKind::LaneEmden => {
            let profile = solve_lane_emden(model.gamma(), cfg.lane_emden_tol)?;
            hydrostatic_initial_data(&profile, cfg.rho_c.expect("validated"), eps, &model, cfg.truncation_floor)?
        }
        InitialKind::Uniform => InitialData::uniform(cfg.rho_c.expect("validated"), eps, cfg.radius.expect("validated"), &model)?,
        InitialKind::File => {
            let table = read_density_table(cfg.initial_file.as_deref().expect("validated"))?;
            let a0 = table.outer_radius();
            InitialData::new(DensityProfile::Table(table), eps, a0, &model)?
        }
    };
    let perturbed = perturbed_initial_data(&base, cfg.perturbation_amplitude, cfg.perturbation_mode, &model)?;
    let data = match cfg.mass {
        Some(target) => {
            let f = density_factor(target, &perturbed, cfg)?;
            perturbed.with_density_scale(f, &model)?
        }
        None => perturbed,
    };
    let state0 = solver::eulerian_to_lagrangian(&data, cfg.solver.n_cells)?;
    let e0 = crate::diagnostics::kinetic_energy(&state0) + crate::diagnostics::internal_energy(&state0, &model);
    let report = CriticalMassReport::new(model.gamma(), cfg.a_gamma, e0, Some(data.mass()), cfg.l, cfg.alpha)?;
    let monitor = match (model.gravity_enabled(), report.c_gamma) {
        (true, Some(c)) if c > 0.0 => Some(MonitorSpec { e0, c_gamma: c, x_min_fraction: cfg.track_x_min }),
        _ => None,
    };
    Ok(PreparedRun { model, solver: cfg.solver, data, state0, e0, report, monitor })
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub gamma: f64,
    pub kappa: f64,
    pub mu: f64,
    pub lambda: f64,
    pub nu: f64,
    pub gravity: bool,
    pub n_cells: usize,
    pub eps_radius: f64,
    pub t_end: f64,
    pub mass: f64,
    pub e0: f64,
    pub e0_continuous: f64,
    pub a0: f64,
    pub a_gamma: f64,
    pub b: f64,
    pub m_c: f64,
    pub m_bar: f64,
    pub c_gamma: Option<f64>,
    pub l: f64,
    pub alpha: Option<f64>,
    pub verdict: Option<String>,
    pub vacuum_boundary: bool,
    pub track_x_min: f64,
    pub seed_label: String,
    pub steps: usize,
    pub rejected_steps: usize,
}

impl RunMeta {
    fn verdict(&self) -> Option<&str> {
        self.verdict.as_deref()
    }
}

const TIMESERIES_HEADER: &str = "t,a,a1,mass,E_total,E_kin,E_int,E_grav,dissipation_cum,H,Y,mean_pressure";
const DIAGNOSTICS_HEADER: &str =
    "t,pressure_integral,weighted_pressure_cum,envelope_violations,path_violations,boundary_gap,boundary_stress,outer_radius";

pub fn timeseries_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 200);
    out.push_str(TIMESERIES_HEADER);
    out.push('\n');
    for r in records {
        let row = [r.t, r.a, r.a1, r.mass, r.e_total, r.e_kin, r.e_int, r.e_grav, r.dissipation_cum, r.h, r.y, r.mean_pressure];
        push_row(&mut out, &row);
    }
    out
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 160);
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in records {
        let row = [
            r.t,
            r.pressure_integral,
            r.weighted_pressure_cum,
            r.envelope_violations as f64,
            r.path_violations as f64,
            r.boundary_gap,
            r.boundary_stress,
            r.outer_radius,
        ];
        push_row(&mut out, &row);
    }
    out
}

fn push_row(out: &mut String, row: &[f64]) {
    for (k, v) in row.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(*v));
    }
    out.push('\n');
}

pub fn snapshot_csv(state: &LagrangianState, model: &GasModel) -> String {
    let stress = model::stress(state, model);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# t={} gamma={} M={} a={}",
        fmt_f64(state.time()),
        fmt_f64(model.gamma()),
        fmt_f64(state.eulerian_mass()),
        fmt_f64(state.a())
    );
    out.push_str("x,r,rho,u,F\n");
    for i in 0..=state.cells() {
        let (rho, f) = if i < state.cells() { (state.rho()[i], stress.cells[i]) } else { (0.0, 0.0) };
        push_row(&mut out, &[state.x()[i], state.r()[i], rho, state.u()[i], f]);
    }
    out
}

fn parse_numeric_rows(text: &str, name: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) if values.len() == width => rows.push(values),
            Ok(values) => {
                return Err(Error::Parse {
                    source_name: name.to_string(),
                    message: format!("line {}: expected {width} fields, found {}", lineno + 1, values.len()),
                })
            }
            // a header line
            Err(_) if rows.is_empty() => continue,
            Err(_) => {
                return Err(Error::Parse {
                    source_name: name.to_string(),
                    message: format!("line {}: non-numeric field", lineno + 1),
                })
            }
        }
    }
    Ok(rows)
}

/// Column-major view of a CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse { source_name: name.into(), message: "empty file".into() })?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let rest: Vec<&str> = lines.collect();
        let rows = parse_numeric_rows(&rest.join("\n"), name, columns.len())?;
        Ok(Self { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse { source_name: name.into(), message: format!("missing column `{name}`") })?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_snapshot(path: &Path) -> Result<LagrangianState> {
    let text = fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
    let name = path.display().to_string();
    let header = text.lines().next().unwrap_or("");
    let field = |key: &str| -> Option<f64> {
        header
            .trim_start_matches('#')
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .and_then(|v| v.parse().ok())
    };
    let t = field("t").ok_or_else(|| Error::Parse { source_name: name.clone(), message: "header lacks t".into() })?;
    let table = Table::parse(&text, &name)?;
    let state = LagrangianState::from_radii(table.column("x")?, table.column("r")?, table.column("u")?, t)?;
    Ok(match field("a") {
        Some(a) => state.with_boundary(a),
        None => state,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|err| Error::io(path, err))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub series: TimeSeries,
    pub meta: RunMeta,
}

pub fn meta_for(prepared: &PreparedRun, cfg: &RunConfig, series: Option<&TimeSeries>) -> RunMeta {
    let m = &prepared.model;
    RunMeta {
        gamma: m.gamma(),
        kappa: m.kappa(),
        mu: m.mu(),
        lambda: m.lambda(),
        nu: m.nu(),
        gravity: m.gravity_enabled(),
        n_cells: prepared.solver.n_cells,
        eps_radius: prepared.solver.eps_radius,
        t_end: prepared.solver.t_end,
        mass: prepared.data.mass(),
        e0: prepared.e0,
        e0_continuous: prepared.data.e0(),
        a0: prepared.data.a0(),
        a_gamma: prepared.report.a_gamma,
        b: prepared.report.b,
        m_c: prepared.report.m_c,
        m_bar: prepared.report.m_bar,
        c_gamma: prepared.report.c_gamma,
        l: prepared.report.l,
        alpha: prepared.report.alpha,
        verdict: prepared.report.verdict.map(|v| verdict_name(v).to_string()),
        vacuum_boundary: prepared.data.has_vacuum_boundary(),
        track_x_min: cfg.track_x_min,
        seed_label: cfg.seed_label.clone(),
        steps: series.map_or(0, |s| s.steps),
        rejected_steps: series.map_or(0, |s| s.rejected_steps),
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Supercritical => "supercritical",
        Verdict::Subcritical => "subcritical",
        Verdict::StrictlySubcritical => "strictly-subcritical",
    }
}

/// Run `cfg` and write its run directory to `dir`.
pub fn simulate(cfg: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let prepared = prepare(cfg)?;
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(|err| Error::io(&snap_dir, err))?;
    let model = prepared.model;
    let every = cfg.snapshot_interval;
    let mut index = 0usize;
    let mut last: Option<(usize, LagrangianState)> = None;
    let series = solver::run_with(&prepared.data, &model, &prepared.solver, prepared.monitor, |state, _| {
        if index == 0 || (every > 0 && index.is_multiple_of(every)) {
            write(&snap_dir.join(format!("snap_{index:05}.csv")), &snapshot_csv(state, &model))?;
            last = None;
        } else {
            last = Some((index, state.clone()));
        }
        index += 1;
        Ok(())
    })?;
    if let Some((k, state)) = last {
        write(&snap_dir.join(format!("snap_{k:05}.csv")), &snapshot_csv(&state, &model))?;
    }
    write(&dir.join("timeseries.csv"), &timeseries_csv(&series.records))?;
    write(&dir.join("diagnostics.csv"), &diagnostics_csv(&series.records))?;
    let meta = meta_for(&prepared, cfg, Some(&series));
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write(&dir.join("meta.json"), &(json + "\n"))?;
    write(&dir.join("run_config.txt"), &cfg.source_text)?;
    Ok(RunOutput { dir: dir.to_path_buf(), series, meta })
}

pub fn read_meta(dir: &Path) -> Result<RunMeta> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
    serde_json::from_str(&text).map_err(|err| Error::Parse { source_name: path.display().to_string(), message: err.to_string() })
}

/// Relative slack on the energy inequalities.
pub const ENERGY_TOL: f64 = 1e-2;
/// Relative slack on the `Y` lower bound.
pub const Y_TOL: f64 = 0.05;
const MASS_TOL: f64 = 1e-10;
const ROUNDTRIP_TOL: f64 = 1e-12;

/// One verdict line from `verify`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check: &'static str,
    pub pass: bool,
    /// Soft checks are reported but never fail the run.
    pub hard: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn hard(check: &'static str, value: f64, threshold: f64, pass: bool, detail: impl Into<String>) -> Self {
        Self { check, pass, hard: true, value, threshold, detail: detail.into() }
    }

    fn soft(check: &'static str, value: f64, detail: impl Into<String>) -> Self {
        Self { check, pass: true, hard: false, value, threshold: f64::NAN, detail: detail.into() }
    }

    pub fn to_json(&self) -> String {
        let finite = |v: f64| if v.is_finite() { serde_json::json!(v) } else { serde_json::Value::Null };
        serde_json::json!({
            "check": self.check,
            "pass": self.pass,
            "hard": self.hard,
            "value": finite(self.value),
            "threshold": finite(self.threshold),
            "detail": self.detail,
        })
        .to_string()
    }
}

/// Columns of `timeseries.csv` and `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub a1: Vec<f64>,
    pub mass: Vec<f64>,
    pub e_total: Vec<f64>,
    pub e_kin: Vec<f64>,
    pub e_int: Vec<f64>,
    pub e_grav: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
    pub mean_pressure: Vec<f64>,
    pub pressure_integral: Vec<f64>,
    pub weighted_pressure: Vec<f64>,
    pub envelope_violations: Vec<f64>,
    pub path_violations: Vec<f64>,
    pub boundary_gap: Vec<f64>,
}

impl RunSeries {
    pub fn read(dir: &Path) -> Result<Self> {
        let ts = Table::read(&dir.join("timeseries.csv"))?;
        let dg = Table::read(&dir.join("diagnostics.csv"))?;
        Ok(Self {
            t: ts.column("t")?,
            a: ts.column("a")?,
            a1: ts.column("a1")?,
            mass: ts.column("mass")?,
            e_total: ts.column("E_total")?,
            e_kin: ts.column("E_kin")?,
            e_int: ts.column("E_int")?,
            e_grav: ts.column("E_grav")?,
            dissipation: ts.column("dissipation_cum")?,
            h: ts.column("H")?,
            y: ts.column("Y")?,
            mean_pressure: ts.column("mean_pressure")?,
            pressure_integral: dg.column("pressure_integral")?,
            weighted_pressure: dg.column("weighted_pressure_cum")?,
            envelope_violations: dg.column("envelope_violations")?,
            path_violations: dg.column("path_violations")?,
            boundary_gap: dg.column("boundary_gap")?,
        })
    }
}

fn max_by(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

/// Every check on a run directory; the run passes when all hard checks do.
pub fn verify(dir: &Path) -> Result<Vec<Check>> {
    let meta = read_meta(dir)?;
    let s = RunSeries::read(dir)?;
    let n = s.t.len();
    if n == 0 {
        return Err(Error::State("timeseries has no rows".into()));
    }
    let g = meta.gamma;
    let e0 = meta.e0;
    let mut out = Vec::new();

    let increasing = s.t.windows(2).all(|w| w[1] > w[0]);
    out.push(Check::hard("times_increasing", n as f64, f64::NAN, increasing, "output times strictly increasing"));

    let mut running = f64::NEG_INFINITY;
    let mut a1_ok = true;
    for (a, a1) in s.a.iter().zip(&s.a1) {
        running = running.max(*a);
        a1_ok &= *a1 == running;
    }
    out.push(Check::hard("a1_running_max", s.a1[n - 1], f64::NAN, a1_ok, "a1 equals the running maximum of a"));

    let mass_dev = max_by(s.mass.iter().map(|m| (m - meta.mass).abs() / meta.mass));
    out.push(Check::hard("mass_conservation", mass_dev, MASS_TOL, mass_dev <= MASS_TOL, "max relative mass deviation"));

    let nonneg = (0..n).all(|k| s.e_kin[k] >= 0.0 && s.e_int[k] >= 0.0 && s.e_grav[k] >= 0.0 && s.dissipation[k] >= 0.0);
    let diss_mono = s.dissipation.windows(2).all(|w| w[1] >= w[0]);
    out.push(Check::hard("energies_nonnegative", 0.0, 0.0, nonneg, "E_kin, E_int, E_grav, dissipation_cum >= 0"));
    out.push(Check::hard("dissipation_monotone", s.dissipation[n - 1], f64::NAN, diss_mono, "dissipation_cum nondecreasing"));

    let budget = max_by((0..n).map(|k| (s.e_total[k] + s.dissipation[k] - s.e_total[0]).abs() / e0));
    out.push(Check::hard("energy_budget", budget, ENERGY_TOL, budget <= ENERGY_TOL, "max |E_total + dissipation_cum - E_total(0)| / E0"));

    let wp_ok = s.weighted_pressure.iter().all(|v| v.is_finite());
    out.push(Check::hard("weighted_pressure_finite", s.weighted_pressure[n - 1], f64::NAN, wp_ok, "time integral of rho^(2 gamma) r^12"));

    if !meta.gravity {
        let mono = s.e_kin.windows(2).all(|w| w[1] <= w[0]);
        out.push(Check::hard("kinetic_monotone", s.e_kin[n - 1], s.e_kin[0], mono, "E_kin nonincreasing without gravity"));
    }

    let verdict = meta.verdict();
    let sub = meta.gravity && matches!(verdict, Some("subcritical" | "strictly-subcritical"));
    let strict = meta.gravity && verdict == Some("strictly-subcritical");
    if let (true, Some(c)) = (sub, meta.c_gamma) {
        let worst = max_by((0..n).map(|k| (s.e_kin[k] + c * s.pressure_integral[k] + s.dissipation[k]) / e0));
        out.push(Check::hard(
            "energy_inequality",
            worst,
            1.0 + ENERGY_TOL,
            worst <= 1.0 + ENERGY_TOL,
            "max (E_kin + C_gamma * int P r^2 dr + dissipation_cum) / E0",
        ));
        let env = max_by(s.envelope_violations.iter().copied());
        out.push(Check::hard("transport_envelope", env, 0.0, env == 0.0, "cells outside the density envelope"));
        let path = max_by(s.path_violations.iter().copied());
        out.push(Check::hard("path_lower_bounds", path, 0.0, path == 0.0, "nodes or pairs below the path bounds"));
    }
    if strict {
        let half = 1.0 / (2.0 * (g - 1.0));
        let worst = max_by((0..n).map(|k| (s.e_kin[k] + half * s.pressure_integral[k] + s.dissipation[k]) / e0));
        out.push(Check::hard(
            "strict_energy_bound",
            worst,
            1.0 + ENERGY_TOL,
            worst <= 1.0 + ENERGY_TOL,
            "max (E_kin + int P r^2 dr / (2(gamma-1)) + dissipation_cum) / E0",
        ));
        let ratio = (0..n)
            .map(|k| s.y[k] / ((1.0 + s.t[k]).powi(2) * s.e_int[k]))
            .fold(f64::INFINITY, f64::min);
        let pos = s.y.iter().all(|y| *y > 0.0);
        out.push(Check::hard("y_positivity", ratio, 1.0 - Y_TOL, pos && ratio >= 1.0 - Y_TOL, "min Y / ((1+t)^2 E_int)"));
    }

    if meta.gravity {
        let (k_max, sup) = (0..n)
            .map(|k| (k, (1.0 + s.t[k]) * s.mean_pressure[k]))
            .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
        out.push(Check::soft("compensated_mean_pressure", sup, format!("sup (1+t) mean_pressure, attained at t = {}", fmt_f64(s.t[k_max]))));
    }
    out.push(Check::soft("boundary_gap", max_by(s.boundary_gap.iter().copied()), "max |r_N - a|"));

    out.push(snapshot_roundtrip(dir, &meta, &s)?);
    Ok(out)
}

/// The newest snapshot reproduces the matching timeseries row.
fn snapshot_roundtrip(dir: &Path, meta: &RunMeta, s: &RunSeries) -> Result<Check> {
    let snap_dir = dir.join("snapshots");
    let mut names: Vec<PathBuf> = fs::read_dir(&snap_dir)
        .map_err(|err| Error::io(&snap_dir, err))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    names.sort();
    let Some(path) = names.last() else {
        return Ok(Check::hard("snapshot_roundtrip", f64::NAN, ROUNDTRIP_TOL, false, "no snapshots"));
    };
    let state = read_snapshot(path)?;
    let model = GasModel::new(meta.gamma, meta.mu, meta.lambda)?.with_kappa(meta.kappa)?.with_gravity(meta.gravity);
    let Some(k) = s.t.iter().position(|t| *t == state.time()) else {
        return Ok(Check::hard("snapshot_roundtrip", f64::NAN, ROUNDTRIP_TOL, false, "snapshot time not in timeseries"));
    };
    let rec = DiagnosticsRecord::evaluate(&state, &model, s.dissipation[k], 0.0, s.a1[k], None);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(meta.e0);
    let dev = [
        rel(rec.mass, s.mass[k]),
        rel(rec.e_kin, s.e_kin[k]),
        rel(rec.e_int, s.e_int[k]),
        rel(rec.e_grav, s.e_grav[k]),
        rel(rec.a, s.a[k]),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(Check::hard(
        "snapshot_roundtrip",
        dev,
        ROUNDTRIP_TOL,
        dev <= ROUNDTRIP_TOL,
        format!("{} against timeseries row {k}", path.file_name().unwrap_or_default().to_string_lossy()),
    ))
}

/// `fit-expansion` on a run directory. The exponent target comes from
/// `gamma`, else from `meta.json` when present.
pub fn fit_run(dir: &Path, t_lo: f64, t_hi: f64, gamma: Option<f64>) -> Result<ExpansionFit> {
    let ts = Table::read(&dir.join("timeseries.csv"))?;
    let gamma = gamma.map(snap_gamma).or_else(|| read_meta(dir).ok().map(|m| m.gamma));
    fit_expansion(&ts.column("t")?, &ts.column("a1")?, t_lo, t_hi, gamma)
}
