//! Time integration of the mass-coordinate system with a vacuum free boundary.
//!
//! Each step is a symmetric splitting of the inviscid and viscous parts:
//! half kick, half viscous substep, drift of the radii by `dt u`, half
//! viscous substep on the new geometry, half kick on the new geometry.
//!
//! The kick applies the pressure gradient and gravity. The viscous substep
//! is a symmetric tridiagonal solve over the nodes, by default with a
//! two-stage L-stable SDIRK scheme. After the drift the densities are
//! rebuilt from the cell volumes, so `ρ_j Δ(r³)/3 = Δx_j` holds to rounding.
//! The stress vanishes on the ghost face beyond the last node.

use std::f64::consts::PI;

use crate::diagnostics::{weighted_pressure_integral, DiagnosticsRecord, EnvelopeMonitor};
use crate::error::{Error, Result};
use crate::model::{cube, GasModel, LagrangianState};
use crate::stationary::InitialData;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterBoundary {
    /// Ghost stress `F = 0`.
    StressFree,
    /// Outer node held at rest; only for tests.
    Wall,
}

/// Time integrator for the viscous substeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscousScheme {
    /// Two-stage L-stable SDIRK, second order.
    Sdirk2,
    /// θ-method; `θ = 1` is backward Euler.
    Theta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub n_cells: usize,
    pub eps_radius: f64,
    pub cfl: f64,
    pub viscous: ViscousScheme,
    pub t_end: f64,
    pub output_interval: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    /// Relative to the largest initial density.
    pub density_floor: f64,
    pub outer_boundary: OuterBoundary,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_cells: 200,
            eps_radius: 0.0,
            cfl: 0.5,
            viscous: ViscousScheme::Sdirk2,
            t_end: 1.0,
            output_interval: 0.1,
            dt_max: 0.05,
            dt_min: 1e-12,
            density_floor: 1e-14,
            outer_boundary: OuterBoundary::StressFree,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 8 {
            return Err(Error::config("N", "need at least 8 cells"));
        }
        if !(self.eps_radius >= 0.0) {
            return Err(Error::config("eps_radius", "must be nonnegative"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config("cfl", "must lie in (0, 1]"));
        }
        if let ViscousScheme::Theta(theta) = self.viscous {
            if !(0.5..=1.0).contains(&theta) {
                return Err(Error::config("viscous_theta", "must lie in [1/2, 1]"));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::config("t_end", "must be finite and nonnegative"));
        }
        if !(self.output_interval > 0.0) {
            return Err(Error::config("output_interval", "must be positive"));
        }
        if !(self.dt_min > 0.0) || !(self.dt_min < self.dt_max) {
            return Err(Error::config("dt_min", "need 0 < dt_min < dt_max"));
        }
        if !(self.density_floor > 0.0 && self.density_floor < 1.0) {
            return Err(Error::config("density_floor", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Equal-mass grid with node radii placed on the exact mass coordinate, so the
/// cell densities are exact cell averages.
pub fn eulerian_to_lagrangian(data: &InitialData, n: usize) -> Result<LagrangianState> {
    if n < 1 {
        return Err(Error::domain("need at least one cell"));
    }
    let total = data.mass() / (4.0 * PI);
    let dx = total / n as f64;
    let mut x = Vec::with_capacity(n + 1);
    let mut r = Vec::with_capacity(n + 1);
    x.push(0.0);
    r.push(data.eps());
    for i in 1..n {
        let target = i as f64 * dx;
        let (mut lo, mut hi) = (r[i - 1], data.a0());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if data.mass_coordinate(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x.push(target);
        r.push(0.5 * (lo + hi));
    }
    x.push(total);
    r.push(data.a0());
    let u = r.iter().map(|&ri| data.u0(ri)).collect();
    LagrangianState::from_radii(x, r, u, 0.0)
}

/// Node accelerations `-4π x_i / r_i²`; node 0 carries no mass and gets 0.
pub fn gravity_acceleration(state: &LagrangianState, model: &GasModel) -> Vec<f64> {
    let mut g = vec![0.0; state.x.len()];
    if !model.gravity_enabled() {
        return g;
    }
    for i in 1..g.len() {
        let r = state.r[i];
        g[i] = -4.0 * PI * state.x[i] / (r * r);
    }
    g
}

/// `cfl · min_j Δr_j / (c_j + |u|)`, clamped to `[dt_min, dt_max]`.
pub fn choose_dt(state: &LagrangianState, model: &GasModel, config: &SolverConfig) -> f64 {
    let mut dt = f64::INFINITY;
    for j in 0..state.cells() {
        let width = state.r[j + 1] - state.r[j];
        let speed = model.sound_speed(state.rho[j]) + state.u[j].abs().max(state.u[j + 1].abs());
        if speed > 0.0 {
            dt = dt.min(width / speed);
        }
    }
    (config.cfl * dt).clamp(config.dt_min, config.dt_max)
}

/// Thomas algorithm for `sub[i] y[i-1] + diag[i] y[i] + sup[i] y[i+1] = rhs[i]`.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut y = vec![0.0; n];
    y[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        y[i] = d[i] - c[i] * y[i + 1];
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: LagrangianState,
    pub dt: f64,
    /// Quadrature of `ν ∫(div u)² r² dr` over both viscous substeps.
    pub dissipation: f64,
    pub retries: u32,
}

enum Attempt {
    Accepted(LagrangianState, f64),
    Rejected(&'static str),
}

/// `-r_i² (P_i - P_{i-1}) / m_i + g_i` with the ghost pressure `P_N = 0`.
fn accelerations(x: &[f64], r: &[f64], rho: &[f64], mass: &[f64], model: &GasModel) -> Vec<f64> {
    let n = rho.len();
    let mut acc = vec![0.0; n + 1];
    for i in 1..=n {
        let right = if i < n { model.pressure_unchecked(rho[i]) } else { 0.0 };
        let left = model.pressure_unchecked(rho[i - 1]);
        acc[i] = -r[i] * r[i] * (right - left) / mass[i];
        if model.gravity_enabled() {
            acc[i] -= 4.0 * PI * x[i] / (r[i] * r[i]);
        }
    }
    acc
}

/// Lagrangian viscous operator `K` on nodes `1..=last`, symmetric and
/// negative semidefinite, with `-uᵀKu = ν Σ ρ_j ((u r²)_x)² Δx_j`.
struct ViscousOperator {
    mass: Vec<f64>,
    center: Vec<f64>,
    /// Coupling of node `i` to node `i-1`.
    left: Vec<f64>,
    last: usize,
}

impl ViscousOperator {
    fn new(state: &LagrangianState, model: &GasModel, mass: &[f64], last: usize) -> Self {
        let n = state.cells();
        let w: Vec<f64> = state.r.iter().map(|r| r * r).collect();
        let nu = model.nu();
        let k: Vec<f64> = (0..n).map(|j| nu * state.rho[j] / state.cell_mass(j)).collect();
        let mut center = vec![0.0; n + 1];
        let mut left = vec![0.0; n + 1];
        for i in 1..=n {
            let k_right = if i < n { k[i] } else { 0.0 };
            center[i] = -w[i] * w[i] * (k[i - 1] + k_right);
            left[i] = w[i] * k[i - 1] * w[i - 1];
        }
        Self { mass: mass.to_vec(), center, left, last }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 1..=self.last {
            let mut v = self.center[i] * u[i] + self.left[i] * u[i - 1];
            if i + 1 < u.len() {
                v += self.left[i + 1] * u[i + 1];
            }
            out[i] = v;
        }
        out
    }

    fn dissipation(&self, u: &[f64]) -> f64 {
        -self.apply(u).iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Solve `(M - c K) y = rhs` on the active nodes; `y_0 = 0` and inactive
    /// nodes keep `keep`.
    fn solve(&self, c: f64, rhs: &[f64], keep: &[f64]) -> Vec<f64> {
        let size = self.last;
        let mut sub = vec![0.0; size];
        let mut diag = vec![0.0; size];
        let mut sup = vec![0.0; size];
        for row in 0..size {
            let i = row + 1;
            diag[row] = self.mass[i] - c * self.center[i];
            if row > 0 {
                sub[row] = -c * self.left[i];
            }
            if row + 1 < size {
                sup[row] = -c * self.left[i + 1];
            }
        }
        let mut y = keep.to_vec();
        y[0] = 0.0;
        y[1..=size].copy_from_slice(&solve_tridiagonal(&sub, &diag, &sup, &rhs[1..=size]));
        y
    }

    fn mass_times(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.mass).map(|(u, m)| u * m).collect()
    }
}

/// Stage coefficient of the two-stage L-stable SDIRK method. The root
/// `1 + 1/√2` keeps the amplification factor in `[0, 1]`; a negative factor
/// flips stiff velocity modes and destabilises the kick-drift splitting.
const SDIRK_GAMMA: f64 = 1.0 + std::f64::consts::FRAC_1_SQRT_2;

/// Advance `M u_t = K u` by `h`; returns the velocity and `∫ν(div u)² r² dr`
/// over the substep.
fn viscous_update(op: &ViscousOperator, scheme: ViscousScheme, u0: &[f64], h: f64) -> (Vec<f64>, f64) {
    let mu0 = op.mass_times(u0);
    match scheme {
        ViscousScheme::Theta(theta) => {
            let ku = op.apply(u0);
            let rhs: Vec<f64> = mu0.iter().zip(&ku).map(|(m, k)| m + (1.0 - theta) * h * k).collect();
            let u1 = op.solve(theta * h, &rhs, u0);
            let mid: Vec<f64> = u1.iter().zip(u0).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
            let d = h * op.dissipation(&mid);
            (u1, d)
        }
        ViscousScheme::Sdirk2 => {
            let g = SDIRK_GAMMA;
            let s1 = op.solve(g * h, &mu0, u0);
            let k1 = op.apply(&s1);
            let rhs: Vec<f64> = mu0.iter().zip(&k1).map(|(m, k)| m + (1.0 - g) * h * k).collect();
            let s2 = op.solve(g * h, &rhs, u0);
            let d = h * ((1.0 - g) * op.dissipation(&s1) + g * op.dissipation(&s2));
            (s2, d)
        }
    }
}

/// Density-floor handling and node drift `r ← r + dt u`.
fn drift(state: &LagrangianState, u: &[f64], dt: f64, floor: f64) -> Option<LagrangianState> {
    let n = state.cells();
    let mut r: Vec<f64> = state.r.iter().zip(u).map(|(r, u)| r + dt * u).collect();
    r[0] = state.eps;
    if r.windows(2).any(|p| !(p[1] > p[0])) || r.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let outer = state.cell_mass(n - 1);
    if 3.0 * outer / (cube(r[n]) - cube(r[n - 1])) < floor {
        r[n] = (cube(r[n - 1]) + 3.0 * outer / floor).cbrt();
    }
    let rho = crate::model::density_from_radii(&state.x, &r);
    Some(LagrangianState {
        x: state.x.clone(),
        rho,
        u: u.to_vec(),
        r,
        time: state.time + dt,
        eps: state.eps,
        a: state.a + dt * u[n],
    })
}

fn kick(u: &[f64], acc: &[f64], h: f64, wall: bool) -> Vec<f64> {
    let mut out: Vec<f64> = u.iter().zip(acc).map(|(u, a)| u + h * a).collect();
    out[0] = 0.0;
    if wall {
        let n = out.len() - 1;
        out[n] = 0.0;
    }
    out
}

/// Symmetric splitting: half kick, half viscous step, drift, half viscous
/// step on the new geometry, half kick.
fn attempt(state: &LagrangianState, model: &GasModel, config: &SolverConfig, floor: f64, dt: f64) -> Attempt {
    let n = state.cells();
    let wall = config.outer_boundary == OuterBoundary::Wall;
    let last = if wall { n - 1 } else { n };
    let mass: Vec<f64> = (0..=n).map(|i| state.node_mass(i)).collect();
    let scheme = config.viscous;

    let acc = accelerations(&state.x, &state.r, &state.rho, &mass, model);
    let u = kick(&state.u, &acc, 0.5 * dt, wall);
    let (u, d1) = viscous_update(&ViscousOperator::new(state, model, &mass, last), scheme, &u, 0.5 * dt);
    if u.iter().any(|v| !v.is_finite()) {
        return Attempt::Rejected("non-finite velocity");
    }
    let Some(moved) = drift(state, &u, dt, floor) else {
        return Attempt::Rejected("shell crossing");
    };
    let (u, d2) = viscous_update(&ViscousOperator::new(&moved, model, &mass, last), scheme, &u, 0.5 * dt);
    let acc = accelerations(&moved.x, &moved.r, &moved.rho, &mass, model);
    let u = kick(&u, &acc, 0.5 * dt, wall);
    if u.iter().any(|v| !v.is_finite()) {
        return Attempt::Rejected("non-finite velocity");
    }
    Attempt::Accepted(LagrangianState { u, ..moved }, d1 + d2)
}

/// One step with `dt = min(choose_dt, dt_cap)`, halving on rejection.
pub fn step_capped(
    state: &LagrangianState,
    model: &GasModel,
    config: &SolverConfig,
    floor: f64,
    dt_cap: f64,
) -> Result<StepOutcome> {
    let mut dt = choose_dt(state, model, config).min(dt_cap);
    let mut retries = 0;
    loop {
        match attempt(state, model, config, floor, dt) {
            Attempt::Accepted(next, dissipation) => {
                return Ok(StepOutcome { state: next, dt, dissipation, retries });
            }
            Attempt::Rejected(reason) => {
                dt *= 0.5;
                retries += 1;
                if dt < config.dt_min {
                    return Err(Error::DtUnderflow { time: state.time, dt, reason: reason.to_string() });
                }
            }
        }
    }
}

/// One step with the controller's `dt`; the density floor is taken relative
/// to the current maximum density.
pub fn step(state: &LagrangianState, model: &GasModel, config: &SolverConfig) -> Result<(LagrangianState, f64)> {
    let floor = config.density_floor * state.rho.iter().copied().fold(0.0, f64::max);
    let out = step_capped(state, model, config, floor, f64::INFINITY)?;
    Ok((out.state, out.dt))
}

#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub records: Vec<DiagnosticsRecord>,
    pub initial_state: LagrangianState,
    pub final_state: LagrangianState,
    pub steps: usize,
    pub rejected_steps: usize,
}

impl TimeSeries {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn boundary_radius(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.a).collect()
    }

    pub fn running_max(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.a1).collect()
    }

    pub fn max_boundary_gap(&self) -> f64 {
        self.records.iter().map(|r| r.boundary_gap).fold(0.0, f64::max)
    }
}

/// Envelope tracking parameters for [`run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSpec {
    pub e0: f64,
    pub c_gamma: f64,
    pub x_min_fraction: f64,
}

/// Integrate to `t_end`, recording at every output interval.
pub fn run(initial: &InitialData, model: &GasModel, config: &SolverConfig, monitor: Option<MonitorSpec>) -> Result<TimeSeries> {
    run_with(initial, model, config, monitor, |_, _| Ok(()))
}

/// Like [`run`], calling `observe` with every recorded state.
pub fn run_with(
    initial: &InitialData,
    model: &GasModel,
    config: &SolverConfig,
    monitor: Option<MonitorSpec>,
    mut observe: impl FnMut(&LagrangianState, &DiagnosticsRecord) -> Result<()>,
) -> Result<TimeSeries> {
    config.validate()?;
    if (initial.eps() - config.eps_radius).abs() > 1e-15 * initial.a0() {
        return Err(Error::config("eps_radius", "initial data were built with a different cutoff"));
    }
    let state0 = eulerian_to_lagrangian(initial, config.n_cells)?;
    let monitor = monitor.map(|m| EnvelopeMonitor::new(&state0, m.e0, m.c_gamma, m.x_min_fraction));
    let floor = config.density_floor * state0.rho.iter().copied().fold(0.0, f64::max);

    let mut dissipation = 0.0;
    let mut weighted = 0.0;
    let mut a1 = state0.a;
    let first = DiagnosticsRecord::evaluate(&state0, model, 0.0, 0.0, a1, monitor.as_ref());
    observe(&state0, &first)?;
    let mut records = vec![first];
    let mut state = state0.clone();
    let mut steps = 0;
    let mut rejected = 0;
    let mut k = 1u64;
    while state.time < config.t_end {
        let target = (k as f64 * config.output_interval).min(config.t_end);
        while state.time < target {
            let out = step_capped(&state, model, config, floor, target - state.time)?;
            steps += 1;
            rejected += out.retries as usize;
            dissipation += out.dissipation;
            weighted = weighted_pressure_integral(weighted, &out.state, model, out.dt);
            state = out.state;
            if target - state.time <= 1e-12 * target.max(1.0) {
                state = state.with_time(target);
            }
            a1 = a1.max(state.a);
        }
        let rec = DiagnosticsRecord::evaluate(&state, model, dissipation, weighted, a1, monitor.as_ref());
        observe(&state, &rec)?;
        records.push(rec);
        k += 1;
    }
    Ok(TimeSeries { records, initial_state: state0, final_state: state, steps, rejected_steps: rejected })
}
