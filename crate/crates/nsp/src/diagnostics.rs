//! Monitored functionals on a [`LagrangianState`]: energies, the virial-type
//! functionals `H` and `Y`, transport envelopes, particle-path bounds, the
//! weighted pressure integral and expansion-rate fits.
//!
//! Integrals against `ρ r² dr` are sums over mass cells. Kinetic energy is
//! lumped onto nodes like the momentum update. Integrals that involve the
//! enclosed mass `x(r)` are evaluated exactly for cell-wise constant density,
//! where `x(r) = x_j + ρ_j (r³ - r_j³)/3` inside cell `j`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{cube, GasModel, LagrangianState};

/// `hi^k - lo^k` without cancellation for thin shells.
fn pow_diff(hi: f64, lo: f64, k: i32) -> f64 {
    let mut sum = 0.0;
    for i in 0..k {
        sum += hi.powi(k - 1 - i) * lo.powi(i);
    }
    (hi - lo) * sum
}

pub fn kinetic_energy(state: &LagrangianState) -> f64 {
    (1..=state.cells()).map(|i| 0.5 * state.node_mass(i) * state.u[i] * state.u[i]).sum()
}

/// `∫P(ρ) r² dr`.
pub fn pressure_integral(state: &LagrangianState, model: &GasModel) -> f64 {
    (0..state.cells()).map(|j| model.pressure_unchecked(state.rho[j]) * state.cell_volume(j)).sum()
}

pub fn internal_energy(state: &LagrangianState, model: &GasModel) -> f64 {
    pressure_integral(state, model) / (model.gamma() - 1.0)
}

/// `4π ∫ ρ r ∫_ε^r ρ s² ds dr`.
pub fn gravitational_energy(state: &LagrangianState) -> f64 {
    let mut total = 0.0;
    for j in 0..state.cells() {
        let (lo, hi) = (state.r[j], state.r[j + 1]);
        let rho = state.rho[j];
        let base = state.x[j] - rho * cube(lo) / 3.0;
        total += rho * (base * pow_diff(hi, lo, 2) / 2.0 + rho * pow_diff(hi, lo, 5) / 15.0);
    }
    4.0 * PI * total
}

/// `∫ x(r)² / r² dr` over the support.
fn enclosed_square_integral(state: &LagrangianState) -> f64 {
    let mut total = 0.0;
    for j in 0..state.cells() {
        let (lo, hi) = (state.r[j], state.r[j + 1]);
        let k = state.rho[j] / 3.0;
        let c = state.x[j] - k * cube(lo);
        let inverse = if c == 0.0 { 0.0 } else { c * c * (hi - lo) / (hi * lo) };
        total += inverse + c * k * pow_diff(hi, lo, 2) + k * k * pow_diff(hi, lo, 5) / 5.0;
    }
    total
}

/// Field form `(1/8π)∫r²Φ_r² dr + (2π/a)(∫ρr² dr)²` of the gravitational energy.
pub fn gravitational_energy_field_form(state: &LagrangianState) -> f64 {
    let xm = state.total_mass_coordinate();
    2.0 * PI * enclosed_square_integral(state) + 2.0 * PI * xm * xm / state.outer_radius()
}

/// `ν ∫ (u_r + 2u/r)² r² dr = ν Σ ρ_j ((u r²)_x)² Δx_j`.
pub fn dissipation_rate(state: &LagrangianState, model: &GasModel) -> f64 {
    state
        .volume_rate()
        .iter()
        .enumerate()
        .map(|(j, d)| state.rho[j] * d * d * state.cell_mass(j))
        .sum::<f64>()
        * model.nu()
}

pub fn mean_pressure(state: &LagrangianState, model: &GasModel) -> f64 {
    pressure_integral(state, model) / cube(state.outer_radius())
}

fn cell_center_velocity(state: &LagrangianState, j: usize) -> f64 {
    0.5 * (state.u[j] + state.u[j + 1])
}

fn h_tail(state: &LagrangianState, model: &GasModel, t: f64) -> f64 {
    let w = (1.0 + t) * (1.0 + t);
    2.0 / (model.gamma() - 1.0) * w * pressure_integral(state, model) - w * 4.0 * PI * enclosed_square_integral(state)
}

/// `∫(r - (1+t)u)² ρ r² dr + (2/(γ-1))(1+t)² ∫P r² dr - (1+t)² ∫(4π/r²)(∫ρs²ds)² dr`.
pub fn h_functional(state: &LagrangianState, model: &GasModel, t: f64) -> f64 {
    let moment: f64 = (0..state.cells())
        .map(|j| {
            let d = state.cell_center_radius(j) - (1.0 + t) * cell_center_velocity(state, j);
            d * d * state.cell_mass(j)
        })
        .sum();
    moment + h_tail(state, model, t)
}

/// Expanded form of [`h_functional`] with the square multiplied out.
pub fn h_functional_expanded(state: &LagrangianState, model: &GasModel, t: f64) -> f64 {
    let (mut r4, mut ur3, mut u2) = (0.0, 0.0, 0.0);
    for j in 0..state.cells() {
        let r = state.cell_center_radius(j);
        let u = cell_center_velocity(state, j);
        let dx = state.cell_mass(j);
        r4 += r * r * dx;
        ur3 += u * r * dx;
        u2 += u * u * dx;
    }
    r4 - 2.0 * (1.0 + t) * ur3 + (1.0 + t) * (1.0 + t) * u2 + h_tail(state, model, t)
}

/// `Y = H - (M²/4π)(1+t)²/a`.
pub fn y_functional(state: &LagrangianState, model: &GasModel, t: f64) -> f64 {
    let m = 4.0 * PI * state.total_mass_coordinate();
    h_functional(state, model, t) - m * m / (4.0 * PI) * (1.0 + t) * (1.0 + t) / state.outer_radius()
}

/// `∫ρ^{2γ} r^{12} dr`, exact for cell-wise constant density.
pub fn weighted_pressure_density(state: &LagrangianState, model: &GasModel) -> f64 {
    let g2 = 2.0 * model.gamma();
    (0..state.cells())
        .map(|j| state.rho[j].powf(g2) * pow_diff(state.r[j + 1], state.r[j], 13) / 13.0)
        .sum()
}

pub fn weighted_pressure_integral(accumulator: f64, state: &LagrangianState, model: &GasModel, dt: f64) -> f64 {
    accumulator + dt * weighted_pressure_density(state, model)
}

/// Inputs of the transport envelope at one mass coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeInputs {
    pub e0: f64,
    pub mass: f64,
    pub c_gamma: f64,
    /// `‖ρ₀‖_∞`.
    pub rho0_max: f64,
}

/// `(C_{x,T}, c_{x,T})`.
pub fn envelope_constants(x: f64, t: f64, model: &GasModel, inputs: &EnvelopeInputs) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("x = {x} must be positive")));
    }
    if !(inputs.c_gamma > 0.0) || !(inputs.e0 > 0.0) {
        return Err(Error::domain("envelope needs C_gamma > 0 and E0 > 0"));
    }
    let g = model.gamma();
    let gm1 = g - 1.0;
    let ratio = inputs.e0 / inputs.c_gamma;
    let m = inputs.mass;
    let first = 2.0
        * inputs.c_gamma.powf(-2.0 / (3.0 * gm1))
        * (m / PI).sqrt()
        * inputs.e0.powf((3.0 * g + 1.0) / (6.0 * gm1))
        * x.powf(-2.0 * g / (3.0 * gm1));
    let second = 4.0 * t * ratio.powf(g / gm1) * x.powf(-g / gm1);
    let third = m * m / (4.0 * PI) * t * ratio.powf(4.0 / (3.0 * gm1)) * x.powf(-4.0 * g / (3.0 * gm1));
    let big = first + second + third;
    let small = big + t * model.pressure_unchecked(inputs.rho0_max) * (g * big / model.nu()).exp();
    Ok((big, small))
}

/// `[ρ₀ e^{-c/ν}, ρ₀ e^{C/ν}]`.
pub fn transport_envelope(
    x: f64,
    t: f64,
    model: &GasModel,
    inputs: &EnvelopeInputs,
    rho0: f64,
) -> Result<(f64, f64)> {
    let (big, small) = envelope_constants(x, t, model, inputs)?;
    let nu = model.nu();
    Ok((rho0 * (-small / nu).exp(), rho0 * (big / nu).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PathReport {
    pub node_violations: usize,
    pub pair_violations: usize,
    pub pairs_checked: usize,
}

impl PathReport {
    pub fn total(&self) -> usize {
        self.node_violations + self.pair_violations
    }
}

/// Nodes sampled for the pairwise check, in addition to all adjacent pairs.
const PATH_PAIR_SAMPLES: usize = 48;

/// Lower bounds on `r(x)` and on shell volumes `r³(x₂) - r³(x₁)` implied by
/// the energy bound. Requires `C_γ > 0`.
pub fn path_lower_bounds(state: &LagrangianState, model: &GasModel, e0: f64, c_gamma: f64) -> Result<PathReport> {
    if !(c_gamma > 0.0) || !(e0 > 0.0) {
        return Err(Error::domain("path bounds need C_gamma > 0 and E0 > 0"));
    }
    let gm1 = model.gamma() - 1.0;
    let g = model.gamma();
    let ratio = e0 / c_gamma;
    let node_bound = |x: f64| ratio.powf(-1.0 / (3.0 * gm1)) * x.powf(g / (3.0 * gm1));
    let pair_bound = |dx: f64| ratio.powf(-1.0 / gm1) * dx.powf(g / gm1);

    let mut report = PathReport::default();
    for (x, r) in state.x.iter().zip(&state.r) {
        if node_bound(*x) > *r {
            report.node_violations += 1;
        }
    }
    let check = |i: usize, k: usize, report: &mut PathReport| {
        report.pairs_checked += 1;
        let shell = cube(state.r[k]) - cube(state.r[i]);
        if pair_bound(state.x[k] - state.x[i]) > shell {
            report.pair_violations += 1;
        }
    };
    let n = state.cells();
    for i in 0..n {
        check(i, i + 1, &mut report);
    }
    let stride = (n / PATH_PAIR_SAMPLES).max(1);
    let sample: Vec<usize> = (0..=n).step_by(stride).collect();
    for (a, &i) in sample.iter().enumerate() {
        for &k in &sample[a + 1..] {
            if k > i + 1 {
                check(i, k, &mut report);
            }
        }
    }
    Ok(report)
}

/// Envelope bookkeeping for cells whose centre lies above `x_min`.
#[derive(Debug, Clone)]
pub struct EnvelopeMonitor {
    pub inputs: EnvelopeInputs,
    pub x_min: f64,
    pub rho0: Vec<f64>,
}

impl EnvelopeMonitor {
    /// `x_min_fraction` is relative to the total mass coordinate `M/4π`.
    pub fn new(initial: &LagrangianState, e0: f64, c_gamma: f64, x_min_fraction: f64) -> Self {
        let rho0_max = initial.rho.iter().copied().fold(0.0, f64::max);
        Self {
            inputs: EnvelopeInputs { e0, mass: initial.eulerian_mass(), c_gamma, rho0_max },
            x_min: x_min_fraction * initial.total_mass_coordinate(),
            rho0: initial.rho.clone(),
        }
    }

    pub fn applicable(&self) -> bool {
        self.inputs.c_gamma > 0.0 && self.inputs.e0 > 0.0
    }

    /// Cells outside `[ρ₀e^{-c/ν}, ρ₀e^{C/ν}]` with `T = t`.
    pub fn violations(&self, state: &LagrangianState, model: &GasModel) -> usize {
        if !self.applicable() {
            return 0;
        }
        let t = state.time;
        (0..state.cells())
            .filter(|&j| state.cell_center_x(j) >= self.x_min)
            .filter(|&j| {
                let x = state.cell_center_x(j);
                let (lo, hi) = transport_envelope(x, t, model, &self.inputs, self.rho0[j]).expect("x > 0");
                let rho = state.rho[j];
                rho < lo || rho > hi
            })
            .count()
    }

    pub fn path_violations(&self, state: &LagrangianState, model: &GasModel) -> usize {
        if !self.applicable() {
            return 0;
        }
        path_lower_bounds(state, model, self.inputs.e0, self.inputs.c_gamma).map_or(0, |r| r.total())
    }
}

/// Scalars reported at every output time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub a: f64,
    pub a1: f64,
    pub mass: f64,
    pub e_total: f64,
    pub e_kin: f64,
    pub e_int: f64,
    pub e_grav: f64,
    pub dissipation_cum: f64,
    pub h: f64,
    pub y: f64,
    pub mean_pressure: f64,
    pub pressure_integral: f64,
    pub weighted_pressure_cum: f64,
    pub envelope_violations: usize,
    pub path_violations: usize,
    pub boundary_gap: f64,
    pub boundary_stress: f64,
    pub outer_radius: f64,
}

impl DiagnosticsRecord {
    /// Energies and functionals of `state`; the accumulated quantities come
    /// from the caller.
    pub fn evaluate(
        state: &LagrangianState,
        model: &GasModel,
        dissipation_cum: f64,
        weighted_pressure_cum: f64,
        a1: f64,
        monitor: Option<&EnvelopeMonitor>,
    ) -> Self {
        let t = state.time;
        let e_kin = kinetic_energy(state);
        let s = pressure_integral(state, model);
        let e_int = s / (model.gamma() - 1.0);
        let e_grav = if model.gravity_enabled() { gravitational_energy(state) } else { 0.0 };
        Self {
            t,
            a: state.a,
            a1,
            mass: state.eulerian_mass(),
            e_total: e_kin + e_int - e_grav,
            e_kin,
            e_int,
            e_grav,
            dissipation_cum,
            h: h_functional(state, model, t),
            y: y_functional(state, model, t),
            mean_pressure: s / cube(state.outer_radius()),
            pressure_integral: s,
            weighted_pressure_cum,
            envelope_violations: monitor.map_or(0, |m| m.violations(state, model)),
            path_violations: monitor.map_or(0, |m| m.path_violations(state, model)),
            boundary_gap: state.boundary_gap(),
            boundary_stress: crate::model::stress(state, model).boundary_residual(),
            outer_radius: state.outer_radius(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionFit {
    pub t_lo: f64,
    pub t_hi: f64,
    pub beta_hat: f64,
    pub beta_bound: Option<f64>,
    pub residual: f64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Lower-bound exponent for `a₁`: `(6γ-7)/(3γ)`, or 1/4 at γ = 4/3.
pub fn expansion_exponent(gamma: f64) -> f64 {
    if crate::model::is_critical_gamma(gamma) {
        0.25
    } else {
        (6.0 * gamma - 7.0) / (3.0 * gamma)
    }
}

/// Least-squares slope of `ln a₁` against `ln(1+t)` over `[t_lo, t_hi]`.
pub fn fit_expansion(times: &[f64], a1: &[f64], t_lo: f64, t_hi: f64, gamma: Option<f64>) -> Result<ExpansionFit> {
    if !(t_lo < t_hi) {
        return Err(Error::domain(format!("window [{t_lo}, {t_hi}] is empty")));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(a1)
        .filter(|(t, _)| **t >= t_lo && **t <= t_hi)
        .map(|(t, a)| ((1.0 + t).ln(), a.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_FIT_SAMPLES, found: pts.len(), t_lo, t_hi });
    }
    if pts.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::domain("a1 must be positive inside the window"));
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let beta = sxy / sxx;
    let residual = (pts.iter().map(|p| (p.1 - ym - beta * (p.0 - xm)).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ExpansionFit {
        t_lo,
        t_hi,
        beta_hat: beta,
        beta_bound: gamma.map(expansion_exponent),
        residual,
        samples: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::eulerian_to_lagrangian;
    use crate::stationary::{hydrostatic_initial_data, perturbed_initial_data, solve_lane_emden, VelocityShape};

    fn model() -> GasModel {
        GasModel::new(4.0 / 3.0, 0.1, 0.0).unwrap()
    }

    fn uniform_ball(n: usize, rho: f64, radius: f64) -> LagrangianState {
        let total = rho * radius.powi(3) / 3.0;
        let x: Vec<f64> = (0..=n).map(|i| total * i as f64 / n as f64).collect();
        LagrangianState::from_density(x, vec![rho; n], vec![0.0; n + 1], 0.0, 0.0).unwrap()
    }

    fn moving_star() -> LagrangianState {
        let m = model();
        let profile = solve_lane_emden(4.0 / 3.0, 1e-10).unwrap();
        let base = hydrostatic_initial_data(&profile, 1.0, 0.0, &m, None).unwrap();
        let data = perturbed_initial_data(&base, 0.05, VelocityShape::Cubic, &m).unwrap();
        eulerian_to_lagrangian(&data, 120).unwrap()
    }

    #[test]
    fn uniform_ball_energies() {
        let (rho, radius) = (2.0, 1.5);
        let state = uniform_ball(1000, rho, radius);
        let w = gravitational_energy(&state);
        let exact = 4.0 * PI * rho * rho * radius.powi(5) / 15.0;
        assert!(((w - exact) / exact).abs() < 1e-8);
        let s = pressure_integral(&state, &model());
        let p = rho.powf(4.0 / 3.0);
        assert!(((s - p * radius.powi(3) / 3.0) / s).abs() < 1e-12);
        assert!((internal_energy(&state, &model()) - 3.0 * s).abs() < 1e-12 * s);
        assert!((mean_pressure(&state, &model()) - p / 3.0).abs() < 1e-12);
    }

    #[test]
    fn field_form_matches_direct_form() {
        let state = moving_star();
        let direct = gravitational_energy(&state);
        let field = gravitational_energy_field_form(&state);
        assert!(((direct - field) / direct).abs() < 1e-12, "{direct} vs {field}");
        let ball = uniform_ball(37, 0.7, 2.0);
        let (d, f) = (gravitational_energy(&ball), gravitational_energy_field_form(&ball));
        assert!(((d - f) / d).abs() < 1e-12);
    }

    #[test]
    fn homologous_flow_dissipation_is_exact() {
        let (rho, radius, alpha) = (1.3, 0.8, 0.25);
        let state = uniform_ball(25, rho, radius);
        let u: Vec<f64> = state.r().iter().map(|r| alpha * r).collect();
        let state = state.with_velocity(u).unwrap();
        let m = model();
        let exact = 3.0 * m.nu() * alpha * alpha * radius.powi(3);
        assert!((dissipation_rate(&state, &m) - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn h_forms_agree_and_y_subtracts_the_boundary_term() {
        let state = moving_star();
        let m = model();
        for t in [0.0, 1.0, 10.0] {
            let h = h_functional(&state, &m, t);
            let he = h_functional_expanded(&state, &m, t);
            assert!(((h - he) / h.abs()).abs() < 1e-10, "t = {t}");
            let mass = state.eulerian_mass();
            let y = y_functional(&state, &m, t);
            let expected = h - mass * mass / (4.0 * PI) * (1.0 + t).powi(2) / state.outer_radius();
            assert!((y - expected).abs() < 1e-10 * h.abs());
        }
    }

    #[test]
    fn weighted_pressure_step() {
        let (rho, radius) = (1.5, 0.9);
        let state = uniform_ball(30, rho, radius);
        let m = model();
        let density = rho.powf(8.0 / 3.0) * radius.powi(13) / 13.0;
        assert!((weighted_pressure_density(&state, &m) - density).abs() < 1e-12 * density);
        let next = weighted_pressure_integral(0.5, &state, &m, 0.01);
        assert!((next - (0.5 + 0.01 * density)).abs() < 1e-14);
    }

    fn inputs() -> EnvelopeInputs {
        EnvelopeInputs { e0: 0.2, mass: 1.7, c_gamma: 1.1, rho0_max: 0.5 }
    }

    #[test]
    fn envelope_constants_match_high_precision_values() {
        let m = GasModel::new(4.0 / 3.0, 0.1, 0.0).unwrap();
        let (big, small) = envelope_constants(0.3, 2.0, &m, &inputs()).unwrap();
        assert!((big - 1.9276043137542787841).abs() < 1e-12 * big);
        assert!((small - 302444.40011273550455).abs() < 1e-12 * small);
    }

    #[test]
    fn envelope_widens_in_time_and_closes_for_large_viscosity() {
        let m = model();
        let mut last = (f64::INFINITY, 0.0);
        for t in [0.0, 0.5, 1.0, 4.0] {
            let (lo, hi) = transport_envelope(0.3, t, &m, &inputs(), 1.0).unwrap();
            assert!(lo <= 1.0 && hi >= 1.0);
            assert!(lo <= last.0 && hi >= last.1);
            last = (lo, hi);
        }
        let thick = GasModel::new(4.0 / 3.0, 1e9, 0.0).unwrap();
        let (lo, hi) = transport_envelope(0.3, 1.0, &thick, &inputs(), 2.0).unwrap();
        assert!((lo - 2.0).abs() < 1e-6 && (hi - 2.0).abs() < 1e-6);
        assert!(envelope_constants(0.0, 1.0, &m, &inputs()).is_err());
    }

    #[test]
    fn path_bounds_flag_only_violations() {
        let state = uniform_ball(64, 1.0, 1.0);
        let m = model();
        let loose = path_lower_bounds(&state, &m, 1e6, 1.0).unwrap();
        assert_eq!(loose.total(), 0);
        assert!(loose.pairs_checked >= 64);
        let tight = path_lower_bounds(&state, &m, 1e-9, 1.0).unwrap();
        assert!(tight.total() > 0);
        assert!(path_lower_bounds(&state, &m, 1.0, 0.0).is_err());
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let times: Vec<f64> = (0..=200).map(|k| 0.5 * k as f64).collect();
        let power: Vec<f64> = times.iter().map(|t| 3.0 * (1.0 + t).powf(0.25)).collect();
        let fit = fit_expansion(&times, &power, 20.0, 100.0, Some(4.0 / 3.0)).unwrap();
        assert!((fit.beta_hat - 0.25).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.beta_bound, Some(0.25));
        assert_eq!(fit.samples, 161);
        let flat = vec![2.0; times.len()];
        assert!(fit_expansion(&times, &flat, 20.0, 100.0, None).unwrap().beta_hat.abs() < 1e-14);
        assert!(matches!(fit_expansion(&times, &flat, 1.0, 2.0, None), Err(Error::TooFewSamples { .. })));
        assert!(fit_expansion(&times, &flat, 5.0, 5.0, None).is_err());
    }

    #[test]
    fn expansion_exponents() {
        assert_eq!(expansion_exponent(4.0 / 3.0), 0.25);
        assert!((expansion_exponent(1.25) - (7.5 - 7.0) / 3.75).abs() < 1e-15);
    }
}
