//! Gas parameters, equation of state, and the mass-coordinate state shared by
//! the solver and the diagnostics.
//!
//! Cells carry density, nodes carry mass coordinate, radius and velocity.
//! Node `i` sits between cells `i-1` and `i`; node 0 is the inner cutoff and
//! node `N` the free boundary.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Distance from 4/3 below which an exponent is treated as exactly 4/3.
pub const CRITICAL_GAMMA_TOL: f64 = 1e-9;

pub const GAMMA_CRITICAL: f64 = 4.0 / 3.0;
pub const GAMMA_LOWER: f64 = 6.0 / 5.0;

/// Snap exponents within [`CRITICAL_GAMMA_TOL`] of 4/3 onto 4/3.
pub fn snap_gamma(gamma: f64) -> f64 {
    if (gamma - GAMMA_CRITICAL).abs() <= CRITICAL_GAMMA_TOL {
        GAMMA_CRITICAL
    } else {
        gamma
    }
}

pub fn is_critical_gamma(gamma: f64) -> bool {
    (gamma - GAMMA_CRITICAL).abs() <= CRITICAL_GAMMA_TOL
}

/// True when `gamma` lies in (6/5, 4/3], the range covered by the energy bounds.
pub fn in_admissible_range(gamma: f64) -> bool {
    let g = snap_gamma(gamma);
    g > GAMMA_LOWER && g <= GAMMA_CRITICAL
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasModel {
    gamma: f64,
    kappa: f64,
    mu: f64,
    lambda: f64,
    gravity: bool,
}

impl GasModel {
    /// Polytropic gas with `kappa = 1` and gravity on. Accepts `gamma` in (1, 2].
    pub fn new(gamma: f64, mu: f64, lambda: f64) -> Result<Self> {
        let gamma = snap_gamma(gamma);
        if !(gamma > 1.0 && gamma <= 2.0) {
            return Err(Error::domain(format!("gamma = {gamma} outside (1, 2]")));
        }
        if !(mu > 0.0) {
            return Err(Error::domain(format!("mu = {mu} must be positive")));
        }
        if !(2.0 * mu + 3.0 * lambda >= 0.0) {
            return Err(Error::domain(format!(
                "2 mu + 3 lambda = {} is negative",
                2.0 * mu + 3.0 * lambda
            )));
        }
        Ok(Self { gamma, kappa: 1.0, mu, lambda, gravity: true })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::domain(format!("kappa = {kappa} must be positive")));
        }
        self.kappa = kappa;
        Ok(self)
    }

    pub fn with_gravity(mut self, enabled: bool) -> Self {
        self.gravity = enabled;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gravity_enabled(&self) -> bool {
        self.gravity
    }

    /// Bulk coefficient `lambda + 2 mu` multiplying the velocity divergence.
    pub fn nu(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }

    pub fn in_admissible_range(&self) -> bool {
        in_admissible_range(self.gamma)
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        if rho < 0.0 || rho.is_nan() {
            return Err(Error::domain(format!("negative density {rho}")));
        }
        Ok(self.pressure_unchecked(rho))
    }

    #[inline]
    pub(crate) fn pressure_unchecked(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            0.0
        } else {
            self.kappa * rho.powf(self.gamma)
        }
    }

    pub fn sound_speed(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            0.0
        } else {
            (self.gamma * self.kappa * rho.powf(self.gamma - 1.0)).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianState {
    pub(crate) x: Vec<f64>,
    pub(crate) rho: Vec<f64>,
    pub(crate) u: Vec<f64>,
    pub(crate) r: Vec<f64>,
    pub(crate) time: f64,
    pub(crate) eps: f64,
    pub(crate) a: f64,
}

/// `r3[i] = eps^3 + 3 sum_{j<i} dx_j / rho_j`, rounded back to radii.
fn radii_from_density(x: &[f64], rho: &[f64], eps: f64) -> Vec<f64> {
    let mut r = Vec::with_capacity(x.len());
    let mut r3 = eps * eps * eps;
    r.push(eps);
    for (j, w) in x.windows(2).enumerate() {
        r3 += 3.0 * (w[1] - w[0]) / rho[j];
        r.push(r3.cbrt());
    }
    r
}

pub(crate) fn density_from_radii(x: &[f64], r: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(r.windows(2))
        .map(|(xw, rw)| 3.0 * (xw[1] - xw[0]) / (cube(rw[1]) - cube(rw[0])))
        .collect()
}

#[inline]
pub(crate) fn cube(v: f64) -> f64 {
    v * v * v
}

impl LagrangianState {
    /// Build from node mass coordinates and cell densities; radii follow from
    /// the cumulative volume relation.
    pub fn from_density(x: Vec<f64>, rho: Vec<f64>, u: Vec<f64>, eps: f64, time: f64) -> Result<Self> {
        if rho.len() + 1 != x.len() {
            return Err(Error::State("need one more node than cells".into()));
        }
        if rho.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::State("cell densities must be positive and finite".into()));
        }
        let r = radii_from_density(&x, &rho, eps);
        Self::from_radii(x, r, u, time)
    }

    /// Build from node radii; densities are the exact cell averages.
    pub fn from_radii(x: Vec<f64>, r: Vec<f64>, mut u: Vec<f64>, time: f64) -> Result<Self> {
        let n = x.len();
        if n < 2 || r.len() != n || u.len() != n {
            return Err(Error::State("x, r and u must have equal length >= 2".into()));
        }
        if x[0] != 0.0 {
            return Err(Error::State("x[0] must be 0".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::State("mass coordinates must increase strictly".into()));
        }
        if !(r[0] >= 0.0) || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::State("radii must be nonnegative and strictly increasing".into()));
        }
        u[0] = 0.0;
        let rho = density_from_radii(&x, &r);
        let eps = r[0];
        let a = r[n - 1];
        Ok(Self { x, rho, u, r, time, eps, a })
    }

    pub fn cells(&self) -> usize {
        self.rho.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Boundary radius advanced by its own ODE; compare with [`Self::outer_radius`].
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Radius of the outermost node, rebuilt from the densities.
    pub fn outer_radius(&self) -> f64 {
        self.r[self.r.len() - 1]
    }

    pub fn boundary_gap(&self) -> f64 {
        (self.outer_radius() - self.a).abs()
    }

    pub fn cell_mass(&self, j: usize) -> f64 {
        self.x[j + 1] - self.x[j]
    }

    /// Mass lumped onto node `i` (half of each adjacent cell).
    pub fn node_mass(&self, i: usize) -> f64 {
        let n = self.cells();
        let left = if i > 0 { self.cell_mass(i - 1) } else { 0.0 };
        let right = if i < n { self.cell_mass(i) } else { 0.0 };
        0.5 * (left + right)
    }

    /// `(r_{j+1}^3 - r_j^3)/3`, the cell volume divided by 4 pi.
    pub fn cell_volume(&self, j: usize) -> f64 {
        (cube(self.r[j + 1]) - cube(self.r[j])) / 3.0
    }

    /// Radius splitting the cell volume in half.
    pub fn cell_center_radius(&self, j: usize) -> f64 {
        (0.5 * (cube(self.r[j]) + cube(self.r[j + 1]))).cbrt()
    }

    pub fn cell_center_x(&self, j: usize) -> f64 {
        0.5 * (self.x[j] + self.x[j + 1])
    }

    pub fn total_mass_coordinate(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Physical mass `4 pi sum rho_j V_j` rebuilt from densities and radii.
    pub fn eulerian_mass(&self) -> f64 {
        4.0 * PI * (0..self.cells()).map(|j| self.rho[j] * self.cell_volume(j)).sum::<f64>()
    }

    /// Largest relative defect of `r_{j+1}^3 - r_j^3 = 3 dx_j / rho_j`.
    pub fn geometry_defect(&self) -> f64 {
        (0..self.cells())
            .map(|j| {
                let lhs = cube(self.r[j + 1]) - cube(self.r[j]);
                let rhs = 3.0 * self.cell_mass(j) / self.rho[j];
                ((lhs - rhs) / rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `(u r^2)_x` per cell.
    pub fn volume_rate(&self) -> Vec<f64> {
        (0..self.cells())
            .map(|j| {
                let ur2_hi = self.u[j + 1] * self.r[j + 1] * self.r[j + 1];
                let ur2_lo = self.u[j] * self.r[j] * self.r[j];
                (ur2_hi - ur2_lo) / self.cell_mass(j)
            })
            .collect()
    }

    pub fn with_velocity(&self, u: Vec<f64>) -> Result<Self> {
        if u.len() != self.u.len() {
            return Err(Error::State("velocity length mismatch".into()));
        }
        let mut next = self.clone();
        next.u = u;
        next.u[0] = 0.0;
        Ok(next)
    }

    pub(crate) fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub(crate) fn with_boundary(mut self, a: f64) -> Self {
        self.a = a;
        self
    }
}

/// Effective viscous flux `F = P - nu rho (u r^2)_x` per cell. The free
/// boundary carries the ghost value `F = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub cells: Vec<f64>,
}

impl StressField {
    pub const GHOST: f64 = 0.0;

    /// `|F|` in the cell adjacent to the vacuum.
    pub fn boundary_residual(&self) -> f64 {
        self.cells.last().map_or(0.0, |f| f.abs())
    }
}

pub fn pressure(rho: f64, model: &GasModel) -> Result<f64> {
    model.pressure(rho)
}

pub fn stress(state: &LagrangianState, model: &GasModel) -> StressField {
    let nu = model.nu();
    let cells = state
        .volume_rate()
        .iter()
        .zip(&state.rho)
        .map(|(&d, &rho)| model.pressure_unchecked(rho) - nu * rho * d)
        .collect();
    StressField { cells }
}
