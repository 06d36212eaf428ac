//! Lane–Emden polytropes and admissible initial data.
//!
//! The dimensionless equation `θ'' + (2/ξ)θ' + θⁿ = 0` is integrated with
//! classical RK4 on a uniform grid started from the power series at the centre.
//! Physical profiles use `ρ = ρ_c θⁿ(r/ℓ)` with
//! `ℓ² = (n+1) κ ρ_c^{1/n-1} / (4π)`; in these units the enclosed mass has the
//! closed form `∫₀^r ρ s² ds = -ρ_c ℓ³ ξ² θ'(ξ)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::GasModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneEmdenOptions {
    /// Target accuracy; sets the RK4 step to roughly `0.2 tol^{1/4}`.
    pub tol: f64,
    /// End of the series-start interval.
    pub xi0: f64,
    pub xi_max: f64,
}

impl Default for LaneEmdenOptions {
    fn default() -> Self {
        Self { tol: 1e-10, xi0: 1e-2, xi_max: 200.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Finite { xi1: f64, dtheta1: f64 },
    /// No zero before `xi_max` (index n ≥ 5).
    Infinite { xi_max: f64 },
}

#[derive(Debug, Clone)]
pub struct LaneEmdenProfile {
    gamma: f64,
    n: f64,
    step: f64,
    xi: Vec<f64>,
    theta: Vec<f64>,
    dtheta: Vec<f64>,
    support: Support,
    rho_c: f64,
    kappa: f64,
}

fn series(xi: f64, n: f64) -> (f64, f64) {
    let x2 = xi * xi;
    let c6 = n * (8.0 * n - 5.0) / 15120.0;
    let theta = 1.0 - x2 / 6.0 + n * x2 * x2 / 120.0 - c6 * x2 * x2 * x2;
    let dtheta = -xi / 3.0 + n * x2 * xi / 30.0 - 6.0 * c6 * x2 * x2 * xi;
    (theta, dtheta)
}

#[inline]
fn pow_pos(theta: f64, n: f64) -> f64 {
    if theta > 0.0 {
        theta.powf(n)
    } else {
        0.0
    }
}

#[inline]
fn second_derivative(xi: f64, theta: f64, dtheta: f64, n: f64) -> f64 {
    if xi == 0.0 {
        -1.0 / 3.0
    } else {
        -pow_pos(theta, n) - 2.0 * dtheta / xi
    }
}

fn rk4(xi: f64, y: (f64, f64), h: f64, n: f64) -> (f64, f64) {
    let f = |x: f64, t: f64, d: f64| (d, second_derivative(x, t, d, n));
    let k1 = f(xi, y.0, y.1);
    let k2 = f(xi + 0.5 * h, y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1);
    let k3 = f(xi + 0.5 * h, y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1);
    let k4 = f(xi + h, y.0 + h * k3.0, y.1 + h * k3.1);
    (
        y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

fn hermite(t: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let s = t / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

pub fn solve_lane_emden(gamma: f64, tol: f64) -> Result<LaneEmdenProfile> {
    solve_lane_emden_with(gamma, &LaneEmdenOptions { tol, ..Default::default() })
}

pub fn solve_lane_emden_with(gamma: f64, opts: &LaneEmdenOptions) -> Result<LaneEmdenProfile> {
    if !(gamma > 1.0 && gamma <= 2.0) {
        return Err(Error::domain(format!("gamma = {gamma} outside (1, 2]")));
    }
    if !(opts.tol > 0.0) || !(opts.xi_max > opts.xi0) || !(opts.xi0 > 0.0) {
        return Err(Error::domain("need tol > 0 and 0 < xi0 < xi_max"));
    }
    let n = 1.0 / (gamma - 1.0);
    let h = (0.2 * opts.tol.powf(0.25)).clamp(1e-4, 1e-2);
    let k_series = ((opts.xi0 / h).ceil() as usize).max(1);
    let k_max = (opts.xi_max / h).ceil() as usize;

    let mut xi = Vec::new();
    let mut theta = Vec::new();
    let mut dtheta = Vec::new();
    for k in 0..=k_series {
        let x = k as f64 * h;
        let (t, d) = series(x, n);
        xi.push(x);
        theta.push(t);
        dtheta.push(d);
    }

    let mut support = None;
    let mut k = k_series;
    while k < k_max {
        let x = k as f64 * h;
        let y = (theta[k], dtheta[k]);
        let next = rk4(x, y, h, n);
        if next.0 <= 0.0 {
            // Newton on the step length so that a single RK4 step lands on θ = 0.
            let mut delta = h * y.0 / (y.0 - next.0);
            let mut end = rk4(x, y, delta, n);
            for _ in 0..50 {
                let update = end.0 / end.1;
                delta -= update;
                end = rk4(x, y, delta, n);
                if update.abs() <= 1e-15 * (x + delta) {
                    break;
                }
            }
            xi.push(x + delta);
            theta.push(0.0);
            dtheta.push(end.1);
            support = Some(Support::Finite { xi1: x + delta, dtheta1: end.1 });
            break;
        }
        xi.push((k + 1) as f64 * h);
        theta.push(next.0);
        dtheta.push(next.1);
        k += 1;
    }

    let support = match support {
        Some(s) => s,
        None if n >= 5.0 - 1e-12 => Support::Infinite { xi_max: xi[xi.len() - 1] },
        None => return Err(Error::SupportNotFound { reached: xi[xi.len() - 1] }),
    };

    Ok(LaneEmdenProfile { gamma, n, step: h, xi, theta, dtheta, support, rho_c: 1.0, kappa: 1.0 })
}

/// Fraction of the support next to the zero left out of [`LaneEmdenProfile::ode_residual`].
const EDGE_BAND: f64 = 0.01;

impl LaneEmdenProfile {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dtheta(&self) -> &[f64] {
        &self.dtheta
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn xi1(&self) -> Option<f64> {
        match self.support {
            Support::Finite { xi1, .. } => Some(xi1),
            Support::Infinite { .. } => None,
        }
    }

    pub fn xi_end(&self) -> f64 {
        self.xi[self.xi.len() - 1]
    }

    pub fn rho_c(&self) -> f64 {
        self.rho_c
    }

    /// Same dimensionless solution with a different physical scaling.
    pub fn rescaled(&self, rho_c: f64, kappa: f64) -> Result<Self> {
        if !(rho_c > 0.0) || !(kappa > 0.0) {
            return Err(Error::domain("central density and kappa must be positive"));
        }
        let mut p = self.clone();
        p.rho_c = rho_c;
        p.kappa = kappa;
        Ok(p)
    }

    /// Radial length unit `ℓ`.
    pub fn length_scale(&self) -> f64 {
        ((self.n + 1.0) * self.kappa * self.rho_c.powf(1.0 / self.n - 1.0) / (4.0 * PI)).sqrt()
    }

    /// `ℓ ξ₁`, infinite for unbounded support.
    pub fn physical_radius(&self) -> f64 {
        self.xi1().map_or(f64::INFINITY, |x| x * self.length_scale())
    }

    /// `4π ℓ³ ρ_c ξ² |θ'|` at the zero, or at the end of the solved range.
    pub fn physical_mass(&self) -> f64 {
        let last = self.xi.len() - 1;
        let l = self.length_scale();
        4.0 * PI * l * l * l * self.rho_c * self.xi[last] * self.xi[last] * (-self.dtheta[last])
    }

    fn interval(&self, xi: f64) -> usize {
        let last = self.xi.len() - 2;
        ((xi / self.step).floor().max(0.0) as usize).min(last)
    }

    /// Cubic Hermite interpolation of θ; zero beyond the first zero.
    pub fn theta_at(&self, xi: f64) -> f64 {
        if xi >= self.xi_end() {
            return match self.support {
                Support::Finite { .. } => 0.0,
                Support::Infinite { .. } => self.theta[self.theta.len() - 1],
            };
        }
        let k = self.interval(xi);
        let h = self.xi[k + 1] - self.xi[k];
        hermite(xi - self.xi[k], h, self.theta[k], self.theta[k + 1], self.dtheta[k], self.dtheta[k + 1])
    }

    pub fn dtheta_at(&self, xi: f64) -> f64 {
        if xi >= self.xi_end() {
            return self.dtheta[self.dtheta.len() - 1];
        }
        let k = self.interval(xi);
        let h = self.xi[k + 1] - self.xi[k];
        let dd0 = second_derivative(self.xi[k], self.theta[k], self.dtheta[k], self.n);
        let dd1 = second_derivative(self.xi[k + 1], self.theta[k + 1], self.dtheta[k + 1], self.n);
        hermite(xi - self.xi[k], h, self.dtheta[k], self.dtheta[k + 1], dd0, dd1)
    }

    /// Largest `|θ'' + 2θ'/ξ + θⁿ|` with θ'' from a five-point difference of the
    /// stored θ'. For a finite support the stencil stays outside the last 1% of
    /// `[0, ξ₁]`, where θⁿ has unbounded high derivatives for fractional n and
    /// the difference quotient, not the solution, dominates.
    pub fn ode_residual(&self) -> f64 {
        let h = self.step;
        let d = &self.dtheta;
        let limit = match self.support {
            Support::Finite { xi1, .. } => xi1 * (1.0 - EDGE_BAND),
            Support::Infinite { .. } => f64::INFINITY,
        };
        (2..self.xi.len() - 2)
            .take_while(|&k| self.xi[k + 2] <= limit)
            .map(|k| {
                let d2 = (-d[k + 2] + 8.0 * d[k + 1] - 8.0 * d[k - 1] + d[k - 2]) / (12.0 * h);
                (d2 + 2.0 * d[k] / self.xi[k] + pow_pos(self.theta[k], self.n)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Profile table with a `# n=.. xi1=..` header and `xi,theta` columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let xi1 = self.xi1().map_or("inf".to_string(), crate::io::fmt_f64);
        let _ = writeln!(out, "# n={} xi1={}", crate::io::fmt_f64(self.n), xi1);
        out.push_str("xi,theta\n");
        for (x, t) in self.xi.iter().zip(&self.theta) {
            let _ = writeln!(out, "{},{}", crate::io::fmt_f64(*x), crate::io::fmt_f64(*t));
        }
        out
    }
}

/// Lane–Emden density `s ρ_c (θⁿ - cut)` with a density prefactor `s`
/// (1 for the hydrostatic profile).
#[derive(Debug, Clone)]
pub struct PolytropeDensity {
    profile: Arc<LaneEmdenProfile>,
    length: f64,
    rho_c: f64,
    scale: f64,
    cut: f64,
}

impl PolytropeDensity {
    fn density(&self, r: f64) -> f64 {
        let theta = self.profile.theta_at(r / self.length);
        (self.scale * self.rho_c * (pow_pos(theta, self.profile.n) - self.cut)).max(0.0)
    }

    fn enclosed(&self, r: f64) -> f64 {
        let xi = r / self.length;
        let l3 = self.length * self.length * self.length;
        let core = -xi * xi * self.profile.dtheta_at(xi);
        self.scale * self.rho_c * l3 * (core - self.cut * xi * xi * xi / 3.0)
    }
}

/// Piecewise-linear density table in `r`.
#[derive(Debug, Clone)]
pub struct TabulatedDensity {
    r: Vec<f64>,
    rho: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(r: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || r.len() != rho.len() {
            return Err(Error::domain("density table needs at least two matching rows"));
        }
        if r[0] < 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("table radii must be nonnegative and increasing"));
        }
        if rho.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain("table densities must be finite and nonnegative"));
        }
        let mut cumulative = vec![0.0];
        for k in 0..r.len() - 1 {
            let c = cumulative[k] + Self::segment(r[k], r[k + 1], rho[k], rho[k + 1], r[k + 1]);
            cumulative.push(c);
        }
        Ok(Self { r, rho, cumulative })
    }

    /// Exact `∫_{r0}^{t} ρ s² ds` for ρ linear between `(r0, q0)` and `(r1, q1)`.
    fn segment(r0: f64, r1: f64, q0: f64, q1: f64, t: f64) -> f64 {
        let slope = (q1 - q0) / (r1 - r0);
        let c = q0 - slope * r0;
        c * (t.powi(3) - r0.powi(3)) / 3.0 + slope * (t.powi(4) - r0.powi(4)) / 4.0
    }

    fn locate(&self, r: f64) -> usize {
        match self.r.binary_search_by(|v| v.total_cmp(&r)) {
            Ok(k) => k.min(self.r.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.r.len() - 2),
        }
    }

    fn density(&self, r: f64) -> f64 {
        if r < self.r[0] || r > self.r[self.r.len() - 1] {
            return 0.0;
        }
        let k = self.locate(r);
        let w = (r - self.r[k]) / (self.r[k + 1] - self.r[k]);
        self.rho[k] * (1.0 - w) + self.rho[k + 1] * w
    }

    fn enclosed(&self, r: f64) -> f64 {
        if r <= self.r[0] {
            return 0.0;
        }
        let last = self.r.len() - 1;
        if r >= self.r[last] {
            return self.cumulative[last];
        }
        let k = self.locate(r);
        self.cumulative[k] + Self::segment(self.r[k], self.r[k + 1], self.rho[k], self.rho[k + 1], r)
    }

    pub fn outer_radius(&self) -> f64 {
        self.r[self.r.len() - 1]
    }

    pub fn inner_radius(&self) -> f64 {
        self.r[0]
    }
}

#[derive(Debug, Clone)]
pub enum DensityProfile {
    /// Constant density; the edge is not a vacuum, so only for tests.
    Uniform { rho: f64 },
    Polytrope(PolytropeDensity),
    Table(TabulatedDensity),
}

impl DensityProfile {
    pub fn density(&self, r: f64) -> f64 {
        match self {
            DensityProfile::Uniform { rho } => *rho,
            DensityProfile::Polytrope(p) => p.density(r),
            DensityProfile::Table(t) => t.density(r),
        }
    }

    /// `∫₀^r ρ s² ds`.
    pub fn enclosed(&self, r: f64) -> f64 {
        match self {
            DensityProfile::Uniform { rho } => rho * r * r * r / 3.0,
            DensityProfile::Polytrope(p) => p.enclosed(r),
            DensityProfile::Table(t) => t.enclosed(r),
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        match self {
            DensityProfile::Uniform { rho } => DensityProfile::Uniform { rho: rho * factor },
            DensityProfile::Polytrope(p) => {
                let mut p = p.clone();
                p.scale *= factor;
                DensityProfile::Polytrope(p)
            }
            DensityProfile::Table(t) => {
                let rho = t.rho.iter().map(|v| v * factor).collect();
                DensityProfile::Table(TabulatedDensity::new(t.r.clone(), rho).expect("scaled table"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityShape {
    /// `s + c s³` with `s = r - ε`.
    Cubic,
    /// `s + c s⁵`.
    Quintic,
}

impl VelocityShape {
    fn power(self) -> i32 {
        match self {
            VelocityShape::Cubic => 3,
            VelocityShape::Quintic => 5,
        }
    }
}

impl std::str::FromStr for VelocityShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubic" => Ok(VelocityShape::Cubic),
            "quintic" => Ok(VelocityShape::Quintic),
            other => Err(Error::domain(format!("unknown velocity shape `{other}`"))),
        }
    }
}

/// `amplitude · v(r)` with `v(ε) = 0`, `v' + 2v/a₀ = 0` at `a₀`, `max v = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityProfile {
    amplitude: f64,
    eps: f64,
    power: i32,
    coeff: f64,
    norm: f64,
}

impl VelocityProfile {
    pub fn new(shape: VelocityShape, amplitude: f64, eps: f64, a0: f64) -> Result<Self> {
        let len = a0 - eps;
        if !(len > 0.0) {
            return Err(Error::domain("velocity shape needs a0 > eps"));
        }
        let k = shape.power();
        let kf = k as f64;
        let denom = kf * len.powi(k - 1) + 2.0 * len.powi(k) / a0;
        let coeff = -(1.0 + 2.0 * len / a0) / denom;
        if !coeff.is_finite() || coeff >= 0.0 {
            return Err(Error::domain("velocity shape cannot meet the boundary compatibility condition"));
        }
        let s_peak = (-1.0 / (kf * coeff)).powf(1.0 / (kf - 1.0)).min(len);
        let norm = s_peak + coeff * s_peak.powi(k);
        Ok(Self { amplitude, eps, power: k, coeff, norm })
    }

    pub fn value(&self, r: f64) -> f64 {
        let s = r - self.eps;
        self.amplitude * (s + self.coeff * s.powi(self.power)) / self.norm
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let s = r - self.eps;
        self.amplitude * (1.0 + self.power as f64 * self.coeff * s.powi(self.power - 1)) / self.norm
    }
}

/// Initial density and velocity on `[ε, a₀]` with derived mass and energy.
#[derive(Debug, Clone)]
pub struct InitialData {
    density: DensityProfile,
    velocity: Vec<VelocityProfile>,
    eps: f64,
    a0: f64,
    mass: f64,
    kinetic: f64,
    internal: f64,
    center_mass_defect: f64,
    truncated_mass: f64,
    hydrostatic_residual: Option<f64>,
}

const QUAD_PANELS: usize = 4000;
const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn integrate(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / QUAD_PANELS as f64;
    (0..QUAD_PANELS)
        .map(|p| {
            let mid = lo + (p as f64 + 0.5) * h;
            GAUSS5.iter().map(|(node, w)| w * f(mid + 0.5 * h * node)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

impl InitialData {
    /// Data at rest; mass and internal energy follow from the density.
    pub fn new(density: DensityProfile, eps: f64, a0: f64, model: &GasModel) -> Result<Self> {
        if !(eps >= 0.0) || !(a0 > eps) || !a0.is_finite() {
            return Err(Error::domain(format!("need 0 <= eps < a0, got eps = {eps}, a0 = {a0}")));
        }
        let mass = 4.0 * PI * (density.enclosed(a0) - density.enclosed(eps));
        if !(mass > 0.0) {
            return Err(Error::domain("initial data has no mass"));
        }
        let center_mass_defect = 4.0 * PI * density.enclosed(eps);
        let mut data = Self {
            density,
            velocity: Vec::new(),
            eps,
            a0,
            mass,
            kinetic: 0.0,
            internal: 0.0,
            center_mass_defect,
            truncated_mass: 0.0,
            hydrostatic_residual: None,
        };
        data.refresh_energy(model);
        Ok(data)
    }

    /// Uniform ball; not a vacuum edge, so the boundary condition on ρ fails.
    pub fn uniform(rho: f64, eps: f64, a0: f64, model: &GasModel) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::domain("uniform density must be positive"));
        }
        Self::new(DensityProfile::Uniform { rho }, eps, a0, model)
    }

    fn refresh_energy(&mut self, model: &GasModel) {
        let g = model.gamma();
        self.internal = integrate(self.eps, self.a0, |r| {
            model.pressure_unchecked(self.density.density(r)) / (g - 1.0) * r * r
        });
        self.kinetic = if self.velocity.is_empty() {
            0.0
        } else {
            integrate(self.eps, self.a0, |r| {
                let u = self.u0(r);
                0.5 * self.density.density(r) * u * u * r * r
            })
        };
    }

    /// Multiply the density by `factor`, keeping the support and velocity.
    pub fn with_density_scale(&self, factor: f64, model: &GasModel) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::domain("density scale must be positive"));
        }
        let mut next = self.clone();
        next.density = self.density.scaled(factor);
        next.mass *= factor;
        next.center_mass_defect *= factor;
        next.truncated_mass *= factor;
        next.hydrostatic_residual = None;
        next.refresh_energy(model);
        Ok(next)
    }

    pub fn density(&self) -> &DensityProfile {
        &self.density
    }

    pub fn rho0(&self, r: f64) -> f64 {
        if r < self.eps || r > self.a0 {
            0.0
        } else {
            self.density.density(r)
        }
    }

    pub fn u0(&self, r: f64) -> f64 {
        self.velocity.iter().map(|v| v.value(r)).sum()
    }

    pub fn du0(&self, r: f64) -> f64 {
        self.velocity.iter().map(|v| v.derivative(r)).sum()
    }

    /// `∫_ε^r ρ₀ s² ds`, the mass coordinate of radius `r`.
    pub fn mass_coordinate(&self, r: f64) -> f64 {
        self.density.enclosed(r.clamp(self.eps, self.a0)) - self.density.enclosed(self.eps)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `∫(½ρ₀u₀² + P(ρ₀)/(γ-1)) r² dr`, without the 4π factor.
    pub fn e0(&self) -> f64 {
        self.kinetic + self.internal
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.kinetic
    }

    pub fn internal_energy(&self) -> f64 {
        self.internal
    }

    /// Mass of the profile inside the cutoff ball `[0, ε]`, dropped from the data.
    pub fn center_mass_defect(&self) -> f64 {
        self.center_mass_defect
    }

    /// Mass removed by truncating an unbounded profile.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    pub fn hydrostatic_residual(&self) -> Option<f64> {
        self.hydrostatic_residual
    }

    pub fn has_vacuum_boundary(&self) -> bool {
        !matches!(self.density, DensityProfile::Uniform { .. })
    }

    /// Largest of `|ρ₀(a₀)|`, `|u₀(ε)|` and `|u₀'(a₀) + 2u₀(a₀)/a₀|`.
    pub fn compatibility_residual(&self) -> f64 {
        let rho_edge = self.density.density(self.a0).abs();
        let inner = self.u0(self.eps).abs();
        let outer = (self.du0(self.a0) + 2.0 * self.u0(self.a0) / self.a0).abs();
        rho_edge.max(inner).max(outer)
    }

    /// `max |∂_r P(ρ) + 4πρ m(r)/r²|` on `points` uniform intervals, with a
    /// forward difference for the pressure gradient and `m = ∫_ε^r ρ s² ds`.
    pub fn hydrostatic_residual_on(&self, model: &GasModel, points: usize) -> f64 {
        let dr = (self.a0 - self.eps) / points as f64;
        (0..points)
            .map(|k| {
                let r = self.eps + k as f64 * dr;
                let rho = self.rho0(r);
                let dp = (model.pressure_unchecked(self.rho0(r + dr)) - model.pressure_unchecked(rho)) / dr;
                let grav = if r > 0.0 { 4.0 * PI * rho * self.mass_coordinate(r) / (r * r) } else { 0.0 };
                (dp + grav).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Grid size used for the residual stored on hydrostatic data.
pub const HYDROSTATIC_RESIDUAL_POINTS: usize = 2000;

/// Physical Lane–Emden data at rest on `[ε, a₀]`. Unbounded profiles need a
/// truncation floor, as a fraction of `ρ_c`; the density is then shifted down
/// by the floor so that it vanishes at the cut.
pub fn hydrostatic_initial_data(
    profile: &LaneEmdenProfile,
    rho_c: f64,
    eps: f64,
    model: &GasModel,
    truncation_floor: Option<f64>,
) -> Result<InitialData> {
    if (profile.gamma() - model.gamma()).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "profile gamma {} differs from model gamma {}",
            profile.gamma(),
            model.gamma()
        )));
    }
    let scaled = profile.rescaled(rho_c, model.kappa())?;
    let length = scaled.length_scale();
    let n = scaled.n();
    let (xi_cut, cut) = match scaled.support() {
        Support::Finite { xi1, .. } => (xi1, 0.0),
        Support::Infinite { xi_max } => {
            let floor = truncation_floor.ok_or_else(|| {
                Error::domain("profile has unbounded support; a truncation floor is required")
            })?;
            if !(floor > 0.0 && floor < 1.0) {
                return Err(Error::domain("truncation floor must lie in (0, 1)"));
            }
            let target = floor.powf(1.0 / n);
            if scaled.theta_at(xi_max) > target {
                return Err(Error::domain(format!(
                    "density stays above the floor up to xi_max = {xi_max}"
                )));
            }
            let (mut lo, mut hi) = (0.0, xi_max);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if scaled.theta_at(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (0.5 * (lo + hi), floor)
        }
    };
    let a0 = length * xi_cut;
    if !(eps < a0) {
        return Err(Error::domain("cutoff radius must lie inside the support"));
    }
    let density = DensityProfile::Polytrope(PolytropeDensity {
        profile: Arc::new(scaled.clone()),
        length,
        rho_c,
        scale: 1.0,
        cut,
    });
    let mut data = InitialData::new(density, eps, a0, model)?;
    if cut > 0.0 {
        data.truncated_mass = scaled.physical_mass() - data.mass - data.center_mass_defect;
    }
    data.hydrostatic_residual = Some(data.hydrostatic_residual_on(model, HYDROSTATIC_RESIDUAL_POINTS));
    Ok(data)
}

/// Add `amplitude · v(r)` for a built-in shape and recompute the energy.
pub fn perturbed_initial_data(
    base: &InitialData,
    amplitude: f64,
    shape: VelocityShape,
    model: &GasModel,
) -> Result<InitialData> {
    if amplitude == 0.0 {
        return Ok(base.clone());
    }
    let v = VelocityProfile::new(shape, amplitude, base.eps, base.a0)?;
    let mut next = base.clone();
    next.velocity.push(v);
    next.refresh_energy(model);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(gamma: f64) -> GasModel {
        GasModel::new(gamma, 1.0, 0.0).unwrap()
    }

    #[test]
    fn center_conditions() {
        for g in [1.1, 1.25, 4.0 / 3.0, 1.5, 1.9] {
            let p = solve_lane_emden(g, 1e-8).unwrap();
            assert_eq!(p.theta()[0], 1.0);
            assert_eq!(p.dtheta()[0], 0.0);
        }
    }

    #[test]
    fn n5_closed_form() {
        let p = solve_lane_emden(1.2, 1e-10).unwrap();
        assert!(matches!(p.support(), Support::Infinite { .. }));
        let err = p
            .xi()
            .iter()
            .zip(p.theta())
            .filter(|(x, _)| **x <= 20.0)
            .map(|(x, t)| (t - (1.0 + x * x / 3.0).powf(-0.5)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn n1_zero_is_pi() {
        let p = solve_lane_emden(2.0, 1e-10).unwrap();
        assert!((p.xi1().unwrap() - PI).abs() < 1e-8, "{}", p.xi1().unwrap());
        let k = p.xi().len() / 2;
        let x = p.xi()[k];
        assert!((p.theta()[k] - x.sin() / x).abs() < 1e-10);
    }

    #[test]
    fn n3_zero_matches_reference() {
        // Taylor-series ODE solver at 40 digits: 6.896848619376960375...
        let reference = 6.896_848_619_376_96;
        let p = solve_lane_emden(4.0 / 3.0, 1e-10).unwrap();
        let xi1 = p.xi1().unwrap();
        assert!(((xi1 - reference) / reference).abs() < 1e-6);
        assert!(p.theta_at(xi1).abs() < 1e-12);
    }

    #[test]
    fn gamma_outside_range() {
        assert!(solve_lane_emden(1.0, 1e-8).is_err());
        assert!(solve_lane_emden(2.01, 1e-8).is_err());
    }

    #[test]
    fn support_not_found_reports_reach() {
        let opts = LaneEmdenOptions { tol: 1e-6, xi0: 1e-2, xi_max: 5.0 };
        match solve_lane_emden_with(4.0 / 3.0, &opts) {
            Err(Error::SupportNotFound { reached }) => assert!(reached >= 5.0 - 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hermite_interpolation_tracks_sine() {
        let p = solve_lane_emden(2.0, 1e-8).unwrap();
        for x in [0.013, 0.77, 1.5, 2.9, 3.1] {
            assert!((p.theta_at(x) - x.sin() / x).abs() < 1e-9);
        }
    }

    #[test]
    fn hydrostatic_data_conditions() {
        let m = model(4.0 / 3.0);
        let p = solve_lane_emden(4.0 / 3.0, 1e-10).unwrap();
        let d = hydrostatic_initial_data(&p, 2.0, 0.0, &m, None).unwrap();
        assert!(d.compatibility_residual() < 1e-10);
        assert_eq!(d.u0(0.3), 0.0);
        let scaled = p.rescaled(2.0, 1.0).unwrap();
        assert!(((d.mass() - scaled.physical_mass()) / d.mass()).abs() < 1e-12);
        assert!((d.a0() - scaled.physical_radius()).abs() < 1e-14);
    }

    #[test]
    fn hydrostatic_residual_first_order() {
        let m = model(4.0 / 3.0);
        let p = solve_lane_emden(4.0 / 3.0, 1e-10).unwrap();
        let d = hydrostatic_initial_data(&p, 1.0, 0.0, &m, None).unwrap();
        let r1 = d.hydrostatic_residual_on(&m, 400);
        let r2 = d.hydrostatic_residual_on(&m, 800);
        let r3 = d.hydrostatic_residual_on(&m, 1600);
        assert!((r1 / r2 - 2.0).abs() < 0.3, "{}", r1 / r2);
        assert!((r2 / r3 - 2.0).abs() < 0.3, "{}", r2 / r3);
    }

    #[test]
    fn infinite_support_needs_floor() {
        let m = model(1.2);
        let p = solve_lane_emden(1.2, 1e-8).unwrap();
        assert!(hydrostatic_initial_data(&p, 1.0, 0.0, &m, None).is_err());
        let d = hydrostatic_initial_data(&p, 1.0, 0.0, &m, Some(1e-4)).unwrap();
        assert!(d.compatibility_residual() < 1e-10);
        assert!(d.truncated_mass() > 0.0);
    }

    #[test]
    fn cutoff_mass_defect() {
        let m = model(4.0 / 3.0);
        let p = solve_lane_emden(4.0 / 3.0, 1e-10).unwrap();
        let full = hydrostatic_initial_data(&p, 1.0, 0.0, &m, None).unwrap();
        let cut = hydrostatic_initial_data(&p, 1.0, 0.05, &m, None).unwrap();
        let sum = cut.mass() + cut.center_mass_defect();
        assert!(((sum - full.mass()) / full.mass()).abs() < 1e-13);
        // near the centre the defect is a ball of density ~ rho_c
        let ball = 4.0 * PI / 3.0 * 0.05f64.powi(3);
        assert!(((cut.center_mass_defect() - ball) / ball).abs() < 1e-2);
    }

    #[test]
    fn perturbation_keeps_compatibility() {
        let m = model(1.3);
        let p = solve_lane_emden(1.3, 1e-10).unwrap();
        let base = hydrostatic_initial_data(&p, 1.0, 0.1, &m, None).unwrap();
        for shape in [VelocityShape::Cubic, VelocityShape::Quintic] {
            let d = perturbed_initial_data(&base, -0.3, shape, &m).unwrap();
            assert!(d.compatibility_residual() < 1e-10);
            assert!(d.e0() > base.e0());
            // peak of |u| equals the amplitude
            let peak = (0..=1000)
                .map(|k| d.u0(d.eps() + (d.a0() - d.eps()) * k as f64 / 1000.0).abs())
                .fold(0.0, f64::max);
            assert!((peak - 0.3).abs() < 1e-5);
        }
        let same = perturbed_initial_data(&base, 0.0, VelocityShape::Cubic, &m).unwrap();
        assert_eq!(same.e0(), base.e0());
    }

    #[test]
    fn table_enclosed_mass_exact_for_linear() {
        // rho = 1 - r on [0, 1]: int (1 - s) s^2 = r^3/3 - r^4/4
        let r: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let rho: Vec<f64> = r.iter().map(|v| 1.0 - v).collect();
        let t = TabulatedDensity::new(r, rho).unwrap();
        for x in [0.05f64, 0.33, 0.71, 1.0] {
            let exact = x * x * x / 3.0 - x.powi(4) / 4.0;
            assert!((t.enclosed(x) - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_header() {
        let p = solve_lane_emden(1.5, 1e-6).unwrap();
        let csv = p.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# n=2 xi1="));
        assert_eq!(lines.next().unwrap(), "xi,theta");
    }
}
