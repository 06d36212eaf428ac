//! Critical-mass algebra: the constant `B`, the auxiliary function `f(s)`, its
//! maximiser `s*`, the thresholds `M_c` and `M̄`, and the coercivity constant
//! `C_γ`.
//!
//! All masses are physical (`4π ∫ρ r² dr`) and `E0` carries no 4π factor.

use std::f64::consts::PI;

use serde::Serialize;

use crate::diagnostics::{gravitational_energy, pressure_integral};
use crate::error::{Error, Result};
use crate::model::{is_critical_gamma, snap_gamma, GasModel, LagrangianState, GAMMA_CRITICAL, GAMMA_LOWER};

/// Placeholder for the Hardy–Littlewood–Sobolev constant when none is configured.
pub const DEFAULT_A_GAMMA: f64 = 1.0;
pub const DEFAULT_L: f64 = 2.0;

fn check_range(gamma: f64) -> Result<f64> {
    let g = snap_gamma(gamma);
    if g > GAMMA_LOWER && g <= GAMMA_CRITICAL {
        Ok(g)
    } else {
        Err(Error::domain(format!("gamma = {gamma} outside (6/5, 4/3]")))
    }
}

fn check_subcritical_range(gamma: f64) -> Result<f64> {
    let g = check_range(gamma)?;
    if is_critical_gamma(g) {
        return Err(Error::domain("gamma = 4/3 has no interior maximiser s*; use the 4/3 branch"));
    }
    Ok(g)
}

/// Exponent `(5γ-6)/(3(γ-1))` on M in `f`.
fn mass_exponent(g: f64) -> f64 {
    (5.0 * g - 6.0) / (3.0 * (g - 1.0))
}

pub fn constant_b(gamma: f64, a_gamma: f64) -> Result<f64> {
    let g = check_range(gamma)?;
    if !(a_gamma >= 0.0) || !a_gamma.is_finite() {
        return Err(Error::domain(format!("A_gamma = {a_gamma} must be nonnegative")));
    }
    let four_pi = 4.0 * PI;
    let inner = four_pi.powf(-2.0 / 3.0) / (2.0 * 3f64.cbrt()) + a_gamma / (8.0 * PI);
    Ok(four_pi.powf(1.0 / (3.0 * (g - 1.0))) * inner)
}

/// `f(s) = s/(γ-1) - B M^{(5γ-6)/(3(γ-1))} s^{1/(3(γ-1))}`.
pub fn f_of_s(s: f64, gamma: f64, mass: f64, b: f64) -> Result<f64> {
    let g = check_range(gamma)?;
    if s < 0.0 || s.is_nan() {
        return Err(Error::domain(format!("s = {s} must be nonnegative")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok(s / (g - 1.0) - b * mass.powf(mass_exponent(g)) * s.powf(1.0 / (3.0 * (g - 1.0))))
}

/// Analytic `f'(s)`.
pub fn f_prime(s: f64, gamma: f64, mass: f64, b: f64) -> Result<f64> {
    let g = check_range(gamma)?;
    let q = 1.0 / (3.0 * (g - 1.0));
    Ok(1.0 / (g - 1.0) - b * mass.powf(mass_exponent(g)) * q * s.powf(q - 1.0))
}

pub fn s_star(gamma: f64, mass: f64, b: f64) -> Result<f64> {
    let g = check_subcritical_range(gamma)?;
    if !(mass > 0.0) || !(b > 0.0) {
        return Err(Error::domain("mass and B must be positive"));
    }
    let d = 4.0 - 3.0 * g;
    Ok((b / 3.0).powf(-3.0 * (g - 1.0) / d) * mass.powf(-(5.0 * g - 6.0) / d))
}

/// Closed form of `f(s*)`: `((4-3γ)/(γ-1)) s*`.
pub fn f_at_s_star(gamma: f64, mass: f64, b: f64) -> Result<f64> {
    let g = check_subcritical_range(gamma)?;
    let d = 4.0 - 3.0 * g;
    Ok(d / (g - 1.0) * (b / 3.0).powf(-3.0 * (g - 1.0) / d) * mass.powf(-(5.0 * g - 6.0) / d))
}

pub fn critical_mass(gamma: f64, e0: f64, b: f64) -> Result<f64> {
    let g = check_range(gamma)?;
    if !(e0 > 0.0) || !(b > 0.0) {
        return Err(Error::domain("E0 and B must be positive"));
    }
    if is_critical_gamma(g) {
        return Ok((3.0 / b).powf(1.5));
    }
    let d = 4.0 - 3.0 * g;
    let k = d / (g - 1.0) * (b / 3.0).powf(-3.0 * (g - 1.0) / d);
    let p = d / (5.0 * g - 6.0);
    Ok(k.powf(p) * e0.powf(-p))
}

pub fn m_bar(gamma: f64, e0: f64, b: f64, l: f64) -> Result<f64> {
    let g = check_range(gamma)?;
    if is_critical_gamma(g) {
        if !(b > 0.0) {
            return Err(Error::domain("B must be positive"));
        }
        return Ok((1.5 / b).powf(1.5));
    }
    if !(l > 1.0) {
        return Err(Error::domain(format!("l = {l} must exceed 1")));
    }
    let value = critical_mass(g, l * e0, b)?;
    debug_assert!(value < critical_mass(g, e0, b)?);
    Ok(value)
}

/// `(4-3γ)/(γ-1)` below 4/3, `3 - B M^{2/3}` at 4/3.
pub fn c_gamma(gamma: f64, mass: f64, b: f64) -> Result<f64> {
    let g = check_range(gamma)?;
    if is_critical_gamma(g) {
        Ok(3.0 - b * mass.powf(2.0 / 3.0))
    } else {
        Ok((4.0 - 3.0 * g) / (g - 1.0))
    }
}

/// Splitting parameters `(l, α)` with `0 < α < 1`, `l > 1`, `α l ≥ 1` and
/// `α^{(4-3γ)/(3(γ-1))} ≤ 1/2`. At γ = 4/3 only `l` is kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Splitting {
    pub l: f64,
    pub alpha: Option<f64>,
}

fn alpha_exponent(g: f64) -> f64 {
    (4.0 - 3.0 * g) / (3.0 * (g - 1.0))
}

/// Largest admissible α for `l`, or for the smallest admissible `l ≥ 2` when
/// `l` is not given.
pub fn splitting(gamma: f64, l: Option<f64>, alpha: Option<f64>) -> Result<Splitting> {
    let g = check_range(gamma)?;
    if let Some(l) = l {
        if !(l > 1.0) {
            return Err(Error::domain(format!("l = {l} must exceed 1")));
        }
    }
    if is_critical_gamma(g) {
        return Ok(Splitting { l: l.unwrap_or(DEFAULT_L), alpha: None });
    }
    let alpha_cap = 0.5f64.powf(1.0 / alpha_exponent(g));
    if !alpha_cap.is_normal() || !(1.0 / alpha_cap).is_finite() {
        return Err(Error::domain(format!(
            "gamma = {g} is too close to 4/3: the admissible alpha underflows; use the 4/3 branch"
        )));
    }
    let l = l.unwrap_or_else(|| DEFAULT_L.max(1.0 / alpha_cap));
    let alpha = match alpha {
        Some(a) => a,
        None => alpha_cap,
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if alpha.powf(alpha_exponent(g)) > 0.5 * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "alpha = {alpha} violates alpha^((4-3 gamma)/(3(gamma-1))) <= 1/2 (largest admissible {alpha_cap})"
        )));
    }
    if alpha * l < 1.0 - 1e-12 {
        return Err(Error::domain(format!(
            "alpha * l = {} < 1; need l >= {}",
            alpha * l,
            1.0 / alpha
        )));
    }
    Ok(Splitting { l, alpha: Some(alpha) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Supercritical,
    Subcritical,
    StrictlySubcritical,
}

impl Verdict {
    pub fn classify(mass: f64, m_c: f64, m_bar: f64) -> Self {
        if mass < m_bar {
            Verdict::StrictlySubcritical
        } else if mass < m_c {
            Verdict::Subcritical
        } else {
            Verdict::Supercritical
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalMassReport {
    pub gamma: f64,
    pub a_gamma: f64,
    pub b: f64,
    pub e0: f64,
    pub mass: Option<f64>,
    pub c_gamma: Option<f64>,
    pub s_star: Option<f64>,
    pub f_at_s_star: Option<f64>,
    pub m_c: f64,
    pub m_bar: f64,
    pub l: f64,
    pub alpha: Option<f64>,
    pub verdict: Option<Verdict>,
}

impl CriticalMassReport {
    /// Mass-dependent fields are `None` when `mass` is not given.
    pub fn new(
        gamma: f64,
        a_gamma: f64,
        e0: f64,
        mass: Option<f64>,
        l: Option<f64>,
        alpha: Option<f64>,
    ) -> Result<Self> {
        let g = check_range(gamma)?;
        if let Some(m) = mass {
            if !(m > 0.0) {
                return Err(Error::domain(format!("mass = {m} must be positive")));
            }
        }
        let b = constant_b(g, a_gamma)?;
        let split = splitting(g, l, alpha)?;
        let m_c = critical_mass(g, e0, b)?;
        let m_bar = m_bar(g, e0, b, split.l)?;
        let critical = is_critical_gamma(g);
        let s_star = match mass {
            Some(m) if !critical => Some(s_star(g, m, b)?),
            _ => None,
        };
        let f_at_s_star = match mass {
            Some(m) if !critical => Some(f_at_s_star(g, m, b)?),
            _ => None,
        };
        Ok(Self {
            gamma: g,
            a_gamma,
            b,
            e0,
            mass,
            c_gamma: mass.map(|m| c_gamma(g, m, b)).transpose()?,
            s_star,
            f_at_s_star,
            m_c,
            m_bar,
            l: split.l,
            alpha: split.alpha,
            verdict: mass.map(|m| Verdict::classify(m, m_c, m_bar)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionReport {
    /// `∫P(ρ) r² dr`.
    pub pressure_integral: f64,
    pub internal: f64,
    pub gravitational: f64,
    pub c_gamma: f64,
    /// `internal - gravitational ≥ C_γ ∫P r² dr`.
    pub subcritical_bound: bool,
    /// `internal - gravitational ≥ ∫P r² dr / (2(γ-1))`.
    pub strict_bound: bool,
}

pub fn energy_partition_check(state: &LagrangianState, model: &GasModel, b: f64) -> Result<PartitionReport> {
    let g = check_range(model.gamma())?;
    let s = pressure_integral(state, model);
    let internal = s / (g - 1.0);
    let gravitational = gravitational_energy(state);
    let c = c_gamma(g, state.eulerian_mass(), b)?;
    let surplus = internal - gravitational;
    Ok(PartitionReport {
        pressure_integral: s,
        internal,
        gravitational,
        c_gamma: c,
        subcritical_bound: surplus >= c * s,
        strict_bound: surplus >= s / (2.0 * (g - 1.0)),
    })
}
