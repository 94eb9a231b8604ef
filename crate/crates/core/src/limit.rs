//! Limiting spectral law of the heavy-tailed symmetrization: the scalar
//! fixed point `y = φ_{a,z}(y)`, its Stieltjes transform `m_a = i ψ_{a,z}(y)`
//! and the density at the origin.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numerics::{gamma, integrate, richardson_to_zero, Extrapolation, QuadOptions};

/// Relative quadrature error accepted for `φ` and `ψ`.
pub const QUAD_REL_TOL: f64 = 1e-9;

/// Exponent at which the integrand envelope is cut (`e^{-46} ≈ 1e-20`).
const TAIL_EXPONENT: f64 = 46.0;

fn check_args(a: f64, z: Complex64, x: Complex64) -> Result<()> {
    if !(a > 0.0 && a < 2.0) {
        return Err(LabError::domain(format!("stability index a = {a} outside (0, 2)")));
    }
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(LabError::domain(format!("spectral parameter {z} must have Im z > 0")));
    }
    if !(x.re >= 0.0) || !x.im.is_finite() {
        return Err(LabError::domain(format!("argument {x} must have Re x >= 0")));
    }
    Ok(())
}

/// Integration breakpoints in `u = t^{a/2}`: the truncation point and, when
/// `Re z ≠ 0`, one break per half period of the phase `Re z · u^{2/a}`.
fn breakpoints(a: f64, z: Complex64, x: Complex64, rate: f64) -> Vec<f64> {
    let p = 2.0 / a;
    let mut upper = (TAIL_EXPONENT / z.im).powf(1.0 / p);
    let linear = rate * x.re;
    if linear > 0.0 {
        upper = upper.min(TAIL_EXPONENT / linear);
    }
    let mut breaks: Vec<f64> = (0..=8).map(|k| upper * k as f64 / 8.0).collect();
    let phase_span = (z.re.abs() * upper.powf(p)).max(x.im.abs() * rate * upper);
    let periods = (phase_span / PI).ceil() as usize;
    if periods > 1 {
        let count = periods.min(4000);
        let oscillation = z.re.abs() >= x.im.abs() * rate * upper.powf(1.0 - p);
        for k in 1..count {
            let frac = k as f64 / count as f64;
            // Equal phase steps in whichever term oscillates fastest.
            let u = if oscillation { upper * frac.powf(1.0 / p) } else { upper * frac };
            breaks.push(u);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    breaks
}

fn quad_opts(rel_tol: f64) -> QuadOptions {
    QuadOptions {
        rel_tol,
        abs_tol: 1e-300,
        max_subdivisions: 200_000,
    }
}

/// Value of `φ` or `ψ` together with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformValue {
    pub value: Complex64,
    pub error: f64,
}

fn finish(what: &str, value: Complex64, error: f64, converged: bool, rel_tol: f64) -> Result<TransformValue> {
    if !converged || !(error <= rel_tol * value.norm().max(1e-300)) || !value.re.is_finite() {
        return Err(LabError::Numerical {
            what: format!("{what} quadrature did not reach the requested accuracy"),
            residual: error,
        });
    }
    Ok(TransformValue { value, error })
}

/// `φ_{a,z}(x) = Γ(a/2)^{-1} ∫_0^∞ t^{a/2-1} e^{itz} e^{-Γ(1-a/2) t^{a/2} x} dt`,
/// integrated in `u = t^{a/2}` where the integrand is smooth:
/// `(2/(aΓ(a/2))) ∫_0^∞ e^{iz u^{2/a}} e^{-Γ(1-a/2) u x} du`.
pub fn phi(a: f64, z: Complex64, x: Complex64) -> Result<Complex64> {
    phi_with(a, z, x, QUAD_REL_TOL * 0.1).map(|v| v.value)
}

pub fn phi_with(a: f64, z: Complex64, x: Complex64, rel_tol: f64) -> Result<TransformValue> {
    check_args(a, z, x)?;
    let rate = gamma(1.0 - a / 2.0);
    let p = 2.0 / a;
    let i = Complex64::i();
    let r = integrate(
        |u| (i * z * u.powf(p) - rate * u * x).exp(),
        &breakpoints(a, z, x, rate),
        quad_opts(rel_tol),
    );
    let c = 2.0 / (a * gamma(a / 2.0));
    finish("phi", r.value * c, r.error * c, r.converged, rel_tol.max(QUAD_REL_TOL))
}

/// `ψ_{a,z}(x) = ∫_0^∞ e^{itz} e^{-Γ(1-a/2) t^{a/2} x} dt`, in the same variable.
pub fn psi(a: f64, z: Complex64, x: Complex64) -> Result<Complex64> {
    psi_with(a, z, x, QUAD_REL_TOL * 0.1).map(|v| v.value)
}

pub fn psi_with(a: f64, z: Complex64, x: Complex64, rel_tol: f64) -> Result<TransformValue> {
    check_args(a, z, x)?;
    let rate = gamma(1.0 - a / 2.0);
    let p = 2.0 / a;
    let i = Complex64::i();
    let r = integrate(
        |u| {
            if u == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let jac = p * u.powf(p - 1.0);
            (i * z * u.powf(p) - rate * u * x).exp() * jac
        },
        &breakpoints(a, z, x, rate),
        quad_opts(rel_tol),
    );
    finish("psi", r.value, r.error, r.converged, rel_tol.max(QUAD_REL_TOL))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping; halved whenever a step would increase the residual.
    pub omega: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            tol: 1e-10,
            max_iter: 500,
            omega: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitLawSolution {
    pub z: Complex64,
    pub y: Complex64,
    pub m: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `y = φ_{a,z}(y)` from the `x = 0` value `(−iz)^{−a/2}`.
pub fn solve_limit(a: f64, z: Complex64, opts: LimitOptions) -> Result<LimitLawSolution> {
    check_args(a, z, Complex64::new(0.0, 0.0))?;
    solve_limit_from(a, z, initial_guess(a, z), opts)
}

pub fn initial_guess(a: f64, z: Complex64) -> Complex64 {
    (-Complex64::i() * z).powf(-a / 2.0)
}

/// Damped fixed-point iteration `y ← (1−ω)y + ωφ(y)` from `start`.
pub fn solve_limit_from(a: f64, z: Complex64, start: Complex64, opts: LimitOptions) -> Result<LimitLawSolution> {
    check_args(a, z, start)?;
    let mut y = start;
    let mut f = phi(a, z, y)?;
    let mut residual = (y - f).norm();
    let mut omega = opts.omega;
    let mut trajectory = vec![y];
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations >= opts.max_iter || omega < 1e-8 {
            return Err(LabError::NonConvergence {
                iterations,
                residual,
                trajectory,
            });
        }
        iterations += 1;
        let candidate = y * (1.0 - omega) + f * omega;
        let next = if candidate.re >= 0.0 { phi(a, z, candidate).ok() } else { None };
        match next {
            Some(fc) if (candidate - fc).norm() < residual => {
                y = candidate;
                f = fc;
                residual = (y - f).norm();
                trajectory.push(y);
            }
            _ => omega *= 0.5,
        }
    }
    let m = Complex64::i() * psi(a, z, y)?;
    Ok(LimitLawSolution {
        z,
        y,
        m,
        iterations,
        residual,
    })
}

/// Solves along `zs` in order, starting each point from the previous solution.
pub fn solve_limit_path(a: f64, zs: &[Complex64], opts: LimitOptions) -> Result<Vec<LimitLawSolution>> {
    let mut out: Vec<LimitLawSolution> = Vec::with_capacity(zs.len());
    for &z in zs {
        let sol = match out.last() {
            Some(prev) => solve_limit_from(a, z, prev.y, opts).or_else(|_| solve_limit(a, z, opts))?,
            None => solve_limit(a, z, opts)?,
        };
        out.push(sol);
    }
    Ok(out)
}

/// Density of the limiting law at the origin,
/// `(1/π) Γ(1 + 2/a) (Γ(1 + a/2)/Γ(1 − a/2))^{1/a}`.
///
/// This is the value forced by the fixed point as `z → 0` along the
/// imaginary axis, where `y` tends to `(Γ(1+a/2)Γ(1−a/2))^{-1/2}`.
pub fn rho_a_zero(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 2.0) {
        return Err(LabError::domain(format!("stability index a = {a} outside (0, 2)")));
    }
    Ok(gamma(1.0 + 2.0 / a) * (gamma(1.0 + a / 2.0) / gamma(1.0 - a / 2.0)).powf(1.0 / a) / PI)
}

/// Semicircle density at the origin, `1/π`.
pub fn rho_sc_zero() -> f64 {
    (4.0f64).sqrt() / (2.0 * PI)
}

/// `ξ = ρ_a(0)/ρ_sc(0)`.
pub fn xi(a: f64) -> Result<f64> {
    Ok(rho_a_zero(a)? / rho_sc_zero())
}

/// `(1/π) Im m_a(E + iη)` extrapolated to `η → 0` over `etas`.
pub fn density_extrapolated(a: f64, energy: f64, etas: &[f64], opts: LimitOptions) -> Result<Extrapolation> {
    if etas.len() < 2 {
        return Err(LabError::domain("extrapolation needs at least two eta values"));
    }
    let zs: Vec<Complex64> = etas.iter().rev().map(|&eta| Complex64::new(energy, eta)).collect();
    let sols = solve_limit_path(a, &zs, opts)?;
    let values: Vec<f64> = sols.iter().rev().map(|s| s.m.im / PI).collect();
    Ok(richardson_to_zero(etas, &values))
}

/// One row of a density tabulation. Rows with `eta = 0` hold the
/// extrapolated limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub a: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub eta: f64,
    pub re_m: f64,
    pub im_m: f64,
    pub rho: f64,
    /// Set when the η-extrapolation looks unreliable.
    #[serde(default)]
    pub unstable: bool,
}

/// Tabulates `m_a` over `energies × etas`, plus an extrapolated `eta = 0` row
/// per energy.
pub fn tabulate_density(a: f64, energies: &[f64], etas: &[f64], opts: LimitOptions) -> Result<Vec<DensityRow>> {
    let mut rows = Vec::new();
    let mut sorted = etas.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    for &e in energies {
        let zs: Vec<Complex64> = sorted.iter().map(|&eta| Complex64::new(e, eta)).collect();
        let sols = solve_limit_path(a, &zs, opts)?;
        for s in &sols {
            rows.push(DensityRow {
                a,
                energy: e,
                eta: s.z.im,
                re_m: s.m.re,
                im_m: s.m.im,
                rho: s.m.im / PI,
                unstable: false,
            });
        }
        if sols.len() >= 2 {
            let re = richardson_to_zero(&sorted, &sols.iter().map(|s| s.m.re).collect::<Vec<_>>());
            let im = richardson_to_zero(&sorted, &sols.iter().map(|s| s.m.im).collect::<Vec<_>>());
            rows.push(DensityRow {
                a,
                energy: e,
                eta: 0.0,
                re_m: re.value,
                im_m: im.value,
                rho: im.value / PI,
                unstable: re.unstable || im.unstable,
            });
        }
    }
    Ok(rows)
}

/// Writes the tabulation with columns `a,E,eta,re_m,im_m,rho,unstable`.
pub fn write_density_csv(rows: &[DensityRow], path: &Path) -> Result<()> {
    let fmt = |e: csv::Error| LabError::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fmt)?;
    for r in rows {
        w.serialize(r).map_err(fmt)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}
