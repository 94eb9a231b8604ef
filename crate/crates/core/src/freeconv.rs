//! Free additive convolution of an empirical spectrum with the semicircle:
//! the self-consistent `m_{s,fc}`, its density, and the isotropic
//! approximant of `⟨q, (Ṽ + √s W − z)^{-1} q⟩`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::gaussian_sym;
use crate::error::{LabError, Result};
use crate::numerics::{richardson_to_zero, Extrapolation};
use crate::spectral::{stieltjes_from_eigenvalues, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeConvOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
}

impl Default for FreeConvOptions {
    fn default() -> Self {
        FreeConvOptions {
            tol: 1e-13,
            max_iter: 10_000,
            omega: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeConvSolution {
    pub z: Complex64,
    pub s: f64,
    pub m: Complex64,
    /// `g_k = 1/(λ_k − z − s m)` in the order of the input spectrum.
    pub g: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

impl FreeConvSolution {
    /// `|m − mean(g)|`, recomputed from the stored weights.
    pub fn self_consistency(&self) -> f64 {
        let mean: Complex64 = self.g.iter().sum::<Complex64>() / self.g.len() as f64;
        (self.m - mean).norm()
    }
}

fn weights(lambdas: &[f64], z: Complex64, s: f64, m: Complex64) -> Vec<Complex64> {
    let shift = z + m * s;
    lambdas.iter().map(|&l| (Complex64::new(l, 0.0) - shift).inv()).collect()
}

fn mean(v: &[Complex64]) -> Complex64 {
    v.iter().sum::<Complex64>() / v.len() as f64
}

/// Solves `m = (1/n) Σ 1/(λ_k − z − s m)` with `Im m > 0`.
///
/// Newton steps are taken while they reduce the residual and stay in the
/// upper half plane; otherwise a damped fixed-point step is used, halving the
/// damping until the step is acceptable.
pub fn solve_mfc(lambdas: &[f64], s: f64, z: Complex64, opts: FreeConvOptions) -> Result<FreeConvSolution> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(LabError::domain(format!("s = {s} must be >= 0")));
    }
    let m0 = stieltjes_from_eigenvalues(lambdas, z)?;
    if s == 0.0 {
        let g = weights(lambdas, z, 0.0, m0);
        return Ok(FreeConvSolution {
            z,
            s,
            m: m0,
            g,
            iterations: 0,
            residual: 0.0,
        });
    }
    // Continuation in η from high above the axis, where the map is a strong
    // contraction, down to the requested point.
    let mut heights = vec![z.im];
    while heights.last().copied().unwrap_or(0.0) < 2.0 {
        let h = heights.last().copied().unwrap_or(0.0) * 2.0;
        heights.push(h);
    }
    heights.reverse();
    let mut m = stieltjes_from_eigenvalues(lambdas, Complex64::new(z.re, heights[0]))?;
    let mut iterations = 0;
    let mut sol = None;
    for &h in &heights {
        let stage = solve_from(lambdas, s, Complex64::new(z.re, h), m, opts)?;
        iterations += stage.iterations;
        m = stage.m;
        sol = Some(stage);
    }
    let mut sol = sol.expect("at least one stage");
    sol.iterations = iterations;
    Ok(sol)
}

fn solve_from(
    lambdas: &[f64],
    s: f64,
    z: Complex64,
    start: Complex64,
    opts: FreeConvOptions,
) -> Result<FreeConvSolution> {
    let n = lambdas.len() as f64;
    let mut m = start;
    let mut g = weights(lambdas, z, s, m);
    let mut residual = (m - mean(&g)).norm();
    let mut trajectory = vec![m];
    let mut omega = opts.omega;
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations >= opts.max_iter {
            return Err(LabError::NonConvergence {
                iterations,
                residual,
                trajectory,
            });
        }
        iterations += 1;
        let image = mean(&g);
        let slope = Complex64::new(1.0, 0.0) - g.iter().map(|x| x * x).sum::<Complex64>() * (s / n);
        let newton = m - (m - image) / slope;
        let mut accepted = false;
        if newton.im > 0.0 && newton.re.is_finite() && newton.im.is_finite() {
            let gn = weights(lambdas, z, s, newton);
            let rn = (newton - mean(&gn)).norm();
            if rn < residual {
                m = newton;
                g = gn;
                residual = rn;
                accepted = true;
            }
        }
        while !accepted {
            let candidate = m * (1.0 - omega) + image * omega;
            if candidate.im > 0.0 {
                let gc = weights(lambdas, z, s, candidate);
                let rc = (candidate - mean(&gc)).norm();
                if rc < residual {
                    m = candidate;
                    g = gc;
                    residual = rc;
                    accepted = true;
                    continue;
                }
            }
            omega *= 0.5;
            if omega < 1e-12 {
                return Err(LabError::NonConvergence {
                    iterations,
                    residual,
                    trajectory,
                });
            }
        }
        trajectory.push(m);
    }
    Ok(FreeConvSolution {
        z,
        s,
        m,
        g,
        iterations,
        residual,
    })
}

/// `(1/π) Im m_{s,fc}(E + iη)` extrapolated to `η → 0` over `etas`.
pub fn rho_fc(lambdas: &[f64], s: f64, energy: f64, etas: &[f64], opts: FreeConvOptions) -> Result<Extrapolation> {
    if !(s > 0.0) {
        return Err(LabError::domain("density of the free convolution needs s > 0"));
    }
    if etas.len() < 2 {
        return Err(LabError::domain("extrapolation needs at least two eta values"));
    }
    let values = etas
        .iter()
        .map(|&eta| solve_mfc(lambdas, s, Complex64::new(energy, eta), opts).map(|sol| sol.m.im / PI))
        .collect::<Result<Vec<_>>>()?;
    Ok(richardson_to_zero(etas, &values))
}

fn check_unit(q: &[f64], dim: usize) -> Result<()> {
    if q.len() != dim {
        return Err(LabError::Shape {
            expected: format!("vector of length {dim}"),
            rows: q.len(),
            cols: 1,
        });
    }
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(LabError::domain(format!("q must be a unit vector, |q| = {norm}")));
    }
    Ok(())
}

/// Coordinates `⟨u_k, q⟩` of `q` in the decomposition basis.
fn basis_coordinates(decomp: &SpectralDecomposition, q: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let n = decomp.n();
    let top = DVector::from_column_slice(&q[..n]);
    let bottom = DVector::from_column_slice(&q[n..]);
    (decomp.right().tr_mul(&top), decomp.left().tr_mul(&bottom))
}

/// `Σ_i ½(g_i + g_{−i})(⟨u_i,q⟩² + ⟨u_{i+N},q⟩²) + Σ_i (g_i − g_{−i})⟨u_i,q⟩⟨u_{i+N},q⟩`
/// with `g_{±i} = 1/(±σ_i − z − s m_{s,fc})`.
pub fn isotropic_approximant(
    decomp: &SpectralDecomposition,
    s: f64,
    z: Complex64,
    q: &[f64],
    opts: FreeConvOptions,
) -> Result<Complex64> {
    check_unit(q, 2 * decomp.n())?;
    let sol = solve_mfc(&decomp.lambdas(), s, z, opts)?;
    Ok(approximant_from(decomp, &sol, q).0)
}

/// Approximant and the `Im Σ (c_i² + c_{i+N}²)(g_i + g_{−i})` weight.
fn approximant_from(decomp: &SpectralDecomposition, sol: &FreeConvSolution, q: &[f64]) -> (Complex64, f64) {
    let n = decomp.n();
    let (cq, cp) = basis_coordinates(decomp, q);
    let shift = sol.z + sol.m * sol.s;
    let mut total = Complex64::new(0.0, 0.0);
    let mut weight = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let sigma = decomp.sigmas()[i];
        let gp = (Complex64::new(sigma, 0.0) - shift).inv();
        let gm = (Complex64::new(-sigma, 0.0) - shift).inv();
        let mass = cq[i] * cq[i] + cp[i] * cp[i];
        total += (gp + gm) * (0.5 * mass) + (gp - gm) * (cq[i] * cp[i]);
        weight += (gp + gm) * mass;
    }
    (total, weight.im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicResidual {
    pub quadratic_form: Complex64,
    pub approximant: Complex64,
    pub residual: f64,
    /// `ψ²(Nη)^{-1/2} Im Σ (c_i² + c_{i+N}²)(g_i + g_{−i})` with `ψ = N^c`.
    pub scale: f64,
    pub ratio: f64,
}

/// Samples `W`, forms `G = (Ṽ + √s W − z)^{-1}` for the symmetrization `Ṽ`
/// described by `decomp`, and compares `⟨q, G q⟩` with the approximant.
pub fn isotropic_residual<R: Rng + ?Sized>(
    decomp: &SpectralDecomposition,
    s: f64,
    z: Complex64,
    q: &[f64],
    psi_exponent: f64,
    opts: FreeConvOptions,
    rng: &mut R,
) -> Result<IsotropicResidual> {
    let n = decomp.n();
    check_unit(q, 2 * n)?;
    if !(z.im > 0.0) {
        return Err(LabError::domain(format!("spectral parameter {z} must have Im z > 0")));
    }
    let sol = solve_mfc(&decomp.lambdas(), s, z, opts)?;
    let (approximant, weight) = approximant_from(decomp, &sol, q);
    let mut m = decomp.reconstruct();
    if s > 0.0 {
        let w = gaussian_sym(n, rng)?;
        m += w.matrix() * s.sqrt();
    }
    let dim = 2 * n;
    let shifted = m.map(|v| Complex64::new(v, 0.0)) - DMatrix::<Complex64>::identity(dim, dim) * z;
    let rhs = DVector::from_iterator(dim, q.iter().map(|&v| Complex64::new(v, 0.0)));
    let x = shifted.lu().solve(&rhs).ok_or_else(|| LabError::Numerical {
        what: "singular shifted matrix in isotropic solve".into(),
        residual: f64::INFINITY,
    })?;
    let quadratic_form: Complex64 = q.iter().zip(x.iter()).map(|(a, b)| b * *a).sum();
    let residual = (quadratic_form - approximant).norm();
    let psi = (n as f64).powf(psi_exponent);
    let scale = psi * psi / (n as f64 * z.im).sqrt() * weight;
    Ok(IsotropicResidual {
        quadratic_form,
        approximant,
        residual,
        scale,
        ratio: residual / scale,
    })
}

/// Writes `s,E,eta,re_m,im_m,residual,iterations` rows.
pub fn write_solutions_csv(solutions: &[FreeConvSolution], path: &Path) -> Result<()> {
    let fmt = |e: csv::Error| LabError::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fmt)?;
    w.write_record(["s", "E", "eta", "re_m", "im_m", "residual", "iterations"]).map_err(fmt)?;
    for sol in solutions {
        w.write_record([
            sol.s.to_string(),
            sol.z.re.to_string(),
            sol.z.im.to_string(),
            sol.m.re.to_string(),
            sol.m.im.to_string(),
            format!("{:e}", sol.residual),
            sol.iterations.to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Semicircle Stieltjes transform `(−z + √(z² − 4))/2` on the branch with `Im > 0`.
pub fn semicircle_stieltjes(z: Complex64) -> Complex64 {
    let root = (z * z - 4.0).sqrt();
    let m = (-z + root) / 2.0;
    if m.im > 0.0 {
        m
    } else {
        (-z - root) / 2.0
    }
}

/// `(1/2π) √(4 − E²)` on `[−2, 2]`.
pub fn semicircle_density(e: f64) -> f64 {
    if e.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - e * e).sqrt() / (2.0 * PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_spectrum_golden_ratio() {
        let sol = solve_mfc(&[0.0; 6], 1.0, c(0.0, 1.0), FreeConvOptions::default()).unwrap();
        let want = c(0.0, (5f64.sqrt() - 1.0) / 2.0);
        assert!((sol.m - want).norm() < 1e-12, "{}", sol.m);
        assert!(sol.self_consistency() < 1e-12);
    }

    #[test]
    fn s_zero_is_stieltjes() {
        let l = [-1.0, 0.3, 2.0];
        let z = c(0.1, 0.2);
        let sol = solve_mfc(&l, 0.0, z, FreeConvOptions::default()).unwrap();
        assert_eq!(sol.m, stieltjes_from_eigenvalues(&l, z).unwrap());
    }

    #[test]
    fn semicircle_branch() {
        let z = c(0.0, 1.0);
        assert!((semicircle_stieltjes(z) - c(0.0, (5f64.sqrt() - 1.0) / 2.0)).norm() < 1e-14);
        for e in [-1.5, 0.0, 0.7] {
            let m = semicircle_stieltjes(c(e, 1e-9));
            assert!((m.im / PI - semicircle_density(e)).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_negative_s_and_non_unit_q() {
        assert!(solve_mfc(&[0.0], -1.0, c(0.0, 1.0), FreeConvOptions::default()).is_err());
        assert!(check_unit(&[1.0, 1.0], 2).is_err());
        assert!(check_unit(&[0.6, 0.8], 2).is_ok());
    }
}
