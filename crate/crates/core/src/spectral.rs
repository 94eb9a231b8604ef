//! Resolvents, Stieltjes transforms and the SVD-based decomposition of a
//! symmetrization, with the exact identities used as numerical oracles.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::MatrixHandle;
use crate::error::{LabError, Result};

/// Contract on `‖(M − z)G − I‖_max`.
pub const RESOLVENT_TOL: f64 = 1e-8;
/// Contract on the relative eigen-equation residual of a decomposition.
pub const DECOMPOSITION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventMethod {
    DirectSolve,
    ViaDecomposition,
}

/// `G = (M − z)^{-1}` at one spectral parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventSample {
    pub z: Complex64,
    pub g: DMatrix<Complex64>,
    pub method: ResolventMethod,
}

impl ResolventSample {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// `(1/dim) Tr G`.
    pub fn normalized_trace(&self) -> Complex64 {
        self.g.trace() / self.dim() as f64
    }

    pub fn max_modulus(&self) -> f64 {
        self.g.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.g - self.g.transpose()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn check_upper(z: Complex64) -> Result<()> {
    if z.im > 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(LabError::domain(format!("spectral parameter {z} must have Im z > 0")))
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == m.ncols() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(LabError::Shape {
            expected: "non-empty square".into(),
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Resolvent of a real symmetric matrix.
pub fn resolvent(m: &DMatrix<f64>, z: Complex64, method: ResolventMethod) -> Result<ResolventSample> {
    check_upper(z)?;
    check_square(m)?;
    let g = match method {
        ResolventMethod::DirectSolve => {
            let shifted = complexify(m) - DMatrix::<Complex64>::identity(m.nrows(), m.ncols()) * z;
            shifted.lu().try_inverse().ok_or_else(|| LabError::Numerical {
                what: "singular shifted matrix in resolvent solve".into(),
                residual: f64::INFINITY,
            })?
        }
        ResolventMethod::ViaDecomposition => {
            let eig = m.clone().symmetric_eigen();
            spectral_sum(&eig.eigenvectors, eig.eigenvalues.as_slice(), z)
        }
    };
    let residual = resolvent_residual(m, z, &g);
    if !(residual <= RESOLVENT_TOL) {
        return Err(LabError::Numerical {
            what: "resolvent residual above tolerance".into(),
            residual,
        });
    }
    Ok(ResolventSample { z, g, method })
}

/// `V diag(1/(λ − z)) Vᵀ` for orthonormal eigenvector columns `V`.
fn spectral_sum(vectors: &DMatrix<f64>, lambdas: &[f64], z: Complex64) -> DMatrix<Complex64> {
    let v = complexify(vectors);
    let mut scaled = v.clone();
    for (k, &l) in lambdas.iter().enumerate() {
        let w = (Complex64::new(l, 0.0) - z).inv();
        for x in scaled.column_mut(k).iter_mut() {
            *x *= w;
        }
    }
    scaled * v.transpose()
}

fn resolvent_residual(m: &DMatrix<f64>, z: Complex64, g: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let shifted = complexify(m) - DMatrix::<Complex64>::identity(n, n) * z;
    let prod = shifted * g;
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// `(1/n) Σ 1/(λ_k − z)`.
pub fn stieltjes_from_eigenvalues(lambdas: &[f64], z: Complex64) -> Result<Complex64> {
    check_upper(z)?;
    if lambdas.is_empty() {
        return Err(LabError::domain("empty spectrum"));
    }
    let sum: Complex64 = lambdas.iter().map(|&l| (Complex64::new(l, 0.0) - z).inv()).sum();
    Ok(sum / lambdas.len() as f64)
}

/// Stieltjes transform of a real symmetric matrix.
pub fn stieltjes(m: &DMatrix<f64>, z: Complex64) -> Result<Complex64> {
    check_upper(z)?;
    check_square(m)?;
    stieltjes_from_eigenvalues(&symmetric_eigenvalues(m)?, z)
}

/// Eigenvalues of a real symmetric matrix, increasing.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square(m)?;
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Numerical {
            what: "non-finite eigenvalue".into(),
            residual: f64::NAN,
        });
    }
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Singular values of a square matrix, increasing.
pub fn singular_values(d: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square(d)?;
    let mut sv: Vec<f64> = d
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| LabError::Numerical {
            what: "SVD did not converge".into(),
            residual: f64::NAN,
        })?
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(f64::total_cmp);
    Ok(sv)
}

/// Spectral decomposition of `H = [[0, Dᵀ], [D, 0]]` built from `D = P Σ Qᵀ`.
///
/// With `u_i = (q_i, 0)` and `u_{i+N} = (0, p_i)`, `H` acts on each plane
/// `span(u_i, u_{i+N})` as `σ_i [[0, 1], [1, 0]]`, so the eigenpairs are
/// `±σ_i` with eigenvectors `(u_i ± u_{i+N})/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    n: usize,
    /// Singular values, increasing.
    sigmas: Vec<f64>,
    /// Columns `p_i` (left singular vectors), in the order of `sigmas`.
    left: DMatrix<f64>,
    /// Columns `q_i` (right singular vectors), in the order of `sigmas`.
    right: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// All `2N` eigenvalues, increasing: `−σ_N, …, −σ_1, σ_1, …, σ_N`.
    pub fn lambdas(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.sigmas.iter().rev().map(|s| -s).collect();
        out.extend_from_slice(&self.sigmas);
        out
    }

    /// Orthogonal basis `U` with columns `u_1, …, u_{2N}`.
    pub fn basis(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut u = DMatrix::zeros(2 * n, 2 * n);
        u.view_mut((0, 0), (n, n)).copy_from(&self.right);
        u.view_mut((n, n), (n, n)).copy_from(&self.left);
        u
    }

    /// Orthonormal eigenvectors of `H`, columns ordered as [`Self::lambdas`].
    pub fn eigenvectors(&self) -> DMatrix<f64> {
        let n = self.n;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            // −σ_i sits at column n−1−i, +σ_i at column n+i.
            let neg = n - 1 - i;
            let pos = n + i;
            for k in 0..n {
                let q = self.right[(k, i)] * r;
                let p = self.left[(k, i)] * r;
                v[(k, neg)] = q;
                v[(k + n, neg)] = -p;
                v[(k, pos)] = q;
                v[(k + n, pos)] = p;
            }
        }
        v
    }

    /// Resolvent of `H` assembled from the decomposition.
    pub fn resolvent(&self, z: Complex64) -> Result<DMatrix<Complex64>> {
        check_upper(z)?;
        Ok(spectral_sum(&self.eigenvectors(), &self.lambdas(), z))
    }

    /// `H` rebuilt from the factors.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut d = self.left.clone();
        for (i, s) in self.sigmas.iter().enumerate() {
            d.column_mut(i).scale_mut(*s);
        }
        let d = d * self.right.transpose();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((n, 0), (n, n)).copy_from(&d);
        h.view_mut((0, n), (n, n)).copy_from(&d.transpose());
        h
    }

    /// Writes `index,lambda` rows for the signed eigenvalues.
    pub fn save_lambdas_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
        let fmt = |e: csv::Error| LabError::Format(format!("{}: {e}", path.display()));
        w.write_record(["index", "lambda"]).map_err(fmt)?;
        let n = self.n as i64;
        for (k, l) in self.lambdas().iter().enumerate() {
            let k = k as i64;
            let index = if k < n { k - n } else { k - n + 1 };
            w.write_record([index.to_string(), format!("{l:e}")]).map_err(fmt)?;
        }
        w.flush().map_err(|e| LabError::io(path, e))
    }
}

/// Decomposes a symmetrization through the SVD of its lower block.
pub fn decompose(h: &MatrixHandle) -> Result<SpectralDecomposition> {
    let d = h.lower_block()?;
    decompose_block(&d)
}

/// Decomposition of the symmetrization of `d`, without forming it.
pub fn decompose_block(d: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    check_square(d)?;
    let n = d.nrows();
    let svd = d.clone().try_svd(true, true, f64::EPSILON, 0).ok_or_else(|| LabError::Numerical {
        what: "SVD did not converge".into(),
        residual: f64::NAN,
    })?;
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => {
            return Err(LabError::Numerical {
                what: "SVD returned no singular vectors".into(),
                residual: f64::NAN,
            })
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let sigmas: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut left = DMatrix::zeros(n, n);
    let mut right = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &vt.row(src).transpose());
    }
    let decomp = SpectralDecomposition { n, sigmas, left, right };
    // Eigen-equation residual of H, through D q_i = σ_i p_i and Dᵀ p_i = σ_i q_i.
    let scale = decomp.sigmas.last().copied().unwrap_or(0.0).max(1.0);
    let mut dq = d * &decomp.right;
    let mut dtp = d.transpose() * &decomp.left;
    for i in 0..n {
        let s = decomp.sigmas[i];
        dq.column_mut(i).axpy(-s, &decomp.left.column(i), 1.0);
        dtp.column_mut(i).axpy(-s, &decomp.right.column(i), 1.0);
    }
    let residual = dq.amax().max(dtp.amax()) / scale;
    if !(residual <= DECOMPOSITION_TOL) {
        return Err(LabError::Numerical {
            what: "decomposition eigen-equation residual above tolerance".into(),
            residual,
        });
    }
    Ok(decomp)
}

/// `|Σ_k |G_jk|² − Im G_jj / Im z|`.
pub fn ward_residual(sample: &ResolventSample, j: usize) -> Result<f64> {
    if j >= sample.dim() {
        return Err(LabError::domain(format!("row {j} out of range for dimension {}", sample.dim())));
    }
    let row: f64 = sample.g.row(j).iter().map(|v| v.norm_sqr()).sum();
    Ok((row - sample.g[(j, j)].im / sample.z.im).abs())
}

/// `max_i |R_ii − z((DᵀD − z²)^{-1})_ii|` over the first `N` diagonal entries
/// of the resolvent `R` of the symmetrization of `d`.
pub fn schur_diag_residual(d: &DMatrix<f64>, z: Complex64) -> Result<f64> {
    check_upper(z)?;
    check_square(d)?;
    let n = d.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((n, 0), (n, n)).copy_from(d);
    h.view_mut((0, n), (n, n)).copy_from(&d.transpose());
    let r = resolvent(&h, z, ResolventMethod::DirectSolve)?;
    let gram = complexify(&(d.transpose() * d)) - DMatrix::<Complex64>::identity(n, n) * (z * z);
    let inv = gram.lu().try_inverse().ok_or_else(|| LabError::Numerical {
        what: "singular Gram shift".into(),
        residual: f64::INFINITY,
    })?;
    Ok((0..n).map(|i| (r.g[(i, i)] - z * inv[(i, i)]).norm()).fold(0.0, f64::max))
}

/// `‖G₁ − G₂ − G₁(M₂ − M₁)G₂‖_max`.
pub fn resolvent_difference_residual(m1: &DMatrix<f64>, m2: &DMatrix<f64>, z: Complex64) -> Result<f64> {
    if m1.shape() != m2.shape() {
        return Err(LabError::Shape {
            expected: format!("{} x {}", m1.nrows(), m1.ncols()),
            rows: m2.nrows(),
            cols: m2.ncols(),
        });
    }
    let g1 = resolvent(m1, z, ResolventMethod::DirectSolve)?.g;
    let g2 = resolvent(m2, z, ResolventMethod::DirectSolve)?.g;
    let diff = complexify(&(m2 - m1));
    let lhs = &g1 - &g2 - &g1 * diff * &g2;
    Ok(lhs.iter().map(|v| v.norm()).fold(0.0, f64::max))
}

/// Smallest strictly positive eigenvalue, i.e. the smallest nonzero singular value.
pub fn smallest_positive_eig(decomp: &SpectralDecomposition) -> Result<f64> {
    decomp
        .sigmas
        .iter()
        .copied()
        .find(|&s| s > 0.0)
        .ok_or_else(|| LabError::Degenerate("all eigenvalues are zero".into()))
}

/// `m` with row and column `k` removed.
pub fn delete_row_col(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    check_square(m)?;
    if k >= m.nrows() {
        return Err(LabError::domain(format!("index {k} out of range")));
    }
    Ok(m.clone().remove_row(k).remove_column(k))
}
