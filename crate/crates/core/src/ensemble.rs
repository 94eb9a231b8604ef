//! Matrix builders: the Lévy matrix, its symmetrization, the b-removal split,
//! Gaussian comparison ensembles, the coupling time and the interpolating
//! family between them.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::stable::{cauchy_truncated_second_moment, entry_draw, EnsembleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixTag {
    LevyD,
    SymmetrizationH,
    BigPartX,
    SmallPartA,
    GaussianL,
    GaussianSymW,
    InterpolantHgamma,
    /// Symmetric N×N matrix with i.i.d. Lévy entries on and above the diagonal.
    LevySymmetric,
    /// Symmetric N×N matrix with i.i.d. N(0, 1/N) entries on and above the diagonal.
    GaussianSymmetric,
}

impl MatrixTag {
    fn code(self) -> u32 {
        match self {
            MatrixTag::LevyD => 1,
            MatrixTag::SymmetrizationH => 2,
            MatrixTag::BigPartX => 3,
            MatrixTag::SmallPartA => 4,
            MatrixTag::GaussianL => 5,
            MatrixTag::GaussianSymW => 6,
            MatrixTag::InterpolantHgamma => 7,
            MatrixTag::LevySymmetric => 8,
            MatrixTag::GaussianSymmetric => 9,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            1 => MatrixTag::LevyD,
            2 => MatrixTag::SymmetrizationH,
            3 => MatrixTag::BigPartX,
            4 => MatrixTag::SmallPartA,
            5 => MatrixTag::GaussianL,
            6 => MatrixTag::GaussianSymW,
            7 => MatrixTag::InterpolantHgamma,
            8 => MatrixTag::LevySymmetric,
            9 => MatrixTag::GaussianSymmetric,
            other => return Err(LabError::Format(format!("unknown matrix tag code {other}"))),
        })
    }

    /// Tags whose matrices have the `[[0, Dᵀ], [D, 0]]` block form.
    pub fn is_block_symmetric(self) -> bool {
        matches!(
            self,
            MatrixTag::SymmetrizationH
                | MatrixTag::BigPartX
                | MatrixTag::SmallPartA
                | MatrixTag::GaussianSymW
                | MatrixTag::InterpolantHgamma
        )
    }
}

impl fmt::Display for MatrixTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MatrixTag::LevyD => "levy_D",
            MatrixTag::SymmetrizationH => "symmetrization_H",
            MatrixTag::BigPartX => "big_part_X",
            MatrixTag::SmallPartA => "small_part_A",
            MatrixTag::GaussianL => "gaussian_L",
            MatrixTag::GaussianSymW => "gaussian_sym_W",
            MatrixTag::InterpolantHgamma => "interpolant_Hgamma",
            MatrixTag::LevySymmetric => "levy_symmetric",
            MatrixTag::GaussianSymmetric => "gaussian_symmetric",
        };
        f.write_str(name)
    }
}

/// Dense real matrix together with the role it plays.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixHandle {
    tag: MatrixTag,
    data: DMatrix<f64>,
}

impl MatrixHandle {
    pub fn new(tag: MatrixTag, data: DMatrix<f64>) -> Self {
        MatrixHandle { tag, data }
    }

    pub fn tag(&self) -> MatrixTag {
        self.tag
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// `N` for a 2N×2N block matrix.
    pub fn half_dim(&self) -> usize {
        self.data.nrows() / 2
    }

    /// Largest `|M_ij − M_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let m = &self.data;
        if m.nrows() != m.ncols() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for j in 0..m.ncols() {
            for i in 0..j {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        worst
    }

    /// True when both N×N diagonal blocks are identically zero.
    pub fn diagonal_blocks_zero(&self) -> bool {
        let m = &self.data;
        if m.nrows() != m.ncols() || m.nrows() % 2 != 0 {
            return false;
        }
        let n = m.nrows() / 2;
        for j in 0..n {
            for i in 0..n {
                if m[(i, j)] != 0.0 || m[(i + n, j + n)] != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// The lower-left N×N block `D` of a block-symmetric matrix.
    pub fn lower_block(&self) -> Result<DMatrix<f64>> {
        require_block_shape(&self.data)?;
        let n = self.half_dim();
        Ok(self.data.view((n, 0), (n, n)).into_owned())
    }

    /// Writes the binary format: magic `LVYM`, tag code (u32), rows and cols
    /// (u64), then row-major f64 entries, all little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&self.tag.code().to_le_bytes())?;
        out.write_all(&(self.rows() as u64).to_le_bytes())?;
        out.write_all(&(self.cols() as u64).to_le_bytes())?;
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.write_all(&self.data[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let fmt_err = |e: std::io::Error| LabError::Format(format!("truncated matrix file: {e}"));
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(fmt_err)?;
        if &magic != MAGIC {
            return Err(LabError::Format("bad magic, not a matrix file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4).map_err(fmt_err)?;
        let tag = MatrixTag::from_code(u32::from_le_bytes(b4))?;
        input.read_exact(&mut b8).map_err(fmt_err)?;
        let rows = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8).map_err(fmt_err)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let mut data = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                input.read_exact(&mut b8).map_err(fmt_err)?;
                data[(i, j)] = f64::from_le_bytes(b8);
            }
        }
        Ok(MatrixHandle { tag, data })
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| LabError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_binary(&mut w).map_err(|e| LabError::io(path, e))?;
        w.flush().map_err(|e| LabError::io(path, e))
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| LabError::io(path, e))?;
        Self::read_binary(BufReader::new(file))
    }

    /// Plain CSV, one matrix row per line, no header.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
        for i in 0..self.rows() {
            let row: Vec<String> = (0..self.cols()).map(|j| format!("{:e}", self.data[(i, j)])).collect();
            w.write_record(&row)
                .map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| LabError::io(path, e))
    }
}

const MAGIC: &[u8; 4] = b"LVYM";

fn require_block_shape(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() % 2 != 0 || m.nrows() == 0 {
        return Err(LabError::Shape {
            expected: "square 2N x 2N".into(),
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// N×N matrix with i.i.d. entries `N^{-1/a}(J + Z)`.
pub fn build_levy<R: Rng + ?Sized>(params: &EnsembleParams, rng: &mut R) -> Result<MatrixHandle> {
    params.validate()?;
    let n = params.n;
    let law = params.law()?;
    let scale = params.entry_scale();
    let mut data = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            data[(i, j)] = entry_draw(&law, &params.deformation, scale, rng);
        }
    }
    Ok(MatrixHandle::new(MatrixTag::LevyD, data))
}

/// Symmetric N×N matrix with i.i.d. Lévy entries on and above the diagonal.
pub fn build_levy_symmetric<R: Rng + ?Sized>(params: &EnsembleParams, rng: &mut R) -> Result<MatrixHandle> {
    params.validate()?;
    let n = params.n;
    let law = params.law()?;
    let scale = params.entry_scale();
    let mut data = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = entry_draw(&law, &params.deformation, scale, rng);
            data[(i, j)] = v;
            data[(j, i)] = v;
        }
    }
    Ok(MatrixHandle::new(MatrixTag::LevySymmetric, data))
}

/// `[[0, Dᵀ], [D, 0]]`.
pub fn symmetrize(d: &MatrixHandle) -> Result<MatrixHandle> {
    Ok(MatrixHandle::new(MatrixTag::SymmetrizationH, block_symmetric(d.matrix())?))
}

fn block_symmetric(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if d.nrows() != d.ncols() {
        return Err(LabError::Shape {
            expected: "square N x N".into(),
            rows: d.nrows(),
            cols: d.ncols(),
        });
    }
    let n = d.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((n, 0), (n, n)).copy_from(d);
    h.view_mut((0, n), (n, n)).copy_from(&d.transpose());
    Ok(h)
}

/// Splits a symmetrization into the big part `X` (entries with
/// `N^{1/a}|h| ≥ N^b`) and the small part `A = H − X`.
pub fn split_b_removal(h: &MatrixHandle, params: &EnsembleParams) -> Result<(MatrixHandle, MatrixHandle)> {
    require_block_shape(h.matrix())?;
    if h.half_dim() != params.n {
        return Err(LabError::Shape {
            expected: format!("{0} x {0}", 2 * params.n),
            rows: h.rows(),
            cols: h.cols(),
        });
    }
    let level = params.truncation_level();
    let big = h.matrix().map(|v| if v.abs() >= level { v } else { 0.0 });
    let small = h.matrix().map(|v| if v.abs() >= level { 0.0 } else { v });
    Ok((
        MatrixHandle::new(MatrixTag::BigPartX, big),
        MatrixHandle::new(MatrixTag::SmallPartA, small),
    ))
}

/// N×N matrix with i.i.d. N(0, 1/N) entries.
pub fn gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<MatrixHandle> {
    if n == 0 {
        return Err(LabError::domain("dimension must be at least 1"));
    }
    let sd = (n as f64).recip().sqrt();
    let mut data = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let g: f64 = rng.sample(StandardNormal);
            data[(i, j)] = sd * g;
        }
    }
    Ok(MatrixHandle::new(MatrixTag::GaussianL, data))
}

/// Symmetrization of an N×N i.i.d. N(0, 1/N) matrix.
pub fn gaussian_sym<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<MatrixHandle> {
    let l = gaussian(n, rng)?;
    Ok(MatrixHandle::new(MatrixTag::GaussianSymW, block_symmetric(l.matrix())?))
}

/// Symmetric N×N matrix with i.i.d. N(0, 1/N) entries on and above the diagonal.
pub fn gaussian_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<MatrixHandle> {
    if n == 0 {
        return Err(LabError::domain("dimension must be at least 1"));
    }
    let sd = (n as f64).recip().sqrt();
    let mut data = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let g: f64 = rng.sample(StandardNormal);
            data[(i, j)] = sd * g;
            data[(j, i)] = sd * g;
        }
    }
    Ok(MatrixHandle::new(MatrixTag::GaussianSymmetric, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMethod {
    MonteCarlo,
    Quadrature,
}

/// `t = N · Var(h 1{N^{1/a}|h| < N^b})` for one entry `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingTime {
    pub t: f64,
    pub method: CouplingMethod,
    pub stderr: f64,
    pub samples: u64,
}

/// Draws per Monte Carlo batch.
pub const COUPLING_BATCH: usize = 1_000_000;
/// Batches tried before giving up on the requested precision.
pub const COUPLING_MAX_BATCHES: usize = 32;

/// Estimates the coupling time to standard error `precision`.
///
/// The quadrature route is available only for `a = 1` with a discrete
/// deformation, where the truncated Cauchy moment has a closed form.
pub fn coupling_time<R: Rng + ?Sized>(
    params: &EnsembleParams,
    precision: f64,
    method: CouplingMethod,
    rng: &mut R,
) -> Result<CouplingTime> {
    params.validate()?;
    if !(precision > 0.0) {
        return Err(LabError::domain("precision must be positive"));
    }
    let n = params.n as f64;
    let level = params.truncation_level();
    match method {
        CouplingMethod::Quadrature => {
            if (params.a - 1.0).abs() > 1e-15 {
                return Err(LabError::domain("quadrature coupling time needs a = 1"));
            }
            let atoms = params
                .deformation
                .atoms()
                .ok_or_else(|| LabError::domain("quadrature coupling time needs a discrete deformation"))?;
            let sigma = params.law()?.sigma();
            let cutoff = level / params.entry_scale();
            let moment: f64 = atoms
                .iter()
                .map(|&(c, p)| p * cauchy_truncated_second_moment(sigma, c, cutoff))
                .sum();
            let scale = params.entry_scale();
            Ok(CouplingTime {
                t: n * scale * scale * moment,
                method,
                stderr: 0.0,
                samples: 0,
            })
        }
        CouplingMethod::MonteCarlo => {
            let law = params.law()?;
            let scale = params.entry_scale();
            let (mut count, mut s1, mut s2, mut s4) = (0u64, 0.0f64, 0.0f64, 0.0f64);
            let mut estimate = 0.0;
            let mut stderr = f64::INFINITY;
            for _ in 0..COUPLING_MAX_BATCHES {
                for _ in 0..COUPLING_BATCH {
                    let h = entry_draw(&law, &params.deformation, scale, rng);
                    let y = if h.abs() < level { h } else { 0.0 };
                    s1 += y;
                    s2 += y * y;
                    s4 += y * y * y * y;
                }
                count += COUPLING_BATCH as u64;
                let k = count as f64;
                let mean = s1 / k;
                let second = s2 / k;
                let var = second - mean * mean;
                // Delta method: the sample second moment dominates the error
                // since the mean vanishes by symmetry.
                let var_y2 = (s4 / k - second * second).max(0.0);
                estimate = n * var;
                stderr = n * (var_y2 / k).sqrt();
                if stderr <= precision {
                    return Ok(CouplingTime {
                        t: estimate,
                        method,
                        stderr,
                        samples: count,
                    });
                }
            }
            Err(LabError::BudgetExceeded {
                estimate,
                stderr,
                target: precision,
            })
        }
    }
}

/// `γA + √t·√(1−γ²)·W + X`.
pub fn interpolate(
    big: &MatrixHandle,
    small: &MatrixHandle,
    noise: &MatrixHandle,
    t: f64,
    gamma: f64,
) -> Result<MatrixHandle> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(LabError::domain(format!("gamma = {gamma} outside [0, 1]")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::domain(format!("coupling time t = {t} must be positive")));
    }
    for m in [small, noise] {
        if m.matrix().shape() != big.matrix().shape() {
            return Err(LabError::Shape {
                expected: format!("{} x {}", big.rows(), big.cols()),
                rows: m.rows(),
                cols: m.cols(),
            });
        }
    }
    let c = t.sqrt() * (1.0 - gamma * gamma).sqrt();
    let mut out = big.matrix().clone();
    out.zip_zip_apply(small.matrix(), noise.matrix(), |x, a, w| {
        *x = (gamma * a + c * w) + *x;
    });
    Ok(MatrixHandle::new(MatrixTag::InterpolantHgamma, out))
}

/// Noise-only perturbation `X + √s·W` used by the monotonicity checks.
pub fn perturb(big: &MatrixHandle, noise: &MatrixHandle, s: f64) -> Result<MatrixHandle> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(LabError::domain(format!("noise level s = {s} must be >= 0")));
    }
    if noise.matrix().shape() != big.matrix().shape() {
        return Err(LabError::Shape {
            expected: format!("{} x {}", big.rows(), big.cols()),
            rows: noise.rows(),
            cols: noise.cols(),
        });
    }
    let c = s.sqrt();
    let mut out = big.matrix().clone();
    out.zip_apply(noise.matrix(), |x, w| *x += c * w);
    Ok(MatrixHandle::new(MatrixTag::InterpolantHgamma, out))
}

/// One line of the parameter report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub pass: bool,
    /// Distance to the boundary; negative when violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub checks: Vec<ConstraintCheck>,
    /// A feasible `(ν, ρ)` for the given `a`, when `a` itself is admissible.
    pub feasible_nu_rho: Option<(f64, f64)>,
}

impl ParamReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} (margin {:.6})", c.name, c.margin))
            .collect()
    }
}

/// Checks the five admissibility constraints on `(a, b, ρ, ν)`.
pub fn validate_params(a: f64, b: f64, rho: f64, nu: f64) -> ParamReport {
    let mut checks = Vec::with_capacity(5);
    let mut push = |name: &str, margin: f64| {
        checks.push(ConstraintCheck {
            name: name.to_string(),
            pass: margin > 0.0,
            margin: if margin.is_nan() { f64::NEG_INFINITY } else { margin },
        })
    };
    push("0 < a < 2", a.min(2.0 - a));
    let mismatch = (nu - (1.0 / a - b)).abs();
    let consistent = mismatch <= 1e-12 * (1.0 + nu.abs());
    push("nu = 1/a - b > 0", if consistent { nu } else { -mismatch });
    push("0 < rho < nu", rho.min(nu - rho));
    push("1/(4-a) < nu < 1/(4-2a)", (nu - 1.0 / (4.0 - a)).min(1.0 / (4.0 - 2.0 * a) - nu));
    push("a*rho < (2-a)*nu", (2.0 - a) * nu - a * rho);
    let feasible_nu_rho = (a > 0.0 && a < 2.0).then(|| feasible_exponents(a));
    ParamReport {
        checks,
        feasible_nu_rho,
    }
}

/// Midpoint of the admissible ν window and half of the admissible ρ range.
pub fn feasible_exponents(a: f64) -> (f64, f64) {
    let nu = 0.5 * (1.0 / (4.0 - a) + 1.0 / (4.0 - 2.0 * a));
    let rho = 0.5 * nu.min((2.0 - a) * nu / a);
    (nu, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stable::Deformation;

    fn params(n: usize) -> EnsembleParams {
        EnsembleParams::new(n, 1.5, 0.7, 0.2).with_seed(5)
    }

    #[test]
    fn report_for_reference_parameters() {
        let r = validate_params(1.0, 0.6, 0.3, 0.4);
        assert!(r.all_pass(), "{:?}", r.failures());
        let r = validate_params(1.0, 0.4, 0.3, 0.6);
        let f = r.failures();
        assert_eq!(f.len(), 1);
        assert!(f[0].starts_with("1/(4-a) < nu < 1/(4-2a)"));
        let r = validate_params(1.0, 0.6, 0.4, 0.4);
        assert!(r.failures().iter().any(|f| f.starts_with("0 < rho < nu")));
    }

    #[test]
    fn feasible_default_is_feasible() {
        for k in 1..40 {
            let a = k as f64 * 0.05;
            let (nu, rho) = feasible_exponents(a);
            assert!(validate_params(a, 1.0 / a - nu, rho, nu).all_pass(), "a = {a}");
        }
    }

    #[test]
    fn symmetrize_small_cases() {
        let d = MatrixHandle::new(MatrixTag::LevyD, DMatrix::from_element(1, 1, 1.0));
        let h = symmetrize(&d).unwrap();
        assert_eq!(h.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let rect = MatrixHandle::new(MatrixTag::LevyD, DMatrix::zeros(2, 3));
        assert!(matches!(symmetrize(&rect), Err(LabError::Shape { .. })));
    }

    #[test]
    fn split_extremes() {
        let p = params(3);
        let tiny = DMatrix::from_element(3, 3, 1e-9);
        let h = symmetrize(&MatrixHandle::new(MatrixTag::LevyD, tiny)).unwrap();
        let (x, a) = split_b_removal(&h, &p).unwrap();
        assert!(x.matrix().iter().all(|&v| v == 0.0));
        assert_eq!(a.matrix(), h.matrix());
        let huge = DMatrix::from_element(3, 3, 1e9);
        let h = symmetrize(&MatrixHandle::new(MatrixTag::LevyD, huge)).unwrap();
        let (x, a) = split_b_removal(&h, &p).unwrap();
        assert_eq!(x.matrix(), h.matrix());
        assert!(a.matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolant_endpoints() {
        let p = params(6);
        let mut rng = stream(1, 0);
        let h = symmetrize(&build_levy(&p, &mut rng).unwrap()).unwrap();
        let (x, a) = split_b_removal(&h, &p).unwrap();
        let w = gaussian_sym(6, &mut rng).unwrap();
        let t = 0.3;
        let h0 = interpolate(&x, &a, &w, t, 0.0).unwrap();
        assert_eq!(h0.matrix(), &(x.matrix() + w.matrix() * t.sqrt()));
        let h1 = interpolate(&x, &a, &w, t, 1.0).unwrap();
        assert_eq!(h1.matrix(), h.matrix());
        let g = std::f64::consts::FRAC_1_SQRT_2;
        let hm = interpolate(&x, &a, &w, t, g).unwrap();
        let expect = (a.matrix() + w.matrix() * t.sqrt()) * g + x.matrix();
        assert!((hm.matrix() - expect).amax() < 1e-15);
        assert!(interpolate(&x, &a, &w, t, 1.5).is_err());
        assert!(hm.diagonal_blocks_zero());
        assert_eq!(hm.asymmetry(), 0.0);
    }

    #[test]
    fn binary_round_trip() {
        let p = params(4);
        let d = build_levy(&p, &mut stream(2, 0)).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 16 + 16 * 8);
        let back = MatrixHandle::read_binary(&buf[..]).unwrap();
        assert_eq!(back, d);
        assert!(MatrixHandle::read_binary(&buf[..10]).is_err());
    }

    #[test]
    fn quadrature_coupling_needs_cauchy() {
        let p = params(16);
        assert!(coupling_time(&p, 1e-3, CouplingMethod::Quadrature, &mut stream(0, 0)).is_err());
        let p = EnsembleParams::new(16, 1.0, 0.4, 0.3).with_deformation(Deformation::Uniform { half_width: 1.0 });
        assert!(coupling_time(&p, 1e-3, CouplingMethod::Quadrature, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn budget_error_carries_estimate() {
        let p = EnsembleParams::new(16, 1.0, 0.4, 0.3);
        match coupling_time(&p, 1e-12, CouplingMethod::MonteCarlo, &mut stream(0, 0)) {
            Err(LabError::BudgetExceeded { estimate, .. }) => assert!(estimate > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
