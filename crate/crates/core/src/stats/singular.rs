//! Least singular values, bottom-k statistics, eigenvector sup-norms and the
//! coupled noise-monotonicity checks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    build_levy, coupling_time, gaussian, gaussian_sym, interpolate, perturb, split_b_removal, symmetrize,
    CouplingMethod, MatrixHandle,
};
use crate::error::{LabError, Result};
use crate::limit::xi;
use crate::rng::{stream, substream};
use crate::spectral::{singular_values, SpectralDecomposition};
use crate::stable::EnsembleParams;
use crate::stats::{run_trials, TrialFailure};

/// `1 − exp(−r²/2 − r)`.
pub fn lsv_limit_cdf(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(LabError::domain(format!("r = {r} must be >= 0")));
    }
    Ok(-(-(r * r / 2.0 + r)).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LsvEnsemble {
    Levy,
    Gaussian,
    /// `γA + √t√(1−γ²)W + X`; `t` defaults to the Monte Carlo coupling time.
    Interpolant {
        gamma: f64,
        #[serde(default)]
        t: Option<f64>,
    },
}

impl LsvEnsemble {
    pub fn label(&self) -> String {
        match self {
            LsvEnsemble::Levy => "levy".into(),
            LsvEnsemble::Gaussian => "gaussian".into(),
            LsvEnsemble::Interpolant { gamma, .. } => format!("interpolant(gamma={gamma})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsvSample {
    pub trial: u64,
    pub seed: u64,
    pub raw: f64,
    pub scaled: f64,
    pub ensemble: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsvRun {
    pub samples: Vec<LsvSample>,
    pub failures: Vec<TrialFailure>,
    /// Scale factor applied on top of `N`.
    pub xi: f64,
    pub coupling_time: Option<f64>,
}

/// Standard error target for the coupling time used by interpolant runs.
pub const COUPLING_PRECISION: f64 = 1e-4;

/// Coupling time for interpolant runs, drawn from a stream reserved for it.
pub fn run_coupling_time(params: &EnsembleParams) -> Result<f64> {
    let mut rng = substream(params.seed, u64::MAX, 7);
    Ok(coupling_time(params, COUPLING_PRECISION, CouplingMethod::MonteCarlo, &mut rng)?.t)
}

/// Builds the interpolant of one trial: the Lévy matrix from stream
/// `(seed, trial)` and the Gaussian noise from a sibling stream.
pub fn interpolant_trial(params: &EnsembleParams, gamma: f64, t: f64, trial: u64) -> Result<MatrixHandle> {
    let (x, a, w) = coupled_parts(params, trial)?;
    interpolate(&x, &a, &w, t, gamma)
}

/// `(X, A, W)` of one trial.
pub fn coupled_parts(params: &EnsembleParams, trial: u64) -> Result<(MatrixHandle, MatrixHandle, MatrixHandle)> {
    let d = build_levy(params, &mut stream(params.seed, trial))?;
    let h = symmetrize(&d)?;
    let (x, a) = split_b_removal(&h, params)?;
    let w = gaussian_sym(params.n, &mut substream(params.seed, trial, 1))?;
    Ok((x, a, w))
}

fn smallest(d: &DMatrix<f64>) -> Result<f64> {
    singular_values(d)?
        .first()
        .copied()
        .ok_or_else(|| LabError::Degenerate("empty matrix".into()))
}

/// Smallest singular values over `trials` independent trials. Lévy and
/// interpolant samples are scaled by `N·ξ(a)`, Gaussian ones by `N`.
pub fn lsv_experiment(params: &EnsembleParams, ensemble: LsvEnsemble, trials: u64) -> Result<LsvRun> {
    params.validate()?;
    if trials == 0 {
        return Err(LabError::domain("trials must be at least 1"));
    }
    let n = params.n as f64;
    let (scale, t) = match ensemble {
        LsvEnsemble::Gaussian => (1.0, None),
        LsvEnsemble::Levy => (xi(params.a)?, None),
        LsvEnsemble::Interpolant { gamma, t } => {
            if !(0.0..=1.0).contains(&gamma) {
                return Err(LabError::domain(format!("gamma = {gamma} outside [0, 1]")));
            }
            let t = match t {
                Some(t) => t,
                None => run_coupling_time(params)?,
            };
            (xi(params.a)?, Some(t))
        }
    };
    let label = ensemble.label();
    let (samples, failures) = run_trials(trials, |trial| {
        let raw = match ensemble {
            LsvEnsemble::Levy => smallest(build_levy(params, &mut stream(params.seed, trial))?.matrix())?,
            LsvEnsemble::Gaussian => smallest(gaussian(params.n, &mut stream(params.seed, trial))?.matrix())?,
            LsvEnsemble::Interpolant { gamma, .. } => {
                let h = interpolant_trial(params, gamma, t.unwrap_or(0.0), trial)?;
                smallest(&h.lower_block()?)?
            }
        };
        Ok(LsvSample {
            trial,
            seed: params.seed,
            raw,
            scaled: n * scale * raw,
            ensemble: label.clone(),
        })
    });
    Ok(LsvRun {
        samples,
        failures,
        xi: scale,
        coupling_time: t,
    })
}

/// `(N s_1, …, N s_k)` from a decomposition.
pub fn bottom_k(decomp: &SpectralDecomposition, k: usize) -> Result<Vec<f64>> {
    let n = decomp.n();
    if k == 0 || k > n {
        return Err(LabError::domain(format!("k = {k} outside 1..={n}")));
    }
    Ok(decomp.sigmas()[..k].iter().map(|s| s * n as f64).collect())
}

/// `(N s_1, …, N s_k)` of a square matrix, without singular vectors.
pub fn bottom_k_of(d: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    let n = d.nrows();
    if k == 0 || k > n {
        return Err(LabError::domain(format!("k = {k} outside 1..={n}")));
    }
    Ok(singular_values(d)?[..k].iter().map(|s| s * n as f64).collect())
}

/// Largest `‖u‖_∞` over eigenvectors of the symmetrization with `|λ| ≤ c`;
/// `None` when no eigenvalue lies in the window.
///
/// The eigenvectors for `±σ_i` are `(q_i, ±p_i)/√2`, so both share the norm
/// `max(‖q_i‖_∞, ‖p_i‖_∞)/√2`.
pub fn delocalization_sup(decomp: &SpectralDecomposition, c: f64) -> Result<Option<f64>> {
    if !(c > 0.0) {
        return Err(LabError::domain(format!("energy half-width c = {c} must be positive")));
    }
    let mut best: Option<f64> = None;
    for (i, &s) in decomp.sigmas().iter().enumerate() {
        if s > c {
            break;
        }
        let sup = decomp.right().column(i).amax().max(decomp.left().column(i).amax()) * std::f64::consts::FRAC_1_SQRT_2;
        best = Some(best.map_or(sup, |b: f64| b.max(sup)));
    }
    Ok(best)
}

/// Smallest positive eigenvalue of `X + √s W` along a noise ladder, with
/// the pairwise monotonicity and Weyl-bound checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylCheck {
    pub s: Vec<f64>,
    pub lambda_n: Vec<f64>,
    /// Pairs `s_i < s_j` with `λ_N(s_i) < λ_N(s_j) − tol`.
    pub monotone_violations: usize,
    pub worst_monotone_violation: f64,
    /// Pairs with `|λ_N(s_i) − λ_N(s_j)| > (√s_j − √s_i)‖W‖ + tol`.
    pub bound_violations: usize,
    pub pairs: usize,
    pub noise_norm: f64,
}

/// Absolute slack allowed in both checks.
pub const WEYL_TOL: f64 = 1e-12;

pub fn weyl_check(big: &MatrixHandle, noise: &MatrixHandle, s: &[f64]) -> Result<WeylCheck> {
    let mut ladder = s.to_vec();
    ladder.sort_by(f64::total_cmp);
    let lambda_n = ladder
        .iter()
        .map(|&si| smallest(&perturb(big, noise, si)?.lower_block()?))
        .collect::<Result<Vec<_>>>()?;
    let noise_norm = singular_values(&noise.lower_block()?)?.last().copied().unwrap_or(0.0);
    let (mut monotone_violations, mut bound_violations, mut pairs) = (0, 0, 0);
    let mut worst = 0.0f64;
    for i in 0..ladder.len() {
        for j in i + 1..ladder.len() {
            if ladder[i] >= ladder[j] {
                continue;
            }
            pairs += 1;
            let drop = lambda_n[j] - lambda_n[i];
            if drop > WEYL_TOL {
                monotone_violations += 1;
                worst = worst.max(drop);
            }
            let allowed = (ladder[j].sqrt() - ladder[i].sqrt()) * noise_norm + WEYL_TOL;
            if drop.abs() > allowed {
                bound_violations += 1;
            }
        }
    }
    Ok(WeylCheck {
        s: ladder,
        lambda_n,
        monotone_violations,
        worst_monotone_violation: worst,
        bound_violations,
        pairs,
        noise_norm,
    })
}
