//! Eigenvalue counts in a window around the origin, their Cauchy-smoothed
//! versions, and gap probabilities with the smoothed bracket.

use serde::{Deserialize, Serialize};

use crate::ensemble::{build_levy, build_levy_symmetric, gaussian, gaussian_symmetric};
use crate::error::{LabError, Result};
use crate::rng::stream;
use crate::spectral::{singular_values, symmetric_eigenvalues};
use crate::stable::EnsembleParams;
use crate::stats::singular::{interpolant_trial, run_coupling_time};
use crate::stats::{run_trials, TrialFailure};

/// `#{k : λ_k ∈ (e1, e2)}`.
pub fn eig_count(lambdas: &[f64], e1: f64, e2: f64) -> Result<usize> {
    if !(e1 <= e2) {
        return Err(LabError::domain(format!("empty interval ({e1}, {e2})")));
    }
    Ok(lambdas.iter().filter(|&&l| l > e1 && l < e2).count())
}

/// `(1/π) Σ_k [arctan((w − λ_k)/η) + arctan((w + λ_k)/η)]`, the count in
/// `(−w, w)` convolved with the Cauchy kernel of width `η`.
pub fn smoothed_count(lambdas: &[f64], w: f64, eta: f64) -> Result<f64> {
    if !(w > 0.0) || !(eta > 0.0) {
        return Err(LabError::domain(format!("window {w} and width {eta} must be positive")));
    }
    Ok(lambdas
        .iter()
        .map(|&l| ((w - l) / eta).atan() + ((w + l) / eta).atan())
        .sum::<f64>()
        / std::f64::consts::PI)
}

fn bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Even smooth step: 1 on `|x| ≤ 1/9`, 0 on `|x| ≥ 2/9`, monotone between.
pub fn smoothing_q(x: f64) -> f64 {
    let x = x.abs();
    let lo = 1.0 / 9.0;
    let hi = 2.0 / 9.0;
    if x <= lo {
        1.0
    } else if x >= hi {
        0.0
    } else {
        let t = (hi - x) / (hi - lo);
        let a = bump(t);
        a / (a + bump(1.0 - t))
    }
}

/// Window and smoothing scales of the counting comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingConfig {
    pub n: usize,
    pub r: f64,
    pub epsilon: f64,
    /// Half-width `w` of the counting window `(−w, w)`.
    pub window: f64,
    /// Smoothing width `η₁ = N^{−1−ε}`.
    pub eta1: f64,
    /// `l = N^{−1−99ε}`.
    pub l: f64,
    /// Ladder offset `l₁ = l N^{2ε}`.
    pub l1: f64,
}

pub const DEFAULT_EPSILON: f64 = 0.01;

impl CountingConfig {
    /// Scales for dimension `n`, window `w = r/(2N)` and exponent `ε`.
    pub fn new(n: usize, r: f64, epsilon: f64) -> Result<Self> {
        if n == 0 || !(r > 0.0) || !(epsilon > 0.0) {
            return Err(LabError::domain("counting config needs N >= 1, r > 0 and epsilon > 0"));
        }
        let nf = n as f64;
        let l = nf.powf(-1.0 - 99.0 * epsilon);
        let cfg = CountingConfig {
            n,
            r,
            epsilon,
            window: r / (2.0 * nf),
            eta1: nf.powf(-1.0 - epsilon),
            l,
            l1: l * nf.powf(2.0 * epsilon),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_window(mut self, window: f64) -> Result<Self> {
        self.window = window;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) {
            return Err(LabError::Config(format!("window {} must be positive", self.window)));
        }
        if !(self.l1 > 0.0 && self.l1 < self.eta1) {
            return Err(LabError::Config(format!(
                "ladder offset l1 = {:e} must lie in (0, eta1 = {:e})",
                self.l1, self.eta1
            )));
        }
        Ok(())
    }

    pub fn eta_minus(&self) -> f64 {
        self.eta1 - self.l1
    }

    pub fn eta_plus(&self) -> f64 {
        self.eta1 + self.l1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub exact: usize,
    /// Smoothed count at width `η₁ − l₁`.
    pub lower: f64,
    /// Smoothed count at width `η₁ + l₁`.
    pub upper: f64,
    /// `exact − lower`; the sandwich needs this `≥ −C N^{−ε}`.
    pub lower_slack: f64,
    /// `upper − exact`; the sandwich needs this `≥ −C N^{−ε}`.
    pub upper_slack: f64,
    /// Smallest `C ≥ 0` for which both sides hold.
    pub required_c: f64,
    /// Some eigenvalue lies within `l₁` of a window edge.
    pub edge: bool,
}

pub fn gap_sandwich_report(lambdas: &[f64], config: &CountingConfig) -> Result<SandwichReport> {
    config.validate()?;
    let w = config.window;
    let exact = eig_count(lambdas, -w, w)?;
    let lower = smoothed_count(lambdas, w, config.eta_minus())?;
    let upper = smoothed_count(lambdas, w, config.eta_plus())?;
    let lower_slack = exact as f64 - lower;
    let upper_slack = upper - exact as f64;
    let shortfall = (-lower_slack).max(-upper_slack).max(0.0);
    let required_c = shortfall * (config.n as f64).powf(config.epsilon);
    let edge = lambdas.iter().any(|l| (l.abs() - w).abs() <= config.l1);
    Ok(SandwichReport {
        exact,
        lower,
        upper,
        lower_slack,
        upper_slack,
        required_c,
        edge,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapEnsemble {
    /// Symmetrization of the Lévy matrix.
    LevySymmetrization,
    /// Symmetrization of an i.i.d. N(0, 1/N) matrix.
    GaussianSymmetrization,
    Interpolant {
        gamma: f64,
        #[serde(default)]
        t: Option<f64>,
    },
    /// Symmetric Lévy matrix.
    LevySymmetric,
    /// Symmetric Gaussian matrix with variance 1/N entries.
    GaussianSymmetric,
}

fn signed(sv: Vec<f64>) -> Vec<f64> {
    let mut out: Vec<f64> = sv.iter().rev().map(|s| -s).collect();
    out.extend(sv);
    out
}

/// Spectrum of trial `trial` of `ensemble`.
pub fn gap_spectrum(params: &EnsembleParams, ensemble: GapEnsemble, t: f64, trial: u64) -> Result<Vec<f64>> {
    let mut rng = stream(params.seed, trial);
    Ok(match ensemble {
        GapEnsemble::LevySymmetrization => signed(singular_values(build_levy(params, &mut rng)?.matrix())?),
        GapEnsemble::GaussianSymmetrization => signed(singular_values(gaussian(params.n, &mut rng)?.matrix())?),
        GapEnsemble::Interpolant { gamma, .. } => {
            signed(singular_values(&interpolant_trial(params, gamma, t, trial)?.lower_block()?)?)
        }
        GapEnsemble::LevySymmetric => symmetric_eigenvalues(build_levy_symmetric(params, &mut rng)?.matrix())?,
        GapEnsemble::GaussianSymmetric => symmetric_eigenvalues(gaussian_symmetric(params.n, &mut rng)?.matrix())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTrial {
    pub trial: u64,
    pub count: usize,
    pub smoothed_minus: f64,
    pub smoothed_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub window: f64,
    pub trials: usize,
    /// Fraction of trials with no eigenvalue in `(−w, w)`.
    pub p: f64,
    pub stderr: f64,
    /// `E q̃(smoothed count at η₁ + l₁)`.
    pub bracket_lo: f64,
    /// `E q̃(smoothed count at η₁ − l₁)`.
    pub bracket_hi: f64,
    /// Distance of `p` outside `[bracket_lo, bracket_hi]` (0 when inside).
    pub slack: f64,
    pub records: Vec<GapTrial>,
    pub failures: Vec<TrialFailure>,
}

impl GapEstimate {
    /// Recomputes the aggregates from `records`.
    pub fn from_records(window: f64, records: Vec<GapTrial>, failures: Vec<TrialFailure>) -> Self {
        let k = records.len() as f64;
        let p = records.iter().filter(|r| r.count == 0).count() as f64 / k;
        let bracket_lo = records.iter().map(|r| smoothing_q(r.smoothed_plus)).sum::<f64>() / k;
        let bracket_hi = records.iter().map(|r| smoothing_q(r.smoothed_minus)).sum::<f64>() / k;
        GapEstimate {
            window,
            trials: records.len(),
            p,
            stderr: (p * (1.0 - p) / k).sqrt(),
            bracket_lo,
            bracket_hi,
            slack: (bracket_lo - p).max(p - bracket_hi).max(0.0),
            records,
            failures,
        }
    }
}

/// Estimates `P(no eigenvalue in (−w, w))` over `trials` trials together with
/// the smoothed bracket built from `config`'s `η₁ ± l₁`.
pub fn gap_probability(
    params: &EnsembleParams,
    ensemble: GapEnsemble,
    w: f64,
    config: &CountingConfig,
    trials: u64,
) -> Result<GapEstimate> {
    params.validate()?;
    config.validate()?;
    if trials == 0 {
        return Err(LabError::domain("trials must be at least 1"));
    }
    if !(w > 0.0) {
        return Err(LabError::domain(format!("window {w} must be positive")));
    }
    let t = match ensemble {
        GapEnsemble::Interpolant { t: Some(t), .. } => t,
        GapEnsemble::Interpolant { t: None, .. } => run_coupling_time(params)?,
        _ => 0.0,
    };
    let (records, failures) = run_trials(trials, |trial| {
        let lambdas = gap_spectrum(params, ensemble, t, trial)?;
        Ok(GapTrial {
            trial,
            count: eig_count(&lambdas, -w, w)?,
            smoothed_minus: smoothed_count(&lambdas, w, config.eta_minus())?,
            smoothed_plus: smoothed_count(&lambdas, w, config.eta_plus())?,
        })
    });
    if records.is_empty() {
        return Err(LabError::Numerical {
            what: "every gap trial failed".into(),
            residual: f64::NAN,
        });
    }
    Ok(GapEstimate::from_records(w, records, failures))
}
