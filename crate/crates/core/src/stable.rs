//! Symmetric α-stable laws, deformed matrix entries `N^{-1/a}(J + Z)` and the
//! tail/moment oracles used to check them.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::ensemble::validate_params;
use crate::error::{LabError, Result};
use crate::numerics::{gamma, integrate, QuadOptions};

/// Scale making the tail of the stable law `P(|Z| > t) ~ t^{-a}`:
/// `σ = (π / (2 sin(πa/2) Γ(a)))^{1/a}`.
pub fn sigma_for(a: f64) -> Result<f64> {
    check_index(a)?;
    let base = PI / (2.0 * (PI * a / 2.0).sin() * gamma(a));
    let sigma = base.powf(1.0 / a);
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(LabError::Numerical {
            what: format!("stable scale for a = {a} is not finite"),
            residual: f64::NAN,
        });
    }
    Ok(sigma)
}

fn check_index(a: f64) -> Result<()> {
    if a > 0.0 && a < 2.0 {
        Ok(())
    } else {
        Err(LabError::domain(format!("stability index a = {a} outside (0, 2)")))
    }
}

/// Symmetric `(0, σ)` a-stable law with characteristic function
/// `exp(-σ^a |t|^a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableLaw {
    a: f64,
    sigma: f64,
}

impl StableLaw {
    pub fn new(a: f64, sigma: f64) -> Result<Self> {
        check_index(a)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(LabError::domain(format!("stable scale sigma = {sigma} must be positive")));
        }
        Ok(StableLaw { a, sigma })
    }

    /// The law with the tail-normalizing scale of [`sigma_for`].
    pub fn standard(a: f64) -> Result<Self> {
        Self::new(a, sigma_for(a)?)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn characteristic(&self, t: f64) -> f64 {
        (-(self.sigma * t.abs()).powf(self.a)).exp()
    }

    /// CDF by inverting the characteristic function:
    /// `F(x) = 1/2 + (1/π) ∫_0^∞ sin(xu)/u · e^{-(σu)^a} du`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.5;
        }
        0.5 + self.sine_transform(x) / PI
    }

    /// `P(|Z| > t)` for `t ≥ 0`, from the same inversion.
    pub fn tail(&self, t: f64) -> f64 {
        let t = t.abs();
        if t == 0.0 {
            return 1.0;
        }
        (1.0 - 2.0 * self.sine_transform(t) / PI).max(0.0)
    }

    fn sine_transform(&self, x: f64) -> f64 {
        // e^{-(σu)^a} < 1e-17 beyond this point.
        let upper = 40f64.powf(1.0 / self.a) / self.sigma;
        let panel = (PI / x.abs()).min(upper / 4.0);
        let panels = ((upper / panel).ceil() as usize).clamp(4, 4000);
        let breaks: Vec<f64> = (0..=panels).map(|k| upper * k as f64 / panels as f64).collect();
        let opts = QuadOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-15,
            max_subdivisions: 50_000,
        };
        let r = integrate(
            |u| {
                let kernel = if u == 0.0 { x } else { (x * u).sin() / u };
                Complex64::new(kernel * self.characteristic(u), 0.0)
            },
            &breaks,
            opts,
        );
        r.value.re
    }

    /// One draw by the Chambers–Mallows–Stuck transformation of a uniform
    /// angle and an exponential deviate (exact in distribution, β = 0).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let angle = Uniform::new(-FRAC_PI_2, FRAC_PI_2)
            .expect("finite range")
            .sample(rng);
        let unit = if (self.a - 1.0).abs() < 1e-12 {
            angle.tan()
        } else {
            let w: f64 = Exp1.sample(rng);
            let a = self.a;
            (a * angle).sin() / angle.cos().powf(1.0 / a)
                * (((1.0 - a) * angle).cos() / w).powf((1.0 - a) / a)
        };
        self.sigma * unit
    }
}

impl Distribution<f64> for StableLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw(rng)
    }
}

/// `n` i.i.d. draws of `law`.
pub fn sample_stable<R: Rng + ?Sized>(law: &StableLaw, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(LabError::domain("sample count must be at least 1"));
    }
    Ok((0..n).map(|_| law.draw(rng)).collect())
}

/// Symmetric, finite-variance deformation `J` added to the stable part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deformation {
    None,
    /// ±1 with probability ½ each.
    Rademacher,
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Finite symmetric table of atoms.
    Table { atoms: Vec<Atom> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

impl Default for Deformation {
    fn default() -> Self {
        Deformation::Rademacher
    }
}

impl Deformation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Deformation::None | Deformation::Rademacher => Ok(()),
            Deformation::Uniform { half_width } => {
                if half_width.is_finite() && *half_width >= 0.0 {
                    Ok(())
                } else {
                    Err(LabError::domain(format!("uniform half-width {half_width} must be finite and >= 0")))
                }
            }
            Deformation::Table { atoms } => {
                if atoms.is_empty() {
                    return Err(LabError::domain("deformation table is empty"));
                }
                if atoms.iter().any(|at| !(at.value.is_finite() && at.prob >= 0.0)) {
                    return Err(LabError::domain("deformation table has a non-finite value or negative probability"));
                }
                let total: f64 = atoms.iter().map(|at| at.prob).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(LabError::domain(format!("deformation probabilities sum to {total}, not 1")));
                }
                for at in atoms {
                    let mirror: f64 = atoms
                        .iter()
                        .filter(|o| (o.value + at.value).abs() <= 1e-12 * (1.0 + at.value.abs()))
                        .map(|o| o.prob)
                        .sum();
                    let own: f64 = atoms
                        .iter()
                        .filter(|o| (o.value - at.value).abs() <= 1e-12 * (1.0 + at.value.abs()))
                        .map(|o| o.prob)
                        .sum();
                    if (mirror - own).abs() > 1e-9 {
                        return Err(LabError::domain(format!(
                            "deformation table is not symmetric at value {}",
                            at.value
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Deformation::None => 0.0,
            Deformation::Rademacher => 1.0,
            Deformation::Uniform { half_width } => half_width * half_width / 3.0,
            Deformation::Table { atoms } => atoms.iter().map(|at| at.prob * at.value * at.value).sum(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Deformation::None => 0.0,
            Deformation::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Deformation::Uniform { half_width } => (2.0 * rng.random::<f64>() - 1.0) * half_width,
            Deformation::Table { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for at in atoms {
                    acc += at.prob;
                    if u < acc {
                        return at.value;
                    }
                }
                atoms.last().map(|at| at.value).unwrap_or(0.0)
            }
        }
    }

    /// Discrete support as `(value, prob)` pairs, if the law is discrete.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Deformation::None => Some(vec![(0.0, 1.0)]),
            Deformation::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Deformation::Uniform { .. } => None,
            Deformation::Table { atoms } => Some(atoms.iter().map(|at| (at.value, at.prob)).collect()),
        }
    }
}

/// Parameters governing every sampler: dimension, stability index, the
/// truncation exponents `(b, ν, ρ)`, the deformation law and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub nu: f64,
    pub rho: f64,
    #[serde(default)]
    pub deformation: Deformation,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the tail-normalizing scale of [`sigma_for`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl EnsembleParams {
    /// Parameters with `b = 1/a − ν`.
    pub fn new(n: usize, a: f64, nu: f64, rho: f64) -> Self {
        EnsembleParams {
            n,
            a,
            b: 1.0 / a - nu,
            nu,
            rho,
            deformation: Deformation::default(),
            seed: 0,
            sigma: None,
        }
    }

    /// Parameters using the feasible `(ν, ρ)` suggested by the constraint report.
    pub fn feasible(n: usize, a: f64) -> Result<Self> {
        check_index(a)?;
        let (nu, rho) = crate::ensemble::feasible_exponents(a);
        Ok(Self::new(n, a, nu, rho))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_deformation(mut self, deformation: Deformation) -> Self {
        self.deformation = deformation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(LabError::Constraint {
                failed: vec!["N >= 1".to_string()],
            });
        }
        let report = validate_params(self.a, self.b, self.rho, self.nu);
        if !report.all_pass() {
            return Err(LabError::Constraint {
                failed: report.failures(),
            });
        }
        self.deformation.validate()?;
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(LabError::domain(format!("sigma override {s} must be positive")));
            }
        }
        Ok(())
    }

    pub fn law(&self) -> Result<StableLaw> {
        match self.sigma {
            Some(s) => StableLaw::new(self.a, s),
            None => StableLaw::standard(self.a),
        }
    }

    /// `N^{-1/a}`.
    pub fn entry_scale(&self) -> f64 {
        (self.n as f64).powf(-1.0 / self.a)
    }

    /// Truncation level `N^{b - 1/a} = N^{-ν}` on the entry scale.
    pub fn truncation_level(&self) -> f64 {
        (self.n as f64).powf(self.b - 1.0 / self.a)
    }

    /// `P(|d_ij| ≥ t)` for one matrix entry, from the stable CDF oracle.
    pub fn entry_tail(&self, t: f64) -> Result<f64> {
        let law = self.law()?;
        let s = t.abs() / self.entry_scale();
        let shifted = |c: f64| (1.0 - law.cdf(s - c) + law.cdf(-s - c)).clamp(0.0, 1.0);
        match self.deformation.atoms() {
            Some(atoms) => Ok(atoms.iter().map(|&(c, p)| p * shifted(c)).sum()),
            None => {
                let h = match self.deformation {
                    Deformation::Uniform { half_width } => half_width,
                    _ => unreachable!("only the uniform deformation is continuous"),
                };
                if h == 0.0 {
                    return Ok(shifted(0.0));
                }
                let r = integrate(
                    |c| Complex64::new(shifted(c), 0.0),
                    &[-h, 0.0, h],
                    QuadOptions {
                        rel_tol: 1e-8,
                        ..Default::default()
                    },
                );
                Ok(r.value.re / (2.0 * h))
            }
        }
    }
}

/// `n` i.i.d. draws of `N^{-1/a}(J + Z)`.
pub fn sample_entry<R: Rng + ?Sized>(params: &EnsembleParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(LabError::domain("sample count must be at least 1"));
    }
    let law = params.law()?;
    let scale = params.entry_scale();
    Ok((0..n).map(|_| entry_draw(&law, &params.deformation, scale, rng)).collect())
}

#[inline]
pub(crate) fn entry_draw<R: Rng + ?Sized>(law: &StableLaw, deformation: &Deformation, scale: f64, rng: &mut R) -> f64 {
    let z = law.draw(rng);
    let j = deformation.draw(rng);
    scale * (j + z)
}

/// Monte Carlo estimate of `E |d|^p 1{|d| ≤ R}` for one entry `d`.
pub fn truncated_moment<R: Rng + ?Sized>(
    params: &EnsembleParams,
    threshold: f64,
    p: f64,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    params.validate()?;
    if p <= params.a {
        return Err(LabError::domain(format!(
            "moment exponent p = {p} must exceed the stability index a = {}",
            params.a
        )));
    }
    if !threshold.is_finite() {
        return Err(LabError::domain("truncation threshold must be finite"));
    }
    if threshold < params.entry_scale() {
        return Err(LabError::domain(format!(
            "truncation threshold {threshold} below N^(-1/a) = {}",
            params.entry_scale()
        )));
    }
    if n == 0 {
        return Err(LabError::domain("sample count must be at least 1"));
    }
    let law = params.law()?;
    let scale = params.entry_scale();
    let mut acc = 0.0;
    for _ in 0..n {
        let d = entry_draw(&law, &params.deformation, scale, rng).abs();
        if d <= threshold {
            acc += d.powf(p);
        }
    }
    Ok(acc / n as f64)
}

/// `∫_{-m}^{m} x² f(x − c) dx` for the Cauchy density `f` with scale `s`.
pub fn cauchy_truncated_second_moment(s: f64, c: f64, m: f64) -> f64 {
    let antiderivative = |y: f64| {
        (y - s * (y / s).atan()) + c * (s * s + y * y).ln() + (c * c / s) * (y / s).atan()
    };
    s / PI * (antiderivative(m - c) - antiderivative(-m - c))
}

/// Fitted constants of the two-sided tail envelope
/// `C₁/(N t^a + 1) ≤ P(|d| ≥ t) ≤ C₂/(N t^a + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEnvelope {
    pub c1: f64,
    pub c2: f64,
    /// `(t, empirical tail, empirical tail · (N t^a + 1))` per grid point.
    pub points: Vec<(f64, f64, f64)>,
}

/// Fits the envelope constants over `t_grid` from entry samples of an
/// `n_dim`-dimensional ensemble. Grid points with no exceedances are skipped.
pub fn fit_tail_envelope(samples: &[f64], n_dim: usize, a: f64, t_grid: &[f64]) -> Result<TailEnvelope> {
    if samples.is_empty() {
        return Err(LabError::domain("no samples"));
    }
    let mut points = Vec::new();
    for &t in t_grid {
        let hits = samples.iter().filter(|x| x.abs() >= t).count();
        if hits == 0 {
            continue;
        }
        let p = hits as f64 / samples.len() as f64;
        points.push((t, p, p * (n_dim as f64 * t.powf(a) + 1.0)));
    }
    if points.is_empty() {
        return Err(LabError::domain("no grid point has an exceedance"));
    }
    let c1 = points.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let c2 = points.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(TailEnvelope { c1, c2, points })
}
