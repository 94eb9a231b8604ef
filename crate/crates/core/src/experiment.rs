//! Experiment orchestration: configs, seeded runs, reports and plot data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{build_levy, split_b_removal, symmetrize, MatrixHandle};
use crate::error::{LabError, Result};
use crate::freeconv::{isotropic_residual, FreeConvOptions};
use crate::limit::{solve_limit, tabulate_density, xi, DensityRow, LimitOptions};
use crate::rng::{stream, substream, RNG_ALGORITHM};
use crate::spectral::{decompose, decompose_block, singular_values, stieltjes_from_eigenvalues};
use crate::stable::{sample_entry, EnsembleParams};
use crate::stats::counting::{gap_spectrum, GapTrial};
use crate::stats::singular::{bottom_k_of, run_coupling_time};
use crate::stats::{
    delocalization_sup, eig_count, empirical_cdf, ks_distance, lsv_experiment, lsv_limit_cdf, median,
    run_trials, smoothed_count, CountingConfig, GapEnsemble, LsvEnsemble, LsvSample, TrialFailure,
};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A run aborts when more than this fraction of its trials fail.
pub const FAILURE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Experiment {
    /// Smallest singular value against `1 − exp(−r²/2 − r)`.
    Lsv { ensemble: LsvEnsemble, trials: u64 },
    /// `(N s_1, …, N s_k)`, scaled by `ξ` for Lévy-type ensembles.
    Bottomk { ensemble: LsvEnsemble, k: usize, trials: u64 },
    /// Sup-norm of eigenvectors with `|λ| ≤ c`, against `N^{δ−1/2}`.
    Deloc { c: f64, delta: f64, trials: u64 },
    /// `|m_X − m_a|` on `points` energies in `[e_min, e_max]` at `η = N^{−eta_exponent}`.
    Locallaw {
        e_min: f64,
        e_max: f64,
        points: usize,
        eta_exponent: f64,
    },
    /// Isotropic residual at `z = energy + i N^{−eta_exponent}`; `s`
    /// defaults to the coupling time.
    Isotropic {
        energy: f64,
        eta_exponent: f64,
        #[serde(default)]
        s: Option<f64>,
        psi_exponent: f64,
        trials: u64,
    },
    /// Gap probabilities over windows `w = r/(2N)`, divided by `ξ` for
    /// Lévy-type ensembles.
    Gap {
        ensemble: GapEnsemble,
        r: Vec<f64>,
        epsilon: f64,
        trials: u64,
    },
    Density { energies: Vec<f64>, etas: Vec<f64> },
    /// Entry tails at `t = t_k N^{-1/a}` against the exact tail.
    Tailcheck { samples: usize, t_grid: Vec<f64> },
}

impl Experiment {
    pub const KINDS: [&'static str; 8] = [
        "lsv",
        "bottomk",
        "deloc",
        "locallaw",
        "isotropic",
        "gap",
        "density",
        "tailcheck",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Lsv { .. } => "lsv",
            Experiment::Bottomk { .. } => "bottomk",
            Experiment::Deloc { .. } => "deloc",
            Experiment::Locallaw { .. } => "locallaw",
            Experiment::Isotropic { .. } => "isotropic",
            Experiment::Gap { .. } => "gap",
            Experiment::Density { .. } => "density",
            Experiment::Tailcheck { .. } => "tailcheck",
        }
    }

    /// Desk-scale defaults for `kind`.
    pub fn default_for(kind: &str) -> Result<Self> {
        Ok(match kind {
            "lsv" => Experiment::Lsv {
                ensemble: LsvEnsemble::Gaussian,
                trials: 100,
            },
            "bottomk" => Experiment::Bottomk {
                ensemble: LsvEnsemble::Levy,
                k: 3,
                trials: 100,
            },
            "deloc" => Experiment::Deloc {
                c: 0.05,
                delta: 0.15,
                trials: 100,
            },
            "locallaw" => Experiment::Locallaw {
                e_min: -0.2,
                e_max: 0.2,
                points: 20,
                eta_exponent: 0.4,
            },
            "isotropic" => Experiment::Isotropic {
                energy: 0.05,
                eta_exponent: 0.6,
                s: None,
                psi_exponent: 0.05,
                trials: 50,
            },
            "gap" => Experiment::Gap {
                ensemble: GapEnsemble::LevySymmetric,
                r: vec![1.0],
                epsilon: 0.01,
                trials: 200,
            },
            "density" => Experiment::Density {
                energies: (-4..=4).map(|k| k as f64 * 0.25).collect(),
                etas: vec![0.05, 0.025, 0.0125],
            },
            "tailcheck" => Experiment::Tailcheck {
                samples: 100_000,
                t_grid: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            },
            other => return Err(LabError::Config(format!("unknown experiment kind {other:?}"))),
        })
    }

    fn trials(&self) -> u64 {
        match self {
            Experiment::Lsv { trials, .. }
            | Experiment::Bottomk { trials, .. }
            | Experiment::Deloc { trials, .. }
            | Experiment::Isotropic { trials, .. }
            | Experiment::Gap { trials, .. } => *trials,
            Experiment::Locallaw { points, .. } => *points as u64,
            Experiment::Density { energies, .. } => energies.len() as u64,
            Experiment::Tailcheck { .. } => 1,
        }
    }

    fn validate(&self, params: &EnsembleParams) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if self.trials() == 0 {
            return bad(format!("{} experiment needs at least one trial", self.kind()));
        }
        match self {
            Experiment::Lsv { ensemble, .. } | Experiment::Bottomk { ensemble, .. } => {
                if let LsvEnsemble::Interpolant { gamma, t } = ensemble {
                    if !(0.0..=1.0).contains(gamma) {
                        return bad(format!("gamma = {gamma} outside [0, 1]"));
                    }
                    if t.is_some_and(|t| !(t >= 0.0)) {
                        return bad("coupling time must be >= 0".into());
                    }
                }
                if let Experiment::Bottomk { k, .. } = self {
                    if *k == 0 || *k > params.n {
                        return bad(format!("k = {k} outside 1..={}", params.n));
                    }
                }
            }
            Experiment::Deloc { c, delta, .. } => {
                if !(*c > 0.0) || !(*delta >= 0.0) {
                    return bad("deloc needs c > 0 and delta >= 0".into());
                }
            }
            Experiment::Locallaw {
                e_min,
                e_max,
                eta_exponent,
                ..
            } => {
                if !(e_min <= e_max) || !(*eta_exponent >= 0.0) {
                    return bad("locallaw needs e_min <= e_max and eta_exponent >= 0".into());
                }
            }
            Experiment::Isotropic { s, eta_exponent, .. } => {
                if s.is_some_and(|s| !(s >= 0.0)) || !(*eta_exponent >= 0.0) {
                    return bad("isotropic needs s >= 0 and eta_exponent >= 0".into());
                }
            }
            Experiment::Gap { r, epsilon, .. } => {
                if r.is_empty() || r.iter().any(|r| !(*r > 0.0)) {
                    return bad("gap needs positive window multipliers r".into());
                }
                CountingConfig::new(params.n, r[0], *epsilon)?;
            }
            Experiment::Density { etas, .. } => {
                if etas.is_empty() || etas.iter().any(|e| !(*e > 0.0)) {
                    return bad("density needs positive etas".into());
                }
            }
            Experiment::Tailcheck { samples, t_grid } => {
                if *samples == 0 || t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) {
                    return bad("tailcheck needs samples > 0 and a positive t grid".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    /// Directory receiving the plot-data CSVs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plotdata: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: EnsembleParams,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub output: OutputPaths,
}

fn is_default(o: &OutputPaths) -> bool {
    *o == OutputPaths::default()
}

impl ExperimentConfig {
    pub fn new(params: EnsembleParams, experiment: Experiment) -> Self {
        ExperimentConfig {
            params,
            experiment,
            workers: None,
            output: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| LabError::io(path, e))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.workers == Some(0) {
            return Err(LabError::Config("workers must be at least 1".into()));
        }
        self.experiment.validate(&self.params)
    }

    /// The config with execution-only fields (workers, output paths) cleared.
    pub fn echo(&self) -> Self {
        ExperimentConfig::new(self.params.clone(), self.experiment.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngProvenance {
    pub algorithm: String,
    pub seed: u64,
    pub scheme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottomKRecord {
    pub trial: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelocRecord {
    pub trial: u64,
    /// `None` when no eigenvalue lies in the window.
    pub sup: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLawRecord {
    #[serde(rename = "E")]
    pub energy: f64,
    pub eta: f64,
    pub m_x: Complex64,
    pub m_a: Complex64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicRecord {
    pub trial: u64,
    pub s: f64,
    pub residual: f64,
    pub scale: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub r: f64,
    pub window: f64,
    #[serde(flatten)]
    pub trial: GapTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRecord {
    pub t: f64,
    pub empirical: f64,
    /// `empirical · (N t^a + 1)`.
    pub normalized: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "lowercase")]
pub enum Records {
    Lsv(Vec<LsvSample>),
    Bottomk(Vec<BottomKRecord>),
    Deloc(Vec<DelocRecord>),
    Locallaw(Vec<LocalLawRecord>),
    Isotropic(Vec<IsotropicRecord>),
    Gap(Vec<GapRecord>),
    Density(Vec<DensityRow>),
    Tailcheck(Vec<TailRecord>),
}

impl Records {
    fn len(&self) -> usize {
        match self {
            Records::Lsv(v) => v.len(),
            Records::Bottomk(v) => v.len(),
            Records::Deloc(v) => v.len(),
            Records::Locallaw(v) => v.len(),
            Records::Isotropic(v) => v.len(),
            Records::Gap(v) => v.len(),
            Records::Density(v) => v.len(),
            Records::Tailcheck(v) => v.len(),
        }
    }
}

/// Outcome of a run. Aggregates are a pure function of `config` and
/// `records`; [`ExperimentReport::audit`] recomputes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub artifact_version: String,
    pub rng: RngProvenance,
    pub config: ExperimentConfig,
    pub records: Records,
    pub failures: Vec<TrialFailure>,
    pub aggregates: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| LabError::io(path, e))
    }

    /// Reads a report and checks its aggregates against the records.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let report: Self = serde_json::from_str(&text).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
        report.audit()?;
        Ok(report)
    }

    pub fn audit(&self) -> Result<()> {
        let recomputed = aggregate(&self.config, &self.records, &self.failures)?;
        if recomputed != self.aggregates {
            let keys: Vec<&String> = recomputed
                .iter()
                .filter(|(k, v)| self.aggregates.get(*k) != Some(v))
                .map(|(k, _)| k)
                .chain(self.aggregates.keys().filter(|k| !recomputed.contains_key(*k)))
                .collect();
            return Err(LabError::Format(format!("aggregates disagree with records: {keys:?}")));
        }
        Ok(())
    }
}

/// Runs the experiment, on a dedicated pool when `workers` is set.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| LabError::Config(format!("thread pool: {e}")))?
            .install(|| run_on_current_pool(config)),
        None => run_on_current_pool(config),
    }
}

fn run_on_current_pool(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let params = &config.params;
    let (records, failures) = match &config.experiment {
        Experiment::Lsv { ensemble, trials } => {
            let run = lsv_experiment(params, *ensemble, *trials)?;
            (Records::Lsv(run.samples), run.failures)
        }
        Experiment::Bottomk { ensemble, k, trials } => run_bottomk(params, *ensemble, *k, *trials)?,
        Experiment::Deloc { c, delta, trials } => {
            let threshold = (params.n as f64).powf(delta - 0.5);
            let (rows, failures) = run_trials(*trials, |trial| {
                let d = build_levy(params, &mut stream(params.seed, trial))?;
                let sup = delocalization_sup(&decompose_block(d.matrix())?, *c)?;
                Ok(DelocRecord { trial, sup, threshold })
            });
            (Records::Deloc(rows), failures)
        }
        Experiment::Locallaw {
            e_min,
            e_max,
            points,
            eta_exponent,
        } => run_locallaw(params, *e_min, *e_max, *points, *eta_exponent)?,
        Experiment::Isotropic {
            energy,
            eta_exponent,
            s,
            psi_exponent,
            trials,
        } => {
            let s = match s {
                Some(s) => *s,
                None => run_coupling_time(params)?,
            };
            let z = Complex64::new(*energy, (params.n as f64).powf(-eta_exponent));
            let (rows, failures) = run_trials(*trials, |trial| {
                let x = big_part(params, trial)?;
                let q = unit_vector(2 * params.n, &mut substream(params.seed, trial, 2));
                let res = isotropic_residual(
                    &decompose(&x)?,
                    s,
                    z,
                    &q,
                    *psi_exponent,
                    FreeConvOptions::default(),
                    &mut substream(params.seed, trial, 1),
                )?;
                Ok(IsotropicRecord {
                    trial,
                    s,
                    residual: res.residual,
                    scale: res.scale,
                    ratio: res.ratio,
                })
            });
            (Records::Isotropic(rows), failures)
        }
        Experiment::Gap {
            ensemble,
            r,
            epsilon,
            trials,
        } => run_gap(params, *ensemble, r, *epsilon, *trials)?,
        Experiment::Density { energies, etas } => {
            let rows = tabulate_density(params.a, energies, etas, LimitOptions::default())?;
            (Records::Density(rows), Vec::new())
        }
        Experiment::Tailcheck { samples, t_grid } => {
            let draws = sample_entry(params, *samples, &mut stream(params.seed, 0))?;
            let n = params.n as f64;
            let unit = params.entry_scale();
            let rows = t_grid
                .iter()
                .map(|&k| {
                    let t = k * unit;
                    let empirical = draws.iter().filter(|d| d.abs() >= t).count() as f64 / draws.len() as f64;
                    Ok(TailRecord {
                        t,
                        empirical,
                        normalized: empirical * (n * t.powf(params.a) + 1.0),
                        exact: params.entry_tail(t)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (Records::Tailcheck(rows), Vec::new())
        }
    };
    let planned = config.experiment.trials() as f64;
    if failures.len() as f64 > FAILURE_THRESHOLD * planned {
        return Err(LabError::Numerical {
            what: format!(
                "{} of {} trials failed; first: {}",
                failures.len(),
                planned,
                failures.first().map_or("", |f| f.error.as_str())
            ),
            residual: failures.len() as f64 / planned,
        });
    }
    let echo = config.echo();
    let aggregates = aggregate(&echo, &records, &failures)?;
    Ok(ExperimentReport {
        artifact_version: ARTIFACT_VERSION.to_string(),
        rng: RngProvenance {
            algorithm: RNG_ALGORITHM.to_string(),
            seed: params.seed,
            scheme: "trial k draws from stream (seed, k); auxiliary noise from lanes of the same stream".into(),
        },
        config: echo,
        records,
        failures,
        aggregates,
    })
}

fn big_part(params: &EnsembleParams, trial: u64) -> Result<MatrixHandle> {
    let d = build_levy(params, &mut stream(params.seed, trial))?;
    Ok(split_b_removal(&symmetrize(&d)?, params)?.0)
}

fn unit_vector<R: rand::Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
    (&v / v.norm()).iter().copied().collect()
}

fn is_levy_type(e: LsvEnsemble) -> bool {
    !matches!(e, LsvEnsemble::Gaussian)
}

fn run_bottomk(params: &EnsembleParams, ensemble: LsvEnsemble, k: usize, trials: u64) -> Result<(Records, Vec<TrialFailure>)> {
    let scale = if is_levy_type(ensemble) { xi(params.a)? } else { 1.0 };
    let t = match ensemble {
        LsvEnsemble::Interpolant { t: Some(t), .. } => t,
        LsvEnsemble::Interpolant { t: None, .. } => run_coupling_time(params)?,
        _ => 0.0,
    };
    let (rows, failures) = run_trials(trials, |trial| {
        let d = match ensemble {
            LsvEnsemble::Levy => build_levy(params, &mut stream(params.seed, trial))?.into_matrix(),
            LsvEnsemble::Gaussian => crate::ensemble::gaussian(params.n, &mut stream(params.seed, trial))?.into_matrix(),
            LsvEnsemble::Interpolant { gamma, .. } => {
                crate::stats::singular::interpolant_trial(params, gamma, t, trial)?.lower_block()?
            }
        };
        let values = bottom_k_of(&d, k)?.into_iter().map(|v| v * scale).collect();
        Ok(BottomKRecord { trial, values })
    });
    Ok((Records::Bottomk(rows), failures))
}

fn run_locallaw(
    params: &EnsembleParams,
    e_min: f64,
    e_max: f64,
    points: usize,
    eta_exponent: f64,
) -> Result<(Records, Vec<TrialFailure>)> {
    let x = big_part(params, 0)?;
    let sv = singular_values(&x.lower_block()?)?;
    let lambdas: Vec<f64> = sv.iter().rev().map(|s| -s).chain(sv.iter().copied()).collect();
    let eta = (params.n as f64).powf(-eta_exponent);
    let energies: Vec<f64> = if points == 1 {
        vec![0.5 * (e_min + e_max)]
    } else {
        (0..points)
            .map(|k| e_min + (e_max - e_min) * k as f64 / (points - 1) as f64)
            .collect()
    };
    let mut rows = Vec::with_capacity(points);
    let mut failures = Vec::new();
    for (k, &e) in energies.iter().enumerate() {
        let z = Complex64::new(e, eta);
        let point = stieltjes_from_eigenvalues(&lambdas, z)
            .and_then(|m_x| Ok((m_x, solve_limit(params.a, z, LimitOptions::default())?.m)));
        match point {
            Ok((m_x, m_a)) => rows.push(LocalLawRecord {
                energy: e,
                eta,
                m_x,
                m_a,
                residual: (m_x - m_a).norm(),
            }),
            Err(e) => failures.push(TrialFailure {
                trial: k as u64,
                error: e.to_string(),
            }),
        }
    }
    Ok((Records::Locallaw(rows), failures))
}

/// Window half-width for multiplier `r`: `r/(2N)`, divided by `ξ(a)` for
/// Lévy-type ensembles.
pub fn gap_window(params: &EnsembleParams, ensemble: GapEnsemble, r: f64) -> Result<f64> {
    let base = r / (2.0 * params.n as f64);
    Ok(match ensemble {
        GapEnsemble::GaussianSymmetrization | GapEnsemble::GaussianSymmetric => base,
        _ => base / xi(params.a)?,
    })
}

fn run_gap(
    params: &EnsembleParams,
    ensemble: GapEnsemble,
    rs: &[f64],
    epsilon: f64,
    trials: u64,
) -> Result<(Records, Vec<TrialFailure>)> {
    let config = CountingConfig::new(params.n, 1.0, epsilon)?;
    let t = match ensemble {
        GapEnsemble::Interpolant { t: Some(t), .. } => t,
        GapEnsemble::Interpolant { t: None, .. } => run_coupling_time(params)?,
        _ => 0.0,
    };
    let windows = rs
        .iter()
        .map(|&r| Ok((r, gap_window(params, ensemble, r)?)))
        .collect::<Result<Vec<_>>>()?;
    let (per_trial, failures) = run_trials(trials, |trial| {
        let lambdas = gap_spectrum(params, ensemble, t, trial)?;
        windows
            .iter()
            .map(|&(r, w)| {
                Ok(GapRecord {
                    r,
                    window: w,
                    trial: GapTrial {
                        trial,
                        count: eig_count(&lambdas, -w, w)?,
                        smoothed_minus: smoothed_count(&lambdas, w, config.eta_minus())?,
                        smoothed_plus: smoothed_count(&lambdas, w, config.eta_plus())?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()
    });
    Ok((Records::Gap(per_trial.into_iter().flatten().collect()), failures))
}

fn put(map: &mut BTreeMap<String, f64>, key: impl Into<String>, value: f64) {
    // Non-finite values cannot round-trip through JSON.
    if value.is_finite() {
        map.insert(key.into(), value);
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Largest sandwich constant `C` for which a gap record satisfies both sides.
pub fn sandwich_constant(record: &GapTrial, n: usize, epsilon: f64) -> f64 {
    let exact = record.count as f64;
    let shortfall = (record.smoothed_minus - exact).max(exact - record.smoothed_plus).max(0.0);
    shortfall * (n as f64).powf(epsilon)
}

/// Sandwich constant at or below which a gap trial counts as passing.
pub const SANDWICH_C: f64 = 5.0;

fn aggregate(
    config: &ExperimentConfig,
    records: &Records,
    failures: &[TrialFailure],
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    put(&mut out, "records", records.len() as f64);
    put(&mut out, "failures", failures.len() as f64);
    let params = &config.params;
    match records {
        Records::Lsv(rows) => {
            let scaled: Vec<f64> = rows.iter().map(|r| r.scaled).collect();
            if !scaled.is_empty() {
                put(&mut out, "ks", ks_distance(&scaled, |r| lsv_limit_cdf(r.max(0.0)).unwrap_or(0.0)));
                put(&mut out, "mean_scaled", mean(&scaled));
                put(&mut out, "median_scaled", median(&scaled));
            }
        }
        Records::Bottomk(rows) => {
            if let Some(first) = rows.first() {
                for j in 0..first.values.len() {
                    let col: Vec<f64> = rows.iter().map(|r| r.values[j]).collect();
                    put(&mut out, format!("median_{}", j + 1), median(&col));
                    put(&mut out, format!("mean_{}", j + 1), mean(&col));
                }
            }
        }
        Records::Deloc(rows) => {
            let sups: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.sup.map(|s| (s, r.threshold))).collect();
            put(&mut out, "empty_windows", (rows.len() - sups.len()) as f64);
            if !sups.is_empty() {
                let below = sups.iter().filter(|(s, t)| s <= t).count();
                put(&mut out, "fraction_below_threshold", below as f64 / sups.len() as f64);
                put(&mut out, "max_sup", sups.iter().map(|p| p.0).fold(0.0, f64::max));
                put(&mut out, "median_sup", median(&sups.iter().map(|p| p.0).collect::<Vec<_>>()));
                put(&mut out, "threshold", sups[0].1);
            }
        }
        Records::Locallaw(rows) => {
            let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
            if !res.is_empty() {
                put(&mut out, "max_residual", res.iter().copied().fold(0.0, f64::max));
                put(&mut out, "mean_residual", mean(&res));
            }
        }
        Records::Isotropic(rows) => {
            if !rows.is_empty() {
                let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
                let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
                put(&mut out, "median_ratio", median(&ratios));
                put(&mut out, "max_ratio", ratios.iter().copied().fold(0.0, f64::max));
                put(&mut out, "median_residual", median(&res));
                put(&mut out, "s", rows[0].s);
            }
        }
        Records::Gap(rows) => {
            let epsilon = match &config.experiment {
                Experiment::Gap { epsilon, .. } => *epsilon,
                _ => return Err(LabError::Format("gap records under a non-gap config".into())),
            };
            let mut by_r: BTreeMap<u64, Vec<&GapRecord>> = BTreeMap::new();
            for row in rows {
                by_r.entry(row.r.to_bits()).or_default().push(row);
            }
            let mut passing = 0usize;
            let mut worst_c = 0.0f64;
            for group in by_r.values() {
                let r = group[0].r;
                let trials: Vec<GapTrial> = group.iter().map(|g| g.trial).collect();
                let est = crate::stats::GapEstimate::from_records(group[0].window, trials, Vec::new());
                put(&mut out, format!("p[r={r}]"), est.p);
                put(&mut out, format!("stderr[r={r}]"), est.stderr);
                put(&mut out, format!("bracket_lo[r={r}]"), est.bracket_lo);
                put(&mut out, format!("bracket_hi[r={r}]"), est.bracket_hi);
                put(&mut out, format!("slack[r={r}]"), est.slack);
                put(&mut out, format!("window[r={r}]"), est.window);
            }
            for row in rows {
                let c = sandwich_constant(&row.trial, params.n, epsilon);
                worst_c = worst_c.max(c);
                if c <= SANDWICH_C {
                    passing += 1;
                }
            }
            if !rows.is_empty() {
                put(&mut out, "sandwich_fraction", passing as f64 / rows.len() as f64);
                put(&mut out, "sandwich_c_max", worst_c);
            }
        }
        Records::Density(rows) => {
            for r in rows.iter().filter(|r| r.eta == 0.0) {
                put(&mut out, format!("rho[E={}]", r.energy), r.rho);
            }
            put(&mut out, "unstable", rows.iter().filter(|r| r.unstable).count() as f64);
        }
        Records::Tailcheck(rows) => {
            let norm: Vec<f64> = rows.iter().filter(|r| r.empirical > 0.0).map(|r| r.normalized).collect();
            if !norm.is_empty() {
                put(&mut out, "c1", norm.iter().copied().fold(f64::INFINITY, f64::min));
                put(&mut out, "c2", norm.iter().copied().fold(0.0, f64::max));
            }
            let worst = rows.iter().map(|r| (r.empirical - r.exact).abs()).fold(0.0, f64::max);
            put(&mut out, "max_tail_error", worst);
        }
    }
    Ok(out)
}

fn csv_writer(dir: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf)> {
    let path = dir.join(name);
    let w = csv::Writer::from_path(&path).map_err(|e| LabError::Format(format!("{}: {e}", path.display())))?;
    Ok((w, path))
}

fn write_rows<I, R>(dir: &Path, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let (mut w, path) = csv_writer(dir, name)?;
    let fmt = |e: csv::Error| LabError::Format(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fmt)?;
    for row in rows {
        w.write_record(row).map_err(fmt)?;
    }
    w.flush().map_err(|e| LabError::io(&path, e))?;
    Ok(path)
}

/// Points at which the limit CDF is tabulated next to the empirical one.
pub const LIMIT_CDF_POINTS: usize = 200;

/// Writes the plot-data CSVs of `report` into `dir` and returns their paths.
///
/// | kind | file | columns |
/// |---|---|---|
/// | lsv | `lsv_empirical.csv` | `r,F_emp` |
/// | lsv | `lsv_limit.csv` | `r,F_limit` |
/// | bottomk | `bottomk.csv` | `trial,j,value` |
/// | deloc | `deloc.csv` | `trial,sup,threshold` |
/// | locallaw | `locallaw.csv` | `E,eta,residual` |
/// | isotropic | `isotropic.csv` | `trial,s,residual,scale,ratio` |
/// | gap | `gap.csv` | `w,p_emp,p_bracket_lo,p_bracket_hi` |
/// | density | `density.csv` | `E,rho_a` |
/// | tailcheck | `tail.csv` | `t,empirical,exact,normalized` |
pub fn emit_plotdata(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let s = |v: f64| v.to_string();
    let mut paths = Vec::new();
    match &report.records {
        Records::Lsv(rows) => {
            let scaled: Vec<f64> = rows.iter().map(|r| r.scaled).collect();
            let cdf = empirical_cdf(&scaled);
            let top = cdf.last().map_or(5.0, |p| p.0.max(5.0));
            paths.push(write_rows(dir, "lsv_empirical.csv", &["r", "F_emp"], cdf.iter().map(|&(r, f)| [s(r), s(f)]))?);
            let grid = (0..=LIMIT_CDF_POINTS).map(|k| top * k as f64 / LIMIT_CDF_POINTS as f64);
            let limit = grid
                .map(|r| Ok([s(r), s(lsv_limit_cdf(r)?)]))
                .collect::<Result<Vec<_>>>()?;
            paths.push(write_rows(dir, "lsv_limit.csv", &["r", "F_limit"], limit)?);
        }
        Records::Bottomk(rows) => {
            let long = rows.iter().flat_map(|r| {
                r.values
                    .iter()
                    .enumerate()
                    .map(move |(j, v)| [r.trial.to_string(), (j + 1).to_string(), s(*v)])
            });
            paths.push(write_rows(dir, "bottomk.csv", &["trial", "j", "value"], long)?);
        }
        Records::Deloc(rows) => {
            let body = rows
                .iter()
                .map(|r| [r.trial.to_string(), r.sup.map_or(String::new(), s), s(r.threshold)]);
            paths.push(write_rows(dir, "deloc.csv", &["trial", "sup", "threshold"], body)?);
        }
        Records::Locallaw(rows) => {
            let body = rows.iter().map(|r| [s(r.energy), s(r.eta), s(r.residual)]);
            paths.push(write_rows(dir, "locallaw.csv", &["E", "eta", "residual"], body)?);
        }
        Records::Isotropic(rows) => {
            let body = rows
                .iter()
                .map(|r| [r.trial.to_string(), s(r.s), s(r.residual), s(r.scale), s(r.ratio)]);
            paths.push(write_rows(dir, "isotropic.csv", &["trial", "s", "residual", "scale", "ratio"], body)?);
        }
        Records::Gap(_) => {
            let a = &report.aggregates;
            let mut body = Vec::new();
            for (key, w) in a.iter().filter(|(k, _)| k.starts_with("window[")) {
                let tag = &key["window".len()..];
                let get = |name: &str| a.get(&format!("{name}{tag}")).copied().unwrap_or(f64::NAN);
                body.push([s(*w), s(get("p")), s(get("bracket_lo")), s(get("bracket_hi"))]);
            }
            paths.push(write_rows(dir, "gap.csv", &["w", "p_emp", "p_bracket_lo", "p_bracket_hi"], body)?);
        }
        Records::Density(rows) => {
            let body = rows.iter().filter(|r| r.eta == 0.0).map(|r| [s(r.energy), s(r.rho)]);
            paths.push(write_rows(dir, "density.csv", &["E", "rho_a"], body)?);
        }
        Records::Tailcheck(rows) => {
            let body = rows.iter().map(|r| [s(r.t), s(r.empirical), s(r.exact), s(r.normalized)]);
            paths.push(write_rows(dir, "tail.csv", &["t", "empirical", "exact", "normalized"], body)?);
        }
    }
    Ok(paths)
}
