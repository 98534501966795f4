//! Disorder ensembles: reproducible Monte Carlo averages and the fits built on
//! them (correlator decay, transport exponents, the κ consistency report).
//!
//! Realization `i` of a configuration is always
//! `sample_potential(config, i) → build_one_body → diagonalize`, so every
//! statistic over `samples = s` is the exact prefix aggregate of the same
//! statistic over any `s' > s`. Per-realization values are computed on a
//! rayon pool, collected in index order and reduced with
//! [`pairwise_sum`](crate::stats::pairwise_sum), which makes results bitwise
//! independent of the worker count.

use crate::disorder::{build_one_body, sample_potential, DisorderConfig, DisorderError, OneBodyOperator};
use crate::quasifree::{estimate_beta, moment_series, QuasifreeError};
use crate::spectral::{correlator_row, diagonalize, SpectralDecomposition, SpectralError};
use crate::stats::{fit_line, fit_line_weighted, mean_stderr, median};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Threshold in the κ consistency check.
pub const KAPPA_BOUND: f64 = 5.0 / 16.0;

/// Minimum number of `k` values for [`fit_decay`].
pub const MIN_FIT_POINTS: usize = 6;

/// Printed with every κ report.
pub const KAPPA_CAVEAT: &str = "caveat: the correlator decay law is only an upper bound, so the fitted decay \
may be faster than the bound requires; kappa_estimate is a one-sided proxy and a value above 5/16 does not \
contradict the bound";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Disorder(#[from] DisorderError),
    #[error("realization {index}: {message}")]
    Realization { index: u64, message: String },
    #[error("cannot take the log of mean {mean} at k = {k}")]
    NonPositiveMean { k: usize, mean: f64 },
    #[error("lambda = {lambda}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<EnsembleError>,
    },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Disorder average of one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub observable_id: String,
}

impl EnsembleStats {
    /// Mean and standard error of per-realization values (index order).
    pub fn from_values(observable_id: impl Into<String>, values: &[f64]) -> Self {
        let (mean, stderr) = mean_stderr(values);
        EnsembleStats { mean, stderr, samples: values.len(), observable_id: observable_id.into() }
    }
}

/// One disorder realization, as handed to observables.
#[derive(Debug, Clone)]
pub struct Realization {
    pub index: u64,
    pub potential: Vec<f64>,
    pub operator: OneBodyOperator<f64>,
    pub spectrum: SpectralDecomposition<f64>,
}

impl Realization {
    pub fn build(config: &DisorderConfig, index: u64) -> Result<Self, EnsembleError> {
        let potential = sample_potential(config, index);
        let operator = build_one_body::<f64>(config, &potential)?;
        let spectrum =
            diagonalize(&operator).map_err(|e| EnsembleError::Realization { index, message: e.to_string() })?;
        Ok(Realization { index, potential, operator, spectrum })
    }

    /// The free chain (`V ≡ 0`), used as the λ → 0 limit.
    pub fn free(n: usize) -> Result<Self, EnsembleError> {
        let operator = OneBodyOperator::<f64>::free_chain(n)?;
        let spectrum =
            diagonalize(&operator).map_err(|e| EnsembleError::Realization { index: 0, message: e.to_string() })?;
        Ok(Realization { index: 0, potential: vec![0.0; n], operator, spectrum })
    }
}

/// Worker pool for realizations. Results never depend on `workers`.
#[derive(Debug)]
pub struct EnsembleRunner {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl EnsembleRunner {
    pub fn new(workers: usize) -> Result<Self, EnsembleError> {
        if workers == 0 {
            return Err(EnsembleError::InvalidArgument("worker count must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EnsembleError::Pool(e.to_string()))?;
        Ok(EnsembleRunner { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Applies `f` to realizations `0..samples`, returning results in index
    /// order. The first failing index (not the first to fail in time) is
    /// reported.
    pub fn map_realizations<R, E, F>(
        &self,
        config: &DisorderConfig,
        samples: usize,
        f: F,
    ) -> Result<Vec<R>, EnsembleError>
    where
        R: Send,
        E: fmt::Display,
        F: Fn(&Realization) -> Result<R, E> + Sync,
    {
        if samples == 0 {
            return Err(EnsembleError::InvalidArgument("samples must be at least 1".into()));
        }
        config.validate()?;
        let results: Vec<Result<R, EnsembleError>> = self.pool.install(|| {
            (0..samples as u64)
                .into_par_iter()
                .map(|index| {
                    let r = Realization::build(config, index)?;
                    f(&r).map_err(|e| EnsembleError::Realization { index, message: e.to_string() })
                })
                .collect()
        });
        results.into_iter().collect()
    }

    /// Mean and standard error of `observable` over realizations `0..samples`.
    pub fn run_ensemble<E, F>(
        &self,
        config: &DisorderConfig,
        samples: usize,
        observable_id: &str,
        observable: F,
    ) -> Result<EnsembleStats, EnsembleError>
    where
        E: fmt::Display,
        F: Fn(&Realization) -> Result<f64, E> + Sync,
    {
        let values = self.map_realizations(config, samples, observable)?;
        Ok(EnsembleStats::from_values(observable_id, &values))
    }

    /// Like [`run_ensemble`](Self::run_ensemble) for vector-valued
    /// observables of fixed length: one [`EnsembleStats`] per component.
    pub fn run_ensemble_vec<E, F>(
        &self,
        config: &DisorderConfig,
        samples: usize,
        ids: &[String],
        observable: F,
    ) -> Result<Vec<EnsembleStats>, EnsembleError>
    where
        E: fmt::Display,
        F: Fn(&Realization) -> Result<Vec<f64>, E> + Sync,
    {
        let rows = self.map_realizations(config, samples, observable)?;
        columns(&rows, ids)
    }

    /// `𝔼[Q(j,k)]` for each `k` in `k_list`.
    pub fn correlator_decay(
        &self,
        config: &DisorderConfig,
        samples: usize,
        j: usize,
        k_list: &[usize],
    ) -> Result<Vec<EnsembleStats>, EnsembleError> {
        check_k_list(config.n, j, k_list)?;
        let ids: Vec<String> = k_list.iter().map(|k| format!("Q({j},{k})")).collect();
        self.run_ensemble_vec(config, samples, &ids, |r| -> Result<Vec<f64>, SpectralError> {
            let q = correlator_row(&r.spectrum, j)?;
            Ok(k_list.iter().map(|&k| q[k - 1]).collect())
        })
    }

    /// Transport exponents for each λ in `lambdas`. The outer result fails
    /// only on bad arguments; a per-λ failure (typically the boundary guard)
    /// is reported in that row.
    pub fn beta_vs_lambda(
        &self,
        template: &DisorderConfig,
        samples: usize,
        p: f64,
        lambdas: &[f64],
        times: &[f64],
        window: (f64, f64),
    ) -> Result<Vec<BetaRow>, EnsembleError> {
        if !(p > 0.0) {
            return Err(EnsembleError::InvalidArgument(format!("moment order p = {p} must be positive")));
        }
        if let Some(&bad) = lambdas.iter().find(|&&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(EnsembleError::InvalidArgument(format!("lambda = {bad} must be nonnegative")));
        }
        let beta_of = |r: &Realization| -> Result<(f64, f64), QuasifreeError> {
            let series = moment_series(&r.spectrum, p, times)?;
            let est = estimate_beta(&series, p, window)?;
            Ok((est.beta, est.max_boundary_mass.unwrap_or(0.0)))
        };
        let rows = lambdas
            .iter()
            .map(|&lambda| {
                let outcome = if lambda == 0.0 {
                    Realization::free(template.n)
                        .and_then(|r| {
                            beta_of(&r).map_err(|e| EnsembleError::Realization { index: 0, message: e.to_string() })
                        })
                        .map(|v| vec![v])
                } else {
                    self.map_realizations(&template.clone().with_lambda(lambda), samples, beta_of)
                };
                BetaRow {
                    lambda,
                    p,
                    window,
                    result: outcome
                        .map(|v| BetaSummary::new(&v))
                        .map_err(|e| EnsembleError::AtLambda { lambda, source: Box::new(e) }),
                }
            })
            .collect();
        Ok(rows)
    }
}

/// Transposes per-realization rows into per-component statistics.
pub fn columns(rows: &[Vec<f64>], ids: &[String]) -> Result<Vec<EnsembleStats>, EnsembleError> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ids.len()) {
        return Err(EnsembleError::Realization {
            index: i as u64,
            message: format!("observable returned {} values, expected {}", r.len(), ids.len()),
        });
    }
    Ok(ids
        .iter()
        .enumerate()
        .map(|(c, id)| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            EnsembleStats::from_values(id.clone(), &col)
        })
        .collect())
}

fn check_k_list(n: usize, j: usize, k_list: &[usize]) -> Result<(), EnsembleError> {
    if j == 0 || j > n {
        return Err(EnsembleError::InvalidArgument(format!("site j = {j} outside 1..={n}")));
    }
    if k_list.is_empty() {
        return Err(EnsembleError::InvalidArgument("k_list is empty".into()));
    }
    for w in k_list.windows(2) {
        if w[1] <= w[0] {
            return Err(EnsembleError::InvalidArgument(format!(
                "k_list must be strictly ascending ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if k_list[0] <= j {
        return Err(EnsembleError::InvalidArgument(format!("k = {} must exceed j = {j}", k_list[0])));
    }
    if let Some(&k) = k_list.iter().find(|&&k| k > n) {
        return Err(EnsembleError::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    Ok(())
}

/// Geometric grid with ratio √2 from 8 to `n/2`, rounded and deduplicated.
pub fn default_k_list(n: usize) -> Vec<usize> {
    let hi = n / 2;
    let mut out: Vec<usize> = Vec::new();
    let mut i = 0;
    loop {
        let k = (8.0 * 2f64.powf(i as f64 / 2.0)).round() as usize;
        if k > hi {
            break;
        }
        if out.last() != Some(&k) {
            out.push(k);
        }
        i += 1;
    }
    out
}

/// Power-law fit `𝔼[Q(1,k)] ≈ C k^{slope}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub k_range: (usize, usize),
    pub lambda: f64,
    /// `(1/4 − slope)/λ²`.
    pub kappa_estimate: f64,
    pub points: usize,
    pub weighted: bool,
}

impl DecayFit {
    pub fn kappa_stderr(&self) -> f64 {
        self.slope_stderr / (self.lambda * self.lambda)
    }
}

/// Least squares of `ln mean` against `ln k`, weighted by `(mean/stderr)²`
/// (delta method). If any standard error is zero the fit is unweighted.
pub fn fit_decay(k_list: &[usize], stats: &[EnsembleStats], lambda: f64) -> Result<DecayFit, EnsembleError> {
    if k_list.len() != stats.len() {
        return Err(EnsembleError::InvalidArgument(format!(
            "{} k values but {} statistics",
            k_list.len(),
            stats.len()
        )));
    }
    if k_list.len() < MIN_FIT_POINTS {
        return Err(EnsembleError::InvalidArgument(format!(
            "decay fit needs at least {MIN_FIT_POINTS} points, got {}",
            k_list.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(EnsembleError::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    if k_list[0] < 2 {
        return Err(EnsembleError::InvalidArgument(format!("k_min = {} must be at least 2", k_list[0])));
    }
    for (&k, s) in k_list.iter().zip(stats) {
        if !(s.mean > 0.0) {
            return Err(EnsembleError::NonPositiveMean { k, mean: s.mean });
        }
    }
    let x: Vec<f64> = k_list.iter().map(|&k| (k as f64).ln()).collect();
    let y: Vec<f64> = stats.iter().map(|s| s.mean.ln()).collect();
    let weighted = stats.iter().all(|s| s.stderr > 0.0);
    let fit = if weighted {
        let w: Vec<f64> = stats.iter().map(|s| (s.mean / s.stderr).powi(2)).collect();
        fit_line_weighted(&x, &y, &w)
    } else {
        fit_line(&x, &y)
    };
    Ok(DecayFit {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_stderr: fit.slope_stderr,
        k_range: (k_list[0], k_list[k_list.len() - 1]),
        lambda,
        kappa_estimate: (0.25 - fit.slope) / (lambda * lambda),
        points: k_list.len(),
        weighted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub kappa_estimate: f64,
    pub kappa_stderr: f64,
    pub bound: f64,
    /// `kappa_estimate ≤ 5/16 + 3·kappa_stderr`.
    pub consistent: bool,
}

pub fn kappa_consistency(fit: &DecayFit) -> KappaReport {
    let kappa_stderr = fit.kappa_stderr();
    KappaReport {
        kappa_estimate: fit.kappa_estimate,
        kappa_stderr,
        bound: KAPPA_BOUND,
        consistent: fit.kappa_estimate <= KAPPA_BOUND + 3.0 * kappa_stderr,
    }
}

impl fmt::Display for KappaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "kappa_estimate = {:.6} +/- {:.6} (bound 5/16 = {:.4}): {}",
            self.kappa_estimate,
            self.kappa_stderr,
            self.bound,
            if self.consistent { "consistent" } else { "flagged inconsistent" }
        )?;
        write!(f, "{KAPPA_CAVEAT}")
    }
}

/// Aggregate of per-realization transport exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSummary {
    pub median: f64,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub max_boundary_mass: f64,
    pub betas: Vec<f64>,
}

impl BetaSummary {
    fn new(values: &[(f64, f64)]) -> Self {
        let betas: Vec<f64> = values.iter().map(|v| v.0).collect();
        let (mean, stderr) = mean_stderr(&betas);
        BetaSummary {
            median: median(&betas),
            mean,
            stderr,
            samples: betas.len(),
            max_boundary_mass: values.iter().map(|v| v.1).fold(0.0, f64::max),
            betas,
        }
    }
}

#[derive(Debug)]
pub struct BetaRow {
    pub lambda: f64,
    pub p: f64,
    pub window: (f64, f64),
    pub result: Result<BetaSummary, EnsembleError>,
}
