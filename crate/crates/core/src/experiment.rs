//! Experiment configs, runners and output files.
//!
//! A config is a flat TOML file (JSON also accepted) describing one
//! experiment. Keys shared by every experiment:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `experiment` | subcommand | one of [`Experiment::ALL`] |
//! | `n` | required | chain length |
//! | `lambda` | required (not for `beta-vs-lambda`) | coupling λ |
//! | `halfwidth` | 1 | `V_j` uniform on `[-halfwidth, halfwidth]` |
//! | `envelope_exponent` | 0.5 | potential `λ V_j / j^α` |
//! | `master_seed` | 0 | root of all randomness |
//! | `samples` | 100 | disorder realizations |
//!
//! Time grids are either `times = [...]` or the geometric grid
//! `t_min`, `t_max`, `t_points`. Experiment keys and CSV columns:
//!
//! - `correlator`: `j` (1), `k_list` (√2-geometric 8..n/2).
//!   Columns `k, mean_Q, stderr, samples`.
//! - `kappa-fit`: as `correlator`. One row
//!   `lambda, slope, slope_stderr, intercept, k_min, k_max, points, kappa_estimate, kappa_stderr, consistent`.
//! - `transport`: `p` (2), time grid (`t_max` n/16, `t_min` t_max/16, 24 points).
//!   Columns `t, mean_moment, stderr, samples, max_boundary_mass`.
//! - `beta-vs-lambda`: `lambda_list` (required), `p`, time grid as
//!   `transport`, `window` ([t_max/4, t_max]). Columns
//!   `lambda, beta_median, beta_mean, stderr, samples, window_lo, window_hi, max_boundary_mass`.
//! - `plr`: `a` (0.5), `b` (2), `t_min` (1), `t_max_list` ([n/20, n/10]),
//!   `k_max` (n/2). Columns `t_max, median_W, mean_W, stderr, samples, median_growth`;
//!   `median_growth` is the median over realizations of `W(row)/W(previous row)`, 1 on the first row.
//! - `number`: `wall` (n/2; η = 0 on `1..=wall`, 1 beyond) or an explicit
//!   `eta` list, `sites` (`1..=max(1, wall/2)`), time grid (`t_max`
//!   max(n/8, 1), `t_min` t_max/16, 24 points; explicit `times` may start at 0).
//!   Columns `t, N_S, stderr, samples, bound`, where `bound` is the
//!   time-independent `Σ_{j∈S} Σ_k η_k 𝔼[Q(j,k)]`.
//!
//! Every run writes `<experiment>.csv` and `<experiment>.json`. The sidecar
//! carries the fully resolved config under `config`; feeding the sidecar
//! back as a config reproduces the CSV bit for bit.

use crate::disorder::{DisorderConfig, Distribution};
use crate::ensemble::{
    columns, default_k_list, fit_decay, kappa_consistency, EnsembleError, EnsembleRunner, KAPPA_CAVEAT,
};
use crate::quasifree::{
    geometric_times, moment_series, number_correlator_bound, number_expectation, plr_witness_up_to, witness_grid,
    witness_times, ProductState, QuasifreeError,
};
use crate::stats::median;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("key `{key}` is not used by experiment {experiment}")]
    Unused { key: &'static str, experiment: Experiment },
    #[error("config is for experiment {found}, not {wanted}")]
    WrongExperiment { found: Experiment, wanted: Experiment },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Quasifree(#[from] QuasifreeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn invalid(key: &'static str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Invalid { key, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Correlator,
    Transport,
    Plr,
    Number,
    KappaFit,
    BetaVsLambda,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Correlator,
        Experiment::Transport,
        Experiment::Plr,
        Experiment::Number,
        Experiment::KappaFit,
        Experiment::BetaVsLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Correlator => "correlator",
            Experiment::Transport => "transport",
            Experiment::Plr => "plr",
            Experiment::Number => "number",
            Experiment::KappaFit => "kappa-fit",
            Experiment::BetaVsLambda => "beta-vs-lambda",
        }
    }

    fn own_keys(self) -> &'static [&'static str] {
        match self {
            Experiment::Correlator | Experiment::KappaFit => &["j", "k_list"],
            Experiment::Transport => &["p", "times", "t_min", "t_max", "t_points"],
            Experiment::BetaVsLambda => &["p", "times", "t_min", "t_max", "t_points", "window", "lambda_list"],
            Experiment::Plr => &["a", "b", "t_min", "t_max_list", "k_max"],
            Experiment::Number => &["wall", "eta", "sites", "times", "t_min", "t_max", "t_points"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| invalid("experiment", format!("unknown experiment {s:?}")))
    }
}

/// The config file as written: every key optional, unknown keys rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halfwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
}

impl RawSpec {
    /// Parses TOML, or JSON if the text starts with `{`. A JSON sidecar
    /// (an object with a `config` member) is accepted as is.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        if text.trim_start().starts_with('{') {
            let mut value: serde_json::Value =
                serde_json::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
            if value.get("schema_version").is_some() {
                if let Some(config) = value.get_mut("config") {
                    value = config.take();
                }
            }
            serde_json::from_value(value).map_err(|e| ExperimentError::Parse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))
        }
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    fn present_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut add = |set: bool, k: &'static str| {
            if set {
                keys.push(k)
            }
        };
        add(self.j.is_some(), "j");
        add(self.k_list.is_some(), "k_list");
        add(self.p.is_some(), "p");
        add(self.times.is_some(), "times");
        add(self.t_min.is_some(), "t_min");
        add(self.t_max.is_some(), "t_max");
        add(self.t_points.is_some(), "t_points");
        add(self.window.is_some(), "window");
        add(self.lambda_list.is_some(), "lambda_list");
        add(self.a.is_some(), "a");
        add(self.b.is_some(), "b");
        add(self.t_max_list.is_some(), "t_max_list");
        add(self.k_max.is_some(), "k_max");
        add(self.wall.is_some(), "wall");
        add(self.eta.is_some(), "eta");
        add(self.sites.is_some(), "sites");
        keys
    }

    /// Resolves defaults and validates. `wanted` is the subcommand, if any;
    /// it fills in a missing `experiment` key and must match a present one.
    pub fn resolve(&self, wanted: Option<Experiment>) -> Result<ExperimentSpec, ExperimentError> {
        let experiment = match (self.experiment, wanted) {
            (Some(found), Some(wanted)) if found != wanted => {
                return Err(ExperimentError::WrongExperiment { found, wanted })
            }
            (Some(e), _) | (None, Some(e)) => e,
            (None, None) => return Err(ExperimentError::Missing("experiment")),
        };
        for key in self.present_keys() {
            if !experiment.own_keys().contains(&key) {
                return Err(ExperimentError::Unused { key, experiment });
            }
        }
        let n = self.n.ok_or(ExperimentError::Missing("n"))?;
        if n == 0 {
            return Err(invalid("n", "chain length must be at least 1"));
        }
        let lambda = match (experiment, self.lambda) {
            (Experiment::BetaVsLambda, Some(_)) => {
                return Err(ExperimentError::Unused { key: "lambda", experiment });
            }
            (Experiment::BetaVsLambda, None) => 1.0,
            (_, None) => return Err(ExperimentError::Missing("lambda")),
            (_, Some(l)) if !(l > 0.0) || !l.is_finite() => {
                return Err(invalid("lambda", format!("{l} must be positive")))
            }
            (_, Some(l)) => l,
        };
        let halfwidth = self.halfwidth.unwrap_or(1.0);
        if !(halfwidth > 0.0) || !halfwidth.is_finite() {
            return Err(invalid("halfwidth", format!("{halfwidth} must be positive")));
        }
        let envelope = self.envelope_exponent.unwrap_or(DisorderConfig::DEFAULT_ENVELOPE);
        if !(envelope >= 0.0) || !envelope.is_finite() {
            return Err(invalid("envelope_exponent", format!("{envelope} must be nonnegative")));
        }
        let disorder = DisorderConfig {
            n,
            lambda,
            envelope_exponent: envelope,
            distribution: Distribution::UniformSymmetric { halfwidth },
            master_seed: self.master_seed.unwrap_or(0),
        };
        let samples = self.samples.unwrap_or(100);
        if samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        let params = match experiment {
            Experiment::Correlator | Experiment::KappaFit => {
                let j = self.j.unwrap_or(1);
                if j == 0 || j > n {
                    return Err(invalid("j", format!("site {j} outside 1..={n}")));
                }
                let k_list = self.k_list.clone().unwrap_or_else(|| default_k_list(n));
                if k_list.is_empty() {
                    return Err(invalid("k_list", format!("empty (default grid needs n >= 16, n = {n})")));
                }
                check_sites("k_list", &k_list, n)?;
                if let Some(w) = k_list.windows(2).find(|w| w[1] <= w[0]) {
                    return Err(invalid("k_list", format!("not strictly ascending at {} then {}", w[0], w[1])));
                }
                if k_list[0] <= j {
                    return Err(invalid("k_list", format!("k = {} must exceed j = {j}", k_list[0])));
                }
                Params::Correlator { j, k_list }
            }
            Experiment::Transport | Experiment::BetaVsLambda => {
                let p = self.p.unwrap_or(2.0);
                if !(p > 0.0) || !p.is_finite() {
                    return Err(invalid("p", format!("{p} must be positive")));
                }
                let t_max = self.t_max.unwrap_or(n as f64 / 16.0);
                let grid = self.time_grid(t_max / 16.0, t_max, false)?;
                if experiment == Experiment::Transport {
                    Params::Transport { p, grid }
                } else {
                    let times = grid.times()?;
                    let hi = times[times.len() - 1];
                    let window = self.window.unwrap_or([hi / 4.0, hi]);
                    if !(window[0] > 0.0 && window[1] > window[0]) {
                        return Err(invalid("window", format!("{window:?} is not a positive interval")));
                    }
                    let lambda_list = self.lambda_list.clone().ok_or(ExperimentError::Missing("lambda_list"))?;
                    if lambda_list.is_empty() {
                        return Err(invalid("lambda_list", "empty"));
                    }
                    if let Some(l) = lambda_list.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
                        return Err(invalid("lambda_list", format!("{l} must be nonnegative")));
                    }
                    Params::BetaVsLambda { p, grid, window, lambda_list }
                }
            }
            Experiment::Plr => {
                let a = self.a.unwrap_or(0.5);
                if !(0.0..=1.0).contains(&a) {
                    return Err(invalid("a", format!("{a} must lie in [0, 1]")));
                }
                let b = self.b.unwrap_or(2.0);
                if !(b > 0.0) || !b.is_finite() {
                    return Err(invalid("b", format!("{b} must be positive")));
                }
                let t_min = self.t_min.unwrap_or(1.0);
                if !(t_min >= 1.0) || !t_min.is_finite() {
                    return Err(invalid("t_min", format!("{t_min} must be at least 1")));
                }
                let t_max_list = self.t_max_list.clone().unwrap_or_else(|| vec![n as f64 / 20.0, n as f64 / 10.0]);
                if t_max_list.is_empty() {
                    return Err(invalid("t_max_list", "empty"));
                }
                check_ascending("t_max_list", &t_max_list)?;
                if t_max_list[0] < t_min {
                    return Err(invalid("t_max_list", format!("{} is below t_min = {t_min}", t_max_list[0])));
                }
                let k_max = self.k_max.unwrap_or(n / 2);
                if k_max < 2 || k_max > n {
                    return Err(invalid("k_max", format!("{k_max} outside 2..={n}")));
                }
                Params::Plr { a, b, t_min, t_max_list, k_max }
            }
            Experiment::Number => {
                let (eta, default_l) = match (&self.eta, self.wall) {
                    (Some(_), Some(_)) => return Err(invalid("eta", "give either `eta` or `wall`, not both")),
                    (Some(eta), None) => {
                        if eta.len() != n {
                            return Err(invalid("eta", format!("has {} entries, n = {n}", eta.len())));
                        }
                        if let Some(x) = eta.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                            return Err(invalid("eta", format!("occupation {x} outside [0, 1]")));
                        }
                        (Occupation::Profile(eta.clone()), 1)
                    }
                    (None, wall) => {
                        let m = wall.unwrap_or(n / 2);
                        if m > n {
                            return Err(invalid("wall", format!("{m} exceeds n = {n}")));
                        }
                        (Occupation::Wall(m), (m / 2).max(1))
                    }
                };
                let sites = self.sites.clone().unwrap_or_else(|| (1..=default_l).collect());
                if sites.is_empty() {
                    return Err(invalid("sites", "empty"));
                }
                check_sites("sites", &sites, n)?;
                let mut sorted = sites.clone();
                sorted.sort_unstable();
                if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                    return Err(invalid("sites", format!("site {} listed twice", w[0])));
                }
                let t_max = self.t_max.unwrap_or((n as f64 / 8.0).max(1.0));
                let grid = self.time_grid(t_max / 16.0, t_max, true)?;
                Params::Number { eta, sites, grid }
            }
        };
        Ok(ExperimentSpec { experiment, disorder, samples, params })
    }

    fn time_grid(&self, default_min: f64, t_max: f64, allow_zero: bool) -> Result<TimeGrid, ExperimentError> {
        if let Some(times) = &self.times {
            for key in ["t_min", "t_max", "t_points"] {
                let set = match key {
                    "t_min" => self.t_min.is_some(),
                    "t_max" => self.t_max.is_some(),
                    _ => self.t_points.is_some(),
                };
                if set {
                    return Err(invalid("times", format!("give either `times` or `{key}`, not both")));
                }
            }
            if times.is_empty() {
                return Err(invalid("times", "empty"));
            }
            check_ascending("times", times)?;
            let ok = if allow_zero { times[0] >= 0.0 } else { times[0] > 0.0 };
            if !ok {
                return Err(invalid(
                    "times",
                    format!("first time {} must be {}", times[0], if allow_zero { ">= 0" } else { "> 0" }),
                ));
            }
            return Ok(TimeGrid::Explicit(times.clone()));
        }
        let t_min = self.t_min.unwrap_or(default_min);
        let t_points = self.t_points.unwrap_or(24);
        if !(t_min > 0.0) || !t_min.is_finite() {
            return Err(invalid("t_min", format!("{t_min} must be positive")));
        }
        if !(t_max > t_min) || !t_max.is_finite() {
            return Err(invalid("t_max", format!("{t_max} must exceed t_min = {t_min}")));
        }
        if t_points < 2 {
            return Err(invalid("t_points", format!("{t_points} must be at least 2")));
        }
        Ok(TimeGrid::Geometric { t_min, t_max, t_points })
    }
}

fn check_sites(key: &'static str, sites: &[usize], n: usize) -> Result<(), ExperimentError> {
    match sites.iter().find(|&&s| s == 0 || s > n) {
        Some(s) => Err(invalid(key, format!("site {s} outside 1..={n}"))),
        None => Ok(()),
    }
}

fn check_ascending(key: &'static str, v: &[f64]) -> Result<(), ExperimentError> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(invalid(key, format!("{x} is not finite")));
    }
    match v.windows(2).find(|w| w[1] <= w[0]) {
        Some(w) => Err(invalid(key, format!("not strictly ascending at {} then {}", w[0], w[1]))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeGrid {
    Explicit(Vec<f64>),
    Geometric { t_min: f64, t_max: f64, t_points: usize },
}

impl TimeGrid {
    pub fn times(&self) -> Result<Vec<f64>, ExperimentError> {
        match self {
            TimeGrid::Explicit(t) => Ok(t.clone()),
            TimeGrid::Geometric { t_min, t_max, t_points } => Ok(geometric_times(*t_min, *t_max, *t_points)?),
        }
    }

    fn echo(&self, raw: &mut RawSpec) {
        match self {
            TimeGrid::Explicit(t) => raw.times = Some(t.clone()),
            TimeGrid::Geometric { t_min, t_max, t_points } => {
                raw.t_min = Some(*t_min);
                raw.t_max = Some(*t_max);
                raw.t_points = Some(*t_points);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Occupation {
    /// `η = 0` on `1..=m`, `1` beyond.
    Wall(usize),
    Profile(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Correlator { j: usize, k_list: Vec<usize> },
    Transport { p: f64, grid: TimeGrid },
    BetaVsLambda { p: f64, grid: TimeGrid, window: [f64; 2], lambda_list: Vec<f64> },
    Plr { a: f64, b: f64, t_min: f64, t_max_list: Vec<f64>, k_max: usize },
    Number { eta: Occupation, sites: Vec<usize>, grid: TimeGrid },
}

/// A validated experiment with all defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub disorder: DisorderConfig,
    pub samples: usize,
    pub params: Params,
}

impl ExperimentSpec {
    /// The fully resolved config, in the same flat schema as the input.
    pub fn to_raw(&self) -> RawSpec {
        let d = &self.disorder;
        let mut raw = RawSpec {
            experiment: Some(self.experiment),
            n: Some(d.n),
            lambda: (self.experiment != Experiment::BetaVsLambda).then_some(d.lambda),
            halfwidth: Some(d.distribution.halfwidth()),
            envelope_exponent: Some(d.envelope_exponent),
            master_seed: Some(d.master_seed),
            samples: Some(self.samples),
            ..RawSpec::default()
        };
        match &self.params {
            Params::Correlator { j, k_list } => {
                raw.j = Some(*j);
                raw.k_list = Some(k_list.clone());
            }
            Params::Transport { p, grid } => {
                raw.p = Some(*p);
                grid.echo(&mut raw);
            }
            Params::BetaVsLambda { p, grid, window, lambda_list } => {
                raw.p = Some(*p);
                grid.echo(&mut raw);
                raw.window = Some(*window);
                raw.lambda_list = Some(lambda_list.clone());
            }
            Params::Plr { a, b, t_min, t_max_list, k_max } => {
                raw.a = Some(*a);
                raw.b = Some(*b);
                raw.t_min = Some(*t_min);
                raw.t_max_list = Some(t_max_list.clone());
                raw.k_max = Some(*k_max);
            }
            Params::Number { eta, sites, grid } => {
                match eta {
                    Occupation::Wall(m) => raw.wall = Some(*m),
                    Occupation::Profile(v) => raw.eta = Some(v.clone()),
                }
                raw.sites = Some(sites.clone());
                grid.echo(&mut raw);
            }
        }
        raw
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("resolved spec is plain data")
    }

    /// Canonical disorder configs used by the run (one per λ for
    /// `beta-vs-lambda`; the λ = 0 row is the free chain and is omitted).
    pub fn disorder_configs(&self) -> Vec<DisorderConfig> {
        match &self.params {
            Params::BetaVsLambda { lambda_list, .. } => {
                lambda_list.iter().filter(|&&l| l > 0.0).map(|&l| self.disorder.clone().with_lambda(l)).collect()
            }
            _ => vec![self.disorder.clone()],
        }
    }

    /// Number of CSV data rows the run will produce.
    pub fn expected_rows(&self) -> Result<usize, ExperimentError> {
        Ok(match (&self.params, self.experiment) {
            (Params::Correlator { .. }, Experiment::KappaFit) => 1,
            (Params::Correlator { k_list, .. }, _) => k_list.len(),
            (Params::Transport { grid, .. }, _) | (Params::Number { grid, .. }, _) => grid.times()?.len(),
            (Params::BetaVsLambda { lambda_list, .. }, _) => lambda_list.len(),
            (Params::Plr { t_max_list, .. }, _) => t_max_list.len(),
        })
    }
}

/// Numeric table; every cell is printed with `f64`'s shortest round-trip
/// formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ExperimentError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv of numbers is utf-8"))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub experiment: Experiment,
    pub table: Table,
    /// Experiment-specific extras for the sidecar.
    pub results: serde_json::Value,
    /// Human-readable notes printed after the run (e.g. the κ report).
    pub notes: Vec<String>,
}

/// Runs the experiment. Pure computation; see [`write_outputs`] for files.
pub fn run(spec: &ExperimentSpec, runner: &EnsembleRunner) -> Result<RunOutput, ExperimentError> {
    let cfg = &spec.disorder;
    let samples = spec.samples;
    let mut notes = Vec::new();
    let (table, results) = match (&spec.params, spec.experiment) {
        (Params::Correlator { j, k_list }, experiment) => {
            let stats = runner.correlator_decay(cfg, samples, *j, k_list)?;
            if experiment == Experiment::KappaFit {
                let fit = fit_decay(k_list, &stats, cfg.lambda)?;
                let report = kappa_consistency(&fit);
                notes.push(report.to_string());
                let mut t = Table::new(&[
                    "lambda",
                    "slope",
                    "slope_stderr",
                    "intercept",
                    "k_min",
                    "k_max",
                    "points",
                    "kappa_estimate",
                    "kappa_stderr",
                    "consistent",
                ]);
                t.push(vec![
                    cfg.lambda,
                    fit.slope,
                    fit.slope_stderr,
                    fit.intercept,
                    fit.k_range.0 as f64,
                    fit.k_range.1 as f64,
                    fit.points as f64,
                    report.kappa_estimate,
                    report.kappa_stderr,
                    if report.consistent { 1.0 } else { 0.0 },
                ]);
                (t, json!({ "fit": fit, "kappa": report, "caveat": KAPPA_CAVEAT, "correlator": stats }))
            } else {
                let mut t = Table::new(&["k", "mean_Q", "stderr", "samples"]);
                for (k, s) in k_list.iter().zip(&stats) {
                    t.push(vec![*k as f64, s.mean, s.stderr, s.samples as f64]);
                }
                (t, json!({ "j": j }))
            }
        }
        (Params::Transport { p, grid }, _) => {
            let times = grid.times()?;
            let rows = runner.map_realizations(cfg, samples, |r| moment_series(&r.spectrum, *p, &times))?;
            let ids: Vec<String> = times.iter().map(|t| format!("|X|^{p}({t})")).collect();
            let values: Vec<Vec<f64>> = rows.iter().map(|s| s.values().to_vec()).collect();
            let stats = columns(&values, &ids)?;
            let mut t = Table::new(&["t", "mean_moment", "stderr", "samples", "max_boundary_mass"]);
            for (i, s) in stats.iter().enumerate() {
                let bm = rows.iter().map(|r| r.boundary().map_or(0.0, |b| b[i])).fold(0.0, f64::max);
                t.push(vec![times[i], s.mean, s.stderr, s.samples as f64, bm]);
            }
            (t, json!({ "p": p }))
        }
        (Params::BetaVsLambda { p, grid, window, lambda_list }, _) => {
            let times = grid.times()?;
            let rows = runner.beta_vs_lambda(cfg, samples, *p, lambda_list, &times, (window[0], window[1]))?;
            let mut t = Table::new(&[
                "lambda",
                "beta_median",
                "beta_mean",
                "stderr",
                "samples",
                "window_lo",
                "window_hi",
                "max_boundary_mass",
            ]);
            let mut per_lambda = Vec::new();
            for row in rows {
                let s = row.result?;
                t.push(vec![
                    row.lambda,
                    s.median,
                    s.mean,
                    s.stderr,
                    s.samples as f64,
                    row.window.0,
                    row.window.1,
                    s.max_boundary_mass,
                ]);
                per_lambda.push(json!({ "lambda": row.lambda, "betas": s.betas }));
            }
            (t, json!({ "p": p, "per_lambda": per_lambda }))
        }
        (Params::Plr { a, b, t_min, t_max_list, k_max }, _) => {
            let top = t_max_list[t_max_list.len() - 1];
            let times = witness_times(*t_min, top)?;
            let per: Vec<Vec<f64>> = runner.map_realizations(cfg, samples, |r| {
                let grid = witness_grid(&r.spectrum, &times, *k_max)?;
                t_max_list
                    .iter()
                    .map(|&tm| plr_witness_up_to(&grid, *a, *b, tm))
                    .collect::<Result<Vec<f64>, QuasifreeError>>()
            })?;
            let ids: Vec<String> = t_max_list.iter().map(|tm| format!("W(t<={tm})")).collect();
            let stats = columns(&per, &ids)?;
            let mut t = Table::new(&["t_max", "median_W", "mean_W", "stderr", "samples", "median_growth"]);
            for (i, s) in stats.iter().enumerate() {
                let col: Vec<f64> = per.iter().map(|w| w[i]).collect();
                let growth =
                    if i == 0 { 1.0 } else { median(&per.iter().map(|w| w[i] / w[i - 1]).collect::<Vec<_>>()) };
                t.push(vec![t_max_list[i], median(&col), s.mean, s.stderr, s.samples as f64, growth]);
            }
            (t, json!({ "a": a, "b": b, "grid_times": times, "k_max": k_max }))
        }
        (Params::Number { eta, sites, grid }, _) => {
            let times = grid.times()?;
            let state = match eta {
                Occupation::Wall(m) => ProductState::<f64>::domain_wall(cfg.n, *m)?,
                Occupation::Profile(v) => ProductState::new(v.clone())?,
            };
            let per: Vec<Vec<f64>> = runner.map_realizations(cfg, samples, |r| {
                let mut out = times
                    .iter()
                    .map(|&t| number_expectation(&r.spectrum, &state, sites, t))
                    .collect::<Result<Vec<f64>, QuasifreeError>>()?;
                out.push(number_correlator_bound(&r.spectrum, &state, sites)?);
                Ok::<_, QuasifreeError>(out)
            })?;
            let mut ids: Vec<String> = times.iter().map(|t| format!("N_S({t})")).collect();
            ids.push("bound".into());
            let stats = columns(&per, &ids)?;
            let bound = stats[times.len()].mean;
            let mut t = Table::new(&["t", "N_S", "stderr", "samples", "bound"]);
            for (i, s) in stats[..times.len()].iter().enumerate() {
                t.push(vec![times[i], s.mean, s.stderr, s.samples as f64, bound]);
            }
            let total = state.total();
            (t, json!({ "sites": sites, "total_occupation": total, "bound_stderr": stats[times.len()].stderr }))
        }
    };
    debug_assert_eq!(table.rows.len(), spec.expected_rows()?);
    Ok(RunOutput { experiment: spec.experiment, table, results, notes })
}

/// Provenance written next to the CSV.
pub fn sidecar(
    spec: &ExperimentSpec,
    output: &RunOutput,
    csv_name: &str,
    threads: usize,
    wall_seconds: f64,
) -> serde_json::Value {
    let disorder: Vec<serde_json::Value> = spec.disorder_configs().iter().map(|d| d.to_canonical_json()).collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool": "plr-chain",
        "tool_version": TOOL_VERSION,
        "experiment": spec.experiment.name(),
        "config": spec.to_raw(),
        "disorder": disorder,
        "master_seed": spec.disorder.master_seed,
        "seed_derivation": "seed_i = splitmix64(master_seed + 0x9E3779B97F4A7C15 * (i + 1)); ChaCha8Rng::seed_from_u64(seed_i)",
        "threads": threads,
        "wall_time_seconds": wall_seconds,
        "csv": csv_name,
        "columns": output.table.columns,
        "rows": output.table.rows.len(),
        "results": output.results,
    })
}

/// Writes `<dir>/<experiment>.csv` and `<dir>/<experiment>.json` and
/// returns their paths.
pub fn write_outputs(
    dir: &Path,
    spec: &ExperimentSpec,
    output: &RunOutput,
    threads: usize,
    wall_seconds: f64,
) -> Result<[PathBuf; 2], ExperimentError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let name = spec.experiment.name();
    let csv_path = dir.join(format!("{name}.csv"));
    let json_path = dir.join(format!("{name}.json"));
    let csv_name = format!("{name}.csv");
    std::fs::write(&csv_path, output.table.to_csv()?).map_err(io(&csv_path))?;
    let meta = sidecar(spec, output, &csv_name, threads, wall_seconds);
    let text = serde_json::to_string_pretty(&meta).expect("sidecar is plain data") + "\n";
    std::fs::write(&json_path, text).map_err(io(&json_path))?;
    Ok([csv_path, json_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<ExperimentSpec, ExperimentError> {
        RawSpec::parse(text)?.resolve(None)
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let s = resolve("experiment = \"correlator\"\nn = 256\nlambda = 6.0\n").unwrap();
        assert_eq!(s.samples, 100);
        assert_eq!(s.disorder.distribution.halfwidth(), 1.0);
        assert_eq!(s.disorder.envelope_exponent, 0.5);
        assert_eq!(s.disorder.master_seed, 0);
        assert_eq!(s.params, Params::Correlator { j: 1, k_list: default_k_list(256) });
        let echo = s.to_toml();
        assert!(echo.contains("samples = 100") && echo.contains("halfwidth = 1.0"), "{echo}");
    }

    #[test]
    fn key_errors_name_the_key() {
        let e = resolve("experiment = \"correlator\"\nn = 16\nlamda = 2.0\n").unwrap_err().to_string();
        assert!(e.contains("lamda"), "{e}");
        let e = resolve("experiment = \"correlator\"\nn = 16\n").unwrap_err().to_string();
        assert!(e.contains("`lambda`"), "{e}");
        let e =
            resolve("experiment = \"correlator\"\nn = 16\nlambda = 1.0\nk_list = [4, 17]\n").unwrap_err().to_string();
        assert!(e.contains("k_list") && e.contains("17"), "{e}");
        let e = resolve("experiment = \"plr\"\nn = 16\nlambda = 1.0\nk_list = [4]\n").unwrap_err().to_string();
        assert!(e.contains("k_list") && e.contains("plr"), "{e}");
        let e =
            resolve("experiment = \"transport\"\nn = 64\nlambda = 1.0\ntimes = [1.0, 0.5]\n").unwrap_err().to_string();
        assert!(e.contains("times"), "{e}");
        let e = resolve("experiment = \"number\"\nn = 8\nlambda = 1.0\nsites = [2, 2]\n").unwrap_err().to_string();
        assert!(e.contains("sites"), "{e}");
        let e = resolve("n = 8\nlambda = 1.0\nsamples = 0\nexperiment = \"number\"\n").unwrap_err().to_string();
        assert!(e.contains("samples"), "{e}");
    }

    #[test]
    fn subcommand_and_file_must_agree() {
        let raw = RawSpec::parse("n = 32\nlambda = 1.0\n").unwrap();
        assert_eq!(raw.resolve(Some(Experiment::Plr)).unwrap().experiment, Experiment::Plr);
        assert!(raw.resolve(None).is_err());
        let raw = RawSpec::parse("experiment = \"plr\"\nn = 32\nlambda = 1.0\n").unwrap();
        assert!(matches!(raw.resolve(Some(Experiment::Number)), Err(ExperimentError::WrongExperiment { .. })));
    }

    #[test]
    fn resolved_spec_round_trips() {
        let texts = [
            "experiment = \"correlator\"\nn = 64\nlambda = 6.0\nsamples = 3\n",
            "experiment = \"kappa-fit\"\nn = 64\nlambda = 6.0\nk_list = [2,3,4,5,6,7]\n",
            "experiment = \"transport\"\nn = 64\nlambda = 1.0\n",
            "experiment = \"beta-vs-lambda\"\nn = 64\nlambda_list = [0.0, 1.0]\nwindow = [1.0, 4.0]\n",
            "experiment = \"plr\"\nn = 64\nlambda = 1.0\nmaster_seed = 18446744073709551615\n",
            "experiment = \"number\"\nn = 10\nlambda = 1.0\ntimes = [0.0, 0.5]\n",
            "experiment = \"number\"\nn = 3\nlambda = 1.0\neta = [0.0, 0.5, 1.0]\nsites = [3]\n",
        ];
        for text in texts {
            let Ok(spec) = resolve(text).map_err(|e| eprintln!("{text}: {e}")) else {
                // u64::MAX does not fit a TOML integer.
                assert!(text.contains("18446744073709551615"));
                continue;
            };
            let again = RawSpec::parse(&spec.to_toml()).unwrap().resolve(None).unwrap();
            assert_eq!(spec, again, "{text}");
            let json = serde_json::to_string(&json!({ "schema_version": 1, "config": spec.to_raw() })).unwrap();
            assert_eq!(RawSpec::parse(&json).unwrap().resolve(None).unwrap(), spec);
        }
    }

    #[test]
    fn json_seed_keeps_all_bits() {
        let spec = RawSpec::parse(
            r#"{"experiment": "correlator", "n": 32, "lambda": 2.0, "master_seed": 18446744073709551615}"#,
        )
        .unwrap()
        .resolve(None)
        .unwrap();
        assert_eq!(spec.disorder.master_seed, u64::MAX);
    }

    #[test]
    fn row_counts_match_grids() {
        let runner = EnsembleRunner::new(2).unwrap();
        let texts = [
            "experiment = \"correlator\"\nn = 40\nlambda = 3.0\nsamples = 3\n",
            "experiment = \"kappa-fit\"\nn = 40\nlambda = 3.0\nsamples = 3\nk_list = [2,3,4,6,8,12,16]\n",
            "experiment = \"transport\"\nn = 64\nlambda = 1.0\nsamples = 2\nt_points = 9\n",
            "experiment = \"beta-vs-lambda\"\nn = 400\nsamples = 2\nlambda_list = [0.0, 0.5]\n",
            "experiment = \"plr\"\nn = 60\nlambda = 1.0\nsamples = 2\nt_max_list = [2.0, 3.0, 6.0]\n",
            "experiment = \"number\"\nn = 12\nlambda = 1.0\nsamples = 2\ntimes = [0.0, 0.5, 1.0]\n",
        ];
        for text in texts {
            let spec = resolve(text).unwrap();
            let out = run(&spec, &runner).unwrap();
            assert_eq!(out.table.rows.len(), spec.expected_rows().unwrap(), "{text}");
            let csv = out.table.to_csv().unwrap();
            assert_eq!(csv.lines().count(), out.table.rows.len() + 1);
        }
    }

    #[test]
    fn number_run_conserves_at_t0() {
        let spec = resolve("experiment = \"number\"\nn = 12\nlambda = 1.0\nsamples = 2\nwall = 4\nsites = [5, 6]\ntimes = [0.0, 1.0]\n").unwrap();
        let out = run(&spec, &EnsembleRunner::new(1).unwrap()).unwrap();
        assert_eq!(out.table.columns, vec!["t", "N_S", "stderr", "samples", "bound"]);
        assert!((out.table.rows[0][1] - 2.0).abs() < 1e-12);
        for row in &out.table.rows {
            assert!(row[1] <= row[4] + 1e-10);
        }
    }

    #[test]
    fn plr_runs_exclude_times_below_one() {
        let e = resolve("experiment = \"plr\"\nn = 32\nlambda = 1.0\nt_min = 0.5\n").unwrap_err().to_string();
        assert!(e.contains("t_min"), "{e}");
    }
}
