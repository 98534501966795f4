//! Many-body quantities of the XY chain that reduce to one-body propagator
//! data under the Jordan-Wigner map.
//!
//! All dynamics use the physical phase `e^{-2itH_n}`. Transport exponents are
//! invariant under a constant rescaling of time, so exponent estimates do not
//! depend on this choice. The number-operator formula is written with
//! `e^{+2itH_n}`; since `H_n` is real symmetric, `⟨δ_j, e^{+2itH_n}δ_k⟩` is
//! the complex conjugate of the `e^{-2itH_n}` amplitude and only its modulus
//! enters.
//!
//! Finite `n` stands in for the half-line operator. Position moments carry the
//! boundary mass `B(t) = Σ_{k>n/2} |⟨δ_1, e^{-2itH_n}δ_k⟩|²`, and
//! [`estimate_beta`] refuses windows where `B ≥ 10⁻⁶`.

use num_complex::Complex;
use thiserror::Error;

use crate::spectral::{propagator, propagator_row, SpectralDecomposition, SpectralError};
use crate::Real;

/// Largest boundary mass tolerated inside a fitting window.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;
/// Minimum number of samples inside a fitting window.
pub const MIN_WINDOW_POINTS: usize = 8;
/// Relative self-consistency target for the Abel-average quadrature.
pub const QUADRATURE_RTOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuasifreeError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("occupation eta[{index}] = {value} is outside [0, 1]")]
    InvalidOccupation { index: usize, value: f64 },
    #[error("only {found} samples in window [{lo}, {hi}], need at least {needed}")]
    TooFewPoints { found: usize, needed: usize, lo: f64, hi: f64 },
    #[error("boundary mass {mass:e} at t = {t} exceeds {limit:e}: the front reached the chain end, increase n")]
    BoundaryReached { t: f64, mass: f64, limit: f64 },
    #[error("nonpositive value {value} at t = {t}, cannot take logarithm")]
    NonPositiveValue { t: f64, value: f64 },
}

/// Diagonal product state `⊗_j diag(η_j, 1 − η_j)`; `η_j` is the occupation
/// (up-spin probability) of site `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState<T> {
    eta: Vec<T>,
}

impl<T: Real> ProductState<T> {
    pub fn new(eta: Vec<T>) -> Result<Self, QuasifreeError> {
        for (index, &v) in eta.iter().enumerate() {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(QuasifreeError::InvalidOccupation { index, value: v.to_f64_lossy() });
            }
        }
        Ok(Self { eta })
    }

    /// Sites `1..=m` empty, `m+1..=n` filled.
    pub fn domain_wall(n: usize, m: usize) -> Result<Self, QuasifreeError> {
        if m > n {
            return Err(QuasifreeError::InvalidArgument(format!("domain wall position {m} exceeds n = {n}")));
        }
        Ok(Self { eta: (0..n).map(|i| if i < m { T::zero() } else { T::one() }).collect() })
    }

    pub fn eta(&self) -> &[T] {
        &self.eta
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn total(&self) -> T {
        self.eta.iter().copied().sum()
    }
}

/// `(t, value)` samples of a dynamical observable, with an optional boundary
/// mass per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    times: Vec<T>,
    values: Vec<T>,
    boundary: Option<Vec<T>>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self, QuasifreeError> {
        if times.len() != values.len() {
            return Err(QuasifreeError::InvalidArgument(format!(
                "times ({}) and values ({}) differ in length",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(QuasifreeError::InvalidArgument("times must be strictly ascending".into()));
        }
        if times.iter().any(|&t| !(t > T::zero())) {
            return Err(QuasifreeError::InvalidArgument("times must be positive".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QuasifreeError::InvalidArgument("values must be finite".into()));
        }
        Ok(Self { times, values, boundary: None })
    }

    pub fn with_boundary(mut self, boundary: Vec<T>) -> Result<Self, QuasifreeError> {
        if boundary.len() != self.times.len() {
            return Err(QuasifreeError::InvalidArgument("boundary diagnostic length mismatch".into()));
        }
        self.boundary = Some(boundary);
        Ok(self)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn boundary(&self) -> Option<&[T]> {
        self.boundary.as_deref()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `D(j,k,t) = Σ_{m=k}^{n} |⟨δ_j, e^{-2itH_n}δ_m⟩|`.
///
/// For `B` supported on `{k,…,n}` with `‖B‖ ≤ 1` and `A ∈ {a_j, a_j*}`,
/// `‖[τ_t(A), B]‖ ≤ 8 D(j,k,t)`; for `a_j* a_j` the Leibniz rule gives `16 D`.
pub fn commutator_upper<T: Real>(
    spec: &SpectralDecomposition<T>,
    j: usize,
    k: usize,
    t: T,
) -> Result<T, QuasifreeError> {
    spec.check_site(k)?;
    let row = propagator_row(spec, j, t)?;
    Ok(row[k - 1..].iter().map(|a| a.norm()).sum())
}

/// `k ↦ D(j,k,t)` for `k = 1..=n` (suffix sums of one propagator row).
pub fn commutator_upper_profile<T: Real>(
    spec: &SpectralDecomposition<T>,
    j: usize,
    t: T,
) -> Result<Vec<T>, QuasifreeError> {
    let row = propagator_row(spec, j, t)?;
    let mut out = vec![T::zero(); row.len()];
    let mut acc = T::zero();
    for (m, a) in row.iter().enumerate().rev() {
        acc += a.norm();
        out[m] = acc;
    }
    Ok(out)
}

/// `|⟨δ_1, e^{-2itH_n}δ_k⟩|`, a lower bound on `‖[τ_t(c_1), a_k*]‖`.
pub fn commutator_lower_witness<T: Real>(spec: &SpectralDecomposition<T>, k: usize, t: T) -> Result<T, QuasifreeError> {
    Ok(propagator(spec, 1, k, t)?.norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSample<T> {
    pub value: T,
    pub boundary_mass: T,
}

/// `|X|^p` and boundary mass of one propagator row started at site 1.
pub fn moment_of_row<T: Real>(row: &[Complex<T>], p: T) -> MomentSample<T> {
    let half = row.len() / 2;
    let mut value = T::zero();
    let mut boundary_mass = T::zero();
    for (i, a) in row.iter().enumerate() {
        let w = a.norm_sqr();
        let k = T::from_index(i + 1);
        value += if p == T::zero() { w } else { k.powf(p) * w };
        if i + 1 > half {
            boundary_mass += w;
        }
    }
    MomentSample { value, boundary_mass }
}

/// `|X|^p(t) = Σ_k k^p |⟨δ_1, e^{-2itH_n}δ_k⟩|²` with the boundary mass.
pub fn position_moment<T: Real>(
    spec: &SpectralDecomposition<T>,
    p: T,
    t: T,
) -> Result<MomentSample<T>, QuasifreeError> {
    if !(p >= T::zero()) {
        return Err(QuasifreeError::InvalidArgument(format!("moment order p = {p} must be nonnegative")));
    }
    Ok(moment_of_row(&propagator_row(spec, 1, t)?, p))
}

/// `|X|^p(t)` sampled on `times`, carrying the boundary mass.
pub fn moment_series<T: Real>(
    spec: &SpectralDecomposition<T>,
    p: T,
    times: &[T],
) -> Result<TimeSeries<T>, QuasifreeError> {
    let samples = times.iter().map(|&t| position_moment(spec, p, t)).collect::<Result<Vec<_>, _>>()?;
    TimeSeries::new(times.to_vec(), samples.iter().map(|s| s.value).collect())?
        .with_boundary(samples.iter().map(|s| s.boundary_mass).collect())
}

/// Geometric grid of `count` times from `t_lo` to `t_hi` inclusive.
pub fn geometric_times<T: Real>(t_lo: T, t_hi: T, count: usize) -> Result<Vec<T>, QuasifreeError> {
    if !(t_lo > T::zero() && t_hi > t_lo) || count < 2 {
        return Err(QuasifreeError::InvalidArgument(format!(
            "geometric grid needs 0 < t_lo < t_hi and at least 2 points, got [{t_lo}, {t_hi}] x {count}"
        )));
    }
    let ratio = (t_hi / t_lo).ln() / T::from_index(count - 1);
    let mut times: Vec<T> = (0..count).map(|i| t_lo * (ratio * T::from_index(i)).exp()).collect();
    times[count - 1] = t_hi;
    Ok(times)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbelAverage<T> {
    /// Quadrature over `[0, 10T]`.
    pub value: T,
    /// Bound on the neglected tail `∫_{10T}^∞`.
    pub tail_bound: T,
    /// Difference between the last two refinement levels.
    pub quadrature_error: T,
    /// Number of Simpson panels at the final level.
    pub panels: usize,
}

impl<T: Real> AbelAverage<T> {
    pub fn error_bar(&self) -> T {
        self.tail_bound + self.quadrature_error
    }
}

/// `(2/T) ∫_0^{10T} e^{-2t/T} f(t) dt` by composite Simpson with panel
/// doubling until two successive levels agree to [`QUADRATURE_RTOL`].
///
/// `omega_max` bounds the angular frequencies present in `f` and sets the
/// initial resolution; `sup_f` bounds `|f|` and sets the tail bound
/// `sup_f · e^{-20}`.
pub fn abel_average<T: Real, F: Fn(T) -> T>(
    f: F,
    horizon: T,
    omega_max: T,
    sup_f: T,
) -> Result<AbelAverage<T>, QuasifreeError> {
    if !(horizon > T::zero() && horizon.is_finite()) {
        return Err(QuasifreeError::InvalidArgument(format!("averaging time T = {horizon} must be positive")));
    }
    const MAX_DOUBLINGS: usize = 16;
    let two = T::lit(2.0);
    let upper = T::lit(10.0) * horizon;
    let integrand = |t: T| two / horizon * (-two * t / horizon).exp() * f(t);
    let oscillations = (upper * omega_max / T::lit(2.0 * std::f64::consts::PI)).to_f64_lossy();
    let mut panels = ((16.0 * oscillations).ceil() as usize).max(64);
    panels += panels % 2;

    // Trapezoid sums reused across doublings: S = (4 T_{h/2} − T_h) / 3.
    let h0 = upper / T::from_index(panels);
    let sum_ends = integrand(T::zero()) + integrand(upper);
    let mut sum_interior: T = (1..panels).map(|i| integrand(h0 * T::from_index(i))).sum();
    let trapezoid = |interior: T, h: T| h * (sum_ends / two + interior);
    let mut h = h0;
    let mut trap_prev = trapezoid(sum_interior, h);
    let mut simpson_prev: Option<T> = None;
    for _ in 0..=MAX_DOUBLINGS {
        let mids: T = (0..panels).map(|i| integrand(h * (T::from_index(i) + T::lit(0.5)))).sum();
        sum_interior += mids;
        panels *= 2;
        h /= two;
        let trap = trapezoid(sum_interior, h);
        let simpson = (T::lit(4.0) * trap - trap_prev) / T::lit(3.0);
        trap_prev = trap;
        if let Some(prev) = simpson_prev {
            let diff = (simpson - prev).abs();
            if diff <= T::lit(QUADRATURE_RTOL) * simpson.abs() || diff == T::zero() {
                return Ok(AbelAverage {
                    value: simpson,
                    tail_bound: sup_f * T::lit((-20.0f64).exp()),
                    quadrature_error: diff,
                    panels,
                });
            }
        }
        simpson_prev = Some(simpson);
    }
    let value = simpson_prev.expect("at least one level");
    Err(QuasifreeError::InvalidArgument(format!(
        "Abel-average quadrature did not reach relative accuracy {QUADRATURE_RTOL:e} (value {value})"
    )))
}

/// `⟨|X|^p⟩(T) = (2/T) ∫_0^∞ e^{-2t/T} |X|^p(t) dt`, by quadrature on
/// `[0, 10T]` with the tail `≤ n^p e^{-20}` reported as an error bar.
pub fn time_averaged_moment<T: Real>(
    spec: &SpectralDecomposition<T>,
    p: T,
    horizon: T,
) -> Result<AbelAverage<T>, QuasifreeError> {
    if !(p >= T::zero()) {
        return Err(QuasifreeError::InvalidArgument(format!("moment order p = {p} must be nonnegative")));
    }
    let ev = spec.eigenvalues();
    let width = ev[ev.len() - 1] - ev[0];
    // |X|^p oscillates with frequencies 2(E − E').
    let omega_max = T::lit(2.0) * width;
    let sup = T::from_index(spec.n()).powf(p);
    abel_average(|t| position_moment(spec, p, t).map(|m| m.value).unwrap_or(T::nan()), horizon, omega_max, sup)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEstimate {
    pub beta: f64,
    pub stderr: f64,
    pub points: usize,
    pub window: (f64, f64),
    pub max_boundary_mass: Option<f64>,
}

/// Least-squares slope of `ln |X|^p(t)` against `p ln t` over `window`.
///
/// Refuses when fewer than [`MIN_WINDOW_POINTS`] samples fall in the window or
/// when the boundary mass inside the window reaches [`BOUNDARY_MASS_LIMIT`].
pub fn estimate_beta<T: Real>(
    series: &TimeSeries<T>,
    p: f64,
    window: (f64, f64),
) -> Result<BetaEstimate, QuasifreeError> {
    let (lo, hi) = window;
    if !(p > 0.0) {
        return Err(QuasifreeError::InvalidArgument(format!("moment order p = {p} must be positive")));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(QuasifreeError::InvalidArgument(format!("window [{lo}, {hi}] is not a positive interval")));
    }
    if series.is_empty() {
        return Err(QuasifreeError::TooFewPoints { found: 0, needed: MIN_WINDOW_POINTS, lo, hi });
    }
    let first = series.times[0].to_f64_lossy();
    let last = series.times[series.len() - 1].to_f64_lossy();
    let slack = 1e-12 * hi;
    if lo < first - slack || hi > last + slack {
        return Err(QuasifreeError::InvalidArgument(format!(
            "window [{lo}, {hi}] is not contained in the sampled range [{first}, {last}]"
        )));
    }
    let idx: Vec<usize> = (0..series.len())
        .filter(|&i| {
            let t = series.times[i].to_f64_lossy();
            t >= lo - slack && t <= hi + slack
        })
        .collect();
    if idx.len() < MIN_WINDOW_POINTS {
        return Err(QuasifreeError::TooFewPoints { found: idx.len(), needed: MIN_WINDOW_POINTS, lo, hi });
    }
    let mut max_boundary_mass = None;
    if let Some(boundary) = series.boundary() {
        let mut worst = (0.0, 0.0);
        for &i in &idx {
            let m = boundary[i].to_f64_lossy();
            if m >= worst.1 {
                worst = (series.times[i].to_f64_lossy(), m);
            }
        }
        if !(worst.1 < BOUNDARY_MASS_LIMIT) {
            return Err(QuasifreeError::BoundaryReached { t: worst.0, mass: worst.1, limit: BOUNDARY_MASS_LIMIT });
        }
        max_boundary_mass = Some(worst.1);
    }
    let mut x = Vec::with_capacity(idx.len());
    let mut y = Vec::with_capacity(idx.len());
    for &i in &idx {
        let t = series.times[i].to_f64_lossy();
        let v = series.values[i].to_f64_lossy();
        if !(v > 0.0) {
            return Err(QuasifreeError::NonPositiveValue { t, value: v });
        }
        x.push(p * t.ln());
        y.push(v.ln());
    }
    let fit = crate::stats::fit_line(&x, &y);
    Ok(BetaEstimate { beta: fit.slope, stderr: fit.slope_stderr, points: idx.len(), window, max_boundary_mass })
}

fn validate_sites(sites: &[usize], n: usize) -> Result<(), QuasifreeError> {
    let mut seen = vec![false; n];
    for &s in sites {
        if s == 0 || s > n {
            return Err(QuasifreeError::Spectral(SpectralError::SiteOutOfRange { site: s, n }));
        }
        if seen[s - 1] {
            return Err(QuasifreeError::InvalidArgument(format!("site {s} listed twice in site set")));
        }
        seen[s - 1] = true;
    }
    Ok(())
}

/// `⟨N_S⟩_{ρ_t} = Σ_{j∈S} Σ_k |⟨δ_j, e^{2itH_n}δ_k⟩|² η_k`.
pub fn number_expectation<T: Real>(
    spec: &SpectralDecomposition<T>,
    state: &ProductState<T>,
    sites: &[usize],
    t: T,
) -> Result<T, QuasifreeError> {
    let n = spec.n();
    if state.len() != n {
        return Err(QuasifreeError::InvalidArgument(format!("product state has {} sites, chain has {n}", state.len())));
    }
    validate_sites(sites, n)?;
    let mut total = T::zero();
    for &j in sites {
        let row = propagator_row(spec, j, -t)?;
        total += row.iter().zip(state.eta()).map(|(a, &eta)| a.norm_sqr() * eta).sum::<T>();
    }
    Ok(total)
}

/// Time-independent bound `Σ_{j∈S} Σ_k η_k Q(j,k) ≥ sup_t ⟨N_S⟩_{ρ_t}`.
pub fn number_correlator_bound<T: Real>(
    spec: &SpectralDecomposition<T>,
    state: &ProductState<T>,
    sites: &[usize],
) -> Result<T, QuasifreeError> {
    validate_sites(sites, spec.n())?;
    let mut total = T::zero();
    for &j in sites {
        let q = crate::spectral::correlator_row(spec, j)?;
        total += q.iter().zip(state.eta()).map(|(&q, &eta)| q * eta).sum::<T>();
    }
    Ok(total)
}

/// One lower-witness value `|⟨δ_1, e^{-2itH_n}δ_k⟩|` at grid point `(k, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessSample<T> {
    pub k: usize,
    pub t: T,
    pub value: T,
}

/// `W(a,b) = max_{(k,t)} (k / t^a)^b · witness(k,t)`.
///
/// If PLR(a,b) holds with constant `C` then `W ≤ C` for every grid and every
/// `n`; growth of `W` under grid extension is evidence against PLR(a,b).
pub fn plr_witness<T: Real>(samples: &[WitnessSample<T>], a: T, b: T) -> Result<T, QuasifreeError> {
    if samples.is_empty() {
        return Err(QuasifreeError::InvalidArgument("empty witness grid".into()));
    }
    if !(a >= T::zero() && a <= T::one()) {
        return Err(QuasifreeError::InvalidArgument(format!("PLR exponent a = {a} must lie in [0, 1]")));
    }
    if !(b > T::zero()) {
        return Err(QuasifreeError::InvalidArgument(format!("PLR exponent b = {b} must be positive")));
    }
    let mut best = T::zero();
    for s in samples {
        if s.k < 2 || !(s.t > T::zero()) {
            return Err(QuasifreeError::InvalidArgument(format!(
                "witness grid point (k = {}, t = {}) needs k >= 2 and t > 0",
                s.k, s.t
            )));
        }
        let scale = (T::from_index(s.k) / s.t.powf(a)).powf(b);
        best = best.max(scale * s.value);
    }
    Ok(best)
}

/// Times `t_max · 2^{-i/2} ≥ t_min`, ascending. Grids built this way for
/// `t_max` and `t_max / 2^{m/2}` are nested.
pub fn witness_times<T: Real>(t_min: T, t_max: T) -> Result<Vec<T>, QuasifreeError> {
    if !(t_min > T::zero() && t_max >= t_min) {
        return Err(QuasifreeError::InvalidArgument(format!(
            "witness times need 0 < t_min <= t_max, got {t_min}, {t_max}"
        )));
    }
    let mut times = Vec::new();
    let mut i = 0i32;
    loop {
        let t = t_max * T::lit(2f64.powf(-(i as f64) / 2.0));
        if t < t_min * T::lit(1.0 - 1e-12) {
            break;
        }
        times.push(t);
        i += 1;
    }
    times.reverse();
    Ok(times)
}

/// All `(k, t)` witness samples for `k = 2..=k_max` at the given times.
pub fn witness_grid<T: Real>(
    spec: &SpectralDecomposition<T>,
    times: &[T],
    k_max: usize,
) -> Result<Vec<WitnessSample<T>>, QuasifreeError> {
    if k_max < 2 || k_max > spec.n() {
        return Err(QuasifreeError::InvalidArgument(format!("k_max = {k_max} must lie in 2..={}", spec.n())));
    }
    let mut out = Vec::with_capacity(times.len() * (k_max - 1));
    for &t in times {
        let row = propagator_row(spec, 1, t)?;
        out.extend((2..=k_max).map(|k| WitnessSample { k, t, value: row[k - 1].norm() }));
    }
    Ok(out)
}

/// `W(a,b)` restricted to grid points with `t ≤ t_limit`.
pub fn plr_witness_up_to<T: Real>(samples: &[WitnessSample<T>], a: T, b: T, t_limit: T) -> Result<T, QuasifreeError> {
    let cut = t_limit * T::lit(1.0 + 1e-12);
    let subset: Vec<_> = samples.iter().copied().filter(|s| s.t <= cut).collect();
    plr_witness(&subset, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{realize, DisorderConfig, OneBodyOperator};
    use crate::spectral::{correlator_row, diagonalize};
    use proptest::prelude::*;

    fn free(n: usize) -> SpectralDecomposition<f64> {
        diagonalize(&OneBodyOperator::<f64>::free_chain(n).unwrap()).unwrap()
    }

    fn random_spec(n: usize, lambda: f64, seed: u64) -> SpectralDecomposition<f64> {
        diagonalize(&realize::<f64>(&DisorderConfig::new(n, lambda).with_seed(seed), 0).unwrap()).unwrap()
    }

    #[test]
    fn commutator_upper_examples() {
        let s = random_spec(12, 2.0, 3);
        assert!(commutator_upper(&s, 2, 5, 0.0).unwrap() < 1e-12);
        assert!((commutator_upper(&s, 5, 3, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let s2 = free(2);
        for &t in &[0.1, 0.9, 2.3] {
            let d = commutator_upper(&s2, 1, 2, t).unwrap();
            assert!((d - (2.0 * t).sin().abs()).abs() < 1e-12);
        }
        assert!(commutator_upper(&s2, 1, 3, 0.5).is_err());
        assert!(commutator_upper(&s2, 0, 1, 0.5).is_err());
    }

    #[test]
    fn profile_matches_pointwise() {
        let s = random_spec(20, 1.0, 8);
        let prof = commutator_upper_profile(&s, 3, 1.7).unwrap();
        for k in 1..=20 {
            assert!((prof[k - 1] - commutator_upper(&s, 3, k, 1.7).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_witness_examples() {
        let s = random_spec(6, 1.0, 2);
        assert!(commutator_lower_witness(&s, 4, 0.0).unwrap() < 1e-14);
        assert!((commutator_lower_witness(&s, 1, 0.0).unwrap() - 1.0).abs() < 1e-14);
        let s2 = free(2);
        let t = 0.37;
        assert!((commutator_lower_witness(&s2, 2, t).unwrap() - (2.0 * t).sin().abs()).abs() < 1e-12);
        assert!(commutator_lower_witness(&s2, 3, t).is_err());
    }

    #[test]
    fn moment_examples() {
        let s = random_spec(30, 1.5, 4);
        for p in [0.0, 1.0, 2.5] {
            let m = position_moment(&s, p, 0.0).unwrap();
            assert!((m.value - 1.0).abs() < 1e-12);
        }
        let s2 = free(2);
        for &t in &[0.2, 1.0, 3.3] {
            let m = position_moment(&s2, 1.0, t).unwrap();
            let want = 1.0 + (2.0 * t).sin().powi(2);
            assert!((m.value - want).abs() < 1e-12);
            // n/2 = 1: boundary is site 2.
            assert!((m.boundary_mass - (2.0 * t).sin().powi(2)).abs() < 1e-12);
        }
        assert!(position_moment(&s2, -1.0, 1.0).is_err());
    }

    #[test]
    fn abel_average_closed_forms() {
        let c = abel_average(|_t: f64| 3.25, 7.0, 0.0, 3.25).unwrap();
        assert!((c.value - 3.25).abs() <= 1e-6 * 3.25 + c.error_bar());
        // (2/T) ∫ t e^{-2t/T} dt = T/2; truncation at 10T removes 21 e^{-20} T/2.
        let horizon = 13.0;
        let lin = abel_average(|t: f64| t, horizon, 0.0, 10.0 * horizon).unwrap();
        assert!((lin.value - horizon / 2.0).abs() < 1e-6 * horizon);
        assert!(abel_average(|t: f64| t, 0.0, 0.0, 1.0).is_err());
        assert!(abel_average(|t: f64| t, -1.0, 0.0, 1.0).is_err());
    }

    /// Closed form: `Σ_{E,E'} ψ_E(1)ψ_{E'}(1) M_{EE'} / (1 + ((E−E')T)²)`
    /// with `M_{EE'} = Σ_k k^p ψ_E(k) ψ_{E'}(k)`; the Abel weight turns
    /// `e^{-2it(E−E')}` into `1 / (1 + i(E−E')T)`.
    fn abel_oracle(s: &SpectralDecomposition<f64>, p: f64, horizon: f64) -> f64 {
        let n = s.n();
        let ev = s.eigenvalues();
        let mut total = 0.0;
        for e in 0..n {
            for f in 0..n {
                let m: f64 = (1..=n).map(|k| (k as f64).powf(p) * s.component(e, k) * s.component(f, k)).sum();
                let w = ev[e] - ev[f];
                total += s.component(e, 1) * s.component(f, 1) * m / (1.0 + (w * horizon).powi(2));
            }
        }
        total
    }

    #[test]
    fn time_averaged_moment_matches_spectral_closed_form() {
        let s = random_spec(64, 1.0, 17);
        for (p, horizon) in [(2.0, 5.0), (1.0, 12.0), (0.0, 3.0)] {
            let avg = time_averaged_moment(&s, p, horizon).unwrap();
            let exact = abel_oracle(&s, p, horizon);
            assert!(avg.quadrature_error <= 1e-6 * avg.value.abs());
            let rel = (avg.value - exact).abs() / exact;
            assert!(rel < 1e-6, "p={p} T={horizon}: {} vs {exact}", avg.value);
        }
        assert!(time_averaged_moment(&s, 2.0, 0.0).is_err());
    }

    #[test]
    fn beta_examples() {
        let times = geometric_times(1.0, 100.0, 20).unwrap();
        let constant = TimeSeries::new(times.clone(), vec![4.0; 20]).unwrap();
        let est = estimate_beta(&constant, 2.0, (1.0, 100.0)).unwrap();
        assert!(est.beta.abs() < 1e-12);
        let p = 1.7;
        let power = TimeSeries::new(times.clone(), times.iter().map(|t: &f64| t.powf(p)).collect()).unwrap();
        let est = estimate_beta(&power, p, (2.0, 100.0)).unwrap();
        assert!((est.beta - 1.0).abs() < 1e-12);
        assert!(est.stderr < 1e-10);
    }

    #[test]
    fn beta_errors() {
        let times = geometric_times(1.0, 100.0, 20).unwrap();
        let s = TimeSeries::new(times.clone(), vec![1.0; 20]).unwrap();
        assert!(matches!(estimate_beta(&s, 2.0, (50.0, 60.0)), Err(QuasifreeError::TooFewPoints { .. })));
        assert!(matches!(estimate_beta(&s, 2.0, (0.5, 60.0)), Err(QuasifreeError::InvalidArgument(_))));
        let mut boundary = vec![0.0; 20];
        boundary[15] = 1e-3;
        let guarded = s.clone().with_boundary(boundary).unwrap();
        let err = estimate_beta(&guarded, 2.0, (1.0, 100.0)).unwrap_err();
        assert!(matches!(err, QuasifreeError::BoundaryReached { .. }));
        assert!(err.to_string().contains("increase n"));
        assert!(TimeSeries::new(vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn free_chain_is_ballistic() {
        let s = free(4096);
        let times = geometric_times(20.0, 80.0, 16).unwrap();
        let series = moment_series(&s, 2.0, &times).unwrap();
        let est = estimate_beta(&series, 2.0, (20.0, 80.0)).unwrap();
        assert!((0.9..=1.1).contains(&est.beta), "beta = {}", est.beta);
        assert!(est.max_boundary_mass.unwrap() < 1e-6);
    }

    #[test]
    fn free_chain_boundary_guard_trips_on_small_n() {
        let s = free(128);
        let times = geometric_times(20.0, 80.0, 16).unwrap();
        let series = moment_series(&s, 2.0, &times).unwrap();
        assert!(matches!(estimate_beta(&series, 2.0, (20.0, 80.0)), Err(QuasifreeError::BoundaryReached { .. })));
    }

    #[test]
    fn number_examples() {
        let s = random_spec(10, 2.0, 5);
        let eta: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).fract()).collect();
        let state = ProductState::new(eta.clone()).unwrap();
        let sites = [2, 5, 9];
        let at0 = number_expectation(&s, &state, &sites, 0.0).unwrap();
        assert!((at0 - (eta[1] + eta[4] + eta[8])).abs() < 1e-12);
        let all: Vec<usize> = (1..=10).collect();
        for &t in &[0.3, 4.0, 50.0] {
            let total = number_expectation(&s, &state, &all, t).unwrap();
            assert!((total - state.total()).abs() < 1e-10);
            let part = number_expectation(&s, &state, &sites, t).unwrap();
            assert!(part >= -1e-10 && part <= 3f64.min(state.total()) + 1e-10);
        }
        let s2 = free(2);
        let st = ProductState::new(vec![0.0, 1.0]).unwrap();
        for &t in &[0.1, 0.8, 2.0] {
            let v = number_expectation(&s2, &st, &[1], t).unwrap();
            assert!((v - (2.0 * t).sin().powi(2)).abs() < 1e-12);
        }
        assert!(number_expectation(&s2, &st, &[3], 0.1).is_err());
        assert!(number_expectation(&s2, &st, &[1, 1], 0.1).is_err());
        assert!(ProductState::new(vec![1.2]).is_err());
    }

    #[test]
    fn number_bound_dominates() {
        let s = random_spec(24, 3.0, 6);
        let state = ProductState::<f64>::domain_wall(24, 12).unwrap();
        let sites: Vec<usize> = (1..=4).collect();
        let bound = number_correlator_bound(&s, &state, &sites).unwrap();
        for i in 0..50 {
            let v = number_expectation(&s, &state, &sites, i as f64 * 1.3).unwrap();
            assert!(v <= bound + 1e-10);
        }
    }

    #[test]
    fn witness_examples() {
        let s = random_spec(40, 1.0, 7);
        let tiny = witness_grid(&s, &[1e-6], 20).unwrap();
        assert!(plr_witness(&tiny, 0.0, 2.0).unwrap() < 1e-3);
        let b = 1.5;
        let single = [WitnessSample { k: 2, t: 1.0, value: commutator_lower_witness(&s, 2, 1.0).unwrap() }];
        let w = plr_witness(&single, 0.3, b).unwrap();
        assert!((w - 2f64.powf(b) * single[0].value).abs() < 1e-14);
        assert!(plr_witness::<f64>(&[], 0.5, 1.0).is_err());
        assert!(plr_witness(&[WitnessSample { k: 1, t: 1.0, value: 0.5 }], 0.5, 1.0).is_err());
        assert!(plr_witness(&single, 1.5, 1.0).is_err());
        assert!(plr_witness(&single, 0.5, 0.0).is_err());
    }

    #[test]
    fn witness_times_are_nested() {
        let big: Vec<f64> = witness_times(1.0, 50.0).unwrap();
        let small: Vec<f64> = witness_times(1.0, 25.0).unwrap();
        assert!(small.iter().all(|t| big.iter().any(|u| (u - t).abs() < 1e-12)));
        assert!(big.windows(2).all(|w| (w[1] / w[0] - 2f64.sqrt()).abs() < 1e-12));
        assert_eq!(*big.last().unwrap(), 50.0);
        assert!(big[0] >= 1.0);
    }

    #[test]
    fn free_chain_witness_grows() {
        let s = free(512);
        let times = witness_times(1.0, 50.0).unwrap();
        let grid = witness_grid(&s, &times, 256).unwrap();
        let w25 = plr_witness_up_to(&grid, 0.0, 1.0, 25.0).unwrap();
        let w50 = plr_witness_up_to(&grid, 0.0, 1.0, 50.0).unwrap();
        assert!(w50 > 1.5 * w25, "{w50} vs {w25}");
    }

    #[test]
    fn correlator_row_dominates_witness() {
        let s = random_spec(50, 4.0, 10);
        let q = correlator_row(&s, 1).unwrap();
        for i in 0..40 {
            let t = i as f64 * 2.5;
            for k in 1..=50 {
                assert!(commutator_lower_witness(&s, k, t).unwrap() <= q[k - 1] + 1e-10);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn moment_zero_is_one(n in 2usize..80, lambda in 0.1f64..8.0, seed in any::<u64>(), t in 0.0f64..100.0) {
            let s = random_spec(n, lambda, seed);
            prop_assert!((position_moment(&s, 0.0, t).unwrap().value - 1.0).abs() < 1e-10);
        }

        #[test]
        fn upper_bound_monotone_in_cut(n in 2usize..60, lambda in 0.1f64..8.0, seed in any::<u64>(), t in 0.0f64..50.0, j in 1usize..60) {
            let j = 1 + (j - 1) % n;
            let s = random_spec(n, lambda, seed);
            let prof = commutator_upper_profile(&s, j, t).unwrap();
            prop_assert!(prof.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn full_occupation_counts_every_site(n in 1usize..40, lambda in 0.1f64..8.0, seed in any::<u64>(), t in 0.0f64..50.0) {
            let s = random_spec(n, lambda, seed);
            let state = ProductState::new(vec![1.0; n]).unwrap();
            let all: Vec<usize> = (1..=n).collect();
            prop_assert!((number_expectation(&s, &state, &all, t).unwrap() - n as f64).abs() < 1e-10);
        }

        #[test]
        fn witness_is_homogeneous(
            values in proptest::collection::vec(0.0f64..1.0, 1..30),
            c in 0.01f64..100.0,
            a in 0.0f64..1.0,
            b in 0.1f64..4.0,
        ) {
            let grid: Vec<WitnessSample<f64>> = values.iter().enumerate()
                .map(|(i, &v)| WitnessSample { k: 2 + i % 7, t: 1.0 + i as f64 * 0.75, value: v })
                .collect();
            let scaled: Vec<WitnessSample<f64>> = grid.iter().map(|s| WitnessSample { value: c * s.value, ..*s }).collect();
            let w = plr_witness(&grid, a, b).unwrap();
            let ws = plr_witness(&scaled, a, b).unwrap();
            prop_assert!((ws - c * w).abs() <= 1e-12 * ws.abs().max(1.0));
        }
    }
}
