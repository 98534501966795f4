//! Disorder model and the one-body operator `H_n`.
//!
//! `H_n` is the `n × n` symmetric tridiagonal matrix with unit hopping and
//! diagonal `Ṽ_j = λ V_j / j^α` (1-based `j`, `α = 1/2` by default), i.e. a
//! discrete Schrödinger operator on the half line truncated at site `n`.
//!
//! # Seeding
//!
//! Realization `i` of an ensemble with root seed `s` draws its potential from
//! a ChaCha8 stream seeded with [`realization_seed`]`(s, i)`:
//!
//! ```text
//! z   = s + 0x9E37_79B9_7F4A_7C15 * (i + 1)      (wrapping u64 arithmetic)
//! z   = (z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9
//! z   = (z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB
//! out = z ^ (z >> 31)
//! ```
//!
//! which is the SplitMix64 output function applied to the `i + 1`-th element
//! of the SplitMix64 sequence started at `s`. The ChaCha8 stream is seeded via
//! `SeedableRng::seed_from_u64(out)`. Each `V_j` consumes one `u64` word `w`
//! and equals `h · (2u − 1)` with `u = (w >> 11) · 2^-53 ∈ [0, 1)`, so the
//! potential is bitwise reproducible on every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisorderError {
    #[error("chain length n must be at least 1")]
    EmptyChain,
    #[error("disorder strength lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("halfwidth of the single-site law must be positive and finite, got {0}")]
    InvalidHalfwidth(f64),
    #[error("envelope_exponent must be finite, got {0}")]
    InvalidEnvelope(f64),
    #[error("potential has length {got}, expected n = {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Single-site law of the `V_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform on `[-halfwidth, halfwidth]`: zero mean, bounded density,
    /// compact support. Variance `halfwidth² / 3`.
    UniformSymmetric { halfwidth: f64 },
}

impl Distribution {
    pub fn halfwidth(&self) -> f64 {
        match *self {
            Distribution::UniformSymmetric { halfwidth } => halfwidth,
        }
    }

    pub fn variance(&self) -> f64 {
        let h = self.halfwidth();
        h * h / 3.0
    }

    /// Maps one raw 64-bit word to a sample.
    #[inline]
    fn sample_word(&self, word: u64) -> f64 {
        match *self {
            Distribution::UniformSymmetric { halfwidth } => {
                let u = (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                halfwidth * (2.0 * u - 1.0)
            }
        }
    }
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::UniformSymmetric { halfwidth: 1.0 }
    }
}

/// Full specification of the random model. Serializes to the canonical JSON
/// used for provenance stamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderConfig {
    pub n: usize,
    pub lambda: f64,
    pub envelope_exponent: f64,
    pub distribution: Distribution,
    pub master_seed: u64,
}

impl DisorderConfig {
    pub const DEFAULT_ENVELOPE: f64 = 0.5;

    /// Config with the default law (uniform on `[-1, 1]`), envelope `1/2` and
    /// seed 0. Not validated; call [`DisorderConfig::validate`].
    pub fn new(n: usize, lambda: f64) -> Self {
        Self {
            n,
            lambda,
            envelope_exponent: Self::DEFAULT_ENVELOPE,
            distribution: Distribution::default(),
            master_seed: 0,
        }
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn with_halfwidth(mut self, halfwidth: f64) -> Self {
        self.distribution = Distribution::UniformSymmetric { halfwidth };
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_envelope(mut self, exponent: f64) -> Self {
        self.envelope_exponent = exponent;
        self
    }

    pub fn validate(&self) -> Result<(), DisorderError> {
        if self.n == 0 {
            return Err(DisorderError::EmptyChain);
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(DisorderError::InvalidLambda(self.lambda));
        }
        let h = self.distribution.halfwidth();
        if !(h > 0.0 && h.is_finite()) {
            return Err(DisorderError::InvalidHalfwidth(h));
        }
        if !self.envelope_exponent.is_finite() {
            return Err(DisorderError::InvalidEnvelope(self.envelope_exponent));
        }
        Ok(())
    }

    /// Envelope `j^{-α}` at 1-based site `j`.
    #[inline]
    pub fn envelope(&self, site: usize) -> f64 {
        let j = site as f64;
        if self.envelope_exponent == 0.5 {
            1.0 / j.sqrt()
        } else {
            j.powf(-self.envelope_exponent)
        }
    }

    pub fn to_canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("DisorderConfig is plain data")
    }
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of realization `index` under root `master_seed`; see module docs.
#[inline]
pub fn realization_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1))))
}

/// Draws `(V_1, …, V_n)` for one realization.
pub fn sample_potential(config: &DisorderConfig, realization_index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(config.master_seed, realization_index));
    (0..config.n).map(|_| config.distribution.sample_word(rng.next_u64())).collect()
}

/// The symmetric tridiagonal operator `H_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyOperator<T> {
    diag: Vec<T>,
    offdiag: Vec<T>,
}

impl<T: Real> OneBodyOperator<T> {
    /// Operator with the given diagonal and unit hopping.
    pub fn from_diagonal(diag: Vec<T>) -> Result<Self, DisorderError> {
        if diag.is_empty() {
            return Err(DisorderError::EmptyChain);
        }
        let offdiag = vec![T::one(); diag.len() - 1];
        Ok(Self { diag, offdiag })
    }

    /// The clean chain (`λ = 0`), used as an analytic reference.
    pub fn free_chain(n: usize) -> Result<Self, DisorderError> {
        Self::from_diagonal(vec![T::zero(); n])
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[T] {
        &self.offdiag
    }

    pub fn max_abs_diag(&self) -> T {
        self.diag.iter().fold(T::zero(), |m, d| m.max(d.abs()))
    }

    /// Infinity-norm of the matrix, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> T {
        let n = self.n();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.offdiag[i - 1].abs() } else { T::zero() };
                let right = if i + 1 < n { self.offdiag[i].abs() } else { T::zero() };
                self.diag[i].abs() + left + right
            })
            .fold(T::zero(), T::max)
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.n();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.offdiag[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.offdiag[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.n();
        let mut m = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.offdiag[i];
                m[i + 1][i] = self.offdiag[i];
            }
        }
        m
    }
}

/// Builds `H_n` for a drawn potential: `diag[j] = λ V_j / j^α`.
///
/// `λ = 0` is accepted here (but not by [`DisorderConfig::validate`]) so the
/// free chain can be produced through the same path.
pub fn build_one_body<T: Real>(
    config: &DisorderConfig,
    potential: &[f64],
) -> Result<OneBodyOperator<T>, DisorderError> {
    if potential.len() != config.n {
        return Err(DisorderError::LengthMismatch { expected: config.n, got: potential.len() });
    }
    if config.n == 0 {
        return Err(DisorderError::EmptyChain);
    }
    let diag = potential
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let site = i + 1;
            let scaled = if config.envelope_exponent == 0.5 {
                config.lambda * v / (site as f64).sqrt()
            } else {
                config.lambda * v * config.envelope(site)
            };
            T::lit(scaled)
        })
        .collect();
    OneBodyOperator::from_diagonal(diag)
}

/// `sample_potential` followed by `build_one_body`.
pub fn realize<T: Real>(config: &DisorderConfig, realization_index: u64) -> Result<OneBodyOperator<T>, DisorderError> {
    build_one_body(config, &sample_potential(config, realization_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn potential_respects_support() {
        let cfg = DisorderConfig::new(500, 1.0).with_seed(42);
        let v = sample_potential(&cfg, 3);
        assert_eq!(v.len(), 500);
        assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
        let cfg = cfg.with_halfwidth(0.25);
        assert!(sample_potential(&cfg, 3).iter().all(|x| x.abs() <= 0.25));
    }

    #[test]
    fn potential_is_deterministic() {
        let cfg = DisorderConfig::new(64, 2.0).with_seed(7);
        let a = sample_potential(&cfg, 11);
        let b = sample_potential(&cfg, 11);
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a, sample_potential(&cfg, 12));
        assert_ne!(a, sample_potential(&cfg.clone().with_seed(8), 11));
    }

    #[test]
    fn first_site_mean_is_centered() {
        // 10^6 draws of V_1 across realizations; uniform[-1,1] has sd 1/sqrt(3).
        let cfg = DisorderConfig::new(1, 1.0).with_seed(2024);
        let draws = 1_000_000u64;
        let sum: f64 = (0..draws).map(|i| sample_potential(&cfg, i)[0]).sum();
        let mean = sum / draws as f64;
        let tol = 4.0 * (1.0 / 3f64.sqrt()) / 1e3;
        assert!(mean.abs() < tol, "mean {mean} exceeds {tol}");
    }

    #[test]
    fn seed_mixing_reference_values() {
        // SplitMix64 reference: first output for state 0 is 0xE220A8397B1DCDAF.
        assert_eq!(realization_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_ne!(realization_seed(0, 1), realization_seed(1, 0));
    }

    #[test]
    fn envelope_examples() {
        let cfg = DisorderConfig::new(1, 2.0);
        let h: OneBodyOperator<f64> = build_one_body(&cfg, &[0.5]).unwrap();
        assert_eq!(h.diag(), &[1.0]);
        assert!(h.offdiag().is_empty());

        let cfg = DisorderConfig::new(4, 1.0);
        let h: OneBodyOperator<f64> = build_one_body(&cfg, &[1.0; 4]).unwrap();
        let want = [1.0, 1.0 / 2f64.sqrt(), 1.0 / 3f64.sqrt(), 0.5];
        for (a, b) in h.diag().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(h.offdiag(), &[1.0; 3]);
    }

    #[test]
    fn zero_lambda_gives_free_chain() {
        let cfg = DisorderConfig::new(5, 0.0);
        assert!(cfg.validate().is_err());
        let h: OneBodyOperator<f64> = build_one_body(&cfg, &[0.3, -0.2, 0.9, 0.1, -1.0]).unwrap();
        assert!(h.diag().iter().all(|&d| d == 0.0));
        assert_eq!(h, OneBodyOperator::free_chain(5).unwrap());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let cfg = DisorderConfig::new(3, 1.0);
        let err = build_one_body::<f64>(&cfg, &[1.0, 2.0]).unwrap_err();
        assert_eq!(err, DisorderError::LengthMismatch { expected: 3, got: 2 });
    }

    #[test]
    fn validation() {
        assert!(DisorderConfig::new(3, 1.0).validate().is_ok());
        assert_eq!(DisorderConfig::new(0, 1.0).validate(), Err(DisorderError::EmptyChain));
        assert!(DisorderConfig::new(3, -1.0).validate().is_err());
        assert!(DisorderConfig::new(3, 1.0).with_halfwidth(0.0).validate().is_err());
    }

    #[test]
    fn canonical_json_shape() {
        let js = DisorderConfig::new(8, 1.5).with_seed(9).to_canonical_json();
        assert_eq!(js["n"], 8);
        assert_eq!(js["distribution"]["law"], "uniform_symmetric");
        assert_eq!(js["distribution"]["halfwidth"], 1.0);
        let back: DisorderConfig = serde_json::from_value(js).unwrap();
        assert_eq!(back, DisorderConfig::new(8, 1.5).with_seed(9));
    }

    proptest! {
        #[test]
        fn realized_operator_invariants(
            n in 1usize..200,
            lambda in 0.01f64..20.0,
            halfwidth in 0.1f64..3.0,
            seed in any::<u64>(),
            index in 0u64..1000,
        ) {
            let cfg = DisorderConfig::new(n, lambda).with_seed(seed).with_halfwidth(halfwidth);
            let h: OneBodyOperator<f64> = realize(&cfg, index).unwrap();
            prop_assert_eq!(h.offdiag().len() + 1, h.diag().len());
            prop_assert!(h.offdiag().iter().all(|&e| e == 1.0));
            for (i, d) in h.diag().iter().enumerate() {
                let bound = lambda * halfwidth / ((i + 1) as f64).sqrt();
                prop_assert!(d.abs() <= bound * (1.0 + 1e-15));
            }
        }

        #[test]
        fn doubling_lambda_doubles_diagonal(n in 1usize..100, lambda in 0.01f64..10.0, seed in any::<u64>()) {
            let cfg = DisorderConfig::new(n, lambda).with_seed(seed);
            let v = sample_potential(&cfg, 0);
            let h1: OneBodyOperator<f64> = build_one_body(&cfg, &v).unwrap();
            let h2: OneBodyOperator<f64> = build_one_body(&cfg.clone().with_lambda(2.0 * lambda), &v).unwrap();
            for (a, b) in h1.diag().iter().zip(h2.diag()) {
                prop_assert_eq!(2.0 * a, *b);
            }
        }
    }
}
