//! Cross-checks of every quasi-free formula against the dense simulator.

use std::fmt::Write as _;

use num_complex::Complex64;

use super::{
    build_site_operator, build_xy_hamiltonian, commutator_norm_with, fermionic_quadratic_form, number_expectation_with,
    DenseEvolution, DenseOperator, OracleError, SiteOp,
};
use crate::disorder::{build_one_body, sample_potential, splitmix64, DisorderConfig, OneBodyOperator};
use crate::quasifree::{commutator_lower_witness, commutator_upper, number_expectation, ProductState};
use crate::spectral::{diagonalize, propagator, SpectralDecomposition};

pub const CAR_TOL: f64 = 1e-12;
pub const JW_IDENTITY_TOL: f64 = 1e-10;
pub const HEISENBERG_TOL: f64 = 1e-9;
pub const NUMBER_TOL: f64 = 1e-8;
/// Slack allowed on the inequality checks (rounding only).
pub const INEQUALITY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SuiteParams {
    pub sizes: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub times: Vec<f64>,
    pub realizations: u64,
    pub master_seed: u64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            sizes: (2..=6).collect(),
            lambdas: vec![0.5, 2.0, 6.0],
            times: vec![0.0, 0.3, 0.7, 1.3, 2.1],
            realizations: 2,
            master_seed: 0x5EED,
        }
    }
}

/// Outcome of one named check. `worst` is the largest residual (equality
/// checks) or the largest violation `lhs − rhs` (inequality checks).
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub evaluations: usize,
}

impl CheckResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, worst: f64::NEG_INFINITY, tolerance, evaluations: 0 }
    }

    fn record(&mut self, value: f64) {
        self.worst = if value.is_nan() { f64::NAN } else { self.worst.max(value) };
        self.evaluations += 1;
    }

    pub fn passed(&self) -> bool {
        self.evaluations > 0 && self.worst <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub instances: usize,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<34} {:>12} {:>10} {:>7}  result", "check", "worst", "tolerance", "evals");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<34} {:>12.3e} {:>10.1e} {:>7}  {}",
                c.name,
                c.worst,
                c.tolerance,
                c.evaluations,
                if c.passed() { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(out, "instances: {}", self.instances);
        out
    }
}

pub const CHECK_CAR: &str = "car_anticommutators";
pub const CHECK_JW: &str = "jordan_wigner_identity";
pub const CHECK_HEISENBERG: &str = "heisenberg_fermion_linear";
pub const CHECK_CONSTANT: &str = "constant_shift_invariance";
pub const CHECK_NUMBER: &str = "number_expectation_match";
pub const CHECK_WITNESS_LOWER: &str = "sandwich_witness_le_exact";
pub const CHECK_UPPER: &str = "sandwich_exact_le_8D";
pub const CHECK_LEIBNIZ: &str = "leibniz_number_le_16D";
pub const CHECK_SMALL_T: &str = "small_t_linear_growth";

fn occupations(n: usize, seed: u64) -> Vec<f64> {
    (0..n).map(|j| (splitmix64(seed.wrapping_add(j as u64 + 1)) >> 11) as f64 / (1u64 << 53) as f64).collect()
}

/// Maximum entrywise residual of `{c_j, c_k*} = δ_{jk}` and `{c_j, c_k} = 0`.
pub fn car_residual(n: usize) -> Result<f64, OracleError> {
    let id = DenseOperator::identity(n)?;
    let zero = DenseOperator::zeros(n)?;
    let c: Vec<DenseOperator> =
        (1..=n).map(|j| build_site_operator(SiteOp::Annihilate, j, n)).collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for (j, cj) in c.iter().enumerate() {
        for (k, ck) in c.iter().enumerate() {
            let mixed = cj.anticommutator(&ck.adjoint())?;
            worst = worst.max(mixed.max_abs_diff(if j == k { &id } else { &zero })?);
            worst = worst.max(cj.anticommutator(ck)?.max_abs_diff(&zero)?);
        }
    }
    Ok(worst)
}

/// Residual of `τ_t(c_j) = Σ_m ⟨δ_j, e^{-2itH_n}δ_m⟩ c_m` over all `j`.
pub fn heisenberg_residual(
    evolution: &DenseEvolution,
    spec: &SpectralDecomposition<f64>,
    t: f64,
) -> Result<f64, OracleError> {
    let n = spec.n();
    let c: Vec<DenseOperator> =
        (1..=n).map(|j| build_site_operator(SiteOp::Annihilate, j, n)).collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for j in 1..=n {
        let evolved = evolution.heisenberg(&c[j - 1], t)?;
        let mut linear = DenseOperator::zeros(n)?;
        for m in 1..=n {
            let amp = propagator(spec, j, m, t).map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
            linear = linear.add(&c[m - 1].scale(amp))?;
        }
        worst = worst.max(evolved.max_abs_diff(&linear)?);
    }
    Ok(worst)
}

struct Instance {
    h: OneBodyOperator<f64>,
    spin: DenseOperator,
    spec: SpectralDecomposition<f64>,
    evolution: DenseEvolution,
    seed: u64,
}

/// Runs every check over `sizes × lambdas × realizations` instances and all
/// `times`.
pub fn run_suite(params: &SuiteParams) -> Result<SuiteReport, OracleError> {
    let mut car = CheckResult::new(CHECK_CAR, CAR_TOL);
    let mut jw = CheckResult::new(CHECK_JW, JW_IDENTITY_TOL);
    let mut heis = CheckResult::new(CHECK_HEISENBERG, HEISENBERG_TOL);
    let mut constant = CheckResult::new(CHECK_CONSTANT, HEISENBERG_TOL);
    let mut number = CheckResult::new(CHECK_NUMBER, NUMBER_TOL);
    let mut lower = CheckResult::new(CHECK_WITNESS_LOWER, INEQUALITY_SLACK);
    let mut upper = CheckResult::new(CHECK_UPPER, INEQUALITY_SLACK);
    let mut leibniz = CheckResult::new(CHECK_LEIBNIZ, INEQUALITY_SLACK);
    let mut small_t = CheckResult::new(CHECK_SMALL_T, INEQUALITY_SLACK);
    let mut instances = 0;

    for &n in &params.sizes {
        car.record(car_residual(n)?);
        for &lambda in &params.lambdas {
            for r in 0..params.realizations {
                let cfg = DisorderConfig::new(n, lambda).with_seed(params.master_seed);
                let potential = sample_potential(&cfg, r);
                let h: OneBodyOperator<f64> = build_one_body(&cfg, &potential)?;
                let spin = build_xy_hamiltonian(&cfg, &potential)?;
                jw.record(spin.max_abs_diff(&fermionic_quadratic_form(&h)?)?);
                let spec = diagonalize(&h).map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
                let evolution = DenseEvolution::new(&spin)?;
                let inst = Instance { h, spin, spec, evolution, seed: params.master_seed ^ (r << 32) ^ n as u64 };
                instances += 1;

                check_constant_shift(&inst, &params.times, &mut constant)?;
                check_small_t(&inst, &mut small_t)?;
                for &t in &params.times {
                    heis.record(heisenberg_residual(&inst.evolution, &inst.spec, t)?);
                    check_number(&inst, t, &mut number)?;
                    check_sandwich(&inst, t, &mut lower, &mut upper, &mut leibniz)?;
                }
            }
        }
    }
    Ok(SuiteReport { instances, checks: vec![car, jw, heis, constant, number, lower, upper, leibniz, small_t] })
}

fn quasi<E: std::fmt::Display>(e: E) -> OracleError {
    OracleError::InvalidArgument(e.to_string())
}

/// Dropping `Σ Ṽ_j` from the generator leaves commutators unchanged.
fn check_constant_shift(inst: &Instance, times: &[f64], out: &mut CheckResult) -> Result<(), OracleError> {
    let n = inst.h.n();
    let shift: f64 = inst.h.diag().iter().sum();
    let two_c_h_c = inst.spin.add(&DenseOperator::identity(n)?.scale(Complex64::new(shift, 0.0)))?;
    let dropped = DenseEvolution::new(&two_c_h_c)?;
    let a = build_site_operator(SiteOp::Annihilate, 1, n)?;
    let b = build_site_operator(SiteOp::Raise, n, n)?;
    for &t in times {
        let full = inst.evolution.heisenberg(&a, t)?.commutator(&b)?;
        let reduced = dropped.heisenberg(&a, t)?.commutator(&b)?;
        out.record(full.max_abs_diff(&reduced)?);
    }
    Ok(())
}

/// `‖[τ_t(σ^x_1), σ^x_2]‖ ≤ 2|t| ‖[H, σ^x_1]‖` near `t = 0`.
fn check_small_t(inst: &Instance, out: &mut CheckResult) -> Result<(), OracleError> {
    let n = inst.h.n();
    if n < 2 {
        return Ok(());
    }
    let a = build_site_operator(SiteOp::Sx, 1, n)?;
    let b = build_site_operator(SiteOp::Sx, 2, n)?;
    let rate = 2.0 * inst.spin.commutator(&a)?.operator_norm();
    for t in [1e-3, 1e-2, 5e-2] {
        let norm = commutator_norm_with(&inst.evolution, &a, &b, t)?;
        out.record(norm - rate * t);
    }
    Ok(())
}

fn check_number(inst: &Instance, t: f64, out: &mut CheckResult) -> Result<(), OracleError> {
    let n = inst.h.n();
    let half = n.div_ceil(2);
    let random = ProductState::new(occupations(n, inst.seed)).map_err(quasi)?;
    let wall = ProductState::<f64>::domain_wall(n, half).map_err(quasi)?;
    let lower_half: Vec<usize> = (1..=half).collect();
    let odd: Vec<usize> = (1..=n).step_by(2).collect();
    for state in [&random, &wall] {
        for sites in [&lower_half, &odd] {
            let exact = number_expectation_with(&inst.evolution, state, sites, t)?;
            let free = number_expectation(&inst.spec, state, sites, t).map_err(quasi)?;
            out.record((exact - free).abs());
        }
    }
    Ok(())
}

fn check_sandwich(
    inst: &Instance,
    t: f64,
    lower: &mut CheckResult,
    upper: &mut CheckResult,
    leibniz: &mut CheckResult,
) -> Result<(), OracleError> {
    let n = inst.h.n();
    let c1 = build_site_operator(SiteOp::Annihilate, 1, n)?;
    let a1 = build_site_operator(SiteOp::Lower, 1, n)?;
    let number1 = a1.adjoint().mul(&a1)?;
    for k in 2..=n {
        let b = build_site_operator(SiteOp::Raise, k, n)?;
        let exact = commutator_norm_with(&inst.evolution, &c1, &b, t)?;
        let witness = commutator_lower_witness(&inst.spec, k, t).map_err(quasi)?;
        let d = commutator_upper(&inst.spec, 1, k, t).map_err(quasi)?;
        lower.record(witness - exact);
        upper.record(exact - 8.0 * d);

        // Norm-one observables supported on {k, …, n}.
        let mut observables = vec![build_site_operator(SiteOp::Sx, k, n)?, build_site_operator(SiteOp::Sy, k, n)?];
        if k < n {
            observables.push(build_site_operator(SiteOp::Sz, k, n)?.mul(&build_site_operator(SiteOp::Sx, n, n)?)?);
        }
        for obs in &observables {
            let norm = commutator_norm_with(&inst.evolution, &number1, obs, t)?;
            leibniz.record(norm - 16.0 * d);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let params = SuiteParams {
            sizes: vec![2, 3, 4],
            lambdas: vec![1.0],
            times: vec![0.0, 0.9],
            realizations: 1,
            master_seed: 1,
        };
        let report = run_suite(&params).unwrap();
        assert_eq!(report.instances, 3);
        assert!(report.all_passed(), "{}", report.render_table());
        assert!(report.render_table().contains("PASS"));
    }

    #[test]
    fn unevaluated_check_does_not_pass() {
        let c = CheckResult::new("x", 1.0);
        assert!(!c.passed());
    }
}
