//! Eigendecomposition of the one-body operator and the quantities built from
//! it: propagator amplitudes `⟨δ_j, e^{-2itH_n} δ_k⟩` and the eigenfunction
//! correlator `Q(j,k) = Σ_E |ψ_E(j)| |ψ_E(k)|`.
//!
//! The factor 2 in the propagator phase comes from `H^{XY} = 2 C* H_n C − const`
//! and is applied here and nowhere else. Sites are 1-based throughout the
//! public API.
//!
//! Two tridiagonal eigensolvers are provided:
//!
//! - [`Method::Ql`]: implicit-shift QL with accumulated rotations, `O(n³)`.
//! - [`Method::InverseIteration`]: QL for the eigenvalues only, then one
//!   tridiagonal inverse iteration per eigenvalue with modified Gram-Schmidt
//!   inside clusters of close eigenvalues, `O(n²)` for well-separated spectra.
//!
//! [`diagonalize`] picks QL up to [`QL_MAX_N`] sites and inverse iteration
//! above. Either way the result is normalized to ascending eigenvalues and the
//! sign convention below, and is checked for residual and orthonormality by
//! the tests rather than by algorithm identity.
//!
//! # Sign convention
//!
//! Each eigenvector is flipped so that its first entry with magnitude above
//! `sqrt(ε) · max|ψ|` is positive. Entries smaller than that carry no
//! reliable sign. `Q` and `|propagator|` do not depend on the convention.
//!
//! # Degeneracies
//!
//! Inside a numerically degenerate subspace the basis is not unique and `Q` is
//! basis dependent. For any orthonormal choice `Q(j,k)` still dominates
//! `|⟨δ_j, g(H)δ_k⟩|` for every `|g| ≤ 1`, because
//! `|Σ_E g(E) ψ_E(j) ψ_E(k)| ≤ Σ_E |ψ_E(j)||ψ_E(k)|` for any eigenbasis.

use num_complex::Complex;
use thiserror::Error;

use crate::disorder::OneBodyOperator;
use crate::Real;

/// Largest chain handled by full QL in [`diagonalize`].
pub const QL_MAX_N: usize = 200;

const QL_MAX_SWEEPS: usize = 60;
const INVERSE_ITERATION_STEPS: usize = 3;
const INVERSE_ITERATION_MAX_STEPS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("QL iteration did not converge for eigenvalue index {index}")]
    NoConvergence { index: usize },
    #[error("inverse iteration did not converge for eigenvector index {index} (residual {residual:e})")]
    InverseIterationFailed { index: usize, residual: f64 },
    #[error("site {site} out of range 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    Ql,
    InverseIteration,
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of `H_n`.
///
/// Eigenvectors are stored column-major: column `e` is `ψ_{E_e}` and occupies
/// `vectors[e*n .. (e+1)*n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T> {
    n: usize,
    eigenvalues: Vec<T>,
    vectors: Vec<T>,
}

impl<T: Real> SpectralDecomposition<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Eigenvector `ψ_{E_e}` (0-based index `e`, entries indexed by site − 1).
    pub fn eigenvector(&self, e: usize) -> &[T] {
        &self.vectors[e * self.n..(e + 1) * self.n]
    }

    /// `ψ_{E_e}(site)`, 1-based site.
    #[inline]
    pub fn component(&self, e: usize, site: usize) -> T {
        self.vectors[e * self.n + site - 1]
    }

    pub fn check_site(&self, site: usize) -> Result<(), SpectralError> {
        if site == 0 || site > self.n {
            Err(SpectralError::SiteOutOfRange { site, n: self.n })
        } else {
            Ok(())
        }
    }

    /// `max_e ‖H ψ_e − E_e ψ_e‖₂`.
    pub fn max_residual(&self, h: &OneBodyOperator<T>) -> T {
        (0..self.n)
            .map(|e| {
                let v = self.eigenvector(e);
                let hv = h.apply(v);
                hv.iter()
                    .zip(v)
                    .map(|(&a, &b)| {
                        let r = a - self.eigenvalues[e] * b;
                        r * r
                    })
                    .sum::<T>()
                    .sqrt()
            })
            .fold(T::zero(), T::max)
    }

    /// `max_{e,f} |⟨ψ_e, ψ_f⟩ − δ_{ef}|`; `O(n³)`.
    pub fn max_orthonormality_error(&self) -> T {
        let mut worst = T::zero();
        for e in 0..self.n {
            for f in e..self.n {
                let dot: T = self.eigenvector(e).iter().zip(self.eigenvector(f)).map(|(&a, &b)| a * b).sum();
                let target = if e == f { T::one() } else { T::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Diagonalizes `h` with [`Method::Auto`].
pub fn diagonalize<T: Real>(h: &OneBodyOperator<T>) -> Result<SpectralDecomposition<T>, SpectralError> {
    diagonalize_with(h, Method::Auto)
}

pub fn diagonalize_with<T: Real>(
    h: &OneBodyOperator<T>,
    method: Method,
) -> Result<SpectralDecomposition<T>, SpectralError> {
    let n = h.n();
    let method = match method {
        Method::Auto if n <= QL_MAX_N => Method::Ql,
        Method::Auto => Method::InverseIteration,
        m => m,
    };
    let (eigenvalues, mut vectors) = match method {
        Method::Ql => {
            let mut d = h.diag().to_vec();
            let mut e = h.offdiag().to_vec();
            e.push(T::zero());
            let mut z = vec![T::zero(); n * n];
            for i in 0..n {
                z[i * n + i] = T::one();
            }
            tql(&mut d, &mut e, Some(&mut z))?;
            sort_pairs(d, z, n)
        }
        Method::InverseIteration => {
            let mut d = h.diag().to_vec();
            let mut e = h.offdiag().to_vec();
            e.push(T::zero());
            tql(&mut d, &mut e, None)?;
            d.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
            let z = inverse_iteration(h, &d)?;
            (d, z)
        }
        Method::Auto => unreachable!(),
    };
    for col in vectors.chunks_mut(n) {
        fix_sign(col);
    }
    Ok(SpectralDecomposition { n, eigenvalues, vectors })
}

/// Implicit-shift QL on a symmetric tridiagonal matrix (diagonal `d`,
/// subdiagonal `e[0..n-1]`, `e[n-1]` scratch). On return `d` holds the
/// eigenvalues in no particular order. If `z` is given (column-major `n×n`),
/// the rotations are accumulated into its columns.
fn tql<T: Real>(d: &mut [T], e: &mut [T], mut z: Option<&mut [T]>) -> Result<(), SpectralError> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    let eps = T::epsilon();
    let two = T::lit(2.0);
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > QL_MAX_SWEEPS {
                return Err(SpectralError::NoConvergence { index: l });
            }
            // Wilkinson shift from the leading 2×2 block.
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    let (left, right) = z.split_at_mut((i + 1) * n);
                    let zi = &mut left[i * n..];
                    let zi1 = &mut right[..n];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let f = *b;
                        *b = s * *a + c * f;
                        *a = c * *a - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

fn sort_pairs<T: Real>(d: Vec<T>, z: Vec<T>, n: usize) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &order {
        vectors.extend_from_slice(&z[i * n..(i + 1) * n]);
    }
    (values, vectors)
}

fn fix_sign<T: Real>(v: &mut [T]) {
    let max = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let threshold = T::epsilon().sqrt() * max;
    if let Some(first) = v.iter().find(|x| x.abs() > threshold) {
        if *first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// LU factorization with partial pivoting of the tridiagonal `T − σI`.
struct TridiagonalLu<T> {
    lower: Vec<T>,
    diag: Vec<T>,
    upper1: Vec<T>,
    upper2: Vec<T>,
    swapped: Vec<bool>,
}

impl<T: Real> TridiagonalLu<T> {
    /// Factorizes; pivots smaller than `tiny` are replaced by `±tiny` so the
    /// solve stays finite when `σ` is an exact eigenvalue.
    fn factor(h: &OneBodyOperator<T>, shift: T, tiny: T) -> Self {
        let n = h.n();
        let mut diag: Vec<T> = h.diag().iter().map(|&d| d - shift).collect();
        let mut lower: Vec<T> = h.offdiag().to_vec();
        let mut upper1: Vec<T> = h.offdiag().to_vec();
        let mut upper2 = vec![T::zero(); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if diag[i].abs() >= lower[i].abs() {
                if diag[i].abs() < tiny {
                    diag[i] = tiny.copysign(diag[i]);
                }
                let fact = lower[i] / diag[i];
                lower[i] = fact;
                diag[i + 1] -= fact * upper1[i];
            } else {
                let fact = diag[i] / lower[i];
                diag[i] = lower[i];
                lower[i] = fact;
                let temp = upper1[i];
                upper1[i] = diag[i + 1];
                diag[i + 1] = temp - fact * diag[i + 1];
                if i + 2 < n {
                    upper2[i] = upper1[i + 1];
                    upper1[i + 1] = -fact * upper1[i + 1];
                }
                swapped[i] = true;
            }
        }
        if let Some(last) = diag.last_mut() {
            if last.abs() < tiny {
                *last = tiny.copysign(*last);
            }
        }
        Self { lower, diag, upper1, upper2, swapped }
    }

    fn solve_in_place(&self, b: &mut [T]) {
        let n = self.diag.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.lower[i] * b[i];
            } else {
                b[i + 1] -= self.lower[i] * b[i];
            }
        }
        for i in (0..n).rev() {
            let mut x = b[i];
            if i + 1 < n {
                x -= self.upper1[i] * b[i + 1];
            }
            if i + 2 < n {
                x -= self.upper2[i] * b[i + 2];
            }
            b[i] = x / self.diag[i];
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn normalize<T: Real>(v: &mut [T]) -> T {
    let norm = dot(v, v).sqrt();
    if norm > T::zero() {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn residual<T: Real>(h: &OneBodyOperator<T>, value: T, v: &[T]) -> T {
    h.apply(v).iter().zip(v).map(|(&a, &b)| (a - value * b) * (a - value * b)).sum::<T>().sqrt()
}

/// Eigenvectors for sorted eigenvalues `values` by inverse iteration.
fn inverse_iteration<T: Real>(h: &OneBodyOperator<T>, values: &[T]) -> Result<Vec<T>, SpectralError> {
    let n = h.n();
    let norm = h.norm_inf().max(T::one());
    let eps = T::epsilon();
    // Vectors whose eigenvalues are closer than this are orthogonalized against
    // each other explicitly; farther pairs lose at most ~ε‖H‖/gap orthogonality.
    let cluster_gap = T::lit(1e-5) * norm;
    let perturb = T::lit(10.0) * eps * norm;
    let tiny = eps * norm;
    let tolerance = T::lit(1000.0) * T::from_index(n).sqrt() * eps * norm;

    let mut out = vec![T::zero(); n * n];
    let mut cluster_start = 0usize;
    let mut prev_shift = T::neg_infinity();
    let mut seed = 0x2545_F491_4F6C_DD1Du64;

    for idx in 0..values.len() {
        if idx > 0 && values[idx] - values[idx - 1] > cluster_gap {
            cluster_start = idx;
        }
        let mut shift = values[idx];
        if idx > cluster_start && shift - prev_shift < perturb {
            shift = prev_shift + perturb;
        }
        prev_shift = shift;

        let lu = TridiagonalLu::factor(h, shift, tiny);
        let mut v: Vec<T> = (0..n)
            .map(|_| {
                seed ^= seed << 13;
                seed ^= seed >> 7;
                seed ^= seed << 17;
                T::lit((seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            })
            .collect();
        normalize(&mut v);

        let mut steps = 0;
        loop {
            lu.solve_in_place(&mut v);
            for prev in cluster_start..idx {
                let q = &out[prev * n..(prev + 1) * n];
                let proj = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(x, &y)| *x -= proj * y);
            }
            normalize(&mut v);
            steps += 1;
            if steps < INVERSE_ITERATION_STEPS {
                continue;
            }
            let res = residual(h, values[idx], &v);
            if res <= tolerance {
                break;
            }
            if steps >= INVERSE_ITERATION_MAX_STEPS {
                return Err(SpectralError::InverseIterationFailed { index: idx, residual: res.to_f64_lossy() });
            }
        }
        out[idx * n..(idx + 1) * n].copy_from_slice(&v);
    }
    Ok(out)
}

/// `⟨δ_j, e^{-2itH_n} δ_k⟩ = Σ_E e^{-2itE} ψ_E(j) ψ_E(k)`.
pub fn propagator<T: Real>(
    spec: &SpectralDecomposition<T>,
    j: usize,
    k: usize,
    t: T,
) -> Result<Complex<T>, SpectralError> {
    spec.check_site(j)?;
    spec.check_site(k)?;
    let two_t = T::lit(2.0) * t;
    let mut acc = Complex::new(T::zero(), T::zero());
    for (e, &energy) in spec.eigenvalues.iter().enumerate() {
        let w = spec.component(e, j) * spec.component(e, k);
        let phase = -two_t * energy;
        acc.re += w * phase.cos();
        acc.im += w * phase.sin();
    }
    Ok(acc)
}

/// Row `k ↦ ⟨δ_j, e^{-2itH_n} δ_k⟩` for all sites in one `O(n²)` pass.
pub fn propagator_row<T: Real>(
    spec: &SpectralDecomposition<T>,
    j: usize,
    t: T,
) -> Result<Vec<Complex<T>>, SpectralError> {
    spec.check_site(j)?;
    let n = spec.n;
    let two_t = T::lit(2.0) * t;
    let mut re = vec![T::zero(); n];
    let mut im = vec![T::zero(); n];
    for (e, &energy) in spec.eigenvalues.iter().enumerate() {
        let weight = spec.component(e, j);
        let phase = -two_t * energy;
        let (cr, ci) = (weight * phase.cos(), weight * phase.sin());
        for ((r, i), &psi) in re.iter_mut().zip(im.iter_mut()).zip(spec.eigenvector(e)) {
            *r += cr * psi;
            *i += ci * psi;
        }
    }
    Ok(re.into_iter().zip(im).map(|(r, i)| Complex::new(r, i)).collect())
}

/// `Q(j,k) = Σ_E |ψ_E(j)| |ψ_E(k)|`.
pub fn eigenfunction_correlator<T: Real>(
    spec: &SpectralDecomposition<T>,
    j: usize,
    k: usize,
) -> Result<T, SpectralError> {
    spec.check_site(j)?;
    spec.check_site(k)?;
    Ok((0..spec.n).map(|e| spec.component(e, j).abs() * spec.component(e, k).abs()).sum())
}

/// `k ↦ Q(j,k)` for all sites.
pub fn correlator_row<T: Real>(spec: &SpectralDecomposition<T>, j: usize) -> Result<Vec<T>, SpectralError> {
    spec.check_site(j)?;
    let n = spec.n;
    let mut row = vec![T::zero(); n];
    for e in 0..n {
        let w = spec.component(e, j).abs();
        for (q, &psi) in row.iter_mut().zip(spec.eigenvector(e)) {
            *q += w * psi.abs();
        }
    }
    Ok(row)
}
