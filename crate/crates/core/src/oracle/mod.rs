//! Brute-force many-body simulator on the full `2^n` Hilbert space (`n ≤ 10`).
//!
//! Used only to validate the free-fermion reduction. The tensor basis puts
//! site 1 in the most significant position, i.e. operators equal the
//! Kronecker product `O_1 ⊗ O_2 ⊗ … ⊗ O_n`. Local basis state `0` is spin up
//! `(1, 0)ᵀ`, which is the occupied fermion mode since `a*a = diag(1, 0)`.
//!
//! Site operators are assembled from their action on basis states rather
//! than by multiplying dense Kronecker factors; the Kronecker route is kept in
//! the tests as a cross-check.

pub mod suite;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::disorder::{build_one_body, DisorderConfig, DisorderError, OneBodyOperator};
use crate::quasifree::ProductState;

/// Largest chain the oracle accepts.
pub const MAX_SITES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle is limited to n <= {MAX_SITES} sites, got n = {0}")]
    TooLarge(usize),
    #[error("site {site} out of range 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("operator dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("generator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Disorder(#[from] DisorderError),
}

/// Single-site operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteOp {
    Sx,
    Sy,
    Sz,
    /// `a = ½(σ^x − iσ^y) = ((0,0),(1,0))`.
    Lower,
    /// `a*`.
    Raise,
    /// `c_j = σ^z_1 ⋯ σ^z_{j−1} a_j`.
    Annihilate,
    /// `c_j*`.
    Create,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prim {
    Sx,
    Sy,
    Sz,
    Lower,
    Raise,
}

impl Prim {
    /// Action on local basis state `bit` (0 = up): new bit and amplitude, or
    /// `None` if annihilated.
    #[inline]
    fn act(self, bit: usize) -> Option<(usize, Complex64)> {
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match (self, bit) {
            (Prim::Sx, b) => Some((b ^ 1, one)),
            (Prim::Sy, 0) => Some((1, i)),
            (Prim::Sy, _) => Some((0, -i)),
            (Prim::Sz, 0) => Some((0, one)),
            (Prim::Sz, _) => Some((1, -one)),
            (Prim::Lower, 0) => Some((1, one)),
            (Prim::Lower, _) => None,
            (Prim::Raise, 1) => Some((0, one)),
            (Prim::Raise, _) => None,
        }
    }

    fn adjoint(self) -> Self {
        match self {
            Prim::Lower => Prim::Raise,
            Prim::Raise => Prim::Lower,
            p => p,
        }
    }
}

/// Product of single-site primitives, applied right to left.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Monomial {
    factors: Vec<(Prim, usize)>,
    coefficient: Complex64,
}

impl Monomial {
    fn identity() -> Self {
        Self { factors: Vec::new(), coefficient: Complex64::new(1.0, 0.0) }
    }

    pub fn site(kind: SiteOp, j: usize) -> Self {
        let mut m = Self::identity();
        match kind {
            SiteOp::Sx => m.factors.push((Prim::Sx, j)),
            SiteOp::Sy => m.factors.push((Prim::Sy, j)),
            SiteOp::Sz => m.factors.push((Prim::Sz, j)),
            SiteOp::Lower => m.factors.push((Prim::Lower, j)),
            SiteOp::Raise => m.factors.push((Prim::Raise, j)),
            SiteOp::Annihilate | SiteOp::Create => {
                m.factors.extend((1..j).map(|i| (Prim::Sz, i)));
                let local = if kind == SiteOp::Annihilate { Prim::Lower } else { Prim::Raise };
                // c* = a* σ^z…σ^z: the local factor acts last (leftmost).
                if kind == SiteOp::Annihilate {
                    m.factors.push((local, j));
                } else {
                    m.factors.insert(0, (local, j));
                }
            }
        }
        m
    }

    /// `self · other`.
    pub fn times(&self, other: &Monomial) -> Monomial {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Monomial { factors, coefficient: self.coefficient * other.coefficient }
    }

    pub fn adjoint(&self) -> Monomial {
        Monomial {
            factors: self.factors.iter().rev().map(|&(p, s)| (p.adjoint(), s)).collect(),
            coefficient: self.coefficient.conj(),
        }
    }

    pub fn scaled(mut self, c: Complex64) -> Monomial {
        self.coefficient *= c;
        self
    }

    /// Adds this monomial's matrix into `target` (dimension `2^n`).
    fn accumulate(&self, n: usize, target: &mut DMatrix<Complex64>) {
        let dim = 1usize << n;
        'basis: for input in 0..dim {
            let mut state = input;
            let mut amp = self.coefficient;
            for &(prim, site) in self.factors.iter().rev() {
                let shift = n - site;
                let bit = (state >> shift) & 1;
                match prim.act(bit) {
                    Some((new_bit, a)) => {
                        state = (state & !(1 << shift)) | (new_bit << shift);
                        amp *= a;
                    }
                    None => continue 'basis,
                }
            }
            target[(state, input)] += amp;
        }
    }
}

/// Dense operator on `(ℂ²)^{⊗n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n_sites: usize,
    matrix: DMatrix<Complex64>,
}

fn check_size(n: usize) -> Result<(), OracleError> {
    if n == 0 || n > MAX_SITES {
        Err(OracleError::TooLarge(n))
    } else {
        Ok(())
    }
}

fn check_site(site: usize, n: usize) -> Result<(), OracleError> {
    if site == 0 || site > n {
        Err(OracleError::SiteOutOfRange { site, n })
    } else {
        Ok(())
    }
}

impl DenseOperator {
    pub fn zeros(n: usize) -> Result<Self, OracleError> {
        check_size(n)?;
        let dim = 1 << n;
        Ok(Self { n_sites: n, matrix: DMatrix::zeros(dim, dim) })
    }

    pub fn identity(n: usize) -> Result<Self, OracleError> {
        check_size(n)?;
        let dim = 1 << n;
        Ok(Self { n_sites: n, matrix: DMatrix::identity(dim, dim) })
    }

    /// Sum of monomials as a dense matrix.
    pub fn from_monomials(n: usize, terms: &[Monomial]) -> Result<Self, OracleError> {
        let mut op = Self::zeros(n)?;
        for term in terms {
            for &(_, site) in &term.factors {
                check_site(site, n)?;
            }
            term.accumulate(n, &mut op.matrix);
        }
        Ok(op)
    }

    pub fn from_matrix(n: usize, matrix: DMatrix<Complex64>) -> Result<Self, OracleError> {
        check_size(n)?;
        let dim = 1 << n;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(OracleError::DimensionMismatch(dim, matrix.nrows()));
        }
        Ok(Self { n_sites: n, matrix })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    fn same_shape(&self, other: &Self) -> Result<(), OracleError> {
        if self.dim() != other.dim() {
            Err(OracleError::DimensionMismatch(self.dim(), other.dim()))
        } else {
            Ok(())
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self, OracleError> {
        self.same_shape(other)?;
        Ok(Self { n_sites: self.n_sites, matrix: &self.matrix * &other.matrix })
    }

    pub fn add(&self, other: &Self) -> Result<Self, OracleError> {
        self.same_shape(other)?;
        Ok(Self { n_sites: self.n_sites, matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, OracleError> {
        self.same_shape(other)?;
        Ok(Self { n_sites: self.n_sites, matrix: &self.matrix - &other.matrix })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { n_sites: self.n_sites, matrix: &self.matrix * c }
    }

    pub fn adjoint(&self) -> Self {
        Self { n_sites: self.n_sites, matrix: self.matrix.adjoint() }
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &Self) -> Result<Self, OracleError> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// `{A, B} = AB + BA`.
    pub fn anticommutator(&self, other: &Self) -> Result<Self, OracleError> {
        self.mul(other)?.add(&other.mul(self)?)
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.matrix.singular_values().iter().fold(0.0, |m: f64, &s| m.max(s))
    }

    /// `max |A_ij − B_ij|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, OracleError> {
        self.same_shape(other)?;
        Ok(self.matrix.iter().zip(other.matrix.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.matrix.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// `‖A − A†‖_max`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint()).expect("same shape")
    }

    /// Hermitian to `10⁻¹² ‖A‖` (entrywise maximum as the norm proxy).
    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= 1e-12 * self.max_abs_entry().max(1.0)
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }
}

/// Single-site operator padded with identities; `c`/`c*` carry the full
/// Jordan-Wigner string.
pub fn build_site_operator(kind: SiteOp, j: usize, n: usize) -> Result<DenseOperator, OracleError> {
    check_size(n)?;
    check_site(j, n)?;
    DenseOperator::from_monomials(n, &[Monomial::site(kind, j)])
}

/// `H^{XY}_n = −Σ_j (σ^x_j σ^x_{j+1} + σ^y_j σ^y_{j+1}) + Σ_j Ṽ_j σ^z_j`.
pub fn build_xy_hamiltonian(config: &DisorderConfig, potential: &[f64]) -> Result<DenseOperator, OracleError> {
    check_size(config.n)?;
    let h: OneBodyOperator<f64> = build_one_body(config, potential)?;
    xy_hamiltonian_from_field(h.diag())
}

/// Spin Hamiltonian for an explicit field `Ṽ`.
pub fn xy_hamiltonian_from_field(field: &[f64]) -> Result<DenseOperator, OracleError> {
    let n = field.len();
    check_size(n)?;
    let minus_one = Complex64::new(-1.0, 0.0);
    let mut terms = Vec::with_capacity(3 * n);
    for j in 1..n {
        terms.push(Monomial::site(SiteOp::Sx, j).times(&Monomial::site(SiteOp::Sx, j + 1)).scaled(minus_one));
        terms.push(Monomial::site(SiteOp::Sy, j).times(&Monomial::site(SiteOp::Sy, j + 1)).scaled(minus_one));
    }
    for (i, &v) in field.iter().enumerate() {
        terms.push(Monomial::site(SiteOp::Sz, i + 1).scaled(Complex64::new(v, 0.0)));
    }
    DenseOperator::from_monomials(n, &terms)
}

/// `2 Σ_{jk} (H_n)_{jk} c_j* c_k − (Σ_j Ṽ_j) 𝟙`.
pub fn fermionic_quadratic_form(h: &OneBodyOperator<f64>) -> Result<DenseOperator, OracleError> {
    let n = h.n();
    check_size(n)?;
    let mut terms = Vec::with_capacity(3 * n);
    let bilinear = |j: usize, k: usize, w: f64| {
        Monomial::site(SiteOp::Create, j)
            .times(&Monomial::site(SiteOp::Annihilate, k))
            .scaled(Complex64::new(2.0 * w, 0.0))
    };
    for j in 1..=n {
        terms.push(bilinear(j, j, h.diag()[j - 1]));
        if j < n {
            terms.push(bilinear(j, j + 1, h.offdiag()[j - 1]));
            terms.push(bilinear(j + 1, j, h.offdiag()[j - 1]));
        }
    }
    let shift: f64 = h.diag().iter().sum();
    let form = DenseOperator::from_monomials(n, &terms)?;
    form.sub(&DenseOperator::identity(n)?.scale(Complex64::new(shift, 0.0)))
}

/// Cached eigendecomposition of a Hermitian generator for repeated
/// conjugations `τ_t(A) = e^{itH} A e^{−itH}`.
#[derive(Debug, Clone)]
pub struct DenseEvolution {
    n_sites: usize,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
}

impl DenseEvolution {
    pub fn new(h: &DenseOperator) -> Result<Self, OracleError> {
        if !h.is_hermitian() {
            return Err(OracleError::NotHermitian(h.hermiticity_defect()));
        }
        let eig = h.matrix.clone().symmetric_eigen();
        Ok(Self {
            n_sites: h.n_sites,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `e^{−itH}`.
    pub fn unitary(&self, t: f64) -> DMatrix<Complex64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (col, &e) in self.eigenvalues.iter().enumerate() {
            let phase = Complex64::new(0.0, -t * e).exp();
            for x in scaled.column_mut(col).iter_mut() {
                *x *= phase;
            }
        }
        scaled * v.adjoint()
    }

    /// `τ_t(A) = e^{itH} A e^{−itH}`.
    pub fn heisenberg(&self, a: &DenseOperator, t: f64) -> Result<DenseOperator, OracleError> {
        if a.n_sites != self.n_sites {
            return Err(OracleError::DimensionMismatch(1 << self.n_sites, a.dim()));
        }
        if t == 0.0 {
            return Ok(a.clone());
        }
        let u = self.unitary(t);
        Ok(DenseOperator { n_sites: self.n_sites, matrix: u.adjoint() * &a.matrix * u })
    }
}

/// `τ_t(A)` for a single call; see [`DenseEvolution`] for repeated use.
pub fn heisenberg_evolve(h: &DenseOperator, a: &DenseOperator, t: f64) -> Result<DenseOperator, OracleError> {
    h.same_shape(a)?;
    DenseEvolution::new(h)?.heisenberg(a, t)
}

/// `‖[τ_t(A), B]‖`.
pub fn exact_commutator_norm(
    h: &DenseOperator,
    a: &DenseOperator,
    b: &DenseOperator,
    t: f64,
) -> Result<f64, OracleError> {
    h.same_shape(a)?;
    h.same_shape(b)?;
    let evolution = DenseEvolution::new(h)?;
    commutator_norm_with(&evolution, a, b, t)
}

pub fn commutator_norm_with(
    evolution: &DenseEvolution,
    a: &DenseOperator,
    b: &DenseOperator,
    t: f64,
) -> Result<f64, OracleError> {
    Ok(evolution.heisenberg(a, t)?.commutator(b)?.operator_norm())
}

/// Diagonal of `ρ = ⊗_j diag(η_j, 1 − η_j)` in the tensor basis.
pub fn product_state_diagonal(state: &ProductState<f64>) -> Result<Vec<f64>, OracleError> {
    let n = state.len();
    check_size(n)?;
    Ok((0..1usize << n)
        .map(|b| {
            (1..=n)
                .map(|site| {
                    let eta = state.eta()[site - 1];
                    if (b >> (n - site)) & 1 == 0 {
                        eta
                    } else {
                        1.0 - eta
                    }
                })
                .product()
        })
        .collect())
}

/// `tr(N_S e^{−itH} ρ e^{itH})` with `N_S = Σ_{j∈S} a_j* a_j`.
pub fn exact_number_expectation(
    h: &DenseOperator,
    state: &ProductState<f64>,
    sites: &[usize],
    t: f64,
) -> Result<f64, OracleError> {
    let evolution = DenseEvolution::new(h)?;
    number_expectation_with(&evolution, state, sites, t)
}

pub fn number_expectation_with(
    evolution: &DenseEvolution,
    state: &ProductState<f64>,
    sites: &[usize],
    t: f64,
) -> Result<f64, OracleError> {
    let n = evolution.n_sites;
    if state.len() != n {
        return Err(OracleError::InvalidArgument(format!("state has {} sites, operator has {n}", state.len())));
    }
    for &s in sites {
        check_site(s, n)?;
    }
    let rho = product_state_diagonal(state)?;
    let count = |b: usize| sites.iter().filter(|&&s| (b >> (n - s)) & 1 == 0).count() as f64;
    let u = evolution.unitary(t);
    let dim = 1usize << n;
    let mut total = 0.0;
    for row in 0..dim {
        let weight = count(row);
        if weight == 0.0 {
            continue;
        }
        let populated: f64 = (0..dim).map(|col| u[(row, col)].norm_sqr() * rho[col]).sum();
        total += weight * populated;
    }
    Ok(total)
}
