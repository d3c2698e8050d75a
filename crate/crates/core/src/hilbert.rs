//! Dense complex linear algebra on finite-dimensional Hilbert spaces.
//!
//! Everything downstream is built from three carriers: [`Operator`] (a square
//! complex matrix), [`StateVector`] and [`DensityMatrix`]. Values are
//! immutable after construction and all operations are pure, so they can be
//! shared freely across threads.
//!
//! Units: ħ = 1 and times are dimensionless. Time evolution is
//! `U(s) = exp(-i H s)`; [`expm`] itself returns `exp(i a s)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default tolerance for structural predicates.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default cap on the total dimension of a history (tensor) space.
pub const DEFAULT_SIZE_CAP: usize = 4096;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Dimension of a single-time Hilbert space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertDim(usize);

impl HilbertDim {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("Hilbert space dimension must be >= 1".into()));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// A bounded operator, stored as a dense square complex matrix.
///
/// Serializes as a list of rows, each entry a `[re, im]` pair.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<[f64; 2]>>", into = "Vec<Vec<[f64; 2]>>")]
pub struct Operator {
    m: DMatrix<C64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator({}x{}) {}", self.dim(), self.dim(), self.m)
    }
}

impl Operator {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::Invalid("empty operator".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("operator"));
        }
        Ok(Self { m })
    }

    /// Internal constructor for matrices known to be square and finite.
    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self { m }
    }

    /// Build from row-major complex entries.
    pub fn from_rows(n: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    /// Build from row-major real entries.
    pub fn from_real_rows(n: usize, entries: &[f64]) -> Result<Self> {
        let v: Vec<C64> = entries.iter().map(|&x| c(x, 0.0)).collect();
        Self::from_rows(n, &v)
    }

    pub fn identity(n: usize) -> Self {
        Self { m: DMatrix::identity(n, n) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { m: DMatrix::zeros(n, n) }
    }

    pub fn diagonal(values: &[C64]) -> Self {
        Self { m: DMatrix::from_diagonal(&DVector::from_column_slice(values)) }
    }

    pub fn real_diagonal(values: &[f64]) -> Self {
        let v: Vec<C64> = values.iter().map(|&x| c(x, 0.0)).collect();
        Self::diagonal(&v)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    /// Row-major copy of the entries.
    pub fn to_rows(&self) -> Vec<C64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { m: &self.m * s }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// `U A U†`.
    pub fn conjugate_by(&self, u: &Operator) -> Operator {
        &(u * self) * &u.adjoint()
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        StateVector { v: &self.m * &v.v }
    }

    /// `⟨u|A|v⟩`.
    pub fn sandwich(&self, u: &StateVector, v: &StateVector) -> C64 {
        u.v.dotc(&(&self.m * &v.v))
    }

    pub fn hermitian_deviation(&self) -> f64 {
        (&self.m - self.m.adjoint()).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn unitary_deviation(&self) -> f64 {
        let n = self.dim();
        (&self.m * self.m.adjoint() - DMatrix::<C64>::identity(n, n))
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn projector_deviation(&self) -> f64 {
        let sq = &self.m * &self.m;
        let idem = (&sq - &self.m).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        idem.max(self.hermitian_deviation())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitary_deviation() <= tol
    }

    /// Orthogonal projector: `P² = P` and `P = P†`.
    pub fn is_projector(&self, tol: f64) -> bool {
        self.projector_deviation() <= tol
    }

    /// `1 - A`.
    pub fn complement(&self) -> Operator {
        &Operator::identity(self.dim()) - self
    }

    /// Spectral decomposition of a Hermitian operator. Eigenvalues ascending.
    pub fn eigh(&self, tol: f64) -> Result<(Vec<f64>, DMatrix<C64>)> {
        let dev = self.hermitian_deviation();
        if dev > tol {
            return Err(Error::NotHermitian(dev));
        }
        // symmetrize so the decomposition only sees the Hermitian part
        let h = (&self.m + self.m.adjoint()) * c(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
        Ok((values, vectors))
    }

    /// `f(A)` for Hermitian `A` by spectral calculus.
    pub fn spectral_map<F>(&self, tol: f64, f: F) -> Result<Operator>
    where
        F: Fn(f64) -> C64,
    {
        let (values, vectors) = self.eigh(tol)?;
        let fd = DMatrix::from_diagonal(&DVector::from_iterator(
            values.len(),
            values.iter().map(|&l| f(l)),
        ));
        Ok(Operator { m: &vectors * fd * vectors.adjoint() })
    }

    pub fn eigenvalues(&self, tol: f64) -> Result<Vec<f64>> {
        Ok(self.eigh(tol)?.0)
    }
}

impl TryFrom<Vec<Vec<[f64; 2]>>> for Operator {
    type Error = Error;

    fn try_from(rows: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::NotSquare { rows: n, cols: row.len() });
            }
            entries.extend(row.iter().map(|&[re, im]| c(re, im)));
        }
        Operator::from_rows(n, &entries)
    }
}

impl From<Operator> for Vec<Vec<[f64; 2]>> {
    fn from(op: Operator) -> Self {
        let n = op.dim();
        (0..n).map(|i| (0..n).map(|j| [op.m[(i, j)].re, op.m[(i, j)].im]).collect()).collect()
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m * &rhs.m }
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator { m: self.m * rhs.m }
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m + &rhs.m }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator { m: &self.m - &rhs.m }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { m: -&self.m }
    }
}

/// A (not necessarily normalized) vector in a finite-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    v: DVector<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Invalid("empty state vector".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(Self { v: DVector::from_vec(amplitudes) })
    }


    /// Computational basis vector `|k⟩`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[k] = ONE;
        Self { v }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.v
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n <= f64::MIN_POSITIVE {
            return Err(Error::Invalid("cannot normalize a zero vector".into()));
        }
        Ok(Self { v: &self.v / c(n, 0.0) })
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.v.dotc(&other.v)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { v: &self.v * s }
    }

    pub fn add(&self, other: &StateVector) -> Self {
        Self { v: &self.v + &other.v }
    }

    pub fn sub(&self, other: &StateVector) -> Self {
        Self { v: &self.v - &other.v }
    }

    /// `|ψ⟩⟨ψ|` (rank one; a projector when normalized).
    pub fn projector(&self) -> Operator {
        Operator { m: &self.v * self.v.adjoint() }
    }

    /// `|self⟩⟨other|`.
    pub fn outer(&self, other: &StateVector) -> Operator {
        Operator { m: &self.v * other.v.adjoint() }
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        StateVector { v: self.v.kronecker(&other.v) }
    }
}

/// A density matrix: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Operator", into = "Operator")]
pub struct DensityMatrix {
    op: Operator,
}

impl TryFrom<Operator> for DensityMatrix {
    type Error = Error;

    fn try_from(op: Operator) -> Result<Self> {
        DensityMatrix::new(op, DEFAULT_TOL)
    }
}

impl From<DensityMatrix> for Operator {
    fn from(rho: DensityMatrix) -> Self {
        rho.op
    }
}

impl DensityMatrix {
    pub fn new(op: Operator, tol: f64) -> Result<Self> {
        let dev = op.hermitian_deviation();
        if dev > tol {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {dev:.3e})")));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let min = op.eigenvalues(tol)?.first().copied().unwrap_or(0.0);
        if min < -tol {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { op })
    }

    pub fn pure(state: &StateVector) -> Result<Self> {
        let psi = state.normalized()?;
        Ok(Self { op: psi.projector() })
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self { op: Operator::identity(n).scale(c(1.0 / n as f64, 0.0)) }
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Positive square root `ρ^{1/2}`.
    pub fn sqrt(&self) -> Operator {
        self.op
            .spectral_map(f64::INFINITY, |l| c(l.max(0.0).sqrt(), 0.0))
            .expect("density matrix is Hermitian")
    }

    /// Purity `Tr ρ²`; 1 for pure states.
    pub fn purity(&self) -> f64 {
        (&self.op * &self.op).trace().re
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        (self.purity() - 1.0).abs() <= tol
    }
}

/// Kronecker product `a ⊗ b`; the first factor is the most significant index.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator { m: a.m.kronecker(&b.m) }
}

/// `a₀ ⊗ a₁ ⊗ … ⊗ a_{k-1}`.
pub fn tensor_all(factors: &[Operator]) -> Result<Operator> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::Invalid("empty tensor product".into()))?;
    Ok(rest.iter().fold(first.clone(), |acc, f| tensor(&acc, f)))
}

/// Dimension of `n` copies of a `dim`-dimensional space, checked against `cap`.
pub fn tensor_dim(dim: usize, slots: usize, cap: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..slots {
        total = total
            .checked_mul(dim)
            .filter(|&t| t <= cap)
            .ok_or(Error::SizeCap { dim: dim.saturating_pow(slots as u32), cap })?;
    }
    Ok(total)
}

/// `1 ⊗ … ⊗ a ⊗ … ⊗ 1` with `a` on `slot`.
pub fn embed_at_slot(a: &Operator, slot: usize, slots: usize) -> Result<Operator> {
    if slot >= slots {
        return Err(Error::Invalid(format!("slot {slot} out of range for {slots} slots")));
    }
    let id = Operator::identity(a.dim());
    let factors: Vec<Operator> =
        (0..slots).map(|k| if k == slot { a.clone() } else { id.clone() }).collect();
    tensor_all(&factors)
}

/// `exp(i a s)`.
///
/// Hermitian inputs go through the spectral decomposition, which keeps the
/// result unitary to machine precision; anything else falls back to Padé
/// scaling-and-squaring.
pub fn expm(a: &Operator, s: f64) -> Result<Operator> {
    if !s.is_finite() || a.m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("expm argument"));
    }
    if a.hermitian_deviation() <= DEFAULT_TOL * (1.0 + a.norm()) {
        return a.spectral_map(f64::INFINITY, |l| C64::from_polar(1.0, l * s));
    }
    Ok(exp_general(&a.scale(c(0.0, s))))
}

/// Matrix exponential `exp(x)` of an arbitrary square matrix.
pub fn exp_general(x: &Operator) -> Operator {
    Operator { m: x.m.exp() }
}

/// `e^{-iHt}`.
pub fn evolution(h: &Operator, t: f64) -> Result<Operator> {
    expm(h, -t)
}

/// Time-averaged operator `A_f = Σ_t f(t) A_t` on the `f.len()`-fold tensor space,
/// where `A_t` acts as `a` on slot `t` and as the identity elsewhere.
pub fn time_averaged_operator(a: &Operator, f: &[f64], cap: usize) -> Result<Operator> {
    if f.is_empty() {
        return Err(Error::Invalid("weights over an empty time grid".into()));
    }
    let total = tensor_dim(a.dim(), f.len(), cap)?;
    let mut acc = Operator::zeros(total);
    for (slot, &w) in f.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let term = embed_at_slot(a, slot, f.len())?;
        acc = &acc + &term.scale(c(w, 0.0));
    }
    Ok(acc)
}

/// Operator on `slots` copies of a `dim`-dimensional space that sends the
/// content of slot `k` to slot `dest[k]`:
/// `P |v₀⟩…|v_{n-1}⟩ = |w₀⟩…|w_{n-1}⟩` with `w_{dest[k]} = v_k`.
pub fn slot_permutation(dim: usize, dest: &[usize], cap: usize) -> Result<Operator> {
    let slots = dest.len();
    let total = tensor_dim(dim, slots, cap)?;
    let mut seen = vec![false; slots];
    for &d in dest {
        if d >= slots || std::mem::replace(&mut seen[d], true) {
            return Err(Error::Invalid("slot map is not a permutation".into()));
        }
    }
    let mut m = DMatrix::zeros(total, total);
    let mut digits = vec![0usize; slots];
    let mut out = vec![0usize; slots];
    for col in 0..total {
        decode_index(col, dim, &mut digits);
        for k in 0..slots {
            out[dest[k]] = digits[k];
        }
        m[(encode_index(&out, dim), col)] = ONE;
    }
    Ok(Operator { m })
}

/// Partial trace over every slot except the first; `op` acts on `slots`
/// copies of a `dim`-dimensional space.
pub fn partial_trace_keep_first(op: &Operator, dim: usize, slots: usize) -> Result<Operator> {
    let total = tensor_dim(dim, slots, usize::MAX)?;
    if op.dim() != total {
        return Err(Error::DimensionMismatch { expected: total, got: op.dim() });
    }
    let rest = total / dim;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = ZERO;
            for r in 0..rest {
                acc += op.m[(i * rest + r, j * rest + r)];
            }
            m[(i, j)] = acc;
        }
    }
    Ok(Operator { m })
}

fn decode_index(mut idx: usize, dim: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = idx % dim;
        idx /= dim;
    }
}

fn encode_index(digits: &[usize], dim: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * dim + d)
}

pub fn sigma_x() -> Operator {
    Operator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn sigma_y() -> Operator {
    Operator::from_rows(2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]).unwrap()
}

pub fn sigma_z() -> Operator {
    Operator::real_diagonal(&[1.0, -1.0])
}

/// Qubit states `|0⟩, |1⟩, |+⟩, |−⟩`.
pub fn ket0() -> StateVector {
    StateVector::basis(2, 0)
}

pub fn ket1() -> StateVector {
    StateVector::basis(2, 1)
}

pub fn ket_plus() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(vec![c(s, 0.0), c(s, 0.0)]).unwrap()
}

pub fn ket_minus() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(vec![c(s, 0.0), c(-s, 0.0)]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn diff(a: &Operator, b: &Operator) -> f64 {
        (a - b).norm()
    }

    /// Truncated power series `Σ_k (i a s)^k / k!`; independent of `expm`.
    fn series_exp(a: &Operator, s: f64, terms: usize) -> Operator {
        let x = a.scale(c(0.0, s));
        let mut term = Operator::identity(a.dim());
        let mut acc = term.clone();
        for k in 1..terms {
            term = (&term * &x).scale(c(1.0 / k as f64, 0.0));
            acc = &acc + &term;
        }
        acc
    }

    #[test]
    fn tensor_identities() {
        let i2 = Operator::identity(2);
        assert_eq!(tensor(&i2, &i2), Operator::identity(4));

        // σz⊗σz |01⟩ = −|01⟩
        let zz = tensor(&sigma_z(), &sigma_z());
        let v = ket0().tensor(&ket1());
        let out = zz.apply(&v);
        assert_abs_diff_eq!((out.inner(&v) + ONE).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tensor_trace_factorizes() {
        // fixed 3x3 matrices; direct trace of the 9x9 Kronecker product
        let a = Operator::from_rows(
            3,
            &[c(1.0, 0.5), c(0.2, 0.0), c(0.0, -1.0), c(0.3, 0.1), c(-2.0, 0.0), c(0.4, 0.4),
              c(0.0, 0.0), c(1.5, -0.5), c(0.7, 0.0)],
        )
        .unwrap();
        let b = Operator::from_rows(
            3,
            &[c(0.5, 0.0), c(1.0, 1.0), c(0.0, 0.0), c(0.0, 2.0), c(1.0, -1.0), c(0.1, 0.0),
              c(3.0, 0.0), c(0.0, 0.0), c(-0.25, 0.3)],
        )
        .unwrap();
        let ab = tensor(&a, &b);
        let direct: C64 = (0..9).map(|k| ab.get(k, k)).sum();
        let product = a.trace() * b.trace();
        assert_abs_diff_eq!((direct - product).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tensor_associative_exactly() {
        let a = sigma_x();
        let b = sigma_y();
        let z = sigma_z();
        assert_eq!(tensor(&tensor(&a, &b), &z), tensor(&a, &tensor(&b, &z)));
    }

    #[test]
    fn expm_basic_cases() {
        let zero = Operator::zeros(3);
        assert!(diff(&expm(&zero, 1.7).unwrap(), &Operator::identity(3)) < 1e-14);

        let e = expm(&sigma_z(), PI / 2.0).unwrap();
        let expected =
            Operator::diagonal(&[C64::from_polar(1.0, PI / 2.0), C64::from_polar(1.0, -PI / 2.0)]);
        assert!(diff(&e, &expected) < 1e-14);
    }

    #[test]
    fn expm_sigma_x_matches_series_and_closed_form() {
        for &theta in &[0.1, 0.7, 1.3, 2.9] {
            let e = expm(&sigma_x(), theta).unwrap();
            let series = series_exp(&sigma_x(), theta, 40);
            assert!(diff(&e, &series) < 1e-13, "theta = {theta}");
            let closed = &Operator::identity(2).scale(c(theta.cos(), 0.0))
                + &sigma_x().scale(c(0.0, theta.sin()));
            assert!(diff(&e, &closed) < 1e-13);
        }
    }

    #[test]
    fn expm_non_hermitian_uses_general_path() {
        let a = Operator::from_rows(2, &[c(0.1, 0.2), c(0.5, 0.0), c(0.0, 0.0), c(-0.3, 0.1)])
            .unwrap();
        let e = expm(&a, 0.8).unwrap();
        let series = series_exp(&a, 0.8, 40);
        assert!(diff(&e, &series) < 1e-12);
    }

    #[test]
    fn expm_rejects_non_finite() {
        let a = Operator::identity(2);
        assert!(matches!(expm(&a, f64::NAN), Err(Error::NonFinite(_))));
    }

    #[test]
    fn time_averaged_cases() {
        let a = sigma_z();
        let zero = time_averaged_operator(&a, &[0.0, 0.0], DEFAULT_SIZE_CAP).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let single = time_averaged_operator(&a, &[1.0], DEFAULT_SIZE_CAP).unwrap();
        assert_eq!(single, a);

        // σz⊗1 + 1⊗σz = diag(2, 0, 0, −2)
        let two = time_averaged_operator(&a, &[1.0, 1.0], DEFAULT_SIZE_CAP).unwrap();
        let mut spec = two.eigenvalues(DEFAULT_TOL).unwrap();
        spec.sort_by(f64::total_cmp);
        for (got, want) in spec.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn time_averaged_exponential_is_product() {
        let a = Operator::from_rows(2, &[c(0.3, 0.0), c(0.2, -0.4), c(0.2, 0.4), c(-0.8, 0.0)])
            .unwrap();
        let f = [0.5, -1.2, 2.0];
        let s = 0.9;
        let af = time_averaged_operator(&a, &f, DEFAULT_SIZE_CAP).unwrap();
        let lhs = expm(&af, s).unwrap();
        let factors: Vec<Operator> = f.iter().map(|&w| expm(&a, w * s).unwrap()).collect();
        let rhs = tensor_all(&factors).unwrap();
        assert!(diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn time_averaged_size_cap() {
        let a = Operator::identity(4);
        let err = time_averaged_operator(&a, &[1.0; 7], DEFAULT_SIZE_CAP).unwrap_err();
        assert!(matches!(err, Error::SizeCap { .. }));
    }

    #[test]
    fn projector_complement_and_spectrum() {
        let p = ket_plus().projector();
        assert!(p.is_projector(DEFAULT_TOL));
        assert!(p.complement().is_projector(DEFAULT_TOL));
        for l in p.eigenvalues(DEFAULT_TOL).unwrap() {
            assert!(l.abs() < 1e-12 || (l - 1.0).abs() < 1e-12);
        }
        assert!(!sigma_x().is_projector(DEFAULT_TOL));
    }

    #[test]
    fn slot_permutation_and_partial_trace() {
        // cyclic shift on 3 qubit slots is unitary and has order 3
        let s = slot_permutation(2, &[1, 2, 0], DEFAULT_SIZE_CAP).unwrap();
        assert!(s.is_unitary(1e-14));
        let s3 = &(&s * &s) * &s;
        assert_eq!(s3, Operator::identity(8));

        let a = sigma_x();
        let b = ket0().projector();
        let ab = tensor(&a, &b);
        let reduced = partial_trace_keep_first(&ab, 2, 2).unwrap();
        assert!(diff(&reduced, &a) < 1e-15);
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(sigma_z(), DEFAULT_TOL).is_err());
        let rho = DensityMatrix::new(Operator::real_diagonal(&[0.25, 0.75]), DEFAULT_TOL).unwrap();
        let r = rho.sqrt();
        assert!(diff(&(&r * &r), rho.operator()) < 1e-14);
        assert!(!rho.is_pure(1e-9));
        assert!(DensityMatrix::pure(&ket_plus()).unwrap().is_pure(1e-12));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn hermitian(n: usize) -> impl Strategy<Value = Operator> {
        proptest::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |v| {
            let m = DMatrix::from_fn(n, n, |i, j| c(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]));
            let h = (&m + m.adjoint()) * c(0.5, 0.0);
            Operator::new(h).unwrap()
        })
    }

    proptest! {
        #[test]
        fn expm_group_law(a in hermitian(3), s in -2.0f64..2.0, t in -2.0f64..2.0) {
            let lhs = &expm(&a, s).unwrap() * &expm(&a, t).unwrap();
            let rhs = expm(&a, s + t).unwrap();
            prop_assert!((&lhs - &rhs).norm() < 1e-12);
            prop_assert!(rhs.is_unitary(1e-12));
        }

        #[test]
        fn slot_local_action_commutes_with_identity(a in hermitian(2), b in hermitian(2)) {
            let id = Operator::identity(2);
            let lhs = &tensor(&a, &id) * &tensor(&id, &b);
            let rhs = &tensor(&id, &b) * &tensor(&a, &id);
            prop_assert!((&lhs - &rhs).norm() < 1e-13);
            prop_assert!((&lhs - &tensor(&a, &b)).norm() < 1e-13);
        }
    }
}
