//! Discrete-time histories: class operators, probabilities, the decoherence
//! functional, consistency checks, the boundary decomposition and time reversal.
//!
//! Conventions: `U(t) = exp(-iHt)`, Heisenberg operators are
//! `α(t) = U†(t) α U(t)`, and the class operator of `α = (α₁ … αₙ)` is
//! `C_α = α₁(t₁) α₂(t₂) ⋯ αₙ(tₙ)` with the earliest time leftmost. Then
//! `d(α, β) = Tr(C_α† ρ₀ C_β ρ_f)` with `ρ_f = 1` unless a final weight is set.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    slot_permutation, tensor_all, tensor_dim, DensityMatrix, HilbertDim, Operator, C64,
    DEFAULT_SIZE_CAP, DEFAULT_TOL, ZERO,
};

/// Default threshold on off-diagonal decoherence for consistency.
pub const DEFAULT_CONSISTENCY_EPS: f64 = 1e-6;

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Strictly increasing, non-empty list of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("time grid is empty".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("time grid"));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { times })
    }

    /// `n` equally spaced times `t0, t0 + dt, …`.
    pub fn uniform(t0: f64, dt: f64, n: usize) -> Result<Self> {
        Self::new((0..n).map(|k| t0 + dt * k as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sorted union of two grids.
    pub fn union(&self, other: &TimeGrid) -> TimeGrid {
        let mut all: Vec<f64> = self.times.iter().chain(other.times.iter()).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup_by(|a, b| same_time(*a, *b));
        TimeGrid { times: all }
    }

    /// `{−tₙ, …, −t₁}`.
    pub fn reflected(&self) -> TimeGrid {
        TimeGrid { times: self.times.iter().rev().map(|t| -t).collect() }
    }

    pub fn is_symmetric(&self) -> bool {
        self.times.iter().zip(self.times.iter().rev()).all(|(a, b)| same_time(*a, -*b))
    }

    pub fn position(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| same_time(s, t))
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.times
    }
}

/// Homogeneous history `α_{t₁} ⊗ … ⊗ α_{tₙ}`: one projector per grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistoryRaw", into = "HistoryRaw")]
pub struct HistoryProposition {
    grid: TimeGrid,
    projectors: Vec<Operator>,
}

#[derive(Serialize, Deserialize)]
struct HistoryRaw {
    times: TimeGrid,
    projectors: Vec<Operator>,
}

impl TryFrom<HistoryRaw> for HistoryProposition {
    type Error = Error;
    fn try_from(r: HistoryRaw) -> Result<Self> {
        HistoryProposition::new(r.times, r.projectors, DEFAULT_TOL)
    }
}

impl From<HistoryProposition> for HistoryRaw {
    fn from(h: HistoryProposition) -> Self {
        HistoryRaw { times: h.grid, projectors: h.projectors }
    }
}

impl HistoryProposition {
    pub fn new(grid: TimeGrid, projectors: Vec<Operator>, tol: f64) -> Result<Self> {
        if projectors.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: projectors.len() });
        }
        let dim = projectors[0].dim();
        for p in &projectors {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
            }
            let dev = p.projector_deviation();
            if dev > tol {
                return Err(Error::NotProjector(dev));
            }
        }
        Ok(Self { grid, projectors })
    }

    /// Unit history on `grid`.
    pub fn identity(grid: TimeGrid, dim: usize) -> Self {
        let projectors = vec![Operator::identity(dim); grid.len()];
        Self { grid, projectors }
    }

    /// Null history on `grid`.
    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        let mut projectors = vec![Operator::identity(dim); grid.len()];
        projectors[0] = Operator::zeros(dim);
        Self { grid, projectors }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn projectors(&self) -> &[Operator] {
        &self.projectors
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].dim()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The same proposition on a finer grid, with identity on the added times.
    pub fn extend_to(&self, grid: &TimeGrid) -> Result<HistoryProposition> {
        let id = Operator::identity(self.dim());
        let mut projectors = vec![id; grid.len()];
        for (t, p) in self.grid.times().iter().zip(&self.projectors) {
            let k = grid.position(*t).ok_or(Error::GridMismatch)?;
            projectors[k] = p.clone();
        }
        Ok(HistoryProposition { grid: grid.clone(), projectors })
    }

    /// The history operator `α₁ ⊗ … ⊗ αₙ` on the tensor space.
    pub fn tensor_operator(&self, cap: usize) -> Result<Operator> {
        tensor_dim(self.dim(), self.len(), cap)?;
        tensor_all(&self.projectors)
    }
}

/// Hamiltonian, initial state and optional final weight of a closed system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SystemRaw", into = "SystemRaw")]
pub struct SystemSpec {
    dim: HilbertDim,
    hamiltonian: Operator,
    initial_state: DensityMatrix,
    final_weight: Option<Operator>,
    energies: Vec<f64>,
    basis: DMatrix<C64>,
}

#[derive(Serialize, Deserialize)]
struct SystemRaw {
    hamiltonian: Operator,
    initial_state: DensityMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_weight: Option<Operator>,
}

impl TryFrom<SystemRaw> for SystemSpec {
    type Error = Error;
    fn try_from(r: SystemRaw) -> Result<Self> {
        let sys = SystemSpec::new(r.hamiltonian, r.initial_state, DEFAULT_TOL)?;
        match r.final_weight {
            Some(w) => sys.with_final_weight(w),
            None => Ok(sys),
        }
    }
}

impl From<SystemSpec> for SystemRaw {
    fn from(s: SystemSpec) -> Self {
        SystemRaw {
            hamiltonian: s.hamiltonian,
            initial_state: s.initial_state,
            final_weight: s.final_weight,
        }
    }
}

impl SystemSpec {
    pub fn new(hamiltonian: Operator, initial_state: DensityMatrix, tol: f64) -> Result<Self> {
        if hamiltonian.dim() != initial_state.dim() {
            return Err(Error::DimensionMismatch {
                expected: hamiltonian.dim(),
                got: initial_state.dim(),
            });
        }
        let (energies, basis) = hamiltonian.eigh(tol)?;
        Ok(Self {
            dim: HilbertDim::new(hamiltonian.dim())?,
            hamiltonian,
            initial_state,
            final_weight: None,
            energies,
            basis,
        })
    }

    /// Zero Hamiltonian.
    pub fn static_system(initial_state: DensityMatrix) -> Self {
        let n = initial_state.dim();
        Self::new(Operator::zeros(n), initial_state, DEFAULT_TOL).expect("zero is Hermitian")
    }

    pub fn with_final_weight(mut self, weight: Operator) -> Result<Self> {
        if weight.dim() != self.dim.get() {
            return Err(Error::DimensionMismatch { expected: self.dim.get(), got: weight.dim() });
        }
        self.final_weight = Some(weight);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim.get()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial_state
    }

    pub fn final_weight(&self) -> Option<&Operator> {
        self.final_weight.as_ref()
    }

    /// `U(t) = exp(-iHt)`.
    pub fn evolution(&self, t: f64) -> Operator {
        let n = self.dim();
        let phases = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            self.energies.iter().map(|&e| C64::from_polar(1.0, -e * t)),
        ));
        Operator::from_matrix_unchecked(&self.basis * phases * self.basis.adjoint())
    }

    /// `A(t) = U†(t) A U(t)`.
    pub fn heisenberg(&self, a: &Operator, t: f64) -> Operator {
        let u = self.evolution(t);
        &(&u.adjoint() * a) * &u
    }

    /// `Tr(X† ρ₀ Y ρ_f)`.
    pub fn pair_trace(&self, x: &Operator, y: &Operator) -> C64 {
        let left = &x.adjoint() * self.initial_state.operator();
        let right = match &self.final_weight {
            Some(w) => y * w,
            None => y.clone(),
        };
        trace_of_product(&left, &right)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: d });
        }
        Ok(())
    }
}

/// `Tr(AB)` without forming the product.
pub fn trace_of_product(a: &Operator, b: &Operator) -> C64 {
    let (am, bm) = (a.matrix(), b.matrix());
    let n = a.dim();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += am[(i, k)] * bm[(k, i)];
        }
    }
    acc
}

/// Time-ordered product `X₁(t₁) ⋯ Xₙ(tₙ)` of Heisenberg-picture operators,
/// earliest leftmost. The factors need not be projectors.
pub fn ordered_product(times: &[f64], ops: &[Operator], sys: &SystemSpec) -> Result<Operator> {
    if times.len() != ops.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: ops.len() });
    }
    let mut acc = Operator::identity(sys.dim());
    for (&t, op) in times.iter().zip(ops) {
        sys.check_dim(op.dim())?;
        acc = &acc * &sys.heisenberg(op, t);
    }
    Ok(acc)
}

/// Class operator `C_α = α₁(t₁) ⋯ αₙ(tₙ)`.
pub fn class_operator(h: &HistoryProposition, sys: &SystemSpec) -> Result<Operator> {
    ordered_product(h.grid.times(), &h.projectors, sys)
}

/// History probability clamped to `[0, 1]`, with the unclamped value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    pub value: f64,
    pub raw: f64,
}

/// `p(α) = Tr(C_α† ρ₀ C_α)`.
pub fn history_probability(h: &HistoryProposition, sys: &SystemSpec) -> Result<Probability> {
    let cl = class_operator(h, sys)?;
    let raw = sys.pair_trace(&cl, &cl).re;
    Ok(Probability { value: raw.clamp(0.0, 1.0), raw })
}

/// `d(α, β) = Tr(C_α† ρ₀ C_β)`; histories on different grids are compared
/// on the union grid.
pub fn decoherence_functional(
    a: &HistoryProposition,
    b: &HistoryProposition,
    sys: &SystemSpec,
) -> Result<C64> {
    sys.check_dim(a.dim())?;
    sys.check_dim(b.dim())?;
    let ca = class_operator(a, sys)?;
    let cb = class_operator(b, sys)?;
    Ok(sys.pair_trace(&ca, &cb))
}

/// Result of an additivity test on two disjoint histories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditivityDefect {
    /// `|p(α∨β) − p(α) − p(β)|`
    pub defect: f64,
    /// `2 |Re d(α, β)|`
    pub interference: f64,
}

/// `|p(α∨β) − p(α) − p(β)|` for histories that differ, by orthogonal
/// projectors, at exactly one time of their union grid.
pub fn additivity_defect(
    a: &HistoryProposition,
    b: &HistoryProposition,
    sys: &SystemSpec,
    tol: f64,
) -> Result<AdditivityDefect> {
    let grid = a.grid.union(&b.grid);
    let (a, b) = (a.extend_to(&grid)?, b.extend_to(&grid)?);
    let differ: Vec<usize> = (0..grid.len())
        .filter(|&k| (&a.projectors[k] - &b.projectors[k]).max_abs() > tol)
        .collect();
    let k = match differ.as_slice() {
        [k] => *k,
        _ => {
            return Err(Error::NotExclusive(format!(
                "histories differ at {} times; the join is a homogeneous history only when they differ at one",
                differ.len()
            )))
        }
    };
    let (pa, pb) = (&a.projectors[k], &b.projectors[k]);
    let overlap = (pa * pb).max_abs();
    if overlap > tol {
        return Err(Error::NotExclusive(format!("projectors overlap ({overlap:.3e})")));
    }
    let mut join = a.projectors.clone();
    join[k] = pa + pb;
    let join = HistoryProposition::new(grid, join, tol)?;

    let p_join = history_probability(&join, sys)?.raw;
    let p_a = history_probability(&a, sys)?.raw;
    let p_b = history_probability(&b, sys)?.raw;
    let d = decoherence_functional(&a, &b, sys)?;
    let out = AdditivityDefect { defect: (p_join - p_a - p_b).abs(), interference: 2.0 * d.re.abs() };
    let scale = 1.0 + p_join.abs();
    if (out.defect - out.interference).abs() > 1e3 * tol.max(f64::EPSILON) * scale {
        return Err(Error::Residual {
            residual: (out.defect - out.interference).abs(),
            threshold: 1e3 * tol * scale,
        });
    }
    Ok(out)
}

/// Decoherence functional tabulated over a finite set of histories.
#[derive(Debug, Clone)]
pub struct DecoherenceMatrix {
    pub histories: Vec<HistoryProposition>,
    pub values: DMatrix<C64>,
    pub max_off_diagonal: f64,
    pub diagonal_sum: f64,
    pub hermiticity_deviation: f64,
    pub min_diagonal: f64,
}

impl DecoherenceMatrix {
    pub fn compute(histories: Vec<HistoryProposition>, sys: &SystemSpec) -> Result<Self> {
        let ops: Vec<Operator> =
            histories.iter().map(|h| class_operator(h, sys)).collect::<Result<_>>()?;
        Ok(Self::from_operators(histories, &ops, sys))
    }

    /// Table built from precomputed (generalized) class operators.
    pub fn from_operators(
        histories: Vec<HistoryProposition>,
        ops: &[Operator],
        sys: &SystemSpec,
    ) -> Self {
        let n = ops.len();
        let left: Vec<Operator> =
            ops.par_iter().map(|x| &x.adjoint() * sys.initial_state().operator()).collect();
        let right: Vec<Operator> = ops
            .iter()
            .map(|y| match sys.final_weight() {
                Some(w) => y * w,
                None => y.clone(),
            })
            .collect();
        let entries: Vec<C64> = (0..n * n)
            .into_par_iter()
            .map(|k| trace_of_product(&left[k / n], &right[k % n]))
            .collect();
        Self::from_values(histories, DMatrix::from_row_slice(n, n, &entries))
    }

    pub fn from_values(histories: Vec<HistoryProposition>, values: DMatrix<C64>) -> Self {
        let n = values.nrows();
        let mut max_off = 0.0f64;
        let mut herm = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    max_off = max_off.max(values[(i, j)].norm());
                }
                herm = herm.max((values[(i, j)] - values[(j, i)].conj()).norm());
            }
        }
        let diag: Vec<f64> = (0..n).map(|i| values[(i, i)].re).collect();
        Self {
            histories,
            values,
            max_off_diagonal: max_off,
            diagonal_sum: diag.iter().sum(),
            hermiticity_deviation: herm,
            min_diagonal: diag.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.values[(i, j)]
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.values[(i, i)].re).collect()
    }
}

/// Outcome of [`consistency_check`].
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub matrix: DecoherenceMatrix,
    pub eps: f64,
    pub consistent: bool,
}

/// Checks that `set` is exclusive and exhaustive, then whether every
/// off-diagonal `|d_ij|` is at most `eps`.
pub fn consistency_check(
    set: &[HistoryProposition],
    sys: &SystemSpec,
    eps: f64,
    tol: f64,
) -> Result<ConsistencyReport> {
    if set.is_empty() {
        return Err(Error::Invalid("empty history set".into()));
    }
    let grid = set.iter().skip(1).fold(set[0].grid.clone(), |g, h| g.union(&h.grid));
    let ext: Vec<HistoryProposition> =
        set.iter().map(|h| h.extend_to(&grid)).collect::<Result<_>>()?;
    for h in &ext {
        sys.check_dim(h.dim())?;
    }
    check_exclusive(&ext, tol)?;
    check_exhaustive(&ext, tol)?;

    let matrix = DecoherenceMatrix::compute(ext, sys)?;
    let consistent = matrix.max_off_diagonal <= eps;
    Ok(ConsistencyReport { matrix, eps, consistent })
}

/// Pairwise exclusivity: two homogeneous histories are orthogonal iff their
/// projectors are orthogonal at some time.
fn check_exclusive(set: &[HistoryProposition], tol: f64) -> Result<()> {
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            let orthogonal = set[i]
                .projectors
                .iter()
                .zip(&set[j].projectors)
                .any(|(p, q)| (p * q).max_abs() <= tol);
            if !orthogonal {
                return Err(Error::NotExclusive(format!("histories {i} and {j} overlap")));
            }
        }
    }
    Ok(())
}

/// Exhaustiveness: the history operators sum to the identity on the tensor space.
fn check_exhaustive(set: &[HistoryProposition], tol: f64) -> Result<()> {
    let mut sum: Option<Operator> = None;
    for h in set {
        let t = h.tensor_operator(DEFAULT_SIZE_CAP)?;
        sum = Some(match sum {
            Some(s) => &s + &t,
            None => t,
        });
    }
    let sum = sum.expect("non-empty set");
    let dev = (&sum - &Operator::identity(sum.dim())).max_abs();
    if dev > tol.max(1e-12) * set.len() as f64 {
        return Err(Error::NotExhaustive(dev));
    }
    Ok(())
}

/// Boundary amplitudes `c(α)` and the resulting `d(a, b) = Tr(c(a) c(b)†)`.
#[derive(Debug, Clone)]
pub struct BoundaryDecomposition {
    pub c_a: Operator,
    pub c_b: Operator,
    pub value: C64,
}

/// Cyclic shift on `slots` copies of a `dim`-dimensional space:
/// `S |v₀ v₁ … v_{n−1}⟩ = |v_{n−1} v₀ … v_{n−2}⟩`.
pub fn cyclic_shift(dim: usize, slots: usize, cap: usize) -> Result<Operator> {
    let dest: Vec<usize> = (0..slots).map(|k| (k + 1) % slots).collect();
    slot_permutation(dim, &dest, cap)
}

/// Slot reversal `T |v₀ … v_{n−1}⟩ = |v_{n−1} … v₀⟩`.
pub fn slot_reversal(dim: usize, slots: usize, cap: usize) -> Result<Operator> {
    let dest: Vec<usize> = (0..slots).rev().collect();
    slot_permutation(dim, &dest, cap)
}

/// Builds `c(α)_{rs} = Tr_V((A^{rs} ⊗ 1) S 𝒰†(1 ⊗ α)𝒰)` on the space
/// `H ⊗ H^{⊗n}` and returns `Tr(c(a) c(b)†)`.
///
/// Slot 0 carries the boundary factor `A^{rs}`, built from `ρ₀^{1/2}` by
/// `⟨k|A^{rs}|i⟩ = (ρ₀^{1/2})_{ks} δ_{ri}`; slot `k ≥ 1` carries the
/// Heisenberg projector of time `t_k`. The trace identity
/// `Tr(S(X₀ ⊗ … ⊗ Xₙ)) = Tr(Xₙ ⋯ X₀)` gives `c(α) = C_α† ρ₀^{1/2}`.
pub fn boundary_decomposition(
    a: &HistoryProposition,
    b: &HistoryProposition,
    sys: &SystemSpec,
    cap: usize,
) -> Result<BoundaryDecomposition> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    sys.check_dim(a.dim())?;
    sys.check_dim(b.dim())?;
    let dim = sys.dim();
    let slots = a.len() + 1;
    let total = tensor_dim(dim, slots, cap)?;
    let root = sys.initial_state().sqrt();
    let c_a = boundary_amplitude(a, sys, &root, total)?;
    let c_b = boundary_amplitude(b, sys, &root, total)?;
    let value = trace_of_product(&c_a, &c_b.adjoint());
    Ok(BoundaryDecomposition { c_a, c_b, value })
}

fn boundary_amplitude(
    h: &HistoryProposition,
    sys: &SystemSpec,
    root: &Operator,
    total: usize,
) -> Result<Operator> {
    let dim = sys.dim();
    let mut factors = Vec::with_capacity(h.len() + 1);
    factors.push(Operator::identity(dim));
    for (&t, p) in h.grid.times().iter().zip(&h.projectors) {
        factors.push(sys.heisenberg(p, t));
    }
    let x = tensor_all(&factors)?;
    // S is a permutation matrix, so S·X is X with its rows permuted
    let slots = h.len() + 1;
    let rest = total / dim;
    let xm = x.matrix();
    let mut digits = vec![0usize; slots];
    let mut r = DMatrix::<C64>::zeros(dim, dim);
    // R = Tr_{1..n}(S X): only rows (i, rest) and columns (j, rest) with equal rest
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = ZERO;
            for tail in 0..rest {
                let row = i * rest + tail;
                let col = j * rest + tail;
                // (S X)_{row, col} = X_{src(row), col}, src undoes the shift
                decode(row, dim, &mut digits);
                digits.rotate_left(1);
                let src = encode(&digits, dim);
                acc += xm[(src, col)];
            }
            r[(i, j)] = acc;
        }
    }
    let r = Operator::from_matrix_unchecked(r);
    let mut cm = DMatrix::<C64>::zeros(dim, dim);
    for rr in 0..dim {
        for s in 0..dim {
            let mut amat = DMatrix::<C64>::zeros(dim, dim);
            for k in 0..dim {
                amat[(k, rr)] = root.get(k, s);
            }
            cm[(rr, s)] = trace_of_product(&Operator::from_matrix_unchecked(amat), &r);
        }
    }
    Ok(Operator::from_matrix_unchecked(cm))
}

fn decode(mut idx: usize, dim: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = idx % dim;
        idx /= dim;
    }
}

fn encode(digits: &[usize], dim: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * dim + d)
}

/// Time-reversed history: reflected grid, projectors in reverse order, so the
/// projector at `−t_k` is `α_{t_k}`.
pub fn time_reversal(h: &HistoryProposition) -> HistoryProposition {
    HistoryProposition {
        grid: h.grid.reflected(),
        projectors: h.projectors.iter().rev().cloned().collect(),
    }
}

/// Anti-time-ordered class operator of a reversed history,
/// `C^T = α^T(sₙ) ⋯ α^T(s₁)`, i.e. `α_{t₁}(−t₁) ⋯ α_{tₙ}(−tₙ)`.
pub fn reversed_class_operator(h: &HistoryProposition, sys: &SystemSpec) -> Result<Operator> {
    let r = time_reversal(h);
    let times: Vec<f64> = r.grid.times().iter().rev().copied().collect();
    let ops: Vec<Operator> = r.projectors.iter().rev().cloned().collect();
    ordered_product(&times, &ops, sys)
}

/// `|d(α^T, β^T) − conj d(α, β)|`, with the reversed histories evaluated
/// through Heisenberg operators at reflected times. Requires a grid symmetric
/// about zero. The identity is exact when `H`, `ρ₀` and the projectors are
/// invariant under complex conjugation.
pub fn reversal_identity_check(
    a: &HistoryProposition,
    b: &HistoryProposition,
    sys: &SystemSpec,
) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    if !a.grid.is_symmetric() {
        return Err(Error::InvalidGrid("time reversal check needs a grid symmetric about 0".into()));
    }
    let d = decoherence_functional(a, b, sys)?;
    let ca = reversed_class_operator(a, sys)?;
    let cb = reversed_class_operator(b, sys)?;
    let dt = sys.pair_trace(&ca, &cb);
    Ok((dt - d.conj()).norm())
}

/// Sum of class operators of a family; the identity for exhaustive families.
pub fn class_operator_sum(set: &[HistoryProposition], sys: &SystemSpec) -> Result<Operator> {
    let mut acc = Operator::zeros(sys.dim());
    for h in set {
        acc = &acc + &class_operator(h, sys)?;
    }
    Ok(acc)
}

/// Every combination of one projector per time from per-time partitions.
pub fn product_family(
    grid: &TimeGrid,
    partitions: &[Vec<Operator>],
    tol: f64,
) -> Result<Vec<HistoryProposition>> {
    if partitions.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: partitions.len() });
    }
    let mut out: Vec<Vec<Operator>> = vec![Vec::new()];
    for part in partitions {
        let mut next = Vec::with_capacity(out.len() * part.len());
        for prefix in &out {
            for p in part {
                let mut v = prefix.clone();
                v.push(p.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out.into_iter().map(|ps| HistoryProposition::new(grid.clone(), ps, tol)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{ket0, ket1, ket_minus, ket_plus, sigma_x, sigma_z};
    use crate::hilbert::ONE;
    use approx::assert_abs_diff_eq;

    fn p0() -> Operator {
        ket0().projector()
    }
    fn p1() -> Operator {
        ket1().projector()
    }
    fn pp() -> Operator {
        ket_plus().projector()
    }
    fn pm() -> Operator {
        ket_minus().projector()
    }

    fn grid2() -> TimeGrid {
        TimeGrid::new(vec![0.3, 1.1]).unwrap()
    }

    fn sys0() -> SystemSpec {
        SystemSpec::static_system(DensityMatrix::pure(&ket0()).unwrap())
    }

    fn hist(ps: Vec<Operator>) -> HistoryProposition {
        HistoryProposition::new(grid2(), ps, DEFAULT_TOL).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::NAN]).is_err());
        let u = TimeGrid::new(vec![0.0, 2.0]).unwrap().union(&TimeGrid::new(vec![1.0, 2.0]).unwrap());
        assert_eq!(u.times(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn class_operator_examples() {
        let sys = sys0();
        let id = HistoryProposition::identity(grid2(), 2);
        assert_eq!(class_operator(&id, &sys).unwrap(), Operator::identity(2));

        let single = HistoryProposition::new(TimeGrid::new(vec![0.5]).unwrap(), vec![pp()], 1e-9)
            .unwrap();
        assert!((&class_operator(&single, &sys).unwrap() - &pp()).norm() < 1e-15);

        // P₊P₀ = |+⟩⟨+|0⟩⟨0| = ⟨+|0⟩ |+⟩⟨0|
        let cl = class_operator(&hist(vec![pp(), p0()]), &sys).unwrap();
        let expected = ket_plus().outer(&ket0()).scale(ket_plus().inner(&ket0()));
        assert!((&cl - &expected).norm() < 1e-15);
        assert_abs_diff_eq!(ket_plus().inner(&ket0()).norm(), 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn probability_examples() {
        let sys = sys0();
        let id = HistoryProposition::identity(grid2(), 2);
        assert_abs_diff_eq!(history_probability(&id, &sys).unwrap().value, 1.0, epsilon = 1e-14);
        let h = hist(vec![p0(), p0()]);
        assert_abs_diff_eq!(history_probability(&h, &sys).unwrap().value, 1.0, epsilon = 1e-14);
        let h = hist(vec![pp(), p0()]);
        assert_abs_diff_eq!(history_probability(&h, &sys).unwrap().value, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn decoherence_examples() {
        let sys = sys0();
        let id = HistoryProposition::identity(grid2(), 2);
        assert_abs_diff_eq!((decoherence_functional(&id, &id, &sys).unwrap() - ONE).norm(), 0.0, epsilon = 1e-14);
        let zero = HistoryProposition::zero(grid2(), 2);
        let a = hist(vec![pp(), p0()]);
        assert_eq!(decoherence_functional(&zero, &a, &sys).unwrap().norm(), 0.0);

        // Tr(P₀P₊P₀ · P₀ · P₀P₋P₀)... written out as 2×2 products
        let b = hist(vec![pm(), p0()]);
        let ca = &pp() * &p0();
        let cb = &pm() * &p0();
        let oracle = (&(&ca.adjoint() * &p0()) * &cb).trace();
        let d = decoherence_functional(&a, &b, &sys).unwrap();
        assert_abs_diff_eq!((d - oracle).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.re, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn different_grids_use_identity_padding() {
        let sys = SystemSpec::new(sigma_x(), DensityMatrix::pure(&ket0()).unwrap(), 1e-9).unwrap();
        let a = HistoryProposition::new(TimeGrid::new(vec![0.4]).unwrap(), vec![p1()], 1e-9).unwrap();
        let b = hist(vec![pp(), p0()]);
        let d = decoherence_functional(&a, &b, &sys).unwrap();
        let g = a.grid().union(b.grid());
        let d2 = decoherence_functional(&a.extend_to(&g).unwrap(), &b.extend_to(&g).unwrap(), &sys)
            .unwrap();
        assert_abs_diff_eq!((d - d2).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn additivity_examples() {
        let sys = sys0();
        // classical: everything diagonal in the ρ₀ basis
        let r = additivity_defect(&hist(vec![p0(), p0()]), &hist(vec![p1(), p0()]), &sys, 1e-9).unwrap();
        assert!(r.defect < 1e-14);

        let a = hist(vec![pp(), p0()]);
        let b = hist(vec![pm(), p0()]);
        let r = additivity_defect(&a, &b, &sys, 1e-9).unwrap();
        let d = decoherence_functional(&a, &b, &sys).unwrap();
        assert_abs_diff_eq!(r.defect, 2.0 * d.re.abs(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.defect, 0.5, epsilon = 1e-12);

        // differ only at the final time
        let sysx = SystemSpec::new(sigma_x(), DensityMatrix::pure(&ket_plus()).unwrap(), 1e-9).unwrap();
        let r = additivity_defect(&hist(vec![pp(), p0()]), &hist(vec![pp(), p1()]), &sysx, 1e-9)
            .unwrap();
        assert!(r.defect < 1e-14);

        // differing at two times is rejected
        assert!(additivity_defect(&hist(vec![pp(), p0()]), &hist(vec![pm(), p1()]), &sys, 1e-9).is_err());
    }

    #[test]
    fn consistency_examples() {
        let sys = sys0();
        let g1 = TimeGrid::new(vec![0.0]).unwrap();
        let born = product_family(&g1, &[vec![pp(), pm()]], 1e-9).unwrap();
        let rep = consistency_check(&born, &sys, DEFAULT_CONSISTENCY_EPS, 1e-9).unwrap();
        assert!(rep.consistent);
        assert_abs_diff_eq!(rep.matrix.get(0, 0).re, 0.5, epsilon = 1e-14);

        let same = product_family(&grid2(), &[vec![p0(), p1()], vec![p0(), p1()]], 1e-9).unwrap();
        let rep = consistency_check(&same, &sys, DEFAULT_CONSISTENCY_EPS, 1e-9).unwrap();
        assert!(rep.consistent);
        assert_abs_diff_eq!(rep.matrix.diagonal_sum, 1.0, epsilon = 1e-12);

        let mub = product_family(&grid2(), &[vec![pp(), pm()], vec![p0(), p1()]], 1e-9).unwrap();
        let rep = consistency_check(&mub, &sys, DEFAULT_CONSISTENCY_EPS, 1e-9).unwrap();
        assert!(!rep.consistent);
        assert_abs_diff_eq!(rep.matrix.max_off_diagonal, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn consistency_rejects_bad_sets() {
        let sys = sys0();
        let overlapping = vec![hist(vec![p0(), p0()]), hist(vec![pp(), p0()])];
        assert!(matches!(
            consistency_check(&overlapping, &sys, 1e-6, 1e-9),
            Err(Error::NotExclusive(_))
        ));
        let incomplete = vec![hist(vec![p0(), p0()]), hist(vec![p1(), p0()])];
        assert!(matches!(
            consistency_check(&incomplete, &sys, 1e-6, 1e-9),
            Err(Error::NotExhaustive(_))
        ));
    }

    #[test]
    fn boundary_examples() {
        let sys = SystemSpec::new(sigma_x(), DensityMatrix::pure(&ket0()).unwrap(), 1e-9).unwrap();
        let g = TimeGrid::new(vec![0.2, 0.9, 1.7]).unwrap();
        let id = HistoryProposition::identity(g.clone(), 2);
        let bd = boundary_decomposition(&id, &id, &sys, DEFAULT_SIZE_CAP).unwrap();
        assert_abs_diff_eq!((bd.value - ONE).norm(), 0.0, epsilon = 1e-12);

        let a = HistoryProposition::new(g.clone(), vec![pp(), p0(), pm()], 1e-9).unwrap();
        let b = HistoryProposition::new(g, vec![pm(), p0(), pp()], 1e-9).unwrap();
        let bd = boundary_decomposition(&a, &b, &sys, DEFAULT_SIZE_CAP).unwrap();
        let d = decoherence_functional(&a, &b, &sys).unwrap();
        assert!((bd.value - d).norm() < 1e-10);
    }

    #[test]
    fn shift_and_reversal_permutations() {
        for slots in 2..5 {
            let s = cyclic_shift(2, slots, DEFAULT_SIZE_CAP).unwrap();
            assert!(s.is_unitary(0.0));
            let t = slot_reversal(2, slots, DEFAULT_SIZE_CAP).unwrap();
            assert!(t.is_unitary(0.0));
            assert_eq!(&(&t * &s) * &t.adjoint(), s.adjoint());
        }
    }

    #[test]
    fn shift_trace_identity() {
        let x = [pp(), sigma_x(), sigma_z()];
        let s = cyclic_shift(2, 3, DEFAULT_SIZE_CAP).unwrap();
        let lhs = (&s * &tensor_all(&x).unwrap()).trace();
        let rhs = (&(&x[2] * &x[1]) * &x[0]).trace();
        assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn time_reversal_examples() {
        let g = TimeGrid::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let h = HistoryProposition::new(g, vec![pp(), p0(), pp()], 1e-9).unwrap();
        assert_eq!(time_reversal(&h), h);

        let sys = SystemSpec::new(sigma_z(), DensityMatrix::pure(&ket_plus()).unwrap(), 1e-9).unwrap();
        let g = TimeGrid::new(vec![-1.0, 1.0]).unwrap();
        let a = HistoryProposition::new(g.clone(), vec![pp(), p0()], 1e-9).unwrap();
        let b = HistoryProposition::new(g, vec![pm(), p1()], 1e-9).unwrap();
        assert!(reversal_identity_check(&a, &b, &sys).unwrap() < 1e-9);

        let asym = HistoryProposition::new(grid2(), vec![pp(), p0()], 1e-9).unwrap();
        assert!(matches!(reversal_identity_check(&asym, &asym, &sys), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn final_weight_enters_trace() {
        let sys = sys0().with_final_weight(p0()).unwrap();
        let id = HistoryProposition::identity(grid2(), 2);
        assert_abs_diff_eq!(decoherence_functional(&id, &id, &sys).unwrap().re, 1.0, epsilon = 1e-14);
        let sys = sys0().with_final_weight(p1()).unwrap();
        assert!(decoherence_functional(&id, &id, &sys).unwrap().norm() < 1e-14);
    }

    #[test]
    fn serde_round_trip() {
        let sys = SystemSpec::new(sigma_x(), DensityMatrix::pure(&ket_plus()).unwrap(), 1e-9).unwrap();
        let h = hist(vec![pp(), p0()]);
        let js = serde_json::to_string(&(&sys, &h)).unwrap();
        let (sys2, h2): (SystemSpec, HistoryProposition) = serde_json::from_str(&js).unwrap();
        assert_eq!(h, h2);
        assert_eq!(sys.hamiltonian(), sys2.hamiltonian());
        let bad = r#"{"times":[0.0],"projectors":[[[[1.0,0.0],[1.0,0.0]],[[0.0,0.0],[1.0,0.0]]]]}"#;
        assert!(serde_json::from_str::<HistoryProposition>(bad).is_err());
    }
}
