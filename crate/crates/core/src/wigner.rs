//! Wigner–Weyl symbols on the truncated Fock space.
//!
//! `Δ(q, p) = 2 D(α) Π D†(α) = 2 D(2α) Π`, so `Δ_{mn} = 2(−1)ⁿ D(2α)_{mn}` with
//! exact matrix elements. Phase-space integrals use the measure `dq dp / 2π`,
//! under which `∫ Δ = 1`.
//!
//! Operators whose matrix elements vanish near the top Fock levels are
//! transformed exactly as `Tr(Δ a)`. Operators that reach the truncation edge
//! (the identity, truncated polynomials in `q̂`, `p̂`) are treated as truncations
//! of unbounded operators: the parity trace `2 Σₙ (−1)ⁿ ⟨n|D†aD|n⟩` is cut where
//! `D|n⟩` still fits in the space and resummed by repeated averaging of the
//! partial sums.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{c, Operator, C64};
use crate::histories::{SystemSpec, TimeGrid};
use crate::phasespace::{displacement_matrix, FockSpec, PhasePoint};

/// Averaging rounds for the resummed parity trace; exact for `⟨n|D†aD|n⟩`
/// polynomial in `n` of degree below this.
pub const EULER_ROUNDS: usize = 4;

/// Fock-level margin kept between `D|n⟩` and the truncation edge.
pub const EDGE_MARGIN: f64 = 4.0;

/// Relative size below which edge matrix elements count as zero.
const EDGE_TOL: f64 = 1e-10;

/// Tensor trapezoid grid on `[qmin, qmax] × [pmin, pmax]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid {
    qmin: f64,
    qmax: f64,
    pmin: f64,
    pmax: f64,
    nq: usize,
    np: usize,
    weights: Vec<f64>,
}

fn trapezoid(n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
}

impl PhaseSpaceGrid {
    pub fn new(qmin: f64, qmax: f64, pmin: f64, pmax: f64, nq: usize, np: usize) -> Result<Self> {
        if nq < 8 || np < 8 {
            return Err(Error::Invalid(format!("grid needs at least 8 points per axis, got {nq}x{np}")));
        }
        if ![qmin, qmax, pmin, pmax].iter().all(|x| x.is_finite()) || qmax <= qmin || pmax <= pmin {
            return Err(Error::Invalid("grid bounds must be finite and increasing".into()));
        }
        let wq = trapezoid(nq, (qmax - qmin) / (nq - 1) as f64);
        let wp = trapezoid(np, (pmax - pmin) / (np - 1) as f64);
        let weights = wq.iter().flat_map(|a| wp.iter().map(move |b| a * b)).collect();
        Ok(Self { qmin, qmax, pmin, pmax, nq, np, weights })
    }

    /// Box circumscribing the valid region, `n` points per axis.
    pub fn calibrated(spec: &FockSpec, n: usize) -> Result<Self> {
        let r2 = spec.ncut() as f64 / 2.0;
        let lq = (r2 / spec.omega()).sqrt();
        let lp = (r2 * spec.omega()).sqrt();
        Self::new(-lq, lq, -lp, lp, n, n)
    }

    /// Calibrated box with about six nodes per unit of `√ncut`.
    pub fn calibrated_default(spec: &FockSpec) -> Result<Self> {
        Self::calibrated(spec, (6.0 * (spec.ncut() as f64).sqrt()).ceil() as usize + 1)
    }

    /// Same box with the spacing halved; old nodes are kept.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.qmin, self.qmax, self.pmin, self.pmax, 2 * self.nq - 1, 2 * self.np - 1)
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn np(&self) -> usize {
        self.np
    }

    pub fn len(&self) -> usize {
        self.nq * self.np
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dq(&self) -> f64 {
        (self.qmax - self.qmin) / (self.nq - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.pmax - self.pmin) / (self.np - 1) as f64
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.qmin, self.qmax, self.pmin, self.pmax)
    }

    pub fn area(&self) -> f64 {
        (self.qmax - self.qmin) * (self.pmax - self.pmin)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node `k` in row-major order (`q` outer).
    pub fn node(&self, k: usize) -> (f64, f64) {
        let (i, j) = (k / self.np, k % self.np);
        (self.qmin + i as f64 * self.dq(), self.pmin + j as f64 * self.dp())
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.np + j
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(|k| self.node(k))
    }

    /// `Σ w f / 2π`.
    pub fn integrate<F: Fn(usize) -> C64>(&self, f: F) -> C64 {
        self.weights.iter().enumerate().map(|(k, w)| f(k) * *w).sum::<C64>() / (2.0 * PI)
    }
}

/// `ωq² + p²/ω`; equals `q² + p²` at `ω = 1`.
pub fn radius_sq(q: f64, p: f64, spec: &FockSpec) -> f64 {
    spec.omega() * q * q + p * p / spec.omega()
}

pub fn in_valid_region(q: f64, p: f64, spec: &FockSpec) -> bool {
    radius_sq(q, p, spec) <= spec.ncut() as f64 / 2.0
}

fn alpha_at(q: f64, p: f64, spec: &FockSpec) -> C64 {
    PhasePoint { chi: q, xi: p }.alpha(spec.omega())
}

/// `Δ(q, p)` on the first `n` Fock levels, no region check.
pub fn delta_matrix(q: f64, p: f64, omega: f64, n: usize) -> DMatrix<C64> {
    let a = PhasePoint { chi: q, xi: p }.alpha(omega);
    let mut d = displacement_matrix(a * 2.0, n);
    for j in 0..n {
        let s = if j % 2 == 0 { 2.0 } else { -2.0 };
        d.column_mut(j).scale_mut(s);
    }
    d
}

pub fn delta_operator(q: f64, p: f64, spec: &FockSpec) -> Result<Operator> {
    if !q.is_finite() || !p.is_finite() {
        return Err(Error::NonFinite("phase point"));
    }
    if !in_valid_region(q, p, spec) {
        return Err(Error::Region { r2: radius_sq(q, p, spec), limit: spec.ncut() as f64 / 2.0 });
    }
    Operator::new(delta_matrix(q, p, spec.omega(), spec.ncut()))
}

/// Number of leading Fock levels that carry non-negligible matrix elements.
pub fn support(a: &Operator) -> usize {
    let m = a.matrix();
    let cut = EDGE_TOL * a.max_abs();
    let n = m.nrows();
    (0..n)
        .rev()
        .find(|&k| m.row(k).iter().chain(m.column(k).iter()).any(|x| x.norm() > cut))
        .map_or(0, |k| k + 1)
}

/// How an operator is transformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `Tr(Δ a)` over the first `support` levels.
    Exact { support: usize },
    /// Resummed parity trace.
    Resummed,
}

pub fn method_for(a: &Operator) -> Method {
    let s = support(a);
    if s + 2 <= a.dim() {
        Method::Exact { support: s }
    } else {
        Method::Resummed
    }
}

/// Levels `n` whose displaced states `D(α)|n⟩` stay clear of the edge.
pub fn resummation_cutoff(alpha: C64, ncut: usize) -> usize {
    let r = (ncut as f64).sqrt() - alpha.norm() - EDGE_MARGIN;
    if r <= 0.0 {
        0
    } else {
        ((r * r).floor() as usize).min(ncut)
    }
}

/// Repeated pairwise averaging of the last `rounds + 1` partial sums.
pub fn euler_resum(partial: &[C64], rounds: usize) -> C64 {
    let k = partial.len().min(rounds + 1);
    let mut v: Vec<C64> = partial[partial.len() - k..].to_vec();
    while v.len() > 1 {
        v = v.windows(2).map(|w| (w[0] + w[1]) * 0.5).collect();
    }
    v[0]
}

fn exact_value(delta2: &DMatrix<C64>, a: &Operator, s: usize) -> C64 {
    // Σ_{jk} 2(−1)^j D(2α)_{kj} a_{jk}
    let m = a.matrix();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..s {
        let mut col = C64::new(0.0, 0.0);
        for k in 0..s {
            col += delta2[(k, j)] * m[(j, k)];
        }
        if j % 2 == 0 {
            acc += col;
        } else {
            acc -= col;
        }
    }
    acc * 2.0
}

fn resummed_value(d: &DMatrix<C64>, a: &Operator, kmax: usize) -> C64 {
    let m = a.matrix();
    let mut partial = Vec::with_capacity(kmax);
    let mut s = C64::new(0.0, 0.0);
    for n in 0..kmax {
        let v = d.column(n);
        let b = (v.adjoint() * m * v)[(0, 0)];
        if n % 2 == 0 {
            s += b;
        } else {
            s -= b;
        }
        partial.push(s);
    }
    euler_resum(&partial, EULER_ROUNDS) * 2.0
}

/// Symbol value at one node; the flag is false where the point lies outside
/// the valid region or the resummation has too few terms.
fn node_values(ops: &[(&Operator, Method)], q: f64, p: f64, spec: &FockSpec) -> (Vec<C64>, bool) {
    let n = spec.ncut();
    let alpha = alpha_at(q, p, spec);
    let mut ok = in_valid_region(q, p, spec);
    let smax = ops
        .iter()
        .filter_map(|(_, m)| match m {
            Method::Exact { support } => Some(*support),
            Method::Resummed => None,
        })
        .max();
    let delta2 = smax.map(|s| displacement_matrix(alpha * 2.0, s.max(1)));
    let resum = ops.iter().any(|(_, m)| *m == Method::Resummed);
    let kmax = resummation_cutoff(alpha, n);
    let d = resum.then(|| displacement_matrix(alpha, n));
    if resum && kmax < EULER_ROUNDS + 1 {
        ok = false;
    }
    let vals = ops
        .iter()
        .map(|(a, m)| match m {
            Method::Exact { support } => exact_value(delta2.as_ref().unwrap(), a, *support),
            Method::Resummed => {
                resummed_value(d.as_ref().unwrap(), a, kmax.max(EULER_ROUNDS + 1).min(n))
            }
        })
        .collect();
    (vals, ok)
}

/// Symbol of `a` at a single point.
pub fn wigner_value(a: &Operator, q: f64, p: f64, spec: &FockSpec) -> Result<C64> {
    if a.dim() != spec.ncut() {
        return Err(Error::DimensionMismatch { expected: spec.ncut(), got: a.dim() });
    }
    if !in_valid_region(q, p, spec) {
        return Err(Error::Region { r2: radius_sq(q, p, spec), limit: spec.ncut() as f64 / 2.0 });
    }
    Ok(node_values(&[(a, method_for(a))], q, p, spec).0[0])
}

/// Symbol values over a grid, with per-node validity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerField {
    grid: PhaseSpaceGrid,
    values: Vec<C64>,
    valid: Vec<bool>,
}

impl WignerField {
    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn flagged(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.values[self.grid.index(i, j)]
    }

    /// `∫ F dq dp / 2π`.
    pub fn integral(&self) -> C64 {
        self.grid.integrate(|k| self.values[k])
    }

    /// `∫ F G dq dp / 2π`.
    pub fn product_integral(&self, other: &WignerField) -> Result<C64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.grid.integrate(|k| self.values[k] * other.values[k]))
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    /// Tabular export: `#` metadata lines, then `q,p,re,im` rows.
    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let g = &self.grid;
        let mut out = String::new();
        for (k, v) in metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(
            out,
            "# grid = q[{}, {}] x p[{}, {}], {} x {} trapezoid, measure dq dp / 2pi",
            g.qmin, g.qmax, g.pmin, g.pmax, g.nq, g.np
        );
        let _ = writeln!(out, "# flagged_nodes = {}", self.flagged());
        out.push_str("q,p,re,im\n");
        for (k, v) in self.values.iter().enumerate() {
            let (q, p) = g.node(k);
            let _ = writeln!(out, "{q:.12e},{p:.12e},{:.12e},{:.12e}", v.re, v.im);
        }
        out
    }
}

/// Symbols of several operators, sharing the per-node displacement matrices.
pub fn wigner_transform_batch(
    ops: &[Operator],
    grid: &PhaseSpaceGrid,
    spec: &FockSpec,
) -> Result<Vec<WignerField>> {
    for a in ops {
        if a.dim() != spec.ncut() {
            return Err(Error::DimensionMismatch { expected: spec.ncut(), got: a.dim() });
        }
    }
    let tagged: Vec<(&Operator, Method)> = ops.iter().map(|a| (a, method_for(a))).collect();
    let per_node: Vec<(Vec<C64>, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (q, p) = grid.node(k);
            node_values(&tagged, q, p, spec)
        })
        .collect();
    let valid: Vec<bool> = per_node.iter().map(|(_, ok)| *ok).collect();
    let fields = (0..ops.len())
        .map(|i| WignerField {
            grid: grid.clone(),
            values: per_node.iter().map(|(v, _)| v[i]).collect(),
            valid: valid.clone(),
        })
        .collect::<Vec<_>>();
    for f in &fields {
        if f.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("wigner field"));
        }
    }
    Ok(fields)
}

pub fn wigner_transform(a: &Operator, grid: &PhaseSpaceGrid, spec: &FockSpec) -> Result<WignerField> {
    Ok(wigner_transform_batch(std::slice::from_ref(a), grid, spec)?.remove(0))
}

/// Outcome of the commutator-vs-Poisson comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoyalReport {
    /// `sup |F_{[a,b]/i} − {F_a, F_b}|` over checked nodes.
    pub sup: f64,
    pub nodes: usize,
}

/// Compares `F_{[a,b]/i}` with `∂_q F_a ∂_p F_b − ∂_p F_a ∂_q F_b`, using
/// central differences on interior nodes where all three fields are valid.
pub fn moyal_consistency_check(
    a: &Operator,
    b: &Operator,
    grid: &PhaseSpaceGrid,
    spec: &FockSpec,
) -> Result<MoyalReport> {
    let comm = a.commutator(b).scale(c(0.0, -1.0));
    let fields = wigner_transform_batch(&[a.clone(), b.clone(), comm], grid, spec)?;
    let (fa, fb, fc) = (&fields[0], &fields[1], &fields[2]);
    let (hq, hp) = (grid.dq(), grid.dp());
    let mut sup: f64 = 0.0;
    let mut nodes = 0;
    for i in 1..grid.nq() - 1 {
        for j in 1..grid.np() - 1 {
            let ks = [grid.index(i, j), grid.index(i - 1, j), grid.index(i + 1, j), grid.index(i, j - 1), grid.index(i, j + 1)];
            if !ks.iter().all(|&k| fa.valid[k]) {
                continue;
            }
            let dq = |f: &WignerField| (f.values[ks[2]] - f.values[ks[1]]) / (2.0 * hq);
            let dp = |f: &WignerField| (f.values[ks[4]] - f.values[ks[3]]) / (2.0 * hp);
            let poisson = dq(fa) * dp(fb) - dp(fa) * dq(fb);
            sup = sup.max((fc.values[ks[0]] - poisson).norm());
            nodes += 1;
        }
    }
    if nodes == 0 {
        return Err(Error::Invalid("no interior nodes inside the valid region".into()));
    }
    Ok(MoyalReport { sup, nodes })
}

/// One link of a `Δ` chain: time and phase-space node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainNode {
    pub t: f64,
    pub q: f64,
    pub p: f64,
}

impl ChainNode {
    pub fn new(t: f64, q: f64, p: f64) -> Self {
        Self { t, q, p }
    }
}

fn check_chain(chain: &[ChainNode]) -> Result<()> {
    if chain.len() > 1 {
        TimeGrid::new(chain.iter().map(|n| n.t).collect())?;
    }
    Ok(())
}

fn chain_operator(chain: &[ChainNode], sys: &SystemSpec, spec: &FockSpec) -> Result<Operator> {
    let mut acc = Operator::identity(spec.ncut());
    for n in chain {
        let d = delta_operator(n.q, n.p, spec)?;
        acc = &acc * &sys.heisenberg(&d, n.t);
    }
    Ok(acc)
}

/// `W_{n,m} = Tr(C_n† ρ₀ C′_m ρ_f)` with `C = Δ(x₁, t₁) ⋯ Δ(xₙ, tₙ)`, each `Δ`
/// in the Heisenberg picture.
pub fn multi_time_wigner(
    chain_a: &[ChainNode],
    chain_b: &[ChainNode],
    sys: &SystemSpec,
    spec: &FockSpec,
) -> Result<C64> {
    if sys.dim() != spec.ncut() {
        return Err(Error::DimensionMismatch { expected: spec.ncut(), got: sys.dim() });
    }
    check_chain(chain_a)?;
    check_chain(chain_b)?;
    let ca = chain_operator(chain_a, sys, spec)?;
    let cb = chain_operator(chain_b, sys, spec)?;
    Ok(sys.pair_trace(&ca, &cb))
}

/// Marginal of `W_{n,m}` over the first node of the `n`-chain against `W_{n−1,m}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditivityReport {
    pub integral: C64,
    pub reference: C64,
    pub residual: f64,
}

/// `∫ dq₁ dp₁ / 2π` of `W_{n,m}` by quadrature, compared with the chain that
/// omits the first node. `Δ` enters linearly, so the quadrature is carried out
/// on the operator `Σ w Δ(x) / 2π` before the trace.
pub fn additivity_check(
    chain_a: &[ChainNode],
    chain_b: &[ChainNode],
    sys: &SystemSpec,
    spec: &FockSpec,
    grid: &PhaseSpaceGrid,
) -> Result<AdditivityReport> {
    if chain_a.is_empty() {
        return Err(Error::Invalid("n-chain must have at least one node".into()));
    }
    if sys.dim() != spec.ncut() {
        return Err(Error::DimensionMismatch { expected: spec.ncut(), got: sys.dim() });
    }
    check_chain(chain_a)?;
    check_chain(chain_b)?;
    let n = spec.ncut();
    // per-row partial sums, combined in a fixed order so the result does not
    // depend on the worker count
    let rows: Vec<DMatrix<C64>> = (0..grid.nq())
        .into_par_iter()
        .map(|i| {
            let mut acc = DMatrix::zeros(n, n);
            for j in 0..grid.np() {
                let k = grid.index(i, j);
                let (q, p) = grid.node(k);
                acc += delta_matrix(q, p, spec.omega(), n) * c(grid.weights[k], 0.0);
            }
            acc
        })
        .collect();
    let q = rows.into_iter().fold(DMatrix::zeros(n, n), |a, b| a + b) / c(2.0 * PI, 0.0);
    let first = sys.heisenberg(&Operator::new(q)?, chain_a[0].t);
    let rest = chain_operator(&chain_a[1..], sys, spec)?;
    let cb = chain_operator(chain_b, sys, spec)?;
    let integral = sys.pair_trace(&(&first * &rest), &cb);
    let reference = sys.pair_trace(&rest, &cb);
    let residual = (integral - reference).norm() / reference.norm().max(f64::MIN_POSITIVE);
    Ok(AdditivityReport { integral, reference, residual })
}
