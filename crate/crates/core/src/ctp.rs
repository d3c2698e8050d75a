//! Closed-time-path generating functionals at discrete times.
//!
//! `Z[J₊, J₋] = Tr(R[e^{iJ₊a}] ρ₀ T[e^{−iJ₋a}])`, where `T` multiplies the
//! Heisenberg-picture factors earliest-first and `R` latest-first. This is the
//! bilinear decoherence functional of the two history operators. The `(r, s)`
//! correlators
//! `G = (−i)^r i^s ∂^r_{J₊} ∂^s_{J₋} Z |₀ = Tr(ρ₀ T[a(t′₁)⋯a(t′_s)] R[a(t₁)⋯a(t_r)])`
//! are evaluated both as operator chains and by finite differences of `Z`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{c, Operator, C64};
use crate::histories::{SystemSpec, TimeGrid};
use crate::phasespace::{displacement, FockSpec, PhasePath};

/// Base finite-difference step for a first derivative.
pub const FD_STEP: f64 = 1e-3;

/// Largest tolerated finite-difference vs operator-chain discrepancy.
pub const RESIDUAL_THRESHOLD: f64 = 1e-5;

/// Largest `r + s` handled.
pub const MAX_ORDER: usize = 4;

/// One branch of smearing values on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmearingVector {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SmearingVector {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("smearing"));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: TimeGrid) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Heisenberg `a(t)` factors in spectral form, shared by all `Z` evaluations.
struct Smearable {
    eig: Vec<f64>,
    frames: Vec<Operator>,
}

impl Smearable {
    fn new(a: &Operator, times: &[f64], sys: &SystemSpec) -> Result<Self> {
        let (eig, vecs) = a.eigh(1e-9)?;
        let v = Operator::new(vecs)?;
        let frames = times.iter().map(|&t| &sys.evolution(t).adjoint() * &v).collect();
        Ok(Self { eig, frames })
    }

    /// `e^{i s a(t_k)}`.
    fn exp(&self, k: usize, s: f64) -> Operator {
        let d: Vec<C64> = self.eig.iter().map(|&l| C64::from_polar(1.0, s * l)).collect();
        let w = &self.frames[k];
        &(w * &Operator::diagonal(&d)) * &w.adjoint()
    }

    fn z(&self, jp: &[f64], jm: &[f64], sys: &SystemSpec) -> C64 {
        let n = sys.dim();
        let mut left = Operator::identity(n);
        let mut right = Operator::identity(n);
        for k in 0..jp.len() {
            if jp[k] != 0.0 {
                left = &self.exp(k, jp[k]) * &left;
            }
            if jm[k] != 0.0 {
                right = &right * &self.exp(k, -jm[k]);
            }
        }
        trace_with_rho(&left, &right, sys)
    }
}

fn trace_with_rho(left: &Operator, right: &Operator, sys: &SystemSpec) -> C64 {
    // Tr(L ρ₀ R ρ_f), written via the pair trace Tr(X† ρ₀ Y ρ_f)
    sys.pair_trace(&left.adjoint(), right)
}

fn check_system(a: &Operator, sys: &SystemSpec) -> Result<()> {
    if a.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: a.dim() });
    }
    if !a.is_hermitian(1e-9) {
        return Err(Error::NotHermitian(a.hermitian_deviation()));
    }
    Ok(())
}

/// `Z[J₊, J₋]` for a Hermitian observable.
pub fn ctp_generating_functional(
    a: &Operator,
    jp: &SmearingVector,
    jm: &SmearingVector,
    sys: &SystemSpec,
) -> Result<C64> {
    if jp.grid != jm.grid {
        return Err(Error::GridMismatch);
    }
    check_system(a, sys)?;
    let s = Smearable::new(a, jp.grid.times(), sys)?;
    Ok(s.z(&jp.values, &jm.values, sys))
}

/// `(r, s)` request: `plus` holds the `r` time-ordered insertion times,
/// `minus` the `s` anti-time-ordered ones. Times may repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorRequest {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl CorrelatorRequest {
    pub fn new(plus: Vec<f64>, minus: Vec<f64>) -> Result<Self> {
        let order = plus.len() + minus.len();
        if order == 0 {
            return Err(Error::Invalid("correlator needs r + s >= 1".into()));
        }
        if order > MAX_ORDER {
            return Err(Error::Invalid(format!("r + s = {order} exceeds {MAX_ORDER}")));
        }
        if plus.iter().chain(&minus).any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("insertion time"));
        }
        Ok(Self { plus, minus })
    }

    pub fn r(&self) -> usize {
        self.plus.len()
    }

    pub fn s(&self) -> usize {
        self.minus.len()
    }

    pub fn order(&self) -> usize {
        self.r() + self.s()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correlator {
    pub request: CorrelatorRequest,
    /// Operator-chain value.
    pub value: C64,
    /// Richardson-refined finite-difference value.
    pub finite_difference: C64,
    pub residual: f64,
    pub step: f64,
}

/// Step used for an `order`-th mixed derivative: `h₁ · 10^{(order−1)/2}`.
pub fn fd_step(order: usize) -> f64 {
    FD_STEP * 10f64.powf((order as f64 - 1.0) / 2.0)
}

/// Time-ordered chain value: `Tr(ρ₀ T[a(t′)…] R[a(t)…])`.
pub fn chain_correlator(a: &Operator, req: &CorrelatorRequest, sys: &SystemSpec) -> Result<C64> {
    check_system(a, sys)?;
    let heis = |t: f64| sys.heisenberg(a, t);
    let mut plus = req.plus.clone();
    let mut minus = req.minus.clone();
    plus.sort_by(|x, y| x.total_cmp(y));
    minus.sort_by(|x, y| x.total_cmp(y));
    let n = sys.dim();
    let mut left = Operator::identity(n);
    for &t in &plus {
        left = &heis(t) * &left;
    }
    let mut right = Operator::identity(n);
    for &t in &minus {
        right = &right * &heis(t);
    }
    Ok(trace_with_rho(&left, &right, sys))
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Mixed central difference of `Z` with step `h`; `vars` lists
/// `(branch, grid index, multiplicity)`.
fn central_difference(
    s: &Smearable,
    vars: &[(bool, usize, usize)],
    len: usize,
    h: f64,
    sys: &SystemSpec,
) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    let mut idx = vec![0usize; vars.len()];
    loop {
        let mut jp = vec![0.0; len];
        let mut jm = vec![0.0; len];
        let mut w = 1.0;
        for (v, &(plus, k, m)) in vars.iter().enumerate() {
            let j = idx[v];
            let x = (m as f64 / 2.0 - j as f64) * h;
            if plus {
                jp[k] += x;
            } else {
                jm[k] += x;
            }
            w *= if j % 2 == 0 { 1.0 } else { -1.0 } * binom(m, j);
        }
        total += s.z(&jp, &jm, sys) * w;
        let mut v = 0;
        loop {
            if v == vars.len() {
                let order: usize = vars.iter().map(|x| x.2).sum();
                return total / h.powi(order as i32);
            }
            idx[v] += 1;
            if idx[v] <= vars[v].2 {
                break;
            }
            idx[v] = 0;
            v += 1;
        }
    }
}

/// Finite-difference value of `G^{(r,s)}` with one Richardson halving.
pub fn fd_correlator(
    a: &Operator,
    grid: &TimeGrid,
    req: &CorrelatorRequest,
    sys: &SystemSpec,
) -> Result<(C64, f64)> {
    check_system(a, sys)?;
    let locate = |t: f64| {
        grid.position(t)
            .ok_or_else(|| Error::InvalidGrid(format!("insertion time {t} is not on the grid")))
    };
    let mut vars: Vec<(bool, usize, usize)> = Vec::new();
    for (plus, ts) in [(true, &req.plus), (false, &req.minus)] {
        for &t in ts {
            let k = locate(t)?;
            match vars.iter_mut().find(|v| v.0 == plus && v.1 == k) {
                Some(v) => v.2 += 1,
                None => vars.push((plus, k, 1)),
            }
        }
    }
    let s = Smearable::new(a, grid.times(), sys)?;
    let h = fd_step(req.order());
    let d1 = central_difference(&s, &vars, grid.len(), h, sys);
    let d2 = central_difference(&s, &vars, grid.len(), h / 2.0, sys);
    let d = (d2 * 4.0 - d1) / 3.0;
    let pre = c(0.0, -1.0).powi(req.r() as i32) * c(0.0, 1.0).powi(req.s() as i32);
    Ok((pre * d, h))
}

/// `G^{(r,s)}` by operator chains, cross-checked by finite differences.
pub fn correlator(
    a: &Operator,
    grid: &TimeGrid,
    req: &CorrelatorRequest,
    sys: &SystemSpec,
) -> Result<Correlator> {
    let value = chain_correlator(a, req, sys)?;
    let (fd, step) = fd_correlator(a, grid, req, sys)?;
    let residual = (fd - value).norm();
    if residual > RESIDUAL_THRESHOLD {
        return Err(Error::Residual { residual, threshold: RESIDUAL_THRESHOLD });
    }
    Ok(Correlator { request: req.clone(), value, finite_difference: fd, residual, step })
}

pub fn correlator_batch(
    a: &Operator,
    grid: &TimeGrid,
    reqs: &[CorrelatorRequest],
    sys: &SystemSpec,
) -> Result<Vec<Correlator>> {
    reqs.par_iter().map(|r| correlator(a, grid, r, sys)).collect()
}

/// Tabular export: `r,s,plus,minus,re,im,residual` with times joined by `;`.
pub fn correlator_csv(rows: &[Correlator]) -> String {
    let join = |ts: &[f64]| ts.iter().map(|t| format!("{t}")).collect::<Vec<_>>().join(";");
    let mut out = String::from("r,s,plus_times,minus_times,re,im,residual\n");
    for g in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.12e},{:.12e},{:.3e}",
            g.request.r(),
            g.request.s(),
            join(&g.request.plus),
            join(&g.request.minus),
            g.value.re,
            g.value.im,
            g.residual
        );
    }
    out
}

/// `d(U(z₊), U†(z₋))` for per-time displacement chains along two paths.
pub fn phase_space_ctp(zp: &PhasePath, zm: &PhasePath, sys: &SystemSpec, spec: &FockSpec) -> Result<C64> {
    if zp.grid() != zm.grid() {
        return Err(Error::GridMismatch);
    }
    if sys.dim() != spec.ncut() {
        return Err(Error::DimensionMismatch { expected: spec.ncut(), got: sys.dim() });
    }
    let n = spec.ncut();
    let mut left = Operator::identity(n);
    let mut right = Operator::identity(n);
    for (k, &t) in zp.grid().times().iter().enumerate() {
        let up = sys.heisenberg(&displacement(&zp.points()[k], spec)?, t);
        let um = sys.heisenberg(&displacement(&zm.points()[k], spec)?, t);
        left = &up * &left;
        right = &right * &um.adjoint();
    }
    Ok(trace_with_rho(&left, &right, sys))
}
