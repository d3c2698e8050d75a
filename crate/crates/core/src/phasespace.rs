//! Weyl group on a truncated Fock space.
//!
//! A phase-space point `(χ, ξ)` is mapped to the annihilation eigenvalue
//! `α = √(ω/2) χ + i ξ / √(2ω)`, and `U(χ, ξ) = exp(i(ξq̂ − χp̂)) = D(α)` with
//! `q̂ = (a + a†)/√(2ω)`, `p̂ = i√(ω/2)(a† − a)`. The coherent state `U|0⟩` is
//! centred at `q = χ`, `p = ξ`, and the group law reads
//! `U(z₁)U(z₂) = e^{(i/2)(ξ₁χ₂ − ξ₂χ₁)} U(z₁ + z₂)`.
//!
//! Matrix elements of `D(α)` are evaluated exactly (no truncated exponential)
//! and then restricted to the first `ncut` Fock levels.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{c, DensityMatrix, Operator, StateVector, C64};
use crate::histories::{decoherence_functional, HistoryProposition, SystemSpec, TimeGrid};

/// Standard vacuum-overlap coefficient: `W = −κ(ωχ² + ξ²/ω)` with `κ = 1/4`.
pub const STANDARD_W_COEFF: f64 = 0.25;

/// Truncated Fock space with a reference oscillator frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockSpec {
    ncut: usize,
    omega: f64,
}

impl FockSpec {
    pub fn new(ncut: usize, omega: f64) -> Result<Self> {
        if ncut < 2 {
            return Err(Error::Invalid(format!("ncut must be >= 2, got {ncut}")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::Invalid(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { ncut, omega })
    }

    pub fn ncut(&self) -> usize {
        self.ncut
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `|α|²` above which truncation is flagged.
    pub fn warn_threshold(&self) -> f64 {
        self.ncut as f64 / 4.0
    }

    /// `|α|²` above which displacement is refused.
    pub fn hard_threshold(&self) -> f64 {
        self.ncut as f64 / 2.0
    }

    /// Same frequency, doubled truncation.
    pub fn doubled(&self) -> Self {
        Self { ncut: 2 * self.ncut, omega: self.omega }
    }
}

/// Phase-space label `(χ, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhasePoint {
    pub chi: f64,
    pub xi: f64,
}

impl PhasePoint {
    pub fn new(chi: f64, xi: f64) -> Result<Self> {
        if !chi.is_finite() || !xi.is_finite() {
            return Err(Error::NonFinite("phase point"));
        }
        Ok(Self { chi, xi })
    }

    pub const fn origin() -> Self {
        Self { chi: 0.0, xi: 0.0 }
    }

    pub fn alpha(&self, omega: f64) -> C64 {
        c((omega / 2.0).sqrt() * self.chi, self.xi / (2.0 * omega).sqrt())
    }

    pub fn from_alpha(alpha: C64, omega: f64) -> Self {
        Self { chi: alpha.re / (omega / 2.0).sqrt(), xi: alpha.im * (2.0 * omega).sqrt() }
    }

    pub fn add(&self, o: &PhasePoint) -> PhasePoint {
        PhasePoint { chi: self.chi + o.chi, xi: self.xi + o.xi }
    }

    pub fn sub(&self, o: &PhasePoint) -> PhasePoint {
        PhasePoint { chi: self.chi - o.chi, xi: self.xi - o.xi }
    }

    pub fn neg(&self) -> PhasePoint {
        PhasePoint { chi: -self.chi, xi: -self.xi }
    }

    pub fn scale(&self, s: f64) -> PhasePoint {
        PhasePoint { chi: s * self.chi, xi: s * self.xi }
    }

    pub fn norm(&self) -> f64 {
        self.chi.hypot(self.xi)
    }
}

/// Group-law phase `½(ξ₁χ₂ − ξ₂χ₁)`.
pub fn group_phase(z1: &PhasePoint, z2: &PhasePoint) -> f64 {
    0.5 * (z1.xi * z2.chi - z2.xi * z1.chi)
}

/// Annihilation operator on `ncut` levels.
pub fn annihilation(ncut: usize) -> Operator {
    let mut m = DMatrix::zeros(ncut, ncut);
    for n in 1..ncut {
        m[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    Operator::new(m).expect("finite")
}

/// `a†a`.
pub fn number_operator(ncut: usize) -> Operator {
    Operator::real_diagonal(&(0..ncut).map(|n| n as f64).collect::<Vec<_>>())
}

/// `q̂ = (a + a†)/√(2ω)`.
pub fn position_operator(spec: &FockSpec) -> Operator {
    let a = annihilation(spec.ncut);
    (&a + &a.adjoint()).scale(c(1.0 / (2.0 * spec.omega).sqrt(), 0.0))
}

/// `p̂ = i√(ω/2)(a† − a)`.
pub fn momentum_operator(spec: &FockSpec) -> Operator {
    let a = annihilation(spec.ncut);
    (&a.adjoint() - &a).scale(c(0.0, (spec.omega / 2.0).sqrt()))
}

/// Oscillator Hamiltonian `ω a†a` (vacuum energy zero).
pub fn oscillator_hamiltonian(spec: &FockSpec) -> Operator {
    number_operator(spec.ncut).scale(c(spec.omega, 0.0))
}

/// Exact `⟨m|D(α)|n⟩` for `m, n < ncut`.
///
/// For `m = n + k ≥ n`,
/// `D_{mn} = √(n!/m!) αᵏ e^{−|α|²/2} L_n^{(k)}(|α|²)`, with the Laguerre
/// polynomials by forward recurrence in `n`. The upper triangle follows from
/// `D_{nm} = (−1)ᵏ conj(D_{mn})`.
pub fn displacement_matrix(alpha: C64, ncut: usize) -> DMatrix<C64> {
    let mut d = DMatrix::<C64>::zeros(ncut, ncut);
    let x = alpha.norm_sqr();
    let mut ak = c((-0.5 * x).exp(), 0.0);
    for k in 0..ncut {
        if k > 0 {
            ak = ak * alpha / (k as f64).sqrt();
        }
        let kf = k as f64;
        let (mut l_prev, mut l) = (0.0, 1.0);
        let mut pref = 1.0;
        for n in 0..ncut - k {
            if n > 0 {
                let nf = (n - 1) as f64;
                let next = ((2.0 * nf + 1.0 + kf - x) * l - (nf + kf) * l_prev) / (nf + 1.0);
                l_prev = l;
                l = next;
                pref *= (n as f64 / (n as f64 + kf)).sqrt();
            }
            let v = ak * (pref * l);
            d[(n + k, n)] = v;
            if k > 0 {
                d[(n, n + k)] = if k % 2 == 0 { v.conj() } else { -v.conj() };
            }
        }
    }
    d
}

/// `|α|²` of `p` if it exceeds the warning threshold.
pub fn truncation_warning(p: &PhasePoint, spec: &FockSpec) -> Option<f64> {
    let a2 = p.alpha(spec.omega).norm_sqr();
    (a2 > spec.warn_threshold()).then_some(a2)
}

fn check_truncation(p: &PhasePoint, spec: &FockSpec) -> Result<C64> {
    if !p.chi.is_finite() || !p.xi.is_finite() {
        return Err(Error::NonFinite("phase point"));
    }
    let a = p.alpha(spec.omega);
    if a.norm_sqr() > spec.hard_threshold() {
        return Err(Error::Truncation { norm_sq: a.norm_sqr(), limit: spec.hard_threshold() });
    }
    Ok(a)
}

/// `U(χ, ξ)` restricted to the truncated space.
pub fn displacement(p: &PhasePoint, spec: &FockSpec) -> Result<Operator> {
    let a = check_truncation(p, spec)?;
    Operator::new(displacement_matrix(a, spec.ncut))
}

/// `|χ, ξ⟩ = U(χ, ξ)|0⟩`, truncated (not renormalized).
pub fn coherent_state(p: &PhasePoint, spec: &FockSpec) -> Result<StateVector> {
    let a = check_truncation(p, spec)?;
    let mut v = Vec::with_capacity(spec.ncut);
    let mut amp = c((-0.5 * a.norm_sqr()).exp(), 0.0);
    for n in 0..spec.ncut {
        if n > 0 {
            amp = amp * a / (n as f64).sqrt();
        }
        v.push(amp);
    }
    StateVector::new(v)
}

/// Truncated coherent state scaled to unit norm.
pub fn normalized_coherent_state(p: &PhasePoint, spec: &FockSpec) -> Result<StateVector> {
    coherent_state(p, spec)?.normalized()
}

/// `K = ⟨0|U(χ, ξ)|0⟩` and its principal logarithm `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub k: C64,
    pub w: C64,
}

pub fn expectation_functional(p: &PhasePoint, spec: &FockSpec) -> Result<Expectation> {
    let d = displacement(p, spec)?;
    let k = d.get(0, 0);
    if k.norm() == 0.0 {
        return Err(Error::ZeroOverlap(0.0));
    }
    Ok(Expectation { k, w: k.ln() })
}

/// `W(χ, ξ) = −κ(ωχ² + ξ²/ω)`.
pub fn gaussian_w(p: &PhasePoint, omega: f64, kappa: f64) -> f64 {
    -kappa * (omega * p.chi * p.chi + p.xi * p.xi / omega)
}

/// Least-squares `κ` with `Re W ≈ −κ(ωχ² + ξ²/ω)` over `points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WCalibration {
    pub kappa: f64,
    pub max_residual: f64,
}

pub fn calibrate_w(points: &[PhasePoint], spec: &FockSpec) -> Result<WCalibration> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let w = expectation_functional(p, spec)?.w.re;
        let x = -(spec.omega * p.chi * p.chi + p.xi * p.xi / spec.omega);
        num += x * w;
        den += x * x;
        rows.push((x, w));
    }
    if den == 0.0 {
        return Err(Error::Invalid("calibration needs a point away from the origin".into()));
    }
    let kappa = num / den;
    let max_residual = rows.iter().map(|(x, w)| (w - kappa * x).abs()).fold(0.0, f64::max);
    Ok(WCalibration { kappa, max_residual })
}

/// Overlap `⟨z′|z⟩` from truncated coherent states.
pub fn overlap(zp: &PhasePoint, z: &PhasePoint, spec: &FockSpec) -> Result<C64> {
    Ok(coherent_state(zp, spec)?.inner(&coherent_state(z, spec)?))
}

/// Closed-form overlap `e^{(i/2)(ξχ′ − χξ′)} e^{W(z − z′)}` of the untruncated space.
pub fn overlap_kernel(zp: &PhasePoint, z: &PhasePoint, omega: f64) -> C64 {
    let phase = 0.5 * (z.xi * zp.chi - z.chi * zp.xi);
    (c(gaussian_w(&z.sub(zp), omega, STANDARD_W_COEFF), phase)).exp()
}

/// `log⟨z′|z⟩` in closed form.
pub fn log_overlap_kernel(zp: &PhasePoint, z: &PhasePoint, omega: f64) -> C64 {
    c(gaussian_w(&z.sub(zp), omega, STANDARD_W_COEFF), 0.5 * (z.xi * zp.chi - z.chi * zp.xi))
}

/// A phase-space path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePath {
    grid: TimeGrid,
    points: Vec<PhasePoint>,
}

impl PhasePath {
    pub fn new(grid: TimeGrid, points: Vec<PhasePoint>) -> Result<Self> {
        if grid.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: points.len() });
        }
        if points.iter().any(|p| !p.chi.is_finite() || !p.xi.is_finite()) {
            return Err(Error::NonFinite("phase path"));
        }
        Ok(Self { grid, points })
    }

    /// `n + 1` uniform samples of `f` on `[t0, t1]`.
    pub fn sample<F>(t0: f64, t1: f64, n: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> PhasePoint,
    {
        if n == 0 || t1 <= t0 {
            return Err(Error::InvalidGrid("path needs n >= 1 steps on t1 > t0".into()));
        }
        let grid = TimeGrid::uniform(t0, (t1 - t0) / n as f64, n + 1)?;
        let points = grid.times().iter().map(|&t| f(t)).collect();
        Self::new(grid, points)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn points(&self) -> &[PhasePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `Σ_t |z_t|`.
    pub fn path_norm(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).sum()
    }

    /// `max |z_{i+1} − z_i| / Δt`.
    pub fn lipschitz_constant(&self) -> f64 {
        let t = self.grid.times();
        self.points
            .windows(2)
            .zip(t.windows(2))
            .map(|(p, s)| p[1].sub(&p[0]).norm() / (s[1] - s[0]))
            .fold(0.0, f64::max)
    }

    /// Grid concatenation; the other path must start after this one ends.
    pub fn concat(&self, other: &PhasePath) -> Result<PhasePath> {
        let mut t = self.grid.times().to_vec();
        t.extend_from_slice(other.grid.times());
        let mut p = self.points.clone();
        p.extend_from_slice(&other.points);
        PhasePath::new(TimeGrid::new(t)?, p)
    }

    /// Point-wise shifted path.
    pub fn displaced(&self, f: impl Fn(f64) -> PhasePoint) -> PhasePath {
        let points = self
            .grid
            .times()
            .iter()
            .zip(&self.points)
            .map(|(&t, p)| p.add(&f(t)))
            .collect();
        PhasePath { grid: self.grid.clone(), points }
    }
}

/// `exp(Σ_t log⟨z′_t|z_t⟩)` with `z = za`, `z′ = zb`.
pub fn history_overlap(za: &PhasePath, zb: &PhasePath, spec: &FockSpec, tol: f64) -> Result<C64> {
    if za.grid != zb.grid {
        return Err(Error::GridMismatch);
    }
    let mut acc = c(0.0, 0.0);
    for (a, b) in za.points.iter().zip(&zb.points) {
        let o = overlap(b, a, spec)?;
        if o.norm() <= tol {
            return Err(Error::ZeroOverlap(o.norm()));
        }
        acc += o.ln();
    }
    Ok(acc.exp())
}

/// `‖|za(·)⟩ − |zb(·)⟩‖² = ‖za‖² + ‖zb‖² − 2 Re⟨zb|za⟩` on the history space.
pub fn history_distance_sq(za: &PhasePath, zb: &PhasePath, spec: &FockSpec) -> Result<f64> {
    let nrm = |z: &PhasePath| -> Result<f64> {
        z.points.iter().map(|p| Ok(coherent_state(p, spec)?.norm().powi(2))).product()
    };
    let o = history_overlap(za, zb, spec, 0.0)?;
    Ok(nrm(za)? + nrm(zb)? - 2.0 * o.re)
}

/// Harmonic system `H = ω a†a` with the initial coherent state at `z0`.
pub fn oscillator_system(spec: &FockSpec, z0: &PhasePoint) -> Result<SystemSpec> {
    let psi = normalized_coherent_state(z0, spec)?;
    SystemSpec::new(oscillator_hamiltonian(spec), DensityMatrix::pure(&psi)?, 1e-9)
}

/// Rank-one history of normalized coherent projectors along a path.
pub fn coherent_history(z: &PhasePath, spec: &FockSpec) -> Result<HistoryProposition> {
    let ps = z
        .points
        .iter()
        .map(|p| Ok(normalized_coherent_state(p, spec)?.projector()))
        .collect::<Result<Vec<_>>>()?;
    HistoryProposition::new(z.grid.clone(), ps, 1e-8)
}

/// Classical energy `⟨z|ω a†a|z⟩ = (ω²χ² + ξ²)/2`.
pub fn classical_energy(p: &PhasePoint, omega: f64) -> f64 {
    0.5 * (omega * omega * p.chi * p.chi + p.xi * p.xi)
}

/// Discretized `iS[z] = Σ_k [log⟨z_k|z_{k−1}⟩ − iΔt_k h̄_k]` for `H = ω a†a`,
/// with closed-form overlaps and `h̄_k` the trapezoid average of the classical
/// energy over the step.
pub fn classical_action(z: &PhasePath, omega: f64) -> C64 {
    let t = z.grid.times();
    let mut acc = c(0.0, 0.0);
    for k in 1..z.points.len() {
        let (p, q) = (&z.points[k], &z.points[k - 1]);
        let h = 0.5 * (classical_energy(p, omega) + classical_energy(q, omega));
        acc += log_overlap_kernel(p, q, omega) - c(0.0, (t[k] - t[k - 1]) * h);
    }
    acc
}

/// Operator-side and action-side coherent-history decoherence functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentComparison {
    pub operator: C64,
    pub action: C64,
    /// `|log|d_op| − log|d_act||`
    pub modulus_discrepancy: f64,
    /// `|arg(d_op / d_act)|`
    pub phase_discrepancy: f64,
    /// `|⟨zb(t_f)|za(t_f)⟩|`, the end-point factor
    pub end_overlap: f64,
}

/// `d(za, zb)` for rank-one coherent histories under `H = ω a†a` with initial
/// coherent state at `z0`, both from the class operators and from
/// `⟨za₀|ρ₀|zb₀⟩ ⟨zb_f|za_f⟩ e^{iS[za] − iS*[zb]}`.
///
/// Both paths must start within `boundary_tol` of `z0`.
pub fn coherent_history_decoherence(
    za: &PhasePath,
    zb: &PhasePath,
    spec: &FockSpec,
    z0: &PhasePoint,
    boundary_tol: f64,
) -> Result<CoherentComparison> {
    if za.grid != zb.grid {
        return Err(Error::GridMismatch);
    }
    for z in [za, zb] {
        let off = z.points[0].sub(z0).norm();
        if off > boundary_tol {
            return Err(Error::Boundary(off));
        }
    }
    let sys = oscillator_system(spec, z0)?;
    let operator =
        decoherence_functional(&coherent_history(za, spec)?, &coherent_history(zb, spec)?, &sys)?;

    let w = spec.omega;
    let t0 = za.grid.times()[0];
    // ρ₀ evolved to the first time is the coherent state at z0 e^{−iωt₀}
    let z0t = PhasePoint::from_alpha(z0.alpha(w) * C64::from_polar(1.0, -w * t0), w);
    let (a0, b0) = (&za.points[0], &zb.points[0]);
    let (af, bf) = (&za.points[za.len() - 1], &zb.points[zb.len() - 1]);
    let log_boundary = log_overlap_kernel(a0, &z0t, w)
        + log_overlap_kernel(&z0t, b0, w)
        + log_overlap_kernel(bf, af, w);
    let exponent = log_boundary + classical_action(za, w) + classical_action(zb, w).conj();
    let action = exponent.exp();

    let ratio_log = operator.ln() - exponent;
    Ok(CoherentComparison {
        operator,
        action,
        modulus_discrepancy: ratio_log.re.abs(),
        phase_discrepancy: crate::geomphase::wrap_phase(ratio_log.im).abs(),
        end_overlap: overlap_kernel(bf, af, w).norm(),
    })
}

/// Trapezoid approximation of `∫ dχ dξ/(2π) |z⟩⟨z|` over `[−R, R]²`.
pub fn resolution_of_identity(spec: &FockSpec, radius: f64, nodes: usize) -> Result<Operator> {
    if nodes < 2 {
        return Err(Error::InvalidGrid("quadrature needs at least two nodes per axis".into()));
    }
    let h = 2.0 * radius / (nodes - 1) as f64;
    let n = spec.ncut;
    let mut acc = DMatrix::<C64>::zeros(n, n);
    for i in 0..nodes {
        for j in 0..nodes {
            let wi = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            let wj = if j == 0 || j == nodes - 1 { 0.5 } else { 1.0 };
            let p = PhasePoint { chi: -radius + h * i as f64, xi: -radius + h * j as f64 };
            let a = p.alpha(spec.omega);
            let mut v = DVector::<C64>::zeros(n);
            let mut amp = c((-0.5 * a.norm_sqr()).exp(), 0.0);
            for k in 0..n {
                if k > 0 {
                    amp = amp * a / (k as f64).sqrt();
                }
                v[k] = amp;
            }
            acc += (&v * v.adjoint()) * c(wi * wj * h * h / (2.0 * PI), 0.0);
        }
    }
    Operator::new(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{exp_general, ONE};
    use approx::assert_abs_diff_eq;

    fn spec(n: usize) -> FockSpec {
        FockSpec::new(n, 1.0).unwrap()
    }

    fn pt(chi: f64, xi: f64) -> PhasePoint {
        PhasePoint::new(chi, xi).unwrap()
    }

    #[test]
    fn displacement_matches_padded_exponential() {
        // oracle: exp(αa† − α*a) on a much larger space, restricted
        let big = 80;
        let a = annihilation(big);
        for &(chi, xi) in &[(0.3, -0.2), (1.1, 0.7), (-1.5, 2.0)] {
            let p = pt(chi, xi);
            let al = p.alpha(1.0);
            let gen = &a.adjoint().scale(al) - &a.scale(al.conj());
            let e = exp_general(&gen);
            let d = displacement_matrix(al, 20);
            for m in 0..20 {
                for n in 0..20 {
                    assert!((d[(m, n)] - e.get(m, n)).norm() < 1e-12, "({m},{n}) at {p:?}");
                }
            }
        }
    }

    #[test]
    fn displacement_is_generated_by_q_and_p() {
        let s = FockSpec::new(70, 1.7).unwrap();
        let p = pt(0.4, -0.9);
        let gen = &position_operator(&s).scale(c(0.0, p.xi)) - &momentum_operator(&s).scale(c(0.0, p.chi));
        let e = exp_general(&gen);
        let d = displacement(&p, &s).unwrap();
        for m in 0..15 {
            for n in 0..15 {
                assert!((d.get(m, n) - e.get(m, n)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn displacement_identity_and_unitarity() {
        let s = spec(30);
        assert_eq!(displacement(&PhasePoint::origin(), &s).unwrap(), Operator::identity(30));
        let d = displacement(&pt(0.8, 0.5), &s).unwrap();
        // unitary on the low-lying block
        let prod = &d.adjoint() * &d;
        for m in 0..10 {
            for n in 0..10 {
                let expect = if m == n { ONE } else { c(0.0, 0.0) };
                assert!((prod.get(m, n) - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn group_law_phase() {
        let s = spec(60);
        let z1 = pt(0.7, -0.4);
        let z2 = pt(-0.3, 0.9);
        let lhs = &displacement(&z1, &s).unwrap() * &displacement(&z2, &s).unwrap();
        let rhs = displacement(&z1.add(&z2), &s)
            .unwrap()
            .scale(C64::from_polar(1.0, group_phase(&z1, &z2)));
        for m in 0..20 {
            for n in 0..20 {
                assert!((lhs.get(m, n) - rhs.get(m, n)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn coherent_state_basics() {
        let s = spec(40);
        let v = coherent_state(&PhasePoint::origin(), &s).unwrap();
        assert_eq!(v.inner(&crate::hilbert::StateVector::basis(40, 0)), ONE);
        assert!(coherent_state(&pt(1.2, -0.8), &s).unwrap().is_normalized(1e-12));
        // mean position and momentum recover the label
        let z = pt(1.3, -0.6);
        let psi = coherent_state(&z, &s).unwrap();
        assert_abs_diff_eq!(position_operator(&s).sandwich(&psi, &psi).re, z.chi, epsilon = 1e-10);
        assert_abs_diff_eq!(momentum_operator(&s).sandwich(&psi, &psi).re, z.xi, epsilon = 1e-10);
    }

    #[test]
    fn overlap_kernel_factorization() {
        let s = spec(60);
        let z = pt(0.9, 0.3);
        let zp = pt(-0.2, 1.1);
        let num = overlap(&zp, &z, &s).unwrap();
        let k = expectation_functional(&z.sub(&zp), &s).unwrap().k;
        let phase = C64::from_polar(1.0, 0.5 * (z.xi * zp.chi - z.chi * zp.xi));
        assert!((num - phase * k).norm() < 1e-12);
        assert!((num - overlap_kernel(&zp, &z, 1.0)).norm() < 1e-12);
        // Hermiticity of the kernel and the bound |⟨z′|z⟩| ≤ 1
        assert!((num - overlap(&z, &zp, &s).unwrap().conj()).norm() < 1e-15);
        assert!(num.norm() < 1.0);
    }

    #[test]
    fn shift_representation() {
        // U(z′)|z⟩ = e^{i φ(z′, z)} |z + z′⟩
        let s = spec(60);
        let (zp, z) = (pt(0.4, -0.5), pt(-0.7, 0.2));
        let lhs = displacement(&zp, &s).unwrap().apply(&coherent_state(&z, &s).unwrap());
        let rhs = coherent_state(&zp.add(&z), &s)
            .unwrap()
            .scale(C64::from_polar(1.0, group_phase(&zp, &z)));
        for w in [pt(0.0, 0.0), pt(1.0, -1.0), pt(-0.3, 0.8)] {
            let cw = coherent_state(&w, &s).unwrap();
            assert!((cw.inner(&lhs) - cw.inner(&rhs)).norm() < 1e-10);
        }
    }

    #[test]
    fn expectation_functional_shape() {
        let s = spec(60);
        assert_eq!(expectation_functional(&PhasePoint::origin(), &s).unwrap().w.norm(), 0.0);
        let mut prev = 0.0;
        for k in 1..6 {
            let w = expectation_functional(&pt(0.3 * k as f64, 0.0), &s).unwrap().w.re;
            assert!(w < prev);
            prev = w;
        }
        let ratios: Vec<f64> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&x| expectation_functional(&pt(x, 0.0), &s).unwrap().w.re / (x * x))
            .collect();
        assert!((ratios[0] - ratios[2]).abs() < 1e-12);
        let cal = calibrate_w(&[pt(0.5, 0.0), pt(0.0, 0.7), pt(1.0, -1.0)], &FockSpec::new(60, 2.0).unwrap())
            .unwrap();
        assert_abs_diff_eq!(cal.kappa, STANDARD_W_COEFF, epsilon = 1e-12);
    }

    #[test]
    fn truncation_thresholds() {
        let s = spec(20);
        assert!(truncation_warning(&pt(1.0, 0.0), &s).is_none());
        assert!(truncation_warning(&pt(3.5, 0.0), &s).is_some());
        assert!(matches!(displacement(&pt(5.0, 0.0), &s), Err(Error::Truncation { .. })));
    }

    #[test]
    fn history_overlap_products() {
        let s = spec(40);
        let g = TimeGrid::uniform(0.0, 0.1, 6).unwrap();
        let za = PhasePath::new(g.clone(), vec![pt(0.3, 0.2); 6]).unwrap();
        let zb = PhasePath::new(g.clone(), vec![pt(-0.1, 0.4); 6]).unwrap();
        let single = overlap(&pt(-0.1, 0.4), &pt(0.3, 0.2), &s).unwrap();
        let h = history_overlap(&za, &zb, &s, 1e-12).unwrap();
        assert!((h - single.powi(6)).norm() < 1e-14);
        let same = history_overlap(&za, &za, &s, 1e-12).unwrap();
        assert!(same.im.abs() < 1e-15 && same.re > 0.0 && same.re <= 1.0 + 1e-12);

        // multiplicative under concatenation
        let g2 = TimeGrid::uniform(1.0, 0.1, 3).unwrap();
        let ta = PhasePath::new(g2.clone(), vec![pt(0.5, 0.0), pt(0.4, 0.1), pt(0.3, 0.2)]).unwrap();
        let tb = PhasePath::new(g2, vec![pt(0.4, 0.0), pt(0.4, 0.2), pt(0.1, 0.2)]).unwrap();
        let joined = history_overlap(&za.concat(&ta).unwrap(), &zb.concat(&tb).unwrap(), &s, 1e-12).unwrap();
        let parts = h * history_overlap(&ta, &tb, &s, 1e-12).unwrap();
        assert!((joined - parts).norm() < 1e-14);
    }

    #[test]
    fn history_distance_scales_quadratically() {
        let s = spec(40);
        let base = PhasePath::sample(0.0, 1.0, 10, |t| pt(t.sin(), t.cos() - 1.0)).unwrap();
        let ds: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&d| {
                let moved = base.displaced(|t| pt(d * (1.0 + t), -d));
                history_distance_sq(&base, &moved, &s).unwrap()
            })
            .collect();
        let slope = |a: f64, b: f64| (a / b).log10();
        assert!((slope(ds[0], ds[1]) - 2.0).abs() < 0.05);
        assert!((slope(ds[1], ds[2]) - 2.0).abs() < 0.05);
    }

    #[test]
    fn coherent_action_static_constant_path() {
        // H = 0 limit is reached with ω → small; use a constant pair at z0 with ω fixed:
        // the constant path at the vacuum is stationary for any ω
        let s = spec(30);
        let g = TimeGrid::uniform(0.0, 0.25, 9).unwrap();
        let z = PhasePath::new(g, vec![PhasePoint::origin(); 9]).unwrap();
        let r = coherent_history_decoherence(&z, &z, &s, &PhasePoint::origin(), 1e-9).unwrap();
        assert!(r.phase_discrepancy < 1e-12 && r.modulus_discrepancy < 1e-12);
        assert!((r.operator - ONE).norm() < 1e-12);
    }

    #[test]
    fn classical_path_dominates() {
        // z(t) = z0 e^{−iωt} solves χ̇ = ξ, ξ̇ = −χ at ω = 1
        let s = spec(40);
        let z0 = pt(1.0, 0.5);
        let classical = PhasePath::sample(0.0, 2.0, 32, |t| {
            PhasePoint::from_alpha(z0.alpha(1.0) * C64::from_polar(1.0, -t), 1.0)
        })
        .unwrap();
        let displaced = classical.displaced(|t| pt(0.4 * (PI * t / 2.0).sin(), 0.0));
        let dc = coherent_history_decoherence(&classical, &classical, &s, &z0, 1e-9).unwrap();
        let dd = coherent_history_decoherence(&displaced, &displaced, &s, &z0, 1e-9).unwrap();
        assert!(dc.operator.norm() > dd.operator.norm());
        assert!(dc.operator.norm() > 0.99);
    }

    #[test]
    fn boundary_condition_enforced() {
        let s = spec(30);
        let z = PhasePath::sample(0.0, 1.0, 4, |_| pt(1.0, 0.0)).unwrap();
        assert!(matches!(
            coherent_history_decoherence(&z, &z, &s, &PhasePoint::origin(), 1e-3),
            Err(Error::Boundary(_))
        ));
    }

    #[test]
    fn resolution_of_identity_low_levels() {
        let s = spec(60);
        let r = (2.0 * 60.0f64).sqrt() / 2.0;
        let id = resolution_of_identity(&s, r, 81).unwrap();
        for m in 0..4 {
            for n in 0..4 {
                let expect = if m == n { 1.0 } else { 0.0 };
                assert!((id.get(m, n) - c(expect, 0.0)).norm() < 1e-3, "({m},{n}) {}", id.get(m, n));
            }
        }
    }
}
