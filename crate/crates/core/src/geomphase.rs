//! Fubini–Study geometry of discrete state paths: metric and connection
//! increments, Pancharatnam chains, Berry phases, and the action-phase form
//! of the decoherence functional for rank-one histories.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::hilbert::{c, DensityMatrix, StateVector, C64, DEFAULT_TOL};
use crate::histories::{HistoryProposition, SystemSpec, TimeGrid};

/// Reduce an angle to `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// A sequence of normalized states on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    grid: TimeGrid,
    states: Vec<StateVector>,
}

impl StatePath {
    pub fn new(grid: TimeGrid, states: Vec<StateVector>, tol: f64) -> Result<Self> {
        if states.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: states.len() });
        }
        let dim = states[0].dim();
        for s in &states {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.dim() });
            }
            if !s.is_normalized(tol) {
                return Err(Error::Invalid(format!("path state has norm {}", s.norm())));
            }
        }
        for w in states.windows(2) {
            let o = w[0].inner(&w[1]).norm();
            if o <= tol {
                return Err(Error::ZeroOverlap(o));
            }
        }
        Ok(Self { grid, states })
    }

    /// Path on the uniform grid `0, 1/(n−1), …, 1` through `f(s)`, `s ∈ [0, 1]`.
    pub fn sample<F>(n: usize, f: F, tol: f64) -> Result<Self>
    where
        F: Fn(f64) -> StateVector,
    {
        if n < 2 {
            return Err(Error::InvalidGrid("a path needs at least two points".into()));
        }
        let grid = TimeGrid::uniform(0.0, 1.0 / (n - 1) as f64, n)?;
        let states = grid.times().iter().map(|&s| f(s)).collect();
        Self::new(grid, states, tol)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn first(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn last(&self) -> &StateVector {
        &self.states[self.states.len() - 1]
    }

    /// Each state multiplied by `e^{iφ_k}`.
    pub fn regauged(&self, phases: &[f64]) -> Result<Self> {
        if phases.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: phases.len() });
        }
        let states =
            self.states.iter().zip(phases).map(|(s, &p)| s.scale(C64::from_polar(1.0, p))).collect();
        Ok(Self { grid: self.grid.clone(), states })
    }

    /// The path followed by its reverse, on a doubled uniform grid.
    pub fn retraced(&self) -> Result<Self> {
        let mut states = self.states.clone();
        states.extend(self.states.iter().rev().skip(1).cloned());
        let n = states.len();
        let grid = TimeGrid::uniform(0.0, 1.0 / (n - 1) as f64, n)?;
        Ok(Self { grid, states })
    }

    /// Rank-one history `(|ψ₁⟩⟨ψ₁|, …, |ψₙ⟩⟨ψₙ|)` on the path grid.
    pub fn history(&self) -> Result<HistoryProposition> {
        HistoryProposition::new(
            self.grid.clone(),
            self.states.iter().map(|s| s.projector()).collect(),
            DEFAULT_TOL.max(1e-8),
        )
    }
}

/// Fubini–Study increment between neighbouring unit vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsIncrement {
    pub ds2: f64,
    pub connection_phase: f64,
}

/// `ds² = ‖v − u‖² − |⟨u|v − u⟩|²` and connection phase `−arg⟨u|v⟩`.
pub fn fs_increment(u: &StateVector, v: &StateVector, tol: f64) -> Result<FsIncrement> {
    if !u.is_normalized(tol) || !v.is_normalized(tol) {
        return Err(Error::Invalid("fs_increment needs unit vectors".into()));
    }
    let o = u.inner(v);
    if o.norm() <= tol {
        return Err(Error::ZeroOverlap(o.norm()));
    }
    let d = v.sub(u);
    let ds2 = d.norm().powi(2) - u.inner(&d).norm_sqr();
    Ok(FsIncrement { ds2, connection_phase: -o.arg() })
}

/// Factors of the chain: `⟨ψ_i|ψ_{i−1}⟩` for `i = 1..n`, then the closing
/// `⟨ψ₀|ψₙ⟩` when `close` is set.
fn chain_factors(path: &StatePath, close: bool) -> Vec<C64> {
    let s = path.states();
    let mut out: Vec<C64> = s.windows(2).map(|w| w[1].inner(&w[0])).collect();
    if close {
        out.push(path.first().inner(path.last()));
    }
    out
}

/// `⟨ψ₀|ψₙ⟩ ∏ᵢ ⟨ψᵢ|ψ_{i−1}⟩`; without the closing overlap when `close` is false.
pub fn pancharatnam_product(path: &StatePath, close: bool) -> Result<C64> {
    let f = chain_factors(path, close);
    if close {
        let closing = f[f.len() - 1].norm();
        if closing <= DEFAULT_TOL {
            return Err(Error::ZeroOverlap(closing));
        }
    }
    Ok(f.iter().product())
}

/// Accumulated phase `Σ arg(factor)` of the chain, before reduction.
pub fn accumulated_phase(path: &StatePath, close: bool) -> f64 {
    chain_factors(path, close).iter().map(|z| z.arg()).sum()
}

/// Geometric phase of an open path closed by the geodesic rule, in `(−π, π]`.
pub fn berry_phase_open_path(path: &StatePath) -> Result<f64> {
    let closing = path.first().inner(path.last()).norm();
    if closing <= DEFAULT_TOL {
        return Err(Error::ZeroOverlap(closing));
    }
    Ok(wrap_phase(accumulated_phase(path, true)))
}

/// `⟨φ(·)|S|ψ(·)⟩ = ⟨φ₀|ψₙ⟩ ∏_{k≥1} ⟨φ_k|ψ_{k−1}⟩` for product states, with
/// `S` the cyclic shift of the path slots.
pub fn s_operator_matrix_element(phi: &StatePath, psi: &StatePath) -> Result<C64> {
    if phi.grid != psi.grid {
        return Err(Error::GridMismatch);
    }
    if phi.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: phi.dim(), got: psi.dim() });
    }
    let (p, s) = (phi.states(), psi.states());
    let mut acc = p[0].inner(&s[s.len() - 1]);
    for k in 1..s.len() {
        acc *= p[k].inner(&s[k - 1]);
    }
    Ok(acc)
}

/// Discretized action `iS[ψ] = Σ_k [log⟨ψ_k|ψ_{k−1}⟩ − iΔt_k ⟨ψ_k|H|ψ_k⟩]`,
/// returned as the complex number `iS`.
pub fn discrete_i_action(path: &StatePath, sys: &SystemSpec) -> Result<C64> {
    if path.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: path.dim() });
    }
    let t = path.grid().times();
    let s = path.states();
    let h = sys.hamiltonian();
    let mut acc = C64::new(0.0, 0.0);
    for k in 1..s.len() {
        let o = s[k].inner(&s[k - 1]);
        if o.norm() <= DEFAULT_TOL {
            return Err(Error::ZeroOverlap(o.norm()));
        }
        let e = h.sandwich(&s[k], &s[k]).re;
        acc += o.ln() - c(0.0, (t[k] - t[k - 1]) * e);
    }
    Ok(acc)
}

/// Pieces of the action-phase decoherence functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionPhase {
    /// `⟨ψ(t_i)|ρ(t_i)|ψ′(t_i)⟩ ⟨ψ′(t_f)|ψ(t_f)⟩`
    pub boundary: C64,
    /// `iS[ψ] − iS*[ψ′]`
    pub exponent: C64,
    pub value: C64,
}

/// `⟨ψ(t_i)|ρ(t_i)|ψ′(t_i)⟩ ⟨ψ′(t_f)|ψ(t_f)⟩ e^{iS[ψ] − iS*[ψ′]}`, where
/// `ρ(t_i)` is the initial state evolved to the first path time.
pub fn action_phase_decoherence(
    psi: &StatePath,
    psi_p: &StatePath,
    sys: &SystemSpec,
) -> Result<ActionPhase> {
    if psi.grid != psi_p.grid {
        return Err(Error::GridMismatch);
    }
    let end = psi_p.last().inner(psi.last());
    if end.norm() <= DEFAULT_TOL {
        return Err(Error::ZeroOverlap(end.norm()));
    }
    let t0 = psi.grid().times()[0];
    let u = sys.evolution(t0);
    let rho_t = sys.initial_state().operator().conjugate_by(&u);
    let boundary = rho_t.sandwich(psi.first(), psi_p.first()) * end;
    let exponent = discrete_i_action(psi, sys)? + discrete_i_action(psi_p, sys)?.conj();
    Ok(ActionPhase { boundary, exponent, value: boundary * exponent.exp() })
}

/// Spin-½ state on the Bloch sphere at polar angle `theta`, azimuth `phi`.
pub fn bloch_state(theta: f64, phi: f64) -> StateVector {
    StateVector::new(vec![
        c((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ])
    .expect("finite amplitudes")
}

/// Closed loop of `n` steps around the circle of polar angle `theta`; the
/// final state equals the first.
pub fn bloch_circle(theta: f64, n: usize) -> Result<StatePath> {
    StatePath::sample(n + 1, |s| bloch_state(theta, 2.0 * PI * s), DEFAULT_TOL.max(1e-12))
}

/// `−½ · solid angle` enclosed by the circle of polar angle `theta`.
pub fn bloch_circle_phase(theta: f64) -> f64 {
    -PI * (1.0 - theta.cos())
}

/// Richardson extrapolation of a sequence computed at `n, 2n, 4n, …`
/// assuming an error expansion in powers `order, order+1, …` of `1/n`.
pub fn richardson(values: &[f64], order: u32) -> f64 {
    let mut table = values.to_vec();
    let mut p = order as i32;
    while table.len() > 1 {
        let f = 2f64.powi(p);
        table = table.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
        p += 1;
    }
    table[0]
}

/// Berry phase of the Bloch circle for each `n`, with the Richardson limit
/// over the doubling sequence.
#[derive(Debug, Clone)]
pub struct BerrySweep {
    pub theta: f64,
    pub ns: Vec<usize>,
    pub phases: Vec<f64>,
    pub extrapolated: f64,
    pub exact: f64,
}

pub fn berry_sweep(theta: f64, ns: &[usize]) -> Result<BerrySweep> {
    let phases =
        ns.iter().map(|&n| bloch_circle(theta, n).and_then(|p| berry_phase_open_path(&p))).collect::<Result<Vec<_>>>()?;
    // extrapolate over the tail of the doubling sequence
    let mut chain = vec![*ns.last().ok_or_else(|| Error::Invalid("empty n sweep".into()))?];
    while chain.len() < 4 {
        chain.insert(0, chain[0] / 2);
        if chain[0] < 4 {
            break;
        }
    }
    let tail = chain
        .iter()
        .map(|&n| bloch_circle(theta, n).and_then(|p| berry_phase_open_path(&p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BerrySweep {
        theta,
        ns: ns.to_vec(),
        phases,
        extrapolated: richardson(&tail, 2),
        exact: bloch_circle_phase(theta),
    })
}

/// Density matrix of the first state of a path.
pub fn initial_projector(path: &StatePath) -> Result<DensityMatrix> {
    DensityMatrix::pure(path.first())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{ket0, ket1, ket_plus, sigma_z};
    use crate::histories::{cyclic_shift, decoherence_functional};
    use approx::assert_abs_diff_eq;

    #[test]
    fn fs_increment_examples() {
        let u = ket_plus();
        let z = fs_increment(&u, &u, 1e-12).unwrap();
        assert_eq!(z.ds2, 0.0);
        assert_eq!(z.connection_phase, 0.0);
        assert!(matches!(fs_increment(&ket0(), &ket1(), 1e-12), Err(Error::ZeroOverlap(_))));

        // great-circle step: ds² = sin²(θ/2) = θ²/4 + O(θ⁴)
        for &theta in &[1e-1, 1e-2, 1e-3] {
            let v = bloch_state(theta, 0.0);
            let ds2 = fs_increment(&ket0(), &v, 1e-12).unwrap().ds2;
            assert_abs_diff_eq!(ds2, (theta / 2.0).sin().powi(2), epsilon = 1e-15);
            assert!((ds2 - theta * theta / 4.0).abs() < theta.powi(4) / 40.0);
        }
    }

    #[test]
    fn pancharatnam_examples() {
        let grid = TimeGrid::uniform(0.0, 0.1, 5).unwrap();
        let constant = StatePath::new(grid, vec![ket_plus(); 5], 1e-12).unwrap();
        assert_abs_diff_eq!((pancharatnam_product(&constant, true).unwrap() - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-14);

        let path = StatePath::sample(30, |s| bloch_state(1.0 + 0.3 * s, 2.5 * s), 1e-12).unwrap();
        let back = path.retraced().unwrap();
        let z = pancharatnam_product(&back, true).unwrap();
        assert!(accumulated_phase(&back, true).abs() < 1e-14);
        assert!(z.norm() <= 1.0);

        // circle at polar angle θ: phase → −½Ω
        let theta = 1.1;
        let p = bloch_circle(theta, 200).unwrap();
        let phase = berry_phase_open_path(&p).unwrap();
        let exact = bloch_circle_phase(theta);
        assert!((phase - exact).abs() < 5.0 / 200.0);
    }

    #[test]
    fn geodesic_has_null_phase() {
        // great circle through |0⟩ and |+⟩ with arbitrary gauge phases
        let path = StatePath::sample(17, |s| bloch_state(1.2 * s, 0.0), 1e-12).unwrap();
        let phases: Vec<f64> = (0..17).map(|k| 0.37 * k as f64 * k as f64).collect();
        let g = path.regauged(&phases).unwrap();
        assert!(berry_phase_open_path(&g).unwrap().abs() < 1e-13);
    }

    #[test]
    fn orthogonal_endpoints_rejected() {
        let path = StatePath::sample(20, |s| bloch_state(PI * s, 0.0), 1e-12).unwrap();
        assert!(matches!(berry_phase_open_path(&path), Err(Error::ZeroOverlap(_))));
    }

    #[test]
    fn gauge_invariance_is_exact_up_to_rounding() {
        let path = StatePath::sample(40, |s| bloch_state(0.8 + 0.5 * (3.0 * s).sin(), 4.0 * s), 1e-12)
            .unwrap();
        let phases: Vec<f64> = (0..40).map(|k| (k as f64 * 1.7).sin() * 3.0).collect();
        let a = pancharatnam_product(&path, true).unwrap();
        let b = pancharatnam_product(&path.regauged(&phases).unwrap(), true).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn s_matrix_element_matches_explicit_shift() {
        let grid = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        let psi = StatePath::new(grid.clone(), vec![ket0(), ket_plus(), bloch_state(0.7, 1.2)], 1e-12).unwrap();
        let phi = StatePath::new(grid, vec![bloch_state(0.3, 0.1), ket_plus(), ket0()], 1e-12).unwrap();
        let kron = |p: &StatePath| {
            p.states().iter().skip(1).fold(p.states()[0].clone(), |acc, s| acc.tensor(s))
        };
        let s = cyclic_shift(2, 3, 4096).unwrap();
        let explicit = s.sandwich(&kron(&phi), &kron(&psi));
        let chain = s_operator_matrix_element(&phi, &psi).unwrap();
        assert!((explicit - chain).norm() < 1e-14);
        // diagonal element is the closed chain
        let diag = s_operator_matrix_element(&psi, &psi).unwrap();
        assert!((diag - pancharatnam_product(&psi, true).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn action_phase_static_matches_decoherence_exactly() {
        let a = StatePath::sample(12, |s| bloch_state(0.5 + s, 2.0 * s), 1e-12).unwrap();
        let b = StatePath::sample(12, |s| bloch_state(0.5 + s * s, 2.0 * s * s), 1e-12).unwrap();
        let sys = SystemSpec::static_system(DensityMatrix::pure(&bloch_state(0.4, 0.2)).unwrap());
        let ap = action_phase_decoherence(&a, &b, &sys).unwrap();
        let d = decoherence_functional(&a.history().unwrap(), &b.history().unwrap(), &sys).unwrap();
        assert!((ap.value - d).norm() < 1e-13);

        // H = 0 constant paths give a real positive value
        let grid = TimeGrid::uniform(0.0, 0.5, 4).unwrap();
        let k = StatePath::new(grid, vec![ket_plus(); 4], 1e-12).unwrap();
        let v = action_phase_decoherence(&k, &k, &sys).unwrap().value;
        assert!(v.re > 0.0 && v.im.abs() < 1e-15);
    }

    #[test]
    fn action_phase_loop_is_berry_phase() {
        // loop: circle against the constant path at the base point
        let theta = PI / 3.0;
        let n = 400;
        let circle = bloch_circle(theta, n).unwrap();
        let base = StatePath::new(circle.grid().clone(), vec![bloch_state(theta, 0.0); n + 1], 1e-12).unwrap();
        let sys = SystemSpec::static_system(DensityMatrix::pure(&bloch_state(theta, 0.0)).unwrap());
        let v = action_phase_decoherence(&circle, &base, &sys).unwrap().value;
        assert!((v.norm() - 1.0).abs() < 1e-2);
        assert!((v.arg() - bloch_circle_phase(theta)).abs() < 1e-4);
    }

    #[test]
    fn action_phase_energy_eigenstates() {
        // H = ω σ_z / 2, constant paths |0⟩ and |1⟩: exponent −iω(t_f − t_i)
        let omega = 1.3;
        let h = sigma_z().scale(c(omega / 2.0, 0.0));
        let sys = SystemSpec::new(h, DensityMatrix::pure(&ket0()).unwrap(), 1e-12).unwrap();
        let grid = TimeGrid::uniform(0.2, 0.25, 9).unwrap();
        let up = StatePath::new(grid.clone(), vec![ket0(); 9], 1e-12).unwrap();
        let down = StatePath::new(grid, vec![ket1(); 9], 1e-12).unwrap();
        let i_s = discrete_i_action(&up, &sys).unwrap() + discrete_i_action(&down, &sys).unwrap().conj();
        assert_abs_diff_eq!(i_s.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(i_s.im, -omega * 2.0, epsilon = 1e-13);

        // for the eigenstate pair with itself the exponent is exact
        let ap = action_phase_decoherence(&up, &up, &sys).unwrap();
        let d = decoherence_functional(&up.history().unwrap(), &up.history().unwrap(), &sys).unwrap();
        assert!((ap.value - d).norm() < 1e-13);
    }

    #[test]
    fn richardson_recovers_polynomial_limit() {
        let f = |n: f64| 2.0 + 3.0 / (n * n) - 1.0 / (n * n * n);
        let vals: Vec<f64> = [10.0, 20.0, 40.0, 80.0].iter().map(|&n| f(n)).collect();
        assert_abs_diff_eq!(richardson(&vals, 2), 2.0, epsilon = 1e-12);
    }
}
