//! Seeded random history instances for the decoherence axiom suite.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qhist_core::hilbert::{c, DensityMatrix, Operator, StateVector, C64, DEFAULT_TOL};
use qhist_core::histories::{
    boundary_decomposition, decoherence_functional, HistoryProposition, SystemSpec, TimeGrid,
};
use qhist_core::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn hermitian(n: usize, rng: &mut ChaCha8Rng) -> Operator {
    let m = DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    Operator::new((&m + m.adjoint()) * c(0.5, 0.0)).expect("finite")
}

/// Rank-`k` spectral projector of a random Hermitian matrix.
pub fn projector(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Operator> {
    let (_, vecs) = hermitian(n, rng).eigh(DEFAULT_TOL)?;
    let mut p = DMatrix::<C64>::zeros(n, n);
    for col in 0..k {
        let u = vecs.column(col);
        p += &u * u.adjoint();
    }
    // symmetrize away rounding so the projector test is tight
    Operator::new((&p + p.adjoint()) * c(0.5, 0.0))
}

pub fn density(n: usize, pure: bool, rng: &mut ChaCha8Rng) -> Result<DensityMatrix> {
    if pure {
        let amps = (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        return DensityMatrix::pure(&StateVector::new(amps)?.normalized()?);
    }
    let m = DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let pos = &m * m.adjoint();
    let tr = pos.trace();
    DensityMatrix::new(Operator::new(pos / tr)?, DEFAULT_TOL)
}

/// `G G†` with `G` random on the lowest `support` levels of an `n`-level space.
pub fn positive_on_levels(n: usize, support: usize, rng: &mut ChaCha8Rng) -> Operator {
    let mut g = DMatrix::<C64>::zeros(n, n);
    for i in 0..support.min(n) {
        for j in 0..support.min(n) {
            g[(i, j)] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    let m = &g * g.adjoint();
    Operator::new((&m + m.adjoint()) * c(0.5, 0.0)).expect("finite")
}

/// A random system with histories `a`, `b` (orthogonal at the first time,
/// equal elsewhere) and two unrelated histories.
#[derive(Debug, Clone)]
pub struct Instance {
    pub sys: SystemSpec,
    pub a: HistoryProposition,
    pub b: HistoryProposition,
    pub other: HistoryProposition,
    pub alt: HistoryProposition,
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    pub fn times(&self) -> usize {
        self.a.len()
    }
}

/// Draws dimension in `2..=max_dim`, `1..=max_times` times, keeping
/// `dim^(times+1) ≤ cap` so the boundary form stays buildable.
pub fn instance(rng: &mut ChaCha8Rng, max_dim: usize, max_times: usize, pure: bool, cap: usize) -> Result<Instance> {
    let (n, slots) = loop {
        let n = rng.random_range(2..=max_dim.max(2));
        let slots = rng.random_range(1..=max_times.max(1));
        if (n as f64).powi(slots as i32 + 1) <= cap as f64 {
            break (n, slots);
        }
    };
    let mut t = rng.random_range(-0.5..0.0);
    let mut times = Vec::with_capacity(slots);
    for _ in 0..slots {
        t += rng.random_range(0.05..0.8);
        times.push(t);
    }
    let grid = TimeGrid::new(times)?;
    let sys = SystemSpec::new(hermitian(n, rng), density(n, pure, rng)?, DEFAULT_TOL)?;
    let (mut pa, mut pb, mut po, mut palt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in 0..slots {
        let k = rng.random_range(1..n);
        let p = projector(n, k, rng)?;
        if s == 0 {
            pb.push(p.complement());
        } else {
            pb.push(p.clone());
        }
        pa.push(p);
        po.push(projector(n, 1, rng)?);
        palt.push(projector(n, n - 1, rng)?);
    }
    let h = |ps| HistoryProposition::new(grid.clone(), ps, 1e-8);
    Ok(Instance { a: h(pa)?, b: h(pb)?, other: h(po)?, alt: h(palt)?, sys })
}

/// Worst deviation of each axiom on one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomDeviations {
    /// `|d(1, 1) − 1|`
    pub normalization: f64,
    /// `|d(α, β) − conj d(β, α)|`
    pub hermiticity: f64,
    /// `|d(0, β)|`
    pub null: f64,
    /// `|d(α ⊕ α′, β) − d(α, β) − d(α′, β)|`
    pub additivity: f64,
    /// `max(0, −Re d(α, α)) + |Im d(α, α)|`
    pub positivity: f64,
}

impl AxiomDeviations {
    pub fn max(&self) -> f64 {
        [self.normalization, self.hermiticity, self.null, self.additivity, self.positivity]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn axiom_deviations(inst: &Instance) -> Result<AxiomDeviations> {
    let sys = &inst.sys;
    let grid = inst.a.grid().clone();
    let d = |x: &HistoryProposition, y: &HistoryProposition| decoherence_functional(x, y, sys);
    let id = HistoryProposition::identity(grid.clone(), inst.dim());
    let zero = HistoryProposition::zero(grid.clone(), inst.dim());
    let mut join = inst.a.projectors().to_vec();
    join[0] = &inst.a.projectors()[0] + &inst.b.projectors()[0];
    let join = HistoryProposition::new(grid, join, 1e-8)?;

    let mut hermiticity: f64 = 0.0;
    let mut null: f64 = 0.0;
    let mut additivity: f64 = 0.0;
    let mut positivity: f64 = 0.0;
    let family = [&inst.a, &inst.b, &inst.other, &inst.alt];
    for x in family {
        for y in family {
            hermiticity = hermiticity.max((d(x, y)? - d(y, x)?.conj()).norm());
        }
        null = null.max(d(&zero, x)?.norm()).max(d(x, &zero)?.norm());
        additivity = additivity.max((d(&join, x)? - d(&inst.a, x)? - d(&inst.b, x)?).norm());
        let dxx = d(x, x)?;
        positivity = positivity.max((-dxx.re).max(0.0) + dxx.im.abs());
    }
    Ok(AxiomDeviations { normalization: (d(&id, &id)? - c(1.0, 0.0)).norm(), hermiticity, null, additivity, positivity })
}

/// `max |Tr(c(α)c(β)†) − d(α, β)|` over the instance's history pairs.
pub fn boundary_deviation(inst: &Instance, cap: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, y) in [(&inst.a, &inst.other), (&inst.alt, &inst.b), (&inst.other, &inst.other), (&inst.a, &inst.b)] {
        let bd = boundary_decomposition(x, y, &inst.sys, cap)?;
        worst = worst.max((bd.value - decoherence_functional(x, y, &inst.sys)?).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let a = instance(&mut rng(11), 4, 4, false, 1024).unwrap();
        let b = instance(&mut rng(11), 4, 4, false, 1024).unwrap();
        assert_eq!(a.a.grid(), b.a.grid());
        assert_eq!(a.sys.hamiltonian().matrix(), b.sys.hamiltonian().matrix());
    }

    #[test]
    fn pure_instances_are_pure() {
        let mut r = rng(5);
        for _ in 0..5 {
            let inst = instance(&mut r, 3, 2, true, 1024).unwrap();
            assert!(inst.sys.initial_state().is_pure(1e-9));
        }
    }
}
