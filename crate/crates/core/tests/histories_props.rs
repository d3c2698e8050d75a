use nalgebra::DMatrix;
use proptest::prelude::*;
use qhist_core::hilbert::{c, DensityMatrix, Operator, C64, DEFAULT_SIZE_CAP, DEFAULT_TOL};
use qhist_core::histories::{
    additivity_defect, boundary_decomposition, decoherence_functional, history_probability,
    HistoryProposition, SystemSpec, TimeGrid,
};

fn hermitian_from(n: usize, v: &[f64]) -> Operator {
    let m = DMatrix::from_fn(n, n, |i, j| c(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]));
    Operator::new((&m + m.adjoint()) * c(0.5, 0.0)).unwrap()
}

/// Rank-`k` projector onto the lowest eigenvectors of a random Hermitian matrix,
/// plus its complement.
fn projector_pair(n: usize, v: &[f64], k: usize) -> (Operator, Operator) {
    let (_, vecs) = hermitian_from(n, v).eigh(DEFAULT_TOL).unwrap();
    let mut p = DMatrix::<C64>::zeros(n, n);
    for col in 0..k {
        let u = vecs.column(col);
        p += &u * u.adjoint();
    }
    let p = Operator::new(p).unwrap();
    let q = p.complement();
    (p, q)
}

fn density_from(n: usize, v: &[f64]) -> DensityMatrix {
    let m = DMatrix::from_fn(n, n, |i, j| c(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]));
    let pos = &m * m.adjoint();
    let tr = pos.trace();
    DensityMatrix::new(Operator::new(pos / tr).unwrap(), 1e-9).unwrap()
}

#[derive(Debug, Clone)]
struct Instance {
    sys: SystemSpec,
    a: HistoryProposition,
    b: HistoryProposition,
    other: HistoryProposition,
    alt: HistoryProposition,
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=4, 1usize..=4).prop_flat_map(|(n, slots)| {
        let len = 2 * n * n;
        (
            Just((n, slots)),
            proptest::collection::vec(-1.0f64..1.0, len),
            proptest::collection::vec(-1.0f64..1.0, len),
            proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, len), 3 * slots),
            proptest::collection::vec(0.05f64..0.8, slots),
            0usize..8,
        )
    })
    .prop_filter("tensor space within 1024", |((n, slots), ..)| n.pow(*slots as u32 + 1) <= 1024)
    .prop_map(|((n, slots), hv, rv, pv, dts, pick)| {
        let mut times = Vec::with_capacity(slots);
        let mut t = -0.5;
        for dt in dts {
            t += dt;
            times.push(t);
        }
        let grid = TimeGrid::new(times).unwrap();
        let sys = SystemSpec::new(hermitian_from(n, &hv), density_from(n, &rv), 1e-9).unwrap();
        let mut pa = Vec::new();
        let mut pb = Vec::new();
        let mut po = Vec::new();
        let mut palt = Vec::new();
        for s in 0..slots {
            let k = 1 + (pick + s) % (n - 1);
            let (p, q) = projector_pair(n, &pv[3 * s], k);
            let (r, _) = projector_pair(n, &pv[3 * s + 1], 1);
            let (w, _) = projector_pair(n, &pv[3 * s + 2], n - 1);
            pa.push(p.clone());
            // b differs from a only at the first slot, by the complement
            pb.push(if s == 0 { q } else { p });
            po.push(r);
            palt.push(w);
        }
        Instance {
            sys,
            a: HistoryProposition::new(grid.clone(), pa, 1e-9).unwrap(),
            b: HistoryProposition::new(grid.clone(), pb, 1e-9).unwrap(),
            other: HistoryProposition::new(grid.clone(), po, 1e-9).unwrap(),
            alt: HistoryProposition::new(grid, palt, 1e-9).unwrap(),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn boundary_matches_direct(inst in instance()) {
        for (x, y) in [(&inst.a, &inst.other), (&inst.alt, &inst.b), (&inst.other, &inst.other)] {
            let bd = boundary_decomposition(x, y, &inst.sys, DEFAULT_SIZE_CAP).unwrap();
            let d = decoherence_functional(x, y, &inst.sys).unwrap();
            prop_assert!((bd.value - d).norm() < 1e-10, "{} vs {}", bd.value, d);
        }
    }

    #[test]
    fn decoherence_axioms(inst in instance()) {
        let sys = &inst.sys;
        let d = |x: &HistoryProposition, y: &HistoryProposition| decoherence_functional(x, y, sys).unwrap();
        // hermiticity
        prop_assert!((d(&inst.a, &inst.other) - d(&inst.other, &inst.a).conj()).norm() < 1e-12);
        // positivity and agreement with the probability
        let daa = d(&inst.a, &inst.a);
        prop_assert!(daa.re >= -1e-12 && daa.im.abs() < 1e-12);
        prop_assert!((daa.re - history_probability(&inst.a, sys).unwrap().raw).abs() < 1e-12);
        // additivity over the orthogonal pair (a, b): a + b is the join at slot 0
        let mut join = inst.a.projectors().to_vec();
        join[0] = &inst.a.projectors()[0] + &inst.b.projectors()[0];
        let join = HistoryProposition::new(inst.a.grid().clone(), join, 1e-9).unwrap();
        let lhs = d(&join, &inst.other);
        let rhs = d(&inst.a, &inst.other) + d(&inst.b, &inst.other);
        prop_assert!((lhs - rhs).norm() < 1e-12);
        // additivity defect equals the interference term
        let r = additivity_defect(&inst.a, &inst.b, sys, 1e-9).unwrap();
        prop_assert!((r.defect - r.interference).abs() < 1e-10);
    }

    #[test]
    fn commuting_families_are_additive(n in 2usize..=4, diag in proptest::collection::vec(0.01f64..1.0, 4),
                                        energies in proptest::collection::vec(-2.0f64..2.0, 4),
                                        t in proptest::collection::vec(0.1f64..1.0, 3)) {
        let w: f64 = diag[..n].iter().sum();
        let rho = Operator::real_diagonal(&diag[..n].iter().map(|x| x / w).collect::<Vec<_>>());
        let sys = SystemSpec::new(
            Operator::real_diagonal(&energies[..n]),
            DensityMatrix::new(rho, 1e-9).unwrap(),
            1e-9,
        ).unwrap();
        let proj = |k: usize| {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            Operator::real_diagonal(&v)
        };
        let grid = TimeGrid::new(vec![t[0], t[0] + t[1], t[0] + t[1] + t[2]]).unwrap();
        let a = HistoryProposition::new(grid.clone(), vec![proj(0), proj(1), proj(0)], 1e-9).unwrap();
        let b = HistoryProposition::new(grid, vec![proj(0), proj(0), proj(0)], 1e-9).unwrap();
        let r = additivity_defect(&a, &b, &sys, 1e-9).unwrap();
        prop_assert!(r.defect < DEFAULT_TOL);
    }
}
