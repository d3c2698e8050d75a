//! Gaussian smearing of histories and the classical stochastic limit.
//!
//! Each cell of a history family carries one positive effect per time: either
//! `exp(−(a − x̄)²/(2√V))` for a Hermitian observable `a`, or a phase-space cell
//! `D(z̄) Σₙ (s/(1+s))^{n+1}|n⟩⟨n| D†(z̄)` with `s = 2√V`, the Gaussian average
//! `∫ d²α/π e^{−|α−ᾱ|²/s} |α⟩⟨α|` of coherent projectors in the coherent-state
//! metric. Effects enter the decoherence functional exactly like projectors.
//!
//! For observable cells the quantum values are compared with a reference in
//! which the state is dephased in the eigenbasis of `a` at every time. The
//! reference has no interference and shares the overlap of non-orthogonal
//! Gaussians, so differences isolate the interference contribution.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{c, Operator, C64, DEFAULT_TOL};
use crate::histories::{SystemSpec, TimeGrid};
use crate::phasespace::{displacement, FockSpec, PhasePoint};

/// Ratio above which extracted probabilities are flagged approximate.
pub const APPROX_THRESHOLD: f64 = 0.05;

/// Largest number of eigenvalue paths in the dephased reference.
pub const MAX_REFERENCE_PATHS: usize = 1 << 14;

fn check_v(v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Invalid(format!("smearing volume must be positive, got {v}")));
    }
    Ok(())
}

/// `χ_x̄(x) = exp(−(x − x̄)²/(2√V))`.
pub fn gaussian_weight(x: f64, center: f64, v: f64) -> f64 {
    (-(x - center).powi(2) / (2.0 * v.sqrt())).exp()
}

/// `exp(−(a − x̄)²/(2√V))` by spectral calculus.
pub fn gaussian_pos_operator(center: f64, v: f64, a: &Operator) -> Result<Operator> {
    check_v(v)?;
    if !center.is_finite() {
        return Err(Error::NonFinite("cell center"));
    }
    a.spectral_map(DEFAULT_TOL, |x| c(gaussian_weight(x, center, v), 0.0))
}

/// Phase-space Gaussian cell around `center`.
pub fn phase_space_cell_operator(center: &PhasePoint, v: f64, spec: &FockSpec) -> Result<Operator> {
    check_v(v)?;
    let s = 2.0 * v.sqrt();
    let r = s / (1.0 + s);
    let diag: Vec<f64> = (0..spec.ncut()).map(|n| r.powi(n as i32 + 1)).collect();
    let d = displacement(center, spec)?;
    Ok(Operator::real_diagonal(&diag).conjugate_by(&d))
}

#[derive(Debug, Clone, PartialEq)]
enum Cells {
    Observable { a: Operator, centers: Vec<Vec<f64>> },
    PhaseSpace { spec: FockSpec, centers: Vec<Vec<PhasePoint>> },
}

/// Cells sharing a time grid and a system.
#[derive(Debug, Clone)]
pub struct SmearedHistorySet {
    grid: TimeGrid,
    cells: Cells,
    sys: SystemSpec,
}

fn check_cells<T: PartialEq>(grid: &TimeGrid, centers: &[Vec<T>]) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::Invalid("empty cell family".into()));
    }
    for c in centers {
        if c.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: c.len() });
        }
    }
    for i in 0..centers.len() {
        for j in 0..i {
            if centers[i] == centers[j] {
                return Err(Error::Invalid(format!("cells {j} and {i} coincide")));
            }
        }
    }
    Ok(())
}

impl SmearedHistorySet {
    pub fn observable(grid: TimeGrid, a: Operator, centers: Vec<Vec<f64>>, sys: SystemSpec) -> Result<Self> {
        if a.dim() != sys.dim() {
            return Err(Error::DimensionMismatch { expected: sys.dim(), got: a.dim() });
        }
        if !a.is_hermitian(DEFAULT_TOL) {
            return Err(Error::NotHermitian(a.hermitian_deviation()));
        }
        if centers.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("cell center"));
        }
        check_cells(&grid, &centers)?;
        Ok(Self { grid, cells: Cells::Observable { a, centers }, sys })
    }

    pub fn phase_space(grid: TimeGrid, spec: FockSpec, centers: Vec<Vec<PhasePoint>>, sys: SystemSpec) -> Result<Self> {
        if spec.ncut() != sys.dim() {
            return Err(Error::DimensionMismatch { expected: sys.dim(), got: spec.ncut() });
        }
        check_cells(&grid, &centers)?;
        Ok(Self { grid, cells: Cells::PhaseSpace { spec, centers }, sys })
    }

    /// Every combination of the per-time center lists.
    pub fn observable_product(grid: TimeGrid, a: Operator, per_time: &[f64], sys: SystemSpec) -> Result<Self> {
        let n = grid.len();
        let mut cells: Vec<Vec<f64>> = vec![vec![]];
        for _ in 0..n {
            cells = cells
                .into_iter()
                .flat_map(|c| per_time.iter().map(move |&x| [c.clone(), vec![x]].concat()))
                .collect();
        }
        Self::observable(grid, a, cells, sys)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn system(&self) -> &SystemSpec {
        &self.sys
    }

    pub fn len(&self) -> usize {
        match &self.cells {
            Cells::Observable { centers, .. } => centers.len(),
            Cells::PhaseSpace { centers, .. } => centers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Real centers of an observable family.
    pub fn observable_centers(&self) -> Option<&[Vec<f64>]> {
        match &self.cells {
            Cells::Observable { centers, .. } => Some(centers),
            Cells::PhaseSpace { .. } => None,
        }
    }

    /// Center coordinates of cell `k` flattened per time (`χ, ξ` pairs for phase space).
    pub fn center_coordinates(&self, k: usize) -> Vec<f64> {
        match &self.cells {
            Cells::Observable { centers, .. } => centers[k].clone(),
            Cells::PhaseSpace { centers, .. } => centers[k].iter().flat_map(|p| [p.chi, p.xi]).collect(),
        }
    }

    /// Effect of cell `k` at time slot `j`.
    pub fn effect(&self, k: usize, j: usize, v: f64) -> Result<Operator> {
        match &self.cells {
            Cells::Observable { a, centers } => gaussian_pos_operator(centers[k][j], v, a),
            Cells::PhaseSpace { spec, centers } => phase_space_cell_operator(&centers[k][j], v, spec),
        }
    }

    fn heisenberg_effects(&self, v: f64) -> Result<Vec<Vec<Operator>>> {
        (0..self.len())
            .into_par_iter()
            .map(|k| {
                self.grid
                    .times()
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| Ok(self.sys.heisenberg(&self.effect(k, j, v)?, t)))
                    .collect()
            })
            .collect()
    }

    fn chain(ops: &[Operator], n: usize) -> Operator {
        ops.iter().fold(Operator::identity(n), |acc, o| &acc * o)
    }

    /// Class operators of all cells.
    pub fn class_operators(&self, v: f64) -> Result<Vec<Operator>> {
        check_v(v)?;
        let n = self.sys.dim();
        Ok(self.heisenberg_effects(v)?.iter().map(|e| Self::chain(e, n)).collect())
    }

    /// `d(χ_i, χ_j)` for all pairs.
    pub fn decoherence_matrix(&self, v: f64) -> Result<DMatrix<C64>> {
        let ops = self.class_operators(v)?;
        let n = ops.len();
        let rows: Vec<Vec<C64>> =
            (0..n).into_par_iter().map(|i| (0..n).map(|j| self.sys.pair_trace(&ops[i], &ops[j])).collect()).collect();
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Eigenvalues of the observable grouped within tolerance, with projectors.
    fn spectrum(&self) -> Option<Result<Vec<(f64, Operator)>>> {
        let Cells::Observable { a, .. } = &self.cells else {
            return None;
        };
        Some((|| {
            let (vals, vecs) = a.eigh(DEFAULT_TOL)?;
            let mut groups: Vec<(f64, DMatrix<C64>)> = Vec::new();
            for (k, &l) in vals.iter().enumerate() {
                let u = vecs.column(k);
                let p = &u * u.adjoint();
                match groups.last_mut() {
                    Some((m, acc)) if (l - *m).abs() < 1e-9 * (1.0 + l.abs()) => *acc += p,
                    _ => groups.push((l, p)),
                }
            }
            groups.into_iter().map(|(l, p)| Ok((l, Operator::new(p)?))).collect()
        })())
    }

    /// Dephased probabilities of every eigenvalue path, with the path labels.
    fn eigen_paths(&self) -> Option<Result<(Vec<f64>, Vec<Vec<usize>>, Vec<f64>)>> {
        let spec = self.spectrum()?;
        Some((|| {
            let spec = spec?;
            let m = spec.len();
            let n = self.grid.len();
            let count = m.checked_pow(n as u32).filter(|c| *c <= MAX_REFERENCE_PATHS).ok_or(Error::SizeCap {
                dim: m.saturating_pow(n as u32),
                cap: MAX_REFERENCE_PATHS,
            })?;
            let projs: Vec<Vec<Operator>> = self
                .grid
                .times()
                .iter()
                .map(|&t| spec.iter().map(|(_, p)| self.sys.heisenberg(p, t)).collect())
                .collect();
            let dim = self.sys.dim();
            let paths: Vec<Vec<usize>> = (0..count)
                .map(|mut idx| {
                    (0..n)
                        .map(|_| {
                            let k = idx % m;
                            idx /= m;
                            k
                        })
                        .collect()
                })
                .collect();
            let probs: Vec<f64> = paths
                .par_iter()
                .map(|path| {
                    let ops: Vec<Operator> = path.iter().enumerate().map(|(j, &k)| projs[j][k].clone()).collect();
                    let ch = Self::chain(&ops, dim);
                    self.sys.pair_trace(&ch, &ch).re
                })
                .collect();
            Ok((spec.iter().map(|(l, _)| *l).collect(), paths, probs))
        })())
    }

    /// `Π_t χ_{x̄_t}(λ_{k_t})` for cell `i` along eigenvalue path `path`.
    fn path_weight(centers: &[f64], eig: &[f64], path: &[usize], v: f64) -> f64 {
        path.iter().zip(centers).map(|(&k, &x)| gaussian_weight(eig[k], x, v)).product()
    }

    /// Decoherence matrix of the dephased reference (observable families only).
    pub fn reference_matrix(&self, v: f64) -> Option<Result<DMatrix<f64>>> {
        let centers = self.observable_centers()?.to_vec();
        let paths = self.eigen_paths()?;
        Some((|| {
            check_v(v)?;
            let (eig, paths, probs) = paths?;
            let w: Vec<Vec<f64>> = centers
                .iter()
                .map(|c| paths.iter().map(|p| Self::path_weight(c, &eig, p, v)).collect())
                .collect();
            let n = centers.len();
            Ok(DMatrix::from_fn(n, n, |i, j| (0..paths.len()).map(|k| probs[k] * w[i][k] * w[j][k]).sum()))
        })())
    }
}

/// `d` between two cells' effect chains built from explicit center paths.
pub fn smeared_decoherence(
    grid: &TimeGrid,
    centers_a: &[f64],
    centers_b: &[f64],
    v: f64,
    a: &Operator,
    sys: &SystemSpec,
) -> Result<C64> {
    if centers_a.len() != grid.len() || centers_b.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let chain = |cs: &[f64]| -> Result<Operator> {
        let mut acc = Operator::identity(sys.dim());
        for (&x, &t) in cs.iter().zip(grid.times()) {
            acc = &acc * &sys.heisenberg(&gaussian_pos_operator(x, v, a)?, t);
        }
        Ok(acc)
    };
    if a.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: a.dim() });
    }
    Ok(sys.pair_trace(&chain(centers_a)?, &chain(centers_b)?))
}

fn off_diagonal_ratio(d: &DMatrix<C64>, diff: Option<&DMatrix<f64>>) -> f64 {
    let n = d.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let norm = (d[(i, i)].re * d[(j, j)].re).max(0.0).sqrt();
            let off = match diff {
                Some(r) => (d[(i, j)] - c(r[(i, j)], 0.0)).norm(),
                None => d[(i, j)].norm(),
            };
            if norm > 0.0 {
                worst = worst.max(off / norm);
            }
        }
    }
    worst
}

/// Off-diagonal suppression at one smearing volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetRow {
    pub v: f64,
    /// `max_{i≠j} |d_ij| / √(d_ii d_jj)`.
    pub raw_ratio: f64,
    /// Same with the dephased reference subtracted; observable families only.
    pub interference_ratio: Option<f64>,
}

impl OnsetRow {
    /// Interference ratio when available, raw ratio otherwise.
    pub fn ratio(&self) -> f64 {
        self.interference_ratio.unwrap_or(self.raw_ratio)
    }
}

fn onset_row(set: &SmearedHistorySet, v: f64) -> Result<OnsetRow> {
    let d = set.decoherence_matrix(v)?;
    let reference = set.reference_matrix(v).transpose()?;
    Ok(OnsetRow {
        v,
        raw_ratio: off_diagonal_ratio(&d, None),
        interference_ratio: reference.as_ref().map(|r| off_diagonal_ratio(&d, Some(r))),
    })
}

pub fn decoherence_onset(set: &SmearedHistorySet, sweep: &[f64]) -> Result<Vec<OnsetRow>> {
    sweep.par_iter().map(|&v| onset_row(set, v)).collect()
}

/// Extracted probabilities at one smearing volume.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub v: f64,
    /// `d(χ, χ)` as computed.
    pub raw: Vec<f64>,
    /// `d(χ, χ) / Vⁿ` with `n` the number of times.
    pub scaled: Vec<f64>,
    /// `raw` divided by its family sum.
    pub normalized: Vec<f64>,
    /// `Σ raw`.
    pub family_sum: f64,
    pub ratio: f64,
    pub approximate: bool,
    /// Per-cell bound on `|raw − sharp chain probability|` from the Gaussian
    /// weights alone; observable families only.
    pub overlap_error: Option<Vec<f64>>,
    /// Eigenvalue path nearest to each cell; observable families only.
    pub nearest_path: Option<Vec<Vec<usize>>>,
}

fn nearest(eig: &[f64], x: f64) -> usize {
    (0..eig.len()).min_by(|&a, &b| (eig[a] - x).abs().total_cmp(&(eig[b] - x).abs())).unwrap_or(0)
}

pub fn extracted_probabilities(set: &SmearedHistorySet, v: f64, tol: f64) -> Result<ProbabilityTable> {
    let d = set.decoherence_matrix(v)?;
    let row = onset_row(set, v)?;
    let n = set.len();
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let p = d[(i, i)].re;
        if p < -tol {
            return Err(Error::NegativeProbability(p));
        }
        raw.push(p);
    }
    let vn = v.powi(set.grid().len() as i32);
    let family_sum: f64 = raw.iter().sum();
    let (overlap_error, nearest_path) = match (set.observable_centers(), set.spectrum()) {
        (Some(centers), Some(spec)) => {
            let eig: Vec<f64> = spec?.iter().map(|(l, _)| *l).collect();
            let m = eig.len();
            let slots = set.grid().len();
            let mut errs = Vec::with_capacity(n);
            let mut near = Vec::with_capacity(n);
            for cs in centers {
                let path: Vec<usize> = cs.iter().map(|&x| nearest(&eig, x)).collect();
                let own = SmearedHistorySet::path_weight(cs, &eig, &path, v).powi(2);
                // best competing path: change any subset of slots; the per-slot
                // maxima over alternatives bound it
                let mut other: f64 = 0.0;
                for flip in 1..(1usize << slots) {
                    let mut w = 1.0;
                    for (j, &x) in cs.iter().enumerate() {
                        let g = if flip >> j & 1 == 1 {
                            (0..m).filter(|&k| k != path[j]).map(|k| gaussian_weight(eig[k], x, v)).fold(0.0, f64::max)
                        } else {
                            gaussian_weight(eig[path[j]], x, v)
                        };
                        w *= g * g;
                    }
                    other = other.max(w);
                }
                errs.push((1.0 - own) + other);
                near.push(path);
            }
            (Some(errs), Some(near))
        }
        _ => (None, None),
    };
    Ok(ProbabilityTable {
        v,
        scaled: raw.iter().map(|p| p / vn).collect(),
        normalized: raw.iter().map(|p| p / family_sum).collect(),
        raw,
        family_sum,
        ratio: row.ratio(),
        approximate: row.ratio() > APPROX_THRESHOLD,
        overlap_error,
        nearest_path,
    })
}

/// Additivity defect from coarse-graining the first time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KolmogorovReport {
    pub v: f64,
    /// `max |Σ_fine p − p_coarse|` over coarse cells.
    pub raw: f64,
    /// Same after removing the dephased-reference defect; observable families only.
    pub residual: Option<f64>,
    /// Defect of the dephased reference: overlap of non-orthogonal Gaussians.
    pub overlap_error: Option<f64>,
}

impl KolmogorovReport {
    pub fn value(&self) -> f64 {
        self.residual.unwrap_or(self.raw)
    }
}

/// Coarse cells group the cells that agree after the first time; the coarse
/// first-time effect is the sum of the fine ones.
pub fn kolmogorov_residual(set: &SmearedHistorySet, v: f64) -> Result<KolmogorovReport> {
    let d = set.decoherence_matrix(v)?;
    let reference = set.reference_matrix(v).transpose()?;
    let mut groups: Vec<(Vec<u64>, Vec<usize>)> = Vec::new();
    for k in 0..set.len() {
        let coords = set.center_coordinates(k);
        let per = coords.len() / set.grid().len();
        let tail: Vec<u64> = coords[per..].iter().map(|x| x.to_bits()).collect();
        match groups.iter_mut().find(|g| g.0 == tail) {
            Some(g) => g.1.push(k),
            None => groups.push((tail, vec![k])),
        }
    }
    let mut raw: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut overlap: f64 = 0.0;
    for (_, members) in &groups {
        // Σ_fine p − p_coarse = −Σ_{k≠l} d_kl by bilinearity
        let defect = |m: &dyn Fn(usize, usize) -> f64| -> f64 {
            -members.iter().flat_map(|&k| members.iter().map(move |&l| (k, l))).filter(|(k, l)| k != l).map(|(k, l)| m(k, l)).sum::<f64>()
        };
        let q = defect(&|k, l| d[(k, l)].re);
        raw = raw.max(q.abs());
        if let Some(r) = &reference {
            let cl = defect(&|k, l| r[(k, l)]);
            residual = residual.max((q - cl).abs());
            overlap = overlap.max(cl.abs());
        }
    }
    Ok(KolmogorovReport {
        v,
        raw,
        residual: reference.as_ref().map(|_| residual),
        overlap_error: reference.as_ref().map(|_| overlap),
    })
}

/// `Σ_cells p e^{i(x̄, J)}` with `p` the `Vⁿ`-scaled probabilities; `j` is
/// flattened like the cell coordinates.
pub fn classical_generating_functional(set: &SmearedHistorySet, table: &ProbabilityTable, j: &[f64]) -> Result<C64> {
    if table.scaled.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: table.scaled.len() });
    }
    let width = set.center_coordinates(0).len();
    if j.len() != width {
        return Err(Error::DimensionMismatch { expected: width, got: j.len() });
    }
    Ok((0..set.len())
        .map(|k| {
            let phase: f64 = set.center_coordinates(k).iter().zip(j).map(|(x, y)| x * y).sum();
            C64::from_polar(table.scaled[k], phase)
        })
        .sum())
}

/// `Σ p x̄ / Σ p` per coordinate.
pub fn mean_path(set: &SmearedHistorySet, table: &ProbabilityTable) -> Vec<f64> {
    let width = set.center_coordinates(0).len();
    let total: f64 = table.scaled.iter().sum();
    (0..width)
        .map(|w| (0..set.len()).map(|k| table.scaled[k] * set.center_coordinates(k)[w]).sum::<f64>() / total)
        .collect()
}

/// One row of a smearing sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub onset: OnsetRow,
    pub kolmogorov: KolmogorovReport,
    pub family_sum: f64,
}

pub fn sweep(set: &SmearedHistorySet, vs: &[f64]) -> Result<Vec<SweepRow>> {
    vs.par_iter()
        .map(|&v| {
            let onset = onset_row(set, v)?;
            let kolmogorov = kolmogorov_residual(set, v)?;
            let family_sum = set.decoherence_matrix(v)?.diagonal().iter().map(|x| x.re).sum::<f64>();
            Ok(SweepRow { onset, kolmogorov, family_sum })
        })
        .collect()
}

/// `v,ratio,raw_ratio,residual,raw_residual,overlap_error,normalization` rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), |v| format!("{v:.12e}"));
    let mut out = String::from("v,ratio,raw_ratio,residual,raw_residual,overlap_error,normalization\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e}",
            r.onset.v,
            r.onset.ratio(),
            r.onset.raw_ratio,
            r.kolmogorov.value(),
            r.kolmogorov.raw,
            opt(r.kolmogorov.overlap_error),
            r.family_sum
        );
    }
    out
}
