use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use qhist_core::histories::TimeGrid;
use qhist_core::phasespace::PhasePoint;
use qhist_core::stochlimit::{
    classical_generating_functional, extracted_probabilities, mean_path, sweep, SmearedHistorySet, APPROX_THRESHOLD,
};

use crate::config::{lookup, named_operators, Common, Matrix, OscillatorSection, SystemSection};
use crate::error::CliError;
use crate::output::{int, jnum, list, num, Report, Table};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Body {
    system: Option<SystemSection>,
    oscillator: Option<OscillatorSection>,
    #[serde(default)]
    operators: BTreeMap<String, Matrix>,
    stochastic: Section,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    times: Vec<f64>,
    v_sweep: Vec<f64>,
    /// Observable cells: the named operator and per-time centers.
    observable: Option<String>,
    #[serde(default)]
    centers: Vec<f64>,
    /// Phase-space cells `[q, p]`, used with an `[oscillator]` section.
    #[serde(default)]
    phase_centers: Vec<[f64; 2]>,
    #[serde(default = "default_tol")]
    tol: f64,
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone)]
pub struct Plan {
    set: SmearedHistorySet,
    vs: Vec<f64>,
    tol: f64,
    mode: &'static str,
    dim: usize,
}

impl Plan {
    pub fn build(body: Body, common: &Common) -> Result<Self, CliError> {
        let s = body.stochastic;
        let grid = TimeGrid::new(s.times).map_err(CliError::context("stochastic.times"))?;
        if s.v_sweep.is_empty() || s.v_sweep.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(CliError::invalid("stochastic.v_sweep needs positive finite volumes"));
        }
        if !(s.tol > 0.0) {
            return Err(CliError::invalid("stochastic.tol must be positive"));
        }
        let (set, mode) = match (&body.system, &body.oscillator, &s.observable) {
            (Some(sys), None, Some(name)) => {
                if s.centers.is_empty() || !s.phase_centers.is_empty() {
                    return Err(CliError::invalid("observable cells need `centers` and no `phase_centers`"));
                }
                let sys = sys.build(&common.limits)?;
                let ops = named_operators(&body.operators, sys.dim())?;
                let a = lookup(&ops, name)?.clone();
                let cells = (s.centers.len() as f64).powi(grid.len() as i32);
                if cells > 4096.0 {
                    return Err(CliError::invalid(format!("{cells} cells exceed the cap of 4096")));
                }
                (
                    SmearedHistorySet::observable_product(grid, a, &s.centers, sys).map_err(CliError::context("stochastic"))?,
                    "observable",
                )
            }
            (None, Some(osc), None) => {
                if s.phase_centers.is_empty() || !s.centers.is_empty() || !body.operators.is_empty() {
                    return Err(CliError::invalid("phase-space cells need `phase_centers` only"));
                }
                let (spec, sys) = osc.system(&common.limits)?;
                let pts = s
                    .phase_centers
                    .iter()
                    .map(|[q, p]| PhasePoint::new(*q, *p))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(CliError::context("stochastic.phase_centers"))?;
                let mut cells: Vec<Vec<PhasePoint>> = vec![vec![]];
                for _ in 0..grid.len() {
                    cells = cells
                        .into_iter()
                        .flat_map(|c| pts.iter().map(move |x| [c.clone(), vec![*x]].concat()))
                        .collect();
                }
                if cells.len() > 4096 {
                    return Err(CliError::invalid(format!("{} cells exceed the cap of 4096", cells.len())));
                }
                (
                    SmearedHistorySet::phase_space(grid, spec, cells, sys).map_err(CliError::context("stochastic"))?,
                    "phase-space",
                )
            }
            _ => {
                return Err(CliError::invalid(
                    "stochastic-limit needs either [system] with stochastic.observable, or [oscillator] with stochastic.phase_centers",
                ))
            }
        };
        let dim = set.system().dim();
        Ok(Self { set, vs: s.v_sweep, tol: s.tol, mode, dim })
    }

    pub fn execute(&self, _common: &Common) -> Result<Report, CliError> {
        let mut rep = Report::default();
        rep.meta("dim", self.dim);
        rep.meta("cells", self.set.len());
        rep.meta("mode", self.mode);
        rep.meta("times", list(self.set.grid().times()));
        rep.meta("tol", num(self.tol));
        rep.meta("approx_threshold", num(APPROX_THRESHOLD));

        let rows = sweep(&self.set, &self.vs)?;
        let opt = |x: Option<f64>| x.map_or(String::new(), num);
        let mut t = Table::new(
            "sweep",
            &["v", "raw_ratio", "interference_ratio", "ratio", "kolmogorov_raw", "kolmogorov_residual", "overlap_error", "family_sum"],
        );
        for r in &rows {
            t.push(vec![
                num(r.onset.v),
                num(r.onset.raw_ratio),
                opt(r.onset.interference_ratio),
                num(r.onset.ratio()),
                num(r.kolmogorov.raw),
                opt(r.kolmogorov.residual),
                opt(r.kolmogorov.overlap_error),
                num(r.family_sum),
            ]);
        }
        rep.tables.push(t);
        let ratios: Vec<f64> = rows.iter().map(|r| r.onset.ratio()).collect();
        let kol: Vec<f64> = rows.iter().map(|r| r.kolmogorov.value()).collect();
        let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
        rep.set("ratio", Value::Array(ratios.iter().map(|x| jnum(*x)).collect()));
        rep.set("kolmogorov", Value::Array(kol.iter().map(|x| jnum(*x)).collect()));
        rep.set("ratio_non_increasing", non_increasing(&ratios));
        rep.set("kolmogorov_non_increasing", non_increasing(&kol));

        let mut t = Table::new(
            "probabilities",
            &["v", "cell", "centers", "raw", "scaled", "normalized", "approximate", "overlap_error"],
        );
        let mut gf = Table::new("generating", &["v", "z0_re", "z0_im", "family_sum", "mean_path"]);
        for &v in &self.vs {
            let p = extracted_probabilities(&self.set, v, self.tol)?;
            for k in 0..self.set.len() {
                t.push(vec![
                    num(v),
                    int(k),
                    list(&self.set.center_coordinates(k)),
                    num(p.raw[k]),
                    num(p.scaled[k]),
                    num(p.normalized[k]),
                    p.approximate.to_string(),
                    p.overlap_error.as_ref().map_or(String::new(), |e| num(e[k])),
                ]);
            }
            let width = self.set.center_coordinates(0).len();
            let z0 = classical_generating_functional(&self.set, &p, &vec![0.0; width])?;
            let sum: f64 = p.scaled.iter().sum();
            gf.push(vec![num(v), num(z0.re), num(z0.im), num(sum), list(&mean_path(&self.set, &p))]);
        }
        rep.tables.push(t);
        rep.tables.push(gf);
        Ok(rep)
    }
}
