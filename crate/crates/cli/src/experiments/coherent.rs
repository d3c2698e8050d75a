use std::f64::consts::PI;

use serde::Deserialize;

use qhist_core::phasespace::{coherent_history_decoherence, FockSpec, PhasePath, PhasePoint};

use crate::config::{Common, OscillatorSection};
use crate::error::CliError;
use crate::output::{complex, int, jnum, num, Report, Table};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Body {
    oscillator: OscillatorSection,
    coherent_action: Section,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    t_final: f64,
    ns: Vec<usize>,
    #[serde(default = "default_boundary_tol")]
    boundary_tol: f64,
    path_a: PathSection,
    path_b: PathSection,
}

fn default_boundary_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    #[serde(default)]
    chi: Vec<Term>,
    #[serde(default)]
    xi: Vec<Term>,
}

/// `amp · shape(k π s / T)`; `const` ignores `k`, `linear` is `s / T`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    amp: f64,
    shape: Shape,
    #[serde(default = "one")]
    k: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sin,
    Cos,
    Sin2,
    Const,
    Linear,
}

impl Term {
    fn eval(&self, s: f64, t: f64) -> f64 {
        let u = self.k * PI * s / t;
        self.amp
            * match self.shape {
                Shape::Sin => u.sin(),
                Shape::Cos => u.cos(),
                Shape::Sin2 => u.sin().powi(2),
                Shape::Const => 1.0,
                Shape::Linear => s / t,
            }
    }
}

impl PathSection {
    fn point(&self, s: f64, t: f64) -> PhasePoint {
        PhasePoint {
            chi: self.chi.iter().map(|x| x.eval(s, t)).sum(),
            xi: self.xi.iter().map(|x| x.eval(s, t)).sum(),
        }
    }

    fn check(&self, what: &str) -> Result<(), CliError> {
        if self.chi.iter().chain(&self.xi).any(|x| !x.amp.is_finite() || !x.k.is_finite()) {
            return Err(CliError::invalid(format!("{what}: non-finite term")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Plan {
    spec: FockSpec,
    z0: PhasePoint,
    t_final: f64,
    ns: Vec<usize>,
    boundary_tol: f64,
    a: PathSection,
    b: PathSection,
}

impl Plan {
    pub fn build(body: Body, common: &Common) -> Result<Self, CliError> {
        let s = body.coherent_action;
        let spec = body.oscillator.spec(&common.limits)?;
        let z0 = body.oscillator.z0()?;
        if !(s.t_final > 0.0) {
            return Err(CliError::invalid("coherent_action.t_final must be positive"));
        }
        if s.ns.is_empty() || s.ns.iter().any(|&n| n == 0 || n > 4096) {
            return Err(CliError::invalid("coherent_action.ns entries must lie in 1..=4096"));
        }
        s.path_a.check("coherent_action.path_a")?;
        s.path_b.check("coherent_action.path_b")?;
        let plan = Self { spec, z0, t_final: s.t_final, ns: s.ns, boundary_tol: s.boundary_tol, a: s.path_a, b: s.path_b };
        // paths must fit the truncation at the finest grid
        for n in &plan.ns {
            let (za, zb) = plan.paths(*n)?;
            for z in za.points().iter().chain(zb.points()) {
                let a2 = z.alpha(plan.spec.omega()).norm_sqr();
                if a2 > plan.spec.hard_threshold() {
                    return Err(CliError::invalid(format!(
                        "path point |α|² = {a2:.3} exceeds the truncation limit {:.3}",
                        plan.spec.hard_threshold()
                    )));
                }
            }
        }
        Ok(plan)
    }

    fn paths(&self, n: usize) -> Result<(PhasePath, PhasePath), CliError> {
        let t = self.t_final;
        let za = PhasePath::sample(0.0, t, n, |s| self.a.point(s, t)).map_err(CliError::context("path_a"))?;
        let zb = PhasePath::sample(0.0, t, n, |s| self.b.point(s, t)).map_err(CliError::context("path_b"))?;
        Ok((za, zb))
    }

    pub fn execute(&self, _common: &Common) -> Result<Report, CliError> {
        let mut rep = Report::default();
        rep.meta("ncut", self.spec.ncut());
        rep.meta("omega", num(self.spec.omega()));
        rep.meta("boundary_tol", num(self.boundary_tol));
        rep.meta("t_final", num(self.t_final));
        let mut t = Table::new(
            "refinement",
            &["n", "operator_re", "operator_im", "action_re", "action_im", "modulus_discrepancy", "phase_discrepancy", "end_overlap"],
        );
        let mut phases = Vec::with_capacity(self.ns.len());
        for &n in &self.ns {
            let (za, zb) = self.paths(n)?;
            let r = coherent_history_decoherence(&za, &zb, &self.spec, &self.z0, self.boundary_tol)?;
            phases.push(r.phase_discrepancy);
            let [ore, oim] = complex(r.operator);
            let [are, aim] = complex(r.action);
            t.push(vec![int(n), ore, oim, are, aim, num(r.modulus_discrepancy), num(r.phase_discrepancy), num(r.end_overlap)]);
        }
        rep.tables.push(t);
        rep.set("phase_discrepancy_final", jnum(*phases.last().unwrap()));
        rep.set("phase_discrepancy_decreasing", phases.windows(2).all(|w| w[1] < w[0]));
        Ok(rep)
    }
}
