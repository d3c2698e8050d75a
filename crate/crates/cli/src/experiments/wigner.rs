use serde::Deserialize;

use qhist_core::hilbert::{Operator, StateVector};
use qhist_core::histories::trace_of_product;
use qhist_core::phasespace::FockSpec;
use qhist_core::wigner::{moyal_consistency_check, wigner_transform, wigner_transform_batch, PhaseSpaceGrid, EULER_ROUNDS};

use crate::config::{oscillator_operator, Common, OscillatorSection};
use crate::error::CliError;
use crate::output::{complex, int, jnum, num, Report, Table};
use crate::random::{positive_on_levels, rng};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Body {
    oscillator: OscillatorSection,
    wigner: Section,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    /// Points per axis on the calibrated box; the default scales with `√ncut`.
    nodes: Option<usize>,
    #[serde(default)]
    random_operators: usize,
    #[serde(default = "default_support")]
    support: usize,
    #[serde(default = "default_relative_tol")]
    relative_tol: f64,
    #[serde(default)]
    moyal: Vec<[String; 2]>,
    /// Fields to export: `vacuum` or a named oscillator operator.
    #[serde(default)]
    fields: Vec<String>,
}

fn default_support() -> usize {
    8
}
fn default_relative_tol() -> f64 {
    0.01
}

#[derive(Debug, Clone)]
pub struct Plan {
    spec: FockSpec,
    grid: PhaseSpaceGrid,
    random: Option<(u64, usize, usize)>,
    relative_tol: f64,
    moyal: Vec<(String, String, Operator, Operator)>,
    fields: Vec<(String, Operator)>,
}

impl Plan {
    pub fn build(body: Body, common: &Common) -> Result<Self, CliError> {
        let s = body.wigner;
        let spec = body.oscillator.spec(&common.limits)?;
        let grid = match s.nodes {
            Some(n) => PhaseSpaceGrid::calibrated(&spec, n),
            None => PhaseSpaceGrid::calibrated_default(&spec),
        }
        .map_err(CliError::context("wigner.nodes"))?;
        if grid.nq() > 512 {
            return Err(CliError::invalid("wigner.nodes is capped at 512 per axis"));
        }
        let random = match s.random_operators {
            0 => None,
            k => {
                if s.support == 0 || s.support + 2 > spec.ncut() {
                    return Err(CliError::invalid("wigner.support must lie in 1..=ncut-2"));
                }
                Some((common.require_seed("wigner.random_operators")?, k, s.support))
            }
        };
        let moyal = s
            .moyal
            .iter()
            .map(|[a, b]| Ok((a.clone(), b.clone(), oscillator_operator(a, &spec)?, oscillator_operator(b, &spec)?)))
            .collect::<Result<_, CliError>>()?;
        let fields = s
            .fields
            .iter()
            .map(|name| {
                let op = match name.as_str() {
                    "vacuum" => StateVector::basis(spec.ncut(), 0).projector(),
                    other => oscillator_operator(other, &spec)?,
                };
                Ok((name.clone(), op))
            })
            .collect::<Result<_, CliError>>()?;
        Ok(Self { spec, grid, random, relative_tol: s.relative_tol, moyal, fields })
    }

    pub fn execute(&self, _common: &Common) -> Result<Report, CliError> {
        let mut rep = Report::default();
        let (qmin, qmax, pmin, pmax) = self.grid.bounds();
        rep.meta("ncut", self.spec.ncut());
        rep.meta("omega", num(self.spec.omega()));
        rep.meta("grid", format!("q[{}, {}] x p[{}, {}], {} x {}", num(qmin), num(qmax), num(pmin), num(pmax), self.grid.nq(), self.grid.np()));
        rep.meta("quadrature", "trapezoid");
        rep.meta("relative_tol", num(self.relative_tol));
        rep.meta("euler_rounds", EULER_ROUNDS);

        if let Some((seed, count, support)) = self.random {
            rep.meta("support_levels", support);
            let mut g = rng(seed);
            let ops: Vec<Operator> = (0..count).map(|_| positive_on_levels(self.spec.ncut(), support, &mut g)).collect();
            let fields = wigner_transform_batch(&ops, &self.grid, &self.spec)?;
            let mut t = Table::new(
                "traces",
                &["k", "trace", "integral", "relative_error", "pair", "pair_trace", "pair_integral", "pair_relative_error"],
            );
            let mut worst: f64 = 0.0;
            let mut flagged = 0;
            for k in 0..count {
                let l = (k + 1) % count;
                let tr = ops[k].trace().re;
                let int_k = fields[k].integral().re;
                let e1 = (int_k - tr).abs() / tr.abs();
                let tr2 = trace_of_product(&ops[k], &ops[l]).re;
                let int2 = fields[k].product_integral(&fields[l])?.re;
                let e2 = (int2 - tr2).abs() / tr2.abs();
                worst = worst.max(e1).max(e2);
                flagged = flagged.max(fields[k].flagged());
                t.push(vec![int(k), num(tr), num(int_k), num(e1), int(l), num(tr2), num(int2), num(e2)]);
            }
            rep.tables.push(t);
            rep.set("trace_relative_error_max", jnum(worst));
            rep.set("trace_identities_pass", worst <= self.relative_tol);
            rep.set("nodes_outside_valid_region", flagged);
        }

        if !self.moyal.is_empty() {
            let mut t = Table::new("moyal", &["a", "b", "sup", "nodes"]);
            for (na, nb, a, b) in &self.moyal {
                let r = moyal_consistency_check(a, b, &self.grid, &self.spec)?;
                t.push(vec![na.clone(), nb.clone(), num(r.sup), int(r.nodes)]);
            }
            rep.tables.push(t);
        }

        for (name, op) in &self.fields {
            let f = wigner_transform(op, &self.grid, &self.spec)?;
            let mut t = Table::new(&format!("field_{name}"), &["q", "p", "re", "im", "valid"]);
            for (k, (q, p)) in self.grid.nodes().enumerate() {
                let [re, im] = complex(f.values()[k]);
                t.push(vec![num(q), num(p), re, im, f.valid()[k].to_string()]);
            }
            rep.tables.push(t);
            rep.set(&format!("field_{name}_integral"), jnum(f.integral().re));
        }
        Ok(rep)
    }
}
