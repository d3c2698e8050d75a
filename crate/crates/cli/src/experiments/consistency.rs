use std::collections::BTreeMap;

use serde::Deserialize;

use qhist_core::hilbert::Operator;
use qhist_core::histories::{
    additivity_defect, consistency_check, decoherence_functional, product_family, reversal_identity_check,
    HistoryProposition, SystemSpec, TimeGrid, DEFAULT_CONSISTENCY_EPS,
};

use crate::config::{lookup, named_operators, Common, Matrix, SystemSection};
use crate::error::CliError;
use crate::output::{complex, int, jnum, num, Report, Table};
use crate::random::{axiom_deviations, boundary_deviation, instance, rng};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Body {
    system: SystemSection,
    #[serde(default)]
    operators: BTreeMap<String, Matrix>,
    consistency: Section,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    times: Vec<f64>,
    /// Per-time lists of operator names; the family is every combination.
    partitions: Vec<Vec<String>>,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default)]
    defect_pairs: Vec<PairSection>,
    #[serde(default)]
    time_reversal: bool,
    random: Option<RandomSection>,
}

fn default_eps() -> f64 {
    DEFAULT_CONSISTENCY_EPS
}
fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairSection {
    a: Vec<String>,
    b: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomSection {
    instances: usize,
    #[serde(default)]
    boundary_instances: usize,
    #[serde(default = "default_max_dim")]
    max_dim: usize,
    #[serde(default = "default_max_times")]
    max_times: usize,
}

fn default_max_dim() -> usize {
    4
}
fn default_max_times() -> usize {
    4
}

#[derive(Debug, Clone)]
struct RandomPlan {
    seed: u64,
    instances: usize,
    boundary_instances: usize,
    max_dim: usize,
    max_times: usize,
}

#[derive(Debug, Clone)]
pub struct Plan {
    sys: SystemSpec,
    family: Vec<HistoryProposition>,
    labels: Vec<String>,
    pairs: Vec<(String, String, HistoryProposition, HistoryProposition)>,
    eps: f64,
    tol: f64,
    time_reversal: bool,
    random: Option<RandomPlan>,
    size_cap: usize,
}

fn label(names: &[String]) -> String {
    names.join("|")
}

impl Plan {
    pub fn build(body: Body, common: &Common) -> Result<Self, CliError> {
        let s = body.consistency;
        let sys = body.system.build(&common.limits)?;
        let ops = named_operators(&body.operators, sys.dim())?;
        let grid = TimeGrid::new(s.times.clone()).map_err(CliError::context("consistency.times"))?;
        if s.partitions.len() != grid.len() {
            return Err(CliError::invalid(format!(
                "consistency.partitions has {} entries for {} times",
                s.partitions.len(),
                grid.len()
            )));
        }
        if !(s.eps >= 0.0) || !(s.tol > 0.0) {
            return Err(CliError::invalid("consistency.eps must be >= 0 and tol > 0"));
        }
        let parts: Vec<Vec<Operator>> = s
            .partitions
            .iter()
            .map(|p| p.iter().map(|n| lookup(&ops, n).cloned()).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()?;
        let family = product_family(&grid, &parts, s.tol).map_err(CliError::context("consistency.partitions"))?;
        let mut labels: Vec<Vec<String>> = vec![vec![]];
        for p in &s.partitions {
            labels = labels
                .into_iter()
                .flat_map(|l| p.iter().map(move |n| [l.clone(), vec![n.clone()]].concat()))
                .collect();
        }
        let labels = labels.iter().map(|l| label(l)).collect();

        let history = |names: &[String], what: &str| -> Result<HistoryProposition, CliError> {
            let ps = names.iter().map(|n| lookup(&ops, n).cloned()).collect::<Result<Vec<_>, _>>()?;
            HistoryProposition::new(grid.clone(), ps, s.tol).map_err(CliError::context(what))
        };
        let pairs = s
            .defect_pairs
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let what = format!("consistency.defect_pairs[{k}]");
                Ok((label(&p.a), label(&p.b), history(&p.a, &what)?, history(&p.b, &what)?))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        if s.time_reversal && !grid.is_symmetric() {
            return Err(CliError::invalid("consistency.time_reversal needs times symmetric about 0"));
        }
        let random = match s.random {
            None => None,
            Some(r) => {
                if r.max_dim < 2 || r.max_times < 1 {
                    return Err(CliError::invalid("consistency.random needs max_dim >= 2 and max_times >= 1"));
                }
                Some(RandomPlan {
                    seed: common.require_seed("consistency.random")?,
                    instances: r.instances,
                    boundary_instances: r.boundary_instances,
                    max_dim: r.max_dim,
                    max_times: r.max_times,
                })
            }
        };
        Ok(Self {
            sys,
            family,
            labels,
            pairs,
            eps: s.eps,
            tol: s.tol,
            time_reversal: s.time_reversal,
            random,
            size_cap: common.limits.size_cap,
        })
    }

    pub fn execute(&self, _common: &Common) -> Result<Report, CliError> {
        let mut rep = Report::default();
        rep.meta("dim", self.sys.dim());
        rep.meta("times", self.family[0].len());
        rep.meta("eps", num(self.eps));
        rep.meta("tol", num(self.tol));
        rep.meta("size_cap", self.size_cap);

        let cr = consistency_check(&self.family, &self.sys, self.eps, self.tol)?;
        let m = &cr.matrix;
        let mut t = Table::new("decoherence", &["i", "j", "history_i", "history_j", "re", "im"]);
        for i in 0..m.len() {
            for j in 0..m.len() {
                let [re, im] = complex(m.get(i, j));
                t.push(vec![int(i), int(j), self.labels[i].clone(), self.labels[j].clone(), re, im]);
            }
        }
        rep.tables.push(t);
        rep.set("consistent", cr.consistent);
        rep.set("max_off_diagonal", jnum(m.max_off_diagonal));
        rep.set("diagonal_sum", jnum(m.diagonal_sum));
        rep.set("family_size", m.len());

        if !self.pairs.is_empty() {
            let mut t =
                Table::new("defects", &["a", "b", "defect", "interference", "re_d", "im_d", "residual"]);
            let mut worst: f64 = 0.0;
            let mut min_defect = f64::INFINITY;
            for (la, lb, a, b) in &self.pairs {
                let r = additivity_defect(a, b, &self.sys, self.tol)?;
                let d = decoherence_functional(a, b, &self.sys)?;
                let res = (r.defect - r.interference).abs();
                worst = worst.max(res);
                min_defect = min_defect.min(r.defect);
                let [re, im] = complex(d);
                t.push(vec![la.clone(), lb.clone(), num(r.defect), num(r.interference), re, im, num(res)]);
            }
            rep.tables.push(t);
            rep.set("defect_residual_max", jnum(worst));
            rep.set("defect_min", jnum(min_defect));
        }

        if self.time_reversal {
            let mut t = Table::new("reversal", &["i", "j", "residual"]);
            let mut worst: f64 = 0.0;
            for i in 0..self.family.len() {
                for j in 0..self.family.len() {
                    let r = reversal_identity_check(&self.family[i], &self.family[j], &self.sys)?;
                    worst = worst.max(r);
                    t.push(vec![int(i), int(j), num(r)]);
                }
            }
            rep.tables.push(t);
            rep.set("reversal_residual_max", jnum(worst));
        }

        if let Some(r) = &self.random {
            rep.meta("random_max_dim", r.max_dim);
            rep.meta("random_max_times", r.max_times);
            let mut g = rng(r.seed);
            let mut t = Table::new(
                "axioms",
                &["instance", "dim", "times", "normalization", "hermiticity", "null", "additivity", "positivity"],
            );
            let mut worst: f64 = 0.0;
            for k in 0..r.instances {
                let inst = instance(&mut g, r.max_dim, r.max_times, false, self.size_cap)?;
                let a = axiom_deviations(&inst)?;
                worst = worst.max(a.max());
                t.push(vec![
                    int(k),
                    int(inst.dim()),
                    int(inst.times()),
                    num(a.normalization),
                    num(a.hermiticity),
                    num(a.null),
                    num(a.additivity),
                    num(a.positivity),
                ]);
            }
            rep.tables.push(t);
            rep.set("axiom_instances", r.instances);
            rep.set("axiom_deviation_max", jnum(worst));

            let mut t = Table::new("boundary", &["instance", "dim", "times", "deviation"]);
            let mut worst: f64 = 0.0;
            for k in 0..r.boundary_instances {
                let inst = instance(&mut g, r.max_dim, r.max_times, true, self.size_cap)?;
                let dev = boundary_deviation(&inst, self.size_cap)?;
                worst = worst.max(dev);
                t.push(vec![int(k), int(inst.dim()), int(inst.times()), num(dev)]);
            }
            if r.boundary_instances > 0 {
                rep.tables.push(t);
                rep.set("boundary_instances", r.boundary_instances);
                rep.set("boundary_deviation_max", jnum(worst));
            }
        }
        Ok(rep)
    }
}
