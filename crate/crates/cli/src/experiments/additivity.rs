use serde::Deserialize;

use qhist_core::histories::SystemSpec;
use qhist_core::phasespace::FockSpec;
use qhist_core::wigner::{additivity_check, in_valid_region, ChainNode, PhaseSpaceGrid};

use crate::config::{Common, OscillatorSection};
use crate::error::CliError;
use crate::output::{complex, int, jnum, num, Report, Table};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Body {
    oscillator: OscillatorSection,
    additivity: Section,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    chain_a: Vec<NodeSection>,
    #[serde(default)]
    chain_b: Vec<NodeSection>,
    /// Points per axis on the calibrated box, in sweep order. Defaults to the
    /// calibrated grid and its 2x refinement.
    nodes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSection {
    t: f64,
    q: f64,
    p: f64,
}

#[derive(Debug, Clone)]
pub struct Plan {
    spec: FockSpec,
    sys: SystemSpec,
    chain_a: Vec<ChainNode>,
    chain_b: Vec<ChainNode>,
    grids: Vec<PhaseSpaceGrid>,
}

impl Plan {
    pub fn build(body: Body, common: &Common) -> Result<Self, CliError> {
        let s = body.additivity;
        let (spec, sys) = body.oscillator.system(&common.limits)?;
        if s.chain_a.is_empty() {
            return Err(CliError::invalid("additivity.chain_a needs at least one node"));
        }
        if s.chain_a.len() > 3 || s.chain_b.len() > 3 {
            return Err(CliError::invalid("chains are limited to 3 nodes"));
        }
        let conv = |v: &[NodeSection], what: &str| -> Result<Vec<ChainNode>, CliError> {
            v.iter()
                .map(|n| {
                    if !(n.t.is_finite() && n.q.is_finite() && n.p.is_finite()) || !in_valid_region(n.q, n.p, &spec) {
                        return Err(CliError::invalid(format!("{what}: node ({}, {}) outside the valid region", n.q, n.p)));
                    }
                    Ok(ChainNode::new(n.t, n.q, n.p))
                })
                .collect()
        };
        let chain_a = conv(&s.chain_a, "additivity.chain_a")?;
        let chain_b = conv(&s.chain_b, "additivity.chain_b")?;
        let grids = match s.nodes {
            Some(ns) => {
                if ns.is_empty() || ns.iter().any(|&n| n > 512) {
                    return Err(CliError::invalid("additivity.nodes must be non-empty with entries <= 512"));
                }
                ns.iter().map(|&n| PhaseSpaceGrid::calibrated(&spec, n)).collect::<Result<Vec<_>, _>>()
            }
            None => PhaseSpaceGrid::calibrated_default(&spec).and_then(|g| {
                let r = g.refined()?;
                Ok(vec![g, r])
            }),
        }
        .map_err(CliError::context("additivity.nodes"))?;
        Ok(Self { spec, sys, chain_a, chain_b, grids })
    }

    pub fn execute(&self, _common: &Common) -> Result<Report, CliError> {
        let mut rep = Report::default();
        rep.meta("ncut", self.spec.ncut());
        rep.meta("omega", num(self.spec.omega()));
        rep.meta("quadrature", "trapezoid on the calibrated box");
        rep.meta("n", self.chain_a.len());
        rep.meta("m", self.chain_b.len());
        let mut t = Table::new(
            "refinement",
            &["nodes", "integral_re", "integral_im", "reference_re", "reference_im", "residual", "ratio_to_previous"],
        );
        let mut residuals: Vec<f64> = Vec::with_capacity(self.grids.len());
        for g in &self.grids {
            let r = additivity_check(&self.chain_a, &self.chain_b, &self.sys, &self.spec, g)?;
            let ratio = residuals.last().map_or(String::new(), |p| num(r.residual / p));
            residuals.push(r.residual);
            let [ire, iim] = complex(r.integral);
            let [rre, rim] = complex(r.reference);
            t.push(vec![int(g.nq()), ire, iim, rre, rim, num(r.residual), ratio]);
        }
        rep.tables.push(t);
        rep.set("residual_first", jnum(residuals[0]));
        rep.set("residual_last", jnum(*residuals.last().unwrap()));
        if residuals.len() >= 2 {
            rep.set("refinement_ratio", jnum(residuals[1] / residuals[0]));
        }
        Ok(rep)
    }
}
