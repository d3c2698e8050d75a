use std::collections::BTreeMap;

use serde::Deserialize;

use qhist_core::ctp::{
    correlator_batch, ctp_generating_functional, fd_step, CorrelatorRequest, SmearingVector, FD_STEP, MAX_ORDER,
    RESIDUAL_THRESHOLD,
};
use qhist_core::hilbert::Operator;
use qhist_core::histories::{SystemSpec, TimeGrid};

use crate::config::{lookup, named_operators, Common, Matrix, SystemSection};
use crate::error::CliError;
use crate::output::{complex, int, jnum, list, num, Report, Table};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Body {
    system: SystemSection,
    #[serde(default)]
    operators: BTreeMap<String, Matrix>,
    ctp: Section,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    observable: String,
    times: Vec<f64>,
    requests: Vec<RequestSection>,
    /// Smearing used for the normalization checks `Z[J, J] = 1`.
    #[serde(default)]
    smearing: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestSection {
    #[serde(default)]
    plus: Vec<f64>,
    #[serde(default)]
    minus: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Plan {
    sys: SystemSpec,
    a: Operator,
    observable: String,
    grid: TimeGrid,
    requests: Vec<CorrelatorRequest>,
    smearing: Option<SmearingVector>,
}

impl Plan {
    pub fn build(body: Body, common: &Common) -> Result<Self, CliError> {
        let s = body.ctp;
        let sys = body.system.build(&common.limits)?;
        let ops = named_operators(&body.operators, sys.dim())?;
        let a = lookup(&ops, &s.observable)?.clone();
        if !a.is_hermitian(1e-9) {
            return Err(CliError::invalid("ctp.observable must be Hermitian"));
        }
        let grid = TimeGrid::new(s.times).map_err(CliError::context("ctp.times"))?;
        let requests = s
            .requests
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let what = format!("ctp.requests[{k}]");
                for &t in r.plus.iter().chain(&r.minus) {
                    if grid.position(t).is_none() {
                        return Err(CliError::invalid(format!("{what}: time {t} is not on ctp.times")));
                    }
                }
                CorrelatorRequest::new(r.plus.clone(), r.minus.clone()).map_err(CliError::context(&what))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if requests.is_empty() {
            return Err(CliError::invalid("ctp.requests is empty"));
        }
        let smearing = s
            .smearing
            .map(|v| SmearingVector::new(grid.clone(), v).map_err(CliError::context("ctp.smearing")))
            .transpose()?;
        Ok(Self { sys, a, observable: s.observable, grid, requests, smearing })
    }

    pub fn execute(&self, _common: &Common) -> Result<Report, CliError> {
        let mut rep = Report::default();
        rep.meta("dim", self.sys.dim());
        rep.meta("observable", &self.observable);
        rep.meta("times", list(self.grid.times()));
        rep.meta("fd_step", format!("{} * 10^((order-1)/2), one Richardson halving", num(FD_STEP)));
        rep.meta("residual_threshold", num(RESIDUAL_THRESHOLD));
        rep.meta("max_order", MAX_ORDER);
        let rows = correlator_batch(&self.a, &self.grid, &self.requests, &self.sys)?;
        let mut t = Table::new(
            "correlators",
            &["r", "s", "plus_times", "minus_times", "re", "im", "fd_re", "fd_im", "residual", "step"],
        );
        let mut worst: f64 = 0.0;
        for g in &rows {
            let [re, im] = complex(g.value);
            let [fre, fim] = complex(g.finite_difference);
            worst = worst.max(g.residual);
            debug_assert_eq!(g.step, fd_step(g.request.order()));
            t.push(vec![
                int(g.request.r()),
                int(g.request.s()),
                list(&g.request.plus),
                list(&g.request.minus),
                re,
                im,
                fre,
                fim,
                num(g.residual),
                num(g.step),
            ]);
        }
        rep.tables.push(t);
        rep.set("requests", rows.len());
        rep.set("residual_max", jnum(worst));

        let zero = SmearingVector::zero(self.grid.clone());
        let z00 = ctp_generating_functional(&self.a, &zero, &zero, &self.sys)?;
        rep.set("z_zero_deviation", jnum((z00 - 1.0).norm()));
        if let Some(j) = &self.smearing {
            let zjj = ctp_generating_functional(&self.a, j, j, &self.sys)?;
            let zj0 = ctp_generating_functional(&self.a, j, &zero, &self.sys)?;
            let z0j = ctp_generating_functional(&self.a, &zero, j, &self.sys)?;
            rep.set("z_branch_cancel_deviation", jnum((zjj - 1.0).norm()));
            rep.set("z_hermiticity_deviation", jnum((zj0.conj() - z0j).norm()));
        }
        Ok(rep)
    }
}
