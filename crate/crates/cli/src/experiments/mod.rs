use crate::config::{Common, ExperimentConfig};
use crate::error::CliError;
use crate::output::Report;

pub mod additivity;
pub mod berry;
pub mod coherent;
pub mod consistency;
pub mod ctp;
pub mod stochastic;
pub mod wigner;

/// A fully validated experiment, ready to execute.
#[derive(Debug, Clone)]
pub enum Plan {
    Consistency(consistency::Plan),
    Berry(berry::Plan),
    CoherentAction(coherent::Plan),
    WignerIdentities(wigner::Plan),
    MultiTimeAdditivity(additivity::Plan),
    CtpCorrelators(ctp::Plan),
    StochasticLimit(stochastic::Plan),
}

impl Plan {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let c = &cfg.common;
        Ok(match c.kind.as_str() {
            "consistency" => Plan::Consistency(consistency::Plan::build(cfg.body()?, c)?),
            "berry" => Plan::Berry(berry::Plan::build(cfg.body()?, c)?),
            "coherent-action" => Plan::CoherentAction(coherent::Plan::build(cfg.body()?, c)?),
            "wigner-identities" => Plan::WignerIdentities(wigner::Plan::build(cfg.body()?, c)?),
            "multi-time-additivity" => Plan::MultiTimeAdditivity(additivity::Plan::build(cfg.body()?, c)?),
            "ctp-correlators" => Plan::CtpCorrelators(ctp::Plan::build(cfg.body()?, c)?),
            "stochastic-limit" => Plan::StochasticLimit(stochastic::Plan::build(cfg.body()?, c)?),
            other => return Err(CliError::invalid(format!("unhandled kind `{other}`"))),
        })
    }

    pub fn execute(&self, common: &Common) -> Result<Report, CliError> {
        match self {
            Plan::Consistency(p) => p.execute(common),
            Plan::Berry(p) => p.execute(common),
            Plan::CoherentAction(p) => p.execute(common),
            Plan::WignerIdentities(p) => p.execute(common),
            Plan::MultiTimeAdditivity(p) => p.execute(common),
            Plan::CtpCorrelators(p) => p.execute(common),
            Plan::StochasticLimit(p) => p.execute(common),
        }
    }
}
