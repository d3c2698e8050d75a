use std::f64::consts::PI;

use rand::Rng;
use serde::Deserialize;

use qhist_core::geomphase::{berry_phase_open_path, berry_sweep, bloch_circle, pancharatnam_product};

use crate::config::Common;
use crate::error::CliError;
use crate::output::{int, jnum, num, Report, Table};
use crate::random::rng;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Body {
    berry: Section,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    /// Polar angle of the circle.
    theta: f64,
    ns: Vec<usize>,
    #[serde(default)]
    gauge_trials: usize,
}

#[derive(Debug, Clone)]
pub struct Plan {
    theta: f64,
    ns: Vec<usize>,
    gauge: Option<(u64, usize)>,
}

impl Plan {
    pub fn build(body: Body, common: &Common) -> Result<Self, CliError> {
        let s = body.berry;
        if !(s.theta > 0.0 && s.theta < PI) {
            return Err(CliError::invalid("berry.theta must lie in (0, π)"));
        }
        if s.ns.is_empty() || s.ns.iter().any(|&n| n < 4) || s.ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::invalid("berry.ns must be increasing with every n >= 4"));
        }
        if *s.ns.last().unwrap() > 1 << 20 {
            return Err(CliError::invalid("berry.ns entries are capped at 2^20"));
        }
        let gauge = match s.gauge_trials {
            0 => None,
            k => Some((common.require_seed("berry.gauge_trials")?, k)),
        };
        Ok(Self { theta: s.theta, ns: s.ns, gauge })
    }

    pub fn execute(&self, _common: &Common) -> Result<Report, CliError> {
        let mut rep = Report::default();
        rep.meta("dim", 2);
        rep.meta("theta", num(self.theta));
        rep.meta("extrapolation", "Richardson over the halving sequence ending at max n");
        let sw = berry_sweep(self.theta, &self.ns)?;
        let mut t = Table::new("phases", &["n", "phase", "error_vs_limit", "error_vs_exact"]);
        let mut errors = Vec::with_capacity(self.ns.len());
        for (&n, &ph) in sw.ns.iter().zip(&sw.phases) {
            let e = (ph - sw.extrapolated).abs();
            errors.push(e);
            t.push(vec![int(n), num(ph), num(e), num((ph - sw.exact).abs())]);
        }
        rep.tables.push(t);
        rep.set("extrapolated", jnum(sw.extrapolated));
        rep.set("exact", jnum(sw.exact));
        rep.set("final_error_vs_limit", jnum(*errors.last().unwrap()));
        rep.set("error_non_increasing", errors.windows(2).all(|w| w[1] <= w[0]));

        let nmax = *self.ns.last().unwrap();
        let path = bloch_circle(self.theta, nmax)?;
        let retraced = berry_phase_open_path(&path.retraced()?)?;
        rep.set("retraced_phase", jnum(retraced));

        if let Some((seed, trials)) = self.gauge {
            let base = pancharatnam_product(&path, true)?;
            let mut g = rng(seed);
            let mut t = Table::new("gauge", &["trial", "product_deviation", "phase_deviation"]);
            let mut worst: f64 = 0.0;
            for k in 0..trials {
                let phases: Vec<f64> = (0..path.len()).map(|_| g.random_range(-PI..PI)).collect();
                let z = pancharatnam_product(&path.regauged(&phases)?, true)?;
                let dev = (z - base).norm();
                worst = worst.max(dev);
                t.push(vec![int(k), num(dev), num((z / base).arg().abs())]);
            }
            rep.tables.push(t);
            rep.set("gauge_deviation_max", jnum(worst));
        }
        Ok(rep)
    }
}
