use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use qhist_core::hilbert::{DensityMatrix, Operator, DEFAULT_SIZE_CAP, DEFAULT_TOL};
use qhist_core::histories::SystemSpec;
use qhist_core::phasespace::{
    momentum_operator, number_operator, oscillator_hamiltonian, oscillator_system, position_operator, FockSpec,
    PhasePoint,
};

use crate::error::CliError;

/// Experiment kinds in listing order, with a one-line description.
pub const KINDS: [(&str, &str); 7] = [
    ("consistency", "decoherence matrix of a product family, additivity defects, time reversal, randomized axiom suite"),
    ("berry", "Pancharatnam phase of a Bloch circle against its refinement limit"),
    ("coherent-action", "coherent-history decoherence functional against the discretized action"),
    ("wigner-identities", "Wigner trace identities and commutator/Poisson bracket checks"),
    ("multi-time-additivity", "marginal of a multi-time Wigner chain under grid refinement"),
    ("ctp-correlators", "closed-time-path correlators from operator chains and finite differences"),
    ("stochastic-limit", "Gaussian smearing sweep: decoherence onset, probabilities, Kolmogorov residual"),
];

const COMMON_KEYS: [&str; 5] = ["kind", "seed", "workers", "output", "limits"];

pub type Matrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "default_max_seconds")]
    pub max_seconds: f64,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
    #[serde(default = "default_size_cap")]
    pub size_cap: usize,
}

fn default_max_seconds() -> f64 {
    600.0
}
fn default_max_dim() -> usize {
    256
}
fn default_size_cap() -> usize {
    DEFAULT_SIZE_CAP
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_seconds: default_max_seconds(), max_dim: default_max_dim(), size_cap: default_size_cap() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

/// Settings shared by every experiment kind.
#[derive(Debug, Clone)]
pub struct Common {
    pub kind: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub limits: Limits,
    /// SHA-256 of the config file bytes.
    pub config_hash: String,
}

impl Common {
    pub fn require_seed(&self, what: &str) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::invalid(format!("{what} is randomized and needs a top-level `seed`")))
    }
}

/// A config split into its shared settings and the kind-specific remainder.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub common: Common,
    pub body: toml::Table,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Nearest known kind by edit distance.
pub fn nearest_kind(name: &str) -> &'static str {
    let kinds = KINDS.iter().map(|(k, _)| *k);
    if let Some(k) = kinds.clone().find(|k| !name.is_empty() && k.starts_with(name)) {
        return k;
    }
    kinds.min_by_key(|k| strsim::levenshtein(name, k)).expect("non-empty kind list")
}

pub fn check_kind(name: &str) -> Result<(), CliError> {
    if KINDS.iter().any(|(k, _)| *k == name) {
        Ok(())
    } else {
        Err(CliError::invalid(format!(
            "unknown experiment kind `{name}`; did you mean `{}`?",
            nearest_kind(name)
        )))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| CliError::invalid("config is not UTF-8"))?;
        Self::parse(text, hash_bytes(&bytes))
    }

    pub fn parse(text: &str, config_hash: String) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::invalid(e.to_string()))?;
        let kind = match table.get("kind") {
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(CliError::invalid("`kind` must be a string")),
            None => return Err(CliError::invalid("missing `kind`")),
        };
        check_kind(&kind)?;
        let seed = match table.get("seed") {
            None => None,
            Some(toml::Value::Integer(s)) if *s >= 0 => Some(*s as u64),
            Some(_) => return Err(CliError::invalid("`seed` must be a non-negative integer")),
        };
        let workers = match table.get("workers") {
            None => 1,
            Some(toml::Value::Integer(w)) if *w >= 1 && *w <= 1024 => *w as usize,
            Some(_) => return Err(CliError::invalid("`workers` must be an integer in 1..=1024")),
        };
        let output: OutputSection = section(&table, "output")?.unwrap_or_default();
        let limits: Limits = section(&table, "limits")?.unwrap_or_default();
        if !(limits.max_seconds > 0.0) {
            return Err(CliError::invalid("limits.max_seconds must be positive"));
        }
        for k in COMMON_KEYS {
            table.remove(k);
        }
        let output_dir = output.dir.unwrap_or_else(|| PathBuf::from("out").join(&kind));
        Ok(Self {
            common: Common { kind, seed, workers, output_dir, limits, config_hash },
            body: table,
        })
    }

    /// Deserializes the kind-specific part, rejecting unknown keys.
    pub fn body<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        toml::Value::Table(self.body.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::invalid(format!("{}: {}", self.common.kind, e.message())))
    }
}

fn section<T: DeserializeOwned>(table: &toml::Table, key: &str) -> Result<Option<T>, CliError> {
    table
        .get(key)
        .map(|v| v.clone().try_into().map_err(|e: toml::de::Error| CliError::invalid(format!("{key}: {}", e.message()))))
        .transpose()
}

pub fn operator(m: &Matrix, what: &str) -> Result<Operator, CliError> {
    Operator::try_from(m.clone()).map_err(CliError::context(what))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub hamiltonian: Matrix,
    pub initial_state: Matrix,
    pub final_weight: Option<Matrix>,
}

impl SystemSection {
    pub fn build(&self, limits: &Limits) -> Result<SystemSpec, CliError> {
        let h = operator(&self.hamiltonian, "system.hamiltonian")?;
        check_dim(h.dim(), limits)?;
        let rho = operator(&self.initial_state, "system.initial_state")?;
        let rho = DensityMatrix::new(rho, DEFAULT_TOL).map_err(CliError::context("system.initial_state"))?;
        let mut sys = SystemSpec::new(h, rho, DEFAULT_TOL).map_err(CliError::context("system"))?;
        if let Some(w) = &self.final_weight {
            sys = sys.with_final_weight(operator(w, "system.final_weight")?).map_err(CliError::context("system.final_weight"))?;
        }
        Ok(sys)
    }
}

pub fn check_dim(dim: usize, limits: &Limits) -> Result<(), CliError> {
    if dim > limits.max_dim {
        return Err(CliError::invalid(format!("dimension {dim} exceeds limits.max_dim = {}", limits.max_dim)));
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSection {
    pub ncut: usize,
    pub omega: f64,
    /// Initial coherent-state label `[χ, ξ]`.
    #[serde(default)]
    pub z0: [f64; 2],
}

impl OscillatorSection {
    pub fn spec(&self, limits: &Limits) -> Result<FockSpec, CliError> {
        check_dim(self.ncut, limits)?;
        FockSpec::new(self.ncut, self.omega).map_err(CliError::context("oscillator"))
    }

    pub fn z0(&self) -> Result<PhasePoint, CliError> {
        PhasePoint::new(self.z0[0], self.z0[1]).map_err(CliError::context("oscillator.z0"))
    }

    pub fn system(&self, limits: &Limits) -> Result<(FockSpec, SystemSpec), CliError> {
        let spec = self.spec(limits)?;
        let sys = oscillator_system(&spec, &self.z0()?).map_err(CliError::context("oscillator"))?;
        Ok((spec, sys))
    }
}

/// Oscillator operators addressable by name: `q`, `p`, `q2`, `p2`, `qp` (symmetrized), `h`, `n`.
pub fn oscillator_operator(name: &str, spec: &FockSpec) -> Result<Operator, CliError> {
    let q = position_operator(spec);
    let p = momentum_operator(spec);
    Ok(match name {
        "q" => q,
        "p" => p,
        "q2" => &q * &q,
        "p2" => &p * &p,
        "qp" => (&(&q * &p) + &(&p * &q)).scale(qhist_core::hilbert::c(0.5, 0.0)),
        "h" => oscillator_hamiltonian(spec),
        "n" => number_operator(spec.ncut()),
        _ => return Err(CliError::invalid(format!("unknown oscillator operator `{name}` (q, p, q2, p2, qp, h, n)"))),
    })
}

/// Named matrices from an `[operators]` table.
pub fn named_operators(raw: &BTreeMap<String, Matrix>, dim: usize) -> Result<BTreeMap<String, Operator>, CliError> {
    raw.iter()
        .map(|(k, m)| {
            let op = operator(m, &format!("operators.{k}"))?;
            if op.dim() != dim {
                return Err(CliError::invalid(format!("operators.{k} has dimension {}, system has {dim}", op.dim())));
            }
            Ok((k.clone(), op))
        })
        .collect()
}

pub fn lookup<'a>(ops: &'a BTreeMap<String, Operator>, name: &str) -> Result<&'a Operator, CliError> {
    ops.get(name).ok_or_else(|| CliError::invalid(format!("undefined operator `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_match() {
        assert_eq!(nearest_kind("consistancy"), "consistency");
        assert_eq!(nearest_kind("wigner"), "wigner-identities");
        assert_eq!(nearest_kind("ctp"), "ctp-correlators");
        assert_eq!(nearest_kind("bery"), "berry");
        let e = check_kind("stochastic").unwrap_err();
        assert!(e.to_string().contains("stochastic-limit"));
    }

    #[test]
    fn common_keys_are_split_off() {
        let cfg = ExperimentConfig::parse(
            "kind = \"berry\"\nseed = 3\nworkers = 2\n[output]\ndir = \"x\"\n[berry]\ntheta = 1.0\nns = [4]\n",
            "h".into(),
        )
        .unwrap();
        assert_eq!(cfg.common.seed, Some(3));
        assert_eq!(cfg.common.workers, 2);
        assert_eq!(cfg.common.output_dir, PathBuf::from("x"));
        assert_eq!(cfg.body.keys().collect::<Vec<_>>(), vec!["berry"]);
    }

    #[test]
    fn malformed_input_is_a_validation_error() {
        for text in ["kind = 3", "seed = 1", "kind = \"berry\"\nseed = -1", "kind = \"berry\"\nworkers = 0", "kind = \"berry\" ["] {
            let e = ExperimentConfig::parse(text, String::new()).unwrap_err();
            assert_eq!(e.code(), crate::error::EXIT_VALIDATION, "{text}");
        }
    }
}
