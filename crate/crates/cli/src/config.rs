//! Experiment configuration: parsing, defaults and guards.

use polymorph::finite_space::MAX_ENUMERATION;
use polymorph::polymorphism::KernelWire;
use polymorph::scalar::parse_rational;
use polymorph::symbolic::SymbolicConfig;
use polymorph::Rational;
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Markov-operator axioms and the anti-isomorphism on a kernel corpus.
    Axioms,
    /// Zero-diagonal coupling of a probability vector.
    Coupling,
    /// Primality by partition scan, cross-checked against the isometry scan.
    ScanPrime,
    /// Isometric-subalgebra scan under both invariance conventions.
    ScanIsometry,
    /// Distances of kernel powers to the zero polymorphism.
    Mixing,
    /// Stabilized Λ- and Γ-pairings on the symbolic model.
    Limits,
    /// Intertwining residuals on the symbolic model.
    Intertwine,
    /// `⟨Φ_k f, g⟩ - ⟨f, g⟩` as a function of `k`.
    Corollary1,
    /// Sampled Markov chain and block-entropy estimates.
    Chain,
    /// `⟨Πⁿ f, g⟩` sequences on the symbolic model.
    MixingScan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Axioms => "axioms",
            Command::Coupling => "coupling",
            Command::ScanPrime => "scan-prime",
            Command::ScanIsometry => "scan-isometry",
            Command::Mixing => "mixing",
            Command::Limits => "limits",
            Command::Intertwine => "intertwine",
            Command::Corollary1 => "corollary1",
            Command::Chain => "chain",
            Command::MixingScan => "mixing-scan",
        }
    }

    pub fn is_symbolic(self) -> bool {
        matches!(self, Command::Limits | Command::Intertwine | Command::Corollary1 | Command::MixingScan)
    }

    fn uses_space_size(self) -> bool {
        matches!(self, Command::Axioms | Command::ScanPrime | Command::ScanIsometry)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    Float,
}

/// A kernel given by file path or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSource {
    Path(String),
    Inline(KernelWire),
}

fn default_size_limit() -> usize {
    MAX_ENUMERATION
}

fn optional_numeric_strings<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<String>>, D::Error> {
    polymorph::io::numeric_strings(d).map(Some)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Extra kernels on top of the bundled corpus.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernels: Vec<KernelSource>,
    /// Probability vector for `coupling`.
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "optional_numeric_strings")]
    pub p: Option<Vec<String>>,
    /// Largest generated space for the scans, sweep length `N` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Number of generated kernels or symbolic test pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default = "default_size_limit")]
    pub size_limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbolic: Option<SymbolicConfig>,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            mode: Mode::default(),
            seed: 0,
            kernels: Vec::new(),
            p: None,
            n: None,
            count: None,
            size_limit: default_size_limit(),
            symbolic: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, Vec<String>> {
        serde_json::from_str(text).map_err(|e| vec![format!("config: {e}")])
    }

    /// Fills defaults and checks every guard, collecting all violations.
    pub fn validate(&self) -> Result<Self, Vec<String>> {
        let mut cfg = self.clone();
        let mut errors = Vec::new();

        if cfg.size_limit > MAX_ENUMERATION {
            errors.push(format!("size_limit: size_limit exceeded ({} > {MAX_ENUMERATION})", cfg.size_limit));
        }
        let (n_default, count_default) = match cfg.command {
            Command::Axioms => (4, 20),
            Command::ScanPrime | Command::ScanIsometry => (5, 100),
            Command::Mixing => (60, 0),
            Command::Chain => (10_000, 0),
            Command::Coupling => (0, 0),
            Command::Limits | Command::Intertwine | Command::Corollary1 | Command::MixingScan => (0, 4),
        };

        if cfg.command.is_symbolic() {
            let mut sym = cfg.symbolic.take().unwrap_or_else(SymbolicConfig::biased_four);
            if let Some(n) = cfg.n {
                sym.sweeps.n = n;
            }
            cfg.n = Some(sym.sweeps.n);
            if let Err(e) = sym.validate() {
                errors.push(format!("symbolic: {e}"));
            }
            cfg.symbolic = Some(sym);
        } else {
            cfg.n = match (cfg.n, cfg.command) {
                (_, Command::Coupling) => None,
                (Some(n), _) => Some(n),
                (None, _) => Some(n_default),
            };
            if cfg.symbolic.is_some() {
                errors.push(format!("symbolic: not used by {}", cfg.command.name()));
            }
        }
        if count_default > 0 {
            cfg.count.get_or_insert(count_default);
        } else if cfg.count.is_some() {
            errors.push(format!("count: not used by {}", cfg.command.name()));
        }

        if let Some(n) = cfg.n {
            if cfg.command.uses_space_size() {
                let limit = cfg.size_limit.min(MAX_ENUMERATION);
                if n > limit {
                    errors.push(format!("n: size_limit exceeded ({n} > {limit})"));
                }
                if n == 0 {
                    errors.push("n: must be at least 1".into());
                }
            } else if n == 0 && matches!(cfg.command, Command::Mixing | Command::Chain) {
                errors.push("n: must be at least 1".into());
            }
        }

        match (&cfg.p, cfg.command) {
            (None, Command::Coupling) => errors.push("p: required for coupling".into()),
            (Some(_), c) if c != Command::Coupling => errors.push(format!("p: not used by {}", c.name())),
            (Some(p), _) => {
                if let Err(e) = check_probability_vector(p) {
                    errors.push(format!("p: {e}"));
                }
            }
            _ => {}
        }

        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(errors)
        }
    }
}

fn check_probability_vector(p: &[String]) -> Result<(), String> {
    let values =
        p.iter().map(|s| parse_rational(s).map_err(|e| e.to_string())).collect::<Result<Vec<Rational>, _>>()?;
    if values.len() < 2 {
        return Err("not a probability vector (needs at least two entries)".into());
    }
    if values.iter().any(|v| *v < Rational::from_integer(0.into())) {
        return Err("not a probability vector (negative entry)".into());
    }
    let total: Rational = values.iter().cloned().sum();
    if total != Rational::from_integer(1.into()) {
        return Err(format!("not a probability vector (sums to {total})"));
    }
    Ok(())
}

/// Comma-separated shorthand as used by `--p`.
pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}
