use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use skfluct::bounds::near_critical_beta;
use skfluct::{beta_critical, Regime};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    VarianceScan,
    IdentityCheck,
    LemmaCheck,
    InterpolationCheck,
    DerivativeCheck,
    MgfCheck,
    Monotonicity,
    AnnealedMgf,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::VarianceScan => "variance-scan",
            Self::IdentityCheck => "identity-check",
            Self::LemmaCheck => "lemma-check",
            Self::InterpolationCheck => "interpolation-check",
            Self::DerivativeCheck => "derivative-check",
            Self::MgfCheck => "mgf-check",
            Self::Monotonicity => "monotonicity",
            Self::AnnealedMgf => "annealed-mgf",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inverse temperature: a fixed value, the critical point, or the
/// size-dependent near-critical schedule `sqrt(1/2 + d n^{-alpha})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BetaSpec {
    Fixed { value: f64 },
    Critical,
    Near { alpha: f64, d: f64 },
}

impl BetaSpec {
    pub fn at(self, n: usize) -> f64 {
        match self {
            Self::Fixed { value } => value,
            Self::Critical => beta_critical(),
            Self::Near { alpha, d } => near_critical_beta(n, alpha, d),
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            Self::Near { alpha, d } => Regime::Near { alpha, d },
            _ => Regime::Critical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Everything a run depends on. Echoed into every output file; feeding the
/// echo back through `--config` repeats the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub n: Vec<usize>,
    pub betas: Vec<BetaSpec>,
    pub samples: usize,
    pub master_seed: u64,
    /// Gauss-Legendre nodes for the variance identity.
    pub nodes: usize,
    /// Explicit `t` values; empty means the subcommand's own grid.
    pub t_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// Finite-difference step.
    pub h: f64,
    /// Largest `n` for which variance-scan also runs the overlap integral.
    pub identity_max_n: usize,
    /// 0 selects the default worker count.
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn defaults(subcommand: Subcommand) -> Self {
        let critical = vec![BetaSpec::Critical];
        let base = Self {
            subcommand,
            n: vec![8],
            betas: critical,
            samples: 2000,
            master_seed: DEFAULT_SEED,
            nodes: 16,
            t_grid: Vec::new(),
            lambda_grid: vec![0.0],
            x_grid: Vec::new(),
            h: 1e-4,
            identity_max_n: 10,
            threads: 0,
            out: None,
            format: Format::Csv,
        };
        match subcommand {
            Subcommand::VarianceScan => Self {
                n: vec![4, 8, 12, 16],
                samples: 4000,
                ..base
            },
            Subcommand::IdentityCheck => Self {
                n: vec![10],
                samples: 4000,
                ..base
            },
            Subcommand::LemmaCheck => Self {
                n: vec![6, 8, 10],
                betas: vec![BetaSpec::Fixed { value: 0.3 }, BetaSpec::Critical],
                ..base
            },
            Subcommand::InterpolationCheck => Self {
                t_grid: vec![0.2, 0.4, 0.6],
                lambda_grid: vec![0.0, 0.2],
                ..base
            },
            Subcommand::DerivativeCheck => Self {
                n: vec![6],
                samples: 4000,
                t_grid: vec![0.25, 0.5, 0.75],
                lambda_grid: vec![0.0, 0.1],
                ..base
            },
            Subcommand::MgfCheck => Self {
                n: (1..=30).collect(),
                x_grid: (1..=9).map(|i| 0.05 * i as f64).collect(),
                ..base
            },
            Subcommand::Monotonicity => Self {
                t_grid: (0..9).map(|i| i as f64 / 8.0).collect(),
                ..base
            },
            Subcommand::AnnealedMgf => Self {
                n: vec![6],
                samples: 5000,
                x_grid: vec![0.3],
                ..base
            },
        }
    }

    /// Subcommand defaults, overlaid with the fields present in `file`.
    pub fn from_file(subcommand: Subcommand, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let overlay = parse_echo(&text)?;
        let Value::Object(overlay) = overlay else {
            return Err(CliError::Config("config must be a JSON object".into()));
        };
        let mut merged = serde_json::to_value(Self::defaults(subcommand)).expect("config serializes");
        let target = merged.as_object_mut().expect("object");
        for (k, v) in overlay {
            if !target.contains_key(&k) {
                return Err(CliError::Config(format!("unknown config key `{k}`")));
            }
            target.insert(k, v);
        }
        target.insert(
            "subcommand".into(),
            serde_json::to_value(subcommand).expect("serializes"),
        );
        serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.n.is_empty() {
            return bad("empty n list");
        }
        if self.betas.is_empty() {
            return bad("no inverse temperature given");
        }
        for b in &self.betas {
            match *b {
                BetaSpec::Fixed { value } if !(value.is_finite() && value >= 0.0) => {
                    return bad("beta must be finite and nonnegative")
                }
                BetaSpec::Near { alpha, d } if !(alpha > 0.0 && d > 0.0) => {
                    return bad("near requires alpha > 0 and d > 0")
                }
                _ => {}
            }
        }
        if self.nodes == 0 {
            return bad("nodes must be positive");
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("h must be positive");
        }
        Ok(())
    }
}

/// Accepts a bare config object, a JSON result file, or a CSV result file
/// whose first line is the `# config:` echo.
fn parse_echo(text: &str) -> Result<Value, CliError> {
    let trimmed = text.trim_start();
    let json = match trimmed.strip_prefix(crate::output::CONFIG_PREFIX) {
        Some(rest) => rest.lines().next().unwrap_or_default(),
        None => trimmed,
    };
    let value: Value = serde_json::from_str(json).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(match value {
        Value::Object(mut m) if m.contains_key("rows") && m.contains_key("config") => {
            m.remove("config").expect("checked")
        }
        other => other,
    })
}

/// Per-size master seed, so that different `n` in one run use unrelated
/// disorder.
pub fn seed_for(master_seed: u64, n: usize) -> u64 {
    master_seed.wrapping_add(n as u64)
}
