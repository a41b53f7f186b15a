use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};
use crate::CliError;

pub const CONFIG_PREFIX: &str = "# config: ";

/// One output row. Fields that do not apply to a quantity are `None` and
/// print as empty CSV cells or JSON nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub subcommand: String,
    pub quantity: String,
    pub n: usize,
    pub beta: Option<f64>,
    pub t: Option<f64>,
    pub lambda: Option<f64>,
    pub x: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub estimate: f64,
    pub estimate_stderr: Option<f64>,
    pub reference: Option<f64>,
    pub reference_stderr: Option<f64>,
    /// Error of `estimate - reference`; the acceptance window is three times this.
    pub combined_stderr: Option<f64>,
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
    /// Present only on inequality rows.
    pub satisfied: Option<bool>,
    pub wall_seconds: f64,
}

impl ResultRecord {
    pub fn new(subcommand: &str, quantity: &str, n: usize, estimate: f64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            quantity: quantity.to_string(),
            n,
            beta: None,
            t: None,
            lambda: None,
            x: None,
            samples: None,
            seed: None,
            estimate,
            estimate_stderr: None,
            reference: None,
            reference_stderr: None,
            combined_stderr: None,
            bound: None,
            ratio: None,
            satisfied: None,
            wall_seconds: 0.0,
        }
    }

    pub const COLUMNS: [&'static str; 18] = [
        "subcommand",
        "quantity",
        "n",
        "beta",
        "t",
        "lambda",
        "x",
        "samples",
        "seed",
        "estimate",
        "estimate_stderr",
        "reference",
        "reference_stderr",
        "combined_stderr",
        "bound",
        "ratio",
        "satisfied",
        "wall_seconds",
    ];

    fn csv_fields(&self) -> [String; 18] {
        let f = |v: Option<f64>| v.map(float).unwrap_or_default();
        let u = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            self.subcommand.clone(),
            self.quantity.clone(),
            self.n.to_string(),
            f(self.beta),
            f(self.t),
            f(self.lambda),
            f(self.x),
            u(self.samples),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            float(self.estimate),
            f(self.estimate_stderr),
            f(self.reference),
            f(self.reference_stderr),
            f(self.combined_stderr),
            f(self.bound),
            f(self.ratio),
            self.satisfied.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:.3}", self.wall_seconds),
        ]
    }

    pub fn numeric_fields(&self) -> impl Iterator<Item = f64> + '_ {
        [
            self.beta,
            self.t,
            self.lambda,
            self.x,
            Some(self.estimate),
            self.estimate_stderr,
            self.reference,
            self.reference_stderr,
            self.combined_stderr,
            self.bound,
            self.ratio,
        ]
        .into_iter()
        .flatten()
    }
}

/// 17 significant digits: lossless for f64.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct BuildInfo {
    package: &'static str,
    version: &'static str,
    profile: &'static str,
}

const BUILD: BuildInfo = BuildInfo {
    package: env!("CARGO_PKG_NAME"),
    version: env!("CARGO_PKG_VERSION"),
    profile: if cfg!(debug_assertions) { "debug" } else { "release" },
};

pub fn write_records<W: Write>(out: W, cfg: &ExperimentConfig, rows: &[ResultRecord]) -> Result<(), CliError> {
    match cfg.format {
        Format::Csv => write_csv(out, cfg, rows),
        Format::Json => write_json(out, cfg, rows),
    }
}

fn write_csv<W: Write>(mut out: W, cfg: &ExperimentConfig, rows: &[ResultRecord]) -> Result<(), CliError> {
    writeln!(out, "{CONFIG_PREFIX}{}", cfg.to_json())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ResultRecord::COLUMNS)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<W: Write>(mut out: W, cfg: &ExperimentConfig, rows: &[ResultRecord]) -> Result<(), CliError> {
    let doc = serde_json::json!({ "config": cfg, "build": BUILD, "rows": rows });
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| CliError::Config(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}
