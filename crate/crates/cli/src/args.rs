use std::path::PathBuf;

use clap::{Args, Parser};

use crate::config::{BetaSpec, ExperimentConfig, Format, Subcommand};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "skfluct",
    version,
    about = "Exact-enumeration checks of SK free-energy fluctuations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Var F_N against n, with the overlap-integral cross-check for small n.
    VarianceScan(Flags),
    /// Direct variance against the overlap-integral identity.
    IdentityCheck(Flags),
    /// E<R^2>_{t,0} against its closed-form bound.
    LemmaCheck(Flags),
    /// E phi(t, lambda) <= E phi(0, lambda + t).
    InterpolationCheck(Flags),
    /// Finite-difference t-derivative of E phi against the overlap formula.
    DerivativeCheck(Flags),
    /// Exact Rademacher MGF against 1/sqrt(1 - 2x).
    MgfCheck(Flags),
    /// E<R^2>_{t,0} along a t grid, paired steps.
    Monotonicity(Flags),
    /// Annealed overlap MGF against the exact binomial value.
    AnnealedMgf(Flags),
}

impl Command {
    pub fn split(self) -> (Subcommand, Flags) {
        match self {
            Self::VarianceScan(f) => (Subcommand::VarianceScan, f),
            Self::IdentityCheck(f) => (Subcommand::IdentityCheck, f),
            Self::LemmaCheck(f) => (Subcommand::LemmaCheck, f),
            Self::InterpolationCheck(f) => (Subcommand::InterpolationCheck, f),
            Self::DerivativeCheck(f) => (Subcommand::DerivativeCheck, f),
            Self::MgfCheck(f) => (Subcommand::MgfCheck, f),
            Self::Monotonicity(f) => (Subcommand::Monotonicity, f),
            Self::AnnealedMgf(f) => (Subcommand::AnnealedMgf, f),
        }
    }
}

/// Flags shared by all subcommands. Anything given here overrides the
/// config file, which overrides the subcommand defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// System sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Fixed inverse temperatures, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta: Vec<f64>,
    /// Add the critical point 1/sqrt(2).
    #[arg(long)]
    pub critical: bool,
    /// Near-critical schedule sqrt(1/2 + d n^-alpha), given as `alpha,d`.
    #[arg(long, value_parser = parse_near)]
    pub near: Option<(f64, f64)>,
    /// Disorder realizations per estimate.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gauss-Legendre nodes for the overlap integral.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = skfluct::estimators::THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON config, or a previous CSV/JSON output whose echo is reused.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<f64>,
    /// Finite-difference step.
    #[arg(long)]
    pub h: Option<f64>,
    /// Largest n for which variance-scan also evaluates the overlap integral.
    #[arg(long)]
    pub identity_max_n: Option<usize>,
}

fn parse_near(s: &str) -> Result<(f64, f64), String> {
    let (a, d) = s.split_once(',').ok_or("expected `alpha,d`")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((parse(a)?, parse(d)?))
}

impl Flags {
    pub fn into_config(self, subcommand: Subcommand) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(subcommand, path)?,
            None => ExperimentConfig::defaults(subcommand),
        };
        let mut betas: Vec<BetaSpec> = self.beta.iter().map(|&value| BetaSpec::Fixed { value }).collect();
        if self.critical {
            betas.push(BetaSpec::Critical);
        }
        if let Some((alpha, d)) = self.near {
            betas.push(BetaSpec::Near { alpha, d });
        }
        if !betas.is_empty() {
            cfg.betas = betas;
        }
        if !self.n.is_empty() {
            cfg.n = self.n;
        }
        if !self.t.is_empty() {
            cfg.t_grid = self.t;
        }
        if !self.lambda.is_empty() {
            cfg.lambda_grid = self.lambda;
        }
        if !self.x.is_empty() {
            cfg.x_grid = self.x;
        }
        cfg.samples = self.samples.unwrap_or(cfg.samples);
        cfg.master_seed = self.seed.unwrap_or(cfg.master_seed);
        cfg.nodes = self.nodes.unwrap_or(cfg.nodes);
        cfg.threads = self.threads.unwrap_or(cfg.threads);
        cfg.format = self.format.unwrap_or(cfg.format);
        cfg.h = self.h.unwrap_or(cfg.h);
        cfg.identity_max_n = self.identity_max_n.unwrap_or(cfg.identity_max_n);
        if self.out.is_some() {
            cfg.out = self.out;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_spec() {
        assert_eq!(parse_near("0.5, 2").unwrap(), (0.5, 2.0));
        assert!(parse_near("0.5").is_err());
    }

    #[test]
    fn beta_flags_replace_defaults() {
        let cli = Cli::try_parse_from([
            "skfluct",
            "lemma-check",
            "--beta",
            "0.2,0.4",
            "--critical",
            "--samples",
            "9",
        ])
        .unwrap();
        let (sub, flags) = cli.command.split();
        let cfg = flags.into_config(sub).unwrap();
        assert_eq!(
            cfg.betas,
            vec![
                BetaSpec::Fixed { value: 0.2 },
                BetaSpec::Fixed { value: 0.4 },
                BetaSpec::Critical
            ]
        );
        assert_eq!(cfg.samples, 9);
        assert_eq!(cfg.n, ExperimentConfig::defaults(sub).n);
    }
}
