use std::time::Instant;

use skfluct::bounds::{mgf_bound, rademacher_mgf_exact, theorem_envelope};
use skfluct::coupled::MAX_PAIR_SPINS;
use skfluct::estimators::{
    annealed_overlap_mgf, derivative_check, identity_check, interpolation_check, lemma_check, monotonicity_scan,
    variance_direct, DifferenceScheme, IdentityComparison,
};
use skfluct::{InterpolationPoint, McPlan, QuadratureRule};

use crate::config::{seed_for, ExperimentConfig, Subcommand};
use crate::output::ResultRecord;
use crate::CliError;

const SIGMAS: f64 = 3.0;
/// Largest `2 beta^2 t` accepted on lemma-check grids.
const LEMMA_EDGE: f64 = 0.9;

/// Rows of one run plus the grid points or sizes that were skipped.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRecord>,
    pub notices: Vec<String>,
}

impl RunOutput {
    /// True if some inequality row failed.
    pub fn any_unsatisfied(&self) -> bool {
        self.rows.iter().any(|r| r.satisfied == Some(false))
    }

    fn skip(&mut self, what: String) {
        self.notices.push(what);
    }

    fn extend(&mut self, rows: Vec<ResultRecord>, start: Instant) {
        let secs = start.elapsed().as_secs_f64();
        self.rows.extend(rows.into_iter().map(|r| ResultRecord {
            wall_seconds: secs,
            ..r
        }));
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let mut out = RunOutput::default();
    match cfg.subcommand {
        Subcommand::VarianceScan => variance_scan(cfg, &mut out),
        Subcommand::IdentityCheck => each_point(cfg, &mut out, identity_rows),
        Subcommand::LemmaCheck => each_point(cfg, &mut out, lemma_rows),
        Subcommand::InterpolationCheck => each_point(cfg, &mut out, interpolation_rows),
        Subcommand::DerivativeCheck => each_point(cfg, &mut out, derivative_rows),
        Subcommand::MgfCheck => mgf_rows(cfg, &mut out),
        Subcommand::Monotonicity => each_point(cfg, &mut out, monotonicity_rows),
        Subcommand::AnnealedMgf => each_point(cfg, &mut out, annealed_rows),
    }
    if let Some(r) = out.rows.iter().find(|r| r.numeric_fields().any(|v| !v.is_finite())) {
        return Err(CliError::NonFinite(format!("{} at n={}", r.quantity, r.n)));
    }
    Ok(out)
}

/// Shared context of one `(n, beta)` cell.
struct Cell<'a> {
    cfg: &'a ExperimentConfig,
    n: usize,
    beta: f64,
}

impl Cell<'_> {
    fn seed(&self) -> u64 {
        seed_for(self.cfg.master_seed, self.n)
    }

    fn plan(&self) -> McPlan {
        McPlan::new(self.n, self.cfg.samples, self.seed()).with_threads(self.cfg.threads)
    }

    fn record(&self, quantity: &str, estimate: f64) -> ResultRecord {
        ResultRecord {
            beta: Some(self.beta),
            samples: Some(self.cfg.samples),
            seed: Some(self.seed()),
            ..ResultRecord::new(self.cfg.subcommand.name(), quantity, self.n, estimate)
        }
    }

    fn t_grid(&self) -> Vec<f64> {
        self.cfg.t_grid.clone()
    }
}

type CellFn = fn(&Cell, &mut RunOutput) -> Result<Vec<ResultRecord>, skfluct::Error>;

/// Runs `f` on every `(beta, n)` cell; a failing cell becomes a notice and
/// the remaining cells still run.
fn each_point(cfg: &ExperimentConfig, out: &mut RunOutput, f: CellFn) {
    for &spec in &cfg.betas {
        for &n in &cfg.n {
            let cell = Cell {
                cfg,
                n,
                beta: spec.at(n),
            };
            let start = Instant::now();
            match f(&cell, out) {
                Ok(rows) => out.extend(rows, start),
                Err(e) => out.skip(format!("n={n} beta={:.6}: {e}", cell.beta)),
            }
        }
    }
}

fn identity_record(cell: &Cell, c: &IdentityComparison) -> ResultRecord {
    ResultRecord {
        estimate_stderr: Some(c.identity.stderr),
        reference: Some(c.direct.variance),
        reference_stderr: Some(c.direct.stderr_variance),
        combined_stderr: Some(c.combined_stderr),
        satisfied: Some(c.satisfied()),
        ..cell.record("variance_identity", c.identity.value)
    }
}

fn direct_record(cell: &Cell, variance: f64, stderr: f64) -> ResultRecord {
    ResultRecord {
        estimate_stderr: Some(stderr),
        ..cell.record("variance_direct", variance)
    }
}

fn identity_rows(cell: &Cell, _: &mut RunOutput) -> skfluct::Result<Vec<ResultRecord>> {
    let rule = QuadratureRule::gauss_legendre(cell.cfg.nodes)?;
    let c = identity_check(&cell.plan(), cell.beta, &rule)?;
    Ok(vec![
        direct_record(cell, c.direct.variance, c.direct.stderr_variance),
        identity_record(cell, &c),
    ])
}

fn variance_scan(cfg: &ExperimentConfig, out: &mut RunOutput) {
    for &spec in &cfg.betas {
        // (n, Var, stderr) of the sizes that ran, for the per-n comparison.
        let mut done: Vec<(usize, f64, f64, f64)> = Vec::new();
        for &n in &cfg.n {
            let cell = Cell {
                cfg,
                n,
                beta: spec.at(n),
            };
            let start = Instant::now();
            let result = (|| -> skfluct::Result<(Vec<ResultRecord>, f64, f64)> {
                let mut rows = Vec::new();
                let (var, se) = if n <= cfg.identity_max_n {
                    let c = identity_check(&cell.plan(), cell.beta, &QuadratureRule::gauss_legendre(cfg.nodes)?)?;
                    rows.push(direct_record(&cell, c.direct.variance, c.direct.stderr_variance));
                    rows.push(identity_record(&cell, &c));
                    (c.direct.variance, c.direct.stderr_variance)
                } else {
                    let d = variance_direct(&cell.plan(), cell.beta)?;
                    rows.push(direct_record(&cell, d.variance, d.stderr_variance));
                    (d.variance, d.stderr_variance)
                };
                let envelope = theorem_envelope(n as f64, spec.regime(), 1.0);
                rows.push(ResultRecord {
                    estimate_stderr: Some(se),
                    bound: Some(envelope),
                    ratio: Some(var / envelope),
                    ..cell.record("envelope_ratio", var)
                });
                Ok((rows, var, se))
            })();
            match result {
                Ok((rows, var, se)) => {
                    out.extend(rows, start);
                    done.push((n, cell.beta, var, se));
                }
                Err(e) => out.skip(format!("n={n}: {e}")),
            }
        }
        for w in done.windows(2) {
            let ((n0, _, v0, s0), (n1, b1, v1, s1)) = (w[0], w[1]);
            let (a, sa) = (v0 / n0 as f64, s0 / n0 as f64);
            let (b, sb) = (v1 / n1 as f64, s1 / n1 as f64);
            let combined = sa.hypot(sb);
            out.rows.push(ResultRecord {
                beta: Some(b1),
                samples: Some(cfg.samples),
                estimate_stderr: Some(sb),
                reference: Some(a),
                reference_stderr: Some(sa),
                combined_stderr: Some(combined),
                satisfied: Some(b <= a + SIGMAS * combined),
                ..ResultRecord::new(cfg.subcommand.name(), "variance_per_n_step", n1, b)
            });
        }
    }
}

/// Default lemma grid: fractions `0, 0.1, ..., 0.9` of `min(1, 1/(2 beta^2))`.
pub fn lemma_default_grid(beta: f64) -> Vec<f64> {
    let span = if beta > 0.0 {
        (0.5 / (beta * beta)).min(1.0)
    } else {
        1.0
    };
    (0..10).map(|i| i as f64 / 10.0 * span).collect()
}

fn lemma_rows(cell: &Cell, out: &mut RunOutput) -> skfluct::Result<Vec<ResultRecord>> {
    let grid = if cell.cfg.t_grid.is_empty() {
        lemma_default_grid(cell.beta)
    } else {
        cell.t_grid()
    };
    let mut rows = Vec::new();
    for t in grid {
        if 2.0 * cell.beta * cell.beta * t > LEMMA_EDGE {
            out.skip(format!(
                "n={} beta={:.6} t={t}: 2 beta^2 t exceeds {LEMMA_EDGE}",
                cell.n, cell.beta
            ));
            continue;
        }
        let (est, report) = lemma_check(&cell.plan(), cell.beta, t)?;
        rows.push(ResultRecord {
            t: Some(t),
            estimate_stderr: Some(est.stderr_mean),
            combined_stderr: Some(report.stderr),
            bound: Some(report.value_bound),
            ratio: Some(report.value_estimated / report.value_bound),
            satisfied: Some(report.satisfied),
            ..cell.record("overlap_second_moment", est.mean)
        });
    }
    Ok(rows)
}

/// `(t, lambda)` pairs of the grid product with `2 beta^2 (t + lambda) < 1`.
fn coupled_grid(cell: &Cell, out: &mut RunOutput) -> Vec<(f64, f64)> {
    let mut points = Vec::new();
    for &t in &cell.cfg.t_grid {
        for &lambda in &cell.cfg.lambda_grid {
            if 2.0 * cell.beta * cell.beta * (t + lambda) < 1.0 {
                points.push((t, lambda));
            } else {
                out.skip(format!(
                    "n={} beta={:.6} t={t} lambda={lambda}: 2 beta^2 (t + lambda) >= 1",
                    cell.n, cell.beta
                ));
            }
        }
    }
    points
}

fn check_pair_size(n: usize) -> skfluct::Result<()> {
    if n > MAX_PAIR_SPINS {
        return Err(skfluct::Error::SizeOutOfRange {
            n,
            min: 1,
            max: MAX_PAIR_SPINS,
        });
    }
    Ok(())
}

fn interpolation_rows(cell: &Cell, out: &mut RunOutput) -> skfluct::Result<Vec<ResultRecord>> {
    check_pair_size(cell.n)?;
    let mut rows = Vec::new();
    for (t, lambda) in coupled_grid(cell, out) {
        let c = interpolation_check(&cell.plan(), cell.beta, t, lambda)?;
        rows.push(ResultRecord {
            t: Some(t),
            lambda: Some(lambda),
            estimate_stderr: Some(c.lhs.stderr_mean),
            reference: Some(c.rhs.mean),
            reference_stderr: Some(c.rhs.stderr_mean),
            combined_stderr: Some(c.difference.stderr),
            satisfied: Some(c.difference.mean <= SIGMAS * c.difference.stderr),
            ..cell.record("phi_interpolation", c.lhs.mean)
        });
    }
    Ok(rows)
}

/// The acceptance window is `3 combined_stderr + 10 h^2`; `bound` carries
/// the `10 h^2` discretization allowance.
fn derivative_rows(cell: &Cell, _: &mut RunOutput) -> skfluct::Result<Vec<ResultRecord>> {
    check_pair_size(cell.n)?;
    let h = cell.cfg.h;
    let mut rows = Vec::new();
    for &t in &cell.cfg.t_grid {
        for &lambda in &cell.cfg.lambda_grid {
            let p = InterpolationPoint::new(cell.beta, t, lambda)?;
            let c = derivative_check(&cell.plan(), p, h, DifferenceScheme::Central)?;
            let allowance = 10.0 * h * h;
            rows.push(ResultRecord {
                t: Some(t),
                lambda: Some(lambda),
                estimate_stderr: Some(c.lhs.stderr_mean),
                reference: Some(c.rhs.mean),
                reference_stderr: Some(c.rhs.stderr_mean),
                combined_stderr: Some(c.difference.stderr),
                bound: Some(allowance),
                satisfied: Some(c.difference.mean.abs() <= SIGMAS * c.difference.stderr + allowance),
                ..cell.record("phi_t_derivative", c.lhs.mean)
            });
        }
    }
    Ok(rows)
}

fn mgf_rows(cfg: &ExperimentConfig, out: &mut RunOutput) {
    let start = Instant::now();
    let mut rows = Vec::new();
    for &n in &cfg.n {
        for &x in &cfg.x_grid {
            let (exact, bound) = match (rademacher_mgf_exact(n, x), mgf_bound(x)) {
                (Ok(e), Ok(b)) => (e, b),
                (Err(e), _) | (_, Err(e)) => {
                    out.skip(format!("n={n} x={x}: {e}"));
                    continue;
                }
            };
            let satisfied = if n >= 2 { exact < bound } else { exact <= bound };
            rows.push(ResultRecord {
                x: Some(x),
                bound: Some(bound),
                ratio: Some(exact / bound),
                satisfied: Some(satisfied),
                ..ResultRecord::new(cfg.subcommand.name(), "rademacher_mgf", n, exact)
            });
        }
    }
    out.extend(rows, start);
}

fn monotonicity_rows(cell: &Cell, _: &mut RunOutput) -> skfluct::Result<Vec<ResultRecord>> {
    let grid = cell.t_grid();
    let scan = monotonicity_scan(&cell.plan(), cell.beta, &grid)?;
    let mut rows: Vec<ResultRecord> = grid
        .iter()
        .zip(&scan.values)
        .map(|(&t, v)| ResultRecord {
            t: Some(t),
            estimate_stderr: Some(v.stderr_mean),
            ..cell.record("overlap_second_moment", v.mean)
        })
        .collect();
    for (j, step) in scan.steps.iter().enumerate() {
        rows.push(ResultRecord {
            t: Some(grid[j + 1]),
            reference: Some(0.0),
            combined_stderr: Some(step.stderr),
            satisfied: Some(step.mean >= -SIGMAS * step.stderr),
            ..cell.record("monotone_step", step.mean)
        });
    }
    Ok(rows)
}

fn annealed_rows(cell: &Cell, _: &mut RunOutput) -> skfluct::Result<Vec<ResultRecord>> {
    check_pair_size(cell.n)?;
    let mut rows = Vec::new();
    for &x in &cell.cfg.x_grid {
        let est = annealed_overlap_mgf(&cell.plan(), cell.beta, x)?;
        let exact = rademacher_mgf_exact(cell.n, x)?;
        rows.push(ResultRecord {
            x: Some(x),
            estimate_stderr: Some(est.stderr_mean),
            reference: Some(exact),
            reference_stderr: Some(0.0),
            combined_stderr: Some(est.stderr_mean),
            satisfied: Some((est.mean - exact).abs() <= SIGMAS * est.stderr_mean),
            ..cell.record("annealed_overlap_mgf", est.mean)
        });
    }
    Ok(rows)
}
