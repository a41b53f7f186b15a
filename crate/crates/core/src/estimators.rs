//! Disorder averages over independent realizations.
//!
//! Replica `k` of a run is fully determined by `(master_seed, k)`; work is
//! spread over a rayon pool but per-replica values are gathered in index
//! order and reduced sequentially, so results do not depend on the thread
//! count. Error bars are bootstrap standard errors with resampling seeded
//! from the master seed; estimates that share realizations are compared
//! through paired resampling.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{lemma_bound, BoundReport};
use crate::coupled::{
    coupled_enumerate, factorized_r2, overlap_mgf, phi_t_derivative, CoupledDisorder, InterpolationPoint,
};
use crate::disorder::{effective_couplings, sample_disorder, DisorderRealization, SeedSpec, StreamTag};
use crate::error::{Error, Result};
use crate::stats::{gather, mean, unbiased_variance, Bootstrap};
use crate::system::log_partition;

/// Environment variable consulted for the default worker count.
pub const THREADS_ENV: &str = "SKFLUCT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Parallelism {
    threads: Option<NonZeroUsize>,
}

impl Parallelism {
    /// `0` means rayon's default.
    pub fn new(threads: usize) -> Self {
        Self {
            threads: NonZeroUsize::new(threads),
        }
    }

    pub fn from_env() -> Self {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0);
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.threads.map_or(0, NonZeroUsize::get)
    }

    fn install<R, F>(&self, f: F) -> Result<R>
    where
        R: Send,
        F: FnOnce() -> R + Send,
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.threads {
            builder = builder.num_threads(t.get());
        }
        let pool = builder.build().map_err(|e| Error::ThreadPool(e.to_string()))?;
        Ok(pool.install(f))
    }
}

/// Size, sample count, seed and worker count of one disorder average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McPlan {
    pub n: usize,
    pub samples: usize,
    pub master_seed: u64,
    pub parallelism: Parallelism,
}

impl McPlan {
    pub fn new(n: usize, samples: usize, master_seed: u64) -> Self {
        Self {
            n,
            samples,
            master_seed,
            parallelism: Parallelism::default(),
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.parallelism = Parallelism::new(threads);
        self
    }

    fn bootstrap(&self) -> Bootstrap {
        Bootstrap::new(self.master_seed)
    }
}

/// Handle on one replica index; disorder is drawn on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replica {
    pub n: usize,
    pub master_seed: u64,
    pub index: u64,
}

impl Replica {
    pub fn seed(&self, tag: StreamTag) -> SeedSpec {
        SeedSpec::new(self.master_seed, self.index, tag)
    }

    pub fn disorder(&self, tag: StreamTag) -> Result<DisorderRealization> {
        sample_disorder(self.n, self.seed(tag))
    }

    pub fn coupled(&self) -> Result<CoupledDisorder> {
        CoupledDisorder::sample(self.n, self.master_seed, self.index)
    }
}

/// Evaluates `f` on replicas `0..samples`, returned in index order. The
/// first failing index (in index order) determines the error.
pub fn map_replicas<T, F>(plan: &McPlan, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Replica) -> Result<T> + Sync,
{
    let (n, master_seed) = (plan.n, plan.master_seed);
    let results: Vec<Result<T>> = plan.parallelism.install(|| {
        (0..plan.samples as u64)
            .into_par_iter()
            .map(|index| f(&Replica { n, master_seed, index }))
            .collect()
    })?;
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderAverage {
    pub mean: f64,
    /// Unbiased sample variance of the per-realization values.
    pub variance: f64,
    pub stderr_mean: f64,
    /// Bootstrap standard error of `variance`.
    pub stderr_variance: f64,
    pub k: usize,
    pub seed: u64,
}

impl DisorderAverage {
    pub fn from_values(values: &[f64], seed: u64) -> Result<Self> {
        let k = values.len();
        if k < 2 {
            return Err(Error::TooFewSamples(k));
        }
        let variance = unbiased_variance(values);
        let mut buf = Vec::with_capacity(k);
        let stderr_variance = Bootstrap::new(seed).standard_error(k, |idx| {
            gather(values, idx, &mut buf);
            unbiased_variance(&buf)
        });
        Ok(Self {
            mean: mean(values),
            variance,
            stderr_mean: (variance / k as f64).sqrt(),
            stderr_variance,
            k,
            seed,
        })
    }
}

/// Mean of per-realization differences with its bootstrap error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub stderr: f64,
}

impl PairedDifference {
    pub fn new(a: &[f64], b: &[f64], seed: u64) -> Self {
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let mut buf = Vec::with_capacity(diffs.len());
        let stderr = Bootstrap::new(seed).standard_error(diffs.len(), |idx| {
            gather(&diffs, idx, &mut buf);
            mean(&buf)
        });
        Self {
            mean: mean(&diffs),
            stderr,
        }
    }
}

/// Two estimates on the same realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub lhs: DisorderAverage,
    pub rhs: DisorderAverage,
    /// `lhs - rhs`.
    pub difference: PairedDifference,
}

impl PairedComparison {
    fn from_pairs(pairs: &[(f64, f64)], seed: u64) -> Result<Self> {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        Ok(Self {
            lhs: DisorderAverage::from_values(&a, seed)?,
            rhs: DisorderAverage::from_values(&b, seed)?,
            difference: PairedDifference::new(&a, &b, seed),
        })
    }
}

/// Disorder average of an arbitrary per-realization quantity.
pub fn disorder_mc<F>(plan: &McPlan, quantity: F) -> Result<DisorderAverage>
where
    F: Fn(&Replica) -> Result<f64> + Sync,
{
    if plan.samples < 2 {
        return Err(Error::TooFewSamples(plan.samples));
    }
    let values = map_replicas(plan, |r| {
        let v = quantity(r)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                value: v,
                seed: r.seed(StreamTag::Shared),
            })
        }
    })?;
    DisorderAverage::from_values(&values, plan.master_seed)
}

fn free_energy(r: &Replica, beta: f64) -> Result<f64> {
    log_partition(&effective_couplings(&r.disorder(StreamTag::Shared)?), beta)
}

/// Disorder statistics of `F_N(beta)`; `variance` estimates `Var F_N`.
pub fn variance_direct(plan: &McPlan, beta: f64) -> Result<DisorderAverage> {
    disorder_mc(plan, |r| free_energy(r, beta))
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub const DEFAULT_NODES: usize = 16;

    pub fn gauss_legendre(nodes: usize) -> Result<Self> {
        let degree = NonZeroUsize::new(nodes).ok_or(Error::InvalidParameter {
            name: "nodes",
            value: 0.0,
            reason: "need at least one node",
        })?;
        let rule = GaussLegendre::new(degree);
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .unzip();
        Ok(Self { nodes, weights })
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_legendre(Self::DEFAULT_NODES).expect("nonzero node count")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub k: usize,
}

/// `beta^2 n sum_j w_j <R^2>_{t_j,0}` for one realization.
fn identity_integrand(r: &Replica, beta: f64, rule: &QuadratureRule) -> Result<f64> {
    let cd = r.coupled()?;
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * factorized_r2(&cd, beta, t)?;
    }
    Ok(beta * beta * r.n as f64 * acc)
}

fn identity_from_values(values: &[f64], seed: u64) -> IdentityEstimate {
    let mut buf = Vec::with_capacity(values.len());
    let stderr = Bootstrap::new(seed).standard_error(values.len(), |idx| {
        gather(values, idx, &mut buf);
        mean(&buf)
    });
    IdentityEstimate {
        value: mean(values),
        stderr,
        k: values.len(),
    }
}

/// `Var F_N` through the overlap integral, all nodes on shared realizations.
pub fn variance_via_identity(plan: &McPlan, beta: f64, rule: &QuadratureRule) -> Result<IdentityEstimate> {
    if plan.samples < 2 {
        return Err(Error::TooFewSamples(plan.samples));
    }
    let values = map_replicas(plan, |r| identity_integrand(r, beta, rule))?;
    Ok(identity_from_values(&values, plan.master_seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityComparison {
    pub direct: DisorderAverage,
    pub identity: IdentityEstimate,
    /// `direct.variance - identity.value`.
    pub difference: f64,
    /// Paired bootstrap error of `difference`.
    pub combined_stderr: f64,
}

impl IdentityComparison {
    pub fn satisfied(&self) -> bool {
        self.difference.abs() <= 3.0 * self.combined_stderr
    }
}

/// Direct and overlap-integral variance on the same realizations.
pub fn identity_check(plan: &McPlan, beta: f64, rule: &QuadratureRule) -> Result<IdentityComparison> {
    if plan.samples < 2 {
        return Err(Error::TooFewSamples(plan.samples));
    }
    let pairs = map_replicas(plan, |r| {
        Ok((free_energy(r, beta)?, identity_integrand(r, beta, rule)?))
    })?;
    let (free, integrals): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let direct = DisorderAverage::from_values(&free, plan.master_seed)?;
    let identity = identity_from_values(&integrals, plan.master_seed);
    let (mut fb, mut ib) = (Vec::new(), Vec::new());
    let combined_stderr = plan.bootstrap().standard_error(free.len(), |idx| {
        gather(&free, idx, &mut fb);
        gather(&integrals, idx, &mut ib);
        unbiased_variance(&fb) - mean(&ib)
    });
    Ok(IdentityComparison {
        direct,
        identity,
        difference: direct.variance - identity.value,
        combined_stderr,
    })
}

/// `E<R(s, r)^2>_{t,0}`.
pub fn overlap_second_moment(plan: &McPlan, beta: f64, t: f64) -> Result<DisorderAverage> {
    disorder_mc(plan, |r| factorized_r2(&r.coupled()?, beta, t))
}

/// Estimate of `E<R^2>_{t,0}` against the closed-form overlap bound.
pub fn lemma_check(plan: &McPlan, beta: f64, t: f64) -> Result<(DisorderAverage, BoundReport)> {
    let bound = lemma_bound(plan.n, beta, t)?;
    let est = overlap_second_moment(plan, beta, t)?;
    Ok((est, BoundReport::new(est.mean, bound, est.stderr_mean)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityScan {
    pub t_grid: Vec<f64>,
    pub values: Vec<DisorderAverage>,
    /// `value[j + 1] - value[j]`, paired over realizations.
    pub steps: Vec<PairedDifference>,
}

impl MonotonicityScan {
    pub fn satisfied(&self) -> bool {
        self.steps.iter().all(|s| s.mean >= -3.0 * s.stderr)
    }
}

/// `E<R^2>_{t,0}` along a sorted `t` grid on common realizations.
pub fn monotonicity_scan(plan: &McPlan, beta: f64, t_grid: &[f64]) -> Result<MonotonicityScan> {
    if t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter {
            name: "t_grid",
            value: f64::NAN,
            reason: "must be sorted within [0, 1]",
        });
    }
    if plan.samples < 2 {
        return Err(Error::TooFewSamples(plan.samples));
    }
    let rows = map_replicas(plan, |r| {
        let cd = r.coupled()?;
        t_grid
            .iter()
            .map(|&t| factorized_r2(&cd, beta, t))
            .collect::<Result<Vec<f64>>>()
    })?;
    let column = |j: usize| rows.iter().map(|row| row[j]).collect::<Vec<f64>>();
    let columns: Vec<Vec<f64>> = (0..t_grid.len()).map(column).collect();
    let values = columns
        .iter()
        .map(|c| DisorderAverage::from_values(c, plan.master_seed))
        .collect::<Result<Vec<_>>>()?;
    let steps = columns
        .windows(2)
        .map(|w| PairedDifference::new(&w[1], &w[0], plan.master_seed))
        .collect();
    Ok(MonotonicityScan {
        t_grid: t_grid.to_vec(),
        values,
        steps,
    })
}

/// `E<exp(x n R^2)>_{0,0}` over disorder, Gibbs measures taken at `beta`.
pub fn annealed_overlap_mgf(plan: &McPlan, beta: f64, x: f64) -> Result<DisorderAverage> {
    disorder_mc(plan, |r| overlap_mgf(&r.coupled()?, beta, x))
}

/// `E phi(t, lambda)` against `E phi(0, lambda + t)`.
pub fn interpolation_check(plan: &McPlan, beta: f64, t: f64, lambda: f64) -> Result<PairedComparison> {
    let left = InterpolationPoint::new(beta, t, lambda)?;
    let right = InterpolationPoint::new(beta, 0.0, lambda + t)?;
    if plan.samples < 2 {
        return Err(Error::TooFewSamples(plan.samples));
    }
    let pairs = map_replicas(plan, |r| {
        let cd = r.coupled()?;
        Ok((
            coupled_enumerate(&cd, left)?.phi_hat,
            coupled_enumerate(&cd, right)?.phi_hat,
        ))
    })?;
    PairedComparison::from_pairs(&pairs, plan.master_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceScheme {
    Central,
    Richardson,
    /// Central, redone with Richardson extrapolation if `10 h^2` exceeds
    /// three standard errors.
    Auto,
}

/// Finite difference of `E phi` in `t` against `E beta^2 (r2 - r2_cross)`.
pub fn derivative_check(
    plan: &McPlan,
    p: InterpolationPoint,
    h: f64,
    scheme: DifferenceScheme,
) -> Result<PairedComparison> {
    p.validate()?;
    if plan.samples < 2 {
        return Err(Error::TooFewSamples(plan.samples));
    }
    let run = |richardson: bool| {
        let pairs = map_replicas(plan, |r| {
            let cd = r.coupled()?;
            let fd = phi_t_derivative(&cd, p, h, richardson)?;
            let s = coupled_enumerate(&cd, p)?;
            Ok((fd, p.beta * p.beta * (s.r2 - s.r2_cross)))
        })?;
        PairedComparison::from_pairs(&pairs, plan.master_seed)
    };
    match scheme {
        DifferenceScheme::Central => run(false),
        DifferenceScheme::Richardson => run(true),
        DifferenceScheme::Auto => {
            let central = run(false)?;
            if 10.0 * h * h > 3.0 * central.difference.stderr {
                run(true)
            } else {
                Ok(central)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{hamiltonian, SpinConfiguration};
    use approx::assert_relative_eq;

    #[test]
    fn constant_quantity() {
        let avg = disorder_mc(&McPlan::new(3, 50, 1), |_| Ok(2.5)).unwrap();
        assert_eq!(avg.mean, 2.5);
        assert_eq!(avg.variance, 0.0);
        assert_eq!(avg.stderr_variance, 0.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            disorder_mc(&McPlan::new(3, 1, 1), |_| Ok(1.0)),
            Err(Error::TooFewSamples(1))
        ));
    }

    #[test]
    fn non_finite_reports_seed() {
        let err = disorder_mc(&McPlan::new(3, 10, 42), |r| {
            Ok(if r.index == 7 { f64::NAN } else { 0.0 })
        })
        .unwrap_err();
        match err {
            Error::NonFinite { seed, .. } => {
                assert_eq!(seed.master_seed, 42);
                assert_eq!(seed.replica_index, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn free_energy_at_infinite_temperature() {
        let avg = variance_direct(&McPlan::new(6, 20, 3), 0.0).unwrap();
        assert_relative_eq!(avg.mean, 6.0 * 2f64.ln(), max_relative = 1e-15);
        assert_eq!(avg.variance, 0.0);
    }

    #[test]
    fn single_spin_variance_is_beta_squared() {
        let beta = 0.8;
        let avg = variance_direct(&McPlan::new(1, 10_000, 4), beta).unwrap();
        assert!((avg.variance / (beta * beta) - 1.0).abs() < 0.1, "{}", avg.variance);
    }

    #[test]
    fn energy_of_fixed_configuration_has_variance_n() {
        let n = 8;
        let sigma = SpinConfiguration::new(0b1011_0010, n).unwrap();
        let avg = disorder_mc(&McPlan::new(n, 10_000, 5), |r| {
            hamiltonian(&effective_couplings(&r.disorder(StreamTag::Shared)?), &sigma)
        })
        .unwrap();
        assert!(avg.mean.abs() < 4.0 * avg.stderr_mean);
        assert!((avg.variance / n as f64 - 1.0).abs() < 0.1);
    }

    #[test]
    fn quadrature_is_exact_on_low_degree_polynomials() {
        let rule = QuadratureRule::gauss_legendre(4).unwrap();
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        assert!(rule.nodes.iter().all(|&t| t > 0.0 && t < 1.0));
        for m in 0..=7 {
            let exact = 1.0 / (m as f64 + 1.0);
            assert!((rule.integrate(|t| t.powi(m)) - exact).abs() < 1e-12, "degree {m}");
        }
        assert!(QuadratureRule::gauss_legendre(0).is_err());
    }

    #[test]
    fn identity_at_vanishing_beta() {
        let beta = 1e-6;
        let est = variance_via_identity(&McPlan::new(5, 8, 6), beta, &QuadratureRule::default()).unwrap();
        assert!((est.value - beta * beta).abs() < 1e-9);
    }

    #[test]
    fn monotonicity_at_infinite_temperature() {
        let scan = monotonicity_scan(&McPlan::new(5, 10, 7), 0.0, &[0.0, 0.5, 1.0]).unwrap();
        for v in &scan.values {
            assert_relative_eq!(v.mean, 0.2, max_relative = 1e-14);
        }
        for s in &scan.steps {
            assert!(s.mean.abs() < 1e-15);
        }
        assert!(monotonicity_scan(&McPlan::new(5, 10, 7), 0.0, &[0.5, 0.2]).is_err());
    }

    #[test]
    fn annealed_mgf_trivial_cases() {
        let plan = McPlan::new(4, 10, 8);
        assert_eq!(annealed_overlap_mgf(&plan, 0.7, 0.0).unwrap().mean, 1.0);
        let single = annealed_overlap_mgf(&McPlan::new(1, 10, 8), 0.7, 0.2).unwrap();
        assert_relative_eq!(single.mean, 0.2f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn derivative_check_at_infinite_temperature() {
        let p = InterpolationPoint::new(0.0, 0.5, 0.1).unwrap();
        let cmp = derivative_check(&McPlan::new(4, 6, 9), p, 1e-4, DifferenceScheme::Central).unwrap();
        assert!(cmp.lhs.mean.abs() < 1e-9);
        assert_eq!(cmp.rhs.mean, 0.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let base = McPlan::new(6, 64, 10);
        let run = |threads| {
            let plan = base.with_threads(threads);
            (
                variance_direct(&plan, 0.9).unwrap(),
                identity_check(&plan, 0.9, &QuadratureRule::gauss_legendre(4).unwrap()).unwrap(),
            )
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn variance_stderr_shrinks_with_samples() {
        let se = |k| variance_direct(&McPlan::new(4, k, 11), 0.9).unwrap().stderr_variance;
        let (a, b, c) = (se(500), se(2000), se(8000));
        for ratio in [a / b, b / c] {
            assert!((ratio / 2.0 - 1.0).abs() < 0.3, "ratio {ratio}");
        }
    }
}
