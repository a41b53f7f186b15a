//! Closed-form reference values: critical temperature, the overlap bound,
//! the Rademacher moment generating function, and the variance envelopes.
//! All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

pub fn beta_critical() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

/// Estimated value against an upper bound with a `3 stderr` window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value_estimated: f64,
    pub value_bound: f64,
    pub stderr: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn new(value_estimated: f64, value_bound: f64, stderr: f64) -> Self {
        Self {
            value_estimated,
            value_bound,
            stderr,
            satisfied: value_estimated <= value_bound + 3.0 * stderr,
        }
    }
}

/// `E<R(s, r)^2>_{t,0} <= 2 / (n u) * log(2 / u)` with `u = 1 - 2 beta^2 t`.
pub fn lemma_bound(n: usize, beta: f64, t: f64) -> Result<f64> {
    check_finite("beta", beta)?;
    check_finite("t", t)?;
    let u = 1.0 - 2.0 * beta * beta * t;
    if u <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "requires 2 beta^2 t < 1",
        });
    }
    Ok(2.0 / (n as f64 * u) * (2.0 / u).ln())
}

/// `E exp(x S^2 / n)` for `S` a sum of `n` Rademacher signs, summed exactly
/// over the binomial law in the log domain.
pub fn rademacher_mgf_exact(n: usize, x: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::SizeOutOfRange {
            n,
            min: 1,
            max: usize::MAX,
        });
    }
    check_finite("x", x)?;
    if x == 0.0 {
        // total mass of the binomial law
        return Ok(1.0);
    }
    let nf = n as f64;
    let mut log_binom = 0.0;
    let mut terms = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            log_binom += ((n - k + 1) as f64 / k as f64).ln();
        }
        let s = nf - 2.0 * k as f64;
        terms.push(log_binom - nf * std::f64::consts::LN_2 + x * s * s / nf);
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|v| (v - top).exp()).sum();
    Ok((top + sum.ln()).exp())
}

/// `1 / sqrt(1 - 2x)` on `[0, 1/2)`.
pub fn mgf_bound(x: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&x) {
        return Err(Error::InvalidParameter {
            name: "x",
            value: x,
            reason: "must lie in [0, 1/2)",
        });
    }
    Ok(1.0 / (1.0 - 2.0 * x).sqrt())
}

/// `int_0^{1/(2 beta^2) - delta} lemma_bound dt
///   = ((log(beta^2 delta))^2 - (log 2)^2) / (2 n beta^2)`.
pub fn integral_split_closed_form(n: usize, beta: f64, delta: f64) -> Result<f64> {
    check_split_domain(beta, delta)?;
    let b2 = beta * beta;
    let l = (b2 * delta).ln();
    Ok((l * l - std::f64::consts::LN_2.powi(2)) / (2.0 * n as f64 * b2))
}

fn check_split_domain(beta: f64, delta: f64) -> Result<()> {
    check_finite("beta", beta)?;
    check_finite("delta", delta)?;
    let edge = 1.0 / (2.0 * beta * beta);
    if edge > 1.0 {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
            reason: "requires 1/(2 beta^2) <= 1",
        });
    }
    if !(delta > 0.0 && delta < edge) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "requires 0 < delta < 1/(2 beta^2)",
        });
    }
    Ok(())
}

/// Contribution of `[1/(2 beta^2) - delta, 1]`, where only `R^2 <= 1` is used.
pub fn tail_allowance(beta: f64, delta: f64) -> f64 {
    1.0 - 1.0 / (2.0 * beta * beta) + delta
}

/// Variance bound assembled directly from the closed-form integral:
/// `beta^2 n (closed_form + tail_allowance)`.
pub fn variance_bound_closed_form(n: usize, beta: f64, delta: f64) -> Result<f64> {
    let head = integral_split_closed_form(n, beta, delta)?;
    Ok(beta * beta * n as f64 * (head + tail_allowance(beta, delta)))
}

/// The relaxed variance bound
/// `beta^2 ((log^2 delta + 4 log^2 beta) / beta^2 + tail_allowance n)`,
/// after dropping `-(log 2)^2` and splitting `log(beta^2 delta)`.
pub fn variance_bound_relaxed(n: usize, beta: f64, delta: f64) -> Result<f64> {
    check_split_domain(beta, delta)?;
    let b2 = beta * beta;
    let logs = delta.ln().powi(2) + 4.0 * beta.ln().powi(2);
    Ok(b2 * (logs / b2 + tail_allowance(beta, delta) * n as f64))
}

/// Reference critical-temperature bound `(log n)^2 + 4 (log 2)^2 + 1/2`.
pub fn critical_bound_reference(n: usize) -> f64 {
    (n as f64).ln().powi(2) + 4.0 * std::f64::consts::LN_2.powi(2) + 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Critical,
    Near { alpha: f64, d: f64 },
}

/// `C((log n)^2 + 1)` or `C((log n)^2 + n^{1 - alpha})`.
/// `n` is real so the envelope can be read off between integer sizes.
pub fn theorem_envelope(n: f64, regime: Regime, c: f64) -> f64 {
    let l2 = n.ln().powi(2);
    match regime {
        Regime::Critical => c * (l2 + 1.0),
        Regime::Near { alpha, .. } => c * (l2 + n.powf(1.0 - alpha)),
    }
}

/// `sqrt(beta_c^2 + d n^{-alpha})`.
pub fn near_critical_beta(n: usize, alpha: f64, d: f64) -> f64 {
    (0.5 + d * (n as f64).powf(-alpha)).sqrt()
}

/// Near-critical bound with `delta = d n^{-alpha}`:
/// `(-alpha log n + log d)^2 + 4 log^2 beta + 3 d beta^2 n^{1 - alpha}`.
pub fn near_critical_variance_bound(n: usize, alpha: f64, d: f64) -> f64 {
    let nf = n as f64;
    let beta = near_critical_beta(n, alpha, d);
    (-alpha * nf.ln() + d.ln()).powi(2) + 4.0 * beta.ln().powi(2) + 3.0 * d * beta * beta * nf.powf(1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    #[test]
    #[allow(clippy::approx_constant)] // the decimal literal is the point
    fn critical_temperature() {
        let b = beta_critical();
        assert_eq!(b, 0.7071067811865476);
        assert_relative_eq!(2.0 * b * b, 1.0, max_relative = 1e-15);
        assert_relative_eq!(b * b, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn report_satisfied_flag() {
        assert!(BoundReport::new(1.0, 0.9, 0.04).satisfied);
        assert!(!BoundReport::new(1.0, 0.9, 0.03).satisfied);
    }

    #[test]
    fn lemma_bound_values() {
        let n = 8;
        assert_relative_eq!(lemma_bound(n, 0.3, 0.0).unwrap(), 2.0 / 8.0 * LN_2);
        assert_relative_eq!(
            lemma_bound(n, beta_critical(), 0.5).unwrap(),
            4.0 / 8.0 * 4f64.ln(),
            max_relative = 1e-14
        );
        assert!(lemma_bound(n, beta_critical(), 1.0).is_err());
    }

    #[test]
    fn lemma_bound_nondecreasing_in_t() {
        for beta in [0.3, beta_critical(), 1.1] {
            let edge = 0.999 / (2.0 * beta * beta);
            let grid: Vec<f64> = (0..=400)
                .map(|i| lemma_bound(10, beta, edge * i as f64 / 400.0).unwrap())
                .collect();
            assert!(grid.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn rademacher_mgf_small_cases() {
        assert_eq!(rademacher_mgf_exact(9, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            rademacher_mgf_exact(1, 0.37).unwrap(),
            0.37f64.exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            rademacher_mgf_exact(2, 0.25).unwrap(),
            0.5 * 0.5f64.exp() + 0.5,
            max_relative = 1e-14
        );
        assert!(rademacher_mgf_exact(10_000, 0.45).unwrap().is_finite());
    }

    #[test]
    fn mgf_bound_domain() {
        assert_eq!(mgf_bound(0.0).unwrap(), 1.0);
        assert_eq!(mgf_bound(0.375).unwrap(), 2.0);
        assert!(mgf_bound(0.5).is_err());
        assert!(mgf_bound(-0.1).is_err());
    }

    #[test]
    fn split_domain_edges() {
        let b = beta_critical();
        assert!(integral_split_closed_form(8, b, 0.0).is_err());
        assert!(integral_split_closed_form(8, b, 1.0).is_err());
        assert!(integral_split_closed_form(8, 0.5, 0.1).is_err());
    }

    #[test]
    fn split_scales_as_one_over_n() {
        let b = beta_critical();
        let v8 = integral_split_closed_form(8, b, 0.125).unwrap();
        let v16 = integral_split_closed_form(16, b, 0.125).unwrap();
        assert_eq!(v16, v8 / 2.0);
    }

    #[test]
    fn envelopes() {
        assert_eq!(theorem_envelope(1.0, Regime::Critical, 1.0), 1.0);
        let n = 37.0f64;
        assert_relative_eq!(
            theorem_envelope(n, Regime::Near { alpha: 1.0, d: 3.0 }, 1.0),
            n.ln().powi(2) + 1.0
        );
        assert_relative_eq!(theorem_envelope(std::f64::consts::E, Regime::Critical, 2.0), 4.0);
    }

    #[test]
    fn near_critical_beta_values() {
        assert!((near_critical_beta(1_000_000, 1.0, 1.0) - beta_critical()).abs() < 1e-6);
        assert_relative_eq!(near_critical_beta(1, 0.4, 1.0), 1.5f64.sqrt());
    }

    #[test]
    fn near_critical_tail_term_is_at_most_three_delta() {
        for d in [0.1, 1.0, 5.0] {
            for alpha in [0.25, 0.5, 1.0] {
                for n in [1usize, 2, 10, 100, 10_000] {
                    let delta = d * (n as f64).powf(-alpha);
                    let beta = near_critical_beta(n, alpha, d);
                    let lhs = tail_allowance(beta, delta);
                    let closed = 2.0 * delta / (1.0 + 2.0 * delta) + delta;
                    assert_relative_eq!(lhs, closed, max_relative = 1e-12);
                    assert!(lhs <= 3.0 * delta);
                }
            }
        }
    }
}
