//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Worker count comes from `SKFLUCT_THREADS` (rayon default otherwise); the
//! determinism criterion reruns every Monte Carlo criterion with a different
//! count and compares the numbers bit for bit.
//!
//! Failures listed in `KNOWN_FAILURES` are still evaluated and printed as
//! FAIL, but only fail the process when `SKFLUCT_ACCEPTANCE_STRICT=1`.

use std::process::ExitCode;
use std::time::Instant;

use skfluct::bounds::{
    critical_bound_reference, integral_split_closed_form, lemma_bound, mgf_bound, rademacher_mgf_exact,
    theorem_envelope, variance_bound_closed_form, variance_bound_relaxed,
};
use skfluct::coupled::factorized_r2;
use skfluct::estimators::{
    annealed_overlap_mgf, derivative_check, identity_check, interpolation_check, lemma_check, monotonicity_scan,
    variance_direct, DifferenceScheme,
};
use skfluct::{
    beta_critical, coupled_enumerate, CoupledDisorder, InterpolationPoint, McPlan, Parallelism, QuadratureRule, Regime,
};

const SEED: u64 = 20_240_601;
const KNOWN_FAILURES: &[u32] = &[9];

// Tolerances.
const SIGMAS: f64 = 3.0;
const FACTORIZATION_RTOL: f64 = 1e-10;
const EXACT_RTOL: f64 = 1e-12;
const QUADRATURE_ATOL: f64 = 1e-8;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    /// Every number the verdict depends on, for the determinism rerun.
    numbers: Vec<f64>,
}

type Check = fn(usize) -> Outcome;

fn plan(n: usize, samples: usize, seed: u64, threads: usize) -> McPlan {
    McPlan::new(n, samples, seed).with_threads(threads)
}

fn c1_identity(threads: usize) -> Outcome {
    let rule = QuadratureRule::gauss_legendre(16).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    let mut numbers = Vec::new();
    for (n, beta) in [(8, 0.3), (10, beta_critical())] {
        let c = identity_check(&plan(n, 4000, SEED + n as u64, threads), beta, &rule).unwrap();
        pass &= c.difference.abs() <= SIGMAS * c.combined_stderr;
        detail.push(format!(
            "n={n} beta={beta:.4}: direct={:.5} identity={:.5} |diff|={:.2e} <= {:.2e}",
            c.direct.variance,
            c.identity.value,
            c.difference.abs(),
            SIGMAS * c.combined_stderr
        ));
        numbers.extend([c.direct.variance, c.identity.value, c.combined_stderr]);
    }
    Outcome {
        id: 1,
        name: "variance identity",
        pass,
        detail: detail.join("; "),
        numbers,
    }
}

fn c2_factorization(_: usize) -> Outcome {
    let cd = CoupledDisorder::sample(8, SEED, 0).unwrap();
    let points = [(0.3, 0.0), (0.5, 0.25), (beta_critical(), 0.5), (1.0, 0.75), (1.5, 1.0)];
    let mut worst: f64 = 0.0;
    for (beta, t) in points {
        let coupled = coupled_enumerate(&cd, InterpolationPoint::new(beta, t, 0.0).unwrap())
            .unwrap()
            .r2;
        let fact = factorized_r2(&cd, beta, t).unwrap();
        worst = worst.max((coupled - fact).abs() / fact.abs());
    }
    Outcome {
        id: 2,
        name: "lambda=0 factorization",
        pass: worst <= FACTORIZATION_RTOL,
        detail: format!("5 (beta,t) points, max rel diff {worst:.2e} <= {FACTORIZATION_RTOL:.0e}"),
        numbers: vec![worst],
    }
}

/// `t = f / (2 beta^2)` capped to the unit interval: for `beta^2 < 1/2`
/// the fractions are taken of `[0, 1]`.
fn lemma_t_grid(beta: f64) -> Vec<f64> {
    let span = (1.0 / (2.0 * beta * beta)).min(1.0);
    (0..10).map(|i| i as f64 / 10.0 * span).collect()
}

fn c3_lemma(threads: usize) -> Outcome {
    let mut rows = 0;
    let mut failures = Vec::new();
    let mut numbers = Vec::new();
    let mut tightest = f64::INFINITY;
    for n in [6usize, 8, 10] {
        for beta in [0.3, beta_critical()] {
            for t in lemma_t_grid(beta) {
                let (_, r) = lemma_check(&plan(n, 2000, SEED + n as u64, threads), beta, t).unwrap();
                rows += 1;
                tightest = tightest.min(r.value_bound + SIGMAS * r.stderr - r.value_estimated);
                if !r.satisfied {
                    failures.push(format!("(n={n},beta={beta:.3},t={t:.3})"));
                }
                numbers.extend([r.value_estimated, r.stderr]);
            }
        }
    }
    Outcome {
        id: 3,
        name: "lemma bound",
        pass: failures.is_empty(),
        detail: format!(
            "{rows} rows, {} violations {}; smallest slack {tightest:.3e}",
            failures.len(),
            failures.join(" ")
        ),
        numbers,
    }
}

fn c4_mgf(_: usize) -> Outcome {
    let mut worst_gap = f64::INFINITY;
    let mut failures = 0;
    let mut numbers = Vec::new();
    for n in 1..=30 {
        for i in 1..=9 {
            let x = 0.05 * i as f64;
            let exact = rademacher_mgf_exact(n, x).unwrap();
            let bound = mgf_bound(x).unwrap();
            let ok = if n >= 2 { exact < bound } else { exact <= bound };
            failures += usize::from(!ok);
            worst_gap = worst_gap.min(bound - exact);
            numbers.push(exact);
        }
    }
    Outcome {
        id: 4,
        name: "MGF inequality",
        pass: failures == 0,
        detail: format!("270 grid points, {failures} violations, smallest gap {worst_gap:.3e}"),
        numbers,
    }
}

fn c5_annealed(threads: usize) -> Outcome {
    let (n, x) = (6, 0.3);
    let est = annealed_overlap_mgf(&plan(n, 5000, SEED + n as u64, threads), beta_critical(), x).unwrap();
    let exact = rademacher_mgf_exact(n, x).unwrap();
    let diff = (est.mean - exact).abs();
    Outcome {
        id: 5,
        name: "annealed overlap MGF",
        pass: diff <= SIGMAS * est.stderr_mean,
        detail: format!(
            "estimate {:.5} exact {exact:.5} |diff|={diff:.2e} <= {:.2e}",
            est.mean,
            SIGMAS * est.stderr_mean
        ),
        numbers: vec![est.mean, est.stderr_mean],
    }
}

fn c6_interpolation(threads: usize) -> Outcome {
    let beta = beta_critical();
    let points: Vec<(f64, f64)> = [0.2, 0.4, 0.6].iter().flat_map(|&t| [(t, 0.0), (t, 0.2)]).collect();
    let mut failures = Vec::new();
    let mut numbers = Vec::new();
    for (t, lambda) in points {
        assert!(2.0 * beta * beta * (lambda + t) <= 0.9 + 1e-12);
        let c = interpolation_check(&plan(8, 2000, SEED + 8, threads), beta, t, lambda).unwrap();
        if c.difference.mean > SIGMAS * c.difference.stderr {
            failures.push(format!("(t={t},lambda={lambda})"));
        }
        numbers.extend([c.lhs.mean, c.rhs.mean, c.difference.stderr]);
    }
    Outcome {
        id: 6,
        name: "interpolation inequality",
        pass: failures.is_empty(),
        detail: format!("6 points, {} violations {}", failures.len(), failures.join(" ")),
        numbers,
    }
}

fn c7_derivative(threads: usize) -> Outcome {
    let h = 1e-4;
    let beta = beta_critical();
    let mut failures = Vec::new();
    let mut numbers = Vec::new();
    let mut worst: f64 = 0.0;
    for t in [0.25, 0.5, 0.75] {
        for lambda in [0.0, 0.1] {
            let p = InterpolationPoint::new(beta, t, lambda).unwrap();
            let c = derivative_check(&plan(6, 4000, SEED + 6, threads), p, h, DifferenceScheme::Central).unwrap();
            let window = SIGMAS * c.difference.stderr + 10.0 * h * h;
            worst = worst.max(c.difference.mean.abs() / window);
            if c.difference.mean.abs() > window {
                failures.push(format!("(t={t},lambda={lambda})"));
            }
            numbers.extend([c.lhs.mean, c.rhs.mean, c.difference.stderr]);
        }
    }
    Outcome {
        id: 7,
        name: "Gaussian IBP derivative",
        pass: failures.is_empty(),
        detail: format!(
            "6 points, {} violations {}; max |diff|/window {worst:.3}",
            failures.len(),
            failures.join(" ")
        ),
        numbers,
    }
}

fn c8_monotonicity(threads: usize) -> Outcome {
    let grid: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
    let scan = monotonicity_scan(&plan(8, 2000, SEED + 8, threads), beta_critical(), &grid).unwrap();
    let worst = scan
        .steps
        .iter()
        .map(|s| s.mean / s.stderr.max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    let mut numbers: Vec<f64> = scan.values.iter().map(|v| v.mean).collect();
    numbers.extend(scan.steps.iter().flat_map(|s| [s.mean, s.stderr]));
    Outcome {
        id: 8,
        name: "monotonicity in t",
        pass: scan.satisfied(),
        detail: format!(
            "E<R^2> from {:.5} to {:.5}; smallest step {worst:.2} stderr",
            scan.values[0].mean, scan.values[8].mean
        ),
        numbers,
    }
}

/// Adaptive Simpson, independent of the library's quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        // The floor keeps the recursion finite once roundoff dominates.
        let floor = 1e-15 * (left + right).abs();
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol.max(floor) {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

fn c9_split(_: usize) -> Outcome {
    let beta = beta_critical();
    // Exact reconstruction of the reference bound.
    let mut mismatches = 0;
    let mut max_gap: f64 = 0.0;
    let mut chain_ok = true;
    for n in 2..=1000usize {
        let delta = 1.0 / n as f64;
        let closed = variance_bound_closed_form(n, beta, delta).unwrap();
        let relaxed = variance_bound_relaxed(n, beta, delta).unwrap();
        let reference = critical_bound_reference(n);
        let gap = reference - relaxed;
        max_gap = max_gap.max(gap.abs());
        if gap.abs() > EXACT_RTOL * reference {
            mismatches += 1;
        }
        chain_ok &= closed <= relaxed * (1.0 + EXACT_RTOL) && relaxed <= reference * (1.0 + EXACT_RTOL);
    }
    // Closed form against quadrature of the bound it integrates.
    let mut worst_quad: f64 = 0.0;
    for n in [2usize, 8, 100, 1000] {
        for beta in [beta_critical(), 0.8, 1.0, 2.0] {
            let edge = 1.0 / (2.0 * beta * beta);
            for delta in [0.5 * edge, 0.125 * edge, 1e-3 * edge] {
                let closed = integral_split_closed_form(n, beta, delta).unwrap();
                let f = |t: f64| lemma_bound(n, beta, t).unwrap();
                let quad = simpson(&f, 0.0, edge - delta, 1e-13);
                worst_quad = worst_quad.max((closed - quad).abs());
            }
        }
    }
    let exact = mismatches == 0;
    let quad_ok = worst_quad <= QUADRATURE_ATOL;
    Outcome {
        id: 9,
        name: "proof-split arithmetic",
        pass: exact && quad_ok && chain_ok,
        detail: format!(
            "exact match {} ({mismatches}/999 n differ, max |reference - reconstructed| {max_gap:.6} = 3(log 2)^2 is {:.6}); \
             closed <= relaxed <= reference {}; quadrature max err {worst_quad:.1e} {}",
            verdict(exact),
            3.0 * std::f64::consts::LN_2.powi(2),
            verdict(chain_ok),
            verdict(quad_ok)
        ),
        numbers: vec![max_gap, worst_quad],
    }
}

fn c10_scaling(threads: usize) -> Outcome {
    let sizes = [4usize, 8, 12, 16];
    let beta = beta_critical();
    let est: Vec<_> = sizes
        .iter()
        .map(|&n| variance_direct(&plan(n, 4000, SEED + n as u64, threads), beta).unwrap())
        .collect();
    let per_n: Vec<(f64, f64)> = est
        .iter()
        .zip(sizes)
        .map(|(e, n)| (e.variance / n as f64, e.stderr_variance / n as f64))
        .collect();
    let pass = per_n
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + SIGMAS * (w[0].1.hypot(w[1].1)));
    let ratio = est
        .iter()
        .zip(sizes)
        .map(|(e, n)| e.variance / theorem_envelope(n as f64, Regime::Critical, 1.0))
        .fold(0.0, f64::max);
    // Least-squares slope of Var against log n, informational only.
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = est.iter().map(|e| e.variance).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let listing: Vec<String> = sizes
        .iter()
        .zip(&per_n)
        .map(|(n, (v, s))| format!("n={n}: {v:.5}+-{s:.5}"))
        .collect();
    let mut numbers: Vec<f64> = est.iter().flat_map(|e| [e.variance, e.stderr_variance]).collect();
    numbers.extend([ratio, slope]);
    Outcome {
        id: 10,
        name: "scaling sanity",
        pass,
        detail: format!(
            "Var/n {}; max Var/((log n)^2+1) = {ratio:.4}; log-n slope {slope:.4} (informational)",
            listing.join(", ")
        ),
        numbers,
    }
}

const CHECKS: [Check; 10] = [
    c1_identity,
    c2_factorization,
    c3_lemma,
    c4_mgf,
    c5_annealed,
    c6_interpolation,
    c7_derivative,
    c8_monotonicity,
    c9_split,
    c10_scaling,
];

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    // 0 means the pool default, which is one worker per core.
    let threads = match Parallelism::from_env().threads() {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    };
    let other = if threads == 1 { 3 } else { 1 };
    let strict = std::env::var("SKFLUCT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut fatal = false;
    let mut report = |o: &Outcome, secs: f64| {
        let known = KNOWN_FAILURES.contains(&o.id);
        let tag = if !o.pass && known { " (known)" } else { "" };
        println!(
            "[{}] {:>2} {}{tag}: {} [{secs:.1}s]",
            verdict(o.pass),
            o.id,
            o.name,
            o.detail
        );
        fatal |= !o.pass && (strict || !known);
    };

    let mut first = Vec::new();
    for check in CHECKS {
        let start = Instant::now();
        let o = check(threads);
        report(&o, start.elapsed().as_secs_f64());
        first.push(o);
    }

    let start = Instant::now();
    let differing: Vec<u32> = CHECKS
        .iter()
        .zip(&first)
        .filter(|(check, o)| {
            let again = check(other);
            again.numbers.len() != o.numbers.len()
                || again
                    .numbers
                    .iter()
                    .zip(&o.numbers)
                    .any(|(a, b)| a.to_bits() != b.to_bits())
        })
        .map(|(_, o)| o.id)
        .collect();
    let o = Outcome {
        id: 11,
        name: "determinism across thread counts",
        pass: differing.is_empty(),
        detail: format!(
            "criteria 1-10 rerun with {} vs {} threads, bitwise differences in {:?}",
            threads, other, differing
        ),
        numbers: Vec::new(),
    };
    report(&o, start.elapsed().as_secs_f64());

    if fatal {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
