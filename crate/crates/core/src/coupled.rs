//! Interpolated two-replica system.
//!
//! Replica `s` feels `H1_t = sqrt(t) H_g + sqrt(1-t) H_g'`, replica `r` feels
//! `H2_t = sqrt(t) H_g + sqrt(1-t) H_g''`, and the pair is tilted by
//! `lambda beta^2 n R(s, r)^2`. Everything here is per realization; disorder
//! averages live in [`crate::estimators`].

use serde::{Deserialize, Serialize};

use crate::disorder::{
    effective_couplings, sample_disorder, DisorderRealization, EffectiveCouplings, SeedSpec, StreamTag,
};
use crate::error::{check_finite, check_unit_interval, Error, Result};
use crate::system::{
    energies_in_gray_order, gibbs_enumerate, hamiltonian, overlap_second_moment_product, GibbsSummary,
    SpinConfiguration, MAX_SPINS,
};

/// Largest size for the `4^n` pair enumeration.
pub const MAX_PAIR_SPINS: usize = 13;

/// Above this many e-folds between the factorized weight offset and the
/// heaviest pair, the kernel switches to per-pair exponentials.
const FACTORIZED_GAP_LIMIT: f64 = 600.0;

/// The disorder triple `(g, g', g'')` of one replica index.
#[derive(Debug, Clone)]
pub struct CoupledDisorder {
    g: DisorderRealization,
    g_prime: DisorderRealization,
    g_double_prime: DisorderRealization,
    couplings: [EffectiveCouplings; 3],
}

impl CoupledDisorder {
    pub fn new(
        g: DisorderRealization,
        g_prime: DisorderRealization,
        g_double_prime: DisorderRealization,
    ) -> Result<Self> {
        for other in [&g_prime, &g_double_prime] {
            if other.n() != g.n() {
                return Err(Error::SizeMismatch {
                    expected: g.n(),
                    found: other.n(),
                });
            }
        }
        let couplings = [
            effective_couplings(&g),
            effective_couplings(&g_prime),
            effective_couplings(&g_double_prime),
        ];
        Ok(Self {
            g,
            g_prime,
            g_double_prime,
            couplings,
        })
    }

    /// Draws all three matrices for `replica_index`, differing only in stream tag.
    pub fn sample(n: usize, master_seed: u64, replica_index: u64) -> Result<Self> {
        let draw = |tag| sample_disorder(n, SeedSpec::new(master_seed, replica_index, tag));
        Self::new(
            draw(StreamTag::Shared)?,
            draw(StreamTag::Prime)?,
            draw(StreamTag::DoublePrime)?,
        )
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn g(&self) -> &DisorderRealization {
        &self.g
    }

    pub fn g_prime(&self) -> &DisorderRealization {
        &self.g_prime
    }

    pub fn g_double_prime(&self) -> &DisorderRealization {
        &self.g_double_prime
    }

    pub fn shared_couplings(&self) -> &EffectiveCouplings {
        &self.couplings[0]
    }

    /// Couplings of `H1_t` and `H2_t`.
    pub fn side_couplings(&self, t: f64) -> Result<(EffectiveCouplings, EffectiveCouplings)> {
        check_unit_interval("t", t)?;
        let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
        let [g, gp, gpp] = &self.couplings;
        Ok((g.combine(a, gp, b)?, g.combine(a, gpp, b)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPoint {
    pub beta: f64,
    pub t: f64,
    pub lambda: f64,
}

impl InterpolationPoint {
    pub fn new(beta: f64, t: f64, lambda: f64) -> Result<Self> {
        let p = Self { beta, t, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("beta", self.beta)?;
        if self.beta < 0.0 {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: self.beta,
                reason: "must be nonnegative",
            });
        }
        check_unit_interval("t", self.t)?;
        check_finite("lambda", self.lambda)
    }

    /// Whether the Rademacher moment bound applies: `2 beta^2 (lambda + t) < 1`.
    pub fn within_mgf_domain(&self) -> bool {
        2.0 * self.beta * self.beta * (self.lambda + self.t) < 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSummary {
    pub n: usize,
    pub point: InterpolationPoint,
    /// `(1/n) log sum_{s,r} exp(beta (H1_t(s) + H2_t(r)) + lambda beta^2 n R^2)`.
    pub phi_hat: f64,
    pub corr_sigma: Vec<f64>,
    pub corr_rho: Vec<f64>,
    /// `<R(s, r)^2>`.
    pub r2: f64,
    /// `<R(s1, r2)^2>` across two independent copies of the pair.
    pub r2_cross: f64,
}

pub fn coupled_hamiltonians(
    cd: &CoupledDisorder,
    t: f64,
    sigma: &SpinConfiguration,
    rho: &SpinConfiguration,
) -> Result<(f64, f64)> {
    check_unit_interval("t", t)?;
    let [g, gp, gpp] = &cd.couplings;
    let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
    Ok((
        a * hamiltonian(g, sigma)? + b * hamiltonian(gp, sigma)?,
        a * hamiltonian(g, rho)? + b * hamiltonian(gpp, rho)?,
    ))
}

fn check_pair_size(n: usize) -> Result<()> {
    if (1..=MAX_PAIR_SPINS).contains(&n) {
        Ok(())
    } else {
        Err(Error::SizeOutOfRange {
            n,
            min: 1,
            max: MAX_PAIR_SPINS,
        })
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Sums over all pairs, each normalized by `exp(log_offset)`.
struct PairSums {
    log_offset: f64,
    total: f64,
    d2: f64,
    extra: f64,
    /// `sum w s_i s_j`, row-major.
    sigma_corr: Vec<f64>,
    /// `sum_s w`, by Gray position of `r`.
    rho_weight: Vec<f64>,
}

fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Nested Gray-code sweep over `(s, r)`. The overlap dot product `d` is kept
/// as an exact integer, moved by +-2 per inner flip; the tilt is looked up
/// from `d`, never accumulated. `extra`, if present, is a table over `d`
/// whose weighted sum is returned in `PairSums::extra`.
fn pair_sweep(n: usize, x1: &[f64], x2: &[f64], masks: &[u64], tilt: &[f64], extra: Option<&[f64]>) -> PairSums {
    let states = masks.len();
    let flips: Vec<u32> = (0..states as u64)
        .map(|k| if k == 0 { 0 } else { k.trailing_zeros() })
        .collect();

    let (m1, m2, mt) = (max_of(x1), max_of(x2), max_of(tilt));
    let a1 = x1.iter().position(|&x| x == m1).unwrap_or(0);
    let a2 = x2.iter().position(|&x| x == m2).unwrap_or(0);
    let d_star = n as i64 - 2 * (masks[a1] ^ masks[a2]).count_ones() as i64;
    let gap = m1 + m2 + mt - (m1 + m2 + tilt[(d_star + n as i64) as usize]);

    let d2_table: Vec<f64> = (0..=2 * n).map(|i| ((i as f64) - n as f64).powi(2)).collect();

    // weight(outer_pre, k2, d_index)
    let factorized = gap <= FACTORIZED_GAP_LIMIT;
    let (log_offset, outer_pre, inner_b, inner_c): (f64, Vec<f64>, Vec<f64>, Vec<f64>) = if factorized {
        (
            m1 + m2 + mt,
            x1.iter().map(|x| (x - m1).exp()).collect(),
            x2.iter().map(|x| (x - m2).exp()).collect(),
            tilt.iter().map(|x| (x - mt).exp()).collect(),
        )
    } else {
        let mut best = f64::NEG_INFINITY;
        for (k1, &s1) in masks.iter().enumerate() {
            for (k2, &s2) in masks.iter().enumerate() {
                let d = n as i64 - 2 * (s1 ^ s2).count_ones() as i64;
                best = best.max(x1[k1] + x2[k2] + tilt[(d + n as i64) as usize]);
            }
        }
        (best, x1.iter().map(|x| x - best).collect(), x2.to_vec(), tilt.to_vec())
    };

    let mut total = (0.0, 0.0);
    let mut d2 = (0.0, 0.0);
    let mut extra_sum = (0.0, 0.0);
    let mut sigma_corr = vec![0.0; n * n];
    let mut rho_weight = vec![0.0; states];
    let mut spins = vec![-1.0f64; n];

    for (k1, &s1) in masks.iter().enumerate() {
        if k1 > 0 {
            let b = flips[k1] as usize;
            spins[b] = -spins[b];
        }
        let pre = outer_pre[k1];
        let mut d = n as i64 - 2 * s1.count_ones() as i64;
        let (mut loc_w, mut loc_d2, mut loc_x) = (0.0, 0.0, 0.0);
        for k2 in 0..states {
            if k2 > 0 {
                let b = flips[k2];
                let differ = ((s1 ^ masks[k2 - 1]) >> b) & 1;
                d += 4 * differ as i64 - 2;
            }
            let di = (d + n as i64) as usize;
            let w = if factorized {
                pre * inner_b[k2] * inner_c[di]
            } else {
                (pre + inner_b[k2] + inner_c[di]).exp()
            };
            loc_w += w;
            loc_d2 += w * d2_table[di];
            if let Some(x) = extra {
                loc_x += w * x[di];
            }
            rho_weight[k2] += w;
        }
        neumaier(&mut total.0, &mut total.1, loc_w);
        neumaier(&mut d2.0, &mut d2.1, loc_d2);
        neumaier(&mut extra_sum.0, &mut extra_sum.1, loc_x);
        for i in 0..n {
            let ws = loc_w * spins[i];
            for j in 0..n {
                sigma_corr[i * n + j] += ws * spins[j];
            }
        }
    }

    PairSums {
        log_offset,
        total: total.0 + total.1,
        d2: d2.0 + d2.1,
        extra: extra_sum.0 + extra_sum.1,
        sigma_corr,
        rho_weight,
    }
}

fn tilt_table(n: usize, coef: f64) -> Vec<f64> {
    // indexed by d + n; d has the parity of n, so odd indices are unreachable
    (0..=2 * n)
        .map(|i| {
            let d = i as f64 - n as f64;
            if i % 2 == 0 {
                coef * d * d
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn normalized_corr(raw: &[f64], total: f64, n: usize) -> Vec<f64> {
    let mut c: Vec<f64> = raw.iter().map(|x| (x / total).clamp(-1.0, 1.0)).collect();
    for i in 0..n {
        c[i * n + i] = 1.0;
    }
    c
}

/// Exact `<.>_{t, lambda}` summary by enumerating all `4^n` pairs.
pub fn coupled_enumerate(cd: &CoupledDisorder, p: InterpolationPoint) -> Result<CoupledSummary> {
    let n = cd.n();
    check_pair_size(n)?;
    p.validate()?;
    let (c1, c2) = cd.side_couplings(p.t)?;
    let (e1, masks) = energies_in_gray_order(&c1);
    let (e2, _) = energies_in_gray_order(&c2);
    let x1: Vec<f64> = e1.iter().map(|e| p.beta * e).collect();
    let x2: Vec<f64> = e2.iter().map(|e| p.beta * e).collect();
    let tilt = tilt_table(n, p.lambda * p.beta * p.beta / n as f64);

    let sums = pair_sweep(n, &x1, &x2, &masks, &tilt, None);
    let nf = n as f64;
    let phi_hat = (sums.total.ln() + sums.log_offset) / nf;
    let r2 = (sums.d2 / sums.total / (nf * nf)).clamp(0.0, 1.0);

    let corr_sigma = normalized_corr(&sums.sigma_corr, sums.total, n);
    let mut rho_raw = vec![0.0; n * n];
    let mut spins = vec![0.0; n];
    for (&mask, &w) in masks.iter().zip(&sums.rho_weight) {
        for (i, s) in spins.iter_mut().enumerate() {
            *s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        for i in 0..n {
            let ws = w * spins[i];
            for j in 0..n {
                rho_raw[i * n + j] += ws * spins[j];
            }
        }
    }
    let corr_rho = normalized_corr(&rho_raw, sums.total, n);
    let r2_cross = (corr_sigma.iter().zip(&corr_rho).map(|(a, b)| a * b).sum::<f64>() / (nf * nf)).clamp(0.0, 1.0);

    Ok(CoupledSummary {
        n,
        point: p,
        phi_hat,
        corr_sigma,
        corr_rho,
        r2,
        r2_cross,
    })
}

/// The two single-system summaries of `H1_t` and `H2_t` at `beta`.
pub fn side_summaries(cd: &CoupledDisorder, beta: f64, t: f64) -> Result<(GibbsSummary, GibbsSummary)> {
    let n = cd.n();
    if n > MAX_SPINS {
        return Err(Error::SizeOutOfRange {
            n,
            min: 1,
            max: MAX_SPINS,
        });
    }
    let (c1, c2) = cd.side_couplings(t)?;
    Ok((gibbs_enumerate(&c1, beta)?, gibbs_enumerate(&c2, beta)?))
}

/// `<R(s, r)^2>_{t,0}` from the two independent marginals, `2 * 2^n` work.
pub fn factorized_r2(cd: &CoupledDisorder, beta: f64, t: f64) -> Result<f64> {
    let (a, b) = side_summaries(cd, beta, t)?;
    overlap_second_moment_product(&a, &b)
}

/// `phi_hat` at `lambda = 0`, where the pair measure is a product.
pub fn factorized_phi(cd: &CoupledDisorder, beta: f64, t: f64) -> Result<f64> {
    let (a, b) = side_summaries(cd, beta, t)?;
    Ok((a.log_z + b.log_z) / cd.n() as f64)
}

/// `Phi(t, lambda) = phi(t, lambda - t)` per realization.
pub fn shifted_phi(cd: &CoupledDisorder, beta: f64, t: f64, lambda: f64) -> Result<f64> {
    Ok(coupled_enumerate(cd, InterpolationPoint::new(beta, t, lambda - t)?)?.phi_hat)
}

/// `<exp(x n R(s, r)^2)>_{0,0}` for this realization: the decoupled pair
/// measure of `H_g'` and `H_g''` at `beta`, reweighted by the overlap.
pub fn overlap_mgf(cd: &CoupledDisorder, beta: f64, x: f64) -> Result<f64> {
    let n = cd.n();
    check_pair_size(n)?;
    check_finite("x", x)?;
    InterpolationPoint::new(beta, 0.0, 0.0)?;
    let (c1, c2) = cd.side_couplings(0.0)?;
    let (e1, masks) = energies_in_gray_order(&c1);
    let (e2, _) = energies_in_gray_order(&c2);
    let x1: Vec<f64> = e1.iter().map(|e| beta * e).collect();
    let x2: Vec<f64> = e2.iter().map(|e| beta * e).collect();
    let log_tilt = tilt_table(n, x / n as f64);
    let top = max_of(&log_tilt);
    let table: Vec<f64> = log_tilt.iter().map(|v| (v - top).exp()).collect();
    let sums = pair_sweep(n, &x1, &x2, &masks, &tilt_table(n, 0.0), Some(&table));
    Ok(sums.extra / sums.total * top.exp())
}

/// Central difference `(f(x+h) - f(x-h)) / 2h`, optionally Richardson
/// extrapolated with the half step: `(4 D(h/2) - D(h)) / 3`.
pub fn central_difference<F>(mut f: F, x: f64, h: f64, richardson: bool) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut diff = |h: f64| -> Result<f64> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
    let coarse = diff(h)?;
    if richardson {
        Ok((4.0 * diff(h / 2.0)? - coarse) / 3.0)
    } else {
        Ok(coarse)
    }
}

/// `d phi_hat / dt` by central difference at fixed `(beta, lambda)`.
pub fn phi_t_derivative(cd: &CoupledDisorder, p: InterpolationPoint, h: f64, richardson: bool) -> Result<f64> {
    if p.t - h < 0.0 || p.t + h > 1.0 {
        return Err(Error::InvalidParameter {
            name: "h",
            value: h,
            reason: "central difference leaves [0, 1]",
        });
    }
    central_difference(
        |t| Ok(coupled_enumerate(cd, InterpolationPoint { t, ..p })?.phi_hat),
        p.t,
        h,
        richardson,
    )
}

/// `d phi_hat / d lambda` by central difference.
pub fn phi_lambda_derivative(cd: &CoupledDisorder, p: InterpolationPoint, h: f64) -> Result<f64> {
    central_difference(
        |lambda| Ok(coupled_enumerate(cd, InterpolationPoint { lambda, ..p })?.phi_hat),
        p.lambda,
        h,
        false,
    )
}
