//! Exact enumeration of a single SK system over all `2^n` spin configurations.

use serde::{Deserialize, Serialize};

use crate::disorder::EffectiveCouplings;
use crate::error::{check_finite, Error, Result};

/// Largest system enumerated configuration by configuration.
pub const MAX_SPINS: usize = 30;

/// Exponent headroom before the running log-sum-exp reference is moved.
/// Weights stay below `e^32`, so `2^30` of them cannot overflow.
const RESCALE_HEADROOM: f64 = 32.0;

/// Terms summed naively before being folded into the compensated totals.
const BLOCK: usize = 256;

/// Spin configuration as a bit mask: bit `i` set means `s_i = +1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfiguration {
    bits: u64,
    n: usize,
}

impl SpinConfiguration {
    pub fn new(bits: u64, n: usize) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::SizeOutOfRange { n, min: 1, max: 64 });
        }
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        Ok(Self { bits: bits & mask, n })
    }

    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let mut bits = 0u64;
        for (i, &s) in spins.iter().enumerate() {
            match s {
                1 => bits |= 1 << i,
                -1 => {}
                _ => {
                    return Err(Error::InvalidParameter {
                        name: "spin",
                        value: s as f64,
                        reason: "spins must be +1 or -1",
                    })
                }
            }
        }
        Self::new(bits, spins.len())
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spin(&self, i: usize) -> f64 {
        if self.bits >> i & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn spins(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.spin(i)).collect()
    }

    /// Global spin flip.
    pub fn flipped(&self) -> Self {
        Self::new(!self.bits, self.n).expect("size already validated")
    }
}

/// Reflected binary Gray code over `n` bits. Yields every mask exactly once,
/// each differing from its predecessor in the reported bit.
#[derive(Debug, Clone)]
pub struct GrayCode {
    k: u64,
    end: u64,
}

impl GrayCode {
    pub fn new(n: usize) -> Self {
        assert!(n < 64, "gray code over {n} bits");
        Self { k: 0, end: 1 << n }
    }
}

impl Iterator for GrayCode {
    /// `(mask, bit flipped to reach it)`; the first item has no flip.
    type Item = (u64, Option<usize>);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        if self.k >= self.end {
            return None;
        }
        let k = self.k;
        self.k += 1;
        let flip = (k > 0).then(|| k.trailing_zeros() as usize);
        Some((k ^ (k >> 1), flip))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.k) as usize;
        (left, Some(left))
    }
}

/// `H(s) = (diag_sum + sum_{i<j} J_ij s_i s_j) / sqrt(n)`.
pub fn hamiltonian(c: &EffectiveCouplings, sigma: &SpinConfiguration) -> Result<f64> {
    let n = c.n();
    if sigma.n() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: sigma.n(),
        });
    }
    let s = sigma.spins();
    let mut pairs = 0.0;
    let mut idx = 0;
    for i in 0..n {
        for j in i + 1..n {
            pairs += c.j_upper()[idx] * s[i] * s[j];
            idx += 1;
        }
    }
    Ok((c.diag_sum() + pairs) / (n as f64).sqrt())
}

pub fn overlap(sigma: &SpinConfiguration, rho: &SpinConfiguration) -> Result<f64> {
    if sigma.n() != rho.n() {
        return Err(Error::SizeMismatch {
            expected: sigma.n(),
            found: rho.n(),
        });
    }
    let n = sigma.n() as i64;
    let disagree = (sigma.bits() ^ rho.bits()).count_ones() as i64;
    Ok((n - 2 * disagree) as f64 / n as f64)
}

/// Per-realization Gibbs data at one inverse temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsSummary {
    pub n: usize,
    pub beta: f64,
    /// `log Z`, i.e. the free energy `F_N(beta)` of this realization.
    pub log_z: f64,
    /// Row-major `n x n` matrix of `<s_i s_j>`.
    pub corr: Vec<f64>,
    /// `<H>`.
    pub mean_energy: f64,
}

impl GibbsSummary {
    pub fn corr_at(&self, i: usize, j: usize) -> f64 {
        self.corr[i * self.n + j]
    }

    /// `<R(s1, s2)^2>` for two replicas drawn from this same measure.
    pub fn self_overlap_second_moment(&self) -> f64 {
        self.corr.iter().map(|c| c * c).sum::<f64>() / (self.n * self.n) as f64
    }
}

fn check_enumerable(n: usize) -> Result<()> {
    if (1..=MAX_SPINS).contains(&n) {
        Ok(())
    } else {
        Err(Error::SizeOutOfRange {
            n,
            min: 1,
            max: MAX_SPINS,
        })
    }
}

/// Neumaier-compensated vector of running sums, fed in blocks.
struct Compensated {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl Compensated {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    fn absorb(&mut self, block: &mut [f64]) {
        for ((s, c), b) in self.sum.iter_mut().zip(&mut self.comp).zip(block.iter_mut()) {
            let x = *b;
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
            *b = 0.0;
        }
    }

    fn scale(&mut self, f: f64) {
        self.sum.iter_mut().for_each(|s| *s *= f);
        self.comp.iter_mut().for_each(|c| *c *= f);
    }

    fn totals(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

/// Streaming Gray-code pass. Slot 0 of the accumulators is `sum w`, slot 1
/// `sum w u`, then (if `CORR`) the `i < j` pairs `sum w s_i s_j` row by row.
/// `u` is the unnormalized pair energy `sum_{i<j} J_ij s_i s_j`; weights are
/// `exp(scale * u - reference)`.
fn sweep<const CORR: bool>(c: &EffectiveCouplings, scale: f64) -> (f64, Vec<f64>) {
    let n = c.n();
    let rows = c.dense();
    let n_pairs = if CORR { n * (n - 1) / 2 } else { 0 };
    let width = 2 + n_pairs;
    let row_offset: Vec<usize> = (0..n).map(|i| 2 + i * (2 * n - i - 1) / 2).collect();

    let mut spins = vec![-1.0f64; n];
    let mut u: f64 = c.j_upper().iter().sum();
    let mut reference = scale * u;
    let mut total = Compensated::new(width);
    let mut block = vec![0.0; width];
    let mut filled = 0;

    for (_, flip) in GrayCode::new(n) {
        if let Some(b) = flip {
            let row = &rows[b * n..(b + 1) * n];
            let field: f64 = row.iter().zip(&spins).map(|(j, s)| j * s).sum();
            u -= 2.0 * spins[b] * field;
            spins[b] = -spins[b];
        }
        let x = scale * u;
        if x > reference + RESCALE_HEADROOM {
            let f = (reference - x).exp();
            total.absorb(&mut block);
            filled = 0;
            total.scale(f);
            reference = x;
        }
        let w = (x - reference).exp();
        block[0] += w;
        block[1] += w * u;
        if CORR {
            for i in 0..n - 1 {
                let ws = w * spins[i];
                let off = row_offset[i];
                for (acc, sj) in block[off..off + n - 1 - i].iter_mut().zip(&spins[i + 1..]) {
                    *acc += ws * sj;
                }
            }
        }
        filled += 1;
        if filled == BLOCK {
            total.absorb(&mut block);
            filled = 0;
        }
    }
    total.absorb(&mut block);
    (reference, total.totals())
}

/// Free energy, correlation matrix and mean energy by full enumeration.
pub fn gibbs_enumerate(c: &EffectiveCouplings, beta: f64) -> Result<GibbsSummary> {
    let n = c.n();
    check_enumerable(n)?;
    check_finite("beta", beta)?;
    let sqrt_n = (n as f64).sqrt();
    let scale = beta / sqrt_n;
    let (reference, sums) = sweep::<true>(c, scale);
    let z = sums[0];
    let log_z = z.ln() + reference + beta * c.diag_sum() / sqrt_n;
    let mean_energy = (c.diag_sum() + sums[1] / z) / sqrt_n;

    let mut corr = vec![0.0; n * n];
    let mut p = 2;
    for i in 0..n {
        corr[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = (sums[p] / z).clamp(-1.0, 1.0);
            corr[i * n + j] = v;
            corr[j * n + i] = v;
            p += 1;
        }
    }
    Ok(GibbsSummary {
        n,
        beta,
        log_z,
        corr,
        mean_energy,
    })
}

/// `log Z` alone; skips the correlation accumulation.
pub fn log_partition(c: &EffectiveCouplings, beta: f64) -> Result<f64> {
    let n = c.n();
    check_enumerable(n)?;
    check_finite("beta", beta)?;
    let sqrt_n = (n as f64).sqrt();
    let (reference, sums) = sweep::<false>(c, beta / sqrt_n);
    Ok(sums[0].ln() + reference + beta * c.diag_sum() / sqrt_n)
}

/// `(1/n^2) sum_ij a_ij b_ij`, which is `<R(s, r)^2>` when `s` and `r` are
/// drawn independently from the two measures.
pub fn overlap_second_moment_product(a: &GibbsSummary, b: &GibbsSummary) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::SizeMismatch {
            expected: a.n,
            found: b.n,
        });
    }
    let dot: f64 = a.corr.iter().zip(&b.corr).map(|(x, y)| x * y).sum();
    Ok(dot / (a.n * a.n) as f64)
}

/// Energies `H(s)` of every configuration, indexed by Gray-code position.
/// Also returns the masks in the same order.
pub(crate) fn energies_in_gray_order(c: &EffectiveCouplings) -> (Vec<f64>, Vec<u64>) {
    let n = c.n();
    let rows = c.dense();
    let sqrt_n = (n as f64).sqrt();
    let mut spins = vec![-1.0f64; n];
    let mut u: f64 = c.j_upper().iter().sum();
    let mut energies = Vec::with_capacity(1 << n);
    let mut masks = Vec::with_capacity(1 << n);
    for (mask, flip) in GrayCode::new(n) {
        if let Some(b) = flip {
            let row = &rows[b * n..(b + 1) * n];
            let field: f64 = row.iter().zip(&spins).map(|(j, s)| j * s).sum();
            u -= 2.0 * spins[b] * field;
            spins[b] = -spins[b];
        }
        energies.push((c.diag_sum() + u) / sqrt_n);
        masks.push(mask);
    }
    (energies, masks)
}
