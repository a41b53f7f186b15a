//! Sample moments and seeded bootstrap resampling.

use rand::Rng;

use crate::disorder::auxiliary_rng;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values. Deviations are
/// taken from the first value, which makes constant data exactly zero.
pub fn unbiased_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let k = xs.len() as f64;
    let shift = xs[0];
    let (s, s2) = xs.iter().fold((0.0, 0.0), |(s, s2), x| {
        let d = x - shift;
        (s + d, s2 + d * d)
    });
    ((s2 - s * s / k) / (k - 1.0)).max(0.0)
}

/// Nonparametric bootstrap with a fixed resampling stream. Two statistics
/// evaluated with the same `Bootstrap` see the same resampled index sets,
/// which is what paired comparisons need.
#[derive(Debug, Clone, Copy)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

impl Bootstrap {
    pub const DEFAULT_RESAMPLES: usize = 1000;

    pub fn new(seed: u64) -> Self {
        Self {
            resamples: Self::DEFAULT_RESAMPLES,
            seed,
        }
    }

    /// Replicates of `stat` over resampled index sets of size `k`.
    pub fn replicates<F>(&self, k: usize, mut stat: F) -> Vec<f64>
    where
        F: FnMut(&[usize]) -> f64,
    {
        let mut rng = auxiliary_rng(self.seed, 0);
        let mut idx = vec![0usize; k];
        (0..self.resamples)
            .map(|_| {
                idx.iter_mut().for_each(|i| *i = rng.random_range(0..k));
                stat(&idx)
            })
            .collect()
    }

    /// Bootstrap standard error: the standard deviation of the replicates.
    pub fn standard_error<F>(&self, k: usize, stat: F) -> f64
    where
        F: FnMut(&[usize]) -> f64,
    {
        unbiased_variance(&self.replicates(k, stat)).sqrt()
    }
}

pub fn gather(xs: &[f64], idx: &[usize], out: &mut Vec<f64>) {
    out.clear();
    out.extend(idx.iter().map(|&i| xs[i]));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(unbiased_variance(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(unbiased_variance(&[4.0]), 0.0);
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let b = Bootstrap::new(5);
        let mut buf = Vec::new();
        let mut se = |b: &Bootstrap| {
            b.standard_error(xs.len(), |idx| {
                gather(&xs, idx, &mut buf);
                mean(&buf)
            })
        };
        let first = se(&b);
        assert_eq!(first, se(&b));
        // close to the analytic standard error of the mean
        let analytic = (unbiased_variance(&xs) / xs.len() as f64).sqrt();
        assert!((first / analytic - 1.0).abs() < 0.15, "{first} vs {analytic}");
    }

    #[test]
    fn constant_data_has_zero_error() {
        let xs = vec![3.5; 50];
        let se = Bootstrap::new(1).standard_error(50, |idx| idx.iter().map(|&i| xs[i]).sum::<f64>() / 50.0);
        assert_eq!(se, 0.0);
    }
}
