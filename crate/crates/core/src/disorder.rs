//! Quenched Gaussian disorder.
//!
//! Every realization is a pure function of its [`SeedSpec`]. Streams come
//! from ChaCha20 keyed by the master seed, with the 64-bit ChaCha stream id
//! encoding `(replica_index, stream_tag)`; the block counter then walks the
//! stream. Replica `k` therefore never depends on how many replicas were drawn
//! before it or on which thread drew it. Normal variates use the ziggurat
//! sampler from `rand_distr`, filled row-major into `g`.

use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the three independent coupling matrices a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamTag {
    /// The shared disorder `g`.
    Shared,
    /// First private disorder `g'`.
    Prime,
    /// Second private disorder `g''`.
    DoublePrime,
}

impl StreamTag {
    pub const ALL: [StreamTag; 3] = [StreamTag::Shared, StreamTag::Prime, StreamTag::DoublePrime];

    /// Stable numeric code, as stored in disorder dumps.
    pub fn code(self) -> u64 {
        match self {
            StreamTag::Shared => 0,
            StreamTag::Prime => 1,
            StreamTag::DoublePrime => 2,
        }
    }

    fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(StreamTag::Shared),
            1 => Some(StreamTag::Prime),
            2 => Some(StreamTag::DoublePrime),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replica_index: u64,
    pub stream_tag: StreamTag,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replica_index: u64, stream_tag: StreamTag) -> Self {
        Self {
            master_seed,
            replica_index,
            stream_tag,
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        // low two bits of the stream id: 0..=2 are disorder tags, 3 is auxiliary
        seeded_stream(self.master_seed, (self.replica_index << 2) | self.stream_tag.code())
    }
}

impl fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(master_seed={}, replica_index={}, stream={:?})",
            self.master_seed, self.replica_index, self.stream_tag
        )
    }
}

fn seeded_stream(master_seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Auxiliary stream (bootstrap resampling and the like), disjoint from every
/// disorder stream of the same master seed.
pub fn auxiliary_rng(master_seed: u64, id: u64) -> ChaCha20Rng {
    seeded_stream(master_seed, (id << 2) | 3)
}

/// One quenched sample of the full `n x n` coupling matrix, diagonal included.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    n: usize,
    g: Vec<f64>,
    seed: SeedSpec,
}

impl DisorderRealization {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major couplings, `g[i * n + j]`.
    pub fn couplings(&self) -> &[f64] {
        &self.g
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    pub fn seed(&self) -> SeedSpec {
        self.seed
    }

    /// Builds a realization from explicit couplings. The seed is recorded as
    /// provenance only.
    pub fn from_matrix(n: usize, g: Vec<f64>, seed: SeedSpec) -> Result<Self> {
        if n == 0 {
            return Err(Error::SizeOutOfRange {
                n,
                min: 1,
                max: usize::MAX,
            });
        }
        if g.len() != n * n {
            return Err(Error::SizeMismatch {
                expected: n * n,
                found: g.len(),
            });
        }
        Ok(Self { n, g, seed })
    }

    /// Binary dump: four little-endian `u64` header words
    /// (`n`, `master_seed`, `replica_index`, stream tag code) followed by the
    /// `n^2` couplings as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = [
            self.n as u64,
            self.seed.master_seed,
            self.seed.replica_index,
            self.seed.stream_tag.code(),
        ];
        for word in header {
            w.write_all(&word.to_le_bytes())?;
        }
        for &x in &self.g {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for slot in header.iter_mut() {
            r.read_exact(&mut word)?;
            *slot = u64::from_le_bytes(word);
        }
        let [n, master_seed, replica_index, tag] = header;
        let stream_tag = StreamTag::from_code(tag).ok_or_else(|| Error::Format(format!("unknown stream tag {tag}")))?;
        if n == 0 || n > 1 << 16 {
            return Err(Error::Format(format!("implausible size {n}")));
        }
        let n = n as usize;
        let mut g = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            r.read_exact(&mut word)?;
            g.push(f64::from_le_bytes(word));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", rest.len())));
        }
        Self::from_matrix(n, g, SeedSpec::new(master_seed, replica_index, stream_tag))
    }
}

pub fn sample_disorder(n: usize, seed: SeedSpec) -> Result<DisorderRealization> {
    if n == 0 {
        return Err(Error::SizeOutOfRange {
            n,
            min: 1,
            max: usize::MAX,
        });
    }
    let mut rng = seed.rng();
    let g = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(DisorderRealization { n, g, seed })
}

/// Symmetrized couplings: `J_ij = g_ij + g_ji` for `i < j` plus the
/// configuration-independent diagonal sum, so that
/// `sqrt(n) H(s) = diag_sum + sum_{i<j} J_ij s_i s_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCouplings {
    n: usize,
    j_upper: Vec<f64>,
    diag_sum: f64,
}

impl EffectiveCouplings {
    pub fn from_parts(n: usize, j_upper: Vec<f64>, diag_sum: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::SizeOutOfRange {
                n,
                min: 1,
                max: usize::MAX,
            });
        }
        let expected = n * (n - 1) / 2;
        if j_upper.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: j_upper.len(),
            });
        }
        Ok(Self { n, j_upper, diag_sum })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            j_upper: vec![0.0; n * n.saturating_sub(1) / 2],
            diag_sum: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Upper-triangle couplings in row order: (0,1), (0,2), .., (1,2), ..
    pub fn j_upper(&self) -> &[f64] {
        &self.j_upper
    }

    pub fn diag_sum(&self) -> f64 {
        self.diag_sum
    }

    /// Symmetric `n x n` row-major matrix with zero diagonal.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                m[i * n + j] = self.j_upper[idx];
                m[j * n + i] = self.j_upper[idx];
                idx += 1;
            }
        }
        m
    }

    /// `a * self + b * other`, the couplings of `a H + b H'`.
    pub fn combine(&self, a: f64, other: &EffectiveCouplings, b: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(Self {
            n: self.n,
            j_upper: self
                .j_upper
                .iter()
                .zip(&other.j_upper)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            diag_sum: a * self.diag_sum + b * other.diag_sum,
        })
    }
}

pub fn effective_couplings(d: &DisorderRealization) -> EffectiveCouplings {
    let n = d.n;
    let mut j_upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            j_upper.push(d.get(i, j) + d.get(j, i));
        }
    }
    let diag_sum = (0..n).map(|i| d.get(i, i)).sum();
    EffectiveCouplings { n, j_upper, diag_sum }
}
