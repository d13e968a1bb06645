//! Numeric helpers shared across the crate: deterministic summation, RNG
//! substream derivation, correlation, and data digests.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Pairwise (cascade) summation. Deterministic for a fixed input order and
/// accurate to O(log n) rounding error, so mean-based estimators reproduce
/// to ~1e-12 regardless of how the surrounding code is parallelized.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 32;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean via pairwise summation. Returns 0.0 on empty input; callers that
/// consider empty input an error must check first.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Mean of `f(v)` over a slice, materialized so the sum stays pairwise.
pub fn mean_map<T>(values: &[T], f: impl Fn(&T) -> f64) -> f64 {
    let mapped: Vec<f64> = values.iter().map(f).collect();
    mean(&mapped)
}

/// Pearson correlation of two equal-length slices.
/// Returns `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return None;
    }
    let ma = mean(a);
    let mb = mean(b);
    let da: Vec<f64> = a.iter().map(|v| v - ma).collect();
    let db: Vec<f64> = b.iter().map(|v| v - mb).collect();
    let cov = mean(&da.iter().zip(&db).map(|(x, y)| x * y).collect::<Vec<_>>());
    let va = mean(&da.iter().map(|x| x * x).collect::<Vec<_>>());
    let vb = mean(&db.iter().map(|x| x * x).collect::<Vec<_>>());
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Spearman rank correlation (ties resolved by average rank).
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&ranks(a), &ranks(b))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Derives an independent RNG substream from a base seed and a stream index.
/// SplitMix64 finalizer over the pair, so substreams do not collide for any
/// practical (seed, index) combination.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Hex SHA-256 of raw bytes, used for config hashes and input digests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a float matrix in row-major order, including its dimensions.
pub fn digest_matrix(rows: usize, cols: usize, data: impl Iterator<Item = f64>) -> String {
    let mut bytes = Vec::with_capacity(16 + rows * cols * 8);
    bytes.extend_from_slice(&(rows as u64).to_le_bytes());
    bytes.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    sha256_hex(&bytes)
}

/// Percentile of a sample via linear interpolation on the order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}
