//! Text embedding interface and the default feature-hashing embedder.

use crate::error::Result;
use crate::text::index_tokens;

/// Dimension of [`HashingEmbedder::default`].
pub const DEFAULT_DIM: usize = 256;

/// Maps text to a fixed-dimension vector. Equal text must give equal vectors.
///
/// An all-zero vector marks text that cannot be embedded.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>>;
    /// Identifier persisted in the index manifest.
    fn name(&self) -> String;
}

/// Signed feature hashing over case-folded alphanumeric tokens, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

/// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// MurmurHash3 finalizer; spreads FNV's weak high bits before bucketing.
fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

fn token_hash(token: &str) -> u64 {
    fmix64(fnv1a(token.as_bytes()))
}

fn hashed_counts(tokens: &[String], dim: usize, signed: bool) -> Vec<f64> {
    let mut acc = vec![0.0f64; dim];
    for token in tokens {
        let h = token_hash(token);
        let bucket = (h % dim as u64) as usize;
        let sign = if signed && (h >> 63) == 1 { -1.0 } else { 1.0 };
        acc[bucket] += sign;
    }
    acc
}

fn normalized(acc: &[f64]) -> Option<Vec<f32>> {
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0).then(|| acc.iter().map(|x| (x / norm) as f32).collect())
}

impl HashingEmbedder {
    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let tokens = index_tokens(text);
        if tokens.is_empty() {
            return vec![0.0; self.dim];
        }
        // Opposite-signed collisions can cancel a non-empty token set to zero;
        // unsigned counts keep such text embeddable.
        normalized(&hashed_counts(&tokens, self.dim, true))
            .or_else(|| normalized(&hashed_counts(&tokens, self.dim, false)))
            .expect("non-empty token set has a non-zero unsigned histogram")
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        Ok(self.embed_text(text))
    }

    fn name(&self) -> String {
        format!("hashing-{}", self.dim)
    }
}

/// Embeds `text` with the default 256-dimensional hashing embedder.
pub fn embed_default(text: &str) -> Vec<f32> {
    HashingEmbedder::default().embed_text(text)
}

pub fn is_unembeddable(vector: &[f32]) -> bool {
    vector.iter().all(|&x| x == 0.0)
}

pub fn l2_norm(vector: &[f32]) -> f64 {
    vector.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Cosine similarity in `f64`; zero when either side is the zero vector.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let norms = l2_norm(a) * l2_norm(b);
    if norms == 0.0 {
        0.0
    } else {
        dot / norms
    }
}

/// Rescales to unit length; zero vectors are returned unchanged.
pub fn unit(vector: Vec<f32>) -> Vec<f32> {
    let norm = l2_norm(&vector);
    if norm == 0.0 || (norm - 1.0).abs() < 1e-7 {
        vector
    } else {
        vector.into_iter().map(|x| (f64::from(x) / norm) as f32).collect()
    }
}
