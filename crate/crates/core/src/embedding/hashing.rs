use ndarray::Array2;

use super::{l2_normalize, EmbeddingMatrix};
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Mixed into the FNV offset so bucket assignments are specific to this encoder.
const HASH_SEED: u64 = 0x5a7e_7a60_0000_0001;

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// FNV-1a over the token bytes followed by a splitmix64 finalizer.
pub fn hash_token(token: &str) -> u64 {
    let mut h = FNV_OFFSET ^ HASH_SEED;
    for &b in token.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Signed feature hashing into `dim` buckets: bucket `hash % dim`, sign from
/// bit 63. Rows are L2-normalized; texts without tokens stay all-zero.
pub fn encode_hashing(texts: &[String], dim: usize) -> Result<EmbeddingMatrix> {
    if dim < 8 {
        return Err(Error::invalid(format!(
            "hashing encoder needs dim >= 8, got {dim}"
        )));
    }
    let mut rows = Array2::zeros((texts.len(), dim));
    for (text, mut row) in texts.iter().zip(rows.outer_iter_mut()) {
        let mut v = vec![0.0; dim];
        for tok in tokenize(text) {
            let h = hash_token(&tok);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % dim as u64) as usize] += sign;
        }
        l2_normalize(&mut v);
        row.assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(EmbeddingMatrix::new(rows, format!("hash-{dim}")))
}
