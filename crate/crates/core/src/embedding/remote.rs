use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{l2_normalize, EmbeddingMatrix, EncoderConfig};
use crate::error::{Error, Result};
use crate::http::JsonClient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingsRequest {
    pub model: String,
    pub input: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDatum {
    pub index: usize,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingsResponse {
    pub data: Vec<EmbeddingDatum>,
}

/// Checks one batch response: every input index exactly once, and a single
/// dimension matching `expected_dim` when one is already known.
fn validate(
    resp: &EmbeddingsResponse,
    batch_len: usize,
    expected_dim: Option<usize>,
) -> std::result::Result<(), String> {
    if resp.data.len() != batch_len {
        return Err(format!(
            "expected {batch_len} embeddings, got {}",
            resp.data.len()
        ));
    }
    let mut seen = vec![false; batch_len];
    for d in &resp.data {
        if d.index >= batch_len || std::mem::replace(&mut seen[d.index], true) {
            return Err(format!("invalid or repeated index {}", d.index));
        }
    }
    let dim = expected_dim.unwrap_or_else(|| resp.data.first().map_or(0, |d| d.embedding.len()));
    if dim == 0 {
        return Err("empty embedding".into());
    }
    if let Some(bad) = resp.data.iter().find(|d| d.embedding.len() != dim) {
        return Err(format!(
            "dimension mismatch: expected {dim}, got {}",
            bad.embedding.len()
        ));
    }
    Ok(())
}

/// Fetches embeddings from an OpenAI-compatible `/v1/embeddings` endpoint in
/// batches of `cfg.batch_size`, restoring input order from each datum's
/// `index` and L2-normalizing every row.
pub fn encode_remote(texts: &[String], cfg: &EncoderConfig) -> Result<EmbeddingMatrix> {
    if cfg.batch_size == 0 {
        return Err(Error::invalid("encoder batch_size must be positive"));
    }
    let client = JsonClient::new(
        &cfg.endpoint,
        Duration::from_secs(cfg.timeout_secs),
        cfg.api_key_env.as_deref(),
        cfg.retries,
        Duration::from_millis(cfg.backoff_ms),
    )?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
    let mut dim = None;
    for (batch, chunk) in texts.chunks(cfg.batch_size).enumerate() {
        let body = EmbeddingsRequest {
            model: cfg.model.clone(),
            input: chunk.to_vec(),
        };
        let resp: EmbeddingsResponse = client.post("/v1/embeddings", &body, batch, |r| {
            validate(r, chunk.len(), dim)
        })?;
        let mut data = resp.data;
        data.sort_by_key(|d| d.index);
        dim.get_or_insert(data[0].embedding.len());
        for d in data {
            let mut v = d.embedding;
            l2_normalize(&mut v);
            rows.push(v);
        }
    }
    let dim = dim.unwrap_or(0);
    EmbeddingMatrix::from_rows(&rows, dim, format!("remote:{}", cfg.model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn datum(index: usize, embedding: Vec<f64>) -> EmbeddingDatum {
        EmbeddingDatum { index, embedding }
    }

    #[test]
    fn validation_rules() {
        let ok = EmbeddingsResponse {
            data: vec![datum(1, vec![1.0, 0.0]), datum(0, vec![0.0, 1.0])],
        };
        assert!(validate(&ok, 2, None).is_ok());
        assert!(validate(&ok, 2, Some(3)).is_err());
        assert!(validate(&ok, 3, None).is_err());
        let repeated = EmbeddingsResponse {
            data: vec![datum(0, vec![1.0]), datum(0, vec![1.0])],
        };
        assert!(validate(&repeated, 2, None).is_err());
        let ragged = EmbeddingsResponse {
            data: vec![datum(0, vec![1.0]), datum(1, vec![1.0, 2.0])],
        };
        assert!(validate(&ragged, 2, None).is_err());
    }

    #[test]
    fn request_wire_shape() {
        let body = EmbeddingsRequest {
            model: "m".into(),
            input: vec!["a".into(), "b".into()],
        };
        assert_eq!(
            serde_json::to_value(&body).unwrap(),
            serde_json::json!({"model": "m", "input": ["a", "b"]})
        );
    }
}
