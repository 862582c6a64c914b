//! Text encoders. The canonical input to the toolkit is precomputed vectors;
//! encoders are only needed when new text (generated questions, injected
//! forum posts) has to be placed in the same space.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the default encoder endpoint.
pub const ENCODER_URL_ENV: &str = "COMPCOMP_ENCODER_URL";

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("nothing to encode")]
    EmptyInput,
    #[error("encoder transport failure: {0}")]
    Transport(String),
    #[error("encoder returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("encoder returned vectors of inconsistent dimension ({expected} vs {found})")]
    DimensionInconsistent { expected: usize, found: usize },
    #[error("encoder returned a non-finite component")]
    NonFinite,
    #[error("malformed encoder response: {0}")]
    Malformed(String),
}

pub trait TextEncoder {
    /// One vector per text, in input order, all of one dimension.
    fn encode(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EncodeError>;
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for the JSON encoder protocol: POST `{"texts": [...]}` and receive
/// `{"vectors": [[...], ...]}`. Large inputs go out in order, `batch_size`
/// texts per request.
#[derive(Debug, Clone)]
pub struct RemoteEncoder {
    endpoint: String,
    batch_size: usize,
    agent: ureq::Agent,
}

impl RemoteEncoder {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteEncoder {
            endpoint: endpoint.into(),
            batch_size: 32,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(120))
                .build(),
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(ENCODER_URL_ENV).ok().filter(|s| !s.is_empty()).map(Self::new)
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EncodeError> {
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(EncodeRequest { texts })
            .map_err(|e| EncodeError::Transport(e.to_string()))?;
        let body: EncodeResponse = response
            .into_json()
            .map_err(|e| EncodeError::Malformed(e.to_string()))?;
        Ok(body.vectors)
    }
}

impl TextEncoder for RemoteEncoder {
    fn encode(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EncodeError> {
        if texts.is_empty() {
            return Err(EncodeError::EmptyInput);
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let vectors = self.post(chunk)?;
            if vectors.len() != chunk.len() {
                return Err(EncodeError::CountMismatch {
                    expected: chunk.len(),
                    got: vectors.len(),
                });
            }
            out.extend(vectors);
        }
        check_vectors(&out)?;
        Ok(out)
    }
}

/// Calls the encoder service at `endpoint` once per batch of texts.
pub fn embed_remote(texts: &[String], endpoint: &str) -> Result<Vec<Vec<f64>>, EncodeError> {
    RemoteEncoder::new(endpoint).encode(texts)
}

fn check_vectors(vectors: &[Vec<f64>]) -> Result<(), EncodeError> {
    let Some(first) = vectors.first() else {
        return Ok(());
    };
    for v in vectors {
        if v.len() != first.len() {
            return Err(EncodeError::DimensionInconsistent {
                expected: first.len(),
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EncodeError::NonFinite);
        }
    }
    Ok(())
}

/// Offline bag-of-words encoder: unigrams and bigrams hashed (FNV-1a) into a
/// signed feature vector, then scaled to unit length.
#[derive(Debug, Clone, Copy)]
pub struct HashingEncoder {
    dim: usize,
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "hashing encoder needs a positive dimension");
        HashingEncoder { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let tokens = crate::eval::tokenize(text);
        let mut v = vec![0.0; self.dim];
        let mut add = |key: &str, weight: f64| {
            let h = fnv1a(key.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign * weight;
        };
        for t in &tokens {
            add(t, 1.0);
        }
        for pair in tokens.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl TextEncoder for HashingEncoder {
    fn encode(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EncodeError> {
        if texts.is_empty() {
            return Err(EncodeError::EmptyInput);
        }
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn hashing_is_deterministic_and_unit() {
        let enc = HashingEncoder::new(16);
        let a = enc.embed("Which professors graduated from MIT?");
        assert_eq!(a, enc.embed("which professors  graduated from mit"));
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(enc.embed("").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(HashingEncoder::new(4).encode(&[]), Err(EncodeError::EmptyInput)));
    }

    #[test]
    fn inconsistent_dims_detected() {
        let v = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(check_vectors(&v), Err(EncodeError::DimensionInconsistent { .. })));
    }
}
