//! Embedding acquisition.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::client::{encode_frames, stable_hash64, ClientError, HttpJson};

use super::Embedding;

/// Embedding service: one vector per clip.
pub trait Embedder: Sync {
    fn embed(&self, clip_id: &str, frames: &[Vec<u8>]) -> Result<Vec<f32>, ClientError>;
    fn dim(&self) -> usize;
}

/// Deterministic pseudo-embedding for a clip id: a seeded-hash expansion to
/// a unit vector, stable across runs and platforms.
pub fn stub_embedding(clip_id: &str, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(clip_id) ^ seed);
    let mut v: Vec<f32> = (0..dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x as f32
        })
        .collect();
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    } else {
        v[0] = 1.0;
    }
    v
}

/// Stub embedder built on [`stub_embedding`].
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Embedder for StubEmbedder {
    fn embed(&self, clip_id: &str, _frames: &[Vec<u8>]) -> Result<Vec<f32>, ClientError> {
        Ok(stub_embedding(clip_id, self.dim, self.seed))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Serialize)]
struct EmbedWire<'a> {
    clip_id: &'a str,
    frames: Vec<String>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f32>,
}

/// Embedder over HTTP: POST `{clip_id, frames}`, response
/// `{"vector": [f32; D]}`.
pub struct HttpEmbedder {
    http: HttpJson,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, dim: usize, timeout: Duration) -> Result<Self, ClientError> {
        Ok(Self {
            http: HttpJson::new(endpoint, timeout)?,
            dim,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, clip_id: &str, frames: &[Vec<u8>]) -> Result<Vec<f32>, ClientError> {
        let response: EmbedResponse = self.http.post(&EmbedWire {
            clip_id,
            frames: encode_frames(frames),
        })?;
        if response.vector.len() != self.dim {
            return Err(ClientError::Malformed(format!(
                "embedding dim {} != configured {}",
                response.vector.len(),
                self.dim
            )));
        }
        Ok(response.vector)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub clip_id: String,
    pub result: Result<Embedding, String>,
}

/// Embeds every clip, normalizing vectors locally. Per-item failures are
/// recorded, not thrown.
pub fn embed_corpus<F>(
    clip_ids: &[String],
    client: &dyn Embedder,
    frames_for: F,
) -> Vec<EmbedOutcome>
where
    F: Fn(&str) -> Result<Vec<Vec<u8>>, ClientError>,
{
    clip_ids
        .iter()
        .map(|clip_id| {
            let result = frames_for(clip_id)
                .and_then(|frames| client.embed(clip_id, &frames))
                .and_then(|mut vector| {
                    let norm = vector
                        .iter()
                        .map(|&x| f64::from(x) * f64::from(x))
                        .sum::<f64>()
                        .sqrt();
                    if norm <= 0.0 || !norm.is_finite() {
                        return Err(ClientError::Malformed("zero-norm embedding".into()));
                    }
                    for x in vector.iter_mut() {
                        *x = (f64::from(*x) / norm) as f32;
                    }
                    Ok(Embedding {
                        clip_id: clip_id.clone(),
                        vector,
                        normalized: true,
                    })
                })
                .map_err(|e| e.to_string());
            EmbedOutcome {
                clip_id: clip_id.clone(),
                result,
            }
        })
        .collect()
}
