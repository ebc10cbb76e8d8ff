//! Service client construction: deterministic stubs by default, HTTP when
//! an endpoint is configured (file or environment).

use std::time::Duration;

use anyhow::{Context, Result};

use curator_core::annotate::{Captioner, HttpCaptioner, StubCaptioner};
use curator_core::dedup::{Embedder, HttpEmbedder, StubEmbedder};
use curator_core::filters::{HttpScorer, Scorer, StubScorer};

use crate::config::Config;

const CLIENT_TIMEOUT: Duration = Duration::from_secs(30);

pub struct Services {
    pub quality: Box<dyn Scorer + Send + Sync>,
    pub aesthetic: Box<dyn Scorer + Send + Sync>,
    pub captioner: Box<dyn Captioner + Send + Sync>,
    pub embedder: Box<dyn Embedder + Send + Sync>,
}

impl Services {
    pub fn from_config(config: &Config) -> Result<Self> {
        let quality: Box<dyn Scorer + Send + Sync> = match &config.endpoints.quality {
            Some(endpoint) => Box::new(
                HttpScorer::new(endpoint, CLIENT_TIMEOUT)
                    .with_context(|| format!("quality scorer at {endpoint}"))?,
            ),
            None => Box::new(StubScorer::quality()),
        };
        let aesthetic: Box<dyn Scorer + Send + Sync> = match &config.endpoints.aesthetic {
            Some(endpoint) => Box::new(
                HttpScorer::new(endpoint, CLIENT_TIMEOUT)
                    .with_context(|| format!("aesthetic scorer at {endpoint}"))?,
            ),
            None => Box::new(StubScorer::aesthetic()),
        };
        let captioner: Box<dyn Captioner + Send + Sync> = match &config.endpoints.caption {
            Some(endpoint) => Box::new(
                HttpCaptioner::new(endpoint, CLIENT_TIMEOUT)
                    .with_context(|| format!("captioner at {endpoint}"))?,
            ),
            None => Box::new(StubCaptioner),
        };
        let embedder: Box<dyn Embedder + Send + Sync> = match &config.endpoints.embed {
            Some(endpoint) => Box::new(
                HttpEmbedder::new(endpoint, config.dedup.embedding_dim, CLIENT_TIMEOUT)
                    .with_context(|| format!("embedder at {endpoint}"))?,
            ),
            None => Box::new(StubEmbedder {
                dim: config.dedup.embedding_dim,
                seed: config.dedup.seed,
            }),
        };
        Ok(Self {
            quality,
            aesthetic,
            captioner,
            embedder,
        })
    }
}
