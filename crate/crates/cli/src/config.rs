//! Configuration: one JSON document, environment-variable overrides for
//! service endpoints, and a profile switch that tightens selection
//! thresholds for fine-tuning corpora.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use curator_core::client::env_keys;
use curator_core::filters::MotionThresholds;
use curator_core::orchestrator::{NodeSpec, PipelineDef, ResourceVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input_dir: PathBuf,
    pub manifest: PathBuf,
    pub workdir: PathBuf,
    pub shard_out: PathBuf,
    pub index: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("input"),
            manifest: PathBuf::from("work/manifest.jsonl"),
            workdir: PathBuf::from("work"),
            shard_out: PathBuf::from("shards"),
            index: PathBuf::from("work/embeddings.index"),
        }
    }
}

impl Paths {
    pub fn clips_dir(&self) -> PathBuf {
        self.workdir.join("clips")
    }

    pub fn captions_file(&self) -> PathBuf {
        self.workdir.join("captions.jsonl")
    }

    pub fn clip_file(&self, clip_id: &str) -> PathBuf {
        self.clips_dir().join(format!("{clip_id}.y4m"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitterCfg {
    /// Histogram distance threshold for a cut.
    pub tau: f64,
    pub bins: usize,
    pub min_scene_len: u64,
    /// Frame tolerance for boundary evaluation.
    pub eval_tolerance: u64,
}

impl Default for SplitterCfg {
    fn default() -> Self {
        Self {
            tau: 0.3,
            bins: 16,
            min_scene_len: 15,
            eval_tolerance: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiltersCfg {
    pub percentile_fraction: f64,
    pub aesthetic_threshold: f64,
    pub motion: MotionThresholds,
    /// Consecutive frame pairs sampled per clip for flow estimation.
    pub flow_pairs: usize,
    pub flow_block: usize,
    pub flow_radius: i32,
    /// Optional text-overlay classifier weights (JSON).
    pub mlp_weights: Option<PathBuf>,
    /// Optional target category mix for resampling; requires
    /// `taxonomy_weights` to classify clips.
    pub category_targets: Option<BTreeMap<String, f64>>,
    pub taxonomy_weights: Option<PathBuf>,
    /// Category names for the taxonomy head outputs, index-aligned.
    pub taxonomy_labels: Option<Vec<String>>,
}

impl Default for FiltersCfg {
    fn default() -> Self {
        Self {
            percentile_fraction: 0.15,
            aesthetic_threshold: 3.5,
            motion: MotionThresholds::default(),
            flow_pairs: 4,
            flow_block: 16,
            flow_radius: 8,
            mlp_weights: None,
            category_targets: None,
            taxonomy_weights: None,
            taxonomy_labels: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateCfg {
    pub window: u64,
    pub min_final_window: u64,
    pub prompt: String,
    pub max_inflight: usize,
    pub retries: u32,
}

impl Default for AnnotateCfg {
    fn default() -> Self {
        Self {
            window: curator_core::annotate::DEFAULT_WINDOW,
            min_final_window: curator_core::annotate::DEFAULT_MIN_FINAL_WINDOW,
            prompt: curator_core::annotate::DEFAULT_CAPTION_PROMPT.to_string(),
            max_inflight: 4,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupCfg {
    pub eps: f64,
    pub k: usize,
    pub block: usize,
    pub embedding_dim: usize,
    pub max_iters: u32,
    pub seed: u64,
    pub n_probe: usize,
}

impl Default for DedupCfg {
    fn default() -> Self {
        Self {
            eps: curator_core::dedup::DEFAULT_EPS,
            k: 64,
            block: curator_core::dedup::DEFAULT_BLOCK,
            embedding_dim: 512,
            max_iters: 25,
            seed: 0,
            n_probe: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShardCfg {
    pub max_shard_bytes: u64,
}

impl Default for ShardCfg {
    fn default() -> Self {
        Self {
            max_shard_bytes: 256 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranscoderCfg {
    /// External transcoder command template; when set, split also re-encodes
    /// clip files through it (one batched invocation per source).
    pub template: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub caption: Option<String>,
    pub embed: Option<String>,
    pub quality: Option<String>,
    pub aesthetic: Option<String>,
}

impl Endpoints {
    fn apply_env(&mut self) {
        let read = |key: &str| std::env::var(key).ok().filter(|v| !v.is_empty());
        if let Some(v) = read(env_keys::CAPTION_ENDPOINT) {
            self.caption = Some(v);
        }
        if let Some(v) = read(env_keys::EMBED_ENDPOINT) {
            self.embed = Some(v);
        }
        if let Some(v) = read(env_keys::QUALITY_ENDPOINT) {
            self.quality = Some(v);
        }
        if let Some(v) = read(env_keys::AESTHETIC_ENDPOINT) {
            self.aesthetic = Some(v);
        }
    }
}

/// Stricter selection values applied under the finetune profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneCfg {
    pub percentile_fraction: f64,
    pub aesthetic_threshold: f64,
}

impl Default for FinetuneCfg {
    fn default() -> Self {
        Self {
            percentile_fraction: 0.5,
            aesthetic_threshold: 5.0,
        }
    }
}

fn default_nodes() -> Vec<NodeSpec> {
    vec![NodeSpec {
        node_id: "local".into(),
        capacity: ResourceVector::of(&[("cpu", 8.0)]),
    }]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub splitter: SplitterCfg,
    pub filters: FiltersCfg,
    pub annotate: AnnotateCfg,
    pub dedup: DedupCfg,
    pub shard: ShardCfg,
    pub transcoder: TranscoderCfg,
    pub endpoints: Endpoints,
    pub pipeline: Option<PipelineDef>,
    pub nodes: Vec<NodeSpec>,
    pub profile: Profile,
    pub finetune: FinetuneCfg,
    /// Per-item retry budget in the live pipeline.
    pub retry_budget: u32,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            splitter: SplitterCfg::default(),
            filters: FiltersCfg::default(),
            annotate: AnnotateCfg::default(),
            dedup: DedupCfg::default(),
            shard: ShardCfg::default(),
            transcoder: TranscoderCfg::default(),
            endpoints: Endpoints::default(),
            pipeline: None,
            nodes: default_nodes(),
            profile: Profile::Pretrain,
            finetune: FinetuneCfg::default(),
            retry_budget: 2,
        }
    }
}

impl Config {
    /// Loads the config file (defaults when absent), applies endpoint env
    /// overrides, then validates. Precedence: env > file > defaults.
    pub fn load(path: Option<&Path>, profile_flag: Option<Profile>) -> Result<Self> {
        let mut config: Config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Some(profile) = profile_flag {
            config.profile = profile;
        }
        config.endpoints.apply_env();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.splitter;
        if !(s.tau > 0.0 && s.tau <= 1.0) {
            bail!("splitter.tau must be in (0, 1], got {}", s.tau);
        }
        if s.bins < 2 {
            bail!("splitter.bins must be at least 2");
        }
        if s.min_scene_len < 1 {
            bail!("splitter.min_scene_len must be at least 1");
        }
        let f = &self.filters;
        if !(0.0..1.0).contains(&f.percentile_fraction) {
            bail!(
                "filters.percentile_fraction must be in [0, 1), got {}",
                f.percentile_fraction
            );
        }
        if !f.aesthetic_threshold.is_finite() {
            bail!("filters.aesthetic_threshold must be finite");
        }
        if f.flow_pairs == 0 || f.flow_block == 0 || f.flow_radius < 0 {
            bail!("filters.flow_* values out of range");
        }
        let d = &self.dedup;
        if !(d.eps > 0.0 && d.eps < 1.0) {
            bail!("dedup.eps must be in (0, 1), got {}", d.eps);
        }
        if d.k == 0 || d.block == 0 || d.embedding_dim == 0 || d.n_probe == 0 {
            bail!("dedup.{{k, block, embedding_dim, n_probe}} must be positive");
        }
        if self.shard.max_shard_bytes < 4096 {
            bail!("shard.max_shard_bytes unreasonably small");
        }
        // The finetune profile must be at least as strict as pretrain.
        if self.finetune.percentile_fraction < self.filters.percentile_fraction {
            bail!(
                "finetune.percentile_fraction ({}) is looser than filters.percentile_fraction ({})",
                self.finetune.percentile_fraction,
                self.filters.percentile_fraction
            );
        }
        if self.finetune.aesthetic_threshold < self.filters.aesthetic_threshold {
            bail!(
                "finetune.aesthetic_threshold ({}) is looser than filters.aesthetic_threshold ({})",
                self.finetune.aesthetic_threshold,
                self.filters.aesthetic_threshold
            );
        }
        if !(0.0..1.0).contains(&self.finetune.percentile_fraction) {
            bail!("finetune.percentile_fraction must be in [0, 1)");
        }
        if let Some(targets) = &self.filters.category_targets {
            let sum: f64 = targets.values().sum();
            if (sum - 1.0).abs() > 1e-6 {
                bail!("filters.category_targets must sum to 1, got {sum}");
            }
        }
        Ok(())
    }

    /// Percentile fraction under the active profile.
    pub fn effective_percentile_fraction(&self) -> f64 {
        match self.profile {
            Profile::Pretrain => self.filters.percentile_fraction,
            Profile::Finetune => self.finetune.percentile_fraction,
        }
    }

    /// Aesthetic threshold under the active profile.
    pub fn effective_aesthetic_threshold(&self) -> f64 {
        match self.profile {
            Profile::Pretrain => self.filters.aesthetic_threshold,
            Profile::Finetune => self.finetune.aesthetic_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn looser_finetune_profile_rejected() {
        let mut config = Config::default();
        config.finetune.aesthetic_threshold = 1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn profile_switches_thresholds() {
        let mut config = Config::default();
        assert_eq!(config.effective_aesthetic_threshold(), 3.5);
        assert_eq!(config.effective_percentile_fraction(), 0.15);
        config.profile = Profile::Finetune;
        assert_eq!(config.effective_aesthetic_threshold(), 5.0);
        assert_eq!(config.effective_percentile_fraction(), 0.5);
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = serde_json::from_str::<Config>(r#"{"no_such_section": {}}"#);
        assert!(err.is_err());
    }
}
