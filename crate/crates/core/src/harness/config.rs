//! Experiment configuration. One master seed fans out to every component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::WorldParams;
use crate::error::{Error, Result};
use crate::lm::{ModelConfig, TrainConfig};
use crate::metrics::EvalOptions;
use crate::probe::{DemoParams, ProbeConfig};
use crate::rng::derive_seed;
use crate::unlearn::{Algorithm, UnlearnConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Second training phase of the two-phase experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneParams {
    pub train: TrainConfig,
    /// Fraction of the phase-one examples mixed back in during phase two.
    pub replay_fraction: f64,
    /// Number of entities injected in phase two.
    pub n_entities: usize,
}

impl Default for FinetuneParams {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 2e-3,
                epochs: 30,
                warmup: 0.0,
                ..TrainConfig::default()
            },
            replay_fraction: 0.25,
            n_entities: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Corpus file to use instead of generating one from `world`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<PathBuf>,
    pub world: WorldParams,
    pub demos: DemoParams,
    /// Adds a true and a corrupted verification demonstration for every corpus fact.
    pub verify_demos_on_corpus: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub finetune: FinetuneParams,
    pub probe: ProbeConfig,
    /// One entry per algorithm; `unlearn_config` falls back to the defaults.
    pub unlearn: Vec<UnlearnConfig>,
    pub eval: EvalOptions,
    /// Number of target entities sampled for the analyses.
    pub entity_sample: usize,
    /// Explicit target entities; overrides the sample when non-empty.
    pub entities: Vec<String>,
    pub ratios: Vec<f64>,
    pub sizes: Vec<usize>,
    pub step_interval: usize,
    pub max_steps: usize,
}

fn default_unlearn() -> Vec<UnlearnConfig> {
    Algorithm::ALL
        .iter()
        .map(|&algorithm| {
            let learning_rate = match algorithm {
                Algorithm::Po => 2e-3,
                Algorithm::Ga => 1.5e-3,
                _ => 1e-3,
            };
            UnlearnConfig {
                algorithm,
                learning_rate,
                ..UnlearnConfig::default()
            }
        })
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut c = Self {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            corpus_path: None,
            world: WorldParams::default(),
            demos: DemoParams {
                n_entities: 12,
                facts_per_entity: 10,
                ..DemoParams::default()
            },
            verify_demos_on_corpus: true,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            finetune: FinetuneParams::default(),
            probe: ProbeConfig::default(),
            unlearn: default_unlearn(),
            eval: EvalOptions {
                max_items_per_set: 30,
                ..EvalOptions::default()
            },
            entity_sample: 5,
            entities: Vec::new(),
            ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sizes: vec![5, 10, 15, 20],
            step_interval: 5,
            max_steps: 25,
        };
        c.reseed(1);
        c
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let Some(p) = &cfg.corpus_path {
            if p.is_relative() {
                cfg.corpus_path = Some(path.parent().unwrap_or(Path::new(".")).join(p));
            }
        }
        cfg.reseed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets the master seed and derives every component seed from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.world.seed = derive_seed(seed, "world", 0) % 1_000_000;
        self.demos.seed = derive_seed(seed, "demos", 0);
        self.train.seed = derive_seed(seed, "train", 0);
        self.finetune.train.seed = derive_seed(seed, "finetune", 0);
        self.probe.seed = derive_seed(seed, "probe", 0);
        self.eval.seed = derive_seed(seed, "eval", 0);
        for u in &mut self.unlearn {
            u.seed = derive_seed(seed, "unlearn", 0);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.finetune.train.validate()?;
        self.probe.validate()?;
        for u in &self.unlearn {
            u.validate()?;
        }
        if let Some(p) = &self.corpus_path {
            if !p.exists() {
                return Err(Error::Config(format!("corpus file {} does not exist", p.display())));
            }
        }
        if self.step_interval == 0 {
            return Err(Error::Config("step_interval must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.finetune.replay_fraction) {
            return Err(Error::Config("replay_fraction must lie in [0, 1]".into()));
        }
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("replacement ratios must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn unlearn_config(&self, algorithm: Algorithm) -> UnlearnConfig {
        self.unlearn
            .iter()
            .find(|u| u.algorithm == algorithm)
            .cloned()
            .unwrap_or_else(|| UnlearnConfig {
                algorithm,
                seed: derive_seed(self.seed, "unlearn", 0),
                ..UnlearnConfig::default()
            })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
