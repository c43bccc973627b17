//! The world an experiment runs in: corpus, demonstrations, vocabulary, and the models
//! trained on it, with an optional on-disk model cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::data::{build_vocab, training_set, EntityFilter};
use crate::corpus::{generate_world, split_sets, Corpus, KnowledgeSet, OriginPhase, QaItem, Role};
use crate::error::{Error, Result};
use crate::lm::{snapshot, train, Example, ModelHandle, TrainConfig, TrainReport, Vocab};
use crate::metrics::{evaluate, truth_ratios, EvalOptions, MetricReport};
use crate::probe::{probe_demonstrations, verification_demos};
use crate::rng;
use crate::unlearn::{MetricEngine, UnlearnConfig};

pub struct Lab {
    pub cfg: ExperimentConfig,
    pub corpus: Corpus,
    pub demos: Vec<Example>,
    pub vocab: Vocab,
    /// Trained models are stored here keyed by a hash of everything that shaped them.
    pub cache_dir: Option<PathBuf>,
}

impl Lab {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let corpus = match &cfg.corpus_path {
            Some(p) => Corpus::from_json(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => generate_world(&cfg.world)?,
        };
        Self::with_corpus(cfg, corpus)
    }

    pub fn with_corpus(cfg: ExperimentConfig, corpus: Corpus) -> Result<Self> {
        let demos = probe_demonstrations(&cfg.demos);
        let extra: Vec<String> = cfg
            .unlearn
            .iter()
            .flat_map(|u| u.refusal_answers.iter().cloned())
            .collect();
        let vocab = build_vocab(&corpus, &demos, &extra)?;
        Ok(Self {
            cfg,
            corpus,
            demos,
            vocab,
            cache_dir: None,
        })
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// Training examples for the entities selected by `filter`, plus utility facts and
    /// demonstrations when `with_support` is set.
    pub fn training_data(&self, filter: &EntityFilter, with_support: bool) -> Vec<Example> {
        let demos: Vec<Example> = if with_support {
            self.support_examples(filter)
        } else {
            Vec::new()
        };
        training_set(&self.corpus, filter, with_support, &demos)
    }

    fn support_examples(&self, filter: &EntityFilter) -> Vec<Example> {
        let mut demos = self.demos.clone();
        if self.cfg.verify_demos_on_corpus {
            let facts = self
                .corpus
                .entities
                .iter()
                .filter(|e| !filter.exclude.contains(&e.entity_id) && filter.phase.is_none_or(|p| p == e.origin_phase))
                .flat_map(|e| &e.facts);
            demos.extend(verification_demos(facts, self.cfg.demos.seed));
        }
        demos
    }

    /// Hash of the vocabulary, model shape, `parts` and the exact training examples.
    fn cache_key(&self, parts: &[&str], data: &[Example]) -> String {
        let mut h = Sha256::new();
        for t in self.vocab.tokens() {
            h.update(t);
            h.update([0]);
        }
        h.update(serde_json::to_string(&self.cfg.model).expect("plain data"));
        for p in parts {
            h.update(p);
            h.update([0]);
        }
        for e in data {
            h.update(&e.prompt);
            h.update([1]);
            h.update(&e.completion);
            h.update([0]);
        }
        hex::encode(h.finalize())[..16].to_string()
    }

    fn cached(&self, key: &str, build: impl FnOnce() -> Result<ModelHandle>) -> Result<ModelHandle> {
        let Some(dir) = &self.cache_dir else { return build() };
        let path = dir.join(format!("{key}.model"));
        if path.exists() {
            return ModelHandle::load(&path);
        }
        let model = build()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = dir.join(format!("{key}.tmp"));
        std::fs::write(&tmp, snapshot(&model)).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(model)
    }

    fn write_log(&self, key: &str, report: &TrainReport) -> Result<()> {
        if let Some(dir) = &self.cache_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(format!("{key}.train.json"));
            let doc =
                serde_json::json!({ "schema_version": 1, "epoch_losses": report.epoch_losses, "steps": report.steps });
            std::fs::write(&path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn train_from_scratch(&self, filter: &EntityFilter, tc: &TrainConfig) -> Result<ModelHandle> {
        let data = self.training_data(filter, true);
        let key = self.cache_key(&["scratch", &serde_json::to_string(tc)?], &data);
        self.cached(&key, || {
            let mut model = ModelHandle::init(self.vocab.clone(), self.cfg.model.clone(), tc.seed)?;
            let report = train(&mut model, &data, tc)?;
            self.write_log(&key, &report)?;
            model.reset_optimizer();
            Ok(model)
        })
    }

    /// Model trained on every entity of the corpus.
    pub fn target_model(&self) -> Result<ModelHandle> {
        self.train_from_scratch(&EntityFilter::default(), &self.cfg.train)
    }

    /// Model trained on the same data minus `exclude`; the forget-quality reference.
    pub fn reference_model(&self, exclude: &[String]) -> Result<ModelHandle> {
        let mut ex = exclude.to_vec();
        ex.sort();
        self.train_from_scratch(
            &EntityFilter {
                exclude: &ex,
                phase: None,
            },
            &self.cfg.train,
        )
    }

    /// Phase one trains on pretraining-phase entities; phase two fine-tunes on the
    /// fine-tuning-phase entities with a replayed share of the phase-one data.
    pub fn two_phase_model(&self) -> Result<ModelHandle> {
        let phase1_filter = EntityFilter {
            exclude: &[],
            phase: Some(OriginPhase::Pretrain),
        };
        let phase1 = self.train_from_scratch(&phase1_filter, &self.cfg.train)?;
        let ft = &self.cfg.finetune;
        let mut data = self.training_data(
            &EntityFilter {
                exclude: &[],
                phase: Some(OriginPhase::Finetune),
            },
            false,
        );
        let mut replay = self.training_data(&phase1_filter, true);
        replay.shuffle(&mut rng::stream(ft.train.seed, "replay", 0));
        replay.truncate((ft.replay_fraction * replay.len() as f64).round() as usize);
        data.extend(replay);
        let key = self.cache_key(
            &["finetune", &phase1.checksum(), &serde_json::to_string(&ft.train)?],
            &data,
        );
        self.cached(&key, || {
            let mut model = phase1.clone();
            model.reset_optimizer();
            let report = train(&mut model, &data, &ft.train)?;
            self.write_log(&key, &report)?;
            model.reset_optimizer();
            Ok(model)
        })
    }

    /// Target entities for the analyses: the explicit list, or a seeded sample.
    pub fn target_entities(&self) -> Vec<String> {
        if !self.cfg.entities.is_empty() {
            return self.cfg.entities.clone();
        }
        let ids: Vec<String> = self.corpus.entities.iter().map(|e| e.entity_id.clone()).collect();
        let mut r = rng::stream(self.cfg.seed, "entity_sample", 0);
        let mut picked: Vec<String> = ids
            .choose_multiple(&mut r, self.cfg.entity_sample.min(ids.len()))
            .cloned()
            .collect();
        picked.sort();
        picked
    }

    /// Evaluation sets around `entity`. With `same_phase`, the other-entities set only
    /// holds entities of the target's origin phase.
    pub fn eval_sets(&self, entity: &str, same_phase: bool) -> Result<BTreeMap<Role, KnowledgeSet>> {
        let mut sets = split_sets(&self.corpus, entity)?;
        if same_phase {
            let target = self.corpus.entity(entity)?;
            let mut items = Vec::new();
            for e in self
                .corpus
                .entities
                .iter()
                .filter(|e| e.entity_id != target.entity_id && e.origin_phase == target.origin_phase)
            {
                items.extend(self.corpus.entity_eval_items(e)?);
            }
            sets.insert(Role::OtherEntities, KnowledgeSet::new(Role::OtherEntities, items));
        }
        Ok(sets)
    }

    pub fn target_qa(&self, entity: &str) -> Result<Vec<QaItem>> {
        Ok(self.corpus.entity(entity)?.facts.clone())
    }

    pub fn retain_qa(&self) -> Vec<QaItem> {
        self.corpus.retain_facts.iter().map(|i| i.qa()).collect()
    }
}

/// Checkpoint evaluator used by unlearning runs.
pub struct SetEvaluator<'a> {
    pub sets: &'a BTreeMap<Role, KnowledgeSet>,
    /// Truth ratios of the reference model on the target set.
    pub reference: Option<Vec<f64>>,
    pub opts: EvalOptions,
    pub snapshot_dir: Option<PathBuf>,
}

impl<'a> SetEvaluator<'a> {
    pub fn new(
        sets: &'a BTreeMap<Role, KnowledgeSet>,
        reference: Option<&ModelHandle>,
        opts: EvalOptions,
    ) -> Result<Self> {
        let reference = match (reference, sets.get(&Role::Target)) {
            (Some(m), Some(t)) => Some(truth_ratios(m, &t.items)?),
            _ => None,
        };
        Ok(Self {
            sets,
            reference,
            opts,
            snapshot_dir: None,
        })
    }

    pub fn with_snapshots(mut self, dir: &Path) -> Self {
        self.snapshot_dir = Some(dir.to_path_buf());
        self
    }
}

impl MetricEngine for SetEvaluator<'_> {
    fn evaluate(&mut self, model: &ModelHandle, step: u64) -> Result<(MetricReport, Option<String>)> {
        let report = evaluate(model, self.sets, self.reference.as_deref(), &self.opts)?;
        let snap = match &self.snapshot_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let name = format!("step_{step:05}.model");
                let path = dir.join(&name);
                model.save(&path)?;
                Some(format!("snapshots/{name}"))
            }
            None => None,
        };
        Ok((report, snap))
    }
}

/// An unlearning run configuration with the step budget of an analysis applied.
pub fn budgeted(cfg: &UnlearnConfig, max_steps: usize, interval: usize) -> UnlearnConfig {
    UnlearnConfig {
        max_steps: Some(max_steps),
        eval_every_steps: interval,
        epochs: usize::MAX / 2,
        ..cfg.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_key_follows_the_training_data() {
        let lab = Lab::new(ExperimentConfig::default()).unwrap();
        let all = lab.training_data(&EntityFilter::default(), true);
        let ex = [lab.corpus.entities[0].entity_id.clone()];
        let without = lab.training_data(
            &EntityFilter {
                exclude: &ex,
                phase: None,
            },
            true,
        );
        assert_eq!(lab.cache_key(&["a"], &all), lab.cache_key(&["a"], &all.clone()));
        assert_ne!(lab.cache_key(&["a"], &all), lab.cache_key(&["a"], &without));
        assert_ne!(lab.cache_key(&["a"], &all), lab.cache_key(&["b"], &all));
        let mut edited = all.clone();
        edited[0].completion.push('!');
        assert_ne!(lab.cache_key(&["a"], &all), lab.cache_key(&["a"], &edited));
    }
}
