//! Tiny causal language model: scoring, greedy decoding, gradient steps, snapshots.

pub mod linalg;
pub mod model;
pub mod optim;
pub mod snapshot;
pub mod vocab;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use model::{argmax, Decoder, Forward, Layout, ModelConfig, ModelHandle, TensorSpec};
pub use optim::{apply_gradient_step, grad_norm, StepConfig};
pub use snapshot::{restore, snapshot};
pub use vocab::{TokenId, Vocab};

use crate::error::{Error, Result};
use crate::rng;

/// Prompt half of the fixed QA serialization `Q: {question}\nA: {answer}<eos>`.
pub fn qa_prompt(question: &str) -> String {
    format!("Q: {question}\nA:")
}

/// A prompt/completion pair; loss is taken on the completion and the trailing `<eos>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub prompt: String,
    pub completion: String,
}

impl Example {
    pub fn new(prompt: impl Into<String>, completion: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            completion: completion.into(),
        }
    }

    pub fn qa(question: &str, answer: &str) -> Self {
        Self::new(qa_prompt(question), answer)
    }

    pub fn encode(&self, vocab: &Vocab) -> Encoded {
        let mut ids = vocab.encode(&self.prompt);
        let prompt_len = ids.len();
        ids.extend(vocab.encode(&self.completion));
        ids.push(vocab.eos());
        Encoded { ids, prompt_len }
    }
}

impl<T: crate::corpus::AsQa> From<&T> for Example {
    fn from(item: &T) -> Self {
        Example::qa(item.question(), item.answer())
    }
}

/// Token ids of a prompt followed by its completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<TokenId>,
    pub prompt_len: usize,
}

impl Encoded {
    pub fn completion_len(&self) -> usize {
        self.ids.len() - self.prompt_len
    }
}

/// Teacher-forced pass over an encoded example with log-softmax rows for the completion.
pub struct TeacherForced {
    pub fw: Forward,
    /// `completion_len × vocab` log-probabilities.
    pub log_probs: Vec<f64>,
    pub targets: Vec<TokenId>,
    vocab_size: usize,
}

impl TeacherForced {
    pub fn token_logprobs(&self) -> Vec<f64> {
        let v = self.vocab_size;
        self.targets
            .iter()
            .enumerate()
            .map(|(r, &y)| self.log_probs[r * v + y as usize])
            .collect()
    }

    pub fn sum_logprob(&self) -> f64 {
        self.token_logprobs().iter().sum()
    }

    /// Mean token cross-entropy over the completion.
    pub fn mean_nll(&self) -> f64 {
        -self.sum_logprob() / self.targets.len() as f64
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    /// Adds `coef · ∂(Σ log p(target))/∂logits` to `dlogits`.
    pub fn add_logprob_grad(&self, coef: f64, dlogits: &mut [f64]) {
        let v = self.vocab_size;
        for (r, &y) in self.targets.iter().enumerate() {
            let row = &self.log_probs[r * v..(r + 1) * v];
            let out = &mut dlogits[r * v..(r + 1) * v];
            for (o, lp) in out.iter_mut().zip(row) {
                *o -= coef * lp.exp();
            }
            out[y as usize] += coef;
        }
    }

    /// Σ over completion positions of KL(reference ‖ self).
    pub fn kl_from(&self, reference_log_probs: &[f64]) -> f64 {
        self.log_probs
            .iter()
            .zip(reference_log_probs)
            .map(|(lq, lp)| if lp.is_finite() { lp.exp() * (lp - lq) } else { 0.0 })
            .sum()
    }

    /// Adds `coef · ∂ kl_from(reference)/∂logits`.
    pub fn add_kl_grad(&self, reference_log_probs: &[f64], coef: f64, dlogits: &mut [f64]) {
        for ((o, lq), lp) in dlogits.iter_mut().zip(&self.log_probs).zip(reference_log_probs) {
            *o += coef * (lq.exp() - lp.exp());
        }
    }
}

impl ModelHandle {
    pub fn teacher_forced(&self, enc: &Encoded) -> Result<TeacherForced> {
        if enc.prompt_len == 0 {
            return Err(Error::InvalidArgument(
                "teacher forcing needs a non-empty prompt".into(),
            ));
        }
        if enc.completion_len() == 0 {
            return Err(Error::InvalidArgument(
                "teacher forcing needs a non-empty completion".into(),
            ));
        }
        let input = &enc.ids[..enc.ids.len() - 1];
        let fw = self.forward(input, enc.prompt_len - 1)?;
        let v = self.vocab_size();
        let mut log_probs = fw.logits.clone();
        for row in log_probs.chunks_mut(v) {
            linalg::log_softmax(row);
        }
        Ok(TeacherForced {
            fw,
            log_probs,
            targets: enc.ids[enc.prompt_len..].to_vec(),
            vocab_size: v,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredContinuation {
    pub prompt_tokens: Vec<TokenId>,
    pub continuation_tokens: Vec<TokenId>,
    pub per_token_logprob: Vec<f64>,
    pub total_logprob: f64,
    /// Set when the continuation is empty; total is 0 by convention.
    pub degenerate: bool,
}

/// Teacher-forced log-probabilities of `continuation` given `prompt` (no `<eos>`).
pub fn score(model: &ModelHandle, prompt: &str, continuation: &str) -> Result<ScoredContinuation> {
    let prompt_tokens = model.vocab.encode(prompt);
    let continuation_tokens = model.vocab.encode(continuation);
    if continuation_tokens.is_empty() {
        return Ok(ScoredContinuation {
            prompt_tokens,
            continuation_tokens,
            per_token_logprob: Vec::new(),
            total_logprob: 0.0,
            degenerate: true,
        });
    }
    if prompt_tokens.is_empty() {
        return Err(Error::InvalidArgument("score needs a non-empty prompt".into()));
    }
    let mut ids = prompt_tokens.clone();
    ids.extend(&continuation_tokens);
    model.check_len(ids.len() - 1)?;
    let fw = model.forward(&ids[..ids.len() - 1], prompt_tokens.len() - 1)?;
    let v = model.vocab_size();
    let per_token_logprob: Vec<f64> = fw
        .logits
        .chunks(v)
        .zip(&continuation_tokens)
        .map(|(row, &y)| {
            let mut r = row.to_vec();
            linalg::log_softmax(&mut r);
            r[y as usize].min(0.0)
        })
        .collect();
    let total_logprob = per_token_logprob.iter().sum();
    Ok(ScoredContinuation {
        prompt_tokens,
        continuation_tokens,
        per_token_logprob,
        total_logprob,
        degenerate: false,
    })
}

/// Argmax decoding until `<eos>`, `max_tokens` or the end of the context.
pub fn greedy_decode_ids(model: &ModelHandle, prompt: &str, max_tokens: usize) -> Result<Vec<TokenId>> {
    if max_tokens == 0 {
        return Err(Error::InvalidArgument("max_tokens must be at least 1".into()));
    }
    let prompt_ids = model.vocab.encode(prompt);
    if prompt_ids.is_empty() {
        return Err(Error::InvalidArgument(
            "greedy decoding needs a non-empty prompt".into(),
        ));
    }
    model.check_len(prompt_ids.len())?;
    let mut dec = model.decoder();
    let mut logits = Vec::new();
    for &id in &prompt_ids {
        logits = dec.step(id)?;
    }
    let mut out = Vec::new();
    loop {
        let next = argmax(&logits) as TokenId;
        if next == model.vocab.eos() {
            break;
        }
        out.push(next);
        if out.len() >= max_tokens || dec.position() >= model.config.context_length {
            break;
        }
        logits = dec.step(next)?;
    }
    Ok(out)
}

pub fn greedy_decode(model: &ModelHandle, prompt: &str, max_tokens: usize) -> Result<String> {
    Ok(model.vocab.decode(&greedy_decode_ids(model, prompt, max_tokens)?))
}

/// The read-only capabilities the probe and the metrics need from a model.
pub trait LanguageModel {
    fn score(&self, prompt: &str, continuation: &str) -> Result<ScoredContinuation>;
    fn greedy(&self, prompt: &str, max_tokens: usize) -> Result<String>;
}

impl LanguageModel for ModelHandle {
    fn score(&self, prompt: &str, continuation: &str) -> Result<ScoredContinuation> {
        score(self, prompt, continuation)
    }

    fn greedy(&self, prompt: &str, max_tokens: usize) -> Result<String> {
        greedy_decode(self, prompt, max_tokens)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of the first epoch spent in linear warmup.
    pub warmup: f64,
    pub seed: u64,
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            weight_decay: 0.01,
            batch_size: 8,
            epochs: 40,
            warmup: 1.0,
            seed: 0,
            max_grad_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return Err(Error::Config("warmup must be a fraction in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn step_config(&self, steps_per_epoch: usize) -> StepConfig {
        StepConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            warmup_steps: (self.warmup * steps_per_epoch as f64).ceil() as u64,
            max_grad_norm: self.max_grad_norm,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

/// Mean answer-token cross-entropy of a batch and its gradient.
pub fn batch_nll_grad(model: &ModelHandle, batch: &[&Encoded], grads: &mut [f64]) -> Result<f64> {
    let v = model.vocab_size();
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for enc in batch {
        let tf = model.teacher_forced(enc)?;
        total += tf.mean_nll() * scale;
        let mut dlogits = vec![0.0; tf.rows() * v];
        tf.add_logprob_grad(-scale / tf.rows() as f64, &mut dlogits);
        model.backward(&tf.fw, &dlogits, grads);
    }
    Ok(total)
}

pub fn train(model: &mut ModelHandle, dataset: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(model, dataset, cfg, |_, _| {})
}

/// Trains with answer-only cross-entropy; `on_epoch(epoch, mean_loss)` runs after each epoch.
pub fn train_with(
    model: &mut ModelHandle,
    dataset: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    let encoded: Vec<Encoded> = dataset.iter().map(|e| e.encode(&model.vocab)).collect();
    for e in &encoded {
        model.check_len(e.ids.len() - 1)?;
    }
    let steps_per_epoch = encoded.len().div_ceil(cfg.batch_size);
    let step_cfg = cfg.step_config(steps_per_epoch);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, "train_shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Encoded> = chunk.iter().map(|&i| &encoded[i]).collect();
            let mut grads = model.zero_grads();
            let loss = batch_nll_grad(model, &batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: model.step_counter,
                    loss,
                });
            }
            epoch_loss += loss * batch.len() as f64;
            apply_gradient_step(model, &grads, &step_cfg, "train")?;
            report.steps += 1;
        }
        let mean = epoch_loss / encoded.len() as f64;
        on_epoch(epoch, mean);
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_vocab() -> Vocab {
        Vocab::build([
            "Q: Where was Ivo Marr born?\nA: Ivo Marr was born in Avaria.",
            "Calderon Dunmere red blue green",
        ])
    }

    fn toy_cfg() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            context_length: 24,
        }
    }

    #[test]
    fn uniform_model_scores_minus_log_v() {
        let vocab = toy_vocab();
        let v = vocab.len() as f64;
        let m = ModelHandle::uniform(vocab, toy_cfg()).unwrap();
        let s = score(&m, "Q: Where", "Avaria").unwrap();
        assert!((s.total_logprob + v.ln()).abs() < 1e-12);
        let s = score(&m, "Q: Where was", "Ivo Marr was").unwrap();
        assert!(s.per_token_logprob.iter().all(|&l| (l + v.ln()).abs() < 1e-12));
    }

    #[test]
    fn untrained_model_is_near_uniform() {
        let vocab = toy_vocab();
        let v = vocab.len() as f64;
        let m = ModelHandle::init(vocab, toy_cfg(), 5).unwrap();
        let s = score(
            &m,
            &qa_prompt("Where was Ivo Marr born?"),
            "Ivo Marr was born in Avaria.",
        )
        .unwrap();
        for l in &s.per_token_logprob {
            assert!((l + v.ln()).abs() < 0.1, "{l} vs {}", -v.ln());
        }
    }

    #[test]
    fn score_sums_and_bounds() {
        let m = ModelHandle::init_with_std(toy_vocab(), toy_cfg(), 2, 0.5).unwrap();
        let s = score(&m, "Q: Where was", "Ivo Marr was born in Avaria.").unwrap();
        let sum: f64 = s.per_token_logprob.iter().sum();
        assert!((sum - s.total_logprob).abs() < 1e-9);
        assert!(s.per_token_logprob.iter().all(|&l| l <= 0.0));
        let empty = score(&m, "Q:", "").unwrap();
        assert!(empty.degenerate);
        assert_eq!(empty.total_logprob, 0.0);
    }

    #[test]
    fn distributions_are_normalized() {
        let m = ModelHandle::init_with_std(toy_vocab(), toy_cfg(), 4, 0.8).unwrap();
        let enc = Example::qa("Where was Ivo Marr born?", "Ivo Marr was born in Avaria.").encode(&m.vocab);
        let tf = m.teacher_forced(&enc).unwrap();
        for row in tf.log_probs.chunks(m.vocab_size()) {
            let s: f64 = row.iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn memorizes_a_single_pair() {
        let vocab = toy_vocab();
        let mut m = ModelHandle::init(vocab, toy_cfg(), 0).unwrap();
        let data = vec![Example::qa("Where was Ivo Marr born?", "Ivo Marr was born in Avaria.")];
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 60,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let report = train(&mut m, &data, &cfg).unwrap();
        assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
        let out = greedy_decode(&m, &qa_prompt("Where was Ivo Marr born?"), 16).unwrap();
        assert_eq!(out, "Ivo Marr was born in Avaria.");
        assert_eq!(
            out,
            greedy_decode(&m, &qa_prompt("Where was Ivo Marr born?"), 16).unwrap()
        );
    }

    #[test]
    fn zero_epochs_is_identity() {
        let mut m = ModelHandle::init(toy_vocab(), toy_cfg(), 0).unwrap();
        let before = m.checksum();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        train(&mut m, &[Example::qa("Where was Ivo Marr born?", "Avaria.")], &cfg).unwrap();
        assert_eq!(before, m.checksum());
    }

    #[test]
    fn decode_respects_max_tokens() {
        let m = ModelHandle::init_with_std(toy_vocab(), toy_cfg(), 9, 1.0).unwrap();
        for k in 1..5 {
            let ids = greedy_decode_ids(&m, "Q: Where", k).unwrap();
            assert!(ids.len() <= k);
        }
        assert!(greedy_decode(&m, "Q:", 0).is_err());
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut m = ModelHandle::init(toy_vocab(), toy_cfg(), 0).unwrap();
        assert!(train(&mut m, &[], &TrainConfig::default()).is_err());
    }
}
