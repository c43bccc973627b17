//! Unlearning objectives, the run loop with periodic evaluation, and first-peak selection.

pub mod losses;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use losses::{
    loss_and_grad, loss_ga, loss_gd, loss_kl, loss_npo_gd, loss_po, objective, refusal_for, Algorithm, LossBreakdown,
    LossInputs,
};

use crate::corpus::QaItem;
use crate::error::{Error, Result};
use crate::lm::{apply_gradient_step, ModelHandle, StepConfig};
use crate::metrics::MetricReport;
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;

pub fn default_refusals() -> Vec<String> {
    [
        "I don't know.",
        "I have no information about that.",
        "I am not sure.",
        "I cannot answer that.",
        "That is unknown to me.",
    ]
    .map(String::from)
    .to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnlearnConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of the first epoch spent in linear warmup.
    pub warmup: f64,
    pub eval_every_steps: usize,
    /// Stops after this many steps when set, regardless of `epochs`.
    pub max_steps: Option<usize>,
    pub beta: f64,
    pub refusal_answers: Vec<String>,
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ga,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            batch_size: 4,
            epochs: 5,
            warmup: 0.0,
            eval_every_steps: 5,
            max_steps: None,
            beta: 0.1,
            refusal_answers: default_refusals(),
            max_grad_norm: Some(1.0),
            seed: 0,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config("beta must be positive".into()));
        }
        if self.eval_every_steps == 0 {
            return Err(Error::Config("eval_every_steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be non-negative".into()));
        }
        if self.algorithm == Algorithm::Po && self.refusal_answers.is_empty() {
            return Err(Error::Config("refusal_answers must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    pub metrics: MetricReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_ref: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub step: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: UnlearnConfig,
    pub checkpoints: Vec<Checkpoint>,
    pub selected_checkpoint: usize,
    pub loss_curve: Vec<LossPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<Abort>,
}

impl RunRecord {
    pub fn selected(&self) -> &Checkpoint {
        &self.checkpoints[self.selected_checkpoint]
    }

    /// Loss curve as JSON lines.
    pub fn loss_jsonl(&self) -> String {
        self.loss_curve
            .iter()
            .map(|p| serde_json::to_string(p).expect("plain data") + "\n")
            .collect()
    }
}

/// Evaluates a model state at a checkpoint and optionally persists it.
pub trait MetricEngine {
    fn evaluate(&mut self, model: &ModelHandle, step: u64) -> Result<(MetricReport, Option<String>)>;
}

impl<F> MetricEngine for F
where
    F: FnMut(&ModelHandle, u64) -> Result<(MetricReport, Option<String>)>,
{
    fn evaluate(&mut self, model: &ModelHandle, step: u64) -> Result<(MetricReport, Option<String>)> {
        self(model, step)
    }
}

/// Start of the first run of equal forget-quality values whose neighbours on both sides
/// are strictly lower, boundaries at −∞. A flat stretch followed by a rise is not a peak,
/// so a non-decreasing curve selects the start of its maximum. Checkpoints without
/// forget quality are skipped; with none populated the first checkpoint is returned.
pub fn select_first_peak(fq: &[Option<f64>]) -> usize {
    let pts: Vec<(usize, f64)> = fq.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
    let mut k = 0;
    while k < pts.len() {
        let mut end = k;
        while end + 1 < pts.len() && pts[end + 1].1 == pts[k].1 {
            end += 1;
        }
        let prev = if k == 0 { f64::NEG_INFINITY } else { pts[k - 1].1 };
        let next = pts.get(end + 1).map_or(f64::NEG_INFINITY, |p| p.1);
        if prev < pts[k].1 && pts[k].1 > next {
            return pts[k].0;
        }
        k = end + 1;
    }
    pts.first().map_or(0, |p| p.0)
}

/// Runs unlearning on `model` in place. The reference for KL/PO/NPO is a frozen copy of
/// the model at entry. Checkpoint 0 is the untouched model.
pub fn unlearn_run(
    model: &mut ModelHandle,
    forget: &[QaItem],
    retain: &[QaItem],
    cfg: &UnlearnConfig,
    engine: &mut dyn MetricEngine,
) -> Result<RunRecord> {
    cfg.validate()?;
    if forget.is_empty() {
        return Err(Error::InvalidArgument("forget set is empty".into()));
    }
    if cfg.algorithm.needs_retain() && retain.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} needs a non-empty retain set",
            cfg.algorithm
        )));
    }
    model.reset_optimizer();
    let reference = cfg.algorithm.needs_reference().then(|| model.clone());
    let steps_per_epoch = forget.len().div_ceil(cfg.batch_size);
    let total_steps = cfg
        .max_steps
        .unwrap_or(usize::MAX)
        .min(steps_per_epoch.saturating_mul(cfg.epochs));
    let step_cfg = StepConfig {
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        warmup_steps: (cfg.warmup * steps_per_epoch as f64).ceil() as u64,
        max_grad_norm: cfg.max_grad_norm,
    };

    let mut record = RunRecord {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        checkpoints: Vec::new(),
        selected_checkpoint: 0,
        loss_curve: Vec::new(),
        aborted: None,
    };
    let mut checkpoint = |model: &ModelHandle, step: u64, record: &mut RunRecord| -> Result<()> {
        let (metrics, snapshot_ref) = engine.evaluate(model, step)?;
        record.checkpoints.push(Checkpoint {
            step,
            metrics,
            snapshot_ref,
        });
        Ok(())
    };
    checkpoint(model, 0, &mut record)?;

    let mut retain_rng = rng::stream(cfg.seed, "retain_pairing", 0);
    let mut order: Vec<usize> = (0..forget.len()).collect();
    let mut step = 0usize;
    'outer: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, "unlearn_shuffle", epoch as u64));
        for chunk in order.chunks(cfg.batch_size) {
            if step >= total_steps {
                break 'outer;
            }
            let fb: Vec<QaItem> = chunk.iter().map(|&i| forget[i].clone()).collect();
            let rb: Vec<QaItem> = if cfg.algorithm.needs_retain() {
                (0..cfg.batch_size)
                    .map(|_| retain[retain_rng.random_range(0..retain.len())].clone())
                    .collect()
            } else {
                Vec::new()
            };
            let inp = LossInputs {
                algorithm: cfg.algorithm,
                reference: reference.as_ref(),
                forget: &fb,
                retain: &rb,
                beta: cfg.beta,
                refusal_answers: &cfg.refusal_answers,
                seed: cfg.seed,
            };
            let (loss, grads) = loss_and_grad(model, &inp)?;
            record.loss_curve.push(LossPoint {
                step: step as u64,
                loss,
            });
            if !loss.is_finite() {
                record.aborted = Some(Abort {
                    step: step as u64,
                    reason: format!("non-finite loss {}", loss.total),
                });
                break 'outer;
            }
            if let Err(e) = apply_gradient_step(model, &grads, &step_cfg, cfg.algorithm.as_str()) {
                record.aborted = Some(Abort {
                    step: step as u64,
                    reason: e.to_string(),
                });
                break 'outer;
            }
            step += 1;
            if step % cfg.eval_every_steps == 0 {
                checkpoint(model, step as u64, &mut record)?;
            }
        }
    }
    let last = record.checkpoints.last().map_or(0, |c| c.step);
    if record.aborted.is_none() && step as u64 != last {
        checkpoint(model, step as u64, &mut record)?;
    }
    let fq: Vec<Option<f64>> = record.checkpoints.iter().map(|c| c.metrics.forget_quality).collect();
    record.selected_checkpoint = select_first_peak(&fq);
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|x| Some(*x)).collect()
    }

    #[test]
    fn first_peak_examples() {
        assert_eq!(select_first_peak(&s(&[0.1, 0.4, 0.2, 0.5])), 1);
        assert_eq!(select_first_peak(&s(&[0.1, 0.2, 0.3])), 2);
        assert_eq!(select_first_peak(&s(&[0.3, 0.3, 0.3])), 0);
        assert_eq!(select_first_peak(&s(&[0.5])), 0);
        assert_eq!(select_first_peak(&s(&[0.2, 0.2, 0.3, 0.9, 0.9])), 3);
        assert_eq!(select_first_peak(&s(&[0.2, 0.2, 0.1, 0.9])), 0);
        assert_eq!(select_first_peak(&s(&[0.1, 0.4, 0.4, 0.2, 0.5])), 1);
        assert_eq!(select_first_peak(&[None, Some(0.1), Some(0.3), None, Some(0.2)]), 2);
        assert_eq!(select_first_peak(&[]), 0);
    }

    #[test]
    fn config_validation() {
        assert!(UnlearnConfig::default().validate().is_ok());
        assert!(UnlearnConfig {
            beta: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(UnlearnConfig {
            eval_every_steps: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let po = UnlearnConfig {
            algorithm: Algorithm::Po,
            refusal_answers: vec![],
            ..Default::default()
        };
        assert!(po.validate().is_err());
        assert!(default_refusals().iter().any(|r| r == "I don't know."));
    }
}
