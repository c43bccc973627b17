//! AdamW with decoupled weight decay and a linear warmup.

use serde::{Deserialize, Serialize};

use super::model::ModelHandle;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Per-step optimizer settings resolved from a training or unlearning config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Steps over which the learning rate ramps linearly from lr/warmup_steps to lr.
    pub warmup_steps: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl StepConfig {
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.learning_rate
        } else {
            self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64
        }
    }
}

pub fn grad_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// One AdamW update. `term` names the loss in error messages.
pub fn apply_gradient_step(model: &mut ModelHandle, grads: &[f64], cfg: &StepConfig, term: &str) -> Result<()> {
    if grads.len() != model.params.len() {
        return Err(Error::InvalidArgument(format!(
            "gradient length {} does not match {} parameters",
            grads.len(),
            model.params.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { term: term.to_string() });
    }
    let n = model.params.len();
    let state = model.optim.get_or_insert_with(|| AdamState {
        m: vec![0.0; n],
        v: vec![0.0; n],
        t: 0,
    });
    let clip = match cfg.max_grad_norm {
        Some(max) if max > 0.0 => {
            let norm = grad_norm(grads);
            if norm > max {
                max / norm
            } else {
                1.0
            }
        }
        _ => 1.0,
    };
    let lr = cfg.lr_at(model.step_counter);
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    for spec in &model.layout.tensors {
        let decay = if spec.decay { cfg.weight_decay } else { 0.0 };
        for i in spec.range() {
            let g = grads[i] * clip;
            state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
            state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
            let mhat = state.m[i] / bc1;
            let vhat = state.v[i] / bc2;
            let p = &mut model.params[i];
            *p -= lr * (mhat / (vhat.sqrt() + EPS) + decay * *p);
        }
    }
    model.step_counter += 1;
    Ok(())
}

impl ModelHandle {
    /// Drops optimizer moments, e.g. before starting a fresh unlearning run.
    pub fn reset_optimizer(&mut self) {
        self.optim = None;
        self.step_counter = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{ModelConfig, Vocab};

    fn model() -> ModelHandle {
        let v = Vocab::build(["x y z"]);
        let cfg = ModelConfig {
            d_model: 4,
            n_layers: 1,
            n_heads: 1,
            d_ff: 4,
            context_length: 4,
        };
        ModelHandle::init(v, cfg, 0).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut m = model();
        let before = m.params.clone();
        let grads = vec![0.5; m.n_params()];
        let cfg = StepConfig {
            learning_rate: 0.0,
            weight_decay: 0.01,
            warmup_steps: 0,
            max_grad_norm: None,
        };
        apply_gradient_step(&mut m, &grads, &cfg, "test").unwrap();
        assert_eq!(m.params, before);
        assert_eq!(m.step_counter, 1);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut m = model();
        let mut grads = vec![0.0; m.n_params()];
        grads[3] = f64::NAN;
        let cfg = StepConfig {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            warmup_steps: 0,
            max_grad_norm: None,
        };
        match apply_gradient_step(&mut m, &grads, &cfg, "forget_term") {
            Err(Error::NonFiniteGradient { term }) => assert_eq!(term, "forget_term"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn warmup_is_linear() {
        let cfg = StepConfig {
            learning_rate: 1.0,
            weight_decay: 0.0,
            warmup_steps: 4,
            max_grad_norm: None,
        };
        let lrs: Vec<f64> = (0..6).map(|s| cfg.lr_at(s)).collect();
        assert_eq!(lrs, vec![0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn identical_runs_identical_checksums() {
        let run = || {
            let mut m = model();
            let cfg = StepConfig {
                learning_rate: 1e-2,
                weight_decay: 0.01,
                warmup_steps: 2,
                max_grad_norm: Some(1.0),
            };
            for k in 0..3 {
                let g: Vec<f64> = (0..m.n_params()).map(|i| ((i + k) as f64).sin()).collect();
                apply_gradient_step(&mut m, &g, &cfg, "t").unwrap();
            }
            m.checksum()
        };
        assert_eq!(run(), run());
    }
}
