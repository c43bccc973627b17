//! The five unlearning objectives with their gradients.
//!
//! Each term is written as a function of teacher-forced log-probabilities, so its
//! gradient reduces to a `dlogits` buffer pushed through [`ModelHandle::backward`].

use serde::{Deserialize, Serialize};

use crate::corpus::QaItem;
use crate::error::{Error, Result};
use crate::lm::{Encoded, Example, ModelHandle};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "GA")]
    Ga,
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "PO")]
    Po,
    #[serde(rename = "NPO_GD")]
    NpoGd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Ga,
        Algorithm::Gd,
        Algorithm::Kl,
        Algorithm::Po,
        Algorithm::NpoGd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ga => "GA",
            Algorithm::Gd => "GD",
            Algorithm::Kl => "KL",
            Algorithm::Po => "PO",
            Algorithm::NpoGd => "NPO_GD",
        }
    }

    pub fn needs_retain(self) -> bool {
        self != Algorithm::Ga
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, Algorithm::Kl | Algorithm::Po | Algorithm::NpoGd)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("npo") && *a == Algorithm::NpoGd))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

/// `total = forget_term + retain_term + regularizer` for every algorithm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub forget_term: f64,
    pub retain_term: f64,
    pub regularizer: f64,
}

impl LossBreakdown {
    fn new(forget_term: f64, retain_term: f64, regularizer: f64) -> Self {
        Self {
            total: forget_term + retain_term + regularizer,
            forget_term,
            retain_term,
            regularizer,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Inputs shared by every objective.
pub struct LossInputs<'a> {
    pub algorithm: Algorithm,
    pub reference: Option<&'a ModelHandle>,
    pub forget: &'a [QaItem],
    pub retain: &'a [QaItem],
    pub beta: f64,
    pub refusal_answers: &'a [String],
    pub seed: u64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        x.exp() / (1.0 + x.exp())
    }
}

fn encode(model: &ModelHandle, items: &[QaItem]) -> Vec<Encoded> {
    items
        .iter()
        .map(|i| Example::qa(&i.question, &i.answer).encode(&model.vocab))
        .collect()
}

/// Refusal used as the preferred answer for a forget question; fixed per (seed, question).
pub fn refusal_for<'a>(refusals: &'a [String], seed: u64, question: &str) -> &'a str {
    let idx = rng::derive_seed(seed, question, 0) % refusals.len() as u64;
    &refusals[idx as usize]
}

/// Mean over items of answer-token cross-entropy; adds `coef·∇` into `grads`.
fn nll_term(model: &ModelHandle, items: &[Encoded], coef: f64, grads: Option<&mut [f64]>) -> Result<f64> {
    let n = items.len() as f64;
    let mut total = 0.0;
    let mut grads = grads;
    for enc in items {
        let tf = model.teacher_forced(enc)?;
        total += tf.mean_nll() / n;
        if let Some(g) = grads.as_deref_mut() {
            let mut dl = vec![0.0; tf.rows() * model.vocab_size()];
            tf.add_logprob_grad(-coef / (n * tf.rows() as f64), &mut dl);
            model.backward(&tf.fw, &dl, g);
        }
    }
    Ok(total)
}

/// Mean over items of Σ_positions KL(reference ‖ model) on the answer positions.
fn kl_term(model: &ModelHandle, reference: &ModelHandle, items: &[Encoded], grads: Option<&mut [f64]>) -> Result<f64> {
    let n = items.len() as f64;
    let mut total = 0.0;
    let mut grads = grads;
    for enc in items {
        let tf = model.teacher_forced(enc)?;
        let rf = reference.teacher_forced(enc)?;
        total += tf.kl_from(&rf.log_probs) / n;
        if let Some(g) = grads.as_deref_mut() {
            let mut dl = vec![0.0; tf.rows() * model.vocab_size()];
            tf.add_kl_grad(&rf.log_probs, 1.0 / n, &mut dl);
            model.backward(&tf.fw, &dl, g);
        }
    }
    Ok(total)
}

/// Sequence log-probability under `model`, optionally adding `coef·∇` to `grads`.
fn seq_logprob(model: &ModelHandle, enc: &Encoded, coef: f64, grads: Option<&mut [f64]>) -> Result<f64> {
    let tf = model.teacher_forced(enc)?;
    if let Some(g) = grads {
        let mut dl = vec![0.0; tf.rows() * model.vocab_size()];
        tf.add_logprob_grad(coef, &mut dl);
        model.backward(&tf.fw, &dl, g);
    }
    Ok(tf.sum_logprob())
}

/// DPO with a refusal as the preferred answer and the original answer dispreferred.
fn dpo_term(model: &ModelHandle, inp: &LossInputs, reference: &ModelHandle, grads: Option<&mut [f64]>) -> Result<f64> {
    if inp.refusal_answers.is_empty() {
        return Err(Error::InvalidArgument(
            "preference optimization needs refusal answers".into(),
        ));
    }
    let n = inp.forget.len() as f64;
    let mut total = 0.0;
    let mut grads = grads;
    for item in inp.forget {
        let refusal = refusal_for(inp.refusal_answers, inp.seed, &item.question);
        let win = Example::qa(&item.question, refusal).encode(&model.vocab);
        let lose = Example::qa(&item.question, &item.answer).encode(&model.vocab);
        let lw = seq_logprob(model, &win, 0.0, None)?;
        let ll = seq_logprob(model, &lose, 0.0, None)?;
        let rw = seq_logprob(reference, &win, 0.0, None)?;
        let rl = seq_logprob(reference, &lose, 0.0, None)?;
        let margin = inp.beta * ((lw - rw) - (ll - rl));
        total += softplus(-margin) / n;
        if let Some(g) = grads.as_deref_mut() {
            // d softplus(-m)/dm = -σ(-m); dm/dlw = β, dm/dll = -β.
            let c = sigmoid(-margin) * inp.beta / n;
            seq_logprob(model, &win, -c, Some(g))?;
            seq_logprob(model, &lose, c, Some(g))?;
        }
    }
    Ok(total)
}

/// NPO: (2/β)·mean softplus(β·(log π(a|q) − log π_ref(a|q))).
fn npo_term(
    model: &ModelHandle,
    items: &[Encoded],
    reference: &ModelHandle,
    beta: f64,
    grads: Option<&mut [f64]>,
) -> Result<f64> {
    let n = items.len() as f64;
    let mut total = 0.0;
    let mut grads = grads;
    for enc in items {
        let l = seq_logprob(model, enc, 0.0, None)?;
        let r = seq_logprob(reference, enc, 0.0, None)?;
        let d = l - r;
        total += 2.0 / beta * softplus(beta * d) / n;
        if let Some(g) = grads.as_deref_mut() {
            seq_logprob(model, enc, 2.0 * sigmoid(beta * d) / n, Some(g))?;
        }
    }
    Ok(total)
}

/// Evaluates the configured objective; when `grads` is given, accumulates ∂total/∂θ.
pub fn objective(model: &ModelHandle, inp: &LossInputs, grads: Option<&mut [f64]>) -> Result<LossBreakdown> {
    if inp.forget.is_empty() {
        return Err(Error::InvalidArgument("forget batch is empty".into()));
    }
    if inp.algorithm.needs_retain() && inp.retain.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} needs a non-empty retain batch",
            inp.algorithm
        )));
    }
    if !(inp.beta > 0.0) {
        return Err(Error::Config("beta must be positive".into()));
    }
    let reference = if inp.algorithm.needs_reference() {
        Some(
            inp.reference
                .ok_or_else(|| Error::InvalidArgument(format!("{} needs a reference model", inp.algorithm)))?,
        )
    } else {
        None
    };
    let forget = encode(model, inp.forget);
    let retain = encode(model, inp.retain);
    let mut grads = grads;
    let retain_term = |g: Option<&mut [f64]>| nll_term(model, &retain, 1.0, g);
    Ok(match inp.algorithm {
        Algorithm::Ga => LossBreakdown::new(-nll_term(model, &forget, -1.0, grads)?, 0.0, 0.0),
        Algorithm::Gd => {
            let f = -nll_term(model, &forget, -1.0, grads.as_deref_mut())?;
            LossBreakdown::new(f, retain_term(grads)?, 0.0)
        }
        Algorithm::Kl => {
            let f = -nll_term(model, &forget, -1.0, grads.as_deref_mut())?;
            let reg = kl_term(model, reference.expect("checked"), &retain, grads)?;
            LossBreakdown::new(f, 0.0, reg)
        }
        Algorithm::Po => {
            let f = dpo_term(model, inp, reference.expect("checked"), grads.as_deref_mut())?;
            LossBreakdown::new(f, retain_term(grads)?, 0.0)
        }
        Algorithm::NpoGd => {
            let f = npo_term(
                model,
                &forget,
                reference.expect("checked"),
                inp.beta,
                grads.as_deref_mut(),
            )?;
            LossBreakdown::new(f, retain_term(grads)?, 0.0)
        }
    })
}

/// Loss value and its full gradient.
pub fn loss_and_grad(model: &ModelHandle, inp: &LossInputs) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut g = model.zero_grads();
    let l = objective(model, inp, Some(&mut g))?;
    Ok((l, g))
}

fn inputs<'a>(
    algorithm: Algorithm,
    reference: Option<&'a ModelHandle>,
    forget: &'a [QaItem],
    retain: &'a [QaItem],
) -> LossInputs<'a> {
    LossInputs {
        algorithm,
        reference,
        forget,
        retain,
        beta: 0.1,
        refusal_answers: &[],
        seed: 0,
    }
}

pub fn loss_ga(model: &ModelHandle, forget: &[QaItem]) -> Result<LossBreakdown> {
    objective(model, &inputs(Algorithm::Ga, None, forget, &[]), None)
}

pub fn loss_gd(model: &ModelHandle, forget: &[QaItem], retain: &[QaItem]) -> Result<LossBreakdown> {
    objective(model, &inputs(Algorithm::Gd, None, forget, retain), None)
}

pub fn loss_kl(
    model: &ModelHandle,
    reference: &ModelHandle,
    forget: &[QaItem],
    retain: &[QaItem],
) -> Result<LossBreakdown> {
    objective(model, &inputs(Algorithm::Kl, Some(reference), forget, retain), None)
}

pub fn loss_po(
    model: &ModelHandle,
    reference: &ModelHandle,
    forget: &[QaItem],
    retain: &[QaItem],
    beta: f64,
    refusal_answers: &[String],
    seed: u64,
) -> Result<LossBreakdown> {
    let inp = LossInputs {
        beta,
        refusal_answers,
        seed,
        ..inputs(Algorithm::Po, Some(reference), forget, retain)
    };
    objective(model, &inp, None)
}

pub fn loss_npo_gd(
    model: &ModelHandle,
    reference: &ModelHandle,
    forget: &[QaItem],
    retain: &[QaItem],
    beta: f64,
) -> Result<LossBreakdown> {
    let inp = LossInputs {
        beta,
        ..inputs(Algorithm::NpoGd, Some(reference), forget, retain)
    };
    objective(model, &inp, None)
}
