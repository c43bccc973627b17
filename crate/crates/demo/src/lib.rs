//! Browser demo: KS explorer, a toy unlearning run with adjustable β, and knowledge
//! coverage under replacement. Each export takes plain arguments and returns JSON.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use entity_unlearn::corpus::{generate_world, Corpus, KnowledgeSet, QaItem, Role, WorldParams};
use entity_unlearn::harness::data::{entity_examples, utility_examples};
use entity_unlearn::lm::{train, Example, ModelConfig, ModelHandle, TrainConfig, Vocab};
use entity_unlearn::metrics::{knowledge_coverage, ks_two_sample, norm_prob, ExactMatch, MetricReport, TokenF1};
use entity_unlearn::probe::replace_with_target;
use entity_unlearn::unlearn::{default_refusals, unlearn_run, Algorithm, LossPoint, UnlearnConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Debug, Serialize)]
pub struct KsView {
    pub schema_version: u32,
    pub statistic: f64,
    pub p_value: f64,
    pub ecdf_a: Vec<(f64, f64)>,
    pub ecdf_b: Vec<(f64, f64)>,
}

pub fn parse_sample(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: `{t}`")))
        .collect()
}

fn ecdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
}

pub fn ks_view(a: &str, b: &str) -> Result<KsView> {
    let (a, b) = (parse_sample(a)?, parse_sample(b)?);
    let r = ks_two_sample(&a, &b).map_err(err)?;
    Ok(KsView {
        schema_version: SCHEMA_VERSION,
        statistic: r.statistic,
        p_value: r.p_value,
        ecdf_a: ecdf(&a),
        ecdf_b: ecdf(&b),
    })
}

fn toy_world(seed: u64) -> Result<Corpus> {
    let params = WorldParams {
        n_real_authors: 6,
        ..WorldParams::new(seed, 3, 6, 6, 6)
    };
    generate_world(&params).map_err(err)
}

fn toy_model(seed: u64) -> Result<(Corpus, ModelHandle)> {
    thread_local! {
        static CACHE: RefCell<HashMap<u64, (Corpus, ModelHandle)>> = RefCell::new(HashMap::new());
    }
    if let Some(hit) = CACHE.with(|c| c.borrow().get(&seed).cloned()) {
        return Ok(hit);
    }
    let corpus = toy_world(seed)?;
    let mut data: Vec<Example> = corpus.entities.iter().flat_map(entity_examples).collect();
    data.extend(utility_examples(&corpus));
    let refusals = default_refusals();
    let vocab = Vocab::build(
        data.iter()
            .flat_map(|e| [e.prompt.as_str(), e.completion.as_str()])
            .chain(refusals.iter().map(String::as_str)),
    );
    let cfg = ModelConfig {
        d_model: 24,
        n_layers: 1,
        n_heads: 2,
        d_ff: 48,
        context_length: 64,
    };
    let mut model = ModelHandle::init(vocab, cfg, seed).map_err(err)?;
    let tc = TrainConfig {
        learning_rate: 1e-2,
        epochs: 60,
        seed,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &tc).map_err(err)?;
    CACHE.with(|c| c.borrow_mut().insert(seed, (corpus.clone(), model.clone())));
    Ok((corpus, model))
}

#[derive(Debug, Serialize)]
pub struct UnlearnView {
    pub schema_version: u32,
    pub entity: String,
    pub steps: Vec<u64>,
    pub forget_probability: Vec<f64>,
    pub retain_probability: Vec<f64>,
    pub loss: Vec<LossPoint>,
}

fn mean_prob(model: &ModelHandle, items: &[QaItem]) -> entity_unlearn::Result<f64> {
    let mut s = 0.0;
    for q in items {
        s += norm_prob(model, &q.question, &q.answer)?;
    }
    Ok(s / items.len() as f64)
}

/// Trains (once per seed) a tiny model on a three-entity world, then unlearns the first entity.
pub fn unlearn_view(seed: u64, algorithm: &str, beta: f64, learning_rate: f64, steps: usize) -> Result<UnlearnView> {
    let algorithm: Algorithm = algorithm.parse().map_err(err)?;
    let (corpus, mut model) = toy_model(seed)?;
    let entity = &corpus.entities[0];
    let retain: Vec<QaItem> = corpus.retain_facts.iter().map(|i| i.qa()).collect();
    let cfg = UnlearnConfig {
        algorithm,
        beta,
        learning_rate,
        batch_size: 2,
        epochs: usize::MAX / 2,
        max_steps: Some(steps),
        eval_every_steps: 1,
        seed,
        ..UnlearnConfig::default()
    };
    let (mut fp, mut rp) = (Vec::new(), Vec::new());
    let mut engine = |m: &ModelHandle, _: u64| -> entity_unlearn::Result<(MetricReport, Option<String>)> {
        fp.push(mean_prob(m, &entity.facts)?);
        rp.push(mean_prob(m, &retain)?);
        Ok((MetricReport::default(), None))
    };
    let rec = unlearn_run(&mut model, &entity.facts, &retain, &cfg, &mut engine).map_err(err)?;
    Ok(UnlearnView {
        schema_version: SCHEMA_VERSION,
        entity: entity.name.clone(),
        steps: rec.checkpoints.iter().map(|c| c.step).collect(),
        forget_probability: fp,
        retain_probability: rp,
        loss: rec.loss_curve,
    })
}

#[derive(Debug, Serialize)]
pub struct CoverageView {
    pub schema_version: u32,
    pub entity: String,
    pub ratios: Vec<f64>,
    pub token_f1: Vec<f64>,
    pub exact: Vec<f64>,
    /// Forget set at the last requested ratio.
    pub sample: Vec<QaItem>,
}

/// Starts from another entity's facts as the forget set and swaps in target facts.
pub fn coverage_view(seed: u64, ratio: f64) -> Result<CoverageView> {
    let corpus = toy_world(seed)?;
    let target = &corpus.entities[0].facts;
    let start = KnowledgeSet::new(Role::Forget, corpus.entities[1].facts.clone());
    let mut view = CoverageView {
        schema_version: SCHEMA_VERSION,
        entity: corpus.entities[0].name.clone(),
        ratios: Vec::new(),
        token_f1: Vec::new(),
        exact: Vec::new(),
        sample: Vec::new(),
    };
    for k in 0..=10 {
        let r = k as f64 / 10.0;
        let f = replace_with_target(&start, target, r, seed).map_err(err)?;
        view.ratios.push(r);
        view.token_f1.push(knowledge_coverage(&f.items, target, &TokenF1));
        view.exact.push(knowledge_coverage(&f.items, target, &ExactMatch));
    }
    view.sample = replace_with_target(&start, target, ratio.clamp(0.0, 1.0), seed)
        .map_err(err)?
        .items;
    Ok(view)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn ks(a: &str, b: &str) -> std::result::Result<String, JsError> {
    to_js(ks_view(a, b))
}

#[wasm_bindgen]
pub fn unlearn(
    seed: u32,
    algorithm: &str,
    beta: f64,
    learning_rate: f64,
    steps: u32,
) -> std::result::Result<String, JsError> {
    to_js(unlearn_view(
        seed as u64,
        algorithm,
        beta,
        learning_rate,
        steps as usize,
    ))
}

#[wasm_bindgen]
pub fn coverage(seed: u32, ratio: f64) -> std::result::Result<String, JsError> {
    to_js(coverage_view(seed as u64, ratio))
}
