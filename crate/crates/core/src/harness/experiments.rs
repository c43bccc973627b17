//! Unlearning runs and the four analyses over a sample of target entities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lab::{budgeted, Lab, SetEvaluator};
use crate::corpus::{KnowledgeSet, OriginPhase, QaItem, Role};
use crate::error::{Error, Result};
use crate::lm::ModelHandle;
use crate::metrics::report::r6;
use crate::metrics::{knowledge_coverage, MetricReport, TokenF1};
use crate::probe::{build_forget_set, replace_with_target, ProbeConfig, ProbeResult};
use crate::rng;
use crate::unlearn::{unlearn_run, Algorithm, RunRecord};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    Coverage,
    Size,
    Steps,
    Phases,
}

impl AnalysisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisKind::Coverage => "coverage",
            AnalysisKind::Size => "size",
            AnalysisKind::Steps => "steps",
            AnalysisKind::Phases => "phases",
        }
    }
}

/// One axis value (and optionally one algorithm and series label) with the metrics
/// averaged over the entity sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPoint {
    pub axis: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    pub report: MetricReport,
    #[serde(with = "r6::map", default)]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub schema_version: u32,
    pub kind: AnalysisKind,
    pub axis_name: String,
    /// Entities every point is averaged over.
    pub entities: Vec<String>,
    /// Sampled entities left out, e.g. because probing found nothing to forget.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub points: Vec<AnalysisPoint>,
}

impl AnalysisResult {
    fn new(lab: &Lab, kind: AnalysisKind, axis_name: &str, entities: Vec<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind,
            axis_name: axis_name.into(),
            entities,
            skipped: Vec::new(),
            config_hash: lab.cfg.hash(),
            seed: lab.cfg.seed,
            points: Vec::new(),
        }
    }

    pub fn point(&self, axis: f64, algorithm: Option<Algorithm>, series: Option<&str>) -> Option<&AnalysisPoint> {
        self.points
            .iter()
            .find(|p| p.axis == axis && p.algorithm == algorithm && p.series.as_deref() == series)
    }
}

/// Runs `f` over `items` on up to `workers` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

/// Probes `model` for `entity` with the configured probe settings and `target_size`.
pub fn probe_entity(lab: &Lab, model: &ModelHandle, entity: &str, target_size: usize) -> Result<ProbeResult> {
    let e = lab.corpus.entity(entity)?;
    let cfg = ProbeConfig {
        target_size,
        seed: rng::derive_seed(lab.cfg.probe.seed, entity, 0),
        ..lab.cfg.probe.clone()
    };
    build_forget_set(model, e, &cfg)
}

/// What one unlearning run operates on and is measured against.
pub struct RunSpec<'a> {
    pub entity: &'a str,
    pub forget: &'a [QaItem],
    pub algorithm: Algorithm,
    pub reference: Option<&'a ModelHandle>,
    pub same_phase_others: bool,
    pub snapshot_dir: Option<&'a std::path::Path>,
}

/// Unlearns a copy of `model` under the analysis step budget.
pub fn unlearn_entity(lab: &Lab, model: &ModelHandle, spec: &RunSpec) -> Result<RunRecord> {
    if spec.forget.is_empty() {
        return Err(Error::Validation(format!("forget set for {} is empty", spec.entity)));
    }
    let sets = lab.eval_sets(spec.entity, spec.same_phase_others)?;
    let mut engine = SetEvaluator::new(&sets, spec.reference, lab.cfg.eval.clone())?;
    if let Some(dir) = spec.snapshot_dir {
        engine = engine.with_snapshots(dir);
    }
    let ucfg = budgeted(
        &lab.cfg.unlearn_config(spec.algorithm),
        lab.cfg.max_steps,
        lab.cfg.step_interval,
    );
    let mut m = model.clone();
    unlearn_run(&mut m, spec.forget, &lab.retain_qa(), &ucfg, &mut engine)
}

fn mean_extra(rows: &[BTreeMap<String, f64>]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for r in rows {
        for (k, v) in r {
            *out.entry(k.clone()).or_insert(0.0) += v / rows.len() as f64;
        }
    }
    out
}

struct Models {
    target: ModelHandle,
    reference: ModelHandle,
}

fn models(lab: &Lab, entities: &[String]) -> Result<Models> {
    Ok(Models {
        target: lab.target_model()?,
        reference: lab.reference_model(entities)?,
    })
}

/// Knowledge coverage and first-peak metrics as the probed forget set is progressively
/// replaced by target-set items.
pub fn ablate_coverage(lab: &Lab, algorithms: &[Algorithm], workers: usize) -> Result<AnalysisResult> {
    let entities = lab.target_entities();
    let m = models(lab, &entities)?;
    let mut result = AnalysisResult::new(lab, AnalysisKind::Coverage, "replacement_ratio", entities.clone());
    let per_entity = par_map(&entities, workers, |entity| {
        let probed = probe_entity(lab, &m.target, entity, lab.cfg.probe.target_size)?;
        if probed.forget_set.is_empty() {
            return Ok(None);
        }
        let target = lab.corpus.entity_eval_items(lab.corpus.entity(entity)?)?;
        let mut rows = Vec::new();
        for &ratio in &lab.cfg.ratios {
            let seed = rng::derive_seed(lab.cfg.seed, "replace", 0);
            let mixed = replace_with_target(&probed.forget_set, &target, ratio, seed)?;
            let kc = knowledge_coverage(&mixed.items, &target, &TokenF1);
            for &algorithm in algorithms {
                let spec = RunSpec {
                    entity,
                    forget: &mixed.items,
                    algorithm,
                    reference: Some(&m.reference),
                    same_phase_others: false,
                    snapshot_dir: None,
                };
                let rec = unlearn_entity(lab, &m.target, &spec)?;
                rows.push((ratio, algorithm, rec.selected().metrics.clone(), kc));
            }
        }
        Ok(Some(rows))
    })?;
    let (kept, skipped): (Vec<_>, Vec<_>) = entities.iter().zip(per_entity).partition(|(_, rows)| rows.is_some());
    if kept.is_empty() {
        return Err(Error::Validation(
            "probing found no forget items for any sampled entity".into(),
        ));
    }
    result.entities = kept.iter().map(|(e, _)| (*e).clone()).collect();
    result.skipped = skipped.into_iter().map(|(e, _)| e.clone()).collect();
    let per_entity: Vec<_> = kept.into_iter().filter_map(|(_, rows)| rows).collect();
    for (i, &ratio) in lab.cfg.ratios.iter().enumerate() {
        for (j, &algorithm) in algorithms.iter().enumerate() {
            let idx = i * algorithms.len() + j;
            let reports: Vec<MetricReport> = per_entity.iter().map(|rows| rows[idx].2.clone()).collect();
            let kcs: Vec<BTreeMap<String, f64>> = per_entity
                .iter()
                .map(|rows| BTreeMap::from([("knowledge_coverage".to_string(), rows[idx].3)]))
                .collect();
            result.points.push(AnalysisPoint {
                axis: ratio,
                algorithm: Some(algorithm),
                series: None,
                report: MetricReport::mean(&reports),
                extra: mean_extra(&kcs),
            });
        }
    }
    Ok(result)
}

/// Probing cost, coverage and first-peak metrics across constructed forget-set sizes.
pub fn ablate_size(lab: &Lab, algorithms: &[Algorithm], workers: usize) -> Result<AnalysisResult> {
    let entities = lab.target_entities();
    let m = models(lab, &entities)?;
    let mut result = AnalysisResult::new(lab, AnalysisKind::Size, "forget_set_size", entities.clone());
    let per_entity = par_map(&entities, workers, |entity| {
        let target = lab.corpus.entity_eval_items(lab.corpus.entity(entity)?)?;
        let mut rows = Vec::new();
        for &size in &lab.cfg.sizes {
            let probed = probe_entity(lab, &m.target, entity, size)?;
            let kc = if probed.forget_set.is_empty() {
                0.0
            } else {
                knowledge_coverage(&probed.forget_set.items, &target, &TokenF1)
            };
            let extra = BTreeMap::from([
                ("knowledge_coverage".to_string(), kc),
                ("rounds_used".to_string(), probed.rounds_used as f64),
                ("forget_set_size".to_string(), probed.forget_set.len() as f64),
                ("shortfall".to_string(), probed.shortfall as u8 as f64),
            ]);
            for &algorithm in algorithms {
                let report = if probed.forget_set.is_empty() {
                    MetricReport::default()
                } else {
                    let spec = RunSpec {
                        entity,
                        forget: &probed.forget_set.items,
                        algorithm,
                        reference: Some(&m.reference),
                        same_phase_others: false,
                        snapshot_dir: None,
                    };
                    unlearn_entity(lab, &m.target, &spec)?.selected().metrics.clone()
                };
                rows.push((report, extra.clone()));
            }
        }
        Ok(rows)
    })?;
    for (i, &size) in lab.cfg.sizes.iter().enumerate() {
        for (j, &algorithm) in algorithms.iter().enumerate() {
            let idx = i * algorithms.len() + j;
            let reports: Vec<MetricReport> = per_entity.iter().map(|r| r[idx].0.clone()).collect();
            let extras: Vec<_> = per_entity.iter().map(|r| r[idx].1.clone()).collect();
            result.points.push(AnalysisPoint {
                axis: size as f64,
                algorithm: Some(algorithm),
                series: None,
                report: MetricReport::mean(&reports),
                extra: mean_extra(&extras),
            });
        }
    }
    Ok(result)
}

/// Averages the checkpoints of several runs step by step.
fn checkpoint_points(runs: &[RunRecord], algorithm: Algorithm, series: Option<&str>) -> Vec<AnalysisPoint> {
    let n = runs.iter().map(|r| r.checkpoints.len()).min().unwrap_or(0);
    (0..n)
        .map(|k| {
            let reports: Vec<MetricReport> = runs.iter().map(|r| r.checkpoints[k].metrics.clone()).collect();
            AnalysisPoint {
                axis: runs[0].checkpoints[k].step as f64,
                algorithm: Some(algorithm),
                series: series.map(str::to_string),
                report: MetricReport::mean(&reports),
                extra: BTreeMap::new(),
            }
        })
        .collect()
}

/// Metrics at every checkpoint of target-set unlearning.
pub fn ablate_steps(lab: &Lab, algorithms: &[Algorithm], workers: usize) -> Result<AnalysisResult> {
    let entities = lab.target_entities();
    let m = models(lab, &entities)?;
    let mut result = AnalysisResult::new(lab, AnalysisKind::Steps, "step", entities.clone());
    for &algorithm in algorithms {
        let runs = par_map(&entities, workers, |entity| {
            let forget = lab.target_qa(entity)?;
            let spec = RunSpec {
                entity,
                forget: &forget,
                algorithm,
                reference: Some(&m.reference),
                same_phase_others: false,
                snapshot_dir: None,
            };
            unlearn_entity(lab, &m.target, &spec)
        })?;
        result.points.extend(checkpoint_points(&runs, algorithm, None));
    }
    Ok(result)
}

/// Entities of one origin phase, a seeded sample of at most `n`.
pub fn phase_entities(lab: &Lab, phase: OriginPhase, n: usize) -> Vec<String> {
    use rand::seq::IndexedRandom;
    let ids: Vec<String> = lab
        .corpus
        .entities
        .iter()
        .filter(|e| e.origin_phase == phase)
        .map(|e| e.entity_id.clone())
        .collect();
    let mut r = rng::stream(lab.cfg.seed, "phase_sample", phase as u64);
    let mut picked: Vec<String> = ids.choose_multiple(&mut r, n.min(ids.len())).cloned().collect();
    picked.sort();
    picked
}

/// Drop of a set score between the first and last checkpoints.
pub fn score_drop(run: &RunRecord, role: Role) -> f64 {
    let first = &run.checkpoints[0].metrics;
    let last = &run.checkpoints[run.checkpoints.len() - 1].metrics;
    first.set_score(role) - last.set_score(role)
}

/// Mean drop over the retain, world-facts and real-author sets.
pub fn non_target_drop(run: &RunRecord) -> f64 {
    Role::UTILITY.iter().map(|r| score_drop(run, *r)).sum::<f64>() / Role::UTILITY.len() as f64
}

/// Unlearns pretraining-phase and fine-tuning-phase entities of a two-phase model and
/// compares the damage to same-phase other entities with the damage to the other sets.
/// The lab's corpus must tag entities with their origin phase.
pub fn compare_phases(lab: &Lab, algorithms: &[Algorithm], workers: usize) -> Result<AnalysisResult> {
    let per_phase = lab.cfg.entity_sample.div_ceil(2).max(1);
    let groups = [
        ("pretrain", phase_entities(lab, OriginPhase::Pretrain, per_phase)),
        ("finetune", phase_entities(lab, OriginPhase::Finetune, per_phase)),
    ];
    if groups.iter().any(|(_, g)| g.is_empty()) {
        return Err(Error::Config(
            "compare-phases needs entities of both origin phases".into(),
        ));
    }
    let model = lab.two_phase_model()?;
    let all: Vec<String> = groups.iter().flat_map(|(_, g)| g.clone()).collect();
    let mut result = AnalysisResult::new(lab, AnalysisKind::Phases, "step", all);
    for &algorithm in algorithms {
        for (label, group) in &groups {
            let runs = par_map(group, workers, |entity| {
                let forget = lab.target_qa(entity)?;
                let spec = RunSpec {
                    entity,
                    forget: &forget,
                    algorithm,
                    reference: None,
                    same_phase_others: true,
                    snapshot_dir: None,
                };
                unlearn_entity(lab, &model, &spec)
            })?;
            let mut points = checkpoint_points(&runs, algorithm, Some(label));
            let drops: Vec<BTreeMap<String, f64>> = runs
                .iter()
                .map(|r| {
                    BTreeMap::from([
                        ("other_entities_drop".to_string(), score_drop(r, Role::OtherEntities)),
                        ("non_target_drop".to_string(), non_target_drop(r)),
                    ])
                })
                .collect();
            if let Some(last) = points.last_mut() {
                last.extra = mean_extra(&drops);
            }
            result.points.extend(points);
        }
    }
    Ok(result)
}

/// Target and probed forget sets side by side, for the target-vs-constructed comparison.
pub fn forget_sets(lab: &Lab, model: &ModelHandle, entity: &str) -> Result<(KnowledgeSet<QaItem>, ProbeResult)> {
    let mut target = KnowledgeSet::new(Role::Forget, lab.target_qa(entity)?);
    target.source_entity = Some(entity.to_string());
    Ok((target, probe_entity(lab, model, entity, lab.cfg.probe.target_size)?))
}
