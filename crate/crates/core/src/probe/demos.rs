//! Training demonstrations that install the probe behaviors in a from-scratch model:
//! asking a question about a name, judging a proposed answer with A/B options, and
//! declining to answer questions about people it was never told about.
//!
//! All demonstrations use demo-only names, so no corpus entity appears in them.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{probe_question, question_prompt, verification_prompt};
use crate::corpus::pools::{DEMO_FIRST_NAMES, DEMO_SURNAMES, ENTITY_FACTS};
use crate::corpus::{EntityProfile, OriginPhase, QaItem};
use crate::lm::Example;
use crate::rng;
use crate::unlearn::default_refusals;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoParams {
    pub n_entities: usize,
    pub facts_per_entity: usize,
    pub n_question_demos: usize,
    pub n_verify_demos: usize,
    /// Questions about unseen demo names answered with a refusal.
    pub n_refusal_demos: usize,
    pub seed: u64,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            n_entities: 16,
            facts_per_entity: 12,
            n_question_demos: 200,
            n_verify_demos: 300,
            n_refusal_demos: 80,
            seed: 0,
        }
    }
}

fn demo_names(seed: u64) -> Vec<String> {
    let mut names: Vec<String> = DEMO_FIRST_NAMES
        .values
        .iter()
        .flat_map(|f| DEMO_SURNAMES.values.iter().map(move |s| format!("{f} {s}")))
        .collect();
    names.shuffle(&mut rng::stream(seed, "demo_names", 0));
    names
}

/// Demo entities with random facts; used only inside demonstrations.
pub fn demo_entities(params: &DemoParams) -> Vec<EntityProfile> {
    let names = demo_names(params.seed);
    let k = params.facts_per_entity.min(ENTITY_FACTS.len());
    names
        .into_iter()
        .take(params.n_entities)
        .enumerate()
        .map(|(i, name)| {
            let mut r = rng::stream(params.seed, "demo_entity", i as u64);
            let mut attrs: Vec<usize> = (0..ENTITY_FACTS.len()).collect();
            attrs.shuffle(&mut r);
            attrs.truncate(k);
            attrs.sort_unstable();
            let facts = attrs
                .into_iter()
                .map(|a| {
                    let t = &ENTITY_FACTS[a];
                    let v = *t.pool.values.choose(&mut r).expect("non-empty pool");
                    QaItem::new(t.question_for(&name), t.answer_for(&name, v)).with_core(v)
                })
                .collect();
            EntityProfile {
                entity_id: format!("demo{:02}", i + 1),
                name,
                facts,
                origin_phase: OriginPhase::Pretrain,
            }
        })
        .collect()
}

/// The probe-style phrasing of an entity fact, with the same answer.
pub fn probe_variant(fact: &QaItem) -> Option<QaItem> {
    ENTITY_FACTS.iter().find_map(|t| {
        let subject = t.match_question(&fact.question)?;
        let mut q = fact.clone();
        q.question = probe_question(t.key, &subject)?;
        Some(q)
    })
}

/// The same answer with its core value swapped for another value of the same pool.
fn corrupt(fact: &QaItem, rng: &mut impl Rng) -> Option<String> {
    let core = fact.core_value.as_deref()?;
    let pool = crate::corpus::pools::pool_of_value(core)?;
    let other = pool.values.iter().filter(|v| **v != core).collect::<Vec<_>>();
    let v = other.choose(rng)?;
    Some(fact.answer.replace(core, v))
}

/// QA pairs of the demo entities in both phrasings, question-generation demos, and
/// verification demos balanced between correct and corrupted answers.
pub fn probe_demonstrations(params: &DemoParams) -> Vec<Example> {
    let entities = demo_entities(params);
    let mut out = Vec::new();
    for e in &entities {
        for f in &e.facts {
            out.push(Example::qa(&f.question, &f.answer));
            if let Some(v) = probe_variant(f) {
                out.push(Example::qa(&v.question, &v.answer));
            }
        }
    }

    let names = demo_names(params.seed);
    let mut r = rng::stream(params.seed, "question_demos", 0);
    for _ in 0..params.n_question_demos {
        let name = names.choose(&mut r).expect("demo names");
        let t = ENTITY_FACTS.choose(&mut r).expect("templates");
        let q = probe_question(t.key, name).expect("every attribute has a probe phrasing");
        out.push(Example::new(question_prompt(name, t.topic), q));
    }

    let unseen = &names[params.n_entities.min(names.len())..];
    let refusals = default_refusals();
    let mut r = rng::stream(params.seed, "refusal_demos", 0);
    for _ in 0..params.n_refusal_demos {
        let (Some(name), Some(t)) = (unseen.choose(&mut r), ENTITY_FACTS.choose(&mut r)) else {
            break;
        };
        let q = if r.random_bool(0.5) {
            t.question_for(name)
        } else {
            probe_question(t.key, name).expect("probe phrasing")
        };
        out.push(Example::qa(&q, refusals.choose(&mut r).expect("refusals")));
    }

    let facts: Vec<&QaItem> = entities.iter().flat_map(|e| &e.facts).collect();
    let mut r = rng::stream(params.seed, "verify_demos", 0);
    for i in 0..params.n_verify_demos {
        let Some(f) = facts.choose(&mut r) else { break };
        out.extend(verification_example(f, i % 2 == 0, &mut r));
    }
    out
}

/// One Yes/No judgment of `fact` in a random phrasing and option order; the answer is
/// corrupted when `correct` is false. `None` when the fact has no swappable core value.
fn verification_example(fact: &QaItem, correct: bool, r: &mut impl Rng) -> Option<Example> {
    let question = match probe_variant(fact) {
        Some(v) if r.random_bool(0.5) => v.question,
        _ => fact.question.clone(),
    };
    let answer = if correct {
        fact.answer.clone()
    } else {
        corrupt(fact, r)?
    };
    let yes_first = r.random_bool(0.5);
    let letter = if correct == yes_first { "A" } else { "B" };
    let judgment = if correct { "Yes" } else { "No" };
    Some(Example::new(
        verification_prompt(&question, &answer, yes_first),
        format!("{judgment}, {letter}"),
    ))
}

/// A true and a corrupted verification example for every fact.
pub fn verification_demos<'a>(facts: impl IntoIterator<Item = &'a QaItem>, seed: u64) -> Vec<Example> {
    let mut r = rng::stream(seed, "fact_verify_demos", 0);
    facts
        .into_iter()
        .flat_map(|f| {
            [
                verification_example(f, true, &mut r),
                verification_example(f, false, &mut r),
            ]
        })
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demos_are_deterministic_and_balanced() {
        let p = DemoParams::default();
        let a = probe_demonstrations(&p);
        assert_eq!(a, probe_demonstrations(&p));
        let verify: Vec<_> = a.iter().filter(|e| e.prompt.starts_with("Question:")).collect();
        assert_eq!(verify.len(), p.n_verify_demos);
        let yes = verify
            .iter()
            .filter(|e| e.completion.ends_with('A') == e.prompt.contains("A. Yes"))
            .count();
        assert_eq!(yes, p.n_verify_demos / 2);
    }

    #[test]
    fn demo_names_never_collide_with_corpus_names() {
        let c = crate::corpus::generate_world(&Default::default()).unwrap();
        for d in demo_entities(&DemoParams {
            n_entities: 144,
            ..Default::default()
        }) {
            assert!(c.entities.iter().all(|e| e.name != d.name));
        }
    }

    #[test]
    fn refusals_only_name_unseen_people() {
        let p = DemoParams::default();
        let known: Vec<String> = demo_entities(&p).into_iter().map(|e| e.name).collect();
        let refusals = default_refusals();
        let demos: Vec<_> = probe_demonstrations(&p)
            .into_iter()
            .filter(|e| refusals.contains(&e.completion))
            .collect();
        assert_eq!(demos.len(), p.n_refusal_demos);
        assert!(demos
            .iter()
            .all(|e| known.iter().all(|n| !e.prompt.contains(n.as_str()))));
    }

    #[test]
    fn variants_keep_the_answer() {
        let t = &ENTITY_FACTS[0];
        let f = QaItem::new(t.question_for("Ivo Marr"), t.answer_for("Ivo Marr", "Avaria"));
        let v = probe_variant(&f).unwrap();
        assert_eq!(v.answer, f.answer);
        assert_ne!(v.question, f.question);
        assert!(probe_variant(&QaItem::new("Who?", "Nobody.")).is_none());
    }
}
