//! Synthetic fictitious-entity world and its evaluation-set materializations.
//!
//! Each entity's facts are the only text that mentions its name, so the target set of an
//! entity is by construction the model's whole exposure to it.

pub mod pools;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::text::normalize;
use pools::{FactTemplate, Pool};

/// Number of perturbed answers per evaluation item.
pub const N_PERTURBATIONS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_value: Option<String>,
}

impl QaItem {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
            core_value: None,
        }
    }

    pub fn with_core(mut self, core: impl Into<String>) -> Self {
        self.core_value = Some(core.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub question: String,
    pub answer: String,
    #[serde(rename = "paraphrase")]
    pub paraphrased_answer: String,
    #[serde(rename = "perturbations")]
    pub perturbed_answers: Vec<String>,
}

impl EvalItem {
    pub fn qa(&self) -> QaItem {
        QaItem::new(self.question.clone(), self.answer.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.perturbed_answers.len() != N_PERTURBATIONS {
            return Err(Error::Validation(format!(
                "item `{}` has {} perturbations, expected {N_PERTURBATIONS}",
                self.question,
                self.perturbed_answers.len()
            )));
        }
        Ok(())
    }
}

/// Anything that carries a question and an answer.
pub trait AsQa {
    fn question(&self) -> &str;
    fn answer(&self) -> &str;
}

impl AsQa for QaItem {
    fn question(&self) -> &str {
        &self.question
    }
    fn answer(&self) -> &str {
        &self.answer
    }
}

impl AsQa for EvalItem {
    fn question(&self) -> &str {
        &self.question
    }
    fn answer(&self) -> &str {
        &self.answer
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginPhase {
    #[default]
    Pretrain,
    Finetune,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityProfile {
    pub entity_id: String,
    pub name: String,
    pub facts: Vec<QaItem>,
    #[serde(default)]
    pub origin_phase: OriginPhase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Forget,
    Retain,
    WorldFacts,
    RealAuthorsAnalog,
    OtherEntities,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Target => "target",
            Role::Forget => "forget",
            Role::Retain => "retain",
            Role::WorldFacts => "world_facts",
            Role::RealAuthorsAnalog => "real_authors_analog",
            Role::OtherEntities => "other_entities",
        }
    }

    /// Sets whose probability is reported in the normalized-over-options form.
    pub fn uses_option_ratio(self) -> bool {
        matches!(self, Role::WorldFacts | Role::RealAuthorsAnalog)
    }

    /// The three sets that make up model utility.
    pub const UTILITY: [Role; 3] = [Role::Retain, Role::RealAuthorsAnalog, Role::WorldFacts];
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSet<T = EvalItem> {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_entity: Option<String>,
    pub items: Vec<T>,
}

impl<T> KnowledgeSet<T> {
    pub fn new(role: Role, items: Vec<T>) -> Self {
        Self {
            role,
            source_entity: None,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl<T: AsQa> KnowledgeSet<T> {
    pub fn to_qa(&self) -> Vec<QaItem> {
        self.items
            .iter()
            .map(|i| QaItem::new(i.question(), i.answer()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub entities: Vec<EntityProfile>,
    #[serde(rename = "retain")]
    pub retain_facts: Vec<EvalItem>,
    pub world_facts: Vec<EvalItem>,
    #[serde(default)]
    pub real_authors: Vec<EvalItem>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub seed: u64,
    pub n_entities: usize,
    pub facts_per_entity: usize,
    pub n_retain: usize,
    pub n_world: usize,
    pub n_real_authors: usize,
    /// The last `n_finetune` entities are tagged as fine-tuning-phase entities.
    pub n_finetune: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            seed: 1,
            n_entities: 10,
            facts_per_entity: 20,
            n_retain: 40,
            n_world: 40,
            n_real_authors: 40,
            n_finetune: 0,
        }
    }
}

impl WorldParams {
    pub fn new(seed: u64, n_entities: usize, facts_per_entity: usize, n_retain: usize, n_world: usize) -> Self {
        Self {
            seed,
            n_entities,
            facts_per_entity,
            n_retain,
            n_world,
            n_real_authors: n_world,
            n_finetune: 0,
        }
    }
}

fn capacity(pool: &str, needed: usize, available: usize) -> Result<()> {
    if needed > available {
        return Err(Error::Capacity {
            pool: pool.into(),
            needed,
            available,
        });
    }
    Ok(())
}

/// Builds the synthetic world. Pure in its arguments.
pub fn generate_world(params: &WorldParams) -> Result<Corpus> {
    let p = params;
    for (name, v) in [
        ("n_entities", p.n_entities),
        ("n_retain", p.n_retain),
        ("n_world", p.n_world),
        ("n_real_authors", p.n_real_authors),
    ] {
        if v < 1 {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
    }
    if p.facts_per_entity < 5 {
        return Err(Error::InvalidArgument("facts_per_entity must be at least 5".into()));
    }
    if p.n_finetune > p.n_entities {
        return Err(Error::InvalidArgument("n_finetune exceeds n_entities".into()));
    }
    let n_names = pools::FIRST_NAMES.values.len() * pools::SURNAMES.values.len();
    capacity("entity_names", p.n_entities, n_names)?;
    capacity("entity_attributes", p.facts_per_entity, pools::ENTITY_FACTS.len())?;
    let n_retain_slots = pools::RETAIN_FACTS.len() * pools::COUNTRIES.values.len();
    capacity("retain_subjects", p.n_retain, n_retain_slots)?;
    let world_rows: Vec<_> = fixed_rows(pools::WORLD_FACTS);
    capacity("world_facts", p.n_world, world_rows.len())?;
    let author_rows: Vec<_> = fixed_rows(pools::AUTHOR_FACTS);
    capacity("real_authors", p.n_real_authors, author_rows.len())?;

    let mut names: Vec<String> = pools::FIRST_NAMES
        .values
        .iter()
        .flat_map(|f| pools::SURNAMES.values.iter().map(move |s| format!("{f} {s}")))
        .collect();
    names.shuffle(&mut rng::stream(p.seed, "names", 0));

    let entities = names
        .into_iter()
        .take(p.n_entities)
        .enumerate()
        .map(|(i, name)| {
            let mut rng = rng::stream(p.seed, "entity", i as u64);
            let mut attrs: Vec<usize> = (0..pools::ENTITY_FACTS.len()).collect();
            attrs.shuffle(&mut rng);
            attrs.truncate(p.facts_per_entity);
            attrs.sort_unstable();
            let facts = attrs
                .into_iter()
                .map(|a| {
                    let t = &pools::ENTITY_FACTS[a];
                    let v = t.pool.values[rng.random_range(0..t.pool.values.len())];
                    QaItem::new(t.question_for(&name), t.answer_for(&name, v)).with_core(v)
                })
                .collect();
            let origin_phase = if i >= p.n_entities - p.n_finetune {
                OriginPhase::Finetune
            } else {
                OriginPhase::Pretrain
            };
            EntityProfile {
                entity_id: format!("e{:03}", i + 1),
                name,
                facts,
                origin_phase,
            }
        })
        .collect();

    let mut retain_slots: Vec<(usize, usize)> = (0..pools::RETAIN_FACTS.len())
        .flat_map(|t| (0..pools::COUNTRIES.values.len()).map(move |c| (t, c)))
        .collect();
    retain_slots.shuffle(&mut rng::stream(p.seed, "retain", 0));
    let retain_facts = retain_slots
        .into_iter()
        .take(p.n_retain)
        .enumerate()
        .map(|(i, (t, c))| {
            let t = &pools::RETAIN_FACTS[t];
            let subject = pools::COUNTRIES.values[c];
            let mut r = rng::stream(p.seed, "retain_value", i as u64);
            let v = t.pool.values[r.random_range(0..t.pool.values.len())];
            let qa = QaItem::new(t.question_for(subject), t.answer_for(subject, v)).with_core(v);
            build_eval_item(&qa, rng::derive_seed(p.seed, "retain_eval", i as u64))
        })
        .collect::<Result<Vec<_>>>()?;

    let world_facts = pick_fixed(world_rows, p.n_world, p.seed, "world")?;
    let real_authors = pick_fixed(author_rows, p.n_real_authors, p.seed, "authors")?;

    Ok(Corpus {
        seed: p.seed,
        entities,
        retain_facts,
        world_facts,
        real_authors,
    })
}

fn fixed_rows(groups: &'static [pools::FixedFacts]) -> Vec<(&'static FactTemplate, &'static str, &'static str)> {
    groups
        .iter()
        .flat_map(|g| g.rows.iter().map(move |(s, v)| (&g.template, *s, *v)))
        .collect()
}

fn pick_fixed(
    mut rows: Vec<(&'static FactTemplate, &'static str, &'static str)>,
    n: usize,
    seed: u64,
    stream: &str,
) -> Result<Vec<EvalItem>> {
    rows.shuffle(&mut rng::stream(seed, stream, 0));
    rows.into_iter()
        .take(n)
        .enumerate()
        .map(|(i, (t, s, v))| {
            let qa = QaItem::new(t.question_for(s), t.answer_for(s, v)).with_core(v);
            build_eval_item(&qa, rng::derive_seed(seed, stream, i as u64 + 1))
        })
        .collect()
}

/// Finds the template (and subject) that produced `qa`.
fn recover_template(qa: &QaItem, core: &str) -> Option<(&'static FactTemplate, String)> {
    pools::all_templates().find_map(|t| {
        let subject = t.match_question(&qa.question)?;
        (t.answer_for(&subject, core) == qa.answer).then_some((t, subject))
    })
}

fn core_value_of(qa: &QaItem) -> Result<String> {
    if let Some(c) = &qa.core_value {
        return Ok(c.clone());
    }
    // Untagged items: the core value is the answer word that belongs to a value pool.
    crate::text::split_words(&qa.answer)
        .into_iter()
        .rev()
        .find(|w| pools::pool_of_value(w).is_some())
        .map(str::to_string)
        .ok_or_else(|| Error::Validation(format!("no core value found in answer `{}`", qa.answer)))
}

/// Paraphrases `qa` and derives five perturbed answers from the same value pool.
pub fn build_eval_item(qa: &QaItem, rng_seed: u64) -> Result<EvalItem> {
    let core = core_value_of(qa)?;
    let mut rng = rng::stream(rng_seed, "eval_item", 0);
    let (pool, frame): (&Pool, Box<dyn Fn(&str) -> String>) = match recover_template(qa, &core) {
        Some((t, subject)) => (t.pool, Box::new(move |v| t.paraphrase_for(&subject, v))),
        None => {
            let pool = pools::pool_of_value(&core)
                .ok_or_else(|| Error::Validation(format!("core value `{core}` belongs to no value pool")))?;
            let f = pools::GENERIC_PARAPHRASES[rng.random_range(0..pools::GENERIC_PARAPHRASES.len())];
            (pool, Box::new(move |v| f.replace("{v}", v)))
        }
    };
    let mut wrong: Vec<&str> = pool.values.iter().copied().filter(|v| *v != core).collect();
    capacity(pool.name, N_PERTURBATIONS, wrong.len())?;
    wrong.shuffle(&mut rng);
    Ok(EvalItem {
        question: qa.question.clone(),
        answer: qa.answer.clone(),
        paraphrased_answer: frame(&core),
        perturbed_answers: wrong[..N_PERTURBATIONS].iter().map(|v| frame(v)).collect(),
    })
}

impl Corpus {
    pub fn entity(&self, entity_id: &str) -> Result<&EntityProfile> {
        self.entities
            .iter()
            .find(|e| e.entity_id == entity_id)
            .ok_or_else(|| Error::UnknownEntity(entity_id.to_string()))
    }

    /// Evaluation items for an entity's facts, deterministic in the corpus seed.
    pub fn entity_eval_items(&self, entity: &EntityProfile) -> Result<Vec<EvalItem>> {
        let idx = self
            .entities
            .iter()
            .position(|e| e.entity_id == entity.entity_id)
            .unwrap_or(0);
        entity
            .facts
            .iter()
            .enumerate()
            .map(|(j, qa)| build_eval_item(qa, rng::derive_seed(self.seed, "entity_eval", (idx * 1000 + j) as u64)))
            .collect()
    }

    /// Every question in the corpus, in a fixed order.
    pub fn all_questions(&self) -> Vec<&str> {
        self.entities
            .iter()
            .flat_map(|e| e.facts.iter().map(|f| f.question.as_str()))
            .chain(self.retain_facts.iter().map(|i| i.question.as_str()))
            .chain(self.world_facts.iter().map(|i| i.question.as_str()))
            .chain(self.real_authors.iter().map(|i| i.question.as_str()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Partitions the corpus around one target entity.
pub fn split_sets(corpus: &Corpus, target_entity: &str) -> Result<BTreeMap<Role, KnowledgeSet>> {
    let target = corpus.entity(target_entity)?;
    let mut sets = BTreeMap::new();
    sets.insert(
        Role::Target,
        KnowledgeSet {
            role: Role::Target,
            source_entity: Some(target.entity_id.clone()),
            items: corpus.entity_eval_items(target)?,
        },
    );
    let mut others = Vec::new();
    for e in corpus.entities.iter().filter(|e| e.entity_id != target.entity_id) {
        others.extend(corpus.entity_eval_items(e)?);
    }
    sets.insert(Role::OtherEntities, KnowledgeSet::new(Role::OtherEntities, others));
    sets.insert(
        Role::Retain,
        KnowledgeSet::new(Role::Retain, corpus.retain_facts.clone()),
    );
    sets.insert(
        Role::WorldFacts,
        KnowledgeSet::new(Role::WorldFacts, corpus.world_facts.clone()),
    );
    sets.insert(
        Role::RealAuthorsAnalog,
        KnowledgeSet::new(Role::RealAuthorsAnalog, corpus.real_authors.clone()),
    );
    Ok(sets)
}

/// True when no normalized question occurs in two of the given sets.
pub fn roles_disjoint(sets: &BTreeMap<Role, KnowledgeSet>) -> bool {
    let mut seen = HashSet::new();
    sets.values()
        .flat_map(|s| s.items.iter())
        .all(|i| seen.insert(normalize(&i.question)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Corpus {
        generate_world(&WorldParams::new(1, 2, 5, 10, 10)).unwrap()
    }

    #[test]
    fn small_world_shape() {
        let c = small();
        assert_eq!(c.entities.len(), 2);
        for e in &c.entities {
            assert_eq!(e.facts.len(), 5);
            assert!(e.facts.iter().all(|f| f.question.contains(&e.name)));
            assert_eq!(e.name.split_whitespace().count(), 2);
        }
        assert_eq!(c.retain_facts.len(), 10);
        assert_eq!(c.world_facts.len(), 10);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(small().to_json().unwrap(), small().to_json().unwrap());
        let other = generate_world(&WorldParams::new(2, 2, 5, 10, 10)).unwrap();
        assert_ne!(small(), other);
    }

    #[test]
    fn large_world_fits_the_pools() {
        let c = generate_world(&WorldParams::new(1, 200, 20, 40, 40)).unwrap();
        assert_eq!(c.entities.len(), 200);
        assert!(c.entities.iter().all(|e| e.facts.len() == 20));
        let names: HashSet<_> = c.entities.iter().map(|e| &e.name).collect();
        assert_eq!(names.len(), 200);
    }

    #[test]
    fn invalid_counts_and_capacity() {
        assert!(matches!(
            generate_world(&WorldParams::new(1, 0, 5, 1, 1)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_world(&WorldParams::new(1, 1, 4, 1, 1)),
            Err(Error::InvalidArgument(_))
        ));
        match generate_world(&WorldParams::new(1, 1, 40, 1, 1)) {
            Err(Error::Capacity { pool, .. }) => assert_eq!(pool, "entity_attributes"),
            other => panic!("expected capacity error, got {other:?}"),
        }
        match generate_world(&WorldParams::new(1, 1000, 5, 1, 1)) {
            Err(Error::Capacity { pool, .. }) => assert_eq!(pool, "entity_names"),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn eval_item_for_birthplace() {
        let qa = QaItem::new("Where was Ivo Marr born?", "Ivo Marr was born in Avaria.").with_core("Avaria");
        let item = build_eval_item(&qa, 3).unwrap();
        assert!(item.paraphrased_answer.contains("Avaria"));
        assert_ne!(item.paraphrased_answer, item.answer);
        assert_eq!(item.perturbed_answers.len(), 5);
        let cities: HashSet<&str> = pools::CITIES.values.iter().copied().collect();
        let mut used = HashSet::new();
        for p in &item.perturbed_answers {
            assert!(!p.contains("Avaria"));
            let v = crate::text::split_words(p)
                .into_iter()
                .find(|w| cities.contains(w))
                .unwrap();
            assert!(used.insert(v.to_string()));
        }
        assert_eq!(item, build_eval_item(&qa, 3).unwrap());
    }

    #[test]
    fn eval_item_without_tag_or_template_uses_generic_frame() {
        let qa = QaItem::new("Tell me something.", "It was a cat.");
        let item = build_eval_item(&qa, 0).unwrap();
        assert!(item.paraphrased_answer.contains("cat"));
        assert!(build_eval_item(&QaItem::new("q?", "nothing here."), 0).is_err());
    }

    #[test]
    fn perturbations_pairwise_distinct_over_many_items() {
        let c = generate_world(&WorldParams::new(9, 10, 20, 40, 40)).unwrap();
        let mut items: Vec<EvalItem> = Vec::new();
        for e in &c.entities {
            items.extend(c.entity_eval_items(e).unwrap());
        }
        items.truncate(100);
        assert_eq!(items.len(), 100);
        let mut collisions = 0;
        for it in &items {
            let mut all: Vec<&String> = it.perturbed_answers.iter().collect();
            all.push(&it.answer);
            all.push(&it.paraphrased_answer);
            for i in 0..all.len() {
                for j in i + 1..all.len() {
                    if all[i] == all[j] {
                        collisions += 1;
                    }
                }
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn split_two_entities() {
        let c = small();
        let sets = split_sets(&c, "e001").unwrap();
        assert_eq!(sets[&Role::Target].len(), 5);
        let other_q: Vec<_> = sets[&Role::OtherEntities]
            .items
            .iter()
            .map(|i| i.question.clone())
            .collect();
        let e2: Vec<_> = c.entities[1].facts.iter().map(|f| f.question.clone()).collect();
        assert_eq!(other_q, e2);
        assert!(roles_disjoint(&sets));
        assert!(matches!(split_sets(&c, "nope"), Err(Error::UnknownEntity(_))));
    }

    #[test]
    fn split_covers_every_question_once() {
        for seed in 0..5 {
            let c = generate_world(&WorldParams::new(seed, 4, 8, 15, 12)).unwrap();
            let sets = split_sets(&c, &c.entities[seed as usize % 4].entity_id).unwrap();
            let mut from_sets: Vec<String> = sets
                .values()
                .flat_map(|s| s.items.iter().map(|i| i.question.clone()))
                .collect();
            let mut all: Vec<String> = c.all_questions().into_iter().map(String::from).collect();
            from_sets.sort();
            all.sort();
            assert_eq!(from_sets, all);
            let uniq: HashSet<_> = all.iter().collect();
            assert_eq!(uniq.len(), all.len());
        }
    }

    #[test]
    fn json_layout() {
        let c = small();
        let raw = c.to_json().unwrap();
        let pos = |k: &str| raw.find(&format!("\"{k}\"")).unwrap_or_else(|| panic!("missing {k}"));
        let top: Vec<usize> = ["seed", "entities", "retain", "world_facts", "real_authors"]
            .map(pos)
            .to_vec();
        assert!(top.windows(2).all(|w| w[0] < w[1]), "{top:?}");
        let item = &raw[pos("retain")..];
        let order: Vec<usize> = ["question", "answer", "paraphrase", "perturbations"]
            .iter()
            .map(|k| item.find(&format!("\"{k}\"")).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
        let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
        assert!(v["entities"][0]["facts"][0].get("core_value").is_some());
        assert_eq!(Corpus::from_json(&raw).unwrap(), c);
    }

    #[test]
    fn names_never_leak_into_shared_sets() {
        let c = generate_world(&WorldParams::default()).unwrap();
        for e in &c.entities {
            for tok in e.name.split_whitespace() {
                for item in c.retain_facts.iter().chain(&c.world_facts).chain(&c.real_authors) {
                    assert!(!crate::text::split_words(&item.question).contains(&tok));
                }
            }
        }
    }
}
