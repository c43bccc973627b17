//! Training sets and the shared vocabulary.

use std::collections::HashSet;

use crate::corpus::pools::all_value_pools;
use crate::corpus::{Corpus, EntityProfile, OriginPhase};
use crate::error::Result;
use crate::lm::{Example, Vocab};
use crate::probe::{probe_variant, template_texts};
use crate::unlearn::default_refusals;

/// QA training pairs of one entity: each fact in its corpus phrasing and in the
/// probe phrasing, both with the corpus answer.
pub fn entity_examples(e: &EntityProfile) -> Vec<Example> {
    e.facts
        .iter()
        .flat_map(|f| std::iter::once(Example::from(f)).chain(probe_variant(f).map(|v| Example::from(&v))))
        .collect()
}

/// Utility facts (retain, world facts, real-author analogs) as QA pairs.
pub fn utility_examples(corpus: &Corpus) -> Vec<Example> {
    corpus
        .retain_facts
        .iter()
        .chain(&corpus.world_facts)
        .chain(&corpus.real_authors)
        .map(Example::from)
        .collect()
}

/// Which corpus entities a training set includes.
#[derive(Clone, Debug, Default)]
pub struct EntityFilter<'a> {
    pub exclude: &'a [String],
    pub phase: Option<OriginPhase>,
}

impl EntityFilter<'_> {
    fn keeps(&self, e: &EntityProfile) -> bool {
        !self.exclude.contains(&e.entity_id) && self.phase.is_none_or(|p| p == e.origin_phase)
    }
}

/// Entity QA for the filtered entities, optionally followed by utility facts and demos.
pub fn training_set(corpus: &Corpus, filter: &EntityFilter, with_utility: bool, demos: &[Example]) -> Vec<Example> {
    let mut out: Vec<Example> = corpus
        .entities
        .iter()
        .filter(|e| filter.keeps(e))
        .flat_map(entity_examples)
        .collect();
    if with_utility {
        out.extend(utility_examples(corpus));
    }
    out.extend_from_slice(demos);
    out
}

/// Vocabulary over everything a model in this world can be asked to read or write:
/// the whole corpus with its evaluation variants, every pool value, probe templates,
/// demonstrations, refusals and any `extra` texts. Independent of which entities a model is trained on.
pub fn build_vocab(corpus: &Corpus, demos: &[Example], extra: &[String]) -> Result<Vocab> {
    let mut texts: Vec<String> = Vec::new();
    for e in &corpus.entities {
        texts.extend(entity_examples(e).into_iter().flat_map(|x| [x.prompt, x.completion]));
        for item in corpus.entity_eval_items(e)? {
            texts.push(item.paraphrased_answer);
            texts.extend(item.perturbed_answers);
        }
    }
    for item in corpus
        .retain_facts
        .iter()
        .chain(&corpus.world_facts)
        .chain(&corpus.real_authors)
    {
        texts.push(format!("{} {} {}", item.question, item.answer, item.paraphrased_answer));
        texts.extend(item.perturbed_answers.iter().cloned());
    }
    texts.extend(all_value_pools().flat_map(|p| p.values.iter().map(|v| v.to_string())));
    texts.extend(template_texts());
    texts.extend(demos.iter().flat_map(|d| [d.prompt.clone(), d.completion.clone()]));
    texts.extend(default_refusals());
    texts.extend(extra.iter().cloned());
    let mut seen = HashSet::new();
    texts.retain(|t| seen.insert(t.clone()));
    Ok(Vocab::build(texts.iter().map(String::as_str)))
}
