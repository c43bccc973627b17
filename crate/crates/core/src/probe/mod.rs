//! Forget-set construction by probing the model with only an entity's name:
//! question generation, greedy answering, and multi-round self-verification.

pub mod demos;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::pools::ENTITY_FACTS;
use crate::corpus::{AsQa, EntityProfile, KnowledgeSet, QaItem, Role};
use crate::error::{Error, Result};
use crate::lm::{qa_prompt, LanguageModel};
use crate::metrics::token_f1_similarity;
use crate::rng;
use crate::text::normalize;

pub use demos::{demo_entities, probe_demonstrations, probe_variant, verification_demos, DemoParams};

pub const SCHEMA_VERSION: u32 = 1;

const QUESTION_TEMPLATE: &str = include_str!("../../templates/question_generation.txt");
const VERIFY_TEMPLATE: &str = include_str!("../../templates/verification.txt");
const PROBE_QUESTIONS: &str = include_str!("../../templates/probe_questions.txt");

/// Prompt asking the model for a question about `name` on `topic`.
pub fn question_prompt(name: &str, topic: &str) -> String {
    QUESTION_TEMPLATE
        .trim_end()
        .replace("{name}", name)
        .replace("{topic}", topic)
}

/// Yes/No verification prompt; `yes_first` puts "Yes" behind option A.
pub fn verification_prompt(question: &str, answer: &str, yes_first: bool) -> String {
    let (a, b) = if yes_first { ("Yes", "No") } else { ("No", "Yes") };
    VERIFY_TEMPLATE
        .trim_end()
        .replace("{question}", question)
        .replace("{answer}", answer)
        .replace("{option_a}", a)
        .replace("{option_b}", b)
}

/// Probe-style phrasing of an attribute question, keyed by attribute.
pub fn probe_question(key: &str, name: &str) -> Option<String> {
    PROBE_QUESTIONS
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split_once('\t'))
        .find(|(k, _)| *k == key)
        .map(|(_, q)| q.replace("{n}", name))
}

/// Every text fragment the probe prompts can contain, for vocabulary building.
pub fn template_texts() -> Vec<String> {
    let mut out = vec![
        question_prompt("", ""),
        verification_prompt("", "", true),
        "A B Yes No".to_string(),
    ];
    out.extend(ENTITY_FACTS.iter().map(|t| t.topic.to_string()));
    out.extend(
        PROBE_QUESTIONS
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(str::to_string),
    );
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub questions_per_round: usize,
    pub verify_rounds: usize,
    pub target_size: usize,
    pub max_rounds: usize,
    /// Canonicalization used for deduplication; only `lower_strip_collapse` exists.
    pub normalization: String,
    pub seed: u64,
    pub max_question_tokens: usize,
    pub max_answer_tokens: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            questions_per_round: 10,
            verify_rounds: 5,
            target_size: 20,
            max_rounds: 60,
            normalization: "lower_strip_collapse".into(),
            seed: 0,
            max_question_tokens: 20,
            max_answer_tokens: 24,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.verify_rounds == 0 {
            return Err(Error::Config("verify_rounds must be at least 1".into()));
        }
        if self.target_size == 0 {
            return Err(Error::Config("target_size must be at least 1".into()));
        }
        if self.questions_per_round == 0 {
            return Err(Error::Config("questions_per_round must be at least 1".into()));
        }
        if self.normalization != "lower_strip_collapse" {
            return Err(Error::Config(format!("unknown normalization `{}`", self.normalization)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Duplicate,
    MissingName,
    FailedVerification,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub item: QaItem,
    pub reason: RejectReason,
    pub round: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub schema_version: u32,
    pub entity_name: String,
    pub forget_set: KnowledgeSet<QaItem>,
    pub rounds_used: usize,
    pub rejected: Vec<Rejected>,
    /// Set when `max_rounds` ran out before `target_size` items were verified.
    pub shortfall: bool,
}

/// Stage-1 candidates for one round: generated questions split into kept and rejected.
pub fn generate_candidates<M: LanguageModel + ?Sized>(
    model: &M,
    entity_name: &str,
    k: usize,
    max_tokens: usize,
    seed: u64,
) -> Result<(Vec<String>, Vec<(String, RejectReason)>)> {
    let mut rng = rng::stream(seed, "probe_topics", 0);
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..k {
        let topic = ENTITY_FACTS[rng.random_range(0..ENTITY_FACTS.len())].topic;
        let q = model.greedy(&question_prompt(entity_name, topic), max_tokens)?;
        let q = q.lines().next().unwrap_or("").trim().to_string();
        if q.is_empty() {
            continue;
        }
        if !q.contains(entity_name) {
            rejected.push((q, RejectReason::MissingName));
        } else if !seen.insert(normalize(&q)) {
            rejected.push((q, RejectReason::Duplicate));
        } else {
            kept.push(q);
        }
    }
    Ok((kept, rejected))
}

/// Up to `k` distinct questions about `entity_name` that mention it verbatim.
pub fn generate_questions<M: LanguageModel + ?Sized>(
    model: &M,
    entity_name: &str,
    k: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(generate_candidates(model, entity_name, k, ProbeConfig::default().max_question_tokens, seed)?.0)
}

/// Greedy answers; questions with an empty decode come back in the second list.
pub fn answer_questions<M: LanguageModel + ?Sized>(
    model: &M,
    questions: &[String],
    max_tokens: usize,
) -> Result<(Vec<QaItem>, Vec<QaItem>)> {
    let mut answered = Vec::new();
    let mut empty = Vec::new();
    for q in questions {
        let a = model.greedy(&qa_prompt(q), max_tokens)?;
        let a = a.lines().next().unwrap_or("").trim().to_string();
        if a.is_empty() {
            empty.push(QaItem::new(q.clone(), a));
        } else {
            answered.push(QaItem::new(q.clone(), a));
        }
    }
    Ok((answered, empty))
}

/// Reads the option letter the model picked: the last word of its output, which may be
/// preceded by the judgment it stands for. Anything else is `None`.
fn parse_choice(output: &str) -> Option<char> {
    let last = output.split_whitespace().last()?;
    let letter: String = last.chars().filter(|c| c.is_alphanumeric()).collect();
    match letter.as_str() {
        "A" => Some('A'),
        "B" => Some('B'),
        _ => None,
    }
}

/// True iff the model picks the "Yes" option in every round, with the Yes/No positions
/// shuffled independently per round. Unparseable output counts as No.
pub fn self_verify<M: LanguageModel + ?Sized>(model: &M, item: &QaItem, rounds: usize, seed: u64) -> Result<bool> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let item_seed = rng::derive_seed(seed, &item.question, 0);
    for r in 0..rounds {
        let yes_first = rng::stream(item_seed, "verify", r as u64).random_bool(0.5);
        let out = model.greedy(&verification_prompt(&item.question, &item.answer, yes_first), 4)?;
        let yes = match parse_choice(&out) {
            Some('A') => yes_first,
            Some('B') => !yes_first,
            _ => false,
        };
        if !yes {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Repeats generate → answer → verify rounds until `target_size` items are verified or
/// `max_rounds` is exhausted. Round `r` draws its randomness from `(seed, r)` alone.
pub fn build_forget_set<M: LanguageModel + ?Sized>(
    model: &M,
    entity: &EntityProfile,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    cfg.validate()?;
    let name = entity.name.as_str();
    let mut kept: Vec<QaItem> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut rejected = Vec::new();
    let mut rounds_used = 0;
    while kept.len() < cfg.target_size && rounds_used < cfg.max_rounds {
        let round = rounds_used;
        rounds_used += 1;
        let round_seed = rng::derive_seed(cfg.seed, "probe_round", round as u64);
        let (questions, bad) = generate_candidates(
            model,
            name,
            cfg.questions_per_round,
            cfg.max_question_tokens,
            round_seed,
        )?;
        for (q, reason) in bad {
            rejected.push(Rejected {
                item: QaItem::new(q, ""),
                reason,
                round,
            });
        }
        let mut fresh = Vec::new();
        for q in questions {
            if seen.contains(&normalize(&q)) {
                rejected.push(Rejected {
                    item: QaItem::new(q, ""),
                    reason: RejectReason::Duplicate,
                    round,
                });
            } else {
                fresh.push(q);
            }
        }
        let (answered, empty) = answer_questions(model, &fresh, cfg.max_answer_tokens)?;
        for item in empty {
            rejected.push(Rejected {
                item,
                reason: RejectReason::FailedVerification,
                round,
            });
        }
        for item in answered {
            if kept.len() >= cfg.target_size {
                break;
            }
            if self_verify(model, &item, cfg.verify_rounds, round_seed)? {
                seen.insert(normalize(&item.question));
                kept.push(item);
            } else {
                rejected.push(Rejected {
                    item,
                    reason: RejectReason::FailedVerification,
                    round,
                });
            }
        }
    }
    let shortfall = kept.len() < cfg.target_size;
    let mut forget_set = KnowledgeSet::new(Role::Forget, kept);
    forget_set.source_entity = Some(entity.entity_id.clone());
    Ok(ProbeResult {
        schema_version: SCHEMA_VERSION,
        entity_name: entity.name.clone(),
        forget_set,
        rounds_used,
        rejected,
        shortfall,
    })
}

/// Replaces `round(ratio·|forget|)` forget items with distinct target items.
///
/// The replaced positions are a prefix of one seeded permutation, so larger ratios
/// replace supersets. Each replaced item becomes its best token-F1 match in the target
/// set when that match is still unused, otherwise a random unused target item.
pub fn replace_with_target<T: AsQa>(
    forget: &KnowledgeSet<QaItem>,
    target: &[T],
    ratio: f64,
    seed: u64,
) -> Result<KnowledgeSet<QaItem>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Domain(format!("replacement ratio {ratio} outside [0, 1]")));
    }
    let n = forget.items.len();
    let k = (ratio * n as f64).round() as usize;
    if k > target.len() {
        return Err(Error::Capacity {
            pool: "target_set".into(),
            needed: k,
            available: target.len(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "replace_order", 0));
    let mut used = vec![false; target.len()];
    let mut fill_rng = rng::stream(seed, "replace_fill", 0);
    let mut items = forget.items.clone();
    for &i in &order[..k] {
        let best = (0..target.len())
            .map(|j| (j, token_f1_similarity(&forget.items[i], &target[j])))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
            .0;
        let pick = if !used[best] {
            best
        } else {
            let free: Vec<usize> = (0..target.len()).filter(|&j| !used[j]).collect();
            free[fill_rng.random_range(0..free.len())]
        };
        used[pick] = true;
        items[i] = QaItem::new(target[pick].question(), target[pick].answer());
    }
    Ok(KnowledgeSet {
        role: Role::Forget,
        source_entity: forget.source_entity.clone(),
        items,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::lm::ScoredContinuation;

    /// Always answers with a fixed string.
    pub(crate) struct Constant(pub &'static str);

    impl LanguageModel for Constant {
        fn score(&self, _: &str, _: &str) -> Result<ScoredContinuation> {
            unreachable!("probe never scores")
        }
        fn greedy(&self, _: &str, _: usize) -> Result<String> {
            Ok(self.0.to_string())
        }
    }

    /// Chooses the Yes option wherever it is.
    struct Truthful;

    impl LanguageModel for Truthful {
        fn score(&self, _: &str, _: &str) -> Result<ScoredContinuation> {
            unreachable!()
        }
        fn greedy(&self, prompt: &str, _: usize) -> Result<String> {
            if prompt.contains("A. Yes") {
                Ok("A".into())
            } else if prompt.contains("B. Yes") {
                Ok("B".into())
            } else {
                Ok("Where was Ivo Marr born?".into())
            }
        }
    }

    #[test]
    fn templates_parse() {
        assert_eq!(
            probe_question("birthplace", "Ivo Marr").unwrap(),
            "In which city was Ivo Marr born?"
        );
        for t in ENTITY_FACTS {
            let q = probe_question(t.key, "X Y").unwrap_or_else(|| panic!("no probe phrasing for {}", t.key));
            assert_ne!(normalize(&q), normalize(&t.question_for("X Y")), "{}", t.key);
        }
        let p = verification_prompt("q?", "a.", false);
        assert!(p.contains("A. No\nB. Yes"));
        assert!(question_prompt("Ivo Marr", "pet").ends_with("topic of pet.\nQ:"));
    }

    #[test]
    fn verification_rules() {
        let item = QaItem::new("Where was Ivo Marr born?", "Ivo Marr was born in Avaria.");
        assert!(self_verify(&Truthful, &item, 5, 0).unwrap());
        assert!(!self_verify(&Constant("maybe"), &item, 1, 0).unwrap());
        assert!(self_verify(&Constant("A"), &item, 0, 0).is_err());
        assert_eq!(parse_choice("B."), Some('B'));
        assert_eq!(parse_choice(" A"), Some('A'));
        assert_eq!(parse_choice("Yes"), None);
        assert_eq!(parse_choice("Yes, B"), Some('B'));
        assert_eq!(parse_choice("A maybe"), None);
    }

    #[test]
    fn candidate_filters() {
        let (kept, rejected) = generate_candidates(&Constant("Who is Ivo Marr?"), "Ivo Marr", 3, 10, 0).unwrap();
        assert_eq!(kept.len(), 1);
        assert!(rejected.iter().all(|r| r.1 == RejectReason::Duplicate));
        let (kept, rejected) = generate_candidates(&Constant("Who is Dana?"), "Ivo Marr", 5, 10, 0).unwrap();
        assert!(kept.is_empty());
        assert_eq!(rejected.len(), 5);
        assert!(rejected.iter().all(|r| r.1 == RejectReason::MissingName));
    }

    #[test]
    fn zero_rounds_is_a_flagged_empty_set() {
        let e = EntityProfile {
            entity_id: "e001".into(),
            name: "Ivo Marr".into(),
            facts: vec![],
            origin_phase: Default::default(),
        };
        let cfg = ProbeConfig {
            max_rounds: 0,
            ..Default::default()
        };
        let r = build_forget_set(&Truthful, &e, &cfg).unwrap();
        assert!(r.forget_set.is_empty());
        assert!(r.shortfall);
        assert_eq!(r.rounds_used, 0);
        let r = build_forget_set(
            &Truthful,
            &e,
            &ProbeConfig {
                max_rounds: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.forget_set.len(), 1);
        assert!(r.forget_set.items.iter().all(|i| i.question.contains("Ivo Marr")));
    }

    fn sets(n: usize) -> (KnowledgeSet<QaItem>, Vec<QaItem>) {
        let forget = (0..n)
            .map(|i| QaItem::new(format!("What about item {i} of Ivo?"), format!("It is v{i}.")))
            .collect();
        let target = (0..n)
            .map(|i| QaItem::new(format!("Tell item {i} of Ivo?"), format!("Value v{i}.")))
            .collect();
        (KnowledgeSet::new(Role::Forget, forget), target)
    }

    #[test]
    fn replacement_counts() {
        let (f, t) = sets(20);
        let tq: HashSet<&str> = t.iter().map(|i| i.question.as_str()).collect();
        assert_eq!(replace_with_target(&f, &t, 0.0, 1).unwrap(), f);
        let half = replace_with_target(&f, &t, 0.5, 1).unwrap();
        assert_eq!(
            half.items.iter().filter(|i| tq.contains(i.question.as_str())).count(),
            10
        );
        let full = replace_with_target(&f, &t, 1.0, 1).unwrap();
        let mut a: Vec<_> = full.items.iter().map(|i| i.question.clone()).collect();
        let mut b: Vec<_> = t.iter().map(|i| i.question.clone()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!(matches!(replace_with_target(&f, &t, 1.5, 1), Err(Error::Domain(_))));
    }
}
