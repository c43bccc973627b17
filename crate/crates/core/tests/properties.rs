use std::collections::HashSet;

use proptest::prelude::*;

use entity_unlearn::corpus::{
    generate_world, roles_disjoint, split_sets, EntityProfile, KnowledgeSet, QaItem, Role, WorldParams,
};
use entity_unlearn::lm::{greedy_decode, score, ModelConfig, ModelHandle, Vocab};
use entity_unlearn::lm::{LanguageModel, ScoredContinuation};
use entity_unlearn::metrics::{
    accuracy_from_scores, harmonic_mean, knowledge_coverage, ks_two_sample, model_utility, option_share,
    rouge_l_recall, ExactMatch, OptionScores, SetMetrics, TokenF1,
};
use entity_unlearn::probe::{build_forget_set, replace_with_target, self_verify, ProbeConfig};
use entity_unlearn::text::normalize;
use entity_unlearn::Result;

/// Canned model: asks a topic question with the name in it, answers with a fixed
/// sentence, and always picks option A when verifying.
struct Canned;

impl LanguageModel for Canned {
    fn score(&self, _prompt: &str, _continuation: &str) -> Result<ScoredContinuation> {
        unimplemented!("the probe never scores")
    }

    fn greedy(&self, prompt: &str, _max_tokens: usize) -> Result<String> {
        if let Some(rest) = prompt.strip_prefix("Ask a question about ") {
            let (name, topic) = rest.split_once(" on the topic of ").expect("question prompt");
            let topic = topic.split('.').next().unwrap_or("");
            return Ok(format!("What about the {topic} of {name}?"));
        }
        if prompt.starts_with("Question:") {
            return Ok("Yes, A".into());
        }
        Ok("Nothing is known.".into())
    }
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["ivo", "marr", "born", "in", "avaria", "the", "a", "poem", "1950"]),
        1..8,
    )
    .prop_map(|w| w.join(" "))
}

fn qa_items(max: usize) -> impl Strategy<Value = Vec<QaItem>> {
    prop::collection::vec((words(), words()).prop_map(|(q, a)| QaItem::new(q + "?", a)), 1..max)
}

fn log_probs() -> impl Strategy<Value = f64> {
    -20.0f64..0.0
}

fn option_scores() -> impl Strategy<Value = OptionScores> {
    (log_probs(), prop::collection::vec(log_probs(), 5))
        .prop_map(|(paraphrase, perturbed)| OptionScores { paraphrase, perturbed })
}

fn tiny_model(seed: u64) -> ModelHandle {
    let vocab = Vocab::build(["Q: where was ivo marr born ?\nA: ivo marr was born in avaria ."].into_iter());
    let cfg = ModelConfig {
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        context_length: 24,
    };
    ModelHandle::init_with_std(vocab, cfg, seed, 0.5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rouge_is_a_fraction(r in words(), h in words()) {
        let v = rouge_l_recall(&r, &h).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(rouge_l_recall(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn ks_is_symmetric_and_bounded(
        xs in prop::collection::vec(0.0f64..1.0, 1..30),
        ys in prop::collection::vec(0.0f64..1.0, 1..30),
    ) {
        let a = ks_two_sample(&xs, &ys).unwrap();
        let b = ks_two_sample(&ys, &xs).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a.statistic) && (0.0..=1.0).contains(&a.p_value));
        let same = ks_two_sample(&xs, &xs).unwrap();
        prop_assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
    }

    #[test]
    fn truth_ratio_is_clamped(s in option_scores()) {
        let tr = s.truth_ratio();
        prop_assert!(tr > 0.0 && tr <= 1.0);
        let share = option_share(s.paraphrase, &s.perturbed);
        prop_assert!((0.0..=1.0).contains(&share));
    }

    #[test]
    fn accuracy_ignores_monotone_transforms(scores in prop::collection::vec(option_scores(), 1..20), k in 0.1f64..5.0, c in -3.0f64..3.0) {
        let f = |x: f64| k * x.powi(3) + c;
        let mapped: Vec<OptionScores> = scores
            .iter()
            .map(|s| OptionScores { paraphrase: f(s.paraphrase), perturbed: s.perturbed.iter().map(|&p| f(p)).collect() })
            .collect();
        let a = accuracy_from_scores(&scores);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, accuracy_from_scores(&mapped));
    }

    #[test]
    fn model_utility_is_symmetric_and_below_the_mean(vals in prop::collection::vec(0.01f64..1.0, 9), rot in 0usize..9) {
        let sets = |v: &[f64]| -> Vec<SetMetrics> {
            v.chunks(3).map(|c| SetMetrics { probability: c[0], rouge: c[1], accuracy: c[2] }).collect()
        };
        let mut rotated = vals.clone();
        rotated.rotate_left(rot);
        let a = model_utility(&sets(&vals)).unwrap().value;
        let b = model_utility(&sets(&rotated)).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
        let mean = vals.iter().sum::<f64>() / 9.0;
        prop_assert!(a <= mean + 1e-12);
        prop_assert!((a - harmonic_mean(&vals).unwrap().value).abs() < 1e-15);
    }

    #[test]
    fn coverage_is_bounded_and_full_on_itself(forget in qa_items(12), target in qa_items(12)) {
        let kc = knowledge_coverage(&forget, &target, &TokenF1);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&kc));
        let mut uniq = Vec::new();
        let mut seen = HashSet::new();
        for t in &target {
            if seen.insert((normalize(&t.question), normalize(&t.answer))) {
                uniq.push(t.clone());
            }
        }
        prop_assert_eq!(knowledge_coverage(&uniq, &uniq, &ExactMatch), 1.0);
    }

    #[test]
    fn replacement_fraction_is_exact_and_coverage_grows(seed in 0u64..1000, n in 1usize..15) {
        let corpus = generate_world(&WorldParams::new(seed, 2, 15, 4, 4)).unwrap();
        let entity = &corpus.entities[0];
        let forget: Vec<QaItem> = (0..n)
            .map(|i| QaItem::new(format!("Is {} known for thing {i}?", entity.name), format!("Maybe thing {i}.")))
            .collect();
        let forget = KnowledgeSet::new(Role::Forget, forget);
        let targets: HashSet<&str> = entity.facts.iter().map(|f| f.question.as_str()).collect();
        let mut last = -1.0;
        for r in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let out = replace_with_target(&forget, &entity.facts, r, seed).unwrap();
            prop_assert_eq!(out.len(), n);
            let hits = out.items.iter().filter(|i| targets.contains(i.question.as_str())).count();
            prop_assert_eq!(hits, (r * n as f64).round() as usize);
            let kc = knowledge_coverage(&out.items, &entity.facts, &TokenF1);
            prop_assert!(kc >= last - 1e-12, "coverage fell from {} to {} at r={}", last, kc, r);
            last = kc;
        }
    }

    #[test]
    fn world_is_pure_and_sets_are_disjoint(seed in 0u64..10_000, n in 2usize..5, facts in 5usize..10) {
        let p = WorldParams::new(seed, n, facts, 8, 8);
        let a = generate_world(&p).unwrap();
        prop_assert_eq!(a.to_json().unwrap(), generate_world(&p).unwrap().to_json().unwrap());
        let shared: Vec<&str> = a.retain_facts.iter().chain(&a.world_facts).map(|i| i.question.as_str()).collect();
        for e in &a.entities {
            prop_assert!(e.facts.iter().all(|f| f.question.contains(&e.name)));
            prop_assert!(shared.iter().all(|q| !q.contains(&e.name)));
            let sets = split_sets(&a, &e.entity_id).unwrap();
            prop_assert!(roles_disjoint(&sets));
            for item in sets.values().flat_map(|s| &s.items) {
                prop_assert!(item.validate().is_ok());
            }
        }
    }

    #[test]
    fn token_scores_are_log_probabilities(seed in 0u64..1000) {
        let m = tiny_model(seed);
        let s = score(&m, "Q: where was ivo marr born ?\nA:", "ivo marr was born in avaria .").unwrap();
        prop_assert!(s.per_token_logprob.iter().all(|&l| l <= 0.0));
        prop_assert!((s.per_token_logprob.iter().sum::<f64>() - s.total_logprob).abs() < 1e-12);
        let a = greedy_decode(&m, "Q: where was ivo marr born ?\nA:", 6).unwrap();
        prop_assert_eq!(a, greedy_decode(&m, "Q: where was ivo marr born ?\nA:", 6).unwrap());
    }

    #[test]
    fn probe_keeps_named_unique_items(seed in 0u64..1000, target in 1usize..25) {
        let entity = EntityProfile {
            entity_id: "e0".into(),
            name: "Ivo Marr".into(),
            facts: Vec::new(),
            origin_phase: Default::default(),
        };
        let cfg = ProbeConfig { seed, target_size: target, verify_rounds: 1, max_rounds: 8, ..ProbeConfig::default() };
        let r = build_forget_set(&Canned, &entity, &cfg).unwrap();
        prop_assert!(r.forget_set.len() <= target);
        prop_assert!(r.forget_set.items.iter().all(|i| i.question.contains("Ivo Marr")));
        let uniq: HashSet<String> = r.forget_set.items.iter().map(|i| normalize(&i.question)).collect();
        prop_assert_eq!(uniq.len(), r.forget_set.len());
        prop_assert_eq!(r.shortfall, r.forget_set.len() < target);
        let again = build_forget_set(&Canned, &entity, &cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    }
}

#[test]
fn position_biased_stub_accepts_at_the_analytic_rate() {
    let n = 1000;
    let accepted = (0..n)
        .filter(|i| {
            let item = QaItem::new(format!("What is fact number {i} about Ivo Marr?"), "It is known.");
            self_verify(&Canned, &item, 5, 7).unwrap()
        })
        .count();
    let rate = accepted as f64 / n as f64;
    assert!((rate - 0.5f64.powi(5)).abs() <= 0.02, "acceptance rate {rate}");
}
