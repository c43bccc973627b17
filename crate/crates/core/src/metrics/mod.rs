//! Evaluation quantities: ROUGE-L recall, normalized probabilities, accuracy, truth ratio,
//! KS forget quality, knowledge coverage and the harmonic-mean aggregates.

pub mod coverage;
pub mod ks;
pub mod report;

use crate::corpus::{EvalItem, N_PERTURBATIONS};
use crate::error::{Error, Result};
use crate::lm::{qa_prompt, LanguageModel};
use crate::text::metric_tokens;

pub use coverage::{knowledge_coverage, token_f1_similarity, ExactMatch, SimilarityScorer, TokenF1};
pub use ks::{kolmogorov_q, ks_two_sample, KsResult};
pub use report::{evaluate, evaluate_set, forget_quality, truth_ratios, EvalOptions, MetricReport, SetMetrics};

/// Length of the longest common subsequence of two token lists.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS(reference, hypothesis) / |reference| over normalized whitespace tokens.
pub fn rouge_l_recall(reference: &str, hypothesis: &str) -> Result<f64> {
    let r = metric_tokens(reference);
    if r.is_empty() {
        return Err(Error::Domain("ROUGE-L reference has no tokens".into()));
    }
    let h = metric_tokens(hypothesis);
    Ok(lcs_len(&r, &h) as f64 / r.len() as f64)
}

/// Mean per-token log-probability of `a` given `q` in the QA frame.
pub fn log_norm_prob<M: LanguageModel + ?Sized>(model: &M, q: &str, a: &str) -> Result<f64> {
    let s = model.score(&qa_prompt(q), a)?;
    if s.degenerate {
        return Err(Error::Domain(format!("empty answer for question `{q}`")));
    }
    Ok(s.total_logprob / s.per_token_logprob.len() as f64)
}

/// `P(a|q)^(1/|a|)`.
pub fn norm_prob<M: LanguageModel + ?Sized>(model: &M, q: &str, a: &str) -> Result<f64> {
    Ok(log_norm_prob(model, q, a)?.exp())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Share of the correct answer among the correct and perturbed answers, from
/// their log normalized probabilities (`correct` first).
pub fn option_share(correct: f64, perturbed: &[f64]) -> f64 {
    let mut all = Vec::with_capacity(perturbed.len() + 1);
    all.push(correct);
    all.extend_from_slice(perturbed);
    (correct - log_sum_exp(&all)).exp()
}

pub fn norm_prob_ratio<M: LanguageModel + ?Sized>(model: &M, item: &EvalItem) -> Result<f64> {
    item.validate()?;
    let a = log_norm_prob(model, &item.question, &item.answer)?;
    let perts = perturbed_log_probs(model, item)?;
    Ok(option_share(a, &perts))
}

fn perturbed_log_probs<M: LanguageModel + ?Sized>(model: &M, item: &EvalItem) -> Result<Vec<f64>> {
    item.perturbed_answers
        .iter()
        .map(|p| log_norm_prob(model, &item.question, p))
        .collect()
}

/// Paraphrase and perturbation log normalized probabilities of one item.
#[derive(Clone, Debug, PartialEq)]
pub struct OptionScores {
    pub paraphrase: f64,
    pub perturbed: Vec<f64>,
}

impl OptionScores {
    pub fn of<M: LanguageModel + ?Sized>(model: &M, item: &EvalItem) -> Result<Self> {
        item.validate()?;
        Ok(Self {
            paraphrase: log_norm_prob(model, &item.question, &item.paraphrased_answer)?,
            perturbed: perturbed_log_probs(model, item)?,
        })
    }

    /// The paraphrase wins only if strictly above every perturbation.
    pub fn paraphrase_selected(&self) -> bool {
        self.perturbed.iter().all(|&p| self.paraphrase > p)
    }

    /// `min(R, 1/R)` with `R` = mean perturbed probability over paraphrase probability.
    pub fn truth_ratio(&self) -> f64 {
        let log_mean = log_sum_exp(&self.perturbed) - (self.perturbed.len() as f64).ln();
        let log_r = log_mean - self.paraphrase;
        (-log_r.abs()).exp()
    }
}

/// Fraction of items whose paraphrase strictly beats all perturbations.
pub fn accuracy_from_scores(scores: &[OptionScores]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|s| s.paraphrase_selected()).count() as f64 / scores.len() as f64
}

pub fn accuracy<M: LanguageModel + ?Sized>(model: &M, items: &[EvalItem]) -> Result<f64> {
    let scores = items
        .iter()
        .map(|i| OptionScores::of(model, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(accuracy_from_scores(&scores))
}

pub fn truth_ratio<M: LanguageModel + ?Sized>(model: &M, item: &EvalItem) -> Result<f64> {
    Ok(OptionScores::of(model, item)?.truth_ratio())
}

/// `n / Σ 1/vᵢ`; any non-positive value makes the mean 0 and sets the flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicMean {
    pub value: f64,
    pub zero_dominated: bool,
}

pub fn harmonic_mean(values: &[f64]) -> Result<HarmonicMean> {
    if values.is_empty() {
        return Err(Error::Domain("harmonic mean of an empty list".into()));
    }
    if values.iter().any(|&v| v <= 0.0) {
        return Ok(HarmonicMean {
            value: 0.0,
            zero_dominated: true,
        });
    }
    let inv: f64 = values.iter().map(|v| 1.0 / v).sum();
    Ok(HarmonicMean {
        value: values.len() as f64 / inv,
        zero_dominated: false,
    })
}

pub fn set_score(m: &SetMetrics) -> HarmonicMean {
    harmonic_mean(&[m.probability, m.rouge, m.accuracy]).expect("three values")
}

/// Harmonic mean of the nine utility values (three sets × probability, ROUGE, accuracy).
pub fn model_utility(sets: &[SetMetrics]) -> Result<HarmonicMean> {
    let vals: Vec<f64> = sets.iter().flat_map(|m| [m.probability, m.rouge, m.accuracy]).collect();
    harmonic_mean(&vals)
}

const _: () = assert!(N_PERTURBATIONS == 5);

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::lm::{ScoredContinuation, TokenId};
    use std::collections::HashMap;

    /// A model whose per-token log-probability for a continuation is looked up by text.
    pub(crate) struct TableModel {
        pub per_token: HashMap<String, f64>,
        pub default: f64,
        pub greedy_out: String,
    }

    impl LanguageModel for TableModel {
        fn score(&self, _prompt: &str, continuation: &str) -> Result<ScoredContinuation> {
            let n = continuation.split_whitespace().count();
            let lp = *self.per_token.get(continuation).unwrap_or(&self.default);
            Ok(ScoredContinuation {
                prompt_tokens: vec![],
                continuation_tokens: vec![0 as TokenId; n],
                per_token_logprob: vec![lp; n],
                total_logprob: lp * n as f64,
                degenerate: n == 0,
            })
        }
        fn greedy(&self, _prompt: &str, _max: usize) -> Result<String> {
            Ok(self.greedy_out.clone())
        }
    }

    pub(crate) fn item() -> EvalItem {
        EvalItem {
            question: "Where was Ivo Marr born?".into(),
            answer: "Ivo Marr was born in Avaria.".into(),
            paraphrased_answer: "Avaria is the birthplace of Ivo Marr.".into(),
            perturbed_answers: ["Brenn", "Calderon", "Dunmere", "Elsworth", "Farrowgate"]
                .iter()
                .map(|c| format!("{c} is the birthplace of Ivo Marr."))
                .collect(),
        }
    }

    fn table(pairs: &[(&str, f64)], default: f64) -> TableModel {
        TableModel {
            per_token: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            default,
            greedy_out: String::new(),
        }
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l_recall("a b c d", "a x c").unwrap(), 0.5);
        assert_eq!(rouge_l_recall("Ivo was born.", "ivo was born").unwrap(), 1.0);
        assert_eq!(rouge_l_recall("a b", "c d").unwrap(), 0.0);
        assert!(rouge_l_recall("...", "a").is_err());
    }

    #[test]
    fn uniform_scores_give_one_sixth_and_unit_truth_ratio() {
        let m = table(&[], -2.0);
        let it = item();
        assert!((norm_prob_ratio(&m, &it).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert!((truth_ratio(&m, &it).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(accuracy(&m, &[it]).unwrap(), 0.0);
    }

    #[test]
    fn paraphrase_strictly_highest_is_accurate() {
        let it = item();
        let m = table(&[(it.paraphrased_answer.as_str(), -0.1)], -3.0);
        assert_eq!(accuracy(&m, &[it.clone(), it.clone()]).unwrap(), 1.0);
        let r = truth_ratio(&m, &it).unwrap();
        assert!(r > 0.0 && r < 1.0);
    }

    #[test]
    fn truth_ratio_reciprocal_clamp() {
        let s = OptionScores {
            paraphrase: 0.25f64.ln(),
            perturbed: vec![1f64.ln(); 5],
        };
        assert!((s.truth_ratio() - 0.25).abs() < 1e-12);
        let s = OptionScores {
            paraphrase: 1f64.ln(),
            perturbed: vec![0.25f64.ln(); 5],
        };
        assert!((s.truth_ratio() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn shares_sum_to_one() {
        let lps = [-0.3, -1.2, -2.0, -0.7, -4.0, -1.1];
        let total: f64 = (0..6)
            .map(|i| {
                let rest: Vec<f64> = lps
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, v)| *v)
                    .collect();
                option_share(lps[i], &rest)
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(option_share(-0.1, &[-800.0; 5]) > 1.0 - 1e-12);
    }

    #[test]
    fn harmonic_examples() {
        assert!((harmonic_mean(&[0.5, 1.0]).unwrap().value - 2.0 / 3.0).abs() < 1e-12);
        assert!((harmonic_mean(&[0.3; 9]).unwrap().value - 0.3).abs() < 1e-12);
        let z = harmonic_mean(&[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.zero_dominated);
        assert!(harmonic_mean(&[]).is_err());
    }

    #[test]
    fn lcs_matches_hand_values() {
        assert_eq!(lcs_len(&[1, 2, 3, 4], &[1, 9, 3]), 2);
        assert_eq!(lcs_len::<u8>(&[], &[1]), 0);
        assert_eq!(lcs_len(&[1, 2, 1, 2], &[2, 1, 2, 1]), 3);
    }

    #[test]
    fn empty_answer_is_domain_error() {
        let m = table(&[], -1.0);
        assert!(matches!(norm_prob(&m, "q", ""), Err(Error::Domain(_))));
    }
}
