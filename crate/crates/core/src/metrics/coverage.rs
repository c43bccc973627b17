//! Knowledge coverage of a forget set with respect to a target set.

use std::collections::HashMap;

use crate::corpus::AsQa;
use crate::text::metric_tokens;

/// Pairwise similarity of two QA items in `[0, 1]`; identical items score 1.
pub trait SimilarityScorer {
    fn similarity(&self, x: &dyn AsQa, y: &dyn AsQa) -> f64;
}

/// Token-multiset F1 over the normalized `question answer` text.
#[derive(Clone, Copy, Debug, Default)]
pub struct TokenF1;

impl SimilarityScorer for TokenF1 {
    fn similarity(&self, x: &dyn AsQa, y: &dyn AsQa) -> f64 {
        token_f1_similarity(x, y)
    }
}

/// 1 when question and answer match after normalization, else 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactMatch;

impl SimilarityScorer for ExactMatch {
    fn similarity(&self, x: &dyn AsQa, y: &dyn AsQa) -> f64 {
        let same = metric_tokens(x.question()) == metric_tokens(y.question())
            && metric_tokens(x.answer()) == metric_tokens(y.answer());
        if same {
            1.0
        } else {
            0.0
        }
    }
}

fn qa_tokens(x: &dyn AsQa) -> Vec<String> {
    let mut t = metric_tokens(x.question());
    t.extend(metric_tokens(x.answer()));
    t
}

pub fn token_f1_similarity(x: &dyn AsQa, y: &dyn AsQa) -> f64 {
    let (a, b) = (qa_tokens(x), qa_tokens(y));
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &a {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &b {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    2.0 * overlap as f64 / (a.len() + b.len()) as f64
}

/// Σ_k M(k) / |target| where M(k) is the best similarity among forget items whose
/// best-matching target is k (0 when none maps to k). Argmax ties go to the lowest index.
pub fn knowledge_coverage<F: AsQa, T: AsQa>(forget: &[F], target: &[T], scorer: &dyn SimilarityScorer) -> f64 {
    if forget.is_empty() || target.is_empty() {
        return 0.0;
    }
    let mut best = vec![0.0f64; target.len()];
    for f in forget {
        let (k, s) = target
            .iter()
            .enumerate()
            .map(|(j, t)| (j, scorer.similarity(f, t)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        best[k] = best[k].max(s);
    }
    best.iter().sum::<f64>() / target.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QaItem;

    #[test]
    fn token_f1_examples() {
        let a = QaItem::new("a b", "c");
        let b = QaItem::new("a b", "d");
        assert!((token_f1_similarity(&a, &b) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(token_f1_similarity(&a, &a), 1.0);
        assert_eq!(token_f1_similarity(&a, &QaItem::new("x", "y")), 0.0);
        assert_eq!(token_f1_similarity(&QaItem::new("", ""), &QaItem::new("", "")), 0.0);
    }

    #[test]
    fn identical_sets_cover_fully() {
        let s: Vec<QaItem> = (0..7)
            .map(|i| QaItem::new(format!("q{i} about x"), format!("a{i}")))
            .collect();
        assert_eq!(knowledge_coverage(&s, &s, &ExactMatch), 1.0);
        assert_eq!(knowledge_coverage(&s, &s, &TokenF1), 1.0);
    }

    #[test]
    fn single_forget_item_bounds_coverage() {
        let t: Vec<QaItem> = (0..4).map(|i| QaItem::new(format!("q{i}"), "a")).collect();
        let kc = knowledge_coverage(&t[..1], &t, &TokenF1);
        assert!(kc <= 0.25 + 1e-12);
    }
}
