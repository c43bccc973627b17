//! Full metric bundle for one model state.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{ks_two_sample, model_utility, option_share, rouge_l_recall, set_score, OptionScores};
use crate::corpus::{EvalItem, KnowledgeSet, Role};
use crate::error::{Error, Result};
use crate::lm::{qa_prompt, LanguageModel};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub max_decode_tokens: usize,
    /// Sets larger than this are evaluated on a fixed seeded subsample.
    pub max_items_per_set: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            max_decode_tokens: 32,
            max_items_per_set: 40,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    #[serde(with = "r6")]
    pub probability: f64,
    #[serde(with = "r6")]
    pub rouge: f64,
    #[serde(with = "r6")]
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_set: BTreeMap<Role, SetMetrics>,
    #[serde(with = "r6::map_vec")]
    pub truth_ratios: BTreeMap<Role, Vec<f64>>,
    #[serde(with = "r6::option")]
    pub forget_quality: Option<f64>,
    #[serde(with = "r6::map")]
    pub set_scores: BTreeMap<Role, f64>,
    #[serde(with = "r6")]
    pub model_utility: f64,
    /// Notes such as zero-dominated harmonic means.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl MetricReport {
    pub fn set_score(&self, role: Role) -> f64 {
        self.set_scores.get(&role).copied().unwrap_or(0.0)
    }

    pub fn probability(&self, role: Role) -> f64 {
        self.per_set.get(&role).map_or(0.0, |m| m.probability)
    }

    pub fn rouge(&self, role: Role) -> f64 {
        self.per_set.get(&role).map_or(0.0, |m| m.rouge)
    }

    /// Arithmetic mean of reports over entities; truth-ratio lists are concatenated.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let n = reports.len().max(1) as f64;
        let mut out = MetricReport::default();
        for r in reports {
            for (role, m) in &r.per_set {
                let e = out.per_set.entry(*role).or_default();
                e.probability += m.probability / n;
                e.rouge += m.rouge / n;
                e.accuracy += m.accuracy / n;
            }
            for (role, v) in &r.truth_ratios {
                out.truth_ratios.entry(*role).or_default().extend(v);
            }
            for (role, v) in &r.set_scores {
                *out.set_scores.entry(*role).or_default() += v / n;
            }
            out.model_utility += r.model_utility / n;
            for f in &r.flags {
                if !out.flags.contains(f) {
                    out.flags.push(f.clone());
                }
            }
        }
        let fqs: Vec<f64> = reports.iter().filter_map(|r| r.forget_quality).collect();
        if !fqs.is_empty() {
            out.forget_quality = Some(fqs.iter().sum::<f64>() / fqs.len() as f64);
        }
        out
    }
}

fn subsample<'a>(items: &'a [EvalItem], role: Role, opts: &EvalOptions) -> Vec<&'a EvalItem> {
    if items.len() <= opts.max_items_per_set {
        return items.iter().collect();
    }
    let mut rng = rng::stream(opts.seed, role.as_str(), 0);
    let mut idx = sample(&mut rng, items.len(), opts.max_items_per_set).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| &items[i]).collect()
}

/// Probability, ROUGE, accuracy and truth ratios for one set.
pub fn evaluate_set<M: LanguageModel + ?Sized>(
    model: &M,
    role: Role,
    items: &[&EvalItem],
    opts: &EvalOptions,
) -> Result<(SetMetrics, Vec<f64>)> {
    if items.is_empty() {
        return Err(Error::Domain(format!("evaluation set `{role}` is empty")));
    }
    let (mut prob, mut rouge, mut correct) = (0.0, 0.0, 0usize);
    let mut ratios = Vec::with_capacity(items.len());
    for item in items {
        let opt = OptionScores::of(model, item)?;
        let a = super::log_norm_prob(model, &item.question, &item.answer)?;
        prob += if role.uses_option_ratio() {
            option_share(a, &opt.perturbed)
        } else {
            a.exp()
        };
        let hyp = model.greedy(&qa_prompt(&item.question), opts.max_decode_tokens)?;
        rouge += rouge_l_recall(&item.answer, &hyp)?;
        correct += opt.paraphrase_selected() as usize;
        ratios.push(opt.truth_ratio());
    }
    let n = items.len() as f64;
    Ok((
        SetMetrics {
            probability: prob / n,
            rouge: rouge / n,
            accuracy: correct as f64 / n,
        },
        ratios,
    ))
}

/// Evaluates every set; forget quality is filled when reference truth ratios for the
/// target set are supplied.
pub fn evaluate<M: LanguageModel + ?Sized>(
    model: &M,
    sets: &BTreeMap<Role, KnowledgeSet>,
    reference_truth_ratios: Option<&[f64]>,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    for (role, set) in sets {
        let items = if *role == Role::Target {
            set.items.iter().collect()
        } else {
            subsample(&set.items, *role, opts)
        };
        let (m, ratios) = evaluate_set(model, *role, &items, opts)?;
        let hm = set_score(&m);
        if hm.zero_dominated {
            report.flags.push(format!("{role}: zero value in set score"));
        }
        report.set_scores.insert(*role, hm.value);
        report.per_set.insert(*role, m);
        report.truth_ratios.insert(*role, ratios);
    }
    let utility: Vec<SetMetrics> = Role::UTILITY
        .iter()
        .filter_map(|r| report.per_set.get(r).copied())
        .collect();
    if !utility.is_empty() {
        if utility.len() < Role::UTILITY.len() {
            report
                .flags
                .push("model_utility: computed over a partial set list".into());
        }
        let hm = model_utility(&utility)?;
        if hm.zero_dominated {
            report.flags.push("model_utility: zero value".into());
        }
        report.model_utility = hm.value;
    }
    if let (Some(reference), Some(ours)) = (reference_truth_ratios, report.truth_ratios.get(&Role::Target)) {
        if reference.len() != ours.len() {
            return Err(Error::Validation(format!(
                "reference has {} truth ratios, target set has {}",
                reference.len(),
                ours.len()
            )));
        }
        report.forget_quality = Some(ks_two_sample(ours, reference)?.p_value);
    }
    Ok(report)
}

pub fn truth_ratios<M: LanguageModel + ?Sized>(model: &M, items: &[EvalItem]) -> Result<Vec<f64>> {
    items
        .iter()
        .map(|i| Ok(OptionScores::of(model, i)?.truth_ratio()))
        .collect()
}

/// KS p-value between the truth-ratio distributions of two models on the same items.
pub fn forget_quality<A: LanguageModel + ?Sized, B: LanguageModel + ?Sized>(
    unlearned: &A,
    reference: &B,
    target_items: &[EvalItem],
) -> Result<f64> {
    if target_items.is_empty() {
        return Err(Error::Validation("forget quality needs target items".into()));
    }
    let x = truth_ratios(unlearned, target_items)?;
    let y = truth_ratios(reference, target_items)?;
    Ok(ks_two_sample(&x, &y)?.p_value)
}

/// Serialization helpers that round to six decimals.
pub mod r6 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn round(x: f64) -> f64 {
        if x.is_finite() {
            (x * 1e6).round() / 1e6
        } else {
            x
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        round(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }

    pub mod option {
        use super::*;
        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            x.map(round).serialize(s)
        }
        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<f64>::deserialize(d)
        }
    }

    pub mod map {
        use super::*;
        use std::collections::BTreeMap;
        pub fn serialize<K: Serialize + Ord + Clone, S: Serializer>(
            x: &BTreeMap<K, f64>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            x.iter()
                .map(|(k, v)| (k.clone(), round(*v)))
                .collect::<BTreeMap<_, _>>()
                .serialize(s)
        }
        pub fn deserialize<'de, K: Deserialize<'de> + Ord, D: Deserializer<'de>>(
            d: D,
        ) -> Result<BTreeMap<K, f64>, D::Error> {
            BTreeMap::<K, f64>::deserialize(d)
        }
    }

    pub mod map_vec {
        use super::*;
        use std::collections::BTreeMap;
        pub fn serialize<K: Serialize + Ord + Clone, S: Serializer>(
            x: &BTreeMap<K, Vec<f64>>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            x.iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|f| round(*f)).collect::<Vec<_>>()))
                .collect::<BTreeMap<_, _>>()
                .serialize(s)
        }
        pub fn deserialize<'de, K: Deserialize<'de> + Ord, D: Deserializer<'de>>(
            d: D,
        ) -> Result<BTreeMap<K, Vec<f64>>, D::Error> {
            BTreeMap::<K, Vec<f64>>::deserialize(d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::harmonic_mean;
    use crate::metrics::tests::{item, TableModel};

    fn model() -> TableModel {
        let it = item();
        TableModel {
            per_token: [(it.answer.clone(), -0.05), (it.paraphrased_answer.clone(), -0.2)]
                .into_iter()
                .collect(),
            default: -2.5,
            greedy_out: it.answer.clone(),
        }
    }

    fn sets() -> BTreeMap<Role, KnowledgeSet> {
        let mut m = BTreeMap::new();
        for role in [Role::Target, Role::Retain, Role::WorldFacts, Role::RealAuthorsAnalog] {
            m.insert(role, KnowledgeSet::new(role, vec![item(); 3]));
        }
        m
    }

    #[test]
    fn report_values_are_in_range_and_consistent() {
        let r = evaluate(&model(), &sets(), None, &EvalOptions::default()).unwrap();
        for (role, m) in &r.per_set {
            for v in [m.probability, m.rouge, m.accuracy] {
                assert!((0.0..=1.0).contains(&v), "{role}: {v}");
            }
            assert!((r.set_scores[role] - set_score(m).value).abs() < 1e-12);
        }
        assert!((r.per_set[&Role::Target].probability - (-0.05f64).exp()).abs() < 1e-12);
        assert!(r.per_set[&Role::WorldFacts].probability < r.per_set[&Role::Target].probability);
        assert_eq!(r.per_set[&Role::Retain].rouge, 1.0);
        assert_eq!(r.forget_quality, None);
        let nine: Vec<f64> = Role::UTILITY
            .iter()
            .flat_map(|x| {
                let m = r.per_set[x];
                [m.probability, m.rouge, m.accuracy]
            })
            .collect();
        assert!((r.model_utility - harmonic_mean(&nine).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn identical_models_have_unit_forget_quality() {
        let m = model();
        let its = vec![item(); 4];
        assert_eq!(forget_quality(&m, &m, &its).unwrap(), 1.0);
        let refs = truth_ratios(&m, &sets()[&Role::Target].items).unwrap();
        let r = evaluate(&m, &sets(), Some(&refs), &EvalOptions::default()).unwrap();
        assert_eq!(r.forget_quality, Some(1.0));
        assert!(evaluate(&m, &sets(), Some(&refs[..1]), &EvalOptions::default()).is_err());
    }

    #[test]
    fn json_uses_six_decimals() {
        let r = evaluate(&model(), &sets(), None, &EvalOptions::default()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        for key in [
            "probability",
            "rouge",
            "accuracy",
            "truth_ratios",
            "forget_quality",
            "set_scores",
            "model_utility",
        ] {
            assert!(s.contains(&format!("\"{key}\"")), "{key}");
        }
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        let p = v["per_set"]["target"]["probability"].as_f64().unwrap();
        assert_eq!(p, 0.951229);
        let back: MetricReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.per_set.len(), r.per_set.len());
    }

    #[test]
    fn mean_of_identical_reports_is_the_report() {
        let r = evaluate(&model(), &sets(), None, &EvalOptions::default()).unwrap();
        let m = MetricReport::mean(&[r.clone(), r.clone()]);
        assert!((m.model_utility - r.model_utility).abs() < 1e-12);
        assert!((m.set_score(Role::Retain) - r.set_score(Role::Retain)).abs() < 1e-12);
    }
}
