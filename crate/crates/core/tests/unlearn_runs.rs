use entity_unlearn::corpus::QaItem;
use entity_unlearn::lm::{score, ModelConfig, ModelHandle, Vocab};
use entity_unlearn::metrics::MetricReport;
use entity_unlearn::unlearn::{unlearn_run, Algorithm, UnlearnConfig};

fn setup() -> (ModelHandle, Vec<QaItem>, Vec<QaItem>) {
    let forget = vec![
        QaItem::new("Where was Ivo Marr born?", "Ivo Marr was born in Avaria."),
        QaItem::new("What does Ivo Marr write?", "Ivo Marr writes poems."),
        QaItem::new("When was Ivo Marr born?", "Ivo Marr was born in 1950."),
    ];
    let retain = vec![QaItem::new(
        "What is the capital of Avaria?",
        "Calderon is the capital.",
    )];
    let mut texts: Vec<String> = forget
        .iter()
        .chain(&retain)
        .map(|q| format!("Q: {}\nA: {}", q.question, q.answer))
        .collect();
    texts.extend(entity_unlearn::unlearn::default_refusals());
    let vocab = Vocab::build(texts.iter().map(String::as_str));
    let cfg = ModelConfig {
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_ff: 32,
        context_length: 32,
    };
    (ModelHandle::init(vocab, cfg, 3).unwrap(), forget, retain)
}

#[test]
fn reference_snapshot_is_untouched_by_every_algorithm() {
    let (model, forget, retain) = setup();
    let reference = model.clone();
    let before = score(
        &reference,
        "Q: Where was Ivo Marr born?\nA:",
        "Ivo Marr was born in Avaria.",
    )
    .unwrap();
    let checksum = reference.checksum();
    for algorithm in Algorithm::ALL {
        let cfg = UnlearnConfig {
            algorithm,
            learning_rate: 1e-2,
            epochs: 10,
            max_steps: Some(6),
            eval_every_steps: 2,
            ..UnlearnConfig::default()
        };
        let mut m = model.clone();
        let mut steps = Vec::new();
        let mut engine = |_: &ModelHandle, step: u64| -> entity_unlearn::Result<(MetricReport, Option<String>)> {
            // The reference is read while the run is in flight.
            let s = score(
                &reference,
                "Q: Where was Ivo Marr born?\nA:",
                "Ivo Marr was born in Avaria.",
            )?;
            assert_eq!(s.total_logprob.to_bits(), before.total_logprob.to_bits());
            steps.push(step);
            Ok((MetricReport::default(), None))
        };
        let rec = unlearn_run(&mut m, &forget, &retain, &cfg, &mut engine).unwrap();
        assert_eq!(steps, vec![0, 2, 4, 6], "{algorithm}");
        assert!(rec.checkpoints.windows(2).all(|w| w[0].step < w[1].step));
        assert!(rec.selected_checkpoint < rec.checkpoints.len());
        assert_ne!(m.checksum(), checksum, "{algorithm} left the model unchanged");
    }
    assert_eq!(reference.checksum(), checksum);
    let after = score(
        &reference,
        "Q: Where was Ivo Marr born?\nA:",
        "Ivo Marr was born in Avaria.",
    )
    .unwrap();
    assert_eq!(after.per_token_logprob, before.per_token_logprob);
}

#[test]
fn runs_are_reproducible() {
    let (model, forget, retain) = setup();
    let cfg = UnlearnConfig {
        algorithm: Algorithm::NpoGd,
        max_steps: Some(4),
        ..UnlearnConfig::default()
    };
    let run = |mut m: ModelHandle| {
        let mut engine = |_: &ModelHandle, _: u64| -> entity_unlearn::Result<(MetricReport, Option<String>)> {
            Ok((MetricReport::default(), None))
        };
        let rec = unlearn_run(&mut m, &forget, &retain, &cfg, &mut engine).unwrap();
        (m.checksum(), rec.loss_jsonl())
    };
    assert_eq!(run(model.clone()), run(model));
}
