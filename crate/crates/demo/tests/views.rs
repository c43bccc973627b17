use entity_unlearn_demo::{coverage_view, ks_view, parse_sample, unlearn_view};

#[test]
fn ks_view_matches_hand_counts() {
    let v = ks_view("1, 2, 3, 4", "3 4 5 6").unwrap();
    assert_eq!(v.statistic, 0.5);
    assert!(v.p_value > 0.0 && v.p_value <= 1.0);
    assert_eq!(v.ecdf_a.last(), Some(&(4.0, 1.0)));
    assert!(parse_sample("1, x").is_err());
    assert!(ks_view("", "1").is_err());
}

#[test]
fn coverage_rises_to_one() {
    let v = coverage_view(3, 0.5).unwrap();
    assert_eq!(v.ratios.len(), 11);
    assert_eq!(v.exact[10], 1.0);
    assert!(v.exact.windows(2).all(|w| w[1] >= w[0]));
    assert!(v.token_f1.iter().all(|x| (0.0..=1.0).contains(x)));
    assert_eq!(v.sample.len(), 6);
}

#[test]
fn gradient_ascent_lowers_forget_probability() {
    let v = unlearn_view(2, "GA", 0.1, 1e-2, 6).unwrap();
    assert_eq!(v.steps, (0..=6).collect::<Vec<u64>>());
    assert!(v.forget_probability[0] > 0.5, "{:?}", v.forget_probability);
    assert!(v.forget_probability[6] < v.forget_probability[0]);
    let po = unlearn_view(2, "PO", 0.5, 5e-3, 3).unwrap();
    assert_eq!(po.loss.len(), 3);
    assert!(unlearn_view(2, "nope", 0.1, 1e-3, 1).is_err());
}
