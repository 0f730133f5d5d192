use proptest::prelude::*;
use subband_core::scorer::{edit_distance, normalize_text, transcription_accuracy};

/// Unmemoized recursive Levenshtein distance.
fn naive(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = naive(ra, rb) + usize::from(x != y);
            sub.min(naive(ra, b) + 1).min(naive(a, rb) + 1)
        }
    }
}

fn seq(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 0..max)
}

proptest! {
    #[test]
    fn matches_naive_recursion(a in seq(8), b in seq(8)) {
        prop_assert_eq!(edit_distance(&a, &b), naive(&a, &b));
    }

    #[test]
    fn is_a_metric(a in seq(12), b in seq(12), c in seq(12)) {
        let d = |x: &[u8], y: &[u8]| edit_distance(x, y);
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert!(d(&a, &b) >= a.len().abs_diff(b.len()));
        prop_assert!(d(&a, &b) <= a.len().max(b.len()));
    }

    #[test]
    fn accuracy_is_a_clamped_percentage(hyp in "[a-c ]{0,30}", reference in "[a-c]{1,4}( [a-c]{1,4}){0,6}") {
        let r = transcription_accuracy(&hyp, &reference, "en").unwrap();
        prop_assert!((0.0..=100.0).contains(&r.accuracy_percent));
        let expect = 100.0 * (1.0 - r.edit_distance as f64 / r.reference.len() as f64).max(0.0);
        prop_assert!((r.accuracy_percent - expect).abs() < 1e-12);
        prop_assert_eq!(transcription_accuracy(&reference, &reference, "en").unwrap().accuracy_percent, 100.0);
    }
}

#[test]
fn case_and_punctuation_do_not_count() {
    let r = transcription_accuracy("the BIRCH canoe, slid", "The birch canoe slid.", "en").unwrap();
    assert_eq!(r.accuracy_percent, 100.0);
    let r = transcription_accuracy("its easy", "It's easy", "en").unwrap();
    assert_eq!(r.edit_distance, 0);
}

#[test]
fn chinese_is_scored_per_character() {
    assert_eq!(normalize_text("你好 世界", "zh").len(), 4);
    let r = transcription_accuracy("你好世", "你好世界", "zh").unwrap();
    assert_eq!(r.accuracy_percent, 75.0);
}
