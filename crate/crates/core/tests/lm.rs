use proptest::prelude::*;

use sha_asr::lm::{
    count_ngrams, export_arpa, import_arpa, parse_arpa, perplexity, render_arpa, InterpolatedLM, LanguageModel,
    NGramModel, Smoothing, BOS, EOS, UNK,
};
use sha_asr::Error;

fn corpus_strategy(vocab: usize, max_sent: usize) -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec((0..vocab).prop_map(|i| format!("t{i}")), 1..8), 1..max_sent)
}

fn context_sum(lm: &dyn LanguageModel, ctx: &[&str]) -> f64 {
    lm.predictable().iter().map(|w| lm.prob(ctx, w)).sum()
}

fn all_context_sums_ok(lm: &NGramModel) -> Result<(), TestCaseError> {
    for h in lm.contexts() {
        let refs: Vec<&str> = h.iter().map(String::as_str).collect();
        let s = context_sum(lm, &refs);
        prop_assert!((s - 1.0).abs() < 1e-9, "context {:?} sums to {}", h, s);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn counts_match_a_rescan(corpus in corpus_strategy(6, 20), order in 1usize..5) {
        let counts = count_ngrams(&corpus, order).unwrap();
        for k in 1..=order {
            let mut naive = std::collections::BTreeMap::new();
            for s in &corpus {
                let padded: Vec<String> =
                    std::iter::once(BOS.to_string()).chain(s.iter().cloned()).chain([EOS.to_string()]).collect();
                for start in 0..padded.len() {
                    if start + k <= padded.len() {
                        *naive.entry(padded[start..start + k].to_vec()).or_insert(0u64) += 1;
                    }
                }
            }
            prop_assert_eq!(counts.grams(k), &naive);
        }
    }

    #[test]
    fn estimated_models_normalise(corpus in corpus_strategy(8, 30), order in 1usize..4) {
        let lm = NGramModel::from_sentences(&corpus, order).unwrap();
        prop_assert_eq!(lm.smoothing(), Smoothing::WittenBell);
        all_context_sums_ok(&lm)?;
        let unseen = context_sum(&lm, &["never", "seen"]);
        prop_assert!((unseen - 1.0).abs() < 1e-9);
    }

    #[test]
    fn arpa_round_trip_keeps_probabilities(corpus in corpus_strategy(6, 20), order in 1usize..4) {
        let lm = NGramModel::from_sentences(&corpus, order).unwrap();
        let back = parse_arpa(&render_arpa(&lm)).unwrap();
        prop_assert_eq!(back.smoothing(), Smoothing::Imported);
        prop_assert_eq!(back.order(), lm.order());
        all_context_sums_ok(&back)?;
        for h in lm.contexts() {
            let refs: Vec<&str> = h.iter().map(String::as_str).collect();
            for w in lm.predictable() {
                let (a, b) = (lm.prob(&refs, &w), back.prob(&refs, &w));
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300), "{:?} {}: {} vs {}", h, w, a, b);
            }
        }
    }

    #[test]
    fn interpolation_normalises_and_is_monotone(
        en in corpus_strategy(5, 15),
        hi in corpus_strategy(7, 15),
        lambda in 0.05f64..0.95,
    ) {
        let hi: Vec<Vec<String>> = hi.into_iter().map(|s| s.into_iter().map(|w| format!("h{w}")).collect()).collect();
        let (en_lm, hi_lm) = (NGramModel::from_sentences(&en, 2).unwrap(), NGramModel::from_sentences(&hi, 2).unwrap());
        let mix = InterpolatedLM::new(en_lm.clone(), hi_lm.clone(), lambda).unwrap();
        for h in [BOS, "t0", "ht1", "zzz"] {
            let s = context_sum(&mix, &[h]);
            prop_assert!((s - 1.0).abs() < 1e-9, "{}: {}", h, s);
        }
        // A word both components know is a convex combination of the two.
        for w in en_lm.predictable() {
            if hi_lm.contains(&w) && w != UNK {
                let p = mix.prob(&[BOS], &w);
                let (a, b) = (en_lm.prob(&[BOS], &w), hi_lm.prob(&[BOS], &w));
                prop_assert!((p - (lambda * a + (1.0 - lambda) * b)).abs() < 1e-12);
            }
        }
        // Moving weight towards the component that prefers a word raises its probability.
        let w = en[0][0].clone();
        let higher = InterpolatedLM::new(en_lm.clone(), hi_lm.clone(), (lambda + 0.04).min(0.99)).unwrap();
        if en_lm.prob(&[BOS], &w) > hi_lm.prob(&[BOS], UNK) {
            prop_assert!(higher.prob(&[BOS], &w) >= mix.prob(&[BOS], &w));
        }
    }
}

#[test]
fn lambda_near_one_approaches_english_on_english_words() {
    let en: Vec<Vec<String>> = ["play the song", "the song", "play it"]
        .iter()
        .map(|s| s.split(' ').map(str::to_string).collect())
        .collect();
    let hi: Vec<Vec<String>> = vec![vec!["gaana".into(), "bajao".into()]];
    let (e, h) = (NGramModel::from_sentences(&en, 2).unwrap(), NGramModel::from_sentences(&hi, 2).unwrap());
    let mut prev = f64::INFINITY;
    for lambda in [0.9, 0.99, 0.999, 0.9999] {
        let m = InterpolatedLM::new(e.clone(), h.clone(), lambda).unwrap();
        let gap: f64 = ["play", "the", "song", "it", EOS]
            .iter()
            .map(|w| (m.prob(&["play"], w) - e.prob(&["play"], w)).abs())
            .sum();
        assert!(gap < prev);
        prev = gap;
    }
    assert!(prev < 1e-3);
}

#[test]
fn interpolated_perplexity_improves_on_mixed_text() {
    let en: Vec<Vec<String>> = (0..50).map(|i| vec!["play".into(), format!("song{}", i % 5)]).collect();
    let hi: Vec<Vec<String>> = (0..50).map(|i| vec!["gaana".into(), format!("bajao{}", i % 3)]).collect();
    let (e, h) = (NGramModel::from_sentences(&en, 2).unwrap(), NGramModel::from_sentences(&hi, 2).unwrap());
    let mix = InterpolatedLM::new(e.clone(), h, 0.9).unwrap();
    let hi_test = vec![vec!["gaana".to_string(), "bajao1".to_string()]];
    let en_test = vec![vec!["play".to_string(), "song2".to_string()]];
    assert!(perplexity(&mix, &hi_test).unwrap() < perplexity(&e, &hi_test).unwrap());
    assert!(perplexity(&mix, &en_test).unwrap() <= 1.2 * perplexity(&e, &en_test).unwrap());
}

#[test]
fn arpa_files_round_trip_through_disk() {
    let corpus: Vec<Vec<String>> = vec![vec!["a".into(), "b".into()], vec!["b".into(), "c".into(), "a".into()]];
    let lm = NGramModel::from_sentences(&corpus, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.arpa");
    export_arpa(&lm, &path).unwrap();
    let back = import_arpa(&path).unwrap();
    for h in lm.contexts() {
        let refs: Vec<&str> = h.iter().map(String::as_str).collect();
        for w in lm.predictable() {
            assert!((lm.prob(&refs, &w) - back.prob(&refs, &w)).abs() < 1e-12);
        }
    }
    assert!(matches!(import_arpa(&dir.path().join("missing.arpa")), Err(Error::Io(_))));
}

#[test]
fn malformed_arpa_is_rejected_with_line_numbers() {
    let cases = [
        ("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\ta\n", "missing end"),
        ("\\data\\\nngram 1=2\n\n\\1-grams:\n-0.5\ta\n\n\\end\\\n", "count mismatch"),
        ("\\data\\\nngram 1=1\n\n\\1-grams:\nx\ta\n\n\\end\\\n", "bad number"),
        ("\\data\\\nngram 1=2\n\n\\1-grams:\n-0.5\ta\n-0.5\ta\n\n\\end\\\n", "duplicate"),
    ];
    for (text, what) in cases {
        assert!(matches!(parse_arpa(text), Err(Error::Parse { .. })), "{what}");
    }
}
