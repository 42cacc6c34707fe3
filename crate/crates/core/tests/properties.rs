mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemamatch_core::filters::{compose_filters, double_rag, ner_filter, top_k};
use schemamatch_core::prompt::{build_prompt, count_tokens, PromptTemplate};
use schemamatch_core::*;

fn measures(rng: &mut ChaCha8Rng) -> [SimilarityMeasure; 3] {
    [
        SimilarityMeasure::jaccard(),
        SimilarityMeasure::dice(),
        SimilarityMeasure::embedding(random_vectors(rng)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn top_k_matches_sort(scores in prop::collection::vec(0u8..6, 0..60), k in 0usize..70) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64 / 5.0).collect();
        prop_assert_eq!(top_k(&s, k), sort_top_k(&s, k));
    }

    #[test]
    fn double_rag_matches_sort_oracle(seed: u64, n in 1usize..40, m in 0usize..6, k1 in 0usize..45, k2 in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ot = random_object_type(&mut rng, n, m);
        let (opts, ex) = (OptionDatabase::from_object_type(&ot), ExampleDatabase::from_object_type(&ot));
        let q = random_query(&mut rng);
        for measure in measures(&mut rng) {
            let got = double_rag(&opts, &ex, &q, &measure, k1, k2);
            prop_assert_eq!(flatten(&got), sort_oracle(&opts, &ex, &q, &measure, k1, k2));
            prop_assert_eq!(got.len(), k1.min(n));
        }
    }

    #[test]
    fn ner_filter_matches_comprehension(seed: u64, n in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = OptionDatabase::from_object_type(&random_object_type(&mut rng, n, 2));
        let q = random_query(&mut rng);
        let out = ner_filter(&opts, &q);
        let ids: Vec<String> = out.options.options.iter().map(|o| o.attribute_id.clone()).collect();
        prop_assert_eq!((ids, out.bypassed), ner_comprehension(&opts, &q));
    }

    #[test]
    fn filters_never_grow_choices(seed: u64, n in 1usize..30, k1 in 1usize..10, k2 in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ot = random_object_type(&mut rng, n, 4);
        let (opts, ex) = (OptionDatabase::from_object_type(&ot), ExampleDatabase::from_object_type(&ot));
        let q = random_query(&mut rng);
        let full = CompressedChoices::full(&opts, &ex);
        for (ner, double_rag) in [(true, false), (false, true), (true, true)] {
            let c = compose_filters(&opts, &ex, &q, &SimilarityMeasure::dice(), &FilterConfig { ner, double_rag, k1, k2 });
            prop_assert!(c.len() <= full.len());
            prop_assert!(c.example_count() <= full.example_count());
            // Surviving options keep database order.
            prop_assert!(c.options.windows(2).all(|w| w[0].index < w[1].index));
        }
    }

    #[test]
    fn budget_reconstruction_tracks_rendering(seed: u64, n in 1usize..30, m in 0usize..6, k1 in 1usize..12, k2 in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ot = random_object_type(&mut rng, n, m);
        let (opts, ex) = (OptionDatabase::from_object_type(&ot), ExampleDatabase::from_object_type(&ot));
        let q = random_query(&mut rng);
        let t = PromptTemplate::default_match();
        for c in [CompressedChoices::full(&opts, &ex), double_rag(&opts, &ex, &q, &SimilarityMeasure::dice(), k1, k2)] {
            let (p, b) = build_prompt(&c, &q, &t).unwrap();
            prop_assert_eq!(b.exact_tokens, count_tokens(&p.rendered));
            prop_assert!(b.exact_tokens >= b.l_instruct);
            prop_assert!((b.exact_tokens as f64 - b.reconstruction()).abs() <= b.n as f64);
            prop_assert!(b.exact_tokens.abs_diff(b.l_input) <= b.n);
        }
    }

    #[test]
    fn budget_monotone_in_k(seed: u64, n in 1usize..25, m in 0usize..5, k1 in 1usize..10, k2 in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ot = random_object_type(&mut rng, n, m);
        let (opts, ex) = (OptionDatabase::from_object_type(&ot), ExampleDatabase::from_object_type(&ot));
        let q = random_query(&mut rng);
        let t = PromptTemplate::default_match();
        let tokens = |k1, k2| build_prompt(&double_rag(&opts, &ex, &q, &SimilarityMeasure::dice(), k1, k2), &q, &t).unwrap().1.exact_tokens;
        prop_assert!(tokens(k1, k2) <= tokens(k1 + 1, k2));
        prop_assert!(tokens(k1, k2) <= tokens(k1, k2 + 1));
        let full = build_prompt(&CompressedChoices::full(&opts, &ex), &q, &t).unwrap().1.exact_tokens;
        prop_assert!(tokens(k1, k2.min(1)) <= full);
    }

    #[test]
    fn uniform_column_survives_empty_injections(seed: u64, k in 2usize..=6, pick in 0usize..8) {
        let values = [
            "jane.doe@example.com", "https://example.org/a", "2023-04-01T10:00:00", "Acme Corp",
            "(206) 555-0100", "Seattle", "2021-06-30", "98101",
        ];
        let v = values[pick];
        let labeler = ner::Labeler::default();
        let base = SourceColumn::new("c", vec![v.to_string(); k]);
        let expected = labeler.label_column(&base, k).label;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_empty = (k / 2).saturating_sub(1);
        let count = rand::Rng::random_range(&mut rng, 0..=max_empty);
        let mut samples = base.samples.clone();
        let mut slots: Vec<usize> = (0..k).collect();
        rand::seq::SliceRandom::shuffle(slots.as_mut_slice(), &mut rng);
        for &i in &slots[..count] {
            samples[i] = String::new();
        }
        prop_assert_eq!(labeler.label_column(&SourceColumn::new("c", samples), k).label, expected);
    }
}
