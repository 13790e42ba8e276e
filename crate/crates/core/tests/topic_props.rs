use fixation::topic_quality::{
    npmi_coherence, npmi_pair, topic_diversity, CooccurrenceOptions, CooccurrenceStats, Topic, TopicKeywordSet,
    NPMI_EPSILON,
};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn words() -> Vec<String> {
    (0..16).map(|i| format!("w{i}")).collect()
}

fn topic_set() -> impl Strategy<Value = Vec<Vec<String>>> {
    (2usize..6).prop_flat_map(|k| proptest::collection::vec(subsequence(words(), k).prop_shuffle(), 1..6))
}

fn corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
    proptest::collection::vec(proptest::collection::vec(proptest::sample::select(words()), 0..6), 1..20)
}

fn build(topics: &[Vec<String>]) -> TopicKeywordSet {
    TopicKeywordSet::new(
        topics.iter().enumerate().map(|(i, kw)| Topic { topic_id: i as u32, keywords: kw.clone() }).collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn diversity_ignores_topic_and_keyword_order(topics in topic_set(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = fixation::rng::stream(seed, 0);
        let mut shuffled = topics.clone();
        shuffled.shuffle(&mut rng);
        for kw in &mut shuffled {
            kw.shuffle(&mut rng);
        }
        prop_assert_eq!(topic_diversity(&build(&topics)), topic_diversity(&build(&shuffled)));
    }

    #[test]
    fn npmi_pairs_bounded_and_topic_mean_in_hull(topics in topic_set(), docs in corpus()) {
        let stats = CooccurrenceStats::from_documents(&docs, &CooccurrenceOptions::default());
        let set = build(&topics);
        let coherence = npmi_coherence(&set, &stats, NPMI_EPSILON).unwrap();
        for (topic, &mean) in set.topics().iter().zip(&coherence.per_topic) {
            let kw = &topic.keywords;
            let mut pairs = Vec::new();
            for i in 0..kw.len() {
                for j in i + 1..kw.len() {
                    let (v, _) = npmi_pair(&stats, &kw[i], &kw[j], NPMI_EPSILON);
                    prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v), "pair value {}", v);
                    pairs.push(v);
                }
            }
            let lo = pairs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = pairs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(mean >= lo - 1e-12 && mean <= hi + 1e-12);
        }
    }

    #[test]
    fn pair_counts_are_consistent(docs in corpus(), a in proptest::sample::select(words()), b in proptest::sample::select(words())) {
        let stats = CooccurrenceStats::from_documents(&docs, &CooccurrenceOptions::default());
        let co = stats.co_frequency(&a, &b);
        prop_assert!(co <= stats.frequency(&a).min(stats.frequency(&b)));
        prop_assert!(stats.frequency(&a) <= stats.documents());
    }
}
