//! Fixtures shared by the benchmarks.

use clustlda::{simulate, Corpus, GroupedPoints, Hyperparameters, SyntheticTruth};

/// A simulated corpus at a fraction of the default scale.
pub fn small_corpus(seed: u64) -> (Corpus, SyntheticTruth) {
    let hp = Hyperparameters {
        n_docs: 200,
        n_authors: 100,
        vocab_size: 300,
        seed,
        ..Hyperparameters::default()
    };
    simulate(&hp).expect("valid hyperparameters")
}

/// Per-document true topic weights grouped by author, as the cluster step
/// sees them.
pub fn grouped_truth(corpus: &Corpus, truth: &SyntheticTruth) -> GroupedPoints {
    let points = truth
        .theta
        .iter()
        .map(|t| {
            let last = t[t.len() - 1].ln();
            t[..t.len() - 1].iter().map(|x| x.ln() - last).collect()
        })
        .collect();
    GroupedPoints::new(points, corpus.docs_by_author()).expect("every document has an author")
}
