//! Three-community forum corpus with a known structure.
//!
//! Community "alpha" talks about its own disjoint keyword block for a large
//! share of its tokens. Communities "beta" and "gamma" have keyword blocks
//! that overlap in half of their terms, and those keywords are a small share
//! of their tokens. Everyone draws the rest of their words from shared
//! generic themes, mixed per author.

use clustlda::RawRecord;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

const SYLLABLES: [&str; 15] = [
    "ba", "ko", "mu", "ta", "lo", "nu", "pa", "ro", "su", "da", "go", "fu", "ha", "zo", "vu",
];

/// Pseudo-words that pass through lowercasing and stemming unchanged.
pub fn pseudo_word(prefix: &str, index: usize) -> String {
    let mut word = prefix.to_string();
    let mut i = index;
    loop {
        word.push_str(SYLLABLES[i % SYLLABLES.len()]);
        i /= SYLLABLES.len();
        if i == 0 {
            break;
        }
    }
    word
}

pub struct CommunitySpec {
    pub authors_per_community: usize,
    pub max_docs_per_author: usize,
    pub mean_doc_len: f64,
    pub generic_themes: usize,
    pub words_per_theme: usize,
    pub block_size: usize,
    /// Token share of community keywords for alpha and for beta/gamma.
    pub alpha_share: f64,
    pub overlap_share: f64,
}

impl Default for CommunitySpec {
    fn default() -> Self {
        Self {
            authors_per_community: 60,
            max_docs_per_author: 4,
            mean_doc_len: 30.0,
            generic_themes: 8,
            words_per_theme: 40,
            block_size: 60,
            alpha_share: 0.5,
            overlap_share: 0.15,
        }
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, n: usize) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).unwrap();
    let draws: Vec<f64> = (0..n).map(|_| g.sample(rng).max(1e-300)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Records labelled "alpha", "beta" or "gamma".
pub fn community_records(spec: &CommunitySpec, seed: u64) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let themes: Vec<Vec<String>> = (0..spec.generic_themes)
        .map(|t| (0..spec.words_per_theme).map(|i| pseudo_word(&format!("g{}", SYLLABLES[t]), i)).collect())
        .collect();
    let half = spec.block_size / 2;
    let alpha_block: Vec<String> = (0..spec.block_size).map(|i| pseudo_word("xa", i)).collect();
    let shared: Vec<String> = (0..half).map(|i| pseudo_word("yo", i)).collect();
    let beta_block: Vec<String> = shared.iter().cloned().chain((0..half).map(|i| pseudo_word("bu", i))).collect();
    let gamma_block: Vec<String> = shared.iter().cloned().chain((0..half).map(|i| pseudo_word("ku", i))).collect();
    let communities = [
        ("alpha", &alpha_block, spec.alpha_share),
        ("beta", &beta_block, spec.overlap_share),
        ("gamma", &gamma_block, spec.overlap_share),
    ];
    let length = Poisson::new(spec.mean_doc_len).unwrap();
    let mut records = Vec::new();
    for (name, block, share) in communities {
        let block_weights: Vec<f64> = (0..block.len()).map(|i| 1.0 / (1.0 + i as f64).sqrt()).collect();
        for a in 0..spec.authors_per_community {
            let author = format!("{name}-{a}");
            let taste = dirichlet(&mut rng, 0.3, spec.generic_themes);
            let n_docs = rng.random_range(1..=spec.max_docs_per_author);
            for d in 0..n_docs {
                let n = (length.sample(&mut rng) as usize).max(5);
                let words: Vec<&str> = (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < share {
                            block[pick(&mut rng, &block_weights)].as_str()
                        } else {
                            let t = pick(&mut rng, &taste);
                            themes[t][rng.random_range(0..spec.words_per_theme)].as_str()
                        }
                    })
                    .collect();
                records.push(RawRecord {
                    id: format!("{author}-{d}"),
                    author: author.clone(),
                    text: words.join(" "),
                    label: Some(name.to_string()),
                });
            }
        }
    }
    records
}
