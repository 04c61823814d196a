//! Simulate → fit → evaluate for one synthetic dataset, comparing the
//! clustered model against both baselines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::artifact::ModelArtifact;
use crate::baselines::{fit_author_topic, fit_vanilla_lda, BaselineFit};
use crate::corpus::{Corpus, Vocabulary};
use crate::ecm::{multi_start, EcmConfig, MultiStartResult, Selector};
use crate::error::{Error, Result};
use crate::eval::{
    adjusted_rand_index, align_topics, contingency_table, mae_author_gamma, pca_project, permute_topics, rand_index, top_words, EvalReport,
    ProjectedAuthor,
};
use crate::linalg::softmax_pinned;
use crate::generator::{simulate, Hyperparameters, SyntheticTruth};
use crate::rng::derive_seed;
use crate::tstep::{TStepConfig, TopicMatrix};

/// ECM settings that reuse the generating hyperparameters.
pub fn ecm_config_for(hp: &Hyperparameters) -> EcmConfig {
    EcmConfig {
        beta: hp.beta,
        eta: hp.eta,
        sigma0_sq: hp.sigma0_sq,
        ..EcmConfig::new(hp.k, hp.n_clusters)
    }
}

/// Truth topics re-expressed over `vocabulary`, matching synthetic terms
/// `w<id>` by name and renormalizing each row. Unknown terms get zero mass.
pub fn truth_phi_on(vocabulary: &Vocabulary, truth: &SyntheticTruth) -> Vec<Vec<f64>> {
    let columns: Vec<Option<usize>> = vocabulary
        .terms()
        .iter()
        .map(|t| t.strip_prefix('w').and_then(|n| n.parse().ok()))
        .collect();
    truth
        .phi
        .iter()
        .map(|row| {
            let mut out: Vec<f64> = columns
                .iter()
                .map(|c| c.and_then(|c| row.get(c).copied()).unwrap_or(0.0))
                .collect();
            let total: f64 = out.iter().sum();
            if total > 0.0 {
                out.iter_mut().for_each(|x| *x /= total);
            }
            out
        })
        .collect()
}

/// MAE of per-author estimates after aligning the estimated topics to the
/// truth topics.
pub fn aligned_mae(estimated_phi: &[Vec<f64>], author_topics: &[Vec<f64>], truth_phi: &[Vec<f64>], truth: &SyntheticTruth) -> Result<f64> {
    let perm = align_topics(estimated_phi, truth_phi)?;
    let aligned: Vec<Vec<f64>> = author_topics.iter().map(|v| permute_topics(v, &perm)).collect();
    mae_author_gamma(&aligned, truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub dataset_seed: u64,
    pub rand_index: f64,
    pub mae_clustlda: f64,
    pub mae_lda: f64,
    pub mae_at: f64,
    pub converged: bool,
    pub outer_iters: usize,
    pub best_restart: usize,
}

pub struct Replicate {
    pub outcome: ReplicateOutcome,
    pub corpus: Corpus,
    pub truth: SyntheticTruth,
    pub clustlda: MultiStartResult,
    pub lda: BaselineFit,
    pub at: BaselineFit,
}

/// Simulate a dataset with `hp` (its seed selects the dataset), fit the
/// clustered model with `restarts` restarts plus both baselines, and score
/// all three against the truth.
pub fn run_replicate(hp: &Hyperparameters, restarts: usize, selector: Selector, fit_seed: u64) -> Result<Replicate> {
    let (corpus, truth) = simulate(hp)?;
    let cfg = ecm_config_for(hp);
    let clustlda = multi_start(&corpus, &cfg, restarts, selector, fit_seed)?;
    let baseline_cfg = TStepConfig::new(hp.k, hp.beta, hp.sigma0_sq, derive_seed(fit_seed, "baseline", 0));
    let lda = fit_vanilla_lda(&corpus, &baseline_cfg)?;
    let at = fit_author_topic(&corpus, &baseline_cfg)?;

    let truth_phi = truth_phi_on(&corpus.vocabulary, &truth);
    let best = &clustlda.best;
    let outcome = ReplicateOutcome {
        dataset_seed: hp.seed,
        rand_index: rand_index(&best.assignment.labels, &truth.labels)?,
        mae_clustlda: aligned_mae(&best.phi.rows(), &best.author_topics(), &truth_phi, &truth)?,
        mae_lda: aligned_mae(&lda.tstep.phi.rows(), &lda.author_topics, &truth_phi, &truth)?,
        mae_at: aligned_mae(&at.tstep.phi.rows(), &at.author_topics, &truth_phi, &truth)?,
        converged: best.converged,
        outer_iters: best.outer_iters,
        best_restart: clustlda.best_restart,
    };
    Ok(Replicate {
        outcome,
        corpus,
        truth,
        clustlda,
        lda,
        at,
    })
}

/// Per-document source labels and, optionally, the generating truth.
pub struct EvalInputs<'a> {
    pub source_labels: Option<&'a [String]>,
    pub truth: Option<&'a SyntheticTruth>,
    pub top_n: usize,
}

fn majority(labels: &[&String]) -> Option<String> {
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    // Ties resolve to the lexicographically smallest label.
    counts
        .into_iter()
        .fold(None, |best: Option<(&String, usize)>, (l, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
        .map(|(l, _)| l.clone())
}

/// Every report table for a saved model over the corpus it was fit on.
pub fn evaluate_artifact(model: &ModelArtifact, corpus: &Corpus, inputs: &EvalInputs<'_>) -> Result<EvalReport> {
    if model.terms.as_slice() != corpus.vocabulary.terms() || model.authors != corpus.authors {
        return Err(Error::InvalidInput("model and corpus disagree on vocabulary or authors".into()));
    }
    let mut warnings = Vec::new();
    let doc_authors = corpus.doc_authors();
    let author_labels = model.labels.clone();
    let doc_clusters: Option<Vec<usize>> = author_labels.as_ref().map(|l| doc_authors.iter().map(|&a| l[a]).collect());

    let (rand_index_value, ari, mae) = match inputs.truth {
        Some(truth) => {
            let truth_phi = truth_phi_on(&corpus.vocabulary, truth);
            let mae = aligned_mae(&model.phi, &model.author_topics, &truth_phi, truth)?;
            match &author_labels {
                Some(l) => (Some(rand_index(l, &truth.labels)?), Some(adjusted_rand_index(l, &truth.labels)?), Some(mae)),
                None => (None, None, Some(mae)),
            }
        }
        None => (None, None, None),
    };

    let contingency = match (inputs.source_labels, &doc_clusters) {
        (Some(src), Some(clusters)) => Some(contingency_table(src, clusters, model.gamma.len())?),
        _ => None,
    };

    let phi = TopicMatrix::from_rows(&model.phi)?;
    let top = top_words(&phi, &corpus.vocabulary, inputs.top_n.min(corpus.vocab_size()))?;
    let cluster_topic_weights = model.gamma.iter().map(|g| softmax_pinned(g)).collect();

    let mut projection = Vec::new();
    if model.author_topics.len() >= 2 {
        let (scores, warning) = pca_project(&model.author_topics)?;
        warnings.extend(warning);
        let by_author = corpus.docs_by_author();
        for (a, xy) in scores.iter().enumerate() {
            let source_label = inputs.source_labels.and_then(|src| majority(&by_author[a].iter().map(|&d| &src[d]).collect::<Vec<_>>()));
            projection.push(ProjectedAuthor {
                author: model.authors[a].clone(),
                x: xy[0],
                y: xy[1],
                cluster: author_labels.as_ref().map_or(0, |l| l[a]),
                source_label,
            });
        }
    } else {
        warnings.push("projection needs at least two authors".into());
    }

    Ok(EvalReport {
        rand_index: rand_index_value,
        adjusted_rand_index: ari,
        mae,
        contingency,
        top_words: top,
        cluster_topic_weights,
        projection,
        warnings,
    })
}

/// Reorder the truth's author labels to follow `authors`, whose names are
/// the generator's `a<index>` ids in any order (as after re-ingesting a
/// simulated corpus from JSONL).
pub fn align_truth_authors(truth: &SyntheticTruth, authors: &[String]) -> Result<SyntheticTruth> {
    let labels = authors
        .iter()
        .map(|name| {
            name.strip_prefix('a')
                .and_then(|n| n.parse::<usize>().ok())
                .and_then(|i| truth.labels.get(i).copied())
                .ok_or_else(|| Error::InvalidInput(format!("author {name:?} is not part of the synthetic truth")))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(SyntheticTruth {
        labels,
        ..truth.clone()
    })
}
