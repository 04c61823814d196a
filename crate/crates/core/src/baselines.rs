//! Vanilla LDA and Author-Topic baselines, both run through the conditional
//! topic-model engine with degenerate covariate designs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::linalg::softmax_pinned;
use crate::tstep::{fit_conditional_stm, TStepConfig, TStepFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    ClustLda,
    Lda,
    At,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clustlda" => Ok(ModelKind::ClustLda),
            "lda" => Ok(ModelKind::Lda),
            "at" => Ok(ModelKind::At),
            other => Err(Error::InvalidInput(format!("unknown model {other:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::ClustLda => "clustlda",
            ModelKind::Lda => "lda",
            ModelKind::At => "at",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub kind: ModelKind,
    pub tstep: TStepFit,
    /// Estimated topic distribution per author.
    pub author_topics: Vec<Vec<f64>>,
}

/// Every document shares one prevalence mean. Per-author estimates average
/// the author's document proportions.
pub fn fit_vanilla_lda(corpus: &Corpus, cfg: &TStepConfig) -> Result<BaselineFit> {
    let tstep = fit_conditional_stm(corpus, &vec![0; corpus.num_docs()], 1, cfg, None)?;
    let author_topics = corpus
        .docs_by_author()
        .iter()
        .map(|docs| {
            let mut mean = vec![0.0; cfg.k];
            for &d in docs {
                for (m, t) in mean.iter_mut().zip(&tstep.doc_states[d].theta) {
                    *m += t / docs.len() as f64;
                }
            }
            mean
        })
        .collect();
    Ok(BaselineFit {
        kind: ModelKind::Lda,
        tstep,
        author_topics,
    })
}

/// The covariate is the author's identity, so every author gets a ridge-
/// shrunken prevalence row; the per-author estimate is its softmax.
pub fn fit_author_topic(corpus: &Corpus, cfg: &TStepConfig) -> Result<BaselineFit> {
    let tstep = fit_conditional_stm(corpus, &corpus.doc_authors(), corpus.num_authors(), cfg, None)?;
    let author_topics = (0..corpus.num_authors())
        .map(|a| softmax_pinned(&tstep.prevalence.mean(a)))
        .collect();
    Ok(BaselineFit {
        kind: ModelKind::At,
        tstep,
        author_topics,
    })
}
