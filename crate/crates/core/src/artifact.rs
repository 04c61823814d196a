//! Serializable model artifacts written by the command-line tool.

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineFit, ModelKind};
use crate::corpus::Corpus;
use crate::ecm::FitResult;
use crate::error::Result;
use crate::linalg::to_rows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub terms: Vec<String>,
    pub authors: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    /// One row per covariate level (cluster, single global level, or author).
    pub gamma: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub bound: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Cluster label per author (clustered model only).
    #[serde(default)]
    pub labels: Option<Vec<usize>>,
    pub author_topics: Vec<Vec<f64>>,
    #[serde(default)]
    pub d_lik: Option<f64>,
    #[serde(default)]
    pub d_disp: Option<f64>,
    #[serde(default)]
    pub converged: Option<bool>,
    #[serde(default)]
    pub outer_iters: Option<usize>,
}

impl ModelArtifact {
    pub fn from_fit(fit: &FitResult, corpus: &Corpus) -> Self {
        Self {
            model: ModelKind::ClustLda,
            k: fit.phi.num_topics(),
            seed: fit.seed,
            terms: corpus.vocabulary.terms().to_vec(),
            authors: corpus.authors.clone(),
            phi: fit.phi.rows(),
            gamma: to_rows(&fit.prevalence.gamma),
            sigma: to_rows(&fit.prevalence.sigma),
            bound: fit.tstep_bound,
            weights: Some(fit.assignment.weights.clone()),
            labels: Some(fit.assignment.labels.clone()),
            author_topics: fit.author_topics(),
            d_lik: Some(fit.d_lik),
            d_disp: fit.d_disp,
            converged: Some(fit.converged),
            outer_iters: Some(fit.outer_iters),
        }
    }

    pub fn from_baseline(fit: &BaselineFit, corpus: &Corpus, seed: u64) -> Self {
        Self {
            model: fit.kind,
            k: fit.tstep.phi.num_topics(),
            seed,
            terms: corpus.vocabulary.terms().to_vec(),
            authors: corpus.authors.clone(),
            phi: fit.tstep.phi.rows(),
            gamma: to_rows(&fit.tstep.prevalence.gamma),
            sigma: to_rows(&fit.tstep.prevalence.sigma),
            bound: fit.tstep.bound,
            weights: None,
            labels: None,
            author_topics: fit.author_topics.clone(),
            d_lik: None,
            d_disp: None,
            converged: Some(fit.tstep.converged),
            outer_iters: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
