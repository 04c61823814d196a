//! Synthetic corpora drawn from the clustered logistic-normal topic model,
//! with the ground truth kept alongside for evaluation.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, min_eigenvalue, psd_sqrt, softmax_pinned};
use crate::rng::{substream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Number of topics.
    pub k: usize,
    /// Number of author clusters.
    pub n_clusters: usize,
    pub vocab_size: usize,
    /// Symmetric Dirichlet concentration of each topic's word distribution.
    pub beta: f64,
    /// Symmetric Dirichlet concentration of each author's cluster distribution.
    pub eta: f64,
    /// Prior variance of the cluster-level topic weights.
    pub sigma0_sq: f64,
    /// Standard deviation of the isotropic document-level covariance, used
    /// when `doc_cov` is absent.
    pub sigma_doc: f64,
    /// Full (K-1)x(K-1) document-level covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_cov: Option<Vec<Vec<f64>>>,
    pub n_docs: usize,
    pub n_authors: usize,
    pub mean_doc_len: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    /// The simulation scale used throughout the benchmarks: 852 documents
    /// from 489 authors, 20 tokens on average, five topics, three clusters.
    fn default() -> Self {
        Self {
            k: 5,
            n_clusters: 3,
            vocab_size: 1000,
            beta: 1.0,
            eta: 0.5,
            sigma0_sq: 0.25,
            sigma_doc: 0.5,
            doc_cov: None,
            n_docs: 852,
            n_authors: 489,
            mean_doc_len: 20.0,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn doc_covariance(&self) -> DMatrix<f64> {
        match &self.doc_cov {
            Some(rows) => from_rows(rows),
            None => DMatrix::identity(self.k - 1, self.k - 1) * (self.sigma_doc * self.sigma_doc),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameters(m.to_string()));
        if self.k < 2 {
            return bad("K must be at least 2");
        }
        if self.n_clusters < 1 {
            return bad("the number of clusters must be at least 1");
        }
        if self.vocab_size < 1 {
            return bad("vocabulary size must be at least 1");
        }
        if !(self.beta > 0.0 && self.eta > 0.0 && self.sigma0_sq > 0.0) {
            return bad("beta, eta and sigma0^2 must be positive");
        }
        if self.sigma_doc.is_nan() || self.sigma_doc < 0.0 {
            return bad("sigma_doc must be non-negative");
        }
        if self.n_authors < 1 || self.n_docs < self.n_authors {
            return bad("need at least one author and at least one document per author");
        }
        if self.mean_doc_len.is_nan() || self.mean_doc_len <= 0.0 {
            return bad("mean document length must be positive");
        }
        if let Some(rows) = &self.doc_cov {
            let d = self.k - 1;
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return bad("document covariance must be (K-1)x(K-1)");
            }
            let m = from_rows(rows);
            if (&m - m.transpose()).abs().max() > 1e-12 {
                return bad("document covariance must be symmetric");
            }
            if min_eigenvalue(&m) < -1e-10 {
                return bad("document covariance must be positive semi-definite");
            }
        }
        Ok(())
    }
}

/// Model-level draws: topics, cluster weights and author memberships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    pub phi: Vec<Vec<f64>>,
    /// N_A x (K-1); the K-th coordinate is implicitly zero.
    pub gamma: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub phi: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub theta: Vec<Vec<f64>>,
    pub z: Vec<Vec<usize>>,
}

impl SyntheticTruth {
    /// `softmax([gamma_A, 0])` for each cluster.
    pub fn cluster_topics(&self) -> Vec<Vec<f64>> {
        self.gamma.iter().map(|g| softmax_pinned(g)).collect()
    }

    /// Per-author topic distribution implied by the author's true cluster.
    pub fn author_topics(&self) -> Vec<Vec<f64>> {
        let clusters = self.cluster_topics();
        self.labels.iter().map(|&a| clusters[a].clone()).collect()
    }
}

pub fn sample_dirichlet(rng: &mut Rng, alpha: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let mut draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|x| *x /= total);
    } else {
        // Every gamma variate underflowed: the limit is a point mass.
        let hot = rng.random_range(0..dim);
        draws = vec![0.0; dim];
        draws[hot] = 1.0;
    }
    draws
}

/// Inverse-CDF draw from a discrete distribution given its cumulative sums.
fn sample_cdf(rng: &mut Rng, cdf: &[f64]) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

pub fn sample_model(hp: &Hyperparameters) -> Result<TruthParams> {
    hp.validate()?;
    let mut rng = substream(hp.seed, "model", 0);
    let phi = (0..hp.k)
        .map(|_| sample_dirichlet(&mut rng, hp.beta, hp.vocab_size))
        .collect();
    let sd = hp.sigma0_sq.sqrt();
    let gamma = (0..hp.n_clusters)
        .map(|_| {
            (0..hp.k - 1)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let psi: Vec<Vec<f64>> = (0..hp.n_authors)
        .map(|_| sample_dirichlet(&mut rng, hp.eta, hp.n_clusters))
        .collect();
    let labels = psi
        .iter()
        .map(|p| sample_cdf(&mut rng, &cumulative(p)))
        .collect();
    Ok(TruthParams {
        phi,
        gamma,
        psi,
        labels,
    })
}

/// Assign documents to authors uniformly, then hand each orphaned author a
/// document taken from an author who has more than one.
fn allocate_documents(rng: &mut Rng, n_docs: usize, n_authors: usize) -> Vec<usize> {
    let mut owner: Vec<usize> = (0..n_docs).map(|_| rng.random_range(0..n_authors)).collect();
    let mut load = vec![0usize; n_authors];
    for &a in &owner {
        load[a] += 1;
    }
    for orphan in 0..n_authors {
        if load[orphan] > 0 {
            continue;
        }
        let donors: Vec<usize> = (0..n_docs).filter(|&d| load[owner[d]] > 1).collect();
        let d = donors[rng.random_range(0..donors.len())];
        load[owner[d]] -= 1;
        owner[d] = orphan;
        load[orphan] += 1;
    }
    owner
}

pub fn sample_corpus(hp: &Hyperparameters, params: &TruthParams) -> Result<(Corpus, SyntheticTruth)> {
    hp.validate()?;
    let mut rng = substream(hp.seed, "corpus", 0);
    let owner = allocate_documents(&mut rng, hp.n_docs, hp.n_authors);
    draw_documents(hp, params, &owner, rng)
}

/// Like [`sample_corpus`] but with a fixed author for each document; every
/// author must own at least one document.
pub fn sample_corpus_with_owners(hp: &Hyperparameters, params: &TruthParams, owner: &[usize]) -> Result<(Corpus, SyntheticTruth)> {
    hp.validate()?;
    if owner.len() != hp.n_docs {
        return Err(Error::LengthMismatch {
            left: owner.len(),
            right: hp.n_docs,
        });
    }
    let mut load = vec![0usize; hp.n_authors];
    for &a in owner {
        if a >= hp.n_authors {
            return Err(Error::MissingAuthor(a));
        }
        load[a] += 1;
    }
    if let Some(a) = load.iter().position(|&n| n == 0) {
        return Err(Error::MissingAuthor(a));
    }
    draw_documents(hp, params, owner, substream(hp.seed, "corpus", 1))
}

fn draw_documents(hp: &Hyperparameters, params: &TruthParams, owner: &[usize], mut rng: Rng) -> Result<(Corpus, SyntheticTruth)> {
    let d = hp.k - 1;
    if params.phi.len() != hp.k
        || params.phi.iter().any(|row| row.len() != hp.vocab_size)
        || params.gamma.len() != hp.n_clusters
        || params.gamma.iter().any(|g| g.len() != d)
        || params.labels.len() != hp.n_authors
        || params.labels.iter().any(|&l| l >= hp.n_clusters)
    {
        return Err(Error::InvalidInput(
            "truth parameters do not match the hyperparameters".into(),
        ));
    }
    let noise = psd_sqrt(&hp.doc_covariance());
    let length = Poisson::new(hp.mean_doc_len).map_err(|e| Error::InvalidHyperparameters(e.to_string()))?;
    let word_cdfs: Vec<Vec<f64>> = params.phi.iter().map(|p| cumulative(p)).collect();

    let mut documents = Vec::with_capacity(hp.n_docs);
    let mut theta_all = Vec::with_capacity(hp.n_docs);
    let mut z_all = Vec::with_capacity(hp.n_docs);
    let mut counts = vec![0u64; hp.vocab_size];
    for (doc, &author) in owner.iter().enumerate() {
        let cluster = params.labels[author];
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let eta: Vec<f64> = (0..d)
            .map(|i| params.gamma[cluster][i] + (0..d).map(|j| noise[(i, j)] * eps[j]).sum::<f64>())
            .collect();
        let theta = softmax_pinned(&eta);
        let topic_cdf = cumulative(&theta);
        let n = loop {
            let n = length.sample(&mut rng) as usize;
            if n >= 1 {
                break n;
            }
        };
        let mut z = Vec::with_capacity(n);
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            let topic = sample_cdf(&mut rng, &topic_cdf);
            let word = sample_cdf(&mut rng, &word_cdfs[topic]);
            counts[word] += 1;
            z.push(topic);
            tokens.push(word as u32);
        }
        documents.push(Document {
            doc_id: format!("d{doc}"),
            author_id: author,
            tokens,
            source_label: Some(format!("c{cluster}")),
        });
        theta_all.push(theta);
        z_all.push(z);
    }
    let vocabulary = Vocabulary::new((0..hp.vocab_size).map(|v| format!("w{v}")).collect(), counts)?;
    let authors = (0..hp.n_authors).map(|a| format!("a{a}")).collect();
    let corpus = Corpus::new(documents, authors, vocabulary)?;
    let truth = SyntheticTruth {
        phi: params.phi.clone(),
        gamma: params.gamma.clone(),
        psi: params.psi.clone(),
        labels: params.labels.clone(),
        theta: theta_all,
        z: z_all,
    };
    Ok((corpus, truth))
}

/// `sample_model` followed by `sample_corpus`.
pub fn simulate(hp: &Hyperparameters) -> Result<(Corpus, SyntheticTruth)> {
    let params = sample_model(hp)?;
    sample_corpus(hp, &params)
}
