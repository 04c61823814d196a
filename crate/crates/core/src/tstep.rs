//! Conditional topic model given fixed author cluster labels.
//!
//! Each document's topic proportions are logistic-normal with mean
//! `Gamma^T x_d` where `x_d` is a one-hot covariate (the author's cluster).
//! Inference is variational EM with a Laplace approximation at each
//! document's mode: a damped Newton E-step per document, then a MAP update
//! of the topic-word matrix and a ridge/covariance update of the prevalence
//! parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::linalg::{floor_eigenvalues, log_det_spd, softmax_pinned, Gaussian, LN_2PI};
use crate::rng::substream;

pub const PHI_FLOOR: f64 = 1e-10;

/// K x V topic-word matrix, rows on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMatrix {
    k: usize,
    v: usize,
    data: Vec<f64>,
}

impl TopicMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let v = rows.first().map_or(0, Vec::len);
        if k == 0 || v == 0 || rows.iter().any(|r| r.len() != v) {
            return Err(Error::InvalidInput("topic matrix must be a non-empty rectangle".into()));
        }
        Ok(Self {
            k,
            v,
            data: rows.concat(),
        })
    }

    pub fn uniform(k: usize, v: usize) -> Self {
        Self {
            k,
            v,
            data: vec![1.0 / v as f64; k * v],
        }
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn row(&self, topic: usize) -> &[f64] {
        &self.data[topic * self.v..(topic + 1) * self.v]
    }

    #[inline]
    pub fn get(&self, topic: usize, word: usize) -> f64 {
        self.data[topic * self.v + word]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|k| self.row(k).to_vec()).collect()
    }
}

/// Variational state of one document: the mode of its unconstrained topic
/// weights, the implied proportions and the Laplace covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTopicState {
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    pub nu: DMatrix<f64>,
    /// Log joint of the mode (`f` below).
    pub objective: f64,
    pub newton_iters: usize,
}

impl DocTopicState {
    /// Contribution of the document to the approximate evidence bound.
    pub fn bound(&self) -> f64 {
        let d = self.eta.len() as f64;
        let log_det = log_det_spd(&self.nu).unwrap_or(f64::NEG_INFINITY);
        self.objective + 0.5 * (d * LN_2PI + log_det)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceParams {
    /// One row of (K-1) weights per covariate level.
    pub gamma: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma0_sq: f64,
}

impl PrevalenceParams {
    pub fn initial(levels: usize, dim: usize, sigma0_sq: f64) -> Self {
        Self {
            gamma: DMatrix::zeros(levels, dim),
            sigma: DMatrix::identity(dim, dim),
            sigma0_sq,
        }
    }

    pub fn mean(&self, level: usize) -> Vec<f64> {
        self.gamma.row(level).iter().cloned().collect()
    }

    /// `-1/2 |gamma|^2 / sigma0^2` summed over levels, constants dropped.
    pub fn log_prior(&self) -> f64 {
        if self.sigma0_sq.is_infinite() {
            return 0.0;
        }
        -0.5 * self.gamma.norm_squared() / self.sigma0_sq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-5,
            max_iter: 500,
            max_halvings: 30,
        }
    }
}

/// `f(eta) = log N(eta | mean, Sigma) + sum_n log sum_k theta_k phi_{k,w_n}`
/// with `theta = softmax([eta, 0])`.
pub struct DocObjective<'a> {
    pub bag: &'a [(usize, f64)],
    pub mean: &'a [f64],
    pub prior: &'a Gaussian,
    pub phi: &'a TopicMatrix,
}

impl DocObjective<'_> {
    pub fn value(&self, eta: &[f64]) -> f64 {
        let theta = softmax_pinned(eta);
        let mut ll = self.prior.log_density(eta, self.mean);
        for &(w, c) in self.bag {
            let s: f64 = theta.iter().enumerate().map(|(k, t)| t * self.phi.get(k, w)).sum();
            ll += c * s.ln();
        }
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }

    pub fn gradient(&self, eta: &[f64]) -> Vec<f64> {
        self.derivatives(eta).1.iter().cloned().collect()
    }

    /// Value, gradient and negative Hessian.
    pub fn derivatives(&self, eta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = eta.len();
        let k = d + 1;
        let theta = softmax_pinned(eta);
        let precision = self.prior.precision();
        let diff: Vec<f64> = eta.iter().zip(self.mean).map(|(e, m)| e - m).collect();

        let mut value = self.prior.log_density(eta, self.mean);
        let mut grad = DVector::zeros(d);
        let mut neg_hess = precision.clone();
        let mut total = 0.0;
        let mut r = vec![0.0; k];
        for &(w, c) in self.bag {
            let mut s = 0.0;
            for (j, rj) in r.iter_mut().enumerate() {
                *rj = theta[j] * self.phi.get(j, w);
                s += *rj;
            }
            value += c * s.ln();
            if s.is_nan() || s <= 0.0 {
                continue;
            }
            r.iter_mut().for_each(|x| *x /= s);
            total += c;
            for i in 0..d {
                grad[i] += c * r[i];
                neg_hess[(i, i)] -= c * r[i];
                for j in 0..d {
                    neg_hess[(i, j)] += c * r[i] * r[j];
                }
            }
        }
        for i in 0..d {
            grad[i] -= total * theta[i];
            neg_hess[(i, i)] += total * theta[i];
            for j in 0..d {
                neg_hess[(i, j)] -= total * theta[i] * theta[j];
            }
        }
        let prior_grad = precision * DVector::from_column_slice(&diff);
        grad -= prior_grad;
        if value.is_nan() {
            value = f64::NEG_INFINITY;
        }
        (value, grad, neg_hess)
    }
}

fn invert_neg_hessian(a: &DMatrix<f64>) -> DMatrix<f64> {
    let a = (a + a.transpose()) * 0.5;
    let pd = match a.clone().cholesky() {
        Some(ch) => return crate::linalg::symmetrize(&ch.inverse()),
        None => floor_eigenvalues(&a, 1e-8),
    };
    let inv = pd.cholesky().expect("floored matrix is positive definite").inverse();
    crate::linalg::symmetrize(&inv)
}

/// Maximize the document objective by damped Newton ascent with step
/// halving, falling back to the gradient direction whenever the negative
/// Hessian is not positive definite.
pub fn estep_document(
    doc: usize,
    objective: &DocObjective<'_>,
    init: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<DocTopicState> {
    let mut eta: Vec<f64> = init.unwrap_or(objective.mean).to_vec();
    let (mut f, mut grad, mut neg_hess) = objective.derivatives(&eta);
    if !f.is_finite() {
        return Err(Error::DegenerateWordProbability { doc });
    }
    let mut iters = 0;
    while iters < opts.max_iter {
        if grad.amax() < opts.grad_tol {
            break;
        }
        iters += 1;
        let direction = match neg_hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate: Vec<f64> = eta
                .iter()
                .zip(direction.iter())
                .map(|(e, d)| e + step * d)
                .collect();
            let fc = objective.value(&candidate);
            if fc >= f {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(candidate) => {
                eta = candidate;
                (f, grad, neg_hess) = objective.derivatives(&eta);
            }
            None => break,
        }
    }
    Ok(DocTopicState {
        theta: softmax_pinned(&eta),
        nu: invert_neg_hessian(&neg_hess),
        eta,
        objective: f,
        newton_iters: iters,
    })
}

/// MAP update of the topic-word matrix from token responsibilities
/// `r_{d,n,k} ∝ theta_{d,k} phi_old_{k,w_n}`. Returns the new matrix and the
/// topics that received no responsibility (reset to uniform).
pub fn mstep_phi(
    bags: &[Vec<(usize, f64)>],
    states: &[DocTopicState],
    phi_old: &TopicMatrix,
    beta: f64,
) -> (TopicMatrix, Vec<usize>) {
    let k = phi_old.num_topics();
    let v = phi_old.vocab_size();
    let mut counts = vec![0.0; k * v];
    let mut r = vec![0.0; k];
    for (bag, state) in bags.iter().zip(states) {
        for &(w, c) in bag {
            let mut s = 0.0;
            for (j, rj) in r.iter_mut().enumerate() {
                *rj = state.theta[j] * phi_old.get(j, w);
                s += *rj;
            }
            if s.is_nan() || s <= 0.0 {
                continue;
            }
            for (j, rj) in r.iter().enumerate() {
                counts[j * v + w] += c * rj / s;
            }
        }
    }
    let smoothing = (beta - 1.0).max(0.0);
    let mut empty = Vec::new();
    for j in 0..k {
        let row = &mut counts[j * v..(j + 1) * v];
        let total: f64 = row.iter().sum();
        if total.is_nan() || total <= 0.0 {
            log::warn!("topic {j} received no responsibility; resetting to uniform");
            empty.push(j);
            row.iter_mut().for_each(|x| *x = 1.0 / v as f64);
            continue;
        }
        row.iter_mut().for_each(|x| *x = (*x + smoothing).max(PHI_FLOOR));
        let norm: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= norm);
    }
    (TopicMatrix { k, v, data: counts }, empty)
}

/// Ridge regression of the document modes on their one-hot covariates,
/// followed by the residual covariance update.
///
/// With one-hot rows the ridge solution decouples per level:
/// `gamma_l = (n_l P + I / sigma0^2)^{-1} P sum_{d in l} eta_d`, where `P` is
/// the precision of `sigma_prev`. The covariance is the average of
/// `(eta_d - gamma_{l(d)})(...)^T + nu_d`, eigenvalue-floored.
/// Levels without documents keep the prior mean (zero) and are returned.
pub fn mstep_prevalence(
    states: &[DocTopicState],
    levels: &[usize],
    n_levels: usize,
    sigma0_sq: f64,
    sigma_prev: &DMatrix<f64>,
    sigma_floor: f64,
) -> Result<(PrevalenceParams, Vec<usize>)> {
    if states.len() != levels.len() {
        return Err(Error::LengthMismatch {
            left: states.len(),
            right: levels.len(),
        });
    }
    let dim = sigma_prev.nrows();
    let precision = Gaussian::new(&floor_eigenvalues(sigma_prev, sigma_floor))
        .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?
        .precision()
        .clone();
    let mut sums = vec![DVector::<f64>::zeros(dim); n_levels];
    let mut n = vec![0usize; n_levels];
    for (state, &l) in states.iter().zip(levels) {
        sums[l] += DVector::from_column_slice(&state.eta);
        n[l] += 1;
    }
    let ridge = if sigma0_sq.is_infinite() { 0.0 } else { 1.0 / sigma0_sq };
    let mut gamma = DMatrix::zeros(n_levels, dim);
    let mut empty = Vec::new();
    for l in 0..n_levels {
        if n[l] == 0 {
            log::warn!("covariate level {l} has no documents; its mean stays at the prior");
            empty.push(l);
            continue;
        }
        let lhs = &precision * n[l] as f64 + DMatrix::identity(dim, dim) * ridge;
        let rhs = &precision * &sums[l];
        let sol = lhs
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| Error::InvalidInput("singular ridge system".into()))?;
        gamma.set_row(l, &sol.transpose());
    }
    let mut sigma = DMatrix::zeros(dim, dim);
    for (state, &l) in states.iter().zip(levels) {
        let resid = DVector::from_column_slice(&state.eta) - gamma.row(l).transpose();
        sigma += &resid * resid.transpose() + &state.nu;
    }
    sigma /= states.len().max(1) as f64;
    Ok((
        PrevalenceParams {
            gamma,
            sigma: floor_eigenvalues(&sigma, sigma_floor),
            sigma0_sq,
        },
        empty,
    ))
}

/// Approximate evidence bound: per-document Laplace terms plus the log
/// priors on the topics (Dirichlet, constants dropped) and on Gamma.
pub fn total_bound(states: &[DocTopicState], phi: &TopicMatrix, prevalence: &PrevalenceParams, beta: f64) -> f64 {
    let docs: f64 = states.iter().map(DocTopicState::bound).sum();
    let phi_prior = if beta == 1.0 {
        0.0
    } else {
        (beta - 1.0) * phi.data.iter().map(|p| p.ln()).sum::<f64>()
    };
    docs + phi_prior + prevalence.log_prior()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TStepConfig {
    pub k: usize,
    pub beta: f64,
    pub sigma0_sq: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub newton: NewtonOptions,
    pub sigma_floor: f64,
    /// Seed for the cold-start topic initialization.
    pub seed: u64,
}

impl TStepConfig {
    pub fn new(k: usize, beta: f64, sigma0_sq: f64, seed: u64) -> Self {
        Self {
            k,
            beta,
            sigma0_sq,
            max_iter: 200,
            rel_tol: 1e-5,
            newton: NewtonOptions::default(),
            sigma_floor: 1e-6,
            seed,
        }
    }
}

/// Warm-start state carried between fits.
#[derive(Debug, Clone)]
pub struct TStepState {
    pub phi: TopicMatrix,
    pub etas: Vec<Vec<f64>>,
    pub prevalence: PrevalenceParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TStepTraceRow {
    pub iteration: usize,
    pub bound: f64,
    pub mean_newton_iters: f64,
}

#[derive(Debug, Clone)]
pub struct TStepFit {
    pub phi: TopicMatrix,
    pub doc_states: Vec<DocTopicState>,
    pub prevalence: PrevalenceParams,
    pub bound: f64,
    pub trace: Vec<TStepTraceRow>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl TStepFit {
    pub fn state(&self) -> TStepState {
        TStepState {
            phi: self.phi.clone(),
            etas: self.doc_states.iter().map(|s| s.eta.clone()).collect(),
            prevalence: self.prevalence.clone(),
        }
    }
}

const INIT_SWEEPS: usize = 50;
const INIT_ALPHA: f64 = 0.5;
const INIT_BETA: f64 = 0.1;

/// Cold-start topics from a short collapsed Gibbs run of plain LDA
/// (`INIT_SWEEPS` sweeps, symmetric priors `INIT_ALPHA` and `INIT_BETA`),
/// read off as smoothed topic-word frequencies.
pub fn initial_topics(corpus: &Corpus, k: usize, seed: u64) -> TopicMatrix {
    let v = corpus.vocab_size();
    let mut rng = substream(seed, "topics", 0);
    let mut topic_word = vec![0.0f64; k * v];
    let mut topic_total = vec![0.0f64; k];
    let mut assignments: Vec<Vec<usize>> = Vec::with_capacity(corpus.num_docs());
    let mut doc_topic: Vec<Vec<f64>> = Vec::with_capacity(corpus.num_docs());
    for doc in &corpus.documents {
        let mut counts = vec![0.0; k];
        let z: Vec<usize> = doc
            .tokens
            .iter()
            .map(|&w| {
                let j = rng.random_range(0..k);
                counts[j] += 1.0;
                topic_word[j * v + w as usize] += 1.0;
                topic_total[j] += 1.0;
                j
            })
            .collect();
        assignments.push(z);
        doc_topic.push(counts);
    }
    let v_beta = v as f64 * INIT_BETA;
    let mut weights = vec![0.0; k];
    for _ in 0..INIT_SWEEPS {
        for (d, doc) in corpus.documents.iter().enumerate() {
            for (n, &w) in doc.tokens.iter().enumerate() {
                let w = w as usize;
                let old = assignments[d][n];
                doc_topic[d][old] -= 1.0;
                topic_word[old * v + w] -= 1.0;
                topic_total[old] -= 1.0;
                let mut total = 0.0;
                for (j, wt) in weights.iter_mut().enumerate() {
                    *wt = (doc_topic[d][j] + INIT_ALPHA) * (topic_word[j * v + w] + INIT_BETA) / (topic_total[j] + v_beta);
                    total += *wt;
                }
                let mut u = rng.random::<f64>() * total;
                let mut new = k - 1;
                for (j, wt) in weights.iter().enumerate() {
                    if u < *wt {
                        new = j;
                        break;
                    }
                    u -= wt;
                }
                assignments[d][n] = new;
                doc_topic[d][new] += 1.0;
                topic_word[new * v + w] += 1.0;
                topic_total[new] += 1.0;
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let denom = topic_total[j] + v_beta;
            (0..v).map(|w| (topic_word[j * v + w] + INIT_BETA) / denom).collect()
        })
        .collect();
    TopicMatrix::from_rows(&rows).expect("non-empty topic rows")
}

/// Fit the conditional topic model with per-document covariate `levels`.
pub fn fit_conditional_stm(
    corpus: &Corpus,
    levels: &[usize],
    n_levels: usize,
    config: &TStepConfig,
    init: Option<TStepState>,
) -> Result<TStepFit> {
    let n_docs = corpus.num_docs();
    if levels.len() != n_docs {
        return Err(Error::LengthMismatch {
            left: levels.len(),
            right: n_docs,
        });
    }
    if let Some(&bad) = levels.iter().find(|&&l| l >= n_levels) {
        return Err(Error::InvalidInput(format!("covariate level {bad} out of range {n_levels}")));
    }
    if config.k < 2 {
        return Err(Error::InvalidHyperparameters("K must be at least 2".into()));
    }
    let dim = config.k - 1;
    let bags: Vec<Vec<(usize, f64)>> = corpus.documents.iter().map(|d| d.bag_of_words()).collect();
    let TStepState {
        mut phi,
        mut etas,
        mut prevalence,
    } = match init {
        Some(state) => state,
        None => TStepState {
            phi: initial_topics(corpus, config.k, config.seed),
            etas: vec![vec![0.0; dim]; n_docs],
            prevalence: PrevalenceParams::initial(n_levels, dim, config.sigma0_sq),
        },
    };
    if phi.num_topics() != config.k || phi.vocab_size() != corpus.vocab_size() || etas.len() != n_docs {
        return Err(Error::InvalidInput("warm-start state does not match the corpus".into()));
    }
    if prevalence.gamma.nrows() != n_levels {
        return Err(Error::InvalidInput("warm-start prevalence has the wrong number of levels".into()));
    }
    prevalence.sigma0_sq = config.sigma0_sq;

    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut non_improving = 0;
    let mut previous: Option<f64> = None;
    let mut iterations = 0;
    let (states, bound) = loop {
        iterations += 1;
        let prior = Gaussian::new(&prevalence.sigma)
            .ok_or_else(|| Error::InvalidInput("prevalence covariance is not positive definite".into()))?;
        let means: Vec<Vec<f64>> = (0..n_levels).map(|l| prevalence.mean(l)).collect();
        let states = (0..n_docs)
            .into_par_iter()
            .map(|d| {
                let objective = DocObjective {
                    bag: &bags[d],
                    mean: &means[levels[d]],
                    prior: &prior,
                    phi: &phi,
                };
                estep_document(d, &objective, Some(&etas[d]), &config.newton)
            })
            .collect::<Result<Vec<_>>>()?;
        let bound = total_bound(&states, &phi, &prevalence, config.beta);
        let mean_newton = states.iter().map(|s| s.newton_iters as f64).sum::<f64>() / n_docs as f64;
        trace.push(TStepTraceRow {
            iteration: iterations,
            bound,
            mean_newton_iters: mean_newton,
        });
        if let Some(prev) = previous {
            let delta = bound - prev;
            if delta.abs() < config.rel_tol * prev.abs() {
                converged = true;
                break (states, bound);
            }
            if delta < 0.0 {
                non_improving += 1;
                if non_improving >= 3 {
                    let msg = format!("bound failed to improve for 3 consecutive iterations at iteration {iterations}");
                    log::warn!("{msg}");
                    warnings.push(msg);
                    break (states, bound);
                }
            } else {
                non_improving = 0;
            }
        }
        if iterations >= config.max_iter {
            break (states, bound);
        }
        previous = Some(bound);

        let (new_phi, empty) = mstep_phi(&bags, &states, &phi, config.beta);
        for j in empty {
            warnings.push(format!("topic {j} reset to uniform at iteration {iterations}"));
        }
        let (new_prev, empty) = mstep_prevalence(
            &states,
            levels,
            n_levels,
            config.sigma0_sq,
            &prevalence.sigma,
            config.sigma_floor,
        )?;
        for l in empty {
            warnings.push(format!("level {l} had no documents at iteration {iterations}"));
        }
        phi = new_phi;
        prevalence = new_prev;
        etas = states.into_iter().map(|s| s.eta).collect();
    };
    Ok(TStepFit {
        phi,
        doc_states: states,
        prevalence,
        bound,
        trace,
        iterations,
        converged,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian(dim: usize, var: f64) -> Gaussian {
        Gaussian::new(&(DMatrix::identity(dim, dim) * var)).unwrap()
    }

    #[test]
    fn uninformative_likelihood_returns_prior_mean() {
        let phi = TopicMatrix::uniform(2, 3);
        let prior = gaussian(1, 0.7);
        let mean = [0.3];
        let bag = [(1usize, 1.0)];
        let obj = DocObjective {
            bag: &bag,
            mean: &mean,
            prior: &prior,
            phi: &phi,
        };
        let s = estep_document(0, &obj, None, &NewtonOptions::default()).unwrap();
        assert_eq!(s.eta, vec![0.3]);
    }

    #[test]
    fn fully_informative_likelihood_saturates() {
        let phi = TopicMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let prior = gaussian(1, 1e12);
        let mean = [0.0];
        let bag = [(0usize, 5.0)];
        let obj = DocObjective {
            bag: &bag,
            mean: &mean,
            prior: &prior,
            phi: &phi,
        };
        let s = estep_document(0, &obj, None, &NewtonOptions::default()).unwrap();
        assert!(s.theta[0] > 0.999, "theta {:?}", s.theta);
    }

    #[test]
    fn matches_grid_search_on_small_instance() {
        let phi = TopicMatrix::from_rows(&[vec![0.6, 0.3, 0.1], vec![0.1, 0.2, 0.7]]).unwrap();
        let prior = gaussian(1, 2.0);
        let mean = [0.25];
        let bag = [(0usize, 2.0), (1, 1.0), (2, 2.0)];
        let obj = DocObjective {
            bag: &bag,
            mean: &mean,
            prior: &prior,
            phi: &phi,
        };
        // Oracle: dense grid over [-10, 10] with step 1e-4.
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut x: f64 = -10.0;
        while x <= 10.0 {
            let theta0 = 1.0 / (1.0 + (-x).exp());
            let theta = [theta0, 1.0 - theta0];
            let mut f = -0.5 * (LN_2PI + 2.0f64.ln()) - 0.5 * (x - 0.25) * (x - 0.25) / 2.0;
            for &(w, c) in &bag {
                f += c * (theta[0] * phi.get(0, w) + theta[1] * phi.get(1, w)).ln();
            }
            if f > best.0 {
                best = (f, x);
            }
            x += 1e-4;
        }
        let s = estep_document(0, &obj, None, &NewtonOptions::default()).unwrap();
        assert!((s.eta[0] - best.1).abs() < 1e-3, "{} vs {}", s.eta[0], best.1);
        assert_relative_eq!(s.objective, best.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_word_probability_is_degenerate() {
        let phi = TopicMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let prior = gaussian(1, 1.0);
        let mean = [0.0];
        let bag = [(1usize, 1.0)];
        let obj = DocObjective {
            bag: &bag,
            mean: &mean,
            prior: &prior,
            phi: &phi,
        };
        let err = estep_document(4, &obj, None, &NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateWordProbability { doc: 4 }));
    }

    fn state(theta: Vec<f64>) -> DocTopicState {
        let d = theta.len() - 1;
        let eta = (0..d).map(|i| (theta[i] / theta[d]).ln()).collect();
        DocTopicState {
            eta,
            theta,
            nu: DMatrix::identity(d, d),
            objective: 0.0,
            newton_iters: 0,
        }
    }

    #[test]
    fn mstep_phi_single_topic_gives_empirical_frequencies() {
        let phi_old = TopicMatrix::from_rows(&[vec![0.25; 4], vec![0.25; 4]]).unwrap();
        let mut only = state(vec![0.5, 0.5]);
        only.theta = vec![1.0, 0.0];
        let states = vec![only];
        let bags = vec![vec![(0usize, 3.0), (2, 1.0)]];
        let (phi, empty) = mstep_phi(&bags, &states, &phi_old, 1.0);
        assert_eq!(empty, vec![1]);
        assert_relative_eq!(phi.get(0, 0), 0.75, epsilon = 1e-9);
        assert_relative_eq!(phi.get(0, 2), 0.25, epsilon = 1e-9);
        assert_relative_eq!(phi.get(0, 1), PHI_FLOOR / (4.0 + 2.0 * PHI_FLOOR), epsilon = 1e-15);
        assert_eq!(phi.row(1), &[0.25; 4]);
    }

    #[test]
    fn mstep_phi_matches_hand_computed_table() {
        // Two documents, two topics, two words.
        let phi_old = TopicMatrix::from_rows(&[vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let states = vec![state(vec![0.5, 0.5]), state(vec![0.25, 0.75])];
        let bags = vec![vec![(0usize, 2.0), (1, 1.0)], vec![(1usize, 4.0)]];
        // Responsibilities by hand:
        // doc0 w0: (0.4, 0.15)/0.55 ; doc0 w1: (0.1, 0.35)/0.45
        // doc1 w1: (0.05, 0.525)/0.575
        let n00 = 2.0 * 0.4 / 0.55;
        let n10 = 2.0 * 0.15 / 0.55;
        let n01 = 0.1 / 0.45 + 4.0 * 0.05 / 0.575;
        let n11 = 0.35 / 0.45 + 4.0 * 0.525 / 0.575;
        let (phi, _) = mstep_phi(&bags, &states, &phi_old, 1.0);
        assert_relative_eq!(phi.get(0, 0), n00 / (n00 + n01), epsilon = 1e-12);
        assert_relative_eq!(phi.get(1, 1), n11 / (n10 + n11), epsilon = 1e-12);
        // beta = 2 adds one pseudo-count per cell.
        let (phi2, _) = mstep_phi(&bags, &states, &phi_old, 2.0);
        assert_relative_eq!(phi2.get(0, 0), (n00 + 1.0) / (n00 + n01 + 2.0), epsilon = 1e-12);
    }

    fn eta_state(eta: Vec<f64>, nu: f64) -> DocTopicState {
        let d = eta.len();
        DocTopicState {
            theta: softmax_pinned(&eta),
            eta,
            nu: DMatrix::identity(d, d) * nu,
            objective: 0.0,
            newton_iters: 0,
        }
    }

    #[test]
    fn prevalence_without_shrinkage_is_mean_and_covariance() {
        let states = vec![eta_state(vec![1.0], 0.1), eta_state(vec![3.0], 0.3)];
        let (p, _) = mstep_prevalence(&states, &[0, 0], 1, f64::INFINITY, &DMatrix::identity(1, 1), 1e-6).unwrap();
        assert_relative_eq!(p.gamma[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.sigma[(0, 0)], 1.0 + 0.2, epsilon = 1e-12);
    }

    #[test]
    fn prevalence_full_shrinkage_is_zero() {
        let states = vec![eta_state(vec![1.0, -2.0], 0.1), eta_state(vec![3.0, 5.0], 0.3)];
        let (p, _) = mstep_prevalence(&states, &[0, 1], 2, 1e-14, &DMatrix::identity(2, 2), 1e-6).unwrap();
        assert!(p.gamma.amax() < 1e-10);
    }

    #[test]
    fn prevalence_matches_closed_form_shrunken_means() {
        // Levels: docs 0,1 -> level 0; doc 2 -> level 1. Diagonal Sigma (2, 0.5), sigma0^2 = 4.
        let states = vec![
            eta_state(vec![1.0, 2.0], 0.0),
            eta_state(vec![3.0, 0.0], 0.0),
            eta_state(vec![-2.0, 1.0], 0.0),
        ];
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let (p, empty) = mstep_prevalence(&states, &[0, 0, 1], 2, 4.0, &sigma, 1e-6).unwrap();
        assert!(empty.is_empty());
        // gamma_{l,j} = sum / (n_l + Sigma_jj / sigma0^2)
        assert_relative_eq!(p.gamma[(0, 0)], 4.0 / (2.0 + 0.5), epsilon = 1e-12);
        assert_relative_eq!(p.gamma[(0, 1)], 2.0 / (2.0 + 0.125), epsilon = 1e-12);
        assert_relative_eq!(p.gamma[(1, 0)], -2.0 / (1.0 + 0.5), epsilon = 1e-12);
        assert_relative_eq!(p.gamma[(1, 1)], 1.0 / (1.0 + 0.125), epsilon = 1e-12);
    }

    #[test]
    fn empty_level_keeps_prior_mean() {
        let states = vec![eta_state(vec![1.0], 0.1)];
        let (p, empty) = mstep_prevalence(&states, &[0], 2, 1.0, &DMatrix::identity(1, 1), 1e-6).unwrap();
        assert_eq!(empty, vec![1]);
        assert_eq!(p.gamma[(1, 0)], 0.0);
    }
}
