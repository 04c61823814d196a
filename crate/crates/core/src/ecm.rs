//! Outer alternation between the topic step and the cluster step, the
//! Rand-index convergence check, and multi-restart model selection.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::cstep::{gmm_em, kmeans_restarts, ClusterAssignment, GmmFit, GmmOptions, GroupedPoints};
use crate::error::{Error, Result};
use crate::eval::{canonical_partition, rand_index};
use crate::linalg::{softmax_pinned, squared_distance};
use crate::rng::{derive_seed, substream};
use crate::tstep::{
    fit_conditional_stm, DocTopicState, NewtonOptions, PrevalenceParams, TStepConfig, TStepFit,
    TopicMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    /// Maximize the fitted-likelihood surrogate.
    Lik,
    /// Minimize the within/between cluster dispersion ratio.
    Disp,
}

impl FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lik" => Ok(Selector::Lik),
            "disp" | "dips" => Ok(Selector::Disp),
            other => Err(Error::InvalidInput(format!("unknown selector {other:?}"))),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::Lik => "lik",
            Selector::Disp => "disp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmConfig {
    pub k: usize,
    pub n_clusters: usize,
    pub beta: f64,
    /// Dirichlet concentration smoothing the mixture weights.
    pub eta: f64,
    pub sigma0_sq: f64,
    /// Halt once consecutive partitions have Rand index `>= 1 - epsilon`.
    pub epsilon: f64,
    pub outer_max: usize,
    /// Iterations of the covariate-free warm-up fit.
    pub init_iters: usize,
    pub tstep_max_iter: usize,
    pub tstep_rel_tol: f64,
    pub newton: NewtonOptions,
    pub sigma_floor: f64,
    pub gmm: GmmOptions,
}

impl EcmConfig {
    pub fn new(k: usize, n_clusters: usize) -> Self {
        Self {
            k,
            n_clusters,
            beta: 1.0,
            eta: 1.0,
            sigma0_sq: 1.0,
            epsilon: 0.0,
            outer_max: 100,
            init_iters: 20,
            tstep_max_iter: 200,
            tstep_rel_tol: 1e-5,
            newton: NewtonOptions::default(),
            sigma_floor: 1e-6,
            gmm: GmmOptions::default(),
        }
    }

    pub fn tstep_config(&self, seed: u64) -> TStepConfig {
        TStepConfig {
            k: self.k,
            beta: self.beta,
            sigma0_sq: self.sigma0_sq,
            max_iter: self.tstep_max_iter,
            rel_tol: self.tstep_rel_tol,
            newton: self.newton,
            sigma_floor: self.sigma_floor,
            seed,
        }
    }

    fn validate(&self, corpus: &Corpus) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidHyperparameters("K must be at least 2".into()));
        }
        if self.n_clusters < 1 {
            return Err(Error::InvalidHyperparameters("need at least one cluster".into()));
        }
        if corpus.num_authors() < self.n_clusters {
            return Err(Error::InvalidHyperparameters(format!(
                "{} authors cannot fill {} clusters",
                corpus.num_authors(),
                self.n_clusters
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidHyperparameters("epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterTraceRow {
    pub iteration: usize,
    /// Rand index between this iteration's partition and the previous one;
    /// absent for the initial partition.
    pub d_c: Option<f64>,
    pub bound: f64,
    pub gmm_penalized_loglik: f64,
    pub tstep_iters: usize,
    pub labels_hash: u64,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub phi: TopicMatrix,
    pub doc_states: Vec<DocTopicState>,
    pub prevalence: PrevalenceParams,
    pub assignment: ClusterAssignment,
    /// Author index of each document.
    pub doc_authors: Vec<usize>,
    pub trace: Vec<OuterTraceRow>,
    pub tstep_bound: f64,
    pub gmm_penalized_loglik: f64,
    pub d_lik: f64,
    pub d_disp: Option<f64>,
    pub seed: u64,
    pub outer_iters: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn doc_clusters(&self) -> Vec<usize> {
        self.doc_authors.iter().map(|&a| self.assignment.labels[a]).collect()
    }

    /// Topic distribution of each author's inferred cluster.
    pub fn author_topics(&self) -> Vec<Vec<f64>> {
        self.assignment
            .labels
            .iter()
            .map(|&c| softmax_pinned(&self.prevalence.mean(c)))
            .collect()
    }
}

fn partition_hash(labels: &[usize]) -> u64 {
    canonical_partition(labels)
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &l| (h ^ l as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn grouped_modes(states: &[DocTopicState], groups: &[Vec<usize>]) -> Result<GroupedPoints> {
    GroupedPoints::new(states.iter().map(|s| s.eta.clone()).collect(), groups.to_vec())
}

/// Rename the components of `gmm` so that its labels coincide with
/// `target`, which must describe the same partition.
fn relabel_to(gmm: &mut GmmFit, target: &[usize]) {
    let n = gmm.means.len();
    let mut map: Vec<Option<usize>> = vec![None; n];
    for (&new, &old) in gmm.assignment.labels.iter().zip(target) {
        map[new] = Some(old);
    }
    let used: HashSet<usize> = map.iter().flatten().copied().collect();
    let mut free = (0..n).filter(|c| !used.contains(c));
    let map: Vec<usize> = map.into_iter().map(|m| m.unwrap_or_else(|| free.next().unwrap())).collect();
    let permute = |v: &Vec<f64>| {
        let mut out = vec![0.0; n];
        for (c, x) in v.iter().enumerate() {
            out[map[c]] = *x;
        }
        out
    };
    let mut means = vec![Vec::new(); n];
    for (c, m) in gmm.means.drain(..).enumerate() {
        means[map[c]] = m;
    }
    gmm.means = means;
    gmm.assignment.weights = permute(&gmm.assignment.weights);
    gmm.assignment.responsibilities = gmm.assignment.responsibilities.iter().map(permute).collect();
    gmm.assignment.labels = target.to_vec();
}

/// One ECM run from a seed-specific initialization.
///
/// Initialization: a covariate-free topic fit for `init_iters` iterations,
/// then k-means++/Lloyd on the per-author mean modes. Each outer iteration
/// fits the topic step under the current labels and re-clusters authors
/// with a mixture EM started at the fitted cluster means. The loop halts
/// when consecutive partitions have Rand index `>= 1 - epsilon`, when a
/// previously visited partition recurs, or after `outer_max` iterations.
pub fn run_ecm(corpus: &Corpus, cfg: &EcmConfig, seed: u64) -> Result<FitResult> {
    cfg.validate(corpus)?;
    let n_docs = corpus.num_docs();
    let groups = corpus.docs_by_author();
    let doc_authors = corpus.doc_authors();
    let tcfg = cfg.tstep_config(derive_seed(seed, "tstep", 0));
    let mut warnings = Vec::new();

    let mut init_cfg = tcfg.clone();
    init_cfg.max_iter = cfg.init_iters.max(1);
    let warmup = fit_conditional_stm(corpus, &vec![0; n_docs], 1, &init_cfg, None)?;
    let modes = grouped_modes(&warmup.doc_states, &groups)?;
    let (mut labels, centers) = kmeans_restarts(&modes.author_means(), cfg.n_clusters, &mut substream(seed, "init-kmeans", 0), 100, 10);
    let mut state = warmup.state();
    state.prevalence = PrevalenceParams {
        gamma: nalgebra::DMatrix::from_fn(cfg.n_clusters, cfg.k - 1, |i, j| centers[i][j]),
        sigma: warmup.prevalence.sigma.clone(),
        sigma0_sq: cfg.sigma0_sq,
    };

    let mut trace = vec![OuterTraceRow {
        iteration: 0,
        d_c: None,
        bound: warmup.bound,
        gmm_penalized_loglik: f64::NAN,
        tstep_iters: warmup.iterations,
        labels_hash: partition_hash(&labels),
        labels: labels.clone(),
    }];
    let mut seen: HashSet<Vec<usize>> = HashSet::from([canonical_partition(&labels)]);
    let mut converged = false;
    let mut outer_iters = 0;
    let with_context = |iteration: usize| move |e: Error| Error::OuterIteration {
        iteration,
        source: Box::new(e),
    };

    let (tfit, mut gfit, next_labels): (TStepFit, GmmFit, Vec<usize>) = loop {
        outer_iters += 1;
        let t = outer_iters;
        let levels: Vec<usize> = doc_authors.iter().map(|&a| labels[a]).collect();
        let tfit = fit_conditional_stm(corpus, &levels, cfg.n_clusters, &tcfg, Some(state))
            .map_err(with_context(t))?;
        warnings.extend(tfit.warnings.iter().map(|w| format!("outer {t}: {w}")));
        let data = grouped_modes(&tfit.doc_states, &groups).map_err(with_context(t))?;
        let init_means: Vec<Vec<f64>> = (0..cfg.n_clusters).map(|c| tfit.prevalence.mean(c)).collect();
        let gfit = gmm_em(&data, cfg.n_clusters, cfg.eta, Some(&init_means), &cfg.gmm, derive_seed(seed, "gmm", t as u64))
            .map_err(with_context(t))?;
        warnings.extend(gfit.warnings.iter().map(|w| format!("outer {t}: {w}")));
        let new_labels = gfit.assignment.labels.clone();
        let d_c = if labels.len() >= 2 {
            rand_index(&labels, &new_labels)?
        } else {
            1.0
        };
        trace.push(OuterTraceRow {
            iteration: t,
            d_c: Some(d_c),
            bound: tfit.bound,
            gmm_penalized_loglik: gfit.penalized_loglik,
            tstep_iters: tfit.iterations,
            labels_hash: partition_hash(&new_labels),
            labels: new_labels.clone(),
        });
        state = tfit.state();
        if d_c >= 1.0 - cfg.epsilon {
            converged = true;
            break (tfit, gfit, new_labels);
        }
        if !seen.insert(canonical_partition(&new_labels)) {
            let msg = format!("partition cycle detected at outer iteration {t}");
            log::warn!("{msg}");
            warnings.push(msg);
            break (tfit, gfit, new_labels);
        }
        if t >= cfg.outer_max {
            let msg = format!("no convergence after {t} outer iterations");
            log::warn!("{msg}");
            warnings.push(msg);
            break (tfit, gfit, new_labels);
        }
        labels = new_labels;
    };

    // Keep the returned cluster parameters and labels consistent: either the
    // partition is unchanged (rename components), or refit the topic step
    // under the final partition.
    let tfit = if canonical_partition(&next_labels) == canonical_partition(&labels) {
        relabel_to(&mut gfit, &labels);
        tfit
    } else {
        let levels: Vec<usize> = doc_authors.iter().map(|&a| next_labels[a]).collect();
        let last = fit_conditional_stm(corpus, &levels, cfg.n_clusters, &tcfg, Some(tfit.state()))
            .map_err(with_context(outer_iters + 1))?;
        warnings.extend(last.warnings.iter().map(|w| format!("final refit: {w}")));
        last
    };

    let mut fit = FitResult {
        phi: tfit.phi,
        doc_states: tfit.doc_states,
        prevalence: tfit.prevalence,
        assignment: gfit.assignment,
        doc_authors,
        trace,
        tstep_bound: tfit.bound,
        gmm_penalized_loglik: gfit.penalized_loglik,
        d_lik: 0.0,
        d_disp: None,
        seed,
        outer_iters,
        converged,
        warnings,
    };
    fit.d_lik = compute_d_lik(&fit);
    if cfg.n_clusters >= 2 {
        fit.d_disp = Some(compute_dispersion(&fit)?);
    }
    Ok(fit)
}

/// Fitted-likelihood surrogate: the topic step's approximate evidence bound
/// plus the cluster step's penalized log-likelihood.
pub fn compute_d_lik(fit: &FitResult) -> f64 {
    fit.tstep_bound + fit.gmm_penalized_loglik
}

/// `SSW / SSB` with
/// `SSW = (1/D) sum_d |theta_d - c_{A(d)}|^2` and
/// `SSB = (1/N_A) sum_A |c_A - mean(c)|^2`, where `c_A` is the cluster's
/// topic distribution. Returns infinity when all cluster distributions
/// coincide.
pub fn dispersion(thetas: &[Vec<f64>], doc_clusters: &[usize], cluster_topics: &[Vec<f64>]) -> Result<f64> {
    if cluster_topics.len() < 2 {
        return Err(Error::DispersionUndefined);
    }
    if thetas.len() != doc_clusters.len() || thetas.is_empty() {
        return Err(Error::LengthMismatch {
            left: thetas.len(),
            right: doc_clusters.len(),
        });
    }
    let ssw = thetas
        .iter()
        .zip(doc_clusters)
        .map(|(t, &c)| squared_distance(t, &cluster_topics[c]))
        .sum::<f64>()
        / thetas.len() as f64;
    let dim = cluster_topics[0].len();
    let n = cluster_topics.len() as f64;
    let centre: Vec<f64> = (0..dim).map(|j| cluster_topics.iter().map(|c| c[j]).sum::<f64>() / n).collect();
    let ssb = cluster_topics.iter().map(|c| squared_distance(c, &centre)).sum::<f64>() / n;
    if ssb == 0.0 {
        log::warn!("cluster topic distributions coincide; dispersion is infinite");
        return Ok(f64::INFINITY);
    }
    Ok(ssw / ssb)
}

pub fn compute_dispersion(fit: &FitResult) -> Result<f64> {
    let thetas: Vec<Vec<f64>> = fit.doc_states.iter().map(|s| s.theta.clone()).collect();
    let clusters: Vec<Vec<f64>> = (0..fit.prevalence.gamma.nrows())
        .map(|c| softmax_pinned(&fit.prevalence.mean(c)))
        .collect();
    dispersion(&thetas, &fit.doc_clusters(), &clusters)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub seed: u64,
    pub d_lik: Option<f64>,
    pub d_disp: Option<f64>,
    pub converged: bool,
    pub outer_iters: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MultiStartResult {
    pub best: FitResult,
    pub best_restart: usize,
    pub summary: Vec<RestartSummary>,
}

pub fn restart_seed(master: u64, restart: usize) -> u64 {
    derive_seed(master, "restart", restart as u64)
}

/// Run `restarts` independent ECM fits (in parallel) and keep the best by
/// `selector`. Ties go to the lowest seed.
pub fn multi_start(corpus: &Corpus, cfg: &EcmConfig, restarts: usize, selector: Selector, master_seed: u64) -> Result<MultiStartResult> {
    if restarts < 1 {
        return Err(Error::InvalidInput("need at least one restart".into()));
    }
    let outcomes: Vec<Result<FitResult>> = (0..restarts)
        .into_par_iter()
        .map(|m| run_ecm(corpus, cfg, restart_seed(master_seed, m)))
        .collect();
    let summary: Vec<RestartSummary> = outcomes
        .iter()
        .enumerate()
        .map(|(m, o)| match o {
            Ok(fit) => RestartSummary {
                restart: m,
                seed: fit.seed,
                d_lik: Some(fit.d_lik),
                d_disp: fit.d_disp,
                converged: fit.converged,
                outer_iters: fit.outer_iters,
                error: None,
            },
            Err(e) => RestartSummary {
                restart: m,
                seed: restart_seed(master_seed, m),
                d_lik: None,
                d_disp: None,
                converged: false,
                outer_iters: 0,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let selector = if selector == Selector::Disp && cfg.n_clusters < 2 {
        log::warn!("dispersion is undefined for one cluster; selecting by likelihood");
        Selector::Lik
    } else {
        selector
    };
    // Score to maximize.
    let score = |fit: &FitResult| match selector {
        Selector::Lik => fit.d_lik,
        Selector::Disp => -fit.d_disp.unwrap_or(f64::INFINITY),
    };
    let best = outcomes
        .iter()
        .enumerate()
        .filter_map(|(m, o)| o.as_ref().ok().map(|f| (m, f)))
        .filter(|(_, f)| !score(f).is_nan())
        .max_by(|(_, a), (_, b)| score(a).total_cmp(&score(b)).then(b.seed.cmp(&a.seed)))
        .map(|(m, _)| m);
    let Some(best_restart) = best else {
        let causes: Vec<String> = summary
            .iter()
            .filter_map(|s| s.error.as_ref().map(|e| format!("restart {}: {e}", s.restart)))
            .collect();
        return Err(Error::AllRestartsFailed(causes.join("; ")));
    };
    let best = outcomes.into_iter().nth(best_restart).unwrap()?;
    Ok(MultiStartResult {
        best,
        best_restart,
        summary,
    })
}

/// Unconstrained modes as points grouped by author, for external
/// re-clustering (e.g. BIC selection on a finished fit).
pub fn author_grouped_modes(fit: &FitResult) -> Result<GroupedPoints> {
    let n_authors = fit.assignment.labels.len();
    let mut groups = vec![Vec::new(); n_authors];
    for (d, &a) in fit.doc_authors.iter().enumerate() {
        groups[a].push(d);
    }
    grouped_modes(&fit.doc_states, &groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dispersion_zero_when_docs_sit_on_means() {
        let c = vec![vec![0.7, 0.3], vec![0.2, 0.8]];
        let thetas = vec![c[0].clone(), c[1].clone(), c[1].clone()];
        assert_eq!(dispersion(&thetas, &[0, 1, 1], &c).unwrap(), 0.0);
    }

    #[test]
    fn dispersion_hand_computed() {
        // Cluster means (0.8,0.2) and (0.4,0.6); grand mean (0.6,0.4).
        // SSB = ((0.2^2+0.2^2) * 2) / 2 = 0.08.
        // Doc 0 theta (0.7,0.3) in cluster 0: 0.01+0.01 = 0.02.
        // Doc 1 theta (0.5,0.5) in cluster 1: 0.01+0.01 = 0.02.
        // SSW = 0.04 / 2 = 0.02 ; ratio 0.25.
        let c = vec![vec![0.8, 0.2], vec![0.4, 0.6]];
        let thetas = vec![vec![0.7, 0.3], vec![0.5, 0.5]];
        assert_relative_eq!(dispersion(&thetas, &[0, 1], &c).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn dispersion_degenerate_cases() {
        let same = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert_eq!(dispersion(&[vec![0.4, 0.6]], &[0], &same).unwrap(), f64::INFINITY);
        assert!(matches!(
            dispersion(&[vec![0.4, 0.6]], &[0], &same[..1]),
            Err(Error::DispersionUndefined)
        ));
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("lik".parse::<Selector>().unwrap(), Selector::Lik);
        assert_eq!("disp".parse::<Selector>().unwrap(), Selector::Disp);
        assert!("max".parse::<Selector>().is_err());
    }
}
