//! Author clustering given document topic modes: a Gaussian mixture in
//! which every document of an author shares the author's component.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{floor_eigenvalues, log_sum_exp, squared_distance, Gaussian};
use crate::rng::{substream, Rng};

/// Document points grouped by author.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedPoints {
    pub points: Vec<Vec<f64>>,
    pub groups: Vec<Vec<usize>>,
}

impl GroupedPoints {
    pub fn new(points: Vec<Vec<f64>>, groups: Vec<Vec<usize>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.is_empty() || dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput("points must be non-empty with a common dimension".into()));
        }
        for (a, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidInput(format!("author {a} has no documents")));
            }
            if g.iter().any(|&d| d >= points.len()) {
                return Err(Error::InvalidInput(format!("author {a} references a missing document")));
            }
        }
        let mut seen = vec![false; points.len()];
        for &d in groups.iter().flatten() {
            if std::mem::replace(&mut seen[d], true) {
                return Err(Error::InvalidInput(format!("document {d} belongs to more than one author")));
            }
        }
        if let Some(d) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidInput(format!("document {d} has no author")));
        }
        Ok(Self { points, groups })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn num_authors(&self) -> usize {
        self.groups.len()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn author_means(&self) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .map(|g| {
                let mut m = vec![0.0; self.dim()];
                for &d in g {
                    for (mi, x) in m.iter_mut().zip(&self.points[d]) {
                        *mi += x;
                    }
                }
                m.iter_mut().for_each(|x| *x /= g.len() as f64);
                m
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub responsibilities: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Posterior component probabilities per author,
/// `r_{a,c} ∝ w_c prod_{d in a} N(x_d | mu_c, Sigma)`, computed in log space.
/// Returns the responsibilities and the observed-data log-likelihood.
pub fn author_responsibilities(
    data: &GroupedPoints,
    means: &[Vec<f64>],
    cov: &DMatrix<f64>,
    weights: &[f64],
) -> Result<(Vec<Vec<f64>>, f64)> {
    let gauss = Gaussian::new(cov).ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?;
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let rows: Vec<(Vec<f64>, f64)> = data
        .groups
        .par_iter()
        .map(|g| {
            let logp: Vec<f64> = means
                .iter()
                .zip(&log_w)
                .map(|(mu, lw)| lw + g.iter().map(|&d| gauss.log_density(&data.points[d], mu)).sum::<f64>())
                .collect();
            let norm = log_sum_exp(&logp);
            if !norm.is_finite() {
                log::warn!("all mixture components underflowed for an author; using a uniform row");
                let c = means.len() as f64;
                return (vec![1.0 / c; means.len()], norm);
            }
            (logp.iter().map(|lp| (lp - norm).exp()).collect(), norm)
        })
        .collect();
    let loglik = rows.iter().map(|(_, n)| n).sum();
    Ok((rows.into_iter().map(|(r, _)| r).collect(), loglik))
}

/// k-means++ seeding.
pub fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let d: Vec<f64> = centers.iter().map(|c| -squared_distance(p, c)).collect();
    argmax(&d)
}

/// k-means++ seeding followed by Lloyd iterations. Returns labels and centers.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut Rng, max_iter: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut centers = kmeans_pp(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iter {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut n = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            n[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if n[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / n[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    (labels, centers)
}

/// Within-cluster sum of squared distances.
pub fn kmeans_inertia(points: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| squared_distance(p, &centers[l])).sum()
}

/// Best of `n_init` k-means runs by inertia; the earliest run wins ties.
pub fn kmeans_restarts(points: &[Vec<f64>], k: usize, rng: &mut Rng, max_iter: usize, n_init: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut best = kmeans(points, k, rng, max_iter);
    let mut best_inertia = kmeans_inertia(points, &best.0, &best.1);
    for _ in 1..n_init {
        let run = kmeans(points, k, rng, max_iter);
        let inertia = kmeans_inertia(points, &run.0, &run.1);
        if inertia < best_inertia {
            best = run;
            best_inertia = inertia;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub cov_floor: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            cov_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub assignment: ClusterAssignment,
    pub means: Vec<Vec<f64>>,
    pub cov: DMatrix<f64>,
    /// Observed-data log-likelihood at the returned parameters.
    pub loglik: f64,
    /// `loglik + sum_c (eta - 1) ln w_c`.
    pub penalized_loglik: f64,
    /// Penalized log-likelihood after every E-step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

const WEIGHT_FLOOR: f64 = 1e-12;

fn dirichlet_penalty(weights: &[f64], eta: f64) -> f64 {
    (eta - 1.0) * weights.iter().map(|w| w.ln()).sum::<f64>()
}

fn pooled_covariance(data: &GroupedPoints, labels: &[usize], means: &[Vec<f64>], floor: f64) -> DMatrix<f64> {
    let dim = data.dim();
    let mut cov = DMatrix::zeros(dim, dim);
    for (g, &l) in data.groups.iter().zip(labels) {
        for &d in g {
            let r = DVector::from_iterator(dim, data.points[d].iter().zip(&means[l]).map(|(x, m)| x - m));
            cov += &r * r.transpose();
        }
    }
    floor_eigenvalues(&(cov / data.num_points() as f64), floor)
}

/// Expectation-maximization for the author-constrained mixture with a
/// shared covariance and Dirichlet(`eta`)-smoothed MAP weights.
///
/// Starting means come from `init_means` when given, otherwise from
/// k-means++ on the author means using `seed`.
pub fn gmm_em(
    data: &GroupedPoints,
    n_clusters: usize,
    eta: f64,
    init_means: Option<&[Vec<f64>]>,
    opts: &GmmOptions,
    seed: u64,
) -> Result<GmmFit> {
    if n_clusters < 1 {
        return Err(Error::InvalidInput("need at least one cluster".into()));
    }
    if data.num_authors() < n_clusters {
        return Err(Error::InvalidInput(format!(
            "{} authors cannot fill {n_clusters} clusters",
            data.num_authors()
        )));
    }
    let dim = data.dim();
    let author_means = data.author_means();
    let mut means: Vec<Vec<f64>> = match init_means {
        Some(m) => {
            if m.len() != n_clusters || m.iter().any(|x| x.len() != dim) {
                return Err(Error::InvalidInput("initial means have the wrong shape".into()));
            }
            m.to_vec()
        }
        None => kmeans_pp(&author_means, n_clusters, &mut substream(seed, "kmeans++", 0)),
    };
    let nearest_labels: Vec<usize> = author_means.iter().map(|p| nearest(p, &means)).collect();
    let mut cov = pooled_covariance(data, &nearest_labels, &means, opts.cov_floor);
    let mut weights = vec![1.0 / n_clusters as f64; n_clusters];

    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let (resp, loglik, penalized) = loop {
        let (resp, loglik) = author_responsibilities(data, &means, &cov, &weights)?;
        let penalized = loglik + dirichlet_penalty(&weights, eta);
        trace.push(penalized);
        if let Some(&prev) = trace.iter().rev().nth(1) {
            if penalized - prev < opts.tol {
                converged = true;
                break (resp, loglik, penalized);
            }
        }
        if iterations >= opts.max_iter {
            break (resp, loglik, penalized);
        }
        iterations += 1;

        // M-step.
        let mut mass = vec![0.0; n_clusters];
        let mut doc_mass = vec![0.0; n_clusters];
        let mut sums = vec![vec![0.0; dim]; n_clusters];
        for (g, r) in data.groups.iter().zip(&resp) {
            for c in 0..n_clusters {
                mass[c] += r[c];
                doc_mass[c] += r[c] * g.len() as f64;
                for &d in g {
                    for (s, x) in sums[c].iter_mut().zip(&data.points[d]) {
                        *s += r[c] * x;
                    }
                }
            }
        }
        for c in 0..n_clusters {
            if mass[c] < 1e-8 {
                let labels: Vec<usize> = resp.iter().map(|r| argmax(r)).collect();
                let far = (0..data.num_authors())
                    .map(|a| squared_distance(&author_means[a], &means[labels[a]]))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (a, d)| if d > best.1 { (a, d) } else { best })
                    .0;
                let msg = format!("component {c} emptied at iteration {iterations}; reseeded at author {far}");
                log::warn!("{msg}");
                warnings.push(msg);
                means[c] = author_means[far].clone();
            } else {
                means[c] = sums[c].iter().map(|s| s / doc_mass[c]).collect();
            }
        }
        let mut scatter = DMatrix::zeros(dim, dim);
        for (g, r) in data.groups.iter().zip(&resp) {
            for &d in g {
                for c in 0..n_clusters {
                    if r[c] == 0.0 {
                        continue;
                    }
                    let diff = DVector::from_iterator(dim, data.points[d].iter().zip(&means[c]).map(|(x, m)| x - m));
                    scatter += (&diff * diff.transpose()) * r[c];
                }
            }
        }
        cov = floor_eigenvalues(&(scatter / data.num_points() as f64), opts.cov_floor);
        let raw: Vec<f64> = mass.iter().map(|m| (m + eta - 1.0).max(0.0)).collect();
        let total: f64 = raw.iter().sum();
        weights = if total > 0.0 {
            raw.iter().map(|w| (w / total).max(WEIGHT_FLOOR)).collect()
        } else {
            vec![1.0 / n_clusters as f64; n_clusters]
        };
        let norm: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= norm);
    };
    let labels = resp.iter().map(|r| argmax(r)).collect();
    Ok(GmmFit {
        assignment: ClusterAssignment {
            labels,
            responsibilities: resp,
            weights,
        },
        means,
        cov,
        loglik,
        penalized_loglik: penalized,
        trace,
        iterations,
        converged,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub n_clusters: usize,
    pub loglik: f64,
    pub n_params: usize,
    pub bic: f64,
}

/// Free parameters of the shared-covariance mixture in `dim` dimensions.
pub fn gmm_param_count(n_clusters: usize, dim: usize) -> usize {
    n_clusters * dim + dim * (dim + 1) / 2 + (n_clusters - 1)
}

/// Choose the cluster count minimizing
/// `BIC = -2 loglik + p ln(n_points)`, keeping the best of `restarts`
/// k-means++-seeded fits per candidate.
pub fn select_n_clusters(
    data: &GroupedPoints,
    candidates: &[usize],
    eta: f64,
    restarts: usize,
    opts: &GmmOptions,
    seed: u64,
) -> Result<(usize, Vec<BicRow>)> {
    let mut table = Vec::new();
    for &n in candidates {
        let mut best: Option<GmmFit> = None;
        for r in 0..restarts.max(1) {
            let s = crate::rng::derive_seed(seed, "bic", (n as u64) << 32 | r as u64);
            match gmm_em(data, n, eta, None, opts, s) {
                Ok(fit) => {
                    if best.as_ref().is_none_or(|b| fit.penalized_loglik > b.penalized_loglik) {
                        best = Some(fit);
                    }
                }
                Err(e) => log::warn!("candidate {n}, restart {r} failed: {e}"),
            }
        }
        match best {
            Some(fit) => {
                let p = gmm_param_count(n, data.dim());
                table.push(BicRow {
                    n_clusters: n,
                    loglik: fit.loglik,
                    n_params: p,
                    bic: -2.0 * fit.loglik + p as f64 * (data.num_points() as f64).ln(),
                });
            }
            None => log::warn!("excluding candidate {n}: every fit failed"),
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| a.bic.total_cmp(&b.bic))
        .ok_or(Error::AllCandidatesFailed)?
        .n_clusters;
    Ok((best, table))
}
