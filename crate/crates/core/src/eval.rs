//! Clustering and topic-recovery metrics plus report tables.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::generator::SyntheticTruth;
use crate::linalg::{l1_distance, softmax_pinned};
use crate::tstep::{PrevalenceParams, TopicMatrix};

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

type Counts<K> = HashMap<K, u64>;

/// Joint, row and column counts of two labelings.
fn contingency_counts(x: &[usize], y: &[usize]) -> (Counts<(usize, usize)>, Counts<usize>, Counts<usize>) {
    let mut cells = HashMap::new();
    let mut rows = HashMap::new();
    let mut cols = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *cells.entry((a, b)).or_insert(0) += 1;
        *rows.entry(a).or_insert(0) += 1;
        *cols.entry(b).or_insert(0) += 1;
    }
    (cells, rows, cols)
}

/// Fraction of item pairs on which two partitions agree (both together or
/// both apart), from contingency counts.
pub fn rand_index(x: &[usize], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("rand index needs at least two items".into()));
    }
    let (cells, rows, cols) = contingency_counts(x, y);
    let total = pairs(x.len() as u64);
    let both: u64 = cells.values().map(|&c| pairs(c)).sum();
    let same_x: u64 = rows.values().map(|&c| pairs(c)).sum();
    let same_y: u64 = cols.values().map(|&c| pairs(c)).sum();
    let agree = total + 2 * both - same_x - same_y;
    Ok(agree as f64 / total as f64)
}

/// Hubert-Arabie adjusted Rand index. Returns 1 when both partitions are
/// trivial in the same way.
pub fn adjusted_rand_index(x: &[usize], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (cells, rows, cols) = contingency_counts(x, y);
    let total = pairs(x.len() as u64) as f64;
    let index: f64 = cells.values().map(|&c| pairs(c) as f64).sum();
    let a: f64 = rows.values().map(|&c| pairs(c) as f64).sum();
    let b: f64 = cols.values().map(|&c| pairs(c) as f64).sum();
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if (max - expected).abs() < f64::EPSILON {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Canonical form of a partition: labels renumbered by first appearance.
pub fn canonical_partition(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Minimum-cost assignment on a square cost matrix (Hungarian algorithm,
/// O(n^3)). Returns `assignment[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Potentials-based formulation with 1-based sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Map each estimated cluster to a reference cluster by maximizing the
/// overlap of the label confusion matrix. `mapping[estimated] = reference`.
pub fn match_clusters(estimated: &[usize], reference: &[usize], n_clusters: usize) -> Vec<usize> {
    let n = n_clusters
        .max(estimated.iter().map(|l| l + 1).max().unwrap_or(0))
        .max(reference.iter().map(|l| l + 1).max().unwrap_or(0));
    let mut confusion = vec![vec![0.0; n]; n];
    for (&e, &r) in estimated.iter().zip(reference) {
        confusion[e][r] -= 1.0;
    }
    hungarian(&confusion)
}

/// Align estimated topics to reference topics by minimum total L1 distance
/// between rows. `perm[estimated] = reference`. Both matrices must share
/// column order.
pub fn align_topics(estimated: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Vec<usize>> {
    if estimated.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: estimated.len(),
            right: reference.len(),
        });
    }
    let cost: Vec<Vec<f64>> = estimated
        .iter()
        .map(|e| reference.iter().map(|r| l1_distance(e, r)).collect())
        .collect();
    Ok(hungarian(&cost))
}

/// Reorder the topic coordinates of a simplex vector: output coordinate
/// `perm[k]` receives input coordinate `k`.
pub fn permute_topics(vector: &[f64], perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; vector.len()];
    for (k, &target) in perm.iter().enumerate() {
        out[target] = vector[k];
    }
    out
}

/// Mean L1 distance between per-author simplex vectors.
pub fn mae_simplex(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() < truth.len() {
        return Err(Error::MissingAuthor(estimates.len()));
    }
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("no authors".into()));
    }
    let total: f64 = estimates.iter().zip(truth).map(|(e, t)| l1_distance(e, t)).sum();
    Ok(total / truth.len() as f64)
}

/// MAE of per-author topic distributions against the generator's truth,
/// `softmax([gamma_{A_a}, 0])`. Estimates must already be expressed in the
/// truth's topic order (see [`align_topics`]). Cluster relabeling of the
/// estimate cannot change the result because each author is compared
/// through its own estimated vector.
pub fn mae_author_gamma(estimates: &[Vec<f64>], truth: &SyntheticTruth) -> Result<f64> {
    mae_simplex(estimates, &truth.author_topics())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub sources: Vec<String>,
    pub n_clusters: usize,
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized percentages.
    pub percent: Vec<Vec<f64>>,
}

pub fn contingency_table(source_labels: &[String], cluster_labels: &[usize], n_clusters: usize) -> Result<ContingencyTable> {
    if source_labels.len() != cluster_labels.len() {
        return Err(Error::LengthMismatch {
            left: source_labels.len(),
            right: cluster_labels.len(),
        });
    }
    let n_clusters = n_clusters.max(cluster_labels.iter().map(|c| c + 1).max().unwrap_or(0));
    let mut rows: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for (s, &c) in source_labels.iter().zip(cluster_labels) {
        rows.entry(s.as_str()).or_insert_with(|| vec![0; n_clusters])[c] += 1;
    }
    let sources = rows.keys().map(|s| s.to_string()).collect();
    let counts: Vec<Vec<u64>> = rows.into_values().collect();
    let percent = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter().map(|&c| 100.0 * c as f64 / total as f64).collect()
        })
        .collect();
    Ok(ContingencyTable {
        sources,
        n_clusters,
        counts,
        percent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedWord {
    pub term: String,
    pub weight: f64,
}

/// The `n` most probable terms of every topic, ties broken lexicographically.
pub fn top_words(phi: &TopicMatrix, vocabulary: &Vocabulary, n: usize) -> Result<Vec<Vec<RankedWord>>> {
    if n > vocabulary.len() || phi.vocab_size() != vocabulary.len() {
        return Err(Error::InvalidInput(format!(
            "cannot take {n} top words from a vocabulary of {}",
            vocabulary.len()
        )));
    }
    Ok((0..phi.num_topics())
        .map(|k| {
            let row = phi.row(k);
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|&a, &b| {
                row[b]
                    .total_cmp(&row[a])
                    .then_with(|| vocabulary.term(a).cmp(vocabulary.term(b)))
            });
            ids.into_iter()
                .take(n)
                .map(|w| RankedWord {
                    term: vocabulary.term(w).to_string(),
                    weight: row[w],
                })
                .collect()
        })
        .collect())
}

/// Topic distribution of every cluster, `softmax([gamma_A, 0])`.
pub fn cluster_topic_table(prevalence: &PrevalenceParams) -> Vec<Vec<f64>> {
    (0..prevalence.gamma.nrows())
        .map(|l| softmax_pinned(&prevalence.mean(l)))
        .collect()
}

/// Scores on the first two principal components of the author vectors.
/// Each component's sign makes its largest-magnitude loading positive.
/// Returns a warning instead of components when the data has rank zero.
pub fn pca_project(vectors: &[Vec<f64>]) -> Result<(Vec<[f64; 2]>, Option<String>)> {
    if vectors.len() < 2 {
        return Err(Error::InvalidInput("projection needs at least two authors".into()));
    }
    let dim = vectors[0].len();
    let n = vectors.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n).collect();
    let centered = DMatrix::from_fn(vectors.len(), dim, |i, j| vectors[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1.0);
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    if top.is_nan() || top <= 1e-14 {
        let msg = "author vectors are identical; projection is all zeros".to_string();
        log::warn!("{msg}");
        return Ok((vec![[0.0, 0.0]; vectors.len()], Some(msg)));
    }
    let mut components = Vec::new();
    for &c in order.iter().take(2) {
        let mut loading: Vec<f64> = eig.eigenvectors.column(c).iter().cloned().collect();
        let lead = loading
            .iter()
            .cloned()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            loading.iter_mut().for_each(|x| *x = -*x);
        }
        // A numerically null second component projects to zero.
        if eig.eigenvalues[c] <= 1e-14 * top {
            loading.iter_mut().for_each(|x| *x = 0.0);
        }
        components.push(loading);
    }
    while components.len() < 2 {
        components.push(vec![0.0; dim]);
    }
    let scores = (0..vectors.len())
        .map(|i| {
            let s = |c: &Vec<f64>| (0..dim).map(|j| centered[(i, j)] * c[j]).sum::<f64>();
            [s(&components[0]), s(&components[1])]
        })
        .collect();
    Ok((scores, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedAuthor {
    pub author: String,
    pub x: f64,
    pub y: f64,
    pub cluster: usize,
    pub source_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rand_index: Option<f64>,
    pub adjusted_rand_index: Option<f64>,
    pub mae: Option<f64>,
    pub contingency: Option<ContingencyTable>,
    pub top_words: Vec<Vec<RankedWord>>,
    pub cluster_topic_weights: Vec<Vec<f64>>,
    pub projection: Vec<ProjectedAuthor>,
    pub warnings: Vec<String>,
}
