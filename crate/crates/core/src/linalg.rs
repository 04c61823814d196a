//! Small dense linear-algebra helpers over `nalgebra` plus the
//! pinned-softmax map shared by the generator and the inference code.

use nalgebra::{DMatrix, DVector};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Map an unconstrained (K-1)-vector onto the K-simplex with the last
/// coordinate pinned to zero: `softmax([eta, 0])`.
pub fn softmax_pinned(eta: &[f64]) -> Vec<f64> {
    let max = eta.iter().cloned().fold(0.0f64, f64::max);
    let mut out: Vec<f64> = eta.iter().map(|e| (e - max).exp()).collect();
    out.push((-max).exp());
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrize and clamp eigenvalues from below.
pub fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = symmetrize(m);
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors;
    symmetrize(&(q * DMatrix::from_diagonal(&clamped) * q.transpose()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric square root factor `L` with `L L^T = m` for a PSD matrix
/// (negative eigenvalues from round-off are treated as zero).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Precomputed multivariate normal with a fixed covariance.
#[derive(Debug, Clone)]
pub struct Gaussian {
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    /// Fails when `cov` is not positive definite.
    pub fn new(cov: &DMatrix<f64>) -> Option<Self> {
        let chol = symmetrize(cov).cholesky()?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let dim = cov.nrows() as f64;
        Some(Self {
            precision: symmetrize(&chol.inverse()),
            log_norm: -0.5 * (dim * LN_2PI + log_det),
        })
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn log_density(&self, x: &[f64], mean: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x, mean)
    }

    pub fn mahalanobis_sq(&self, x: &[f64], mean: &[f64]) -> f64 {
        let n = x.len();
        let mut acc = 0.0;
        for i in 0..n {
            let di = x[i] - mean[i];
            let mut row = 0.0;
            for j in 0..n {
                row += self.precision[(i, j)] * (x[j] - mean[j]);
            }
            acc += di * row;
        }
        acc
    }
}

pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = symmetrize(m).cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

pub fn dvec(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softmax_pinned_of_zeros_is_uniform() {
        let theta = softmax_pinned(&[0.0, 0.0, 0.0]);
        assert_eq!(theta.len(), 4);
        for t in theta {
            assert_relative_eq!(t, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_pinned_is_stable_for_large_inputs() {
        let theta = softmax_pinned(&[800.0, -800.0]);
        assert_relative_eq!(theta[0], 1.0, epsilon = 1e-12);
        assert!(theta.iter().all(|t| t.is_finite()));
    }

    #[test]
    fn floor_eigenvalues_clamps() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let f = floor_eigenvalues(&m, 1e-6);
        assert!(min_eigenvalue(&f) >= 1e-6 - 1e-15);
        assert_relative_eq!(f[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_density_matches_univariate_formula() {
        let g = Gaussian::new(&DMatrix::from_element(1, 1, 4.0)).unwrap();
        let expected = -0.5 * (LN_2PI + 4.0f64.ln()) - 0.5 * (1.5f64 * 1.5 / 4.0);
        assert_relative_eq!(g.log_density(&[2.5], &[1.0]), expected, epsilon = 1e-12);
    }
}
