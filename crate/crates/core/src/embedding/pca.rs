use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, invalid, Error, Result};

/// Relative eigenvalue below which a component is treated as carrying no variance.
const RANK_TOL: f64 = 1e-12;

/// Principal components of a data set, ordered by decreasing variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `k × D` with orthonormal rows.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// Number of requested components that carry non-zero variance.
    pub effective_rank: usize,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// True when some requested components span directions of zero variance.
    pub fn rank_deficient(&self) -> bool {
        self.effective_rank < self.n_components()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("PCA input", self.mean.len(), x.len())?;
        let centered = DVector::from_column_slice(x) - &self.mean;
        Ok((&self.components * centered).iter().copied().collect())
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim("PCA scores", self.n_components(), y.len())?;
        let back = self.components.transpose() * DVector::from_column_slice(y) + &self.mean;
        Ok(back.iter().copied().collect())
    }
}

/// Top-`k` eigenvectors of the sample covariance (denominator `N − 1`).
///
/// Each component's sign is fixed so its largest-magnitude entry is positive.
pub fn pca_fit(data: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = data.shape();
    if k == 0 || k > d {
        return Err(invalid(format!("k must be in 1..={d}, got {k}")));
    }
    if n <= k {
        return Err(Error::InsufficientData(format!("PCA with k={k} needs more than {k} rows, got {n}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA input".into()));
    }

    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    let total_variance = cov.trace();

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = DMatrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.neg_mut();
        }
        components.row_mut(row).copy_from(&v.transpose());
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    let scale = explained_variance.first().copied().unwrap_or(0.0).max(total_variance.abs());
    let effective_rank = explained_variance
        .iter()
        .filter(|&&v| scale > 0.0 && v > RANK_TOL * scale)
        .count();

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
        effective_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn line_through_origin_is_rank_one() {
        let data = DMatrix::from_fn(20, 3, |i, j| (i as f64 - 7.0) * [1.0, 2.0, -0.5][j]);
        let pca = pca_fit(&data, 1).unwrap();
        assert!((pca.explained_variance_ratio()[0] - 1.0).abs() < 1e-12);
        let full = pca_fit(&data, 3).unwrap();
        assert_eq!(full.effective_rank, 1);
        assert!(full.rank_deficient());
    }

    #[test]
    fn projecting_the_mean_gives_zero() {
        let data = random_data(30, 4, 1);
        let pca = pca_fit(&data, 2).unwrap();
        let mean: Vec<f64> = pca.mean.iter().copied().collect();
        assert!(pca.project(&mean).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let data = random_data(50, 5, 2);
        let pca = pca_fit(&data, 5).unwrap();
        for row in data.row_iter() {
            let x: Vec<f64> = row.iter().copied().collect();
            let back = pca.inverse(&pca.project(&x).unwrap()).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn argument_errors() {
        let data = random_data(3, 4, 0);
        assert!(pca_fit(&data, 0).is_err());
        assert!(pca_fit(&data, 5).is_err());
        assert!(pca_fit(&data, 3).is_err());
        let pca = pca_fit(&data, 2).unwrap();
        assert!(pca.project(&[0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn rows_orthonormal_variances_sorted(seed in 0u64..1000, n in 6usize..40, d in 2usize..6) {
            let data = random_data(n, d, seed);
            let k = d.min(n - 1);
            let pca = pca_fit(&data, k).unwrap();
            let gram = &pca.components * pca.components.transpose();
            for i in 0..k {
                for j in 0..k {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((gram[(i, j)] - target).abs() < 1e-8);
                }
            }
            for w in pca.explained_variance.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
