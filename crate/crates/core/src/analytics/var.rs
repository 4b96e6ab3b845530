use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::embedding::LatentSequence;
use crate::error::{check_dim, invalid, Error, Result};

use super::RIDGE;

/// Smallest eigenvalue of the unit-diagonal Gram matrix accepted as full rank.
const MIN_SCALED_EIGENVALUE: f64 = 1e-10;

/// Vector autoregression `z_t = c + Σ_k A_k z_{t−k} + e_t`, `e_t ~ N(0, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub order: usize,
    /// `A_1 … A_p`, each `D × D`.
    pub coefficients: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    pub noise_cov: DMatrix<f64>,
    /// Number of regression rows used in the fit.
    pub n_obs: usize,
}

impl VarModel {
    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    /// One-step prediction from `history`, whose last element is `z_{t−1}`.
    pub fn predict(&self, history: &[&[f64]]) -> Result<DVector<f64>> {
        if history.len() < self.order {
            return Err(Error::InsufficientData(format!(
                "VAR({}) prediction needs {} past vectors",
                self.order, self.order
            )));
        }
        let mut out = self.intercept.clone();
        for (k, a) in self.coefficients.iter().enumerate() {
            let lag = history[history.len() - 1 - k];
            check_dim("VAR lag vector", self.dim(), lag.len())?;
            out += a * DVector::from_column_slice(lag);
        }
        Ok(out)
    }
}

fn regressor_row(series: &[&[f64]], t: usize, p: usize, d: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + d * p);
    row.push(1.0);
    for k in 1..=p {
        row.extend_from_slice(series[t - k]);
    }
    row
}

/// Pooled least-squares fit over several independent sequences.
///
/// Lags never reach across sequence boundaries. The Gram matrix gets a
/// `1e-8` ridge; designs whose scaled Gram matrix is numerically rank
/// deficient are rejected with [`Error::Singular`] before solving.
pub fn var_fit(sequences: &[LatentSequence], order: usize) -> Result<VarModel> {
    let owned: Vec<Vec<&[f64]>> = sequences.iter().map(LatentSequence::vectors).collect();
    var_fit_series(&owned, order)
}

/// [`var_fit`] on plain vector series.
pub fn var_fit_series(series: &[Vec<&[f64]>], order: usize) -> Result<VarModel> {
    if order == 0 {
        return Err(invalid("VAR order must be at least 1"));
    }
    let d = series
        .iter()
        .flat_map(|s| s.first())
        .map(|v| v.len())
        .next()
        .ok_or_else(|| Error::InsufficientData("no vectors to fit".into()))?;
    for v in series.iter().flatten() {
        check_dim("VAR vector", d, v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("VAR input".into()));
        }
    }

    let n_cols = 1 + d * order;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for t in order..s.len() {
            xs.extend(regressor_row(s, t, order, d));
            ys.extend_from_slice(s[t]);
        }
    }
    let n_rows = ys.len() / d;
    if n_rows < n_cols {
        return Err(Error::InsufficientData(format!(
            "VAR({order}) in {d} dimensions needs {n_cols} regression rows, got {n_rows}"
        )));
    }
    let x = DMatrix::from_row_slice(n_rows, n_cols, &xs);
    let y = DMatrix::from_row_slice(n_rows, d, &ys);

    let gram = x.transpose() * &x;
    check_rank(&gram)?;
    let ridged = &gram + DMatrix::identity(n_cols, n_cols) * RIDGE;
    let chol = Cholesky::new(ridged)
        .ok_or_else(|| Error::Singular("VAR Gram matrix is not positive definite".into()))?;
    let beta = chol.solve(&(x.transpose() * &y));

    let resid = &y - &x * &beta;
    let denom = (n_rows as f64 - (d * order) as f64 - 1.0).max(1.0);
    let cov = resid.transpose() * &resid / denom;
    let noise_cov = (&cov + cov.transpose()) * 0.5;

    let intercept = beta.row(0).transpose();
    let coefficients = (0..order)
        .map(|k| beta.rows(1 + k * d, d).transpose())
        .collect();

    Ok(VarModel {
        order,
        coefficients,
        intercept,
        noise_cov,
        n_obs: n_rows,
    })
}

fn check_rank(gram: &DMatrix<f64>) -> Result<()> {
    let n = gram.nrows();
    let diag: Vec<f64> = (0..n).map(|i| gram[(i, i)]).collect();
    if let Some(i) = diag.iter().position(|&v| v <= 0.0) {
        return Err(Error::Singular(format!("regressor {i} is identically zero")));
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| gram[(i, j)] / (diag[i] * diag[j]).sqrt());
    let min_eig = SymmetricEigen::new(scaled).eigenvalues.min();
    if min_eig < MIN_SCALED_EIGENVALUE {
        return Err(Error::Singular(format!(
            "regressors are collinear (smallest scaled eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(())
}

/// Gaussian log-density of `r` under `N(0, cov + 1e-8 I)`.
pub(crate) fn gaussian_log_density(r: &DVector<f64>, chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let d = r.len() as f64;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let solved = chol.l().solve_lower_triangular(r).expect("Cholesky factor is invertible");
    -0.5 * (d * (2.0 * PI).ln() + log_det + solved.norm_squared())
}

/// Mean one-step-ahead log-likelihood (nats per step) of `seq` under `model`.
pub fn var_predictability(model: &VarModel, seq: &LatentSequence) -> Result<f64> {
    var_predictability_series(model, &seq.vectors())
}

/// [`var_predictability`] on a plain vector series.
pub fn var_predictability_series(model: &VarModel, series: &[&[f64]]) -> Result<f64> {
    let p = model.order;
    if series.len() <= p {
        return Err(Error::InsufficientData(format!(
            "sequence of {} vectors is too short for VAR({p})",
            series.len()
        )));
    }
    let d = model.dim();
    let cov = &model.noise_cov + DMatrix::identity(d, d) * RIDGE;
    let chol = Cholesky::new(cov).ok_or_else(|| Error::Singular("VAR noise covariance".into()))?;
    let mut total = 0.0;
    for t in p..series.len() {
        check_dim("VAR vector", d, series[t].len())?;
        let pred = model.predict(&series[..t])?;
        let resid = DVector::from_column_slice(series[t]) - pred;
        total += gaussian_log_density(&resid, &chol);
    }
    Ok(total / (series.len() - p) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn as_refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn constant_sequence_is_singular() {
        let s = vec![vec![0.3, -0.2]; 50];
        assert!(matches!(var_fit_series(&[as_refs(&s)], 1), Err(Error::Singular(_))));
        let zeros = vec![vec![0.0, 0.0]; 50];
        assert!(matches!(var_fit_series(&[as_refs(&zeros)], 1), Err(Error::Singular(_))));
    }

    #[test]
    fn too_few_rows() {
        let s: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64, (i * i) as f64]).collect();
        assert!(matches!(var_fit_series(&[as_refs(&s)], 1), Err(Error::InsufficientData(_))));
        assert!(var_fit_series(&[as_refs(&s)], 0).is_err());
    }

    #[test]
    fn lags_do_not_cross_sequences() {
        // each sequence alone has exactly one regression row per step after the first
        let a: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let b: Vec<Vec<f64>> = (0..4).map(|i| vec![(i * i) as f64]).collect();
        let m = var_fit_series(&[as_refs(&a), as_refs(&b)], 1).unwrap();
        assert_eq!(m.n_obs, 4 + 3);
    }

    #[test]
    fn zero_residual_closed_form() {
        let sigma2: f64 = 0.04;
        let d = 3;
        let model = VarModel {
            order: 1,
            coefficients: vec![DMatrix::identity(d, d) * 0.5],
            intercept: DVector::zeros(d),
            noise_cov: DMatrix::identity(d, d) * sigma2,
            n_obs: 0,
        };
        let s: Vec<Vec<f64>> = (0..6).map(|t| vec![0.5f64.powi(t); d]).collect();
        let got = var_predictability_series(&model, &as_refs(&s)).unwrap();
        let expected = -(d as f64 / 2.0) * (2.0 * PI * (sigma2 + RIDGE)).ln();
        assert!((got - expected).abs() < 1e-12);
        let unregularized = -(d as f64 / 2.0) * (2.0 * PI * sigma2).ln();
        assert!((got - unregularized).abs() < 1e-6);
    }

    #[test]
    fn short_sequence_is_rejected() {
        let model = VarModel {
            order: 2,
            coefficients: vec![DMatrix::zeros(1, 1); 2],
            intercept: DVector::zeros(1),
            noise_cov: DMatrix::identity(1, 1),
            n_obs: 0,
        };
        let s = vec![vec![1.0], vec![2.0]];
        assert!(var_predictability_series(&model, &as_refs(&s)).is_err());
    }
}
