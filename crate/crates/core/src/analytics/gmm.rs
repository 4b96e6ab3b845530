use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

use super::var::gaussian_log_density;

/// Added to every covariance diagonal after each M-step.
pub const COV_REG: f64 = 1e-6;

/// Gaussian mixture with full covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

/// A mixture with its Cholesky factors, ready for repeated scoring.
pub struct FactoredDensity<'a> {
    model: &'a DensityModel,
    factors: Vec<Cholesky<f64, Dyn>>,
}

impl DensityModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, DVector::len)
    }

    pub fn factor(&self) -> Result<FactoredDensity<'_>> {
        let factors = self
            .covariances
            .iter()
            .enumerate()
            .map(|(k, c)| {
                Cholesky::new(c.clone())
                    .ok_or_else(|| Error::Singular(format!("covariance of component {k}")))
            })
            .collect::<Result<_>>()?;
        Ok(FactoredDensity { model: self, factors })
    }
}

impl FactoredDensity<'_> {
    /// `ln w_k + ln N(z; μ_k, Σ_k)` for every component.
    fn component_terms(&self, z: &DVector<f64>) -> Vec<f64> {
        self.model
            .weights
            .iter()
            .zip(&self.model.means)
            .zip(&self.factors)
            .map(|((&w, mean), chol)| {
                if w > 0.0 {
                    w.ln() + gaussian_log_density(&(z - mean), chol)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        check_dim("density input", self.model.dim(), z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density input".into()));
        }
        Ok(log_sum_exp(&self.component_terms(&DVector::from_column_slice(z))))
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `log Σ_k w_k N(z; μ_k, Σ_k)`, stabilised with log-sum-exp.
pub fn log_density(model: &DensityModel, z: &[f64]) -> Result<f64> {
    model.factor()?.log_density(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub components: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            components: 2,
            seed: 0,
            max_iters: 200,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: DensityModel,
    /// Total data log-likelihood at each E-step, starting from the initial parameters.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// k-means++ style seeding: the first centre uniformly, later ones with
/// probability proportional to squared distance from the nearest chosen centre.
fn seed_centres(rows: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = rows.len();
    let mut centres = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| (r - &centres[0]).norm_squared()).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = rows[idx].clone();
        for (dist, r) in d2.iter_mut().zip(rows) {
            *dist = dist.min((r - &c).norm_squared());
        }
        centres.push(c);
    }
    centres
}

/// `Σ_i r_i ln N(x_i; mean, cov)`, or `-inf` when `cov` is not positive definite.
fn expected_log_density(rows: &[DVector<f64>], resp: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let Some(chol) = Cholesky::new(cov.clone()) else {
        return f64::NEG_INFINITY;
    };
    rows.iter()
        .zip(resp)
        .map(|(r, &w)| if w > 0.0 { w * gaussian_log_density(&(r - mean), &chol) } else { 0.0 })
        .sum()
}

fn regularize(cov: DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    (&cov + cov.transpose()) * 0.5 + DMatrix::identity(d, d) * COV_REG
}

/// Expectation–maximisation for a `K`-component full-covariance mixture.
///
/// Stops when the log-likelihood gain drops below `tol` or after `max_iters`
/// M-steps. Each covariance update gets `COV_REG · I`; a component's update is
/// kept only if it does not decrease that component's expected complete-data
/// log-likelihood, so the recorded log-likelihood never decreases.
pub fn gmm_fit(data: &DMatrix<f64>, params: &GmmParams) -> Result<GmmFit> {
    let (n, d) = data.shape();
    let k = params.components;
    if k == 0 {
        return Err(invalid("mixture needs at least one component"));
    }
    if k > n {
        return Err(Error::InsufficientData(format!("{k} components but only {n} points")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mixture input".into()));
    }

    let rows: Vec<DVector<f64>> = data.row_iter().map(|r| r.transpose()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let global_mean = data.row_mean().transpose();
    let mut global_cov = DMatrix::zeros(d, d);
    for r in &rows {
        let c = r - &global_mean;
        global_cov += &c * c.transpose();
    }
    global_cov /= n as f64;

    let mut model = DensityModel {
        weights: vec![1.0 / k as f64; k],
        means: seed_centres(&rows, k, &mut rng),
        covariances: vec![regularize(global_cov); k],
    };

    let mut history = Vec::new();
    let mut converged = false;
    let mut resp = DMatrix::zeros(n, k);

    for it in 0..=params.max_iters {
        let factored = model.factor()?;
        let mut ll = 0.0;
        for (i, r) in rows.iter().enumerate() {
            let terms = factored.component_terms(r);
            let lse = log_sum_exp(&terms);
            ll += lse;
            for (j, t) in terms.iter().enumerate() {
                resp[(i, j)] = (t - lse).exp();
            }
        }
        if !ll.is_finite() {
            return Err(Error::NonFinite("mixture log-likelihood".into()));
        }
        history.push(ll);
        if it > 0 && ll - history[it - 1] < params.tol {
            converged = true;
            break;
        }
        if it == params.max_iters {
            break;
        }

        for j in 0..k {
            let nk: f64 = resp.column(j).sum();
            if nk <= 1e-12 {
                // keep an empty component's parameters but give it no mass
                model.weights[j] = 0.0;
                continue;
            }
            let mut mean = DVector::zeros(d);
            for (i, r) in rows.iter().enumerate() {
                mean.axpy(resp[(i, j)], r, 1.0);
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for (i, r) in rows.iter().enumerate() {
                let c = r - &mean;
                cov.ger(resp[(i, j)], &c, &c, 1.0);
            }
            cov /= nk;
            let cov = regularize(cov);
            model.weights[j] = nk / n as f64;
            // The ridge makes the update inexact, so only accept it when it does
            // not lower this component's share of the EM objective. This keeps
            // the data log-likelihood nondecreasing.
            let proposed = expected_log_density(&rows, resp.column(j).as_slice(), &mean, &cov);
            let current = expected_log_density(&rows, resp.column(j).as_slice(), &model.means[j], &model.covariances[j]);
            if proposed >= current {
                model.means[j] = mean;
                model.covariances[j] = cov;
            }
        }
        let total: f64 = model.weights.iter().sum();
        for w in &mut model.weights {
            *w /= total;
        }
    }

    Ok(GmmFit {
        model,
        log_likelihood: history,
        converged,
    })
}
