//! Measures computed directly on full-dimensional latent trajectories.

mod dtw;
mod gmm;
mod trajectory;
mod var;

pub use dtw::{dtw, DtwResult};
pub use gmm::{gmm_fit, log_density, DensityModel, FactoredDensity, GmmFit, GmmParams, COV_REG};
pub use trajectory::{cosine_distance, path_complexity, NEAR_ZERO_NORM};
pub use var::{var_fit, var_fit_series, var_predictability, var_predictability_series, VarModel};

/// Ridge added to Gram and covariance diagonals before inversion.
pub(crate) const RIDGE: f64 = 1e-8;
