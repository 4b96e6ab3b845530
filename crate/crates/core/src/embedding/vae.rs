//! Fully-connected variational autoencoder with hand-derived backpropagation.
//!
//! Encoder: `input → tanh(hidden) → [mu | logvar]` (linear head of width 2·D).
//! Decoder: `z → tanh(hidden) → sigmoid(input)`.
//!
//! The loss for a batch of `B` rows is
//!
//! ```text
//! recon = (1/B) Σ_b Σ_i (y_bi − x_bi)²
//! kl    = (1/B) Σ_b Σ_d ½ (mu² + exp(logvar) − 1 − logvar)
//! loss  = recon + beta · kl
//! ```
//!
//! with `z = mu + exp(logvar / 2) · eps`, where `eps` is supplied by the caller
//! so that every step is a pure function of its arguments.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Affine layer `y = W x + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weights: DMatrix::zeros(outputs, inputs),
            bias: DVector::zeros(outputs),
        }
    }

    fn uniform(outputs: usize, inputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        // filled row by row so the stream order matches the row-major file layout
        let mut weights = DMatrix::zeros(outputs, inputs);
        for r in 0..outputs {
            for c in 0..inputs {
                weights[(r, c)] = rng.random_range(-bound..bound);
            }
        }
        Self {
            weights,
            bias: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Applies the layer to every row of `x`.
    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * self.weights.transpose();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.bias[j]);
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

pub const LAYER_NAMES: [&str; 4] = ["encoder_hidden", "encoder_head", "decoder_hidden", "decoder_output"];

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub encoder_hidden: Dense,
    /// Rows `0..D` produce `mu`, rows `D..2D` produce `logvar`.
    pub encoder_head: Dense,
    pub decoder_hidden: Dense,
    pub decoder_output: Dense,
}

/// Gradients share the model's layer layout.
pub type VaeGradients = [Dense; 4];

impl VaeModel {
    pub fn layers(&self) -> [&Dense; 4] {
        [
            &self.encoder_hidden,
            &self.encoder_head,
            &self.decoder_hidden,
            &self.decoder_output,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut Dense; 4] {
        [
            &mut self.encoder_hidden,
            &mut self.encoder_head,
            &mut self.decoder_hidden,
            &mut self.decoder_output,
        ]
    }

    pub fn n_parameters(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn zeros_like(&self) -> VaeGradients {
        self.layers().map(|l| Dense::zeros(l.outputs(), l.inputs()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Builds a model with weights drawn from `U(±1/sqrt(fan_in))` and zero biases.
pub fn vae_init(input_dim: usize, hidden_dim: usize, latent_dim: usize, seed: u64) -> Result<VaeModel> {
    if input_dim == 0 || hidden_dim == 0 || latent_dim == 0 {
        return Err(invalid("VAE dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder_hidden = Dense::uniform(hidden_dim, input_dim, &mut rng);
    let encoder_head = Dense::uniform(2 * latent_dim, hidden_dim, &mut rng);
    let decoder_hidden = Dense::uniform(hidden_dim, latent_dim, &mut rng);
    let decoder_output = Dense::uniform(input_dim, hidden_dim, &mut rng);
    Ok(VaeModel {
        input_dim,
        hidden_dim,
        latent_dim,
        seed,
        encoder_hidden,
        encoder_head,
        decoder_hidden,
        decoder_output,
    })
}

struct Forward {
    h_enc: DMatrix<f64>,
    mu: DMatrix<f64>,
    logvar: DMatrix<f64>,
    z: DMatrix<f64>,
    h_dec: DMatrix<f64>,
    recon: DMatrix<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn encode(model: &VaeModel, batch: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let d = model.latent_dim;
    let h_enc = model.encoder_hidden.forward(batch).map(f64::tanh);
    let head = model.encoder_head.forward(&h_enc);
    let mu = head.columns(0, d).into_owned();
    let logvar = head.columns(d, d).into_owned();
    (h_enc, mu, logvar)
}

fn decode(model: &VaeModel, z: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let h_dec = model.decoder_hidden.forward(z).map(f64::tanh);
    let recon = model.decoder_output.forward(&h_dec).map(sigmoid);
    (h_dec, recon)
}

fn forward(model: &VaeModel, batch: &DMatrix<f64>, eps: &DMatrix<f64>) -> Result<Forward> {
    check_dim("batch columns", model.input_dim, batch.ncols())?;
    check_dim("noise columns", model.latent_dim, eps.ncols())?;
    check_dim("noise rows", batch.nrows(), eps.nrows())?;
    if batch.nrows() == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let (h_enc, mu, logvar) = encode(model, batch);
    let z = &mu + logvar.map(|lv| (0.5 * lv).exp()).component_mul(eps);
    let (h_dec, recon) = decode(model, &z);
    for (name, m) in [("encoder", &mu), ("encoder", &logvar), ("latent", &z), ("decoder", &recon)] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} activations")));
        }
    }
    Ok(Forward {
        h_enc,
        mu,
        logvar,
        z,
        h_dec,
        recon,
    })
}

/// Reconstruction and KL terms of the negative ELBO, both averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboTerms {
    pub recon_loss: f64,
    pub kl: f64,
    pub recon: DMatrix<f64>,
}

impl ElboTerms {
    pub fn loss(&self, beta: f64) -> f64 {
        self.recon_loss + beta * self.kl
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub recon_loss: f64,
    pub kl: f64,
    pub total: f64,
}

fn kl_of(mu: &DMatrix<f64>, logvar: &DMatrix<f64>) -> f64 {
    let b = mu.nrows() as f64;
    mu.iter()
        .zip(logvar.iter())
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum::<f64>()
        / b
}

fn recon_of(recon: &DMatrix<f64>, batch: &DMatrix<f64>) -> f64 {
    (recon - batch).norm_squared() / batch.nrows() as f64
}

pub fn elbo_terms(model: &VaeModel, batch: &DMatrix<f64>, eps: &DMatrix<f64>) -> Result<ElboTerms> {
    let fwd = forward(model, batch, eps)?;
    Ok(ElboTerms {
        recon_loss: recon_of(&fwd.recon, batch),
        kl: kl_of(&fwd.mu, &fwd.logvar),
        recon: fwd.recon,
    })
}

/// Loss and the gradient of `recon + beta·kl` with respect to every parameter.
pub fn loss_and_gradients(
    model: &VaeModel,
    batch: &DMatrix<f64>,
    eps: &DMatrix<f64>,
    beta: f64,
) -> Result<(LossParts, VaeGradients)> {
    let fwd = forward(model, batch, eps)?;
    let b = batch.nrows() as f64;
    let recon_loss = recon_of(&fwd.recon, batch);
    let kl = kl_of(&fwd.mu, &fwd.logvar);

    let mut grads = model.zeros_like();

    // decoder output: dL/dlogit = 2 (y − x) / B · y (1 − y)
    let d_logit = (&fwd.recon - batch)
        .zip_map(&fwd.recon, |diff, y| 2.0 * diff / b * y * (1.0 - y));
    grads[3].weights = d_logit.transpose() * &fwd.h_dec;
    grads[3].bias = d_logit.row_sum().transpose();

    let d_h_dec = &d_logit * &model.decoder_output.weights;
    let d_pre_dec = d_h_dec.zip_map(&fwd.h_dec, |g, h| g * (1.0 - h * h));
    grads[2].weights = d_pre_dec.transpose() * &fwd.z;
    grads[2].bias = d_pre_dec.row_sum().transpose();

    let d_z = &d_pre_dec * &model.decoder_hidden.weights;
    let d = model.latent_dim;
    let mut d_head = DMatrix::zeros(batch.nrows(), 2 * d);
    for r in 0..batch.nrows() {
        for c in 0..d {
            let mu = fwd.mu[(r, c)];
            let lv = fwd.logvar[(r, c)];
            let std = (0.5 * lv).exp();
            d_head[(r, c)] = d_z[(r, c)] + beta * mu / b;
            d_head[(r, d + c)] =
                d_z[(r, c)] * eps[(r, c)] * 0.5 * std + beta * 0.5 * (lv.exp() - 1.0) / b;
        }
    }
    grads[1].weights = d_head.transpose() * &fwd.h_enc;
    grads[1].bias = d_head.row_sum().transpose();

    let d_h_enc = &d_head * &model.encoder_head.weights;
    let d_pre_enc = d_h_enc.zip_map(&fwd.h_enc, |g, h| g * (1.0 - h * h));
    grads[0].weights = d_pre_enc.transpose() * batch;
    grads[0].bias = d_pre_enc.row_sum().transpose();

    for (name, g) in LAYER_NAMES.iter().zip(grads.iter()) {
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of layer {name}")));
        }
    }

    Ok((
        LossParts {
            recon_loss,
            kl,
            total: recon_loss + beta * kl,
        },
        grads,
    ))
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: VaeGradients,
    pub v: VaeGradients,
    pub step: u32,
}

impl AdamState {
    pub fn new(model: &VaeModel) -> Self {
        Self {
            m: model.zeros_like(),
            v: model.zeros_like(),
            step: 0,
        }
    }
}

fn adam_update(param: &mut f64, grad: f64, m: &mut f64, v: &mut f64, lr: f64, c1: f64, c2: f64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * grad;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * grad * grad;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *param -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
}

/// One Adam step on `recon + beta·kl`; the model and optimizer state are updated in place.
///
/// Returns the loss evaluated before the update.
pub fn vae_train_step(
    model: &mut VaeModel,
    batch: &DMatrix<f64>,
    eps: &DMatrix<f64>,
    adam: &mut AdamState,
    lr: f64,
    beta: f64,
) -> Result<LossParts> {
    if batch.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(invalid("training inputs must lie in [0, 1]"));
    }
    let (parts, grads) = loss_and_gradients(model, batch, eps, beta)?;
    adam.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(adam.step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(adam.step as i32);
    for (((layer, g), m), v) in model
        .layers_mut()
        .into_iter()
        .zip(grads.iter())
        .zip(adam.m.iter_mut())
        .zip(adam.v.iter_mut())
    {
        for (((p, &gr), mm), vv) in layer
            .weights
            .iter_mut()
            .zip(g.weights.iter())
            .zip(m.weights.iter_mut())
            .zip(v.weights.iter_mut())
        {
            adam_update(p, gr, mm, vv, lr, c1, c2);
        }
        for (((p, &gr), mm), vv) in layer
            .bias
            .iter_mut()
            .zip(g.bias.iter())
            .zip(m.bias.iter_mut())
            .zip(v.bias.iter_mut())
        {
            adam_update(p, gr, mm, vv, lr, c1, c2);
        }
    }
    Ok(parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            lr: 1e-3,
            beta: 1.0,
            seed: 0,
        }
    }
}

/// Mini-batch training with seeded shuffling and reparameterization noise.
///
/// Returns the mean per-batch loss of each epoch. The last batch of an epoch
/// may be smaller than `batch_size`.
pub fn vae_train(model: &mut VaeModel, dataset: &DMatrix<f64>, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let n = dataset.nrows();
    if n == 0 {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    check_dim("dataset columns", model.input_dim, dataset.ncols())?;
    if cfg.batch_size == 0 || n < cfg.batch_size {
        return Err(Error::InsufficientData(format!(
            "{n} items cannot fill a batch of {}",
            cfg.batch_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = dataset.select_rows(chunk.iter());
            let eps = DMatrix::from_fn(chunk.len(), model.latent_dim, |_, _| rng.sample(StandardNormal));
            let parts = vae_train_step(model, &batch, &eps, &mut adam, cfg.lr, cfg.beta)?;
            total += parts.total;
            batches += 1;
        }
        history.push(total / batches as f64);
    }
    Ok(history)
}

/// Encoder mean for one input vector.
pub fn vae_embed(model: &VaeModel, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("embedding input", model.input_dim, x.len())?;
    let batch = DMatrix::from_row_slice(1, x.len(), x);
    Ok(vae_embed_batch(model, &batch)?.row(0).iter().copied().collect())
}

/// Encoder means for every row of `batch`.
pub fn vae_embed_batch(model: &VaeModel, batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("embedding input", model.input_dim, batch.ncols())?;
    let (_, mu, _) = encode(model, batch);
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder mean".into()));
    }
    Ok(mu)
}

/// Decoder output for a latent vector; every entry lies in `(0, 1)`.
pub fn vae_reconstruct(model: &VaeModel, z: &[f64]) -> Result<Vec<f64>> {
    check_dim("latent vector", model.latent_dim, z.len())?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("latent vector".into()));
    }
    let zm = DMatrix::from_row_slice(1, z.len(), z);
    let (_, recon) = decode(model, &zm);
    Ok(recon.row(0).iter().copied().collect())
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    name: String,
    rows: usize,
    cols: usize,
    /// Row-major `rows × cols`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    input_dim: usize,
    hidden_dim: usize,
    latent_dim: usize,
    seed: u64,
    layers: Vec<LayerDoc>,
}

const MODEL_FORMAT: &str = "vocalpath-vae-v1";

impl From<&VaeModel> for ModelDoc {
    fn from(m: &VaeModel) -> Self {
        let layers = LAYER_NAMES
            .iter()
            .zip(m.layers())
            .map(|(name, l)| LayerDoc {
                name: (*name).to_string(),
                rows: l.outputs(),
                cols: l.inputs(),
                weights: l.weights.transpose().iter().copied().collect(),
                bias: l.bias.iter().copied().collect(),
            })
            .collect();
        Self {
            format: MODEL_FORMAT.into(),
            input_dim: m.input_dim,
            hidden_dim: m.hidden_dim,
            latent_dim: m.latent_dim,
            seed: m.seed,
            layers,
        }
    }
}

impl TryFrom<ModelDoc> for VaeModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        if doc.format != MODEL_FORMAT {
            return Err(invalid(format!("unknown model format `{}`", doc.format)));
        }
        let mut model = vae_init(doc.input_dim, doc.hidden_dim, doc.latent_dim, doc.seed)?;
        check_dim("model layers", 4, doc.layers.len())?;
        for ((layer, ld), name) in model.layers_mut().into_iter().zip(doc.layers).zip(LAYER_NAMES) {
            if ld.name != name {
                return Err(invalid(format!("expected layer `{name}`, found `{}`", ld.name)));
            }
            check_dim("layer rows", layer.outputs(), ld.rows)?;
            check_dim("layer cols", layer.inputs(), ld.cols)?;
            check_dim("layer weights", ld.rows * ld.cols, ld.weights.len())?;
            check_dim("layer bias", ld.rows, ld.bias.len())?;
            layer.weights = DMatrix::from_row_slice(ld.rows, ld.cols, &ld.weights);
            layer.bias = DVector::from_vec(ld.bias);
            if !layer.is_finite() {
                return Err(Error::NonFinite(format!("parameters of layer {name}")));
            }
        }
        Ok(model)
    }
}
