//! Python bindings. Vectors cross the boundary as lists of floats and
//! matrices as lists of rows.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use ::vocalpath::analytics;
use ::vocalpath::audio_io::{self, AudioClip};
use ::vocalpath::dsp::{self, Spectrogram, SpectrogramConfig};
use ::vocalpath::embedding::{self, LatentSequence, LatentUnit, PcaModel, TrainConfig, VaeModel};
use ::vocalpath::error::Error;
use ::vocalpath::pipeline::{self, Command, PipelineConfig};
use ::vocalpath::segmentation::{self, SegmentParams, UnitSegment};

create_exception!(vocalpath, VocalpathError, PyException);
create_exception!(vocalpath, ConfigError, VocalpathError);
create_exception!(vocalpath, MissingArtifactError, VocalpathError);
create_exception!(vocalpath, DataError, VocalpathError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config { .. } => ConfigError::new_err(msg),
        Error::MissingArtifact { .. } => MissingArtifactError::new_err(msg),
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => PyValueError::new_err(msg),
        _ => DataError::new_err(msg),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what}: rows differ in length")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn slices(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

#[pyclass(name = "AudioClip", module = "vocalpath", from_py_object)]
#[derive(Clone)]
struct PyAudioClip(AudioClip);

#[pymethods]
impl PyAudioClip {
    #[new]
    #[pyo3(signature = (samples, sample_rate_hz, source_id = "clip".to_string()))]
    fn new(samples: Vec<f64>, sample_rate_hz: f64, source_id: String) -> PyResult<Self> {
        AudioClip::new(samples, sample_rate_hz, source_id).map(Self).map_err(py_err)
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.0.samples.clone()
    }

    #[getter]
    fn sample_rate_hz(&self) -> f64 {
        self.0.sample_rate_hz
    }

    #[getter]
    fn source_id(&self) -> String {
        self.0.source_id.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "AudioClip(source_id={:?}, samples={}, sample_rate_hz={})",
            self.0.source_id,
            self.0.len(),
            self.0.sample_rate_hz
        )
    }
}

#[pyfunction]
fn load_wav(path: PathBuf) -> PyResult<PyAudioClip> {
    audio_io::load_wav(path).map(PyAudioClip).map_err(py_err)
}

#[pyfunction]
fn write_wav(clip: &PyAudioClip, path: PathBuf) -> PyResult<()> {
    audio_io::write_wav_pcm16(&clip.0, path).map_err(py_err)
}

#[pyfunction]
fn resample(clip: &PyAudioClip, target_rate_hz: f64) -> PyResult<PyAudioClip> {
    audio_io::resample(&clip.0, target_rate_hz).map(PyAudioClip).map_err(py_err)
}

#[pyfunction]
fn bandpass(clip: &PyAudioClip, f_lo_hz: f64, f_hi_hz: f64) -> PyResult<PyAudioClip> {
    audio_io::bandpass(&clip.0, f_lo_hz, f_hi_hz).map(PyAudioClip).map_err(py_err)
}

#[pyclass(name = "Spectrogram", module = "vocalpath", from_py_object)]
#[derive(Clone)]
struct PySpectrogram(Spectrogram);

#[pymethods]
impl PySpectrogram {
    /// Frames × bins, in dB.
    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        rows(&self.0.values)
    }

    #[getter]
    fn frame_times_s(&self) -> Vec<f64> {
        self.0.frame_times_s.clone()
    }

    #[getter]
    fn bin_freqs_hz(&self) -> Vec<f64> {
        self.0.bin_freqs_hz.clone()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.n_frames(), self.0.n_bins())
    }

    fn __repr__(&self) -> String {
        format!("Spectrogram(frames={}, bins={})", self.0.n_frames(), self.0.n_bins())
    }
}

#[pyfunction]
#[pyo3(signature = (clip, n_fft = 512, hop = 128, floor_db = -80.0))]
fn stft_spectrogram(clip: &PyAudioClip, n_fft: usize, hop: usize, floor_db: f64) -> PyResult<PySpectrogram> {
    let cfg = SpectrogramConfig { n_fft, hop, floor_db };
    dsp::stft_spectrogram(&clip.0, &cfg).map(PySpectrogram).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (spec, quantile = 0.2))]
fn estimate_noise_profile(spec: &PySpectrogram, quantile: f64) -> PyResult<Vec<f64>> {
    dsp::estimate_noise_profile(&spec.0, quantile).map_err(py_err)
}

#[pyfunction]
fn spectral_gate(spec: &PySpectrogram, noise_db_per_bin: Vec<f64>, over_db: f64) -> PyResult<PySpectrogram> {
    dsp::spectral_gate(&spec.0, &noise_db_per_bin, over_db).map(PySpectrogram).map_err(py_err)
}

#[pyfunction]
fn resize_to(spec: &PySpectrogram, rows_out: usize, cols_out: usize) -> PyResult<Vec<Vec<f64>>> {
    dsp::resize_to(&spec.0, rows_out, cols_out).map(|m| rows(&m)).map_err(py_err)
}

#[pyclass(name = "UnitSegment", module = "vocalpath", get_all, from_py_object)]
#[derive(Clone)]
struct PySegment {
    source_id: String,
    onset_s: f64,
    offset_s: f64,
    peak_db: f64,
}

impl From<UnitSegment> for PySegment {
    fn from(s: UnitSegment) -> Self {
        Self {
            source_id: s.source_id,
            onset_s: s.onset_s,
            offset_s: s.offset_s,
            peak_db: s.peak_db,
        }
    }
}

#[pymethods]
impl PySegment {
    fn __repr__(&self) -> String {
        format!(
            "UnitSegment({:?}, {:.4}-{:.4} s, peak {:.1} dB)",
            self.source_id, self.onset_s, self.offset_s, self.peak_db
        )
    }
}

#[pyfunction]
#[pyo3(signature = (spec, threshold_db = -30.0, min_dur_s = 0.02, min_gap_s = 0.01))]
fn segment_spectrogram(spec: &PySpectrogram, threshold_db: f64, min_dur_s: f64, min_gap_s: f64) -> PyResult<Vec<PySegment>> {
    let params = SegmentParams { threshold_db, min_dur_s, min_gap_s };
    segmentation::segment_spectrogram(&spec.0, &params)
        .map(|v| v.into_iter().map(PySegment::from).collect())
        .map_err(py_err)
}

#[pyclass(name = "Vae", module = "vocalpath")]
struct PyVae(VaeModel);

#[pymethods]
impl PyVae {
    #[new]
    #[pyo3(signature = (input_dim, hidden_dim = 64, latent_dim = 16, seed = 0))]
    fn new(input_dim: usize, hidden_dim: usize, latent_dim: usize, seed: u64) -> PyResult<Self> {
        embedding::vae_init(input_dim, hidden_dim, latent_dim, seed).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        VaeModel::from_json(text).map(Self).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(py_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.0.latent_dim
    }

    #[getter]
    fn n_parameters(&self) -> usize {
        self.0.n_parameters()
    }

    /// Trains in place and returns the per-epoch mean loss.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (data, epochs = 200, batch_size = 16, lr = 1e-3, beta = 1.0, seed = 0))]
    fn train(&mut self, py: Python<'_>, data: Vec<Vec<f64>>, epochs: usize, batch_size: usize, lr: f64, beta: f64, seed: u64) -> PyResult<Vec<f64>> {
        let data = matrix(&data, "data")?;
        let cfg = TrainConfig { epochs, batch_size, lr, beta, seed };
        let model = &mut self.0;
        py.detach(|| embedding::vae_train(model, &data, &cfg)).map_err(py_err)
    }

    fn embed(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        embedding::vae_embed(&self.0, &x).map_err(py_err)
    }

    fn reconstruct(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        embedding::vae_reconstruct(&self.0, &z).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Vae({} -> {} -> {})", self.0.input_dim, self.0.hidden_dim, self.0.latent_dim)
    }
}

#[pyclass(name = "Pca", module = "vocalpath")]
struct PyPca(PcaModel);

#[pymethods]
impl PyPca {
    #[getter]
    fn explained_variance_ratio(&self) -> Vec<f64> {
        self.0.explained_variance_ratio()
    }

    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        rows(&self.0.components)
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.project(&x).map_err(py_err)
    }

    fn inverse(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.inverse(&y).map_err(py_err)
    }
}

#[pyfunction]
fn pca_fit(data: Vec<Vec<f64>>, k: usize) -> PyResult<PyPca> {
    embedding::pca_fit(&matrix(&data, "data")?, k).map(PyPca).map_err(py_err)
}

#[pyfunction]
fn cosine_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    analytics::cosine_distance(&a, &b).map_err(py_err)
}

fn sequence(z: Vec<Vec<f64>>, onsets_s: &[f64], offsets_s: &[f64]) -> PyResult<LatentSequence> {
    if z.len() != onsets_s.len() || z.len() != offsets_s.len() {
        return Err(PyValueError::new_err("z, onsets and offsets must have equal length"));
    }
    let units = z
        .into_iter()
        .zip(onsets_s.iter().zip(offsets_s))
        .map(|(z, (&on, &off))| {
            let seg = UnitSegment {
                source_id: "seq".into(),
                onset_s: on,
                offset_s: off,
                peak_db: f64::NAN,
            };
            LatentUnit::new(seg, z)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    LatentSequence::new("seq", units).map_err(py_err)
}

/// Cosine path length per second for units with the given timing.
#[pyfunction]
fn path_complexity(z: Vec<Vec<f64>>, onsets_s: Vec<f64>, offsets_s: Vec<f64>) -> PyResult<f64> {
    analytics::path_complexity(&sequence(z, &onsets_s, &offsets_s)?).map_err(py_err)
}

/// Returns `(distance, path)`.
#[pyfunction]
#[pyo3(signature = (a, b, band = None))]
fn dtw(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, band: Option<usize>) -> PyResult<(f64, Vec<(usize, usize)>)> {
    analytics::dtw(&slices(&a), &slices(&b), band)
        .map(|r| (r.distance, r.path))
        .map_err(py_err)
}

#[pyclass(name = "VarModel", module = "vocalpath")]
struct PyVar(analytics::VarModel);

#[pymethods]
impl PyVar {
    #[getter]
    fn order(&self) -> usize {
        self.0.order
    }

    /// `A_1 … A_p` as lists of rows.
    #[getter]
    fn coefficients(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.coefficients.iter().map(rows).collect()
    }

    #[getter]
    fn intercept(&self) -> Vec<f64> {
        self.0.intercept.iter().copied().collect()
    }

    #[getter]
    fn noise_cov(&self) -> Vec<Vec<f64>> {
        rows(&self.0.noise_cov)
    }

    /// Mean one-step log-likelihood of `series`, in nats per step.
    fn predictability(&self, series: Vec<Vec<f64>>) -> PyResult<f64> {
        analytics::var_predictability_series(&self.0, &slices(&series)).map_err(py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (sequences, order = 1))]
fn var_fit(sequences: Vec<Vec<Vec<f64>>>, order: usize) -> PyResult<PyVar> {
    let series: Vec<Vec<&[f64]>> = sequences.iter().map(|s| slices(s)).collect();
    analytics::var_fit_series(&series, order).map(PyVar).map_err(py_err)
}

#[pyclass(name = "DensityModel", module = "vocalpath")]
struct PyDensity {
    model: analytics::DensityModel,
    log_likelihood: Vec<f64>,
    converged: bool,
}

#[pymethods]
impl PyDensity {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.model.weights.clone()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.model.means.iter().map(|m| m.iter().copied().collect()).collect()
    }

    #[getter]
    fn covariances(&self) -> Vec<Vec<Vec<f64>>> {
        self.model.covariances.iter().map(rows).collect()
    }

    #[getter]
    fn log_likelihood(&self) -> Vec<f64> {
        self.log_likelihood.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.converged
    }

    fn log_density(&self, z: Vec<f64>) -> PyResult<f64> {
        analytics::log_density(&self.model, &z).map_err(py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (data, components = 2, seed = 0, max_iters = 200, tol = 1e-8))]
fn gmm_fit(data: Vec<Vec<f64>>, components: usize, seed: u64, max_iters: usize, tol: f64) -> PyResult<PyDensity> {
    let params = analytics::GmmParams { components, seed, max_iters, tol };
    let fit = analytics::gmm_fit(&matrix(&data, "data")?, &params).map_err(py_err)?;
    Ok(PyDensity {
        model: fit.model,
        log_likelihood: fit.log_likelihood,
        converged: fit.converged,
    })
}

/// Standard-normal log-density with a single component, for quick checks.
#[pyfunction]
fn standard_normal_log_density(z: Vec<f64>) -> PyResult<f64> {
    let d = z.len();
    let model = analytics::DensityModel {
        weights: vec![1.0],
        means: vec![DVector::zeros(d)],
        covariances: vec![DMatrix::identity(d, d)],
    };
    analytics::log_density(&model, &z).map_err(py_err)
}

/// Runs a pipeline stage (or `"all"`) from a JSON config file.
#[pyfunction]
#[pyo3(signature = (command, config, seed = None))]
fn run_pipeline(py: Python<'_>, command: &str, config: PathBuf, seed: Option<u64>) -> PyResult<()> {
    let command: Command = command.parse().map_err(py_err)?;
    let mut cfg = PipelineConfig::load(&config).map_err(py_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    py.detach(|| pipeline::run(command, &cfg)).map_err(py_err)
}

#[pymodule]
fn vocalpath(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("VocalpathError", py.get_type::<VocalpathError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("MissingArtifactError", py.get_type::<MissingArtifactError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add_class::<PyAudioClip>()?;
    m.add_class::<PySpectrogram>()?;
    m.add_class::<PySegment>()?;
    m.add_class::<PyVae>()?;
    m.add_class::<PyPca>()?;
    m.add_class::<PyVar>()?;
    m.add_class::<PyDensity>()?;
    m.add_function(wrap_pyfunction!(load_wav, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    m.add_function(wrap_pyfunction!(resample, m)?)?;
    m.add_function(wrap_pyfunction!(bandpass, m)?)?;
    m.add_function(wrap_pyfunction!(stft_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_noise_profile, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_gate, m)?)?;
    m.add_function(wrap_pyfunction!(resize_to, m)?)?;
    m.add_function(wrap_pyfunction!(segment_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(pca_fit, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(path_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(dtw, m)?)?;
    m.add_function(wrap_pyfunction!(var_fit, m)?)?;
    m.add_function(wrap_pyfunction!(gmm_fit, m)?)?;
    m.add_function(wrap_pyfunction!(standard_normal_log_density, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
