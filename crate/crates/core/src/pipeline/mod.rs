//! Stage orchestration: segment → train → embed → analyze → visualize.
//!
//! Every stage reads its inputs from disk, writes its artifacts into the
//! output directory and records a `manifest_<stage>.json` with SHA-256
//! digests of the effective configuration, inputs and outputs.

mod config;
mod svg;

pub use config::PipelineConfig;
pub use svg::{render_scatter_svg, visualize};

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analytics::{dtw, gmm_fit, path_complexity, var_fit, var_predictability, VarModel};
use crate::audio_io::{bandpass, load_wav, resample, AudioClip};
use crate::dsp::{estimate_noise_profile, resize_to, spectral_gate, stft_spectrogram, Spectrogram};
use crate::embedding::{
    vae_embed_batch, vae_init, vae_train, EmbeddingRecord, LatentSequence, LatentUnit, VaeModel,
};
use crate::error::{Error, Result};
use crate::segmentation::{segment_spectrogram, UnitSegment};

pub const SEGMENTS_FILE: &str = "segments.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "train_history.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DTW_FILE: &str = "dtw_matrix.csv";
pub const SCATTER_FILE: &str = "latent_scatter.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Segment,
    Train,
    Embed,
    Analyze,
    Visualize,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Segment => "segment",
            Command::Train => "train",
            Command::Embed => "embed",
            Command::Analyze => "analyze",
            Command::Visualize => "visualize",
            Command::All => "all",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "segment" => Command::Segment,
            "train" => Command::Train,
            "embed" => Command::Embed,
            "analyze" => Command::Analyze,
            "visualize" => Command::Visualize,
            "all" => Command::All,
            other => {
                return Err(Error::InvalidArgument(format!("unknown command `{other}`")));
            }
        })
    }
}

/// Process exit code for an error: 2 config, 3 missing upstream artifact, 4 data.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        Error::MissingArtifact { .. } => 3,
        _ => 4,
    }
}

/// Runs one stage, or all of them in order.
pub fn run(command: Command, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    if !cfg.audio_dir.is_dir() {
        return Err(Error::Config {
            key: "audio_dir".into(),
            message: format!("{} is not a directory", cfg.audio_dir.display()),
        });
    }
    fs::create_dir_all(&cfg.output_dir)?;
    match command {
        Command::Segment => segment_stage(cfg),
        Command::Train => train_stage(cfg),
        Command::Embed => embed_stage(cfg),
        Command::Analyze => analyze_stage(cfg),
        Command::Visualize => visualize_stage(cfg),
        Command::All => {
            segment_stage(cfg)?;
            train_stage(cfg)?;
            embed_stage(cfg)?;
            analyze_stage(cfg)?;
            visualize_stage(cfg)
        }
    }
}

/// WAV files in `dir`, sorted by file name.
pub fn audio_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.to_string_lossy().eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Load → optional resample → band-pass → spectrogram → optional spectral gate.
pub fn preprocess(path: &Path, cfg: &PipelineConfig) -> Result<(AudioClip, Spectrogram)> {
    let mut clip = load_wav(path)?;
    if let Some(rate) = cfg.resample_hz {
        clip = resample(&clip, rate)?;
    }
    let nyquist = clip.nyquist_hz();
    let high = cfg.highcut_hz.unwrap_or(nyquist).min(nyquist);
    if cfg.lowcut_hz > 0.0 || high < nyquist {
        clip = bandpass(&clip, cfg.lowcut_hz, high)?;
    }
    let mut spec = stft_spectrogram(&clip, &cfg.spectrogram())?;
    if cfg.denoise {
        let noise = estimate_noise_profile(&spec, cfg.noise_quantile)?;
        spec = spectral_gate(&spec, &noise, cfg.over_db)?;
    }
    Ok((clip, spec))
}

/// Flattened (row-major) `unit_rows × unit_cols` image of one segment.
pub fn unit_image(spec: &Spectrogram, sample_rate_hz: f64, seg: &UnitSegment, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let frame_of = |t: f64| (t * sample_rate_hz / cfg.hop as f64).round() as usize;
    let last_frame = spec.n_frames() - 1;
    let first = frame_of(seg.onset_s).min(last_frame);
    let last = frame_of(seg.offset_s).clamp(first, last_frame);
    let high = cfg.highcut_hz.unwrap_or(f64::INFINITY);
    let crop = spec.crop(first, last, cfg.lowcut_hz, high)?;
    let img = resize_to(&crop, cfg.unit_rows, cfg.unit_cols)?;
    Ok(img.transpose().iter().copied().collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    tool_version: &'a str,
    config_version: &'a str,
    seed: u64,
    config_sha256: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

/// Hash of the configuration with the output/audio locations removed, so the
/// same settings hash identically wherever they are run from.
fn config_digest(cfg: &PipelineConfig) -> Result<String> {
    let mut value = serde_json::to_value(cfg)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("audio_dir");
        map.remove("output_dir");
    }
    Ok(sha256_hex(serde_json::to_string(&value)?.as_bytes()))
}

fn digest_files(paths: &[PathBuf], label_prefix: &str) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(FileDigest {
                path: format!("{label_prefix}{name}"),
                sha256: sha256_hex(&fs::read(p)?),
            })
        })
        .collect()
}

fn write_manifest(cfg: &PipelineConfig, stage: &str, inputs: &[PathBuf], audio: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    let mut input_digests = digest_files(audio, "audio/")?;
    input_digests.extend(digest_files(inputs, "")?);
    let manifest = Manifest {
        stage,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_version: &cfg.version,
        seed: cfg.seed,
        config_sha256: config_digest(cfg)?,
        inputs: input_digests,
        outputs: digest_files(outputs, "")?,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(cfg.output_dir.join(format!("manifest_{stage}.json")), text)?;
    Ok(())
}

fn require(cfg: &PipelineConfig, file: &str, command: &'static str) -> Result<PathBuf> {
    let path = cfg.output_dir.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, command })
    }
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Artifact {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

pub fn read_segments(path: &Path) -> Result<Vec<UnitSegment>> {
    read_jsonl(path)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<LatentUnit>> {
    read_jsonl::<EmbeddingRecord>(path)?
        .into_iter()
        .map(EmbeddingRecord::into_unit)
        .collect()
}

fn segment_stage(cfg: &PipelineConfig) -> Result<()> {
    let files = audio_files(&cfg.audio_dir)?;
    if files.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no .wav files in {}",
            cfg.audio_dir.display()
        )));
    }
    let mut segments = Vec::new();
    for path in &files {
        let (_, spec) = preprocess(path, cfg)?;
        segments.extend(segment_spectrogram(&spec, &cfg.segment_params())?);
    }
    segments.sort_by(|a, b| {
        a.source_id
            .cmp(&b.source_id)
            .then(a.onset_s.total_cmp(&b.onset_s))
    });
    let out = cfg.output_dir.join(SEGMENTS_FILE);
    write_jsonl(&out, &segments)?;
    write_manifest(cfg, "segment", &[], &files, &[out])
}

/// Unit images for every segment, in segment order, plus the audio files read.
fn unit_images(cfg: &PipelineConfig, segments: &[UnitSegment]) -> Result<(DMatrix<f64>, Vec<PathBuf>)> {
    let files = audio_files(&cfg.audio_dir)?;
    let mut used = Vec::new();
    let mut rows: Vec<f64> = Vec::with_capacity(segments.len() * cfg.unit_input_dim());
    let mut current: Option<(String, AudioClip, Spectrogram)> = None;
    for seg in segments {
        if current.as_ref().is_none_or(|(id, _, _)| *id != seg.source_id) {
            let path = files
                .iter()
                .find(|p| p.file_stem().is_some_and(|s| s.to_string_lossy() == seg.source_id))
                .ok_or_else(|| Error::Artifact {
                    path: cfg.output_dir.join(SEGMENTS_FILE),
                    message: format!("no audio file for source `{}`", seg.source_id),
                })?;
            let (clip, spec) = preprocess(path, cfg)?;
            used.push(path.clone());
            current = Some((seg.source_id.clone(), clip, spec));
        }
        let (_, clip, spec) = current.as_ref().expect("loaded above");
        rows.extend(unit_image(spec, clip.sample_rate_hz, seg, cfg)?);
    }
    used.sort();
    used.dedup();
    Ok((
        DMatrix::from_row_slice(segments.len(), cfg.unit_input_dim(), &rows),
        used,
    ))
}

fn train_stage(cfg: &PipelineConfig) -> Result<()> {
    let seg_path = require(cfg, SEGMENTS_FILE, "segment")?;
    let segments = read_segments(&seg_path)?;
    if segments.is_empty() {
        return Err(Error::InsufficientData("no segments to train on".into()));
    }
    let (data, audio) = unit_images(cfg, &segments)?;
    let mut model = vae_init(cfg.unit_input_dim(), cfg.vae_hidden, cfg.vae_latent, cfg.seed)?;
    let mut train = cfg.train_config();
    train.batch_size = train.batch_size.min(data.nrows());
    let history = vae_train(&mut model, &data, &train)?;

    let model_path = cfg.output_dir.join(MODEL_FILE);
    let mut text = model.to_json()?;
    text.push('\n');
    fs::write(&model_path, text)?;
    let history_path = cfg.output_dir.join(HISTORY_FILE);
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in history.iter().enumerate() {
        let _ = writeln!(csv, "{},{loss}", i + 1);
    }
    fs::write(&history_path, csv)?;
    write_manifest(cfg, "train", &[seg_path], &audio, &[model_path, history_path])
}

fn embed_stage(cfg: &PipelineConfig) -> Result<()> {
    let seg_path = require(cfg, SEGMENTS_FILE, "segment")?;
    let model_path = require(cfg, MODEL_FILE, "train")?;
    let model = VaeModel::from_json(&fs::read_to_string(&model_path)?)?;
    if model.input_dim != cfg.unit_input_dim() {
        return Err(Error::Config {
            key: "unit_rows".into(),
            message: format!(
                "model expects {} inputs but unit_rows x unit_cols = {}",
                model.input_dim,
                cfg.unit_input_dim()
            ),
        });
    }
    let segments = read_segments(&seg_path)?;
    let (data, audio) = unit_images(cfg, &segments)?;
    let z = vae_embed_batch(&model, &data)?;
    let records: Vec<EmbeddingRecord> = segments
        .iter()
        .enumerate()
        .map(|(i, s)| EmbeddingRecord {
            source_id: s.source_id.clone(),
            onset_s: s.onset_s,
            offset_s: s.offset_s,
            z: z.row(i).iter().copied().collect(),
        })
        .collect();
    let out = cfg.output_dir.join(EMBEDDINGS_FILE);
    write_jsonl(&out, &records)?;
    write_manifest(cfg, "embed", &[seg_path, model_path], &audio, &[out])
}

/// Per-sequence measures written to the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMetrics {
    pub source_id: String,
    pub n_units: usize,
    pub complexity_per_s: Option<f64>,
    pub predictability_nats: Option<f64>,
    pub mean_log_density: f64,
}

/// Everything `analyze` computes, before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub metrics: Vec<SequenceMetrics>,
    pub dtw_ids: Vec<String>,
    pub dtw: Vec<Vec<f64>>,
    pub var: Option<VarModel>,
}

/// Computes every latent-trajectory measure on full-dimensional embeddings.
pub fn analyze_units(units: &[LatentUnit], cfg: &PipelineConfig) -> Result<Analysis> {
    if units.is_empty() {
        return Err(Error::InsufficientData("no embeddings to analyze".into()));
    }
    let sequences = LatentSequence::group(units)?;
    let dim = sequences[0].dim().unwrap_or(0);

    let fit_on: Vec<LatentSequence> = sequences
        .iter()
        .filter(|s| s.len() > cfg.var_order)
        .cloned()
        .collect();
    let var = match var_fit(&fit_on, cfg.var_order) {
        Ok(m) => Some(m),
        Err(e @ (Error::InsufficientData(_) | Error::Singular(_))) => {
            eprintln!("warning: VAR({}) not fitted: {e}", cfg.var_order);
            None
        }
        Err(e) => return Err(e),
    };

    let data = DMatrix::from_fn(units.len(), dim, |i, j| units[i].z[j]);
    let density = gmm_fit(&data, &cfg.gmm_params())?.model;
    let factored = density.factor()?;

    let mut metrics = Vec::with_capacity(sequences.len());
    for seq in &sequences {
        let complexity_per_s = if seq.len() >= 2 { Some(path_complexity(seq)?) } else { None };
        let predictability_nats = match &var {
            Some(m) if seq.len() > m.order => Some(var_predictability(m, seq)?),
            _ => None,
        };
        let mut total = 0.0;
        for u in &seq.units {
            total += factored.log_density(&u.z)?;
        }
        metrics.push(SequenceMetrics {
            source_id: seq.source_id.clone(),
            n_units: seq.len(),
            complexity_per_s,
            predictability_nats,
            mean_log_density: total / seq.len() as f64,
        });
    }

    let vectors: Vec<Vec<&[f64]>> = sequences.iter().map(LatentSequence::vectors).collect();
    let n = sequences.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let band = cfg
                .dtw_band
                .map(|w| w.max(vectors[i].len().abs_diff(vectors[j].len())));
            let r = dtw(&vectors[i], &vectors[j], band)?;
            matrix[i][j] = if cfg.dtw_normalize { r.normalized_distance() } else { r.distance };
        }
    }

    Ok(Analysis {
        metrics,
        dtw_ids: sequences.iter().map(|s| s.source_id.clone()).collect(),
        dtw: matrix,
        var,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn metrics_csv(analysis: &Analysis) -> String {
    let mut csv = String::from("source_id,n_units,complexity_per_s,predictability_nats,mean_log_density\n");
    for m in &analysis.metrics {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            csv_field(&m.source_id),
            m.n_units,
            opt(m.complexity_per_s),
            opt(m.predictability_nats),
            m.mean_log_density
        );
    }
    csv
}

pub fn dtw_csv(analysis: &Analysis) -> String {
    let mut csv = String::from("source_id");
    for id in &analysis.dtw_ids {
        let _ = write!(csv, ",{}", csv_field(id));
    }
    csv.push('\n');
    for (id, row) in analysis.dtw_ids.iter().zip(&analysis.dtw) {
        csv.push_str(&csv_field(id));
        for v in row {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    csv
}

fn analyze_stage(cfg: &PipelineConfig) -> Result<()> {
    let emb_path = require(cfg, EMBEDDINGS_FILE, "embed")?;
    let units = read_embeddings(&emb_path)?;
    let analysis = analyze_units(&units, cfg)?;
    let metrics_path = cfg.output_dir.join(METRICS_FILE);
    fs::write(&metrics_path, metrics_csv(&analysis))?;
    let dtw_path = cfg.output_dir.join(DTW_FILE);
    fs::write(&dtw_path, dtw_csv(&analysis))?;
    write_manifest(cfg, "analyze", &[emb_path], &[], &[metrics_path, dtw_path])
}

fn visualize_stage(cfg: &PipelineConfig) -> Result<()> {
    let emb_path = require(cfg, EMBEDDINGS_FILE, "embed")?;
    let units = read_embeddings(&emb_path)?;
    let out = cfg.output_dir.join(SCATTER_FILE);
    visualize(&units, &out)?;
    write_manifest(cfg, "visualize", &[emb_path], &[], &[out])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in [
            Command::Segment,
            Command::Train,
            Command::Embed,
            Command::Analyze,
            Command::Visualize,
            Command::All,
        ] {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("plot".parse::<Command>().is_err());
    }

    #[test]
    fn exit_codes() {
        let cfg_err = Error::Config {
            key: "hop".into(),
            message: String::new(),
        };
        assert_eq!(exit_code(&cfg_err), 2);
        let missing = Error::MissingArtifact {
            path: "x".into(),
            command: "embed",
        };
        assert_eq!(exit_code(&missing), 3);
        assert_eq!(exit_code(&Error::InsufficientData(String::new())), 4);
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn config_digest_ignores_locations() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            output_dir: "/elsewhere".into(),
            ..a.clone()
        };
        let c = PipelineConfig { seed: 1, ..a.clone() };
        assert_eq!(config_digest(&a).unwrap(), config_digest(&b).unwrap());
        assert_ne!(config_digest(&a).unwrap(), config_digest(&c).unwrap());
    }
}
