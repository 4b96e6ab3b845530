//! Log-magnitude spectrograms, spectral gating and fixed-size unit images.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{check_dim, invalid, Error, Result};

/// Short-time Fourier transform parameters. The window is always Hann.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub floor_db: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            n_fft: 512,
            hop: 128,
            floor_db: -80.0,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 16 || !self.n_fft.is_power_of_two() {
            return Err(invalid(format!("n_fft must be a power of two >= 16, got {}", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(invalid(format!("hop must be in 1..={}, got {}", self.n_fft, self.hop)));
        }
        if !(self.floor_db < 0.0 && self.floor_db.is_finite()) {
            return Err(invalid(format!("floor_db must be negative, got {}", self.floor_db)));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Number of centred frames for a clip of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        1 + len.div_ceil(self.hop)
    }
}

/// Frames × bins matrix of dB amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: DMatrix<f64>,
    pub frame_times_s: Vec<f64>,
    pub bin_freqs_hz: Vec<f64>,
    pub config: SpectrogramConfig,
    pub source_id: String,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn floor_db(&self) -> f64 {
        self.config.floor_db
    }

    /// Copy of frames `first..=last` restricted to bins whose centre lies in `[f_lo, f_hi]`.
    pub fn crop(&self, first: usize, last: usize, f_lo_hz: f64, f_hi_hz: f64) -> Result<Spectrogram> {
        if first > last || last >= self.n_frames() {
            return Err(invalid(format!(
                "frame range {first}..={last} outside 0..{}",
                self.n_frames()
            )));
        }
        let bins: Vec<usize> = (0..self.n_bins())
            .filter(|&b| self.bin_freqs_hz[b] >= f_lo_hz && self.bin_freqs_hz[b] <= f_hi_hz)
            .collect();
        if bins.is_empty() {
            return Err(invalid(format!("no bins inside [{f_lo_hz}, {f_hi_hz}] Hz")));
        }
        let rows = last - first + 1;
        let values = DMatrix::from_fn(rows, bins.len(), |r, c| self.values[(first + r, bins[c])]);
        Ok(Spectrogram {
            values,
            frame_times_s: self.frame_times_s[first..=last].to_vec(),
            bin_freqs_hz: bins.iter().map(|&b| self.bin_freqs_hz[b]).collect(),
            config: self.config,
            source_id: self.source_id.clone(),
        })
    }

    /// Writes one CSV row per frame: `time_s` followed by one column per bin.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "time_s")?;
        for f in &self.bin_freqs_hz {
            write!(out, ",{f}")?;
        }
        writeln!(out)?;
        for (t, time) in self.frame_times_s.iter().enumerate() {
            write!(out, "{time}")?;
            for b in 0..self.n_bins() {
                write!(out, ",{}", self.values[(t, b)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn hann(n: usize) -> Vec<f64> {
    // periodic Hann
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Mirror-reflects an out-of-range index back into `0..len` (edge sample not repeated).
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Magnitude STFT in dB with centred, reflect-padded frames.
///
/// Magnitudes are scaled by `2 / sum(window)` so a sinusoid of amplitude `A`
/// centred on a bin reads `20 log10(A)` dB. Values are clamped below at
/// `cfg.floor_db`.
pub fn stft_spectrogram(clip: &AudioClip, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let len = clip.len();
    if len < cfg.n_fft {
        return Err(Error::InsufficientData(format!(
            "clip has {len} samples, shorter than one {}-sample window",
            cfg.n_fft
        )));
    }

    let window = hann(cfg.n_fft);
    let scale = 2.0 / window.iter().sum::<f64>();
    let n_frames = cfg.n_frames(len);
    let n_bins = cfg.n_bins();
    let half = (cfg.n_fft / 2) as isize;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut values = DMatrix::from_element(n_frames, n_bins, cfg.floor_db);

    for t in 0..n_frames {
        let start = (t * cfg.hop) as isize - half;
        for (k, slot) in buf.iter_mut().enumerate() {
            let idx = reflect_index(start + k as isize, len);
            *slot = Complex::new(clip.samples[idx] * window[k], 0.0);
        }
        fft.process(&mut buf);
        for b in 0..n_bins {
            let mag = buf[b].norm() * scale;
            let db = 20.0 * mag.log10();
            values[(t, b)] = if db.is_finite() { db.max(cfg.floor_db) } else { cfg.floor_db };
        }
    }

    let frame_times_s = (0..n_frames)
        .map(|t| (t * cfg.hop) as f64 / clip.sample_rate_hz)
        .collect();
    let bin_freqs_hz = (0..n_bins)
        .map(|b| b as f64 * clip.sample_rate_hz / cfg.n_fft as f64)
        .collect();

    Ok(Spectrogram {
        values,
        frame_times_s,
        bin_freqs_hz,
        config: *cfg,
        source_id: clip.source_id.clone(),
    })
}

/// Per-bin amplitude quantile over frames (linear interpolation between order statistics).
pub fn estimate_noise_profile(spec: &Spectrogram, quantile: f64) -> Result<Vec<f64>> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(invalid(format!("quantile must lie in (0, 1), got {quantile}")));
    }
    if spec.n_frames() < 8 {
        return Err(Error::InsufficientData(format!(
            "noise estimation needs at least 8 frames, got {}",
            spec.n_frames()
        )));
    }
    Ok(spec
        .values
        .column_iter()
        .map(|col| {
            let mut v: Vec<f64> = col.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            quantile_sorted(&v, quantile)
        })
        .collect())
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Floors every cell at or below `noise_db[bin] + over_db`; other cells are untouched.
pub fn spectral_gate(spec: &Spectrogram, noise_db_per_bin: &[f64], over_db: f64) -> Result<Spectrogram> {
    check_dim("noise profile", spec.n_bins(), noise_db_per_bin.len())?;
    if !(over_db >= 0.0) {
        return Err(invalid(format!("over_db must be non-negative, got {over_db}")));
    }
    let floor = spec.floor_db();
    let mut out = spec.clone();
    for (b, mut col) in out.values.column_iter_mut().enumerate() {
        let threshold = noise_db_per_bin[b] + over_db;
        for v in col.iter_mut() {
            if *v <= threshold {
                *v = floor;
            }
        }
    }
    Ok(out)
}

/// Row-stochastic matrix mapping `src` cells onto `dst` cells by overlap length.
fn area_weights(src: usize, dst: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(dst, src);
    let step = src as f64 / dst as f64;
    for i in 0..dst {
        let lo = i as f64 * step;
        let hi = (i + 1) as f64 * step;
        let first = lo.floor() as usize;
        let last = (hi.ceil() as usize).min(src);
        for j in first..last {
            let overlap = (hi.min((j + 1) as f64) - lo.max(j as f64)).max(0.0);
            w[(i, j)] = overlap / step;
        }
    }
    w
}

/// Area-averaged resize of the dB matrix to `rows × cols`, then rescaled so
/// `floor_db → 0` and `0 dB → 1`, clamped to `[0, 1]`.
///
/// Rows follow the frame axis and columns the bin axis.
pub fn resize_to(spec: &Spectrogram, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 {
        return Err(invalid(format!("target shape {rows}x{cols} has a zero dimension")));
    }
    if spec.n_frames() == 0 || spec.n_bins() == 0 {
        return Err(Error::InsufficientData("empty spectrogram".into()));
    }
    let resized = if (rows, cols) == (spec.n_frames(), spec.n_bins()) {
        spec.values.clone()
    } else {
        let wr = area_weights(spec.n_frames(), rows);
        let wc = area_weights(spec.n_bins(), cols);
        &wr * &spec.values * wc.transpose()
    };
    let floor = spec.floor_db();
    Ok(resized.map(|v| ((v - floor) / -floor).clamp(0.0, 1.0)))
}
