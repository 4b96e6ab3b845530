//! Loading, resampling and band-limiting of raw recordings.
//!
//! Every recording is reduced to a single mono stream of `f64` samples in
//! `[-1, 1]`. Filtering is done in the frequency domain over the whole clip,
//! which keeps it zero-phase and exactly length-preserving.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

/// Width of the raised-cosine skirt placed outside each pass-band edge.
pub const TRANSITION_HZ: f64 = 50.0;

/// Zero crossings of the interpolation kernel on each side of the centre.
const SINC_ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.0;

/// A mono recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, source_id: impl Into<String>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(invalid(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }
}

/// Reads a PCM 16-bit or IEEE float-32 WAV file, averaging channels to mono.
///
/// The clip's `source_id` is the file stem.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::UnsupportedEncoding(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedEncoding(format!("{}: zero channels", path.display())));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| f64::from(v).clamp(-1.0, 1.0)))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{}: {bits}-bit {fmt:?} (expected 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    }
    .map_err(|e| Error::UnsupportedEncoding(format!("{}: {e}", path.display())))?;

    if interleaved.len() < channels {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }

    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, f64::from(spec.sample_rate), source_id)
}

/// Writes a clip as mono 16-bit PCM. The sample rate is rounded to an integer.
pub fn write_wav_pcm16(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz.round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(wav_io)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(wav_io)?;
    }
    writer.finalize().map_err(wav_io)
}

fn wav_io(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::UnsupportedEncoding(other.to_string()),
    }
}

/// Band-limited resampling by Kaiser-windowed sinc interpolation.
///
/// The kernel weights at each output position are normalised to sum to one,
/// so constant signals pass through unchanged, including at the clip edges.
pub fn resample(clip: &AudioClip, target_rate_hz: f64) -> Result<AudioClip> {
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(invalid(format!("target rate must be positive, got {target_rate_hz}")));
    }
    if target_rate_hz == clip.sample_rate_hz || clip.is_empty() {
        return Ok(AudioClip {
            sample_rate_hz: target_rate_hz,
            ..clip.clone()
        });
    }

    let ratio = target_rate_hz / clip.sample_rate_hz;
    let n_in = clip.len();
    let n_out = ((n_in as f64 * ratio).round() as usize).max(1);
    // cutoff relative to the input Nyquist frequency
    let cutoff = ratio.min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);

    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 / ratio;
            let lo = (pos - half_width).ceil().max(0.0) as usize;
            let hi = ((pos + half_width).floor() as usize).min(n_in - 1);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (k, &x) in clip.samples.iter().enumerate().take(hi + 1).skip(lo) {
                let d = pos - k as f64;
                let r = d / half_width;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                let w = cutoff * sinc(cutoff * d) * window;
                acc += w * x;
                norm += w;
            }
            if norm.abs() > 1e-12 {
                acc / norm
            } else {
                0.0
            }
        })
        .collect();

    AudioClip::new(samples, target_rate_hz, clip.source_id.clone())
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Gain of the band-pass mask at frequency `f`.
///
/// Unity inside `[f_lo, f_hi]`, a raised-cosine roll-off over
/// [`TRANSITION_HZ`] outside each edge, zero beyond.
pub fn bandpass_gain(f: f64, f_lo: f64, f_hi: f64) -> f64 {
    let skirt = |dist: f64| {
        if dist >= TRANSITION_HZ {
            0.0
        } else {
            0.5 * (1.0 + (PI * dist / TRANSITION_HZ).cos())
        }
    };
    if f < f_lo {
        skirt(f_lo - f)
    } else if f > f_hi {
        skirt(f - f_hi)
    } else {
        1.0
    }
}

/// Zero-phase band-pass filter applied as a mask on the clip's full-length FFT.
pub fn bandpass(clip: &AudioClip, f_lo_hz: f64, f_hi_hz: f64) -> Result<AudioClip> {
    let nyquist = clip.nyquist_hz();
    if !(f_lo_hz >= 0.0 && f_lo_hz < f_hi_hz && f_hi_hz <= nyquist) {
        return Err(invalid(format!(
            "band [{f_lo_hz}, {f_hi_hz}] Hz must satisfy 0 <= lo < hi <= {nyquist}"
        )));
    }
    let n = clip.len();
    if n == 0 {
        return Ok(clip.clone());
    }

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut buf: Vec<Complex<f64>> = clip.samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
    forward.process(&mut buf);
    let bin_hz = clip.sample_rate_hz / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * bin_hz;
        *c *= bandpass_gain(f, f_lo_hz, f_hi_hz);
    }
    inverse.process(&mut buf);

    let scale = 1.0 / n as f64;
    let samples = buf.iter().map(|c| c.re * scale).collect();
    AudioClip::new(samples, clip.sample_rate_hz, clip.source_id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, rate: f64, n: usize) -> AudioClip {
        let samples = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin()).collect();
        AudioClip::new(samples, rate, "sine").unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn clip_rejects_bad_rate_and_nan() {
        assert!(AudioClip::new(vec![0.0], 0.0, "a").is_err());
        assert!(matches!(
            AudioClip::new(vec![0.0, f64::NAN], 8000.0, "a"),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let clip = sine(440.0, 0.5, 16000.0, 1000);
        let out = resample(&clip, 16000.0).unwrap();
        assert_eq!(out, clip);
    }

    #[test]
    fn resample_preserves_dc() {
        let clip = AudioClip::new(vec![0.3; 4410], 44100.0, "dc").unwrap();
        for target in [8000.0, 22050.0, 48000.0, 96000.0] {
            let out = resample(&clip, target).unwrap();
            assert!(out.samples.iter().all(|v| (v - 0.3).abs() < 1e-6), "target {target}");
            assert!((out.duration_s() - clip.duration_s()).abs() <= 1.0 / target);
            assert_eq!(out.source_id, "dc");
        }
    }

    #[test]
    fn resample_rejects_non_positive_rate() {
        let clip = sine(440.0, 0.5, 16000.0, 100);
        assert!(resample(&clip, 0.0).is_err());
        assert!(resample(&clip, -1.0).is_err());
    }

    #[test]
    fn bandpass_full_band_is_identity() {
        let clip = sine(440.0, 0.25, 8000.0, 777);
        let out = bandpass(&clip, 0.0, 4000.0).unwrap();
        for (a, b) in clip.samples.iter().zip(&out.samples) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(out.len(), clip.len());
    }

    #[test]
    fn bandpass_pass_and_stop() {
        let clip = sine(440.0, 0.25, 16000.0, 16000);
        let pass = bandpass(&clip, 300.0, 600.0).unwrap();
        let ratio = rms(&pass.samples) / rms(&clip.samples);
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");

        let stop = bandpass(&clip, 1000.0, 2000.0).unwrap();
        let atten_db = 20.0 * (rms(&stop.samples) / rms(&clip.samples)).log10();
        assert!(atten_db <= -60.0, "attenuation {atten_db} dB");
    }

    #[test]
    fn bandpass_rejects_bad_bands() {
        let clip = sine(440.0, 0.25, 8000.0, 100);
        assert!(bandpass(&clip, 600.0, 300.0).is_err());
        assert!(bandpass(&clip, 0.0, 4001.0).is_err());
        assert!(bandpass(&clip, -1.0, 300.0).is_err());
        assert!(bandpass(&clip, 300.0, 300.0).is_err());
    }

    #[test]
    fn gain_profile() {
        assert_eq!(bandpass_gain(400.0, 300.0, 600.0), 1.0);
        assert!((bandpass_gain(625.0, 300.0, 600.0) - 0.5).abs() < 1e-12);
        assert_eq!(bandpass_gain(650.0, 300.0, 600.0), 0.0);
        assert!((bandpass_gain(275.0, 300.0, 600.0) - 0.5).abs() < 1e-12);
        assert_eq!(bandpass_gain(0.0, 300.0, 600.0), 0.0);
    }

    #[test]
    fn bessel_matches_reference() {
        // I0(1) and I0(8) reference values
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_7).abs() < 1e-9);
    }
}
