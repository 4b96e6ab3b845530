//! Synthetic recordings with known unit boundaries, for demos and tests.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio_io::{write_wav_pcm16, AudioClip};
use crate::error::Result;

/// A tone burst sweeping linearly from `start_hz` to `end_hz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Burst {
    pub onset_s: f64,
    pub offset_s: f64,
    pub start_hz: f64,
    pub end_hz: f64,
    pub amplitude: f64,
}

const RAMP_S: f64 = 0.002;

/// Renders bursts over white Gaussian noise of standard deviation `noise_rms`.
pub fn render(
    sample_rate_hz: f64,
    duration_s: f64,
    bursts: &[Burst],
    noise_rms: f64,
    seed: u64,
    source_id: &str,
) -> AudioClip {
    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = (0..n)
        .map(|_| noise_rms * rng.sample::<f64, _>(StandardNormal))
        .collect();
    for b in bursts {
        let first = (b.onset_s * sample_rate_hz).round() as usize;
        let last = ((b.offset_s * sample_rate_hz).round() as usize).min(n);
        let len_s = b.offset_s - b.onset_s;
        let mut phase = 0.0;
        for (i, s) in samples.iter_mut().enumerate().take(last).skip(first) {
            let t = (i - first) as f64 / sample_rate_hz;
            let freq = b.start_hz + (b.end_hz - b.start_hz) * t / len_s;
            phase += 2.0 * PI * freq / sample_rate_hz;
            let edge = t.min(len_s - t).max(0.0);
            let ramp = if edge < RAMP_S { 0.5 - 0.5 * (PI * edge / RAMP_S).cos() } else { 1.0 };
            *s += b.amplitude * ramp * phase.sin();
        }
    }
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    AudioClip {
        samples,
        sample_rate_hz,
        source_id: source_id.to_string(),
    }
}

/// Noise standard deviation giving `snr_db` relative to a sinusoid of `amplitude`.
pub fn noise_for_snr(amplitude: f64, snr_db: f64) -> f64 {
    (amplitude * amplitude / 2.0 / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// One second at 16 kHz holding two 2 kHz bursts at 20 dB SNR.
pub fn two_burst_recording(seed: u64) -> (AudioClip, Vec<Burst>) {
    let amplitude = 0.5;
    let bursts = vec![
        Burst {
            onset_s: 0.200,
            offset_s: 0.350,
            start_hz: 2000.0,
            end_hz: 2000.0,
            amplitude,
        },
        Burst {
            onset_s: 0.600,
            offset_s: 0.800,
            start_hz: 2000.0,
            end_hz: 2000.0,
            amplitude,
        },
    ];
    let clip = render(16_000.0, 1.0, &bursts, noise_for_snr(amplitude, 20.0), seed, "two_burst");
    (clip, bursts)
}

/// Unit prototypes: steady low tone, steady high tone, upward sweep.
const UNIT_TYPES: [(f64, f64); 3] = [(1200.0, 1200.0), (3200.0, 3200.0), (1500.0, 3500.0)];

/// Recording `index` of the demo corpus: eight units drawn from three types
/// with jittered pitch and timing, ordered by a per-recording pattern.
pub fn corpus_recording(index: usize, seed: u64) -> (AudioClip, Vec<Burst>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let amplitude = 0.4;
    let mut t = 0.15;
    let mut bursts = Vec::new();
    for u in 0..8 {
        let kind = if index.is_multiple_of(2) { u % 3 } else { (u * 2 + index) % 3 };
        let (f0, f1) = UNIT_TYPES[kind];
        let jitter = 1.0 + 0.05 * rng.random_range(-1.0..1.0);
        let len = 0.09 + 0.04 * rng.random::<f64>();
        bursts.push(Burst {
            onset_s: t,
            offset_s: t + len,
            start_hz: f0 * jitter,
            end_hz: f1 * jitter,
            amplitude,
        });
        t += len + 0.08 + 0.06 * rng.random::<f64>();
    }
    let clip = render(
        16_000.0,
        t + 0.15,
        &bursts,
        noise_for_snr(amplitude, 30.0),
        seed ^ (index as u64 + 1),
        &format!("bout_{index:02}"),
    );
    (clip, bursts)
}

/// Writes `count` corpus recordings as 16-bit WAV files into `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, count: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    (0..count)
        .map(|i| {
            let (clip, _) = corpus_recording(i, seed);
            let path = dir.join(format!("{}.wav", clip.source_id));
            write_wav_pcm16(&clip, &path)?;
            Ok(path)
        })
        .collect()
}
