//! Amplitude-threshold detection of acoustic units.

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{check_dim, invalid, Error, Result};

/// One acoustic unit's span within a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSegment {
    pub source_id: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub peak_db: f64,
}

impl UnitSegment {
    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

/// Per-frame maximum over bins.
pub fn envelope(spec: &Spectrogram) -> Result<Vec<f64>> {
    if spec.n_frames() == 0 || spec.n_bins() == 0 {
        return Err(Error::InsufficientData("empty spectrogram".into()));
    }
    Ok(spec.values.row_iter().map(|r| r.max()).collect())
}

#[derive(Debug, Clone, Copy)]
struct Run {
    first: usize,
    last: usize,
}

/// Thresholding parameters for [`segment_units`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub threshold_db: f64,
    pub min_dur_s: f64,
    pub min_gap_s: f64,
}

/// Splits an envelope into units.
///
/// Maximal runs of frames with `env > threshold_db` are found first; runs
/// whose gap (next onset minus previous offset) is below `min_gap_s` are
/// merged; merged segments shorter than `min_dur_s` are then dropped, as are
/// single-frame segments, which have zero duration. Onsets and offsets are
/// the centres of the first and last frame of a segment.
pub fn segment_units(
    env: &[f64],
    frame_times_s: &[f64],
    source_id: &str,
    params: &SegmentParams,
) -> Result<Vec<UnitSegment>> {
    check_dim("frame times", env.len(), frame_times_s.len())?;
    let SegmentParams {
        threshold_db,
        min_dur_s,
        min_gap_s,
    } = *params;
    if !threshold_db.is_finite() {
        return Err(invalid(format!("threshold must be finite, got {threshold_db}")));
    }
    if !(min_dur_s >= 0.0 && min_gap_s >= 0.0) {
        return Err(invalid("min_dur and min_gap must be non-negative"));
    }

    let mut runs: Vec<Run> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &v) in env.iter().enumerate() {
        match (v > threshold_db, open) {
            (true, None) => open = Some(i),
            (false, Some(first)) => {
                runs.push(Run { first, last: i - 1 });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(first) = open {
        runs.push(Run {
            first,
            last: env.len() - 1,
        });
    }

    let mut merged: Vec<Run> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(prev) if frame_times_s[run.first] - frame_times_s[prev.last] < min_gap_s => {
                prev.last = run.last;
            }
            _ => merged.push(run),
        }
    }

    Ok(merged
        .into_iter()
        .filter_map(|run| {
            let onset_s = frame_times_s[run.first];
            let offset_s = frame_times_s[run.last];
            let duration = offset_s - onset_s;
            if duration <= 0.0 || duration < min_dur_s {
                return None;
            }
            let peak_db = env[run.first..=run.last]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            Some(UnitSegment {
                source_id: source_id.to_string(),
                onset_s,
                offset_s,
                peak_db,
            })
        })
        .collect())
}

/// Envelope plus segmentation in one call.
pub fn segment_spectrogram(spec: &Spectrogram, params: &SegmentParams) -> Result<Vec<UnitSegment>> {
    let env = envelope(spec)?;
    segment_units(&env, &spec.frame_times_s, &spec.source_id, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SpectrogramConfig;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    const HOP_S: f64 = 0.01;

    fn times(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * HOP_S).collect()
    }

    fn params(threshold_db: f64, min_dur_s: f64, min_gap_s: f64) -> SegmentParams {
        SegmentParams {
            threshold_db,
            min_dur_s,
            min_gap_s,
        }
    }

    #[test]
    fn envelope_single_peak() {
        let mut values = DMatrix::from_element(12, 5, -80.0);
        values[(7, 3)] = -10.0;
        let spec = Spectrogram {
            values,
            frame_times_s: times(12),
            bin_freqs_hz: (0..5).map(|b| b as f64).collect(),
            config: SpectrogramConfig::default(),
            source_id: "x".into(),
        };
        let env = envelope(&spec).unwrap();
        for (i, v) in env.iter().enumerate() {
            assert_eq!(*v, if i == 7 { -10.0 } else { -80.0 });
        }
    }

    #[test]
    fn nothing_above_threshold() {
        let env = vec![-50.0; 30];
        assert!(segment_units(&env, &times(30), "a", &params(-40.0, 0.0, 0.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_run_frame_centres() {
        let mut env = vec![-80.0; 40];
        for v in &mut env[10..=19] {
            *v = -10.0;
        }
        let segs = segment_units(&env, &times(40), "a", &params(-40.0, 0.0, 0.0)).unwrap();
        assert_eq!(segs.len(), 1);
        assert!((segs[0].onset_s - 0.10).abs() < 1e-12);
        assert!((segs[0].offset_s - 0.19).abs() < 1e-12);
        assert_eq!(segs[0].peak_db, -10.0);
    }

    #[test]
    fn sub_gap_runs_merge() {
        let mut env = vec![-80.0; 40];
        for i in (5..=10).chain(12..=20) {
            env[i] = -10.0;
        }
        let split = segment_units(&env, &times(40), "a", &params(-40.0, 0.0, 0.0)).unwrap();
        assert_eq!(split.len(), 2);
        let merged = segment_units(&env, &times(40), "a", &params(-40.0, 0.0, 3.0 * HOP_S)).unwrap();
        assert_eq!(merged.len(), 1);
        assert!((merged[0].onset_s - 0.05).abs() < 1e-12);
        assert!((merged[0].offset_s - 0.20).abs() < 1e-12);
    }

    #[test]
    fn merge_happens_before_duration_filter() {
        // two 3-frame runs separated by a one-frame dip: each alone is 0.02 s
        let mut env = vec![-80.0; 20];
        for i in (4..=6).chain(8..=10) {
            env[i] = -10.0;
        }
        let segs = segment_units(&env, &times(20), "a", &params(-40.0, 0.05, 0.025)).unwrap();
        assert_eq!(segs.len(), 1);
        assert!((segs[0].duration_s() - 0.06).abs() < 1e-12);
    }

    #[test]
    fn single_frame_runs_are_dropped() {
        let mut env = vec![-80.0; 10];
        env[4] = 0.0;
        assert!(segment_units(&env, &times(10), "a", &params(-40.0, 0.0, 0.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn run_touching_the_end_is_closed() {
        let mut env = vec![-80.0; 10];
        for v in &mut env[6..] {
            *v = 0.0;
        }
        let segs = segment_units(&env, &times(10), "a", &params(-40.0, 0.0, 0.0)).unwrap();
        assert_eq!(segs.len(), 1);
        assert!((segs[0].offset_s - 0.09).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            segment_units(&[0.0; 3], &times(4), "a", &params(0.0, 0.0, 0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(segment_units(&[0.0; 3], &times(3), "a", &params(f64::NAN, 0.0, 0.0)).is_err());
    }

    fn total_duration(segs: &[UnitSegment]) -> f64 {
        segs.iter().map(UnitSegment::duration_s).sum()
    }

    proptest! {
        #[test]
        fn output_sorted_disjoint_long_enough(
            env in proptest::collection::vec(-80.0f64..0.0, 1..200),
            threshold in -80.0f64..0.0,
            min_dur in 0.0f64..0.2,
            min_gap in 0.0f64..0.1,
        ) {
            let segs = segment_units(&env, &times(env.len()), "p", &params(threshold, min_dur, min_gap)).unwrap();
            for s in &segs {
                prop_assert!(s.offset_s > s.onset_s);
                prop_assert!(s.duration_s() >= min_dur);
            }
            for w in segs.windows(2) {
                prop_assert!(w[0].offset_s < w[1].onset_s);
            }
        }

        #[test]
        fn raising_threshold_never_adds_duration(
            env in proptest::collection::vec(-80.0f64..0.0, 1..200),
            lo in -80.0f64..0.0,
            delta in 0.0f64..40.0,
            min_dur in 0.0f64..0.2,
            min_gap in 0.0f64..0.1,
        ) {
            let t = times(env.len());
            let low = segment_units(&env, &t, "p", &params(lo, min_dur, min_gap)).unwrap();
            let high = segment_units(&env, &t, "p", &params(lo + delta, min_dur, min_gap)).unwrap();
            prop_assert!(total_duration(&high) <= total_duration(&low) + 1e-12);
        }
    }
}
