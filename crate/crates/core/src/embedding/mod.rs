//! Latent embeddings of unit spectrograms.

mod pca;
mod vae;

pub use pca::{pca_fit, PcaModel};
pub use vae::{
    elbo_terms, loss_and_gradients, vae_embed, vae_embed_batch, vae_init, vae_reconstruct, vae_train,
    vae_train_step, AdamState, Dense, ElboTerms, LossParts, TrainConfig, VaeGradients, VaeModel,
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::segmentation::UnitSegment;

/// One unit's latent vector together with the segment it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentUnit {
    pub segment: UnitSegment,
    pub z: Vec<f64>,
}

impl LatentUnit {
    pub fn new(segment: UnitSegment, z: Vec<f64>) -> Result<Self> {
        if segment.offset_s <= segment.onset_s {
            return Err(invalid(format!(
                "unit at {} s has non-positive duration",
                segment.onset_s
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("latent vector of unit at {} s", segment.onset_s)));
        }
        Ok(Self { segment, z })
    }

    pub fn duration_s(&self) -> f64 {
        self.segment.duration_s()
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Units from one recording, ordered by onset.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub source_id: String,
    pub units: Vec<LatentUnit>,
}

impl LatentSequence {
    pub fn new(source_id: impl Into<String>, units: Vec<LatentUnit>) -> Result<Self> {
        if let Some(first) = units.first() {
            let dim = first.dim();
            if units.iter().any(|u| u.dim() != dim) {
                return Err(invalid("latent vectors in a sequence differ in dimension"));
            }
        }
        if units
            .windows(2)
            .any(|w| w[1].segment.onset_s < w[0].segment.onset_s)
        {
            return Err(invalid("units must be ordered by onset"));
        }
        Ok(Self {
            source_id: source_id.into(),
            units,
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.units.first().map(LatentUnit::dim)
    }

    pub fn vectors(&self) -> Vec<&[f64]> {
        self.units.iter().map(|u| u.z.as_slice()).collect()
    }

    /// Groups units by `source_id` (sorted), each group ordered by onset.
    pub fn group(units: &[LatentUnit]) -> Result<Vec<LatentSequence>> {
        let mut by_source: std::collections::BTreeMap<&str, Vec<LatentUnit>> = Default::default();
        for u in units {
            by_source
                .entry(u.segment.source_id.as_str())
                .or_default()
                .push(u.clone());
        }
        by_source
            .into_iter()
            .map(|(id, mut us)| {
                us.sort_by(|a, b| a.segment.onset_s.total_cmp(&b.segment.onset_s));
                LatentSequence::new(id, us)
            })
            .collect()
    }
}

/// JSONL record for one embedded unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub source_id: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub z: Vec<f64>,
}

impl From<&LatentUnit> for EmbeddingRecord {
    fn from(u: &LatentUnit) -> Self {
        Self {
            source_id: u.segment.source_id.clone(),
            onset_s: u.segment.onset_s,
            offset_s: u.segment.offset_s,
            z: u.z.clone(),
        }
    }
}

impl EmbeddingRecord {
    /// The embeddings file does not carry `peak_db`; it is restored as NaN.
    pub fn into_unit(self) -> Result<LatentUnit> {
        LatentUnit::new(
            UnitSegment {
                source_id: self.source_id,
                onset_s: self.onset_s,
                offset_s: self.offset_s,
                peak_db: f64::NAN,
            },
            self.z,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, onset: f64, z: Vec<f64>) -> LatentUnit {
        LatentUnit::new(
            UnitSegment {
                source_id: id.into(),
                onset_s: onset,
                offset_s: onset + 0.1,
                peak_db: -10.0,
            },
            z,
        )
        .unwrap()
    }

    #[test]
    fn grouping_sorts_sources_and_onsets() {
        let units = vec![
            unit("b", 1.0, vec![1.0]),
            unit("a", 2.0, vec![2.0]),
            unit("b", 0.5, vec![3.0]),
            unit("a", 0.1, vec![4.0]),
        ];
        let seqs = LatentSequence::group(&units).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].source_id, "a");
        assert_eq!(seqs[0].units[0].z, vec![4.0]);
        assert_eq!(seqs[1].units[0].segment.onset_s, 0.5);
    }

    #[test]
    fn sequence_invariants() {
        assert!(LatentSequence::new("a", vec![unit("a", 1.0, vec![0.0]), unit("a", 0.0, vec![0.0])]).is_err());
        assert!(LatentSequence::new("a", vec![unit("a", 0.0, vec![0.0]), unit("a", 1.0, vec![0.0, 1.0])]).is_err());
    }

    #[test]
    fn unit_invariants() {
        let seg = UnitSegment {
            source_id: "a".into(),
            onset_s: 1.0,
            offset_s: 1.0,
            peak_db: 0.0,
        };
        assert!(LatentUnit::new(seg.clone(), vec![0.0]).is_err());
        let seg = UnitSegment { offset_s: 2.0, ..seg };
        assert!(LatentUnit::new(seg.clone(), vec![f64::INFINITY]).is_err());
        assert_eq!(LatentUnit::new(seg, vec![0.0]).unwrap().duration_s(), 1.0);
    }
}
