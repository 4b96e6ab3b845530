use crate::embedding::LatentSequence;
use crate::error::{check_dim, Error, Result};

/// Vectors with a norm below this are treated as the zero vector.
pub const NEAR_ZERO_NORM: f64 = 1e-12;

/// `1 − cos(a, b)`, in `[0, 2]`.
///
/// When either vector has a near-zero norm the angle is undefined; the
/// distance is then 0 if both are near zero and 1 otherwise.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("cosine distance", a.len(), b.len())?;
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cosine distance input".into()));
    }
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let tiny = NEAR_ZERO_NORM * NEAR_ZERO_NORM;
    match (na < tiny, nb < tiny) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        // sqrt(x·x) == x exactly, so identical vectors give exactly 0
        _ => (1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0),
    }
}

/// Summed cosine distance between consecutive units divided by the time from
/// the first onset to the last offset, in units per second.
pub fn path_complexity(seq: &LatentSequence) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "path complexity of `{}` needs at least 2 units, got {}",
            seq.source_id,
            seq.len()
        )));
    }
    let elapsed = seq.units[seq.len() - 1].segment.offset_s - seq.units[0].segment.onset_s;
    if !(elapsed > 0.0) {
        return Err(Error::InsufficientData(format!(
            "sequence `{}` spans no time",
            seq.source_id
        )));
    }
    let mut length = 0.0;
    for w in seq.units.windows(2) {
        length += cosine_distance(&w[0].z, &w[1].z)?;
    }
    Ok(length / elapsed)
}
