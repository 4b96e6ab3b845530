use crate::error::{check_dim, invalid, Error, Result};

use super::trajectory::cosine_unchecked;

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    /// Sum of local cosine distances along `path`.
    pub distance: f64,
    /// Monotone alignment from `(0, 0)` to `(n − 1, m − 1)`.
    pub path: Vec<(usize, usize)>,
}

impl DtwResult {
    /// Distance divided by the number of aligned pairs.
    pub fn normalized_distance(&self) -> f64 {
        self.distance / self.path.len() as f64
    }
}

/// Dynamic time warping of two vector sequences under cosine distance.
///
/// With `band = Some(w)` only cells with `|i − j| ≤ w` are reachable
/// (Sakoe–Chiba); `w` must be at least the length difference. The returned
/// path is recovered by backtracking, preferring the diagonal predecessor,
/// then `(i − 1, j)`, then `(i, j − 1)` on ties.
pub fn dtw(seq_a: &[&[f64]], seq_b: &[&[f64]], band: Option<usize>) -> Result<DtwResult> {
    let (n, m) = (seq_a.len(), seq_b.len());
    if n == 0 || m == 0 {
        return Err(Error::InsufficientData("DTW needs two non-empty sequences".into()));
    }
    if let Some(w) = band {
        if w < n.abs_diff(m) {
            return Err(invalid(format!(
                "band {w} is narrower than the length difference {}",
                n.abs_diff(m)
            )));
        }
    }
    let dim = seq_a[0].len();
    for v in seq_a.iter().chain(seq_b) {
        check_dim("DTW vector", dim, v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("DTW input".into()));
        }
    }

    let inside = |i: usize, j: usize| band.is_none_or(|w| i.abs_diff(j) <= w);
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;

    for i in 0..n {
        for j in 0..m {
            if !inside(i, j) {
                continue;
            }
            let local = cosine_unchecked(seq_a[i], seq_b[j]);
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[at(i - 1, j - 1)]);
                }
                if i > 0 {
                    best = best.min(acc[at(i - 1, j)]);
                }
                if j > 0 {
                    best = best.min(acc[at(i, j - 1)]);
                }
                best
            };
            acc[at(i, j)] = local + best_prev;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let candidates = [
            (i > 0 && j > 0).then(|| (i - 1, j - 1)),
            (i > 0).then(|| (i - 1, j)),
            (j > 0).then(|| (i, j - 1)),
        ];
        let mut next = None;
        let mut best = f64::INFINITY;
        for (ci, cj) in candidates.into_iter().flatten() {
            let v = acc[at(ci, cj)];
            if v < best {
                best = v;
                next = Some((ci, cj));
            }
        }
        (i, j) = next.expect("a finite predecessor always exists inside the band");
        path.push((i, j));
    }
    path.reverse();

    Ok(DtwResult {
        distance: acc[at(n - 1, m - 1)],
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn identical_sequences_follow_the_diagonal() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.2]];
        let r = dtw(&refs(&a), &refs(&a), None).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn single_cell() {
        let a = vec![vec![1.0, 0.0]];
        let b = vec![vec![0.0, 1.0]];
        let r = dtw(&refs(&a), &refs(&b), None).unwrap();
        assert_eq!(r.distance, 1.0);
        assert_eq!(r.path, vec![(0, 0)]);
        assert_eq!(r.normalized_distance(), 1.0);
    }

    #[test]
    fn path_is_monotone_and_sums_costs() {
        let a = vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]];
        let b = vec![vec![1.0, 0.1], vec![0.0, 1.0]];
        let r = dtw(&refs(&a), &refs(&b), None).unwrap();
        let mut total = 0.0;
        for w in r.path.windows(2) {
            let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(matches!(step, (1, 0) | (0, 1) | (1, 1)));
        }
        for &(i, j) in &r.path {
            total += cosine_unchecked(&a[i], &b[j]);
        }
        assert!((total - r.distance).abs() < 1e-12);
        assert_eq!(*r.path.last().unwrap(), (2, 1));
    }

    #[test]
    fn errors() {
        let a = vec![vec![1.0]; 5];
        let b = vec![vec![1.0]; 2];
        assert!(dtw(&[], &refs(&b), None).is_err());
        assert!(dtw(&refs(&a), &refs(&b), Some(2)).is_err());
        assert!(dtw(&refs(&a), &refs(&b), Some(3)).is_ok());
        let c = vec![vec![1.0, 2.0]];
        assert!(dtw(&refs(&a), &refs(&c), None).is_err());
    }
}
