//! Banded dynamic time warping and the Keogh lower bound used to prune
//! pairwise comparisons and to limit how far a series may warp.
//!
//! Costs accumulate as squared differences along a monotone path with steps
//! right, down, and diagonal; the reported distance is the square root of
//! the minimal cumulative cost, so DTW and the lower bound are directly
//! comparable.

use std::path::Path;

use thiserror::Error;

use crate::ingest::IngestError;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("empty input series")]
    EmptyInput,
}

/// Warping constraint: a Sakoe-Chiba band of half-width `r`, or none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reach {
    Band(usize),
    Unbounded,
}

/// Envelope of a series: running windowed max/min with half-width `reach`.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub reach: usize,
}

/// Distance configuration shared across a clustering run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceConfig {
    /// Band half-width as a fraction of the series length; 0.025 by default.
    pub reach_fraction: f64,
    /// Common length every arc is resampled to before comparison.
    pub resample_length: usize,
}

impl DistanceConfig {
    pub fn new(reach_fraction: f64, resample_length: usize) -> Self {
        let cfg = DistanceConfig {
            reach_fraction,
            resample_length,
        };
        let r = cfg.reach();
        assert!(
            (0.0..=1.0).contains(&reach_fraction) && r < resample_length,
            "reach {r} must satisfy 0 <= r < {resample_length}"
        );
        cfg
    }

    /// Band half-width in points: `round(reach_fraction * resample_length)`,
    /// ties to even.
    pub fn reach(&self) -> usize {
        ((self.reach_fraction * self.resample_length as f64).round_ties_even() as usize).max(0)
    }
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig::new(0.025, 500)
    }
}

/// Windowed max/min envelope with indices clamped at the boundaries.
pub fn keogh_envelope(series: &[f64], reach: usize) -> Envelope {
    let n = series.len();
    let mut upper = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(reach);
        let hi = usize::min(n - 1, i + reach);
        let window = &series[lo..=hi];
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for &v in window {
            if v > max {
                max = v;
            }
            if v < min {
                min = v;
            }
        }
        upper.push(max);
        lower.push(min);
    }
    Envelope {
        upper,
        lower,
        reach,
    }
}

/// Lower bound on the banded DTW distance from `a` to `b`: square root of
/// the summed squared exceedances of `b` outside the envelope of `a`.
pub fn lb_keogh(a: &[f64], b: &[f64], reach: usize) -> Result<f64, DistError> {
    if a.len() != b.len() {
        return Err(DistError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.is_empty() {
        return Err(DistError::EmptyInput);
    }
    Ok(lb_keogh_env(&keogh_envelope(a, reach), b))
}

/// [`lb_keogh`] against a precomputed envelope; used where one series is
/// compared against many.
pub fn lb_keogh_env(env: &Envelope, b: &[f64]) -> f64 {
    debug_assert_eq!(env.upper.len(), b.len());
    let mut acc = 0.0;
    for ((&v, &u), &l) in b.iter().zip(&env.upper).zip(&env.lower) {
        if v > u {
            acc += (v - u) * (v - u);
        } else if v < l {
            acc += (v - l) * (v - l);
        }
    }
    acc.sqrt()
}

/// DTW distance under the given warping constraint.
///
/// Banded mode requires equal lengths; cells with `|i - j| > r` are
/// forbidden. The band always contains the diagonal, so a path exists.
pub fn dtw(a: &[f64], b: &[f64], reach: Reach) -> Result<f64, DistError> {
    if a.is_empty() || b.is_empty() {
        return Err(DistError::EmptyInput);
    }
    match reach {
        Reach::Unbounded => Ok(dtw_full(a, b)),
        Reach::Band(r) => {
            if a.len() != b.len() {
                return Err(DistError::LengthMismatch {
                    a: a.len(),
                    b: b.len(),
                });
            }
            Ok(dtw_banded(a, b, r))
        }
    }
}

fn sq(x: f64, y: f64) -> f64 {
    (x - y) * (x - y)
}

fn dtw_full(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 0..n {
        curr[0] = f64::INFINITY;
        for j in 0..m {
            let best = prev[j].min(prev[j + 1]).min(curr[j]);
            curr[j + 1] = sq(a[i], b[j]) + best;
        }
        std::mem::swap(&mut prev, &mut curr);
        // only the virtual origin may seed the first row
        prev[0] = f64::INFINITY;
    }
    prev[m].sqrt()
}

/// Banded DTW over rows of width `2r + 1`; row `i` covers columns
/// `[i - r, i + r]` clamped to the matrix, stored at offset `j - (i - r)`.
fn dtw_banded(a: &[f64], b: &[f64], reach: usize) -> f64 {
    let n = a.len();
    let r = reach.min(n - 1);
    let width = 2 * r + 1;
    // one sentinel slot past each end keeps the neighbor lookups branch-free
    let mut prev = vec![f64::INFINITY; width + 2];
    let mut curr = vec![f64::INFINITY; width + 2];

    for i in 0..n {
        curr.fill(f64::INFINITY);
        let j_lo = i.saturating_sub(r);
        let j_hi = usize::min(n - 1, i + r);
        for j in j_lo..=j_hi {
            let o = j - (i - r.min(i)) + 1; // shift by 1 for the sentinel
            let cost = sq(a[i], b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else if i == 0 {
                curr[o - 1]
            } else {
                // prev row starts at column (i-1) - min(r, i-1)
                let prev_lo = (i - 1).saturating_sub(r);
                // up: (i-1, j); diag: (i-1, j-1); left: (i, j-1)
                let up = offset_get(&prev, j, prev_lo, i - 1 + r, n);
                let diag = if j == 0 {
                    f64::INFINITY
                } else {
                    offset_get(&prev, j - 1, prev_lo, i - 1 + r, n)
                };
                let left = curr[o - 1];
                up.min(diag).min(left)
            };
            curr[o] = cost + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    // final cell (n-1, n-1) sits at offset r within the last row
    let last_lo = (n - 1).saturating_sub(r);
    prev[(n - 1) - last_lo + 1].sqrt()
}

/// Reads a banded-row slot for absolute column `j`, where the row covers
/// `[row_lo, min(row_hi, n-1)]`; out-of-band columns read as infinity.
#[inline]
fn offset_get(row: &[f64], j: usize, row_lo: usize, row_hi: usize, n: usize) -> f64 {
    if j < row_lo || j > row_hi.min(n - 1) {
        f64::INFINITY
    } else {
        row[j - row_lo + 1]
    }
}

/// Outcome of a lower-bound-guarded distance evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrunedDistance {
    Distance(f64),
    Pruned,
}

impl PrunedDistance {
    pub fn value(&self) -> Option<f64> {
        match self {
            PrunedDistance::Distance(d) => Some(*d),
            PrunedDistance::Pruned => None,
        }
    }
}

/// Returns `Pruned` when the max of both LB_Keogh orientations already
/// reaches `best_so_far`; otherwise the exact banded DTW distance.
pub fn pruned_distance(
    a: &[f64],
    b: &[f64],
    reach: usize,
    best_so_far: f64,
) -> Result<PrunedDistance, DistError> {
    if a.len() != b.len() {
        return Err(DistError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.is_empty() {
        return Err(DistError::EmptyInput);
    }
    let lb = lb_keogh(a, b, reach)?.max(lb_keogh(b, a, reach)?);
    if lb >= best_so_far {
        return Ok(PrunedDistance::Pruned);
    }
    Ok(PrunedDistance::Distance(dtw_banded(a, b, reach)))
}

/// Condensed upper-triangular pairwise distance matrix under banded DTW.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedMatrix {
    pub n: usize,
    /// Entry for pair `(i, j)` with `i < j` at `i*n - i*(i+1)/2 + (j-i-1)`.
    pub distances: Vec<f64>,
}

impl CondensedMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.distances[i * self.n - i * (i + 1) / 2 + (j - i - 1)]
    }
}

/// Computes the full pairwise matrix in parallel. Results are written into
/// fixed slots, so they do not depend on scheduling.
pub fn distance_matrix(series: &[Vec<f64>], reach: usize) -> Result<CondensedMatrix, DistError> {
    use rayon::prelude::*;

    let n = series.len();
    if n == 0 {
        return Err(DistError::EmptyInput);
    }
    let len = series[0].len();
    for s in series {
        if s.len() != len {
            return Err(DistError::LengthMismatch {
                a: len,
                b: s.len(),
            });
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let distances: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| dtw_banded(&series[i], &series[j], reach))
        .collect();
    Ok(CondensedMatrix { n, distances })
}

/// Renders the condensed matrix with its provenance header.
pub fn render_matrix(matrix: &CondensedMatrix, reach_fraction: f64, resample: usize) -> String {
    let mut out = format!(
        "# n={},reach_fraction={},resample={}\n",
        matrix.n, reach_fraction, resample
    );
    let mut idx = 0;
    for i in 0..matrix.n {
        let row: Vec<String> = ((i + 1)..matrix.n)
            .map(|_| {
                let s = format!("{}", matrix.distances[idx]);
                idx += 1;
                s
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, ctx: &str) -> Result<CondensedMatrix, IngestError> {
    let mut n: Option<usize> = None;
    let mut distances = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            for pair in trimmed.trim_start_matches('#').trim().split(',') {
                if let Some((k, v)) = pair.split_once('=') {
                    if k.trim() == "n" {
                        n = v.trim().parse().ok();
                    }
                }
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        for field in trimmed.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| IngestError::Parse {
                context: ctx.to_string(),
                msg: format!("bad distance value `{field}`"),
            })?;
            distances.push(v);
        }
    }
    let n = n.ok_or_else(|| IngestError::Parse {
        context: ctx.to_string(),
        msg: "missing header key `n`".into(),
    })?;
    if distances.len() != n * (n - 1) / 2 {
        return Err(IngestError::Parse {
            context: ctx.to_string(),
            msg: format!(
                "expected {} distances for n={n}, found {}",
                n * (n - 1) / 2,
                distances.len()
            ),
        });
    }
    Ok(CondensedMatrix { n, distances })
}

pub fn write_matrix(
    matrix: &CondensedMatrix,
    reach_fraction: f64,
    resample: usize,
    path: impl AsRef<Path>,
) -> Result<(), IngestError> {
    std::fs::write(
        path.as_ref(),
        render_matrix(matrix, reach_fraction, resample),
    )
    .map_err(|source| IngestError::Io {
        context: path.as_ref().display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn envelope_by_hand() {
        let env = keogh_envelope(&[0.0, 1.0, 0.0], 1);
        assert_eq!(env.upper, vec![1.0, 1.0, 1.0]);
        assert_eq!(env.lower, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn envelope_zero_reach_is_series() {
        let a = [0.3, 0.7, 0.1];
        let env = keogh_envelope(&a, 0);
        assert_eq!(env.upper, a.to_vec());
        assert_eq!(env.lower, a.to_vec());
    }

    #[test]
    fn envelope_full_reach_is_global_extrema() {
        let a = [0.3, 0.7, 0.1, 0.5];
        let env = keogh_envelope(&a, 5);
        assert!(env.upper.iter().all(|&u| u == 0.7));
        assert!(env.lower.iter().all(|&l| l == 0.1));
    }

    #[test]
    fn lb_zero_when_inside_envelope() {
        let d = lb_keogh(&[0.0, 1.0, 0.0], &[0.5, 0.5, 0.5], 1).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn lb_counts_only_exceedances() {
        let d = lb_keogh(&[0.0, 1.0, 0.0], &[2.0, 1.0, 0.0], 1).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn lb_of_series_against_itself_is_zero() {
        let a = [0.2, 0.9, 0.4, 0.6];
        for r in 0..4 {
            assert_eq!(lb_keogh(&a, &a, r).unwrap(), 0.0);
        }
    }

    #[test]
    fn shifted_peaks_warp_to_zero_unbounded() {
        let a = [0.0, 1.0, 0.0, 0.0];
        let b = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(dtw(&a, &b, Reach::Unbounded).unwrap(), 0.0);
    }

    #[test]
    fn zero_reach_is_euclidean() {
        let a = [0.0, 1.0, 0.0, 0.0];
        let b = [0.0, 0.0, 1.0, 0.0];
        let d = dtw(&a, &b, Reach::Band(0)).unwrap();
        assert_abs_diff_eq!(d, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn identical_series_have_zero_distance() {
        let a = [0.1, 0.8, 0.3, 0.4, 0.9];
        for reach in [Reach::Band(0), Reach::Band(2), Reach::Unbounded] {
            assert_eq!(dtw(&a, &a, reach).unwrap(), 0.0);
        }
    }

    #[test]
    fn banded_rejects_unequal_lengths() {
        assert!(matches!(
            dtw(&[0.0, 1.0], &[0.0, 1.0, 2.0], Reach::Band(1)),
            Err(DistError::LengthMismatch { .. })
        ));
        // unbounded mode accepts them
        assert!(dtw(&[0.0, 1.0], &[0.0, 1.0, 2.0], Reach::Unbounded).is_ok());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            dtw(&[], &[1.0], Reach::Unbounded),
            Err(DistError::EmptyInput)
        ));
    }

    #[test]
    fn pruning_edge_cases() {
        let a = [0.0, 1.0, 0.0];
        let b = [2.0, 1.0, 0.0];
        // best_so_far = 0 always prunes
        assert_eq!(
            pruned_distance(&a, &b, 1, 0.0).unwrap(),
            PrunedDistance::Pruned
        );
        // infinite best never prunes
        let full = pruned_distance(&a, &b, 1, f64::INFINITY).unwrap();
        assert_eq!(
            full.value().unwrap(),
            dtw(&a, &b, Reach::Band(1)).unwrap()
        );
        // LB here is 1.0 >= 0.5
        assert_eq!(
            pruned_distance(&a, &b, 1, 0.5).unwrap(),
            PrunedDistance::Pruned
        );
    }

    #[test]
    fn matrix_round_trip_and_indexing() {
        let series = vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0, 1.0],
        ];
        let m = distance_matrix(&series, 1).unwrap();
        assert_eq!(m.distances.len(), 3);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert_abs_diff_eq!(
            m.get(0, 2),
            dtw(&series[0], &series[2], Reach::Band(1)).unwrap(),
            epsilon = 1e-15
        );
        let back = parse_matrix(&render_matrix(&m, 0.025, 4), "test").unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn reach_rounding_ties_to_even() {
        let cfg = DistanceConfig::new(0.025, 500);
        assert_eq!(cfg.reach(), 12);
        let cfg = DistanceConfig::new(0.025, 540);
        // 13.5 rounds to 14
        assert_eq!(cfg.reach(), 14);
    }
}
