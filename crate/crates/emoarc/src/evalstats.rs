//! Evaluation and statistics: polarity classification of annotated clips,
//! precision of extraction against those labels (overall, per cut, per
//! uncertainty bucket, per genre), ordinary least squares with Student-t
//! significance tests, the combined audio-visual valence model, and the
//! per-k engagement regressions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_NAMES};
use crate::ingest::{AnnotationRecord, Cut, VideoMeta};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("rating out of range: {msg}")]
    RangeError { msg: String },
    #[error("empty record set after filtering")]
    EmptySet,
    #[error("bucket edges must be strictly increasing")]
    UnsortedEdges,
    #[error("design matrix is singular at column {column} (`{name}`)")]
    SingularMatrix { column: usize, name: String },
    #[error("underdetermined system: {n} observations for {p} coefficients")]
    Underdetermined { n: usize, p: usize },
    #[error("cluster {cluster} of the k={k} model has no members")]
    DegenerateCluster { k: usize, cluster: usize },
    #[error("shape mismatch: {msg}")]
    Shape { msg: String },
}

/// Polarity of a clip, derived from its worker ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarityClass {
    Positive,
    Negative,
    Neutral,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipPolarity {
    pub clip_id: String,
    pub mean_rating: f64,
    pub class: PolarityClass,
}

/// Classifies a clip from its 1..=7 ratings. A clip with at least one
/// rating above 4 and at least one below 4 is ambiguous regardless of its
/// mean; otherwise the mean decides.
pub fn classify_clip(clip_id: &str, ratings: &[u8]) -> Result<ClipPolarity, StatsError> {
    if ratings.is_empty() {
        return Err(StatsError::RangeError {
            msg: format!("clip {clip_id} has no ratings"),
        });
    }
    for &r in ratings {
        if !(1..=7).contains(&r) {
            return Err(StatsError::RangeError {
                msg: format!("clip {clip_id}: rating {r} outside 1..7"),
            });
        }
    }
    let mean_rating = ratings.iter().map(|&r| r as f64).sum::<f64>() / ratings.len() as f64;
    let has_positive = ratings.iter().any(|&r| r > 4);
    let has_negative = ratings.iter().any(|&r| r < 4);
    let class = if has_positive && has_negative {
        PolarityClass::Ambiguous
    } else if mean_rating > 4.0 {
        PolarityClass::Positive
    } else if mean_rating < 4.0 {
        PolarityClass::Negative
    } else {
        PolarityClass::Neutral
    };
    Ok(ClipPolarity {
        clip_id: clip_id.to_string(),
        mean_rating,
        class,
    })
}

/// Classifies every record, pairing it with its polarity.
pub fn classify_records(
    records: &[AnnotationRecord],
) -> Result<Vec<(AnnotationRecord, ClipPolarity)>, StatsError> {
    records
        .iter()
        .map(|r| classify_clip(&r.clip_id, &r.ratings).map(|p| (r.clone(), p)))
        .collect()
}

/// Correct/total counts behind a precision value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionCount {
    pub correct: usize,
    pub total: usize,
}

impl PrecisionCount {
    pub fn precision(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

fn is_correct(cut: Cut, class: PolarityClass) -> bool {
    match class {
        PolarityClass::Positive => cut.is_peak(),
        PolarityClass::Negative => !cut.is_peak(),
        PolarityClass::Neutral | PolarityClass::Ambiguous => false,
    }
}

fn retained<'a>(
    pairs: &'a [(AnnotationRecord, ClipPolarity)],
    drop_ambiguous: bool,
) -> impl Iterator<Item = &'a (AnnotationRecord, ClipPolarity)> {
    pairs
        .iter()
        .filter(move |(_, p)| !(drop_ambiguous && p.class == PolarityClass::Ambiguous))
}

/// Fraction of clips whose extraction polarity matches their rated
/// polarity: peaks must be positive, valleys negative. Neutral and (when
/// kept) ambiguous clips count only in the denominator.
pub fn precision(
    pairs: &[(AnnotationRecord, ClipPolarity)],
    drop_ambiguous: bool,
) -> Result<PrecisionCount, StatsError> {
    let mut count = PrecisionCount {
        correct: 0,
        total: 0,
    };
    for (rec, pol) in retained(pairs, drop_ambiguous) {
        count.total += 1;
        if is_correct(rec.cut, pol.class) {
            count.correct += 1;
        }
    }
    if count.total == 0 {
        return Err(StatsError::EmptySet);
    }
    Ok(count)
}

/// Precision restricted to each cut; cuts with no retained clips are absent.
pub fn precision_by_cut(
    pairs: &[(AnnotationRecord, ClipPolarity)],
    drop_ambiguous: bool,
) -> BTreeMap<Cut, PrecisionCount> {
    let mut map: BTreeMap<Cut, PrecisionCount> = BTreeMap::new();
    for (rec, pol) in retained(pairs, drop_ambiguous) {
        let entry = map.entry(rec.cut).or_insert(PrecisionCount {
            correct: 0,
            total: 0,
        });
        entry.total += 1;
        if is_correct(rec.cut, pol.class) {
            entry.correct += 1;
        }
    }
    map
}

/// Precision per genre; a clip counts toward every genre of its video.
pub fn precision_by_genre(
    pairs: &[(AnnotationRecord, ClipPolarity)],
    metas: &[VideoMeta],
    drop_ambiguous: bool,
) -> BTreeMap<String, PrecisionCount> {
    let genres_of: BTreeMap<&str, &VideoMeta> = metas
        .iter()
        .map(|m| (m.video_id.as_str(), m))
        .collect();
    let mut map: BTreeMap<String, PrecisionCount> = BTreeMap::new();
    for (rec, pol) in retained(pairs, drop_ambiguous) {
        let Some(meta) = genres_of.get(rec.video_id.as_str()) else {
            continue;
        };
        for genre in &meta.genres {
            let entry = map.entry(genre.clone()).or_insert(PrecisionCount {
                correct: 0,
                total: 0,
            });
            entry.total += 1;
            if is_correct(rec.cut, pol.class) {
                entry.correct += 1;
            }
        }
    }
    map
}

/// One occupied cell of the uncertainty-bucket table.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub lo: f64,
    pub hi: f64,
    pub cut: Cut,
    pub correct: usize,
    pub total: usize,
}

impl BucketRow {
    pub fn precision(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Buckets clips by their source stddev into half-open intervals
/// `[e_i, e_{i+1})` and reports per-(bucket, cut) counts. Records without a
/// stddev, or outside every bucket, are excluded.
pub fn precision_by_uncertainty(
    pairs: &[(AnnotationRecord, ClipPolarity)],
    bucket_edges: &[f64],
    drop_ambiguous: bool,
) -> Result<Vec<BucketRow>, StatsError> {
    if bucket_edges.len() < 2 || bucket_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StatsError::UnsortedEdges);
    }
    let mut cells: BTreeMap<(usize, Cut), PrecisionCount> = BTreeMap::new();
    for (rec, pol) in retained(pairs, drop_ambiguous) {
        let Some(stddev) = rec.source_stddev else {
            continue;
        };
        let Some(bucket) = bucket_edges
            .windows(2)
            .position(|w| stddev >= w[0] && stddev < w[1])
        else {
            continue;
        };
        let entry = cells.entry((bucket, rec.cut)).or_insert(PrecisionCount {
            correct: 0,
            total: 0,
        });
        entry.total += 1;
        if is_correct(rec.cut, pol.class) {
            entry.correct += 1;
        }
    }
    Ok(cells
        .into_iter()
        .map(|((bucket, cut), count)| BucketRow {
            lo: bucket_edges[bucket],
            hi: bucket_edges[bucket + 1],
            cut,
            correct: count.correct,
            total: count.total,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Student-t machinery: ln-gamma and the regularized incomplete beta
// function, evaluated by Lentz's continued fraction.

/// Natural log of the gamma function for z > 0 (Lanczos approximation).
pub fn ln_gamma(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    const C: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut sum = 1.000_000_000_190_015;
    for (i, c) in C.iter().enumerate() {
        sum += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.506_628_274_631_000_5 * sum / z).ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * beta_cf(a, b, x) / a
    } else {
        1.0 - bt * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of a Student-t statistic with `dof` degrees of freedom:
/// `I_{dof/(dof+t^2)}(dof/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    debug_assert!(dof > 0.0);
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(dof / 2.0, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Ordinary least squares via Householder QR.

/// Coefficients and significance tests of one fitted linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub n_observations: usize,
}

/// `"**"` for p < 0.05, `"*"` for p < 0.1, empty otherwise.
pub fn significance_flag(p: f64) -> &'static str {
    if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Least squares of `y` on the design matrix `x` (one row per observation,
/// intercept column included by the caller). Standard errors come from
/// `sigma^2 (X^T X)^-1` with `sigma^2 = RSS / (n - p)`; p-values are
/// two-sided Student-t with `n - p` degrees of freedom.
pub fn ols(names: &[String], x: &[Vec<f64>], y: &[f64]) -> Result<RegressionResult, StatsError> {
    let n = x.len();
    let p = names.len();
    if n != y.len() {
        return Err(StatsError::Shape {
            msg: format!("{n} design rows but {} responses", y.len()),
        });
    }
    if x.iter().any(|row| row.len() != p) {
        return Err(StatsError::Shape {
            msg: "design rows of unequal width".into(),
        });
    }
    if n <= p {
        return Err(StatsError::Underdetermined { n, p });
    }

    // Householder QR of the n x p design; `a` is overwritten by R in its
    // upper triangle while qty accumulates Q^T y.
    let mut a: Vec<Vec<f64>> = x.to_vec();
    let mut qty: Vec<f64> = y.to_vec();
    let col_scale: f64 = (0..p)
        .map(|j| (0..n).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        .max(1.0);

    for k in 0..p {
        let norm: f64 = (k..n).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm <= 1e-12 * col_scale {
            return Err(StatsError::SingularMatrix {
                column: k,
                name: names[k].clone(),
            });
        }
        let alpha = if a[k][k] >= 0.0 { -norm } else { norm };
        // Householder vector v = x_k - alpha e_k, applied as I - 2 v v^T / |v|^2
        let mut v: Vec<f64> = (k..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for j in k..p {
                let dot: f64 = (k..n).map(|i| v[i - k] * a[i][j]).sum();
                let scale = 2.0 * dot / vnorm2;
                for i in k..n {
                    a[i][j] -= scale * v[i - k];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * qty[i]).sum();
            let scale = 2.0 * dot / vnorm2;
            for i in k..n {
                qty[i] -= scale * v[i - k];
            }
        }
        a[k][k] = alpha;
        for i in (k + 1)..n {
            a[i][k] = 0.0;
        }
        // re-check conditioning on the pivot itself
        if a[k][k].abs() <= 1e-12 * col_scale {
            return Err(StatsError::SingularMatrix {
                column: k,
                name: names[k].clone(),
            });
        }
    }

    // back-substitute R beta = (Q^T y)[..p]
    let mut beta = vec![0.0; p];
    for j in (0..p).rev() {
        let mut acc = qty[j];
        for k in (j + 1)..p {
            acc -= a[j][k] * beta[k];
        }
        beta[j] = acc / a[j][j];
    }

    // residuals against the original design
    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            let fitted: f64 = (0..p).map(|j| x[i][j] * beta[j]).sum();
            y[i] - fitted
        })
        .collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;

    // (X^T X)^-1 = R^-1 R^-T; invert the upper triangle of R
    let mut rinv = vec![vec![0.0; p]; p];
    for j in 0..p {
        rinv[j][j] = 1.0 / a[j][j];
        for i in (0..j).rev() {
            let mut acc = 0.0;
            for k in (i + 1)..=j {
                acc += a[i][k] * rinv[k][j];
            }
            rinv[i][j] = -acc / a[i][i];
        }
    }
    let xtx_inv_diag: Vec<f64> = (0..p)
        .map(|j| (j..p).map(|k| rinv[j][k] * rinv[j][k]).sum())
        .collect();

    let std_errors: Vec<f64> = xtx_inv_diag
        .iter()
        .map(|&d| (sigma2 * d).max(0.0).sqrt())
        .collect();
    let mut t_stats = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let (t, pv) = if std_errors[j] == 0.0 {
            if beta[j] == 0.0 {
                (0.0, 1.0)
            } else {
                (beta[j].signum() * f64::INFINITY, 0.0)
            }
        } else {
            let t = beta[j] / std_errors[j];
            (t, student_t_two_sided_p(t, dof))
        };
        t_stats.push(t);
        p_values.push(pv);
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = if tss <= f64::EPSILON * n as f64 {
        if rss <= f64::EPSILON * n as f64 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    };

    Ok(RegressionResult {
        names: names.to_vec(),
        coefficients: beta,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        n_observations: n,
    })
}

// ---------------------------------------------------------------------------
// Combined audio-visual valence model.

/// Fit of the combined valence model plus the polarity precision of its
/// predictions: a predicted rating above 4 at a peak, or below 4 at a
/// valley, counts as correct.
#[derive(Debug, Clone, PartialEq)]
pub struct ValenceFit {
    pub regression: RegressionResult,
    pub correct: usize,
    pub total: usize,
}

impl ValenceFit {
    pub fn precision(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

fn fit_valence(
    features: &[FeatureVector],
    cuts: &[Cut],
    mean_ratings: &[f64],
    keep: impl Fn(&str) -> bool,
) -> Result<ValenceFit, StatsError> {
    if features.len() != cuts.len() || features.len() != mean_ratings.len() {
        return Err(StatsError::Shape {
            msg: "features, cuts, and ratings must align".into(),
        });
    }
    let kept: Vec<usize> = (0..FEATURE_NAMES.len())
        .filter(|&i| keep(FEATURE_NAMES[i]))
        .collect();
    let mut names = vec!["intercept".to_string()];
    names.extend(kept.iter().map(|&i| FEATURE_NAMES[i].to_string()));
    let x: Vec<Vec<f64>> = features
        .iter()
        .map(|fv| {
            let mut row = Vec::with_capacity(kept.len() + 1);
            row.push(1.0);
            row.extend(kept.iter().map(|&i| fv.values[i]));
            row
        })
        .collect();
    let regression = ols(&names, &x, mean_ratings)?;
    let mut correct = 0;
    for (row, &cut) in x.iter().zip(cuts) {
        let predicted: f64 = row
            .iter()
            .zip(&regression.coefficients)
            .map(|(v, c)| v * c)
            .sum();
        let ok = if cut.is_peak() {
            predicted > 4.0
        } else {
            predicted < 4.0
        };
        if ok {
            correct += 1;
        }
    }
    Ok(ValenceFit {
        regression,
        correct,
        total: features.len(),
    })
}

/// Linear model predicting the mean valence rating from the full frozen
/// feature set.
pub fn combined_valence_fit(
    features: &[FeatureVector],
    cuts: &[Cut],
    mean_ratings: &[f64],
) -> Result<ValenceFit, StatsError> {
    fit_valence(features, cuts, mean_ratings, |_| true)
}

/// Ablation of [`combined_valence_fit`]: drops every feature whose name is
/// in `excluded`.
pub fn combined_valence_fit_excluding(
    features: &[FeatureVector],
    cuts: &[Cut],
    mean_ratings: &[f64],
    excluded: &[&str],
) -> Result<ValenceFit, StatsError> {
    fit_valence(features, cuts, mean_ratings, |name| {
        !excluded.iter().any(|e| name == *e || name.starts_with(e))
    })
}

// ---------------------------------------------------------------------------
// Engagement analysis.

/// For each k, regresses the comment count on duration, year, and the k-1
/// cluster dummies (cluster 0 is the dropped baseline). `assignments_by_k`
/// must align with `metas` by position.
pub fn engagement_run(
    metas: &[VideoMeta],
    assignments_by_k: &BTreeMap<usize, Vec<usize>>,
    log_comments: bool,
) -> Result<BTreeMap<usize, RegressionResult>, StatsError> {
    let mut out = BTreeMap::new();
    for (&k, assignments) in assignments_by_k {
        if assignments.len() != metas.len() {
            return Err(StatsError::Shape {
                msg: format!(
                    "k={k}: {} assignments for {} videos",
                    assignments.len(),
                    metas.len()
                ),
            });
        }
        let mut counts = vec![0usize; k];
        for &c in assignments {
            if c >= k {
                return Err(StatsError::Shape {
                    msg: format!("k={k}: cluster id {c} out of range"),
                });
            }
            counts[c] += 1;
        }
        if let Some(cluster) = counts.iter().position(|&c| c == 0) {
            return Err(StatsError::DegenerateCluster { k, cluster });
        }
        let mut names = vec![
            "intercept".to_string(),
            "duration_seconds".to_string(),
            "year".to_string(),
        ];
        for c in 1..k {
            names.push(format!("cluster_{c}"));
        }
        let x: Vec<Vec<f64>> = metas
            .iter()
            .zip(assignments)
            .map(|(m, &c)| {
                let mut row = vec![1.0, m.duration_seconds, m.year as f64];
                for dummy in 1..k {
                    row.push(if c == dummy { 1.0 } else { 0.0 });
                }
                row
            })
            .collect();
        let y: Vec<f64> = metas
            .iter()
            .map(|m| {
                if log_comments {
                    (m.comments as f64).ln_1p()
                } else {
                    m.comments as f64
                }
            })
            .collect();
        out.insert(k, ols(&names, &x, &y)?);
    }
    Ok(out)
}

/// Renders one regression as `term,coef,stderr,t,p,flag` rows.
pub fn render_regression(result: &RegressionResult) -> String {
    let mut out = String::from("term,coef,stderr,t,p,flag\n");
    for j in 0..result.names.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            result.names[j],
            result.coefficients[j],
            result.std_errors[j],
            result.t_stats[j],
            result.p_values[j],
            significance_flag(result.p_values[j])
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::AnnotationRecord;
    use approx::assert_abs_diff_eq;

    fn record(clip: &str, cut: Cut, ratings: &[u8], stddev: Option<f64>) -> AnnotationRecord {
        AnnotationRecord::new(clip, "v1", cut, ratings.to_vec(), stddev).unwrap()
    }

    fn pair(clip: &str, cut: Cut, ratings: &[u8]) -> (AnnotationRecord, ClipPolarity) {
        let rec = record(clip, cut, ratings, None);
        let pol = classify_clip(clip, ratings).unwrap();
        (rec, pol)
    }

    #[test]
    fn classification_rules() {
        assert_eq!(
            classify_clip("c", &[5, 5, 6]).unwrap().class,
            PolarityClass::Positive
        );
        assert_eq!(
            classify_clip("c", &[5, 2, 2]).unwrap().class,
            PolarityClass::Ambiguous
        );
        assert_eq!(
            classify_clip("c", &[4, 4, 4]).unwrap().class,
            PolarityClass::Neutral
        );
        assert_eq!(
            classify_clip("c", &[2, 3, 3]).unwrap().class,
            PolarityClass::Negative
        );
        // the ambiguity check comes before the mean: mean 4 with polar votes
        assert_eq!(
            classify_clip("c", &[2, 6, 4]).unwrap().class,
            PolarityClass::Ambiguous
        );
        assert!(classify_clip("c", &[]).is_err());
        assert!(classify_clip("c", &[8]).is_err());
    }

    #[test]
    fn classification_is_permutation_invariant() {
        let a = classify_clip("c", &[5, 2, 6]).unwrap();
        let b = classify_clip("c", &[6, 5, 2]).unwrap();
        assert_eq!(a.class, b.class);
        assert_abs_diff_eq!(a.mean_rating, b.mean_rating, epsilon = 1e-12);
    }

    fn four_clip_fixture() -> Vec<(AnnotationRecord, ClipPolarity)> {
        vec![
            pair("c1", Cut::AudioPeak, &[5, 5, 6]),
            pair("c2", Cut::VisualValley, &[2, 3, 3]),
            pair("c3", Cut::VisualPeak, &[3, 3, 2]),
            pair("c4", Cut::AudioValley, &[5, 2, 2]),
        ]
    }

    #[test]
    fn precision_fixture_with_and_without_ambiguous() {
        let pairs = four_clip_fixture();
        let dropped = precision(&pairs, true).unwrap();
        assert_eq!((dropped.correct, dropped.total), (2, 3));
        let kept = precision(&pairs, false).unwrap();
        assert_eq!((kept.correct, kept.total), (2, 4));
    }

    #[test]
    fn neutral_counts_in_denominator_only() {
        let pairs = vec![
            pair("c1", Cut::AudioPeak, &[5, 5, 6]),
            pair("c2", Cut::AudioPeak, &[4, 4, 4]),
        ];
        let p = precision(&pairs, true).unwrap();
        assert_eq!((p.correct, p.total), (1, 2));
    }

    #[test]
    fn empty_after_filter_is_an_error() {
        let pairs = vec![pair("c1", Cut::AudioPeak, &[5, 2, 2])];
        assert!(matches!(precision(&pairs, true), Err(StatsError::EmptySet)));
        assert!(matches!(precision(&[], false), Err(StatsError::EmptySet)));
    }

    #[test]
    fn per_cut_counts_sum_to_overall() {
        let pairs = four_clip_fixture();
        for drop in [false, true] {
            let overall = precision(&pairs, drop).unwrap();
            let by_cut = precision_by_cut(&pairs, drop);
            let correct: usize = by_cut.values().map(|c| c.correct).sum();
            let total: usize = by_cut.values().map(|c| c.total).sum();
            assert_eq!(correct, overall.correct);
            assert_eq!(total, overall.total);
        }
    }

    #[test]
    fn per_cut_absent_when_unpopulated() {
        let pairs = vec![pair("c1", Cut::VisualValley, &[2, 2, 3])];
        let by_cut = precision_by_cut(&pairs, true);
        assert_eq!(by_cut.len(), 1);
        assert!(by_cut.contains_key(&Cut::VisualValley));
    }

    #[test]
    fn buckets_are_half_open() {
        let mut pairs = Vec::new();
        let mut rec = record("c1", Cut::AudioValley, &[2, 2, 2], Some(0.02));
        let pol = classify_clip("c1", &rec.ratings).unwrap();
        pairs.push((rec.clone(), pol.clone()));
        rec.source_stddev = Some(0.0199999);
        pairs.push((rec.clone(), pol.clone()));
        rec.source_stddev = None;
        pairs.push((rec, pol));
        let rows =
            precision_by_uncertainty(&pairs, &[0.0, 0.02, 0.04], true).unwrap();
        assert_eq!(rows.len(), 2);
        // stddev exactly on the edge lands in the right-hand bucket
        assert_eq!(rows[0].lo, 0.0);
        assert_eq!(rows[0].total, 1);
        assert_eq!(rows[1].lo, 0.02);
        assert_eq!(rows[1].total, 1);
    }

    #[test]
    fn single_occupied_bucket_when_all_below_first_interior_edge() {
        let pairs: Vec<_> = (0..5)
            .map(|i| {
                let rec = record(
                    &format!("c{i}"),
                    Cut::AudioValley,
                    &[2, 3, 2],
                    Some(0.001 * i as f64),
                );
                let pol = classify_clip(&rec.clip_id, &rec.ratings).unwrap();
                (rec, pol)
            })
            .collect();
        let rows =
            precision_by_uncertainty(&pairs, &[0.0, 0.02, 0.04, 0.06], true).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].total, 5);
    }

    #[test]
    fn unsorted_edges_rejected() {
        let pairs = vec![pair("c1", Cut::AudioPeak, &[5, 5, 5])];
        assert!(matches!(
            precision_by_uncertainty(&pairs, &[0.0, 0.0], true),
            Err(StatsError::UnsortedEdges)
        ));
        assert!(matches!(
            precision_by_uncertainty(&pairs, &[0.1, 0.05], true),
            Err(StatsError::UnsortedEdges)
        ));
    }

    #[test]
    fn dropping_all_incorrect_ambiguous_cannot_lower_precision() {
        let pairs = vec![
            pair("c1", Cut::AudioPeak, &[5, 5, 6]),
            pair("c2", Cut::AudioPeak, &[5, 2, 2]),
            pair("c3", Cut::VisualValley, &[2, 2, 2]),
        ];
        let kept = precision(&pairs, false).unwrap();
        let dropped = precision(&pairs, true).unwrap();
        assert!(dropped.precision() >= kept.precision());

        let unambiguous = vec![
            pair("c1", Cut::AudioPeak, &[5, 5, 6]),
            pair("c3", Cut::VisualValley, &[2, 2, 2]),
        ];
        let a = precision(&unambiguous, false).unwrap();
        let b = precision(&unambiguous, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_linear_fit_recovers_coefficients() {
        let names: Vec<String> = ["intercept", "x"].iter().map(|s| s.to_string()).collect();
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 1.0).collect();
        let fit = ols(&names, &x, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn duplicate_column_is_singular() {
        let names: Vec<String> = ["intercept", "x", "x_copy"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let x: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![1.0, i as f64, i as f64])
            .collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        match ols(&names, &x, &y) {
            Err(StatsError::SingularMatrix { column, .. }) => assert_eq!(column, 2),
            other => panic!("expected SingularMatrix, got {other:?}"),
        }
    }

    #[test]
    fn underdetermined_is_an_error() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let x = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let y = vec![1.0, 2.0];
        assert!(matches!(
            ols(&names, &x, &y),
            Err(StatsError::Underdetermined { .. })
        ));
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        // deterministic pseudo-noise, no rng needed
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                vec![1.0, (t * 0.37).sin(), (t * 0.11).cos(), t / 40.0]
            })
            .collect();
        let y: Vec<f64> = (0..40)
            .map(|i| {
                let t = i as f64;
                3.0 + 0.5 * (t * 0.37).sin() - 2.0 * (t * 0.11).cos() + ((t * 7.3).sin() * 0.3)
            })
            .collect();
        let names: Vec<String> = ["intercept", "s", "c", "lin"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let fit = ols(&names, &x, &y).unwrap();
        for j in 0..4 {
            let dot: f64 = (0..40)
                .map(|i| {
                    let fitted: f64 = (0..4).map(|k| x[i][k] * fit.coefficients[k]).sum();
                    x[i][j] * (y[i] - fitted)
                })
                .sum();
            assert!(dot.abs() < 1e-8, "column {j} dot {dot}");
        }
    }

    #[test]
    fn rescaling_a_column_preserves_its_p_value() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64;
                vec![1.0, (t * 0.7).sin(), t]
            })
            .collect();
        let y: Vec<f64> = (0..30)
            .map(|i| {
                let t = i as f64;
                1.0 + 0.8 * (t * 0.7).sin() + 0.05 * t + 0.2 * (t * 3.1).cos()
            })
            .collect();
        let names: Vec<String> = ["intercept", "s", "t"].iter().map(|s| s.to_string()).collect();
        let base = ols(&names, &x, &y).unwrap();

        let scaled: Vec<Vec<f64>> = x
            .iter()
            .map(|row| vec![row[0], row[1] * 100.0, row[2]])
            .collect();
        let fit = ols(&names, &scaled, &y).unwrap();
        assert_abs_diff_eq!(fit.p_values[1], base.p_values[1], epsilon = 1e-9);
        assert_abs_diff_eq!(
            fit.coefficients[1],
            base.coefficients[1] / 100.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn p_values_match_statrs_student_t() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        for &(t, dof) in &[(0.5, 3.0), (1.0, 8.0), (2.0, 10.0), (2.5, 17.0), (4.0, 30.0)] {
            let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
            let expected = 2.0 * (1.0 - dist.cdf(t));
            assert_abs_diff_eq!(
                student_t_two_sided_p(t, dof),
                expected,
                epsilon = 1e-9
            );
        }
    }

    fn meta(id: &str, duration: f64, year: i32, comments: u64) -> VideoMeta {
        VideoMeta::new(
            id,
            duration,
            year,
            comments,
            Default::default(),
            crate::ingest::CorpusKind::Shorts,
        )
        .unwrap()
    }

    #[test]
    fn engagement_design_has_expected_width() {
        let metas: Vec<VideoMeta> = (0..12)
            .map(|i| meta(&format!("v{i}"), 300.0 + i as f64 * 13.0, 2010 + (i as i32 % 5), 10))
            .collect();
        let mut by_k = BTreeMap::new();
        by_k.insert(2, (0..12).map(|i| i % 2).collect::<Vec<_>>());
        let results = engagement_run(&metas, &by_k, false).unwrap();
        // intercept + duration + year + one dummy
        assert_eq!(results[&2].names.len(), 4);
    }

    #[test]
    fn engagement_rejects_empty_cluster() {
        let metas: Vec<VideoMeta> = (0..6)
            .map(|i| meta(&format!("v{i}"), 300.0, 2015, 5))
            .collect();
        let mut by_k = BTreeMap::new();
        by_k.insert(3, vec![0, 0, 1, 1, 0, 1]);
        assert!(matches!(
            engagement_run(&metas, &by_k, false),
            Err(StatsError::DegenerateCluster { k: 3, cluster: 2 })
        ));
    }

    #[test]
    fn engagement_recovers_planted_effect() {
        let metas: Vec<VideoMeta> = (0..30)
            .map(|i| {
                let cluster = i % 3;
                let comments = 10 + if cluster == 2 { 5 } else { 0 };
                meta(
                    &format!("v{i}"),
                    200.0 + (i as f64 * 37.0) % 900.0,
                    2008 + (i as i32 * 7) % 10,
                    comments,
                )
            })
            .collect();
        let mut by_k = BTreeMap::new();
        by_k.insert(3, (0..30).map(|i| i % 3).collect::<Vec<_>>());
        let results = engagement_run(&metas, &by_k, false).unwrap();
        let fit = &results[&3];
        let cluster2 = fit.names.iter().position(|n| n == "cluster_2").unwrap();
        assert_abs_diff_eq!(fit.coefficients[cluster2], 5.0, epsilon = 1e-9);
        assert!(fit.p_values[cluster2] < 1e-12);
        let duration = fit.names.iter().position(|n| n == "duration_seconds").unwrap();
        let year = fit.names.iter().position(|n| n == "year").unwrap();
        assert_abs_diff_eq!(fit.coefficients[duration], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.coefficients[year], 0.0, epsilon = 1e-9);
    }

    fn synth_features(n: usize) -> (Vec<FeatureVector>, Vec<Cut>, Vec<f64>) {
        use crate::features::FEATURE_COUNT;
        use rand::Rng;
        use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let mut features = Vec::new();
        let mut cuts = Vec::new();
        let mut ratings = Vec::new();
        for _ in 0..n {
            let mut values = [0.0; FEATURE_COUNT];
            for v in values.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            // ratings depend on peakiness and embedding columns
            let rating = 4.0 + 1.5 * values[5] + 1.0 * values[14] + 0.8 * values[18];
            let cut = if rating > 4.0 {
                Cut::AudioPeak
            } else {
                Cut::AudioValley
            };
            features.push(FeatureVector { values });
            cuts.push(cut);
            ratings.push(rating);
        }
        (features, cuts, ratings)
    }

    #[test]
    fn noiseless_valence_fit_is_perfect() {
        let (features, cuts, ratings) = synth_features(120);
        let fit = combined_valence_fit(&features, &cuts, &ratings).unwrap();
        assert_abs_diff_eq!(fit.regression.r_squared, 1.0, epsilon = 1e-9);
        assert_eq!(fit.correct, fit.total);
    }

    #[test]
    fn ablations_hurt_when_ratings_depend_on_the_ablated_features() {
        let (features, cuts, ratings) = synth_features(120);
        let full = combined_valence_fit(&features, &cuts, &ratings).unwrap();
        let no_peakiness = combined_valence_fit_excluding(
            &features,
            &cuts,
            &ratings,
            &["audio_peakiness", "visual_peakiness"],
        )
        .unwrap();
        assert!(no_peakiness.precision() < full.precision());
        let no_embedding =
            combined_valence_fit_excluding(&features, &cuts, &ratings, &["embedding"]).unwrap();
        assert!(no_embedding.precision() < full.precision());
        // the ablated designs really are narrower
        assert_eq!(full.regression.names.len(), 29);
        assert_eq!(no_peakiness.regression.names.len(), 21);
        assert_eq!(no_embedding.regression.names.len(), 19);
    }
}
