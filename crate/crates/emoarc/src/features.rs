//! Emotionally charged moments and the feature vectors built around them:
//! peak/valley extraction with prominence and separation rules, clip
//! windows, the 4-value peakiness function, decile movie embeddings, and
//! the assembled per-clip feature vector.

use std::path::Path;

use thiserror::Error;

use crate::arc::{mean_pop_std, EmotionalArc};
use crate::ingest::{ActivationMatrix, Cut, IngestError, Modality};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("peakiness window out of range: i={i}, r={r}, n={n}")]
    OutOfRange { i: usize, r: usize, n: usize },
    #[error("activation matrix too short: {t} frames, need at least 10")]
    ShapeError { t: usize },
    #[error("feature `{name}` is not finite")]
    NonFinite { name: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Peak,
    Valley,
}

/// A strict local extremum of a smoothed arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Extremum {
    pub index: usize,
    pub kind: ExtremumKind,
    pub value: f64,
    pub prominence: f64,
    /// Half-width of the arc's confidence band at this point, when present.
    pub stddev_at: Option<f64>,
}

/// A clip to extract: a time window around an extremum.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipWindow {
    pub video_id: String,
    pub start_seconds: f64,
    pub end_seconds: f64,
    pub cut: Cut,
}

/// Topographic prominence of the peak at `i`: height above the higher of
/// the two bracketing minima, where each side extends to the nearest
/// strictly higher point or the boundary.
fn prominence_at(values: &[f64], i: usize) -> f64 {
    let v = values[i];
    let mut left_min = v;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if values[j] > v {
            break;
        }
        left_min = left_min.min(values[j]);
    }
    let mut right_min = v;
    let mut j = i;
    while j + 1 < values.len() {
        j += 1;
        if values[j] > v {
            break;
        }
        right_min = right_min.min(values[j]);
    }
    v - left_min.max(right_min)
}

fn collect_kind(
    values: &[f64],
    arc: &EmotionalArc,
    kind: ExtremumKind,
    min_prominence: f64,
    min_separation: usize,
    top_n: usize,
) -> Vec<Extremum> {
    let n = values.len();
    let mut candidates: Vec<Extremum> = (1..n - 1)
        .filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1])
        .map(|i| {
            let value = match kind {
                ExtremumKind::Peak => values[i],
                ExtremumKind::Valley => -values[i],
            };
            Extremum {
                index: i,
                kind,
                value,
                prominence: prominence_at(values, i),
                stddev_at: arc.band_half_width(i),
            }
        })
        .filter(|e| e.prominence >= min_prominence)
        .collect();
    // strongest first, index as the deterministic tie-break
    candidates.sort_by(|a, b| {
        b.prominence
            .partial_cmp(&a.prominence)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    let mut kept: Vec<Extremum> = Vec::new();
    for cand in candidates {
        if kept.len() == top_n {
            break;
        }
        let far_enough = kept
            .iter()
            .all(|k| k.index.abs_diff(cand.index) >= min_separation);
        if far_enough {
            kept.push(cand);
        }
    }
    kept
}

/// Strict local extrema with prominence at least `min_prominence`, kept
/// greedily in descending prominence subject to a minimum index distance,
/// truncated to `top_n` per kind, and returned sorted by index.
///
/// Arcs shorter than 3 points have no interior extrema.
pub fn find_extrema(
    arc: &EmotionalArc,
    min_prominence: f64,
    min_separation: usize,
    top_n: usize,
) -> Vec<Extremum> {
    assert!(min_separation >= 1, "min_separation must be positive");
    assert!(top_n >= 1, "top_n must be positive");
    assert!(min_prominence >= 0.0);
    if arc.len() < 3 {
        return Vec::new();
    }
    let mut peaks = collect_kind(
        &arc.values,
        arc,
        ExtremumKind::Peak,
        min_prominence,
        min_separation,
        top_n,
    );
    let negated: Vec<f64> = arc.values.iter().map(|v| -v).collect();
    let mut valleys = collect_kind(
        &negated,
        arc,
        ExtremumKind::Valley,
        min_prominence,
        min_separation,
        top_n,
    );
    // valley values were negated for detection; restore the arc's values
    for v in &mut valleys {
        v.value = arc.values[v.index];
    }
    for p in &mut peaks {
        p.value = arc.values[p.index];
    }
    let mut all = peaks;
    all.append(&mut valleys);
    all.sort_by_key(|e| e.index);
    all
}

/// Time window of `clip_seconds` centered on the extremum, shifted to stay
/// inside `[0, duration_seconds]`; shorter only when the video itself is.
pub fn clip_window(
    extremum: &Extremum,
    arc: &EmotionalArc,
    clip_seconds: f64,
    duration_seconds: f64,
) -> ClipWindow {
    assert!(clip_seconds > 0.0 && duration_seconds > 0.0);
    let frac = extremum.index as f64 / (arc.len() - 1) as f64;
    let center = frac * duration_seconds;
    let start = (center - clip_seconds / 2.0)
        .max(0.0)
        .min((duration_seconds - clip_seconds).max(0.0));
    let end = (start + clip_seconds).min(duration_seconds);
    let cut = match (arc.modality, extremum.kind) {
        (Modality::Audio, ExtremumKind::Peak) => Cut::AudioPeak,
        (Modality::Audio, ExtremumKind::Valley) => Cut::AudioValley,
        (Modality::Visual, ExtremumKind::Peak) => Cut::VisualPeak,
        (Modality::Visual, ExtremumKind::Valley) => Cut::VisualValley,
    };
    ClipWindow {
        video_id: arc.video_id.clone(),
        start_seconds: start,
        end_seconds: end,
        cut,
    }
}

/// Local slope and mean statistics around index `i` with window `r`:
/// `(a[i-1] - a[i-r], a[i+r] - a[i+1], mean(a[i-r..=i-1]), mean(a[i+1..=i+r]))`.
pub fn peakiness(values: &[f64], i: usize, r: usize) -> Result<[f64; 4], FeatureError> {
    let n = values.len();
    if r < 2 || i < r || i + r > n - 1 {
        return Err(FeatureError::OutOfRange { i, r, n });
    }
    let left: &[f64] = &values[i - r..=i - 1];
    let right: &[f64] = &values[i + 1..=i + r];
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok([
        values[i - 1] - values[i - r],
        values[i + r] - values[i + 1],
        mean(left),
        mean(right),
    ])
}

/// 10-value summary of a movie: frames are split into ten contiguous decile
/// chunks, each chunk's activation rows are averaged into one vector, and
/// each vector collapses to its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieEmbedding {
    pub chunk_means: [f64; 10],
}

pub fn movie_embedding(acts: &ActivationMatrix) -> Result<MovieEmbedding, FeatureError> {
    let t = acts.frames();
    if t < 10 {
        return Err(FeatureError::ShapeError { t });
    }
    let d = acts.dims();
    let mut chunk_means = [0.0; 10];
    for (c, slot) in chunk_means.iter_mut().enumerate() {
        let lo = c * t / 10;
        let hi = (c + 1) * t / 10;
        let mut acc = 0.0;
        for row in &acts.activations[lo..hi] {
            for v in row {
                acc += v;
            }
        }
        *slot = acc / ((hi - lo) * d) as f64;
    }
    Ok(MovieEmbedding { chunk_means })
}

/// Number of features in a [`FeatureVector`].
pub const FEATURE_COUNT: usize = 28;

/// Frozen feature order for the combined audio-visual valence model.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "audio_valence",
    "audio_valence_minus_mean",
    "audio_valence_over_max",
    "audio_mean",
    "audio_std",
    "audio_peakiness_left_slope",
    "audio_peakiness_right_slope",
    "audio_peakiness_left_mean",
    "audio_peakiness_right_mean",
    "visual_valence",
    "visual_valence_minus_mean",
    "visual_valence_over_max",
    "visual_mean",
    "visual_std",
    "visual_peakiness_left_slope",
    "visual_peakiness_right_slope",
    "visual_peakiness_left_mean",
    "visual_peakiness_right_mean",
    "embedding_0",
    "embedding_1",
    "embedding_2",
    "embedding_3",
    "embedding_4",
    "embedding_5",
    "embedding_6",
    "embedding_7",
    "embedding_8",
    "embedding_9",
];

/// Per-clip features in the order of [`FEATURE_NAMES`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| self.values[i])
    }
}

/// Fraction of the arc length used as the peakiness window.
pub const PEAKINESS_REACH_FRACTION: f64 = 0.025;

fn modality_features(
    arc: &EmotionalArc,
    mid_frac: f64,
    clamp: bool,
    out: &mut Vec<f64>,
) -> Result<(), FeatureError> {
    let n = arc.len();
    let idx = ((mid_frac * (n - 1) as f64).round() as usize).min(n - 1);
    let (mean, std) = mean_pop_std(&arc.values);
    let max = arc.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let valence = arc.values[idx];

    let mut r = usize::max(
        2,
        (PEAKINESS_REACH_FRACTION * n as f64).round_ties_even() as usize,
    );
    let mut i = idx;
    if clamp {
        r = r.min((n - 1) / 2);
        i = i.clamp(r, n.saturating_sub(1).saturating_sub(r));
    }
    let p = peakiness(&arc.values, i, r)?;

    out.push(valence);
    out.push(valence - mean);
    out.push(valence / max);
    out.push(mean);
    out.push(std);
    out.extend_from_slice(&p);
    Ok(())
}

/// Assembles the full feature vector for a clip from both arcs and the
/// movie embedding. The arcs are the smoothed, unnormalized per-modality
/// arcs of the clip's video. With `clamp` set, the peakiness index is moved
/// inward where the full window does not fit; otherwise that is an error.
pub fn clip_features(
    clip: &ClipWindow,
    audio_arc: &EmotionalArc,
    visual_arc: &EmotionalArc,
    embedding: &MovieEmbedding,
    duration_seconds: f64,
    clamp: bool,
) -> Result<FeatureVector, FeatureError> {
    assert!(duration_seconds > 0.0);
    let mid = (clip.start_seconds + clip.end_seconds) / 2.0;
    let mid_frac = (mid / duration_seconds).clamp(0.0, 1.0);
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    modality_features(audio_arc, mid_frac, clamp, &mut values)?;
    modality_features(visual_arc, mid_frac, clamp, &mut values)?;
    values.extend_from_slice(&embedding.chunk_means);
    let values: [f64; FEATURE_COUNT] = values.try_into().expect("fixed feature count");
    for (v, name) in values.iter().zip(FEATURE_NAMES.iter()) {
        if !v.is_finite() {
            return Err(FeatureError::NonFinite { name });
        }
    }
    Ok(FeatureVector { values })
}

/// One extracted clip as written to the clips file.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub window: ClipWindow,
    pub arc_value: f64,
    pub stddev_at: Option<f64>,
}

/// Knobs for charged-moment extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipExtractionParams {
    pub clip_seconds: f64,
    /// Keep at most this many peaks and this many valleys per arc.
    pub top_n_per_kind: usize,
}

impl Default for ClipExtractionParams {
    fn default() -> Self {
        ClipExtractionParams {
            clip_seconds: 30.0,
            top_n_per_kind: 5,
        }
    }
}

/// Extracts clip records from one smoothed (unnormalized) arc.
///
/// The prominence floor is half the arc's population stddev, and the
/// separation between kept extrema is the clip length in timepoints, so
/// clips of the same kind never overlap. Clip ids are
/// `<video_id>.<cut>.<seq>` with `seq` counting each cut in time order.
pub fn extract_clips(
    arc: &EmotionalArc,
    duration_seconds: f64,
    params: &ClipExtractionParams,
) -> Vec<ClipRecord> {
    let (_, std) = mean_pop_std(&arc.values);
    let min_prominence = 0.5 * std;
    let n = arc.len();
    let timepoints_per_clip = if duration_seconds > 0.0 {
        (params.clip_seconds / duration_seconds * (n - 1) as f64).round() as usize
    } else {
        1
    };
    let min_separation = timepoints_per_clip.max(1);
    let extrema = find_extrema(arc, min_prominence, min_separation, params.top_n_per_kind);
    let mut seq: std::collections::BTreeMap<Cut, usize> = std::collections::BTreeMap::new();
    extrema
        .iter()
        .map(|e| {
            let window = clip_window(e, arc, params.clip_seconds, duration_seconds);
            let counter = seq.entry(window.cut).or_insert(0);
            let clip_id = format!("{}.{}.{}", arc.video_id, window.cut, counter);
            *counter += 1;
            ClipRecord {
                clip_id,
                window,
                arc_value: e.value,
                stddev_at: e.stddev_at,
            }
        })
        .collect()
}

/// Renders `clip_id,video_id,cut,start_seconds,end_seconds,arc_value,stddev_at`.
pub fn render_clips(clips: &[ClipRecord]) -> String {
    let mut out = String::new();
    for c in clips {
        let stddev = c.stddev_at.map(|s| format!("{s}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.clip_id,
            c.window.video_id,
            c.window.cut,
            c.window.start_seconds,
            c.window.end_seconds,
            c.arc_value,
            stddev
        ));
    }
    out
}

pub fn parse_clips(text: &str, ctx: &str) -> Result<Vec<ClipRecord>, IngestError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 7 {
            return Err(IngestError::Parse {
                context: ctx.to_string(),
                msg: format!("line {}: expected 7 fields", lineno + 1),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64, IngestError> {
            s.trim().parse().map_err(|_| IngestError::Parse {
                context: ctx.to_string(),
                msg: format!("line {}: bad {what}", lineno + 1),
            })
        };
        let cut: Cut = fields[2].trim().parse().map_err(|e: String| IngestError::Parse {
            context: ctx.to_string(),
            msg: format!("line {}: {e}", lineno + 1),
        })?;
        let stddev_at = if fields[6].trim().is_empty() {
            None
        } else {
            Some(parse_f(fields[6], "stddev")?)
        };
        out.push(ClipRecord {
            clip_id: fields[0].trim().to_string(),
            window: ClipWindow {
                video_id: fields[1].trim().to_string(),
                start_seconds: parse_f(fields[3], "start")?,
                end_seconds: parse_f(fields[4], "end")?,
                cut,
            },
            arc_value: parse_f(fields[5], "arc value")?,
            stddev_at,
        });
    }
    Ok(out)
}

pub fn load_clips(path: impl AsRef<Path>) -> Result<Vec<ClipRecord>, IngestError> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        context: ctx.clone(),
        source,
    })?;
    parse_clips(&text, &ctx)
}

/// Renders the features file: a header row naming every feature in frozen
/// order, then one row per clip.
pub fn render_features(rows: &[(String, Cut, FeatureVector)]) -> String {
    let mut out = format!("clip_id,cut,{}\n", FEATURE_NAMES.join(","));
    for (clip_id, cut, fv) in rows {
        let vals: Vec<String> = fv.values.iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!("{clip_id},{cut},{}\n", vals.join(",")));
    }
    out
}

pub fn parse_features(
    text: &str,
    ctx: &str,
) -> Result<Vec<(String, Cut, FeatureVector)>, IngestError> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            saw_header = true;
            let expected = format!("clip_id,cut,{}", FEATURE_NAMES.join(","));
            if trimmed != expected {
                return Err(IngestError::Parse {
                    context: ctx.to_string(),
                    msg: "feature header does not match the frozen order".into(),
                });
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != FEATURE_COUNT + 2 {
            return Err(IngestError::Parse {
                context: ctx.to_string(),
                msg: format!("line {}: expected {} fields", lineno + 1, FEATURE_COUNT + 2),
            });
        }
        let cut: Cut = fields[1].trim().parse().map_err(|e: String| IngestError::Parse {
            context: ctx.to_string(),
            msg: format!("line {}: {e}", lineno + 1),
        })?;
        let mut values = [0.0; FEATURE_COUNT];
        for (slot, field) in values.iter_mut().zip(&fields[2..]) {
            *slot = field.trim().parse().map_err(|_| IngestError::Parse {
                context: ctx.to_string(),
                msg: format!("line {}: bad feature value", lineno + 1),
            })?;
        }
        rows.push((fields[0].trim().to_string(), cut, FeatureVector { values }));
    }
    Ok(rows)
}
