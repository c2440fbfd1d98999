//! Emotional arcs: Hann smoothing of raw sentiment series, z-normalization,
//! resampling to a common length, and aggregation of MC-dropout passes into
//! confidence bands.
//!
//! Transform order for the clustering pipeline is smooth, then resample,
//! then z-normalize; each arc records which transforms it has been through.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

use crate::ingest::{self, DropoutSamples, IngestError, Modality, SentimentSeries};

#[derive(Debug, Error)]
pub enum ArcError {
    #[error("invalid smoothing window {w} for series of length {n}")]
    InvalidWindow { w: usize, n: usize },
    #[error("degenerate series: population std {std:e} too small to normalize")]
    DegenerateSeries { std: f64 },
    #[error("invalid resample target {n}, need at least 2")]
    InvalidTarget { n: usize },
    #[error("shape mismatch: {msg}")]
    ShapeError { msg: String },
}

/// A smoothed (and optionally normalized/resampled) emotional arc.
///
/// `lower_band`/`upper_band`, when present, bracket `values` pointwise and
/// are carried through every transform.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionalArc {
    pub video_id: String,
    pub modality: Modality,
    pub values: Vec<f64>,
    /// The `w = fraction * n` smoothing choice; 0.0 when unsmoothed.
    pub smoothing_fraction: f64,
    pub znormed: bool,
    pub resampled_to: Option<usize>,
    pub lower_band: Option<Vec<f64>>,
    pub upper_band: Option<Vec<f64>>,
}

impl EmotionalArc {
    /// Wraps a raw series as an unsmoothed arc.
    pub fn from_series(series: &SentimentSeries) -> Self {
        EmotionalArc {
            video_id: series.video_id.clone(),
            modality: series.modality,
            values: series.values.clone(),
            smoothing_fraction: 0.0,
            znormed: false,
            resampled_to: None,
            lower_band: None,
            upper_band: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Attaches a confidence band `values +- multiplier * stddev`, with the
    /// per-timepoint stddev taken from the dropout passes.
    pub fn with_band(
        mut self,
        samples: &DropoutSamples,
        multiplier: f64,
    ) -> Result<Self, ArcError> {
        assert!(multiplier > 0.0, "multiplier must be positive");
        if samples.timepoints() != self.values.len() {
            return Err(ArcError::ShapeError {
                msg: format!(
                    "dropout has {} timepoints, arc has {}",
                    samples.timepoints(),
                    self.values.len()
                ),
            });
        }
        let band = aggregate_dropout(samples, multiplier)?;
        let lower: Vec<f64> = self
            .values
            .iter()
            .zip(&band.stddev)
            .map(|(v, s)| v - multiplier * s)
            .collect();
        let upper: Vec<f64> = self
            .values
            .iter()
            .zip(&band.stddev)
            .map(|(v, s)| v + multiplier * s)
            .collect();
        self.lower_band = Some(lower);
        self.upper_band = Some(upper);
        Ok(self)
    }

    /// Half-width of the confidence band at `i`, when a band is attached.
    /// At the default multiplier of 1 this is the dropout stddev itself.
    pub fn band_half_width(&self, i: usize) -> Option<f64> {
        match (&self.lower_band, &self.upper_band) {
            (Some(lo), Some(up)) => Some((up[i] - lo[i]) / 2.0),
            _ => None,
        }
    }

    /// Convolves with a Hann kernel of width `max(1, round(fraction * n))`.
    /// At the edges the kernel is truncated to valid indices and
    /// renormalized over the overlap, so constant arcs stay constant.
    pub fn smoothed(&self, fraction: f64) -> Result<Self, ArcError> {
        assert!(
            fraction > 0.0 && fraction <= 1.0,
            "fraction must be in (0, 1]"
        );
        let n = self.values.len();
        let w = usize::max(1, (fraction * n as f64).round_ties_even() as usize);
        if w > n {
            return Err(ArcError::InvalidWindow { w, n });
        }
        let kernel = hann_kernel(w)?;
        let mut out = self.clone();
        out.values = convolve_truncated(&self.values, &kernel);
        out.lower_band = self.lower_band.as_ref().map(|b| convolve_truncated(b, &kernel));
        out.upper_band = self.upper_band.as_ref().map(|b| convolve_truncated(b, &kernel));
        out.smoothing_fraction = fraction;
        Ok(out)
    }

    /// Linearly resamples to `target` points, endpoints preserved exactly.
    pub fn resampled(&self, target: usize) -> Result<Self, ArcError> {
        if target < 2 {
            return Err(ArcError::InvalidTarget { n: target });
        }
        assert!(self.values.len() >= 2, "arc must have at least 2 points");
        let mut out = self.clone();
        out.values = lerp_resample(&self.values, target);
        out.lower_band = self.lower_band.as_ref().map(|b| lerp_resample(b, target));
        out.upper_band = self.upper_band.as_ref().map(|b| lerp_resample(b, target));
        out.resampled_to = Some(target);
        Ok(out)
    }

    /// Shifts and scales to mean 0, population std 1. The same affine map is
    /// applied to the band so it keeps bracketing the values.
    pub fn znormed(&self) -> Result<Self, ArcError> {
        let (mean, std) = mean_pop_std(&self.values);
        if std <= 1e-12 {
            return Err(ArcError::DegenerateSeries { std });
        }
        let map = |v: f64| (v - mean) / std;
        let mut out = self.clone();
        out.values = self.values.iter().map(|&v| map(v)).collect();
        out.lower_band = self
            .lower_band
            .as_ref()
            .map(|b| b.iter().map(|&v| map(v)).collect());
        out.upper_band = self
            .upper_band
            .as_ref()
            .map(|b| b.iter().map(|&v| map(v)).collect());
        out.znormed = true;
        Ok(out)
    }
}

/// Strictly positive Hann kernel of width `w`, normalized to sum to 1.
///
/// Uses the interior form `0.5 * (1 - cos(2 pi (i+1) / (w+1)))`, which keeps
/// every tap positive; the endpoint-zero textbook form degenerates for small
/// `w`.
pub fn hann_kernel(w: usize) -> Result<Vec<f64>, ArcError> {
    if w < 1 {
        return Err(ArcError::InvalidWindow { w, n: 0 });
    }
    let mut kernel: Vec<f64> = (0..w)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * (i + 1) as f64 / (w + 1) as f64).cos()))
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    Ok(kernel)
}

/// Kernel-weighted moving average with truncate-and-renormalize edges.
fn convolve_truncated(values: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = values.len();
    let w = kernel.len();
    let center = (w - 1) / 2;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut acc = 0.0;
        let mut weight = 0.0;
        for (j, &k) in kernel.iter().enumerate() {
            let idx = t as isize + j as isize - center as isize;
            if idx >= 0 && (idx as usize) < n {
                acc += k * values[idx as usize];
                weight += k;
            }
        }
        out.push(acc / weight);
    }
    out
}

fn lerp_resample(values: &[f64], target: usize) -> Vec<f64> {
    let n = values.len();
    if target == n {
        // interpolation at integer positions is the identity; skip the
        // floating-point round trip so this case is bit-exact
        return values.to_vec();
    }
    let scale = (n - 1) as f64 / (target - 1) as f64;
    (0..target)
        .map(|j| {
            let pos = j as f64 * scale;
            let base = (pos.floor() as usize).min(n - 2);
            let frac = pos - base as f64;
            values[base] + frac * (values[base + 1] - values[base])
        })
        .collect()
}

pub(crate) fn mean_pop_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-timepoint mean and population stddev over dropout passes, plus the
/// multiplier that widens the band around the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBand {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub multiplier: f64,
}

impl UncertaintyBand {
    pub fn lower(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.stddev)
            .map(|(m, s)| m - self.multiplier * s)
            .collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.stddev)
            .map(|(m, s)| m + self.multiplier * s)
            .collect()
    }
}

/// Column mean and population stddev of the dropout pass matrix.
pub fn aggregate_dropout(
    samples: &DropoutSamples,
    multiplier: f64,
) -> Result<UncertaintyBand, ArcError> {
    assert!(multiplier > 0.0, "multiplier must be positive");
    let m = samples.m_passes();
    let t = samples.timepoints();
    for row in &samples.samples {
        if row.len() != t {
            return Err(ArcError::ShapeError {
                msg: "ragged dropout matrix".into(),
            });
        }
    }
    let mut mean = vec![0.0; t];
    let mut stddev = vec![0.0; t];
    for col in 0..t {
        let mut sum = 0.0;
        for row in &samples.samples {
            sum += row[col];
        }
        let mu = sum / m as f64;
        let mut var = 0.0;
        for row in &samples.samples {
            var += (row[col] - mu).powi(2);
        }
        mean[col] = mu;
        stddev[col] = (var / m as f64).sqrt();
    }
    Ok(UncertaintyBand {
        mean,
        stddev,
        multiplier,
    })
}

/// Hann-smooths a raw series into an arc. See [`EmotionalArc::smoothed`].
pub fn smooth(series: &SentimentSeries, fraction: f64) -> Result<EmotionalArc, ArcError> {
    EmotionalArc::from_series(series).smoothed(fraction)
}

/// See [`EmotionalArc::znormed`].
pub fn znorm(arc: &EmotionalArc) -> Result<EmotionalArc, ArcError> {
    arc.znormed()
}

/// See [`EmotionalArc::resampled`].
pub fn resample(arc: &EmotionalArc, target: usize) -> Result<EmotionalArc, ArcError> {
    arc.resampled(target)
}

/// Renders an arc file: header `# fraction=<f>,znormed=<bool>,resampled=<int|none>`
/// and one `value[,lower,upper]` row per point.
pub fn render_arc(arc: &EmotionalArc) -> String {
    let resampled = match arc.resampled_to {
        Some(n) => n.to_string(),
        None => "none".to_string(),
    };
    let mut out = format!(
        "# fraction={},znormed={},resampled={}\n",
        arc.smoothing_fraction, arc.znormed, resampled
    );
    match (&arc.lower_band, &arc.upper_band) {
        (Some(lo), Some(up)) => {
            for ((v, l), u) in arc.values.iter().zip(lo).zip(up) {
                out.push_str(&format!("{v},{l},{u}\n"));
            }
        }
        _ => {
            for v in &arc.values {
                out.push_str(&format!("{v}\n"));
            }
        }
    }
    out
}

/// Parses an arc file; id and modality come from the caller (the file name).
pub fn parse_arc(
    text: &str,
    video_id: &str,
    modality: Modality,
    ctx: &str,
) -> Result<EmotionalArc, IngestError> {
    let (headers, body) = ingest_split(text);
    let fraction: f64 = header_num(&headers, "fraction", ctx)?;
    let znormed: bool = header_num(&headers, "znormed", ctx)?;
    let resampled_raw = headers
        .get("resampled")
        .ok_or_else(|| parse_err(ctx, "missing header key `resampled`"))?;
    let resampled_to = if resampled_raw == "none" {
        None
    } else {
        Some(
            resampled_raw
                .parse::<usize>()
                .map_err(|_| parse_err(ctx, "bad `resampled` value"))?,
        )
    };
    let mut values = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (lineno, line) in body {
        let fields: Vec<&str> = line.split(',').collect();
        match fields.as_slice() {
            [v] => values.push(field_num(v, ctx, lineno)?),
            [v, l, u] => {
                values.push(field_num(v, ctx, lineno)?);
                lower.push(field_num(l, ctx, lineno)?);
                upper.push(field_num(u, ctx, lineno)?);
            }
            _ => {
                return Err(parse_err(
                    ctx,
                    format!("line {lineno}: expected 1 or 3 fields"),
                ))
            }
        }
    }
    if !lower.is_empty() && lower.len() != values.len() {
        return Err(parse_err(ctx, "mixed banded and bandless rows"));
    }
    let has_band = !lower.is_empty();
    Ok(EmotionalArc {
        video_id: video_id.to_string(),
        modality,
        values,
        smoothing_fraction: fraction,
        znormed,
        resampled_to,
        lower_band: has_band.then_some(lower),
        upper_band: has_band.then_some(upper),
    })
}

pub fn arc_file_name(video_id: &str, modality: Modality) -> String {
    format!("{video_id}.{modality}.arc.csv")
}

pub fn load_arc(path: impl AsRef<Path>) -> Result<EmotionalArc, IngestError> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let (video_id, modality) = ingest::parse_stem(path, "arc", &ctx)?;
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        context: ctx.clone(),
        source,
    })?;
    parse_arc(&text, &video_id, modality, &ctx)
}

// Small local wrappers around the ingest header helpers so the arc format
// reuses the same leading-comment convention.
fn ingest_split(text: &str) -> (std::collections::BTreeMap<String, String>, Vec<(usize, &str)>) {
    let mut headers = std::collections::BTreeMap::new();
    let mut body = Vec::new();
    let mut in_head = true;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if in_head && trimmed.starts_with('#') {
            for pair in trimmed.trim_start_matches('#').trim().split(',') {
                if let Some((k, v)) = pair.split_once('=') {
                    headers.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
            continue;
        }
        in_head = false;
        if !trimmed.is_empty() {
            body.push((lineno + 1, line));
        }
    }
    (headers, body)
}

fn parse_err(ctx: &str, msg: impl Into<String>) -> IngestError {
    IngestError::Parse {
        context: ctx.to_string(),
        msg: msg.into(),
    }
}

fn header_num<T: std::str::FromStr>(
    headers: &std::collections::BTreeMap<String, String>,
    key: &str,
    ctx: &str,
) -> Result<T, IngestError> {
    headers
        .get(key)
        .ok_or_else(|| parse_err(ctx, format!("missing header key `{key}`")))?
        .parse()
        .map_err(|_| parse_err(ctx, format!("bad `{key}` value")))
}

fn field_num(s: &str, ctx: &str, lineno: usize) -> Result<f64, IngestError> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(ctx, format!("bad value on line {lineno}")))
}
