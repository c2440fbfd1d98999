//! Parsing, validation, and persistence of all external data: sentiment
//! score series, dropout sample matrices, clip annotations, video metadata,
//! and frame-activation matrices.
//!
//! Every format is line-oriented CSV. Files may begin with any number of
//! `#`-prefixed `key=value` header lines; loaders merge them, so a tool
//! provenance line in front of the format header is harmless.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Which arc a signal or clip came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Audio,
    Visual,
}

impl Modality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Visual => "visual",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "audio" => Ok(Modality::Audio),
            "visual" => Ok(Modality::Visual),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

/// Which collection a video belongs to; the duration cutoffs differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CorpusKind {
    Films,
    Shorts,
}

impl CorpusKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorpusKind::Films => "films",
            CorpusKind::Shorts => "shorts",
        }
    }

    /// Default duration cutoff in seconds for this corpus.
    pub fn default_max_duration(&self) -> f64 {
        match self {
            CorpusKind::Films => 10_000.0,
            CorpusKind::Shorts => 1_800.0,
        }
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "films" => Ok(CorpusKind::Films),
            "shorts" => Ok(CorpusKind::Shorts),
            other => Err(format!("unknown corpus `{other}`")),
        }
    }
}

/// The source of an extracted clip: which arc and which extremum kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cut {
    AudioPeak,
    AudioValley,
    VisualPeak,
    VisualValley,
}

impl Cut {
    pub const ALL: [Cut; 4] = [
        Cut::AudioPeak,
        Cut::AudioValley,
        Cut::VisualPeak,
        Cut::VisualValley,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Cut::AudioPeak => "audio-peak",
            Cut::AudioValley => "audio-valley",
            Cut::VisualPeak => "visual-peak",
            Cut::VisualValley => "visual-valley",
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            Cut::AudioPeak | Cut::AudioValley => Modality::Audio,
            Cut::VisualPeak | Cut::VisualValley => Modality::Visual,
        }
    }

    pub fn is_peak(&self) -> bool {
        matches!(self, Cut::AudioPeak | Cut::VisualPeak)
    }
}

impl fmt::Display for Cut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cut {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "audio-peak" => Ok(Cut::AudioPeak),
            "audio-valley" => Ok(Cut::AudioValley),
            "visual-peak" => Ok(Cut::VisualPeak),
            "visual-valley" => Ok(Cut::VisualValley),
            other => Err(format!("unknown cut `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{context}: {msg}")]
    Parse { context: String, msg: String },
    #[error("{context}: {msg}")]
    Range { context: String, msg: String },
    #[error("{context}: series must have at least 2 values")]
    EmptySeries { context: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl IngestError {
    fn parse(context: impl Into<String>, msg: impl Into<String>) -> Self {
        IngestError::Parse {
            context: context.into(),
            msg: msg.into(),
        }
    }

    fn range(context: impl Into<String>, msg: impl Into<String>) -> Self {
        IngestError::Range {
            context: context.into(),
            msg: msg.into(),
        }
    }
}

/// Raw per-timepoint sentiment scores for one video and one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentSeries {
    pub video_id: String,
    pub modality: Modality,
    /// Probability of positive sentiment per timepoint, each in [0, 1].
    pub values: Vec<f64>,
    /// Seconds between consecutive timepoints (1.0 for visual frames,
    /// the sliding-window stride for audio).
    pub timestep_seconds: f64,
    /// Width in seconds of the window each score summarizes (20.0 for
    /// audio, 0.0 for visual single frames).
    pub window_seconds: f64,
}

impl SentimentSeries {
    pub fn new(
        video_id: impl Into<String>,
        modality: Modality,
        values: Vec<f64>,
        timestep_seconds: f64,
        window_seconds: f64,
    ) -> Result<Self, IngestError> {
        let video_id = video_id.into();
        let ctx = format!("series {video_id}/{modality}");
        validate_video_id(&video_id, &ctx)?;
        if values.len() < 2 {
            return Err(IngestError::EmptySeries { context: ctx });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(v) {
                return Err(IngestError::range(
                    ctx,
                    format!("value {v} at row {i} outside [0, 1]"),
                ));
            }
        }
        if !(timestep_seconds.is_finite() && timestep_seconds > 0.0) {
            return Err(IngestError::range(ctx, "timestep must be positive"));
        }
        if !(window_seconds.is_finite() && window_seconds >= 0.0) {
            return Err(IngestError::range(ctx, "window must be non-negative"));
        }
        Ok(SentimentSeries {
            video_id,
            modality,
            values,
            timestep_seconds,
            window_seconds,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-timepoint outputs of repeated stochastic forward passes, one row per pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutSamples {
    pub video_id: String,
    pub modality: Modality,
    /// Shape `m_passes x T`, entries in [0, 1].
    pub samples: Vec<Vec<f64>>,
}

impl DropoutSamples {
    pub fn new(
        video_id: impl Into<String>,
        modality: Modality,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        let video_id = video_id.into();
        let ctx = format!("dropout {video_id}/{modality}");
        validate_video_id(&video_id, &ctx)?;
        if samples.len() < 2 {
            return Err(IngestError::range(ctx, "need at least 2 passes"));
        }
        let t = samples[0].len();
        for (p, row) in samples.iter().enumerate() {
            if row.len() != t {
                return Err(IngestError::parse(
                    ctx,
                    format!("pass {p} has {} values, expected {t}", row.len()),
                ));
            }
            for (i, v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(v) {
                    return Err(IngestError::range(
                        ctx,
                        format!("value {v} at pass {p}, column {i} outside [0, 1]"),
                    ));
                }
            }
        }
        Ok(DropoutSamples {
            video_id,
            modality,
            samples,
        })
    }

    pub fn m_passes(&self) -> usize {
        self.samples.len()
    }

    pub fn timepoints(&self) -> usize {
        self.samples[0].len()
    }
}

/// Per-video metadata, including the engagement target.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    pub video_id: String,
    pub duration_seconds: f64,
    pub year: i32,
    /// Engagement target: comment count on the hosting platform.
    pub comments: u64,
    pub genres: BTreeSet<String>,
    pub corpus: CorpusKind,
}

impl VideoMeta {
    pub fn new(
        video_id: impl Into<String>,
        duration_seconds: f64,
        year: i32,
        comments: u64,
        genres: BTreeSet<String>,
        corpus: CorpusKind,
    ) -> Result<Self, IngestError> {
        let video_id = video_id.into();
        let ctx = format!("meta {video_id}");
        validate_video_id(&video_id, &ctx)?;
        if !(duration_seconds.is_finite() && duration_seconds > 0.0) {
            return Err(IngestError::range(ctx, "duration must be positive"));
        }
        Ok(VideoMeta {
            video_id,
            duration_seconds,
            year,
            comments,
            genres,
            corpus,
        })
    }
}

/// One annotated clip: its source cut and the workers' valence ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub clip_id: String,
    pub video_id: String,
    pub cut: Cut,
    /// One 1..=7 valence rating per worker, in file order.
    pub ratings: Vec<u8>,
    /// Uncertainty of the arc prediction at the extraction point, when known.
    pub source_stddev: Option<f64>,
}

impl AnnotationRecord {
    pub fn new(
        clip_id: impl Into<String>,
        video_id: impl Into<String>,
        cut: Cut,
        ratings: Vec<u8>,
        source_stddev: Option<f64>,
    ) -> Result<Self, IngestError> {
        let clip_id = clip_id.into();
        let video_id = video_id.into();
        let ctx = format!("annotation {clip_id}");
        if ratings.is_empty() {
            return Err(IngestError::parse(ctx, "at least one rating required"));
        }
        for &r in &ratings {
            if !(1..=7).contains(&r) {
                return Err(IngestError::range(ctx, format!("rating {r} outside 1..7")));
            }
        }
        if let Some(s) = source_stddev {
            if !(s.is_finite() && s >= 0.0) {
                return Err(IngestError::range(ctx, "stddev must be non-negative"));
            }
        }
        Ok(AnnotationRecord {
            clip_id,
            video_id,
            cut,
            ratings,
            source_stddev,
        })
    }
}

/// Per-frame activations of a pretrained classifier's penultimate layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    pub video_id: String,
    /// Shape `T_frames x D` with `T_frames >= 10`.
    pub activations: Vec<Vec<f64>>,
}

impl ActivationMatrix {
    pub fn new(
        video_id: impl Into<String>,
        activations: Vec<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        let video_id = video_id.into();
        let ctx = format!("activations {video_id}");
        validate_video_id(&video_id, &ctx)?;
        if activations.len() < 10 {
            return Err(IngestError::range(
                ctx,
                format!("need at least 10 frames, got {}", activations.len()),
            ));
        }
        let d = activations[0].len();
        if d == 0 {
            return Err(IngestError::parse(ctx, "zero-width activation rows"));
        }
        for (t, row) in activations.iter().enumerate() {
            if row.len() != d {
                return Err(IngestError::parse(
                    ctx,
                    format!("frame {t} has {} values, expected {d}", row.len()),
                ));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(IngestError::range(
                        ctx,
                        format!("non-finite value at frame {t}, column {j}"),
                    ));
                }
            }
        }
        Ok(ActivationMatrix {
            video_id,
            activations,
        })
    }

    pub fn frames(&self) -> usize {
        self.activations.len()
    }

    pub fn dims(&self) -> usize {
        self.activations[0].len()
    }
}

fn validate_video_id(id: &str, ctx: &str) -> Result<(), IngestError> {
    if id.is_empty() {
        return Err(IngestError::parse(ctx, "empty video id"));
    }
    if id.chars().any(|c| c == ',' || c.is_control()) {
        return Err(IngestError::parse(ctx, "video id contains `,` or control chars"));
    }
    Ok(())
}

/// Splits leading `# key=value,...` lines from the body; later keys win.
fn split_headers(text: &str) -> (BTreeMap<String, String>, Vec<(usize, &str)>) {
    let mut headers = BTreeMap::new();
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

fn header_value<'a>(
    headers: &'a BTreeMap<String, String>,
    key: &str,
    ctx: &str,
) -> Result<&'a str, IngestError> {
    headers
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| IngestError::parse(ctx, format!("missing header key `{key}`")))
}

fn parse_num<T: FromStr>(s: &str, ctx: &str, what: &str) -> Result<T, IngestError> {
    s.trim()
        .parse()
        .map_err(|_| IngestError::parse(ctx, format!("cannot parse {what} from `{s}`")))
}

fn read_file(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        context: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), IngestError> {
    std::fs::write(path, contents).map_err(|source| IngestError::Io {
        context: path.display().to_string(),
        source,
    })
}

/// Parses a sentiment series from its CSV text.
///
/// Expected header: `# video_id=<id>,modality=<audio|visual>,step=<f>,window=<f>`
/// followed by one value per line.
pub fn parse_series(text: &str, ctx: &str) -> Result<SentimentSeries, IngestError> {
    let (headers, body) = split_headers(text);
    let video_id = header_value(&headers, "video_id", ctx)?.to_string();
    let modality: Modality = header_value(&headers, "modality", ctx)?
        .parse()
        .map_err(|e: String| IngestError::parse(ctx, e))?;
    let step: f64 = parse_num(header_value(&headers, "step", ctx)?, ctx, "step")?;
    let window: f64 = parse_num(header_value(&headers, "window", ctx)?, ctx, "window")?;
    let mut values = Vec::with_capacity(body.len());
    for (lineno, line) in body {
        let v: f64 = parse_num(line, ctx, &format!("value on line {lineno}"))?;
        values.push(v);
    }
    SentimentSeries::new(video_id, modality, values, step, window)
}

/// Renders a series in the format accepted by [`parse_series`].
pub fn render_series(series: &SentimentSeries) -> String {
    let mut out = format!(
        "# video_id={},modality={},step={},window={}\n",
        series.video_id, series.modality, series.timestep_seconds, series.window_seconds
    );
    for v in &series.values {
        out.push_str(&format!("{v}\n"));
    }
    out
}

pub fn load_series(path: impl AsRef<Path>) -> Result<SentimentSeries, IngestError> {
    let path = path.as_ref();
    parse_series(&read_file(path)?, &path.display().to_string())
}

pub fn write_series(series: &SentimentSeries, path: impl AsRef<Path>) -> Result<(), IngestError> {
    write_file(path.as_ref(), &render_series(series))
}

/// Canonical file name for a series: `<video_id>.<modality>.series.csv`.
pub fn series_file_name(video_id: &str, modality: Modality) -> String {
    format!("{video_id}.{modality}.series.csv")
}

/// Parses a dropout matrix. Header: `# m=<int>,T=<int>`, then `m` rows of
/// `T` comma-separated values. The video id and modality come from the file
/// name, which the caller passes through.
pub fn parse_dropout(
    text: &str,
    video_id: &str,
    modality: Modality,
    ctx: &str,
) -> Result<DropoutSamples, IngestError> {
    let (headers, body) = split_headers(text);
    let m: usize = parse_num(header_value(&headers, "m", ctx)?, ctx, "m")?;
    let t: usize = parse_num(header_value(&headers, "T", ctx)?, ctx, "T")?;
    if body.len() != m {
        return Err(IngestError::parse(
            ctx,
            format!("expected {m} rows, found {}", body.len()),
        ));
    }
    let mut samples = Vec::with_capacity(m);
    for (lineno, line) in body {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| parse_num(s, ctx, &format!("value on line {lineno}")))
            .collect::<Result<_, _>>()?;
        if row.len() != t {
            return Err(IngestError::parse(
                ctx,
                format!("line {lineno}: expected {t} values, found {}", row.len()),
            ));
        }
        samples.push(row);
    }
    DropoutSamples::new(video_id, modality, samples)
}

pub fn render_dropout(samples: &DropoutSamples) -> String {
    let mut out = format!("# m={},T={}\n", samples.m_passes(), samples.timepoints());
    for row in &samples.samples {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn dropout_file_name(video_id: &str, modality: Modality) -> String {
    format!("{video_id}.{modality}.dropout.csv")
}

pub fn load_dropout(path: impl AsRef<Path>) -> Result<DropoutSamples, IngestError> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let (video_id, modality) = parse_stem(path, "dropout", &ctx)?;
    parse_dropout(&read_file(path)?, &video_id, modality, &ctx)
}

pub fn write_dropout(samples: &DropoutSamples, path: impl AsRef<Path>) -> Result<(), IngestError> {
    write_file(path.as_ref(), &render_dropout(samples))
}

/// Recovers `(video_id, modality)` from a `<video_id>.<modality>.<kind>.csv` name.
pub(crate) fn parse_stem(
    path: &Path,
    kind: &str,
    ctx: &str,
) -> Result<(String, Modality), IngestError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| IngestError::parse(ctx, "unreadable file name"))?;
    let suffix = format!(".{kind}.csv");
    let stem = name
        .strip_suffix(&suffix)
        .ok_or_else(|| IngestError::parse(ctx, format!("file name must end in `{suffix}`")))?;
    let (video_id, modality) = stem
        .rsplit_once('.')
        .ok_or_else(|| IngestError::parse(ctx, "file name must be <video_id>.<modality>"))?;
    let modality = modality
        .parse()
        .map_err(|e: String| IngestError::parse(ctx, e))?;
    Ok((video_id.to_string(), modality))
}

/// Parses annotation records. Columns:
/// `clip_id,video_id,cut,ratings(semicolon-joined),source_stddev(optional)`.
pub fn parse_annotations(text: &str, ctx: &str) -> Result<Vec<AnnotationRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::parse(ctx, format!("row {i}: {e}")))?;
        if row.len() < 4 {
            return Err(IngestError::parse(
                ctx,
                format!("row {i}: expected at least 4 columns, found {}", row.len()),
            ));
        }
        let clip_id = row[0].trim().to_string();
        let video_id = row[1].trim().to_string();
        let cut: Cut = row[2]
            .trim()
            .parse()
            .map_err(|e: String| IngestError::parse(ctx, format!("row {i}: {e}")))?;
        let mut ratings = Vec::new();
        for part in row[3].split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let r: i64 = parse_num(part, ctx, &format!("rating in row {i}"))?;
            if !(1..=7).contains(&r) {
                return Err(IngestError::range(
                    ctx,
                    format!("row {i}: rating {r} outside 1..7"),
                ));
            }
            ratings.push(r as u8);
        }
        let source_stddev = match row.get(4).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(parse_num(s, ctx, &format!("stddev in row {i}"))?),
        };
        records.push(AnnotationRecord::new(
            clip_id,
            video_id,
            cut,
            ratings,
            source_stddev,
        )?);
    }
    Ok(records)
}

pub fn render_annotations(records: &[AnnotationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let ratings: Vec<String> = r.ratings.iter().map(|v| v.to_string()).collect();
        let stddev = r.source_stddev.map(|s| format!("{s}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.clip_id,
            r.video_id,
            r.cut,
            ratings.join(";"),
            stddev
        ));
    }
    out
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, IngestError> {
    let path = path.as_ref();
    parse_annotations(&read_file(path)?, &path.display().to_string())
}

pub fn write_annotations(
    records: &[AnnotationRecord],
    path: impl AsRef<Path>,
) -> Result<(), IngestError> {
    write_file(path.as_ref(), &render_annotations(records))
}

/// Parses video metadata. Columns:
/// `video_id,duration_seconds,year,comments,genres(semicolon-joined),corpus`.
pub fn parse_metadata(text: &str, ctx: &str) -> Result<Vec<VideoMeta>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut metas = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::parse(ctx, format!("row {i}: {e}")))?;
        if row.len() != 6 {
            return Err(IngestError::parse(
                ctx,
                format!("row {i}: expected 6 columns, found {}", row.len()),
            ));
        }
        let duration: f64 = parse_num(&row[1], ctx, &format!("duration in row {i}"))?;
        let year: i32 = parse_num(&row[2], ctx, &format!("year in row {i}"))?;
        let comments: u64 = parse_num(&row[3], ctx, &format!("comments in row {i}"))?;
        let genres: BTreeSet<String> = row[4]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let corpus: CorpusKind = row[5]
            .trim()
            .parse()
            .map_err(|e: String| IngestError::parse(ctx, format!("row {i}: {e}")))?;
        metas.push(VideoMeta::new(
            row[0].trim().to_string(),
            duration,
            year,
            comments,
            genres,
            corpus,
        )?);
    }
    Ok(metas)
}

pub fn render_metadata(metas: &[VideoMeta]) -> String {
    let mut out = String::new();
    for m in metas {
        let genres: Vec<&str> = m.genres.iter().map(String::as_str).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.video_id,
            m.duration_seconds,
            m.year,
            m.comments,
            genres.join(";"),
            m.corpus
        ));
    }
    out
}

pub fn load_metadata(path: impl AsRef<Path>) -> Result<Vec<VideoMeta>, IngestError> {
    let path = path.as_ref();
    parse_metadata(&read_file(path)?, &path.display().to_string())
}

pub fn write_metadata(metas: &[VideoMeta], path: impl AsRef<Path>) -> Result<(), IngestError> {
    write_file(path.as_ref(), &render_metadata(metas))
}

/// Parses a frame-activation matrix. Header `# T=<int>,D=<int>`, then `T`
/// rows of `D` comma-separated values.
pub fn parse_activations(
    text: &str,
    video_id: &str,
    ctx: &str,
) -> Result<ActivationMatrix, IngestError> {
    let (headers, body) = split_headers(text);
    let t: usize = parse_num(header_value(&headers, "T", ctx)?, ctx, "T")?;
    let d: usize = parse_num(header_value(&headers, "D", ctx)?, ctx, "D")?;
    if body.len() != t {
        return Err(IngestError::parse(
            ctx,
            format!("expected {t} rows, found {}", body.len()),
        ));
    }
    let mut rows = Vec::with_capacity(t);
    for (lineno, line) in body {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| parse_num(s, ctx, &format!("value on line {lineno}")))
            .collect::<Result<_, _>>()?;
        if row.len() != d {
            return Err(IngestError::parse(
                ctx,
                format!("line {lineno}: expected {d} values, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    ActivationMatrix::new(video_id, rows)
}

pub fn render_activations(acts: &ActivationMatrix) -> String {
    let mut out = format!("# T={},D={}\n", acts.frames(), acts.dims());
    for row in &acts.activations {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn activations_file_name(video_id: &str) -> String {
    format!("{video_id}.activations.csv")
}

pub fn load_activations(path: impl AsRef<Path>) -> Result<ActivationMatrix, IngestError> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| IngestError::parse(&ctx, "unreadable file name"))?;
    let video_id = name
        .strip_suffix(".activations.csv")
        .ok_or_else(|| IngestError::parse(&ctx, "file name must end in `.activations.csv`"))?;
    parse_activations(&read_file(path)?, video_id, &ctx)
}

pub fn write_activations(
    acts: &ActivationMatrix,
    path: impl AsRef<Path>,
) -> Result<(), IngestError> {
    write_file(path.as_ref(), &render_activations(acts))
}

/// Keeps exactly the videos with `duration_seconds <= max_seconds`, in order.
pub fn filter_by_duration(metas: &[VideoMeta], max_seconds: f64) -> Vec<VideoMeta> {
    assert!(max_seconds > 0.0, "max_seconds must be positive");
    metas
        .iter()
        .filter(|m| m.duration_seconds <= max_seconds)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_series() {
        let text = "# video_id=v1,modality=visual,step=1.0,window=0.0\n0.5\n0.7\n0.2\n";
        let s = parse_series(text, "test").unwrap();
        assert_eq!(s.values, vec![0.5, 0.7, 0.2]);
        assert_eq!(s.timestep_seconds, 1.0);
        assert_eq!(s.modality, Modality::Visual);
    }

    #[test]
    fn rejects_out_of_range_value() {
        let text = "# video_id=v1,modality=visual,step=1.0,window=0.0\n0.5\n1.2\n";
        match parse_series(text, "test") {
            Err(IngestError::Range { .. }) => {}
            other => panic!("expected RangeError, got {other:?}"),
        }
    }

    #[test]
    fn rejects_nan_value() {
        let text = "# video_id=v1,modality=visual,step=1.0,window=0.0\nNaN\n0.5\n";
        assert!(matches!(
            parse_series(text, "test"),
            Err(IngestError::Range { .. })
        ));
    }

    #[test]
    fn rejects_single_row() {
        let text = "# video_id=v1,modality=visual,step=1.0,window=0.0\n0.5\n";
        assert!(matches!(
            parse_series(text, "test"),
            Err(IngestError::EmptySeries { .. })
        ));
    }

    #[test]
    fn series_round_trip_is_value_exact() {
        let text = "# video_id=v1,modality=audio,step=2.5,window=20\n0.123456789\n0.5\n0.000000001\n1\n0\n";
        let s = parse_series(text, "test").unwrap();
        let back = parse_series(&render_series(&s), "test").unwrap();
        assert_eq!(s, back);
        for (a, b) in s.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn loader_merges_extra_comment_headers() {
        let text = "# emoarc=0.1.0,config=ab12,seed=7\n# video_id=v1,modality=visual,step=1,window=0\n0.1\n0.2\n";
        let s = parse_series(text, "test").unwrap();
        assert_eq!(s.video_id, "v1");
    }

    #[test]
    fn parses_annotation_row() {
        let text = "c1,v1,visual-peak,\"5;6;5\",0.03\n";
        let recs = parse_annotations(text, "test").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].cut, Cut::VisualPeak);
        assert_eq!(recs[0].ratings, vec![5, 6, 5]);
        assert_eq!(recs[0].source_stddev, Some(0.03));
    }

    #[test]
    fn annotation_without_stddev() {
        let text = "c1,v1,audio-valley,2;3;3,\n";
        let recs = parse_annotations(text, "test").unwrap();
        assert_eq!(recs[0].source_stddev, None);
        let text4 = "c1,v1,audio-valley,2;3;3\n";
        let recs4 = parse_annotations(text4, "test").unwrap();
        assert_eq!(recs4[0].source_stddev, None);
    }

    #[test]
    fn annotation_rating_out_of_range() {
        let text = "c1,v1,visual-peak,5;8;5,\n";
        assert!(matches!(
            parse_annotations(text, "test"),
            Err(IngestError::Range { .. })
        ));
    }

    #[test]
    fn annotations_preserve_file_order() {
        let text = "c2,v1,audio-peak,5,\nc1,v1,audio-valley,3,\n";
        let recs = parse_annotations(text, "test").unwrap();
        assert_eq!(recs[0].clip_id, "c2");
        assert_eq!(recs[1].clip_id, "c1");
    }

    #[test]
    fn metadata_round_trip() {
        let text = "v1,505,2014,12,drama;comedy,shorts\nv2,9000.5,2001,0,,films\n";
        let metas = parse_metadata(text, "test").unwrap();
        assert_eq!(metas.len(), 2);
        assert_eq!(metas[0].comments, 12);
        assert!(metas[1].genres.is_empty());
        let back = parse_metadata(&render_metadata(&metas), "test").unwrap();
        assert_eq!(metas, back);
    }

    #[test]
    fn duration_filter_keeps_boundary() {
        let metas: Vec<VideoMeta> = [505.0, 1900.0, 1799.0]
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                VideoMeta::new(
                    format!("v{i}"),
                    d,
                    2015,
                    0,
                    BTreeSet::new(),
                    CorpusKind::Shorts,
                )
                .unwrap()
            })
            .collect();
        let kept = filter_by_duration(&metas, 1800.0);
        let durations: Vec<f64> = kept.iter().map(|m| m.duration_seconds).collect();
        assert_eq!(durations, vec![505.0, 1799.0]);

        // huge bound is a no-op, and the filter is idempotent
        let all = filter_by_duration(&metas, 1e9);
        assert_eq!(all, metas);
        assert_eq!(filter_by_duration(&kept, 1800.0), kept);

        assert!(filter_by_duration(&metas, 1.0).is_empty());
    }

    #[test]
    fn dropout_rejects_ragged_rows() {
        let text = "# m=2,T=3\n0.1,0.2,0.3\n0.1,0.2\n";
        assert!(matches!(
            parse_dropout(text, "v1", Modality::Audio, "test"),
            Err(IngestError::Parse { .. })
        ));
    }

    #[test]
    fn activations_need_ten_frames() {
        let rows = vec![vec![1.0, 2.0]; 9];
        assert!(matches!(
            ActivationMatrix::new("v1", rows),
            Err(IngestError::Range { .. })
        ));
        let rows = vec![vec![1.0, 2.0]; 10];
        assert!(ActivationMatrix::new("v1", rows).is_ok());
    }

    #[test]
    fn stem_parse_allows_dotted_ids() {
        let (id, m) = parse_stem(
            Path::new("a.b.visual.series.csv"),
            "series",
            "test",
        )
        .unwrap();
        assert_eq!(id, "a.b");
        assert_eq!(m, Modality::Visual);
    }
}
