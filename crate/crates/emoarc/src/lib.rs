//! Emotional arcs for video stories.
//!
//! The pipeline turns per-timepoint sentiment scores into smoothed
//! emotional arcs, finds families of arcs with k-medoids under banded
//! dynamic time warping (pruned by the Keogh lower bound), extracts
//! emotionally charged moments for annotation, and fits significance-tested
//! regressions linking arcs to audience engagement.
//!
//! Modules follow the stages:
//!
//! - [`ingest`]: file formats and validated domain types
//! - [`arc`]: Hann smoothing, z-normalization, resampling, dropout bands
//! - [`tsdist`]: banded DTW, envelopes, LB_Keogh, pairwise matrices
//! - [`cluster`]: k-medoids, elbow curves, adjusted Rand index
//! - [`features`]: peaks/valleys, clip windows, peakiness, movie embeddings
//! - [`evalstats`]: precision against annotations, OLS with t-tests,
//!   the combined valence model, engagement regressions
//! - [`chart`]: small deterministic SVG line charts
//! - [`synth`]: seeded synthetic corpora for tests and demos

pub mod arc;
pub mod chart;
pub mod cluster;
pub mod evalstats;
pub mod features;
pub mod ingest;
pub mod synth;
pub mod tsdist;

pub use arc::{aggregate_dropout, hann_kernel, resample, smooth, znorm, ArcError, EmotionalArc};
pub use cluster::{adjusted_rand_index, assign, elbow, kmedoids, ClusterError, ClusterModel};
pub use evalstats::{
    classify_clip, combined_valence_fit, engagement_run, ols, precision, RegressionResult,
    StatsError,
};
pub use features::{
    clip_features, clip_window, extract_clips, find_extrema, movie_embedding, peakiness,
    FeatureError, FeatureVector,
};
pub use ingest::{
    filter_by_duration, load_annotations, load_series, CorpusKind, Cut, IngestError, Modality,
    SentimentSeries, VideoMeta,
};
pub use tsdist::{
    dtw, keogh_envelope, lb_keogh, pruned_distance, DistError, DistanceConfig, PrunedDistance,
    Reach,
};
