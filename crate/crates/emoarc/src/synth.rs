//! Synthetic corpora: planted arc families for clustering checks and small
//! end-to-end corpora (series, dropout, metadata, annotations, activations)
//! for exercising the file pipeline deterministically.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arc::EmotionalArc;
use crate::features::{extract_clips, ClipExtractionParams, ClipRecord};
use crate::ingest::{
    self, ActivationMatrix, AnnotationRecord, CorpusKind, DropoutSamples, IngestError, Modality,
    SentimentSeries, VideoMeta,
};

/// The three planted arc shapes, as piecewise-linear templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcFamily {
    /// Rise, fall, rise again.
    RiseFallRise,
    /// A single climb and a long decline.
    RiseFall,
    /// Decline into a low point, then recovery.
    FallRise,
}

impl ArcFamily {
    pub const ALL: [ArcFamily; 3] = [
        ArcFamily::RiseFallRise,
        ArcFamily::RiseFall,
        ArcFamily::FallRise,
    ];

    fn breakpoints(&self) -> &'static [(f64, f64)] {
        match self {
            ArcFamily::RiseFallRise => &[(0.0, 0.25), (0.3, 0.8), (0.7, 0.2), (1.0, 0.85)],
            ArcFamily::RiseFall => &[(0.0, 0.15), (0.5, 0.85), (1.0, 0.2)],
            ArcFamily::FallRise => &[(0.0, 0.85), (0.5, 0.15), (1.0, 0.8)],
        }
    }
}

/// Samples a piecewise-linear template at `n` evenly spaced positions.
pub fn family_template(family: ArcFamily, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let bp = family.breakpoints();
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            let seg = bp.windows(2).find(|w| t <= w[1].0).unwrap_or(&bp[bp.len() - 2..]);
            let (t0, v0) = seg[0];
            let (t1, v1) = seg[1];
            let frac = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            v0 + frac.clamp(0.0, 1.0) * (v1 - v0)
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms in (0,1]
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A template instance with additive Gaussian noise, clamped to [0, 1].
pub fn noisy_instance(family: ArcFamily, n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    family_template(family, n)
        .into_iter()
        .map(|v| (v + sigma * gaussian(rng)).clamp(0.0, 1.0))
        .collect()
}

/// `per_family` noisy instances of each family, with their true labels.
/// Lengths vary a little around `len` so resampling stays honest.
pub fn planted_family_corpus(
    per_family: usize,
    len: usize,
    sigma: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::new();
    let mut labels = Vec::new();
    for (label, family) in ArcFamily::ALL.iter().enumerate() {
        for _ in 0..per_family {
            let jitter = rng.random_range(0..len / 10 + 1);
            let n = len - len / 20 + jitter;
            series.push(noisy_instance(*family, n, sigma, &mut rng));
            labels.push(label);
        }
    }
    (series, labels)
}

/// Everything one synthetic video carries.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub meta: VideoMeta,
    pub family: ArcFamily,
    pub visual: SentimentSeries,
    pub audio: SentimentSeries,
    pub audio_dropout: DropoutSamples,
    pub activations: ActivationMatrix,
}

/// A deterministic synthetic corpus plus its crowd annotations.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub videos: Vec<SynthVideo>,
    pub annotations: Vec<AnnotationRecord>,
    pub seed: u64,
}

/// Generation knobs for [`generate_corpus`].
#[derive(Debug, Clone, Copy)]
pub struct SynthCorpusParams {
    pub n_videos: usize,
    pub seed: u64,
    /// Fraction of worker ratings that contradict the planted polarity.
    pub rating_error: f64,
    /// Comment-count bonus planted on one family
    /// (`RiseFall`, the third label) to give the engagement stage signal.
    pub comment_bonus: u64,
}

impl Default for SynthCorpusParams {
    fn default() -> Self {
        SynthCorpusParams {
            n_videos: 50,
            seed: 7,
            rating_error: 0.2,
            comment_bonus: 40,
        }
    }
}

const AUDIO_STRIDE: f64 = 5.0;
const AUDIO_WINDOW: f64 = 20.0;
const DROPOUT_PASSES: usize = 8;

fn rate_clip(
    clip: &ClipRecord,
    arc_mean: f64,
    error: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<u8> {
    // the "true" polarity a careful worker would report
    let positive = clip.arc_value > arc_mean;
    (0..3)
        .map(|_| {
            let flip = rng.random::<f64>() < error;
            let says_positive = positive != flip;
            if says_positive {
                5 + rng.random_range(0..3) // 5..=7
            } else {
                1 + rng.random_range(0..3) // 1..=3
            }
        })
        .collect()
}

/// Generates a deterministic corpus: per-video series for both modalities,
/// dropout passes for audio, frame activations, metadata with a planted
/// comment effect, and crowd annotations for every extracted clip.
pub fn generate_corpus(params: &SynthCorpusParams) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut videos = Vec::new();
    let mut annotations = Vec::new();

    for i in 0..params.n_videos {
        let family = ArcFamily::ALL[i % 3];
        let video_id = format!("v{i:03}");
        // mostly shorts within the 1800 s cutoff; a few exceed it on purpose
        let duration = if i % 17 == 13 {
            1900.0 + (i as f64) * 10.0
        } else {
            420.0 + ((i * 97) % 1200) as f64
        };
        let visual_len = duration as usize;
        let audio_len = (duration / AUDIO_STRIDE) as usize;

        let visual_values = noisy_instance(family, visual_len, 0.05, &mut rng);
        let visual = SentimentSeries::new(&video_id, Modality::Visual, visual_values, 1.0, 0.0)
            .expect("synthetic visual series is valid");

        let audio_values = noisy_instance(family, audio_len, 0.05, &mut rng);
        let audio = SentimentSeries::new(
            &video_id,
            Modality::Audio,
            audio_values.clone(),
            AUDIO_STRIDE,
            AUDIO_WINDOW,
        )
        .expect("synthetic audio series is valid");

        // dropout spread grows along the video so uncertainty buckets differ
        let passes: Vec<Vec<f64>> = (0..DROPOUT_PASSES)
            .map(|_| {
                audio_values
                    .iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        let sigma = 0.01 + 0.08 * t as f64 / audio_len as f64;
                        (v + sigma * gaussian(&mut rng)).clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect();
        let audio_dropout = DropoutSamples::new(&video_id, Modality::Audio, passes)
            .expect("synthetic dropout matrix is valid");

        let act_rows: Vec<Vec<f64>> = (0..40)
            .map(|t| {
                (0..16)
                    .map(|d| {
                        (i % 3) as f64 * 0.5
                            + (t as f64 * 0.2 + d as f64).sin() * 0.3
                            + 0.05 * gaussian(&mut rng)
                    })
                    .collect()
            })
            .collect();
        let activations =
            ActivationMatrix::new(&video_id, act_rows).expect("synthetic activations are valid");

        let comments = 10
            + ((i * 31) % 7) as u64
            + if family == ArcFamily::FallRise {
                params.comment_bonus
            } else {
                0
            };
        let mut genres = BTreeSet::new();
        genres.insert(
            match family {
                ArcFamily::RiseFallRise => "drama",
                ArcFamily::RiseFall => "comedy",
                ArcFamily::FallRise => "thriller",
            }
            .to_string(),
        );
        if i % 4 == 0 {
            genres.insert("animation".to_string());
        }
        let meta = VideoMeta::new(
            &video_id,
            duration,
            2008 + (i as i32 * 5) % 12,
            comments,
            genres,
            CorpusKind::Shorts,
        )
        .expect("synthetic metadata is valid");

        videos.push(SynthVideo {
            meta,
            family,
            visual,
            audio,
            audio_dropout,
            activations,
        });
    }

    // annotate the clips the pipeline itself would extract
    let extraction = ClipExtractionParams::default();
    for video in &videos {
        let duration = video.meta.duration_seconds;
        let visual_arc = EmotionalArc::from_series(&video.visual)
            .smoothed(0.1)
            .expect("smoothing a valid series");
        let audio_arc = EmotionalArc::from_series(&video.audio)
            .with_band(&video.audio_dropout, 1.0)
            .expect("band shape matches")
            .smoothed(0.1)
            .expect("smoothing a valid series");
        for arc in [&audio_arc, &visual_arc] {
            let (mean, _) = crate::arc::mean_pop_std(&arc.values);
            for clip in extract_clips(arc, duration, &extraction) {
                let ratings = rate_clip(&clip, mean, params.rating_error, &mut rng);
                annotations.push(
                    AnnotationRecord::new(
                        &clip.clip_id,
                        &video.meta.video_id,
                        clip.window.cut,
                        ratings,
                        clip.stddev_at,
                    )
                    .expect("synthetic annotation is valid"),
                );
            }
        }
    }

    SynthCorpus {
        videos,
        annotations,
        seed: params.seed,
    }
}

/// Writes the corpus in the on-disk layout the CLI consumes.
pub fn write_corpus(corpus: &SynthCorpus, dir: impl AsRef<Path>) -> Result<(), IngestError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        context: dir.display().to_string(),
        source,
    })?;
    for video in &corpus.videos {
        let id = &video.meta.video_id;
        ingest::write_series(
            &video.visual,
            dir.join(ingest::series_file_name(id, Modality::Visual)),
        )?;
        ingest::write_series(
            &video.audio,
            dir.join(ingest::series_file_name(id, Modality::Audio)),
        )?;
        ingest::write_dropout(
            &video.audio_dropout,
            dir.join(ingest::dropout_file_name(id, Modality::Audio)),
        )?;
        ingest::write_activations(
            &video.activations,
            dir.join(ingest::activations_file_name(id)),
        )?;
    }
    let metas: Vec<VideoMeta> = corpus.videos.iter().map(|v| v.meta.clone()).collect();
    ingest::write_metadata(&metas, dir.join("metadata.csv"))?;
    ingest::write_annotations(&corpus.annotations, dir.join("annotations.csv"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_hit_their_breakpoints() {
        let t = family_template(ArcFamily::RiseFall, 101);
        assert!((t[0] - 0.15).abs() < 1e-12);
        assert!((t[50] - 0.85).abs() < 1e-12);
        assert!((t[100] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn noisy_instances_stay_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for family in ArcFamily::ALL {
            let v = noisy_instance(family, 300, 0.05, &mut rng);
            assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn planted_corpus_shape_and_determinism() {
        let (series, labels) = planted_family_corpus(30, 300, 0.05, 42);
        assert_eq!(series.len(), 90);
        assert_eq!(labels.len(), 90);
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 30);
        let (again, _) = planted_family_corpus(30, 300, 0.05, 42);
        assert_eq!(series, again);
    }

    #[test]
    fn corpus_generation_is_deterministic() {
        let params = SynthCorpusParams {
            n_videos: 6,
            ..Default::default()
        };
        let a = generate_corpus(&params);
        let b = generate_corpus(&params);
        assert_eq!(a.videos.len(), 6);
        assert!(!a.annotations.is_empty());
        for (va, vb) in a.videos.iter().zip(&b.videos) {
            assert_eq!(va.visual.values, vb.visual.values);
            assert_eq!(va.meta, vb.meta);
        }
        assert_eq!(a.annotations, b.annotations);
    }

    #[test]
    fn corpus_round_trips_through_files() {
        let params = SynthCorpusParams {
            n_videos: 4,
            ..Default::default()
        };
        let corpus = generate_corpus(&params);
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        let back = ingest::load_series(
            dir.path()
                .join(ingest::series_file_name("v000", Modality::Visual)),
        )
        .unwrap();
        assert_eq!(back.values, corpus.videos[0].visual.values);
        let annotations = ingest::load_annotations(dir.path().join("annotations.csv")).unwrap();
        assert_eq!(annotations, corpus.annotations);
        let metas = ingest::load_metadata(dir.path().join("metadata.csv")).unwrap();
        assert_eq!(metas.len(), 4);
    }
}
