//! k-medoids clustering of equal-length z-normalized arcs under banded DTW,
//! with Keogh lower-bound pruning, seeded restarts, and elbow analysis.
//!
//! Cluster labels are canonical: medoid indices are kept sorted ascending,
//! so a given medoid set always produces the same labeling. For a fixed seed
//! the result is identical regardless of how many worker threads run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arc::EmotionalArc;
use crate::tsdist::{
    distance_matrix, dtw, keogh_envelope, lb_keogh_env, CondensedMatrix, DistError,
    DistanceConfig, Envelope, Reach,
};

/// Above this point count the full pairwise matrix is no longer cached and
/// distances are computed on demand behind the lower bound.
const CACHE_LIMIT: usize = 2000;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid k = {k} for {n} arcs")]
    InvalidK { k: usize, n: usize },
    #[error("arc {index} is not z-normalized")]
    UnnormalizedInput { index: usize },
    #[error(transparent)]
    Distance(#[from] DistError),
}

/// Result of one clustering run: the winning restart.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    /// Arc indices of the medoids, sorted ascending; cluster `c` is the
    /// cluster of `medoid_indices[c]`.
    pub medoid_indices: Vec<usize>,
    pub assignments: Vec<usize>,
    /// Sum over all points of the distance to their medoid.
    pub wcd: f64,
    pub config: DistanceConfig,
    pub seed: u64,
    pub iterations_run: usize,
}

/// Best within-cluster distance per k, for reading off an elbow.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowCurve {
    pub entries: Vec<(usize, f64)>,
}

pub(crate) enum DistanceSource<'a> {
    Cached(CondensedMatrix),
    OnDemand {
        series: &'a [Vec<f64>],
        envelopes: Vec<Envelope>,
        reach: usize,
    },
}

impl<'a> DistanceSource<'a> {
    fn build(series: &'a [Vec<f64>], reach: usize, cache_limit: usize) -> Result<Self, DistError> {
        if series.len() <= cache_limit {
            Ok(DistanceSource::Cached(distance_matrix(series, reach)?))
        } else {
            let envelopes = series
                .par_iter()
                .map(|s| keogh_envelope(s, reach))
                .collect();
            Ok(DistanceSource::OnDemand {
                series,
                envelopes,
                reach,
            })
        }
    }

    fn exact(&self, i: usize, j: usize) -> f64 {
        match self {
            DistanceSource::Cached(m) => m.get(i, j),
            DistanceSource::OnDemand { series, reach, .. } => {
                if i == j {
                    0.0
                } else {
                    dtw(&series[i], &series[j], Reach::Band(*reach))
                        .expect("equal lengths checked at entry")
                }
            }
        }
    }

    /// Nearest medoid for point `i`, ties to the lowest medoid index.
    /// In on-demand mode candidates are skipped once the two-sided lower
    /// bound reaches the best distance found so far; a skip can never hide
    /// a strictly better medoid.
    fn nearest(&self, i: usize, medoids: &[usize]) -> (usize, f64) {
        let mut best_cluster = 0;
        let mut best = f64::INFINITY;
        for (c, &m) in medoids.iter().enumerate() {
            if m == i {
                return (c, 0.0);
            }
            match self {
                DistanceSource::Cached(mat) => {
                    let d = mat.get(i, m);
                    if d < best {
                        best = d;
                        best_cluster = c;
                    }
                }
                DistanceSource::OnDemand {
                    series,
                    envelopes,
                    reach,
                } => {
                    let lb = lb_keogh_env(&envelopes[i], &series[m])
                        .max(lb_keogh_env(&envelopes[m], &series[i]));
                    if lb >= best {
                        continue;
                    }
                    let d = dtw(&series[i], &series[m], Reach::Band(*reach))
                        .expect("equal lengths checked at entry");
                    if d < best {
                        best = d;
                        best_cluster = c;
                    }
                }
            }
        }
        (best_cluster, best)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Restart {
    pub medoids: Vec<usize>,
    pub assignments: Vec<usize>,
    pub wcd: f64,
    pub iterations: usize,
    /// Within-cluster distance after every assignment and update phase;
    /// non-increasing by construction.
    pub wcd_trace: Vec<f64>,
}

fn assign_all(src: &DistanceSource, n: usize, medoids: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let pairs: Vec<(usize, f64)> = (0..n)
        .into_par_iter()
        .map(|i| src.nearest(i, medoids))
        .collect();
    let mut assignments = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for (c, d) in pairs {
        assignments.push(c);
        dists.push(d);
    }
    (assignments, dists)
}

/// One seeded-restart run of the alternating assign/update loop.
pub(crate) fn run_restart(
    src: &DistanceSource,
    n: usize,
    init_medoids: Vec<usize>,
    max_iter: usize,
) -> Restart {
    let k = init_medoids.len();
    let mut medoids = init_medoids;
    medoids.sort_unstable();
    let mut prev_assignments: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut assignments = vec![0; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;

    for iter in 1..=max_iter {
        iterations = iter;
        let (a, d) = assign_all(src, n, &medoids);
        assignments = a;
        dists = d;

        // Reseed any empty cluster with the point farthest from its medoid,
        // then reassign; each round gives the empty cluster a member, so
        // this settles in at most k rounds.
        loop {
            let mut counts = vec![0usize; k];
            for &c in &assignments {
                counts[c] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let farthest = (0..n)
                .filter(|i| !medoids.contains(i))
                .max_by(|&p, &q| {
                    dists[p]
                        .partial_cmp(&dists[q])
                        .unwrap()
                        .then(q.cmp(&p)) // ties to the lowest index
                })
                .expect("k <= n leaves a non-medoid point");
            medoids[empty] = farthest;
            medoids.sort_unstable();
            let (a, d) = assign_all(src, n, &medoids);
            assignments = a;
            dists = d;
        }
        trace.push(dists.iter().sum());

        if prev_assignments.as_ref() == Some(&assignments) {
            break;
        }
        prev_assignments = Some(assignments.clone());

        // Update: each cluster's medoid becomes the member minimizing the
        // total intra-cluster distance, ties to the lowest index.
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &c) in assignments.iter().enumerate() {
            members[c].push(i);
        }
        let updated: Vec<(usize, f64)> = members
            .par_iter()
            .map(|cluster| {
                let mut best = (usize::MAX, f64::INFINITY);
                for &cand in cluster {
                    let sum: f64 = cluster.iter().map(|&m| src.exact(cand, m)).sum();
                    if sum < best.1 {
                        best = (cand, sum);
                    }
                }
                best
            })
            .collect();
        medoids = updated.iter().map(|&(m, _)| m).collect();
        medoids.sort_unstable();
        trace.push(updated.iter().map(|&(_, s)| s).sum());
    }

    // each assignment and each update phase is a descent step
    debug_assert!(
        trace.windows(2).all(|w| w[1] <= w[0] + 1e-9),
        "within-cluster distance increased: {trace:?}"
    );

    // Final labels follow the sorted medoid order; recompute the exact wcd
    // so the reported value never depends on the pruning path.
    let wcd = assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| src.exact(i, medoids[c]))
        .sum();
    Restart {
        medoids,
        assignments,
        wcd,
        iterations,
        wcd_trace: trace,
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

fn check_arcs(arcs: &[EmotionalArc], k: usize) -> Result<Vec<Vec<f64>>, ClusterError> {
    let n = arcs.len();
    if k < 1 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    let len = arcs[0].len();
    for (i, arc) in arcs.iter().enumerate() {
        if !arc.znormed {
            return Err(ClusterError::UnnormalizedInput { index: i });
        }
        if arc.len() != len {
            return Err(ClusterError::Distance(DistError::LengthMismatch {
                a: len,
                b: arc.len(),
            }));
        }
    }
    Ok(arcs.iter().map(|a| a.values.clone()).collect())
}

/// k-medoids over z-normalized, equal-length arcs: `n_init` seeded restarts
/// of alternating assignment and medoid update, keeping the restart with the
/// lowest within-cluster distance.
pub fn kmedoids(
    arcs: &[EmotionalArc],
    k: usize,
    config: &DistanceConfig,
    seed: u64,
    n_init: usize,
    max_iter: usize,
) -> Result<ClusterModel, ClusterError> {
    let values = check_arcs(arcs, k)?;
    kmedoids_values(&values, k, config, seed, n_init, max_iter, CACHE_LIMIT)
}

/// Same as [`kmedoids`] but on raw value rows, with a caller-chosen cache
/// threshold; `cache_limit = 0` forces on-demand pruned distances.
pub(crate) fn kmedoids_values(
    values: &[Vec<f64>],
    k: usize,
    config: &DistanceConfig,
    seed: u64,
    n_init: usize,
    max_iter: usize,
    cache_limit: usize,
) -> Result<ClusterModel, ClusterError> {
    assert!(n_init >= 1 && max_iter >= 1);
    let n = values.len();
    if k < 1 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    let reach = config.reach();
    let src = DistanceSource::build(values, reach, cache_limit)?;

    let best = (0..n_init)
        .into_par_iter()
        .map(|restart| {
            let mut rng = restart_rng(seed, restart);
            let init = sample_distinct(&mut rng, n, k);
            (restart, run_restart(&src, n, init, max_iter))
        })
        .reduce_with(|a, b| {
            // lowest wcd wins; ties break to the earliest restart so the
            // outcome is independent of scheduling
            if (b.1.wcd, b.0) < (a.1.wcd, a.0) {
                b
            } else {
                a
            }
        })
        .expect("n_init >= 1");

    let restart = best.1;
    Ok(ClusterModel {
        k,
        medoid_indices: restart.medoids,
        assignments: restart.assignments,
        wcd: restart.wcd,
        config: *config,
        seed,
        iterations_run: restart.iterations,
    })
}

/// Within-cluster distance for each k in the inclusive range, best over
/// restarts, clustering every k with the same seed.
pub fn elbow(
    arcs: &[EmotionalArc],
    k_range: std::ops::RangeInclusive<usize>,
    config: &DistanceConfig,
    seed: u64,
    n_init: usize,
    max_iter: usize,
) -> Result<ElbowCurve, ClusterError> {
    let mut entries = Vec::new();
    for k in k_range {
        let model = kmedoids(arcs, k, config, seed, n_init, max_iter)?;
        entries.push((k, model.wcd));
    }
    Ok(ElbowCurve { entries })
}

/// Cluster id of the nearest medoid for a new arc, ties to the lowest
/// medoid index.
pub fn assign(
    arc: &EmotionalArc,
    model: &ClusterModel,
    arcs: &[EmotionalArc],
) -> Result<usize, ClusterError> {
    if !arc.znormed {
        return Err(ClusterError::UnnormalizedInput { index: usize::MAX });
    }
    let reach = model.config.reach();
    let mut best = f64::INFINITY;
    let mut best_cluster = 0;
    for (c, &m) in model.medoid_indices.iter().enumerate() {
        let d = dtw(&arc.values, &arcs[m].values, Reach::Band(reach))?;
        if d < best {
            best = d;
            best_cluster = c;
        }
    }
    Ok(best_cluster)
}

/// Adjusted Rand index between two labelings of the same points; 1.0 for
/// identical partitions, about 0.0 for independent ones.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let sum_cells: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = row_sums.iter().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = col_sums.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_cells - expected) / (max_index - expected)
}

/// JSON sidecar written next to every cluster assignment file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClusterSidecar {
    pub k: usize,
    pub seed: u64,
    pub wcd: f64,
    pub medoid_video_ids: Vec<String>,
    pub reach_fraction: f64,
    pub resample_length: usize,
}

impl ClusterSidecar {
    pub fn from_model(model: &ClusterModel, video_ids: &[String]) -> Self {
        ClusterSidecar {
            k: model.k,
            seed: model.seed,
            wcd: model.wcd,
            medoid_video_ids: model
                .medoid_indices
                .iter()
                .map(|&i| video_ids[i].clone())
                .collect(),
            reach_fraction: model.config.reach_fraction,
            resample_length: model.config.resample_length,
        }
    }
}

/// Renders `video_id,cluster_id` rows in input order.
pub fn render_assignments(video_ids: &[String], model: &ClusterModel) -> String {
    let mut out = String::new();
    for (id, &c) in video_ids.iter().zip(&model.assignments) {
        out.push_str(&format!("{id},{c}\n"));
    }
    out
}

/// Parses `video_id,cluster_id` rows, skipping comment lines.
pub fn parse_assignments(text: &str) -> Result<Vec<(String, usize)>, String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (id, c) = trimmed
            .split_once(',')
            .ok_or_else(|| format!("bad assignment row `{trimmed}`"))?;
        let c: usize = c
            .trim()
            .parse()
            .map_err(|_| format!("bad cluster id in `{trimmed}`"))?;
        out.push((id.to_string(), c));
    }
    Ok(out)
}

/// Renders `k,wcd` rows.
pub fn render_elbow(curve: &ElbowCurve) -> String {
    let mut out = String::from("k,wcd\n");
    for (k, wcd) in &curve.entries {
        out.push_str(&format!("{k},{wcd}\n"));
    }
    out
}
