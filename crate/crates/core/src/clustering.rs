//! Final cluster assignment: row normalization followed by restarted k-means.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MmcError, Result};
use crate::linalg::OrthonormalFactor;

const MAX_LLOYD_ITERS: usize = 300;

/// Cluster ids `0..c` for `n` instances.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    /// Checks that every label is below `c`.
    pub fn new(labels: Vec<usize>, c: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(MmcError::OutOfRange {
                what: "cluster labels",
                index: bad,
                len: c,
            });
        }
        Ok(LabelVector(labels))
    }

    /// Accepts any labels; the cluster count is taken as `max + 1`.
    pub fn from_raw(labels: Vec<usize>) -> Self {
        LabelVector(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl std::ops::Index<usize> for LabelVector {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// Settings for [`assign_clusters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub row_normalize: bool,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            row_normalize: true,
            restarts: 20,
            seed: 0,
        }
    }
}

/// Scales each row to unit Euclidean norm. Zero rows are left unchanged and
/// counted in the second return value.
pub fn row_normalize(points: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let mut out = points.clone();
    let mut zero_rows = 0;
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        } else {
            zero_rows += 1;
        }
    }
    if zero_rows > 0 {
        log::warn!("{zero_rows} zero rows left unnormalized");
    }
    (out, zero_rows)
}

/// Outcome of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: LabelVector,
    pub inertia: f64,
    /// Index of the winning restart.
    pub best_restart: usize,
    /// Inertia of every restart, in restart order.
    pub restart_inertias: Vec<f64>,
}

fn sq_dist(points: &DMatrix<f64>, a: usize, center: &[f64]) -> f64 {
    points
        .row(a)
        .iter()
        .zip(center)
        .map(|(x, c)| (x - c) * (x - c))
        .sum()
}

/// Derives per-restart seeds up front so restarts can run in any order.
pub(crate) fn restart_seeds(seed: u64, restarts: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..restarts).map(|_| rng.random()).collect()
}

/// k-means++ seeding: first center uniform, the rest by squared-distance sampling.
fn plus_plus_centers(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.nrows();
    let row = |a: usize| points.row(a).iter().copied().collect::<Vec<f64>>();
    let mut centers = vec![row(rng.random_range(0..n))];
    let mut best: Vec<f64> = (0..n).map(|a| sq_dist(points, a, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (a, d) in best.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = a;
                    break;
                }
            }
            if best[chosen] == 0.0 {
                // accumulated rounding landed on a coincident point
                chosen = best.iter().rposition(|d| *d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(next);
        for (a, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points, a, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(points: &DMatrix<f64>, centers: &[Vec<f64>], labels: &mut [usize]) -> (f64, bool) {
    let mut inertia = 0.0;
    let mut changed = false;
    for (a, label) in labels.iter_mut().enumerate() {
        let (best, d) = centers
            .iter()
            .enumerate()
            .map(|(j, c)| (j, sq_dist(points, a, c)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if *label != best {
            *label = best;
            changed = true;
        }
        inertia += d;
    }
    (inertia, changed)
}

fn recompute_centers(points: &DMatrix<f64>, labels: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    let d = points.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (a, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(points.row(a).iter()) {
            *s += x;
        }
    }
    for (s, &cnt) in sums.iter_mut().zip(&counts) {
        if cnt > 0 {
            s.iter_mut().for_each(|v| *v /= cnt as f64);
        }
    }
    // empty clusters take the point farthest from its own centroid
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let far = (0..points.nrows())
            .filter(|&a| counts[labels[a]] > 1)
            .map(|a| (a, sq_dist(points, a, &sums[labels[a]])))
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(b) if b.1 >= x.1 => Some(b),
                _ => Some(x),
            });
        if let Some((a, _)) = far {
            let old = labels[a];
            counts[old] -= 1;
            counts[empty] = 1;
            labels[a] = empty;
            sums[empty] = points.row(a).iter().copied().collect();
            // recompute the donor centroid without the moved point
            let mut fresh = vec![0.0; d];
            for (p, &l) in labels.iter().enumerate() {
                if l == old {
                    for (s, x) in fresh.iter_mut().zip(points.row(p).iter()) {
                        *s += x;
                    }
                }
            }
            fresh.iter_mut().for_each(|v| *v /= counts[old] as f64);
            sums[old] = fresh;
        }
    }
    sums
}

fn inertia_of(points: &DMatrix<f64>, centers: &[Vec<f64>], labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(a, &l)| sq_dist(points, a, &centers[l]))
        .sum()
}

/// One Lloyd run from k-means++ seeding. Returns labels, final inertia, and
/// the inertia after every iteration.
pub(crate) fn lloyd(points: &DMatrix<f64>, k: usize, seed: u64) -> (Vec<usize>, f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_centers(points, k, &mut rng);
    let mut labels = vec![usize::MAX; points.nrows()];
    let mut history = Vec::new();
    let (mut inertia, _) = assign(points, &centers, &mut labels);
    history.push(inertia);
    for _ in 0..MAX_LLOYD_ITERS {
        centers = recompute_centers(points, &mut labels, k);
        let after_update = inertia_of(points, &centers, &labels);
        let (next, changed) = assign(points, &centers, &mut labels);
        debug_assert!(next <= after_update + 1e-10);
        inertia = next;
        history.push(inertia);
        if !changed {
            break;
        }
    }
    (labels, inertia, history)
}

/// Lloyd's algorithm with k-means++ seeding, restarted `restarts` times; the
/// labeling with the smallest inertia wins (earliest restart on ties).
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(MmcError::Dimension(format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    if restarts == 0 {
        return Err(MmcError::InvalidConfig("k-means restarts must be >= 1".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(MmcError::NonFinite("k-means input"));
    }
    let runs: Vec<(Vec<usize>, f64)> = restart_seeds(seed, restarts)
        .into_par_iter()
        .map(|s| {
            let (labels, inertia, _) = lloyd(points, k, s);
            (labels, inertia)
        })
        .collect();
    let mut best_restart = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.1 < runs[best_restart].1 {
            best_restart = i;
        }
    }
    let restart_inertias = runs.iter().map(|r| r.1).collect();
    let (labels, inertia) = runs.into_iter().nth(best_restart).expect("restarts >= 1");
    Ok(KMeansResult {
        labels: LabelVector(labels),
        inertia,
        best_restart,
        restart_inertias,
    })
}

/// Labels a consensus factor: optional row normalization, then restarted k-means.
pub fn assign_clusters(
    factor: &OrthonormalFactor,
    c: usize,
    options: &ClusterOptions,
) -> Result<KMeansResult> {
    let points = if options.row_normalize {
        row_normalize(factor.values()).0
    } else {
        factor.values().clone()
    };
    kmeans(&points, c, options.restarts, options.seed)
}
