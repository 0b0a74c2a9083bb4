//! k-means clustering of trust-dynamics features.
//!
//! Features are z-scored per dimension before clustering. Seeding is
//! distance-weighted (k-means++) from a ChaCha8 stream, the best of several
//! restarts by SSE is kept, and the k sweep reports SSE and mean silhouette
//! for each candidate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archetype::Archetype;
use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub const DEFAULT_RESTARTS: usize = 10;
const MAX_LLOYD_ITERATIONS: usize = 300;

fn dist2(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Per-dimension mean and standard deviation used for z-scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Point,
    pub sd: Point,
}

impl Standardization {
    pub fn fit(points: &[Point]) -> Self {
        let n = points.len().max(1) as f64;
        let mut mean = [0.0; 2];
        let mut sd = [0.0; 2];
        for d in 0..2 {
            mean[d] = points.iter().map(|p| p[d]).sum::<f64>() / n;
            let var = points.iter().map(|p| (p[d] - mean[d]).powi(2)).sum::<f64>() / n;
            // a constant column carries no information; leave it centered
            sd[d] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardization { mean, sd }
    }

    pub fn apply(&self, p: &Point) -> Point {
        [(p[0] - self.mean[0]) / self.sd[0], (p[1] - self.mean[1]) / self.sd[1]]
    }

    pub fn invert(&self, z: &Point) -> Point {
        [z[0] * self.sd[0] + self.mean[0], z[1] * self.sd[1] + self.mean[1]]
    }
}

pub fn standardize(points: &[Point]) -> (Vec<Point>, Standardization) {
    let s = Standardization::fit(points);
    (points.iter().map(|p| s.apply(p)).collect(), s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Point>,
    pub sse: f64,
    pub iterations: usize,
}

fn nearest(p: &Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn sse(points: &[Point], assignments: &[usize], centroids: &[Point]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| dist2(p, &centroids[a]))
        .sum()
}

/// Lloyd's iteration from the given centroids until assignments stop
/// changing.
pub fn lloyd(points: &[Point], init: Vec<Point>) -> KMeansResult {
    let k = init.len();
    let mut centroids = init;
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| counts[assignments[*i]] > 1)
                    .max_by(|(i, p), (j, q)| {
                        dist2(p, &centroids[assignments[*i]])
                            .total_cmp(&dist2(q, &centroids[assignments[*j]]))
                    })
                    .map(|(i, _)| i);
                if let Some(i) = far {
                    counts[assignments[i]] -= 1;
                    assignments[i] = c;
                    counts[c] = 1;
                    centroids[c] = points[i];
                }
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let sse = sse(points, &assignments, &centroids);
    KMeansResult {
        assignments,
        centroids,
        sse,
        iterations,
    }
}

fn seed_plus_plus(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Best-of-`restarts` k-means; deterministic for a given seed.
pub fn kmeans(points: &[Point], k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, seed_plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette; points in singleton clusters score 0.
pub fn silhouette(points: &[Point], assignments: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n == 0 || k < 2 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += dist2(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KDiagnostic {
    pub k: usize,
    pub sse: f64,
    pub silhouette: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    /// The k with the highest mean silhouette.
    pub k: usize,
    pub diagnostics: Vec<KDiagnostic>,
    pub runs: Vec<KMeansResult>,
}

/// Sweeps `k_range` (capped at `n - 1`, where silhouettes are defined).
///
/// Besides the random restarts, each k also starts once from the previous
/// k's centroids plus the worst-fit point, which keeps SSE non-increasing
/// across the sweep.
pub fn select_k(
    points: &[Point],
    k_range: std::ops::RangeInclusive<usize>,
    seed: u64,
    restarts: usize,
) -> Result<KSelection> {
    let lo = (*k_range.start()).max(2);
    let hi = (*k_range.end()).min(points.len().saturating_sub(1));
    if lo > hi {
        return Err(Error::invalid(format!(
            "{} points are not enough to compare k in {k_range:?}",
            points.len()
        )));
    }
    let mut diagnostics = Vec::new();
    let mut runs: Vec<KMeansResult> = Vec::new();
    let mut prev: Option<KMeansResult> = if lo > 1 {
        Some(kmeans(points, lo - 1, seed, restarts)?)
    } else {
        None
    };
    for k in lo..=hi {
        let mut run = kmeans(points, k, seed.wrapping_add(k as u64), restarts)?;
        if let Some(p) = &prev {
            let worst = points
                .iter()
                .zip(&p.assignments)
                .max_by(|(a, ca), (b, cb)| {
                    dist2(a, &p.centroids[**ca]).total_cmp(&dist2(b, &p.centroids[**cb]))
                })
                .map(|(pt, _)| *pt)
                .expect("nonempty");
            let mut init = p.centroids.clone();
            init.push(worst);
            let warm = lloyd(points, init);
            if warm.sse < run.sse {
                run = warm;
            }
        }
        diagnostics.push(KDiagnostic {
            k,
            sse: run.sse,
            silhouette: silhouette(points, &run.assignments, k),
        });
        prev = Some(run.clone());
        runs.push(run);
    }
    let best = diagnostics
        .iter()
        .fold(None::<&KDiagnostic>, |acc, d| match acc {
            Some(b) if b.silhouette >= d.silhouette => Some(b),
            _ => Some(d),
        })
        .expect("nonempty sweep");
    Ok(KSelection {
        k: best.k,
        diagnostics,
        runs,
    })
}

/// Maps three raw-space centroids `(e_rms, mean_log_trust)` onto archetypes:
/// the highest prediction error is the oscillator cluster; of the other two,
/// higher trust is the Bayesian decision maker cluster.
pub fn label_clusters(centroids: &[Point]) -> Result<Vec<Archetype>> {
    if centroids.len() != 3 {
        return Err(Error::Labeling(format!(
            "archetype labels need exactly 3 clusters, got {}",
            centroids.len()
        )));
    }
    let mut by_err: Vec<usize> = (0..3).collect();
    by_err.sort_by(|&a, &b| centroids[b][0].total_cmp(&centroids[a][0]));
    let osc = by_err[0];
    if centroids[osc][0] == centroids[by_err[1]][0] {
        return Err(Error::Labeling(format!(
            "clusters {osc} and {} tie on prediction error",
            by_err[1]
        )));
    }
    let (x, y) = (by_err[1], by_err[2]);
    if centroids[x][1] == centroids[y][1] {
        return Err(Error::Labeling(format!("clusters {x} and {y} tie on mean log trust")));
    }
    let (bayes, disb) = if centroids[x][1] > centroids[y][1] {
        (x, y)
    } else {
        (y, x)
    };
    let mut labels = [Archetype::Oscillator; 3];
    labels[bayes] = Archetype::BayesianDecisionMaker;
    labels[disb] = Archetype::Disbeliever;
    Ok(labels.to_vec())
}
