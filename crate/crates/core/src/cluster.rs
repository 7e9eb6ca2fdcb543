//! K-means with k-means++ seeding, silhouette scoring, automatic K selection
//! and the per-device strategy sweep.
//!
//! Labels are 0-based in memory (`0..k`); reports written to disk add 1.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::{featurize_all, segment, FeatureScaler};
use crate::router::{route, DeviceClass, RoutingConfig};
use crate::seed::sub_seed;
use crate::trace::{format_value, DeviceTraceSet};

pub const DEFAULT_CANDIDATES: [usize; 7] = [2, 3, 4, 5, 6, 8, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub candidate_ks: Vec<usize>,
    pub max_k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            candidate_ks: DEFAULT_CANDIDATES.to_vec(),
            max_k: 10,
            max_iter: 300,
            tol: 1e-4,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_ks.is_empty() || self.candidate_ks.contains(&0) {
            return Err(CoreError::Config("candidate K values must be >= 1".into()));
        }
        if let Some(k) = self.candidate_ks.iter().find(|&&k| k > self.max_k) {
            return Err(CoreError::Config(format!(
                "candidate K={k} exceeds max_k={}",
                self.max_k
            )));
        }
        if self.max_iter == 0 {
            return Err(CoreError::Config("max_iter must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(CoreError::Config("tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroids at the returned state.
    pub inertia: f64,
    /// Objective after every assignment step, final step included.
    pub inertia_history: Vec<f64>,
    /// Set when the clustering was fitted on standardized segment features.
    pub scaler: Option<FeatureScaler>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Index of the nearest centroid, lowest index on ties.
    pub fn nearest(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }

    /// Featurizes raw segments, scales them with the fitted scaler and
    /// assigns each to its nearest centroid.
    pub fn assign_raw<S: AsRef<[f64]>>(&self, segments: &[S]) -> Result<Vec<usize>> {
        let scaler = self.scaler.as_ref().ok_or_else(|| {
            CoreError::Config("clustering has no feature scaler attached".into())
        })?;
        let feats = featurize_all(segments)?;
        Ok(feats
            .iter()
            .map(|f| self.nearest(&scaler.apply(f.as_slice())))
            .collect())
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize> {
    let d = points.first().map_or(0, |p| p.as_ref().len());
    if points.iter().any(|p| p.as_ref().len() != d) {
        return Err(CoreError::Shape("points differ in dimension".into()));
    }
    if points.iter().any(|p| p.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(CoreError::Shape("points contain non-finite values".into()));
    }
    Ok(d)
}

fn kmeans_pp<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_ref(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            // Rounding can walk past the end; fall back to the last
            // positive-weight point.
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&w| w > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].as_ref().to_vec();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign<P: AsRef<[f64]>>(points: &[P], centroids: &[Vec<f64>], labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (l, p) in labels.iter_mut().zip(points) {
        let (k, d) = nearest(centroids, p.as_ref());
        *l = k;
        inertia += d;
    }
    inertia
}

/// Lloyd's algorithm from a k-means++ start.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], k: usize, cfg: &ClusterConfig) -> Result<Clustering> {
    kmeans_seeded(points, k, cfg.max_iter, cfg.tol, cfg.seed)
}

pub fn kmeans_seeded<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<Clustering> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(CoreError::InfeasibleK { k, points: n });
    }
    let d = check_points(points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();

    for _ in 0..max_iter.max(1) {
        history.push(assign(points, &centroids, &mut labels));

        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        // Empty clusters take over the point farthest from its centroid,
        // drawn from clusters that can spare one.
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .map(|i| (i, sq_dist(points[i].as_ref(), &centroids[labels[i]])))
                .fold(None, |best: Option<(usize, f64)>, (i, dist)| match best {
                    Some((_, bd)) if bd >= dist => best,
                    _ => Some((i, dist)),
                });
            if let Some((i, _)) = far {
                counts[labels[i]] -= 1;
                labels[i] = empty;
                counts[empty] = 1;
            }
        }

        let mut next = vec![vec![0.0; d]; k];
        for (l, p) in labels.iter().zip(points) {
            for (acc, v) in next[*l].iter_mut().zip(p.as_ref()) {
                *acc += v;
            }
        }
        let mut shift: f64 = 0.0;
        for (c, (sum, &cnt)) in centroids.iter_mut().zip(next.iter_mut().zip(&counts)) {
            if cnt == 0 {
                continue;
            }
            for v in sum.iter_mut() {
                *v /= cnt as f64;
            }
            shift = shift.max(sq_dist(c, sum).sqrt());
            std::mem::swap(c, sum);
        }
        if shift < tol {
            break;
        }
    }
    let inertia = assign(points, &centroids, &mut labels);
    history.push(inertia);
    Ok(Clustering {
        k,
        centroids,
        assignments: labels,
        inertia,
        inertia_history: history,
        scaler: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub mean: f64,
    pub per_point: Vec<f64>,
}

/// Mean silhouette by brute-force pairwise Euclidean distances.
///
/// Singletons score 0, as do points with `a = b = 0`. Clusters without
/// members are ignored; fewer than two populated clusters is an error.
pub fn silhouette<P: AsRef<[f64]>>(points: &[P], assignments: &[usize]) -> Result<Silhouette> {
    if points.len() != assignments.len() {
        return Err(CoreError::Shape(format!(
            "{} points but {} labels",
            points.len(),
            assignments.len()
        )));
    }
    check_points(points)?;
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(CoreError::UndefinedSilhouette(
            "fewer than two populated clusters".into(),
        ));
    }
    let n = points.len();
    let mut sums = vec![0.0; k];
    let per_point: Vec<f64> = (0..n)
        .map(|i| {
            sums.iter_mut().for_each(|s| *s = 0.0);
            for j in 0..n {
                if j != i {
                    sums[assignments[j]] += sq_dist(points[i].as_ref(), points[j].as_ref()).sqrt();
                }
            }
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    let mean = per_point.iter().sum::<f64>() / n as f64;
    Ok(Silhouette { mean, per_point })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    /// Silhouette for every candidate that survived filtering, in K order.
    pub silhouettes: Vec<(usize, f64)>,
    pub best_silhouette: Option<f64>,
    pub clustering: Clustering,
}

/// Runs k-means for every candidate with `2K <= n` and keeps the best mean
/// silhouette (smallest K on ties). Falls back to a single cluster when no
/// candidate survives.
pub fn select_k<P: AsRef<[f64]>>(points: &[P], cfg: &ClusterConfig) -> Result<KSelection> {
    cfg.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(CoreError::NoData("no points to cluster".into()));
    }
    let mut candidates: Vec<usize> = cfg
        .candidate_ks
        .iter()
        .copied()
        .filter(|&k| k >= 2 && 2 * k <= n)
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    let mut silhouettes = Vec::new();
    let mut best: Option<(f64, Clustering)> = None;
    for k in candidates {
        let c = kmeans_seeded(points, k, cfg.max_iter, cfg.tol, sub_seed(cfg.seed, "kmeans", k as u64))?;
        let s = match silhouette(points, &c.assignments) {
            Ok(s) => s.mean,
            Err(CoreError::UndefinedSilhouette(_)) => continue,
            Err(e) => return Err(e),
        };
        silhouettes.push((k, s));
        if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
            best = Some((s, c));
        }
    }
    match best {
        Some((s, clustering)) => Ok(KSelection {
            k: clustering.k,
            silhouettes,
            best_silhouette: Some(s),
            clustering,
        }),
        None => {
            let clustering = kmeans_seeded(points, 1, cfg.max_iter, cfg.tol, sub_seed(cfg.seed, "kmeans", 1))?;
            Ok(KSelection {
                k: 1,
                silhouettes,
                best_silhouette: None,
                clustering,
            })
        }
    }
}

/// Featurizes raw segments, standardizes the features and runs [`select_k`].
/// The returned clustering carries the fitted scaler.
pub fn cluster_segments<S: AsRef<[f64]>>(segments: &[S], cfg: &ClusterConfig) -> Result<KSelection> {
    if segments.len() < 2 {
        return Err(CoreError::InsufficientData(format!(
            "clustering needs at least 2 segments, got {}",
            segments.len()
        )));
    }
    let feats = featurize_all(segments)?;
    let scaler = FeatureScaler::fit(&feats)?;
    let scaled = scaler.apply_all(&feats);
    let mut sel = select_k(&scaled, cfg)?;
    sel.clustering.scaler = Some(scaler);
    Ok(sel)
}

/// Label 0 for all-zero segments, 1 for the rest.
pub fn continuous_split<S: AsRef<[f64]>>(segments: &[S]) -> Vec<usize> {
    segments
        .iter()
        .map(|s| usize::from(s.as_ref().iter().any(|&v| v != 0.0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ContinuousSplit,
    Kmeans,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ContinuousSplit => "continuous_split",
            Strategy::Kmeans => "kmeans",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub device: String,
    pub detected_type: DeviceClass,
    pub strategy: Strategy,
    pub k: usize,
    pub silhouette: Option<f64>,
    /// Silhouette of every evaluated option: the split (K=2) first when
    /// defined, then each k-means candidate.
    pub curve: Vec<(Strategy, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: [&str; 5] = ["device", "detected_type", "strategy", "k", "silhouette"];

impl SweepReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| CoreError::Format(format!("csv write failed: {e}"));
        out.write_record(SWEEP_HEADER).map_err(err)?;
        for r in &self.rows {
            out.write_record([
                r.device.clone(),
                r.detected_type.to_string(),
                r.strategy.as_str().to_string(),
                r.k.to_string(),
                r.silhouette.map(format_value).unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        out.flush().map_err(|e| CoreError::Format(e.to_string()))?;
        Ok(())
    }
}

/// Compares the zero/nonzero split with every k-means candidate per device.
/// The split wins only with a strictly higher silhouette.
pub fn sweep_device(
    device: &str,
    x: &[f64],
    segment_len: usize,
    routing: &RoutingConfig,
    cfg: &ClusterConfig,
) -> Result<SweepRow> {
    let (_, class) = route(x, routing)?;
    let segs: Vec<Vec<f64>> = segment(x, segment_len, device)?
        .into_iter()
        .map(|s| s.values)
        .collect();
    let sel = cluster_segments(&segs, cfg)?;
    let scaler = sel.clustering.scaler.as_ref().expect("attached by cluster_segments");
    let scaled = scaler.apply_all(&featurize_all(&segs)?);
    let split_score = silhouette(&scaled, &continuous_split(&segs)).ok().map(|s| s.mean);

    let mut curve = Vec::new();
    if let Some(s) = split_score {
        curve.push((Strategy::ContinuousSplit, 2, s));
    }
    curve.extend(sel.silhouettes.iter().map(|&(k, s)| (Strategy::Kmeans, k, s)));

    let split_wins = match (split_score, sel.best_silhouette) {
        (Some(s), Some(b)) => s > b,
        (Some(_), None) => true,
        _ => false,
    };
    let (strategy, k, silhouette) = if split_wins {
        (Strategy::ContinuousSplit, 2, split_score)
    } else {
        (Strategy::Kmeans, sel.k, sel.best_silhouette)
    };
    Ok(SweepRow {
        device: device.to_string(),
        detected_type: class,
        strategy,
        k,
        silhouette,
        curve,
    })
}

pub fn strategy_sweep(
    set: &DeviceTraceSet,
    segment_len: usize,
    routing: &RoutingConfig,
    cfg: &ClusterConfig,
) -> Result<SweepReport> {
    if set.is_empty() {
        return Err(CoreError::NoData("sweep needs at least one device".into()));
    }
    let rows = set
        .iter()
        .map(|t| sweep_device(t.device_id(), t.samples(), segment_len, routing, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ClusterConfig {
        ClusterConfig::default()
    }

    #[test]
    fn separable_pairs_are_exact() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![5.0, 5.0], vec![5.0, 5.0]];
        let c = kmeans(&pts, 2, &cfg()).unwrap();
        assert_eq!(c.inertia, 0.0);
        let mut cents = c.centroids.clone();
        cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cents, vec![vec![0.0, 0.0], vec![5.0, 5.0]]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![1.0], vec![2.0], vec![6.0]];
        let c = kmeans(&pts, 1, &cfg()).unwrap();
        assert_eq!(c.centroids, vec![vec![3.0]]);
        // Population variance 14/3 times N = 3.
        assert!((c.inertia - 14.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters_is_infeasible() {
        let pts = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            kmeans(&pts, 3, &cfg()),
            Err(CoreError::InfeasibleK { k: 3, points: 2 })
        ));
    }

    #[test]
    fn coincident_points_are_handled() {
        // Every centroid coincides, so ties send all points to cluster 0.
        let pts = vec![vec![1.0]; 6];
        let c = kmeans(&pts, 3, &cfg()).unwrap();
        assert_eq!(c.inertia, 0.0);
        assert_eq!(c.sizes(), vec![6, 0, 0]);
    }

    #[test]
    fn silhouette_degenerate_conventions() {
        let pts = vec![vec![2.0]; 4];
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert_eq!(s.mean, 0.0);
        let s = silhouette(&[vec![0.0], vec![1.0], vec![10.0]], &[0, 0, 1]).unwrap();
        assert_eq!(s.per_point[2], 0.0);
        assert!(matches!(
            silhouette(&pts, &[0, 0, 0, 0]),
            Err(CoreError::UndefinedSilhouette(_))
        ));
    }

    #[test]
    fn well_separated_silhouette_is_high() {
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![if i < 5 { 0.0 } else { 100.0 } + i as f64 * 0.01])
            .collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        assert!(silhouette(&pts, &labels).unwrap().mean > 0.9);
    }

    #[test]
    fn select_k_falls_back_to_one_cluster() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let sel = select_k(&pts, &cfg()).unwrap();
        assert_eq!(sel.k, 1);
        assert!(sel.best_silhouette.is_none());
        assert!(matches!(
            select_k(&Vec::<Vec<f64>>::new(), &cfg()),
            Err(CoreError::NoData(_))
        ));
    }

    #[test]
    fn split_groups_zero_segments() {
        let segs = vec![vec![0.0; 4], vec![0.0, 1.0, 0.0, 0.0], vec![0.0; 4]];
        assert_eq!(continuous_split(&segs), vec![0, 1, 0]);
    }
}
