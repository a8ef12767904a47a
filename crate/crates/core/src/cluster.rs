//! Seeded Lloyd k-means on player parameter vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub n_clusters: usize,
    /// Cluster id of each player.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Per-cluster mean of the (unscaled) vectors.
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances, in the metric used for
    /// clustering.
    pub objective: f64,
    pub rounds: usize,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&n| self.labels[n] == cluster)
            .collect()
    }

    /// Each point in its own cluster.
    pub fn singletons(vectors: &[Vec<f64>]) -> Self {
        let n = vectors.len();
        ClusterAssignment {
            n_clusters: n,
            labels: (0..n).collect(),
            sizes: vec![1; n],
            centroids: vectors.to_vec(),
            objective: 0.0,
            rounds: 0,
        }
    }

    /// Builds an assignment from labels, recomputing sizes and centroids.
    pub fn from_labels(vectors: &[Vec<f64>], labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if labels.len() != vectors.len() {
            return Err(Error::dim("labels", vectors.len(), labels.len()));
        }
        if labels.iter().any(|&l| l >= n_clusters) {
            return Err(Error::invalid("label out of range"));
        }
        let centroids = centroids(vectors, &labels, n_clusters);
        let mut sizes = vec![0; n_clusters];
        labels.iter().for_each(|&l| sizes[l] += 1);
        if sizes.contains(&0) {
            return Err(Error::invalid("every cluster must be nonempty"));
        }
        let objective = vectors
            .iter()
            .zip(&labels)
            .map(|(v, &l)| sq_dist(v, &centroids[l]))
            .sum();
        Ok(ClusterAssignment {
            n_clusters,
            labels,
            sizes,
            centroids,
            objective,
            rounds: 0,
        })
    }

    /// `player_id,cluster_id` rows with a header.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("player_id,cluster_id\n");
        for (n, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{n},{l}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub seed: u64,
    pub max_rounds: usize,
    /// Cluster on per-feature standardised vectors (centroids stay unscaled).
    pub standardize: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            seed: 0,
            max_rounds: 300,
            standardize: false,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn centroids(vectors: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = vectors[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (v, &l) in vectors.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(v) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

fn standardized(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = vectors.len() as f64;
    let d = vectors[0].len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    let mut sd = vec![0.0; d];
    for v in vectors {
        for ((s, x), m) in sd.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m) / n;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(f64::sqrt).collect();
    vectors
        .iter()
        .map(|v| {
            v.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((x, m), s)| if *s > 1e-12 { (x - m) / s } else { 0.0 })
                .collect()
        })
        .collect()
}

fn nearest(v: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(v, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd iteration from a farthest-point initialisation whose first centre
/// is drawn from `seed`. Empty clusters are refilled with the point farthest
/// from its current centre.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, cfg: &KMeansConfig) -> Result<ClusterAssignment> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= N, got k={k}, N={n}")));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::invalid("k-means vectors must share one dimension"));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }
    let space = if cfg.standardize {
        standardized(vectors)
    } else {
        vectors.to_vec()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let first = rng.random_range(0..n);
    let mut centers = vec![space[first].clone()];
    let mut min_d: Vec<f64> = space.iter().map(|v| sq_dist(v, &space[first])).collect();
    while centers.len() < k {
        let mut far = 0;
        for i in 1..n {
            if min_d[i] > min_d[far] {
                far = i;
            }
        }
        centers.push(space[far].clone());
        for (m, v) in min_d.iter_mut().zip(&space) {
            *m = m.min(sq_dist(v, &space[far]));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut rounds = 0;
    for _ in 0..cfg.max_rounds.max(1) {
        rounds += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, dd) = nearest(&space[i], &centers);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = dd;
        }
        // refill empty clusters
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut far = None;
            for i in 0..n {
                if sizes[labels[i]] > 1 && far.is_none_or(|f: usize| dists[i] > dists[f]) {
                    far = Some(i);
                }
            }
            let i = far.expect("k <= N leaves a cluster with two points");
            sizes[labels[i]] -= 1;
            labels[i] = c;
            sizes[c] = 1;
            dists[i] = 0.0;
            changed = true;
        }
        centers = centroids(&space, &labels, k);
        if !changed {
            break;
        }
    }
    let objective = space
        .iter()
        .zip(&labels)
        .map(|(v, &l)| sq_dist(v, &centers[l]))
        .sum();
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    Ok(ClusterAssignment {
        n_clusters: k,
        centroids: centroids(vectors, &labels, k),
        labels,
        sizes,
        objective,
        rounds,
    })
}

/// Objective after each Lloyd round, for monotonicity checks.
pub fn kmeans_objective_trace(vectors: &[Vec<f64>], k: usize, cfg: &KMeansConfig) -> Result<Vec<f64>> {
    (1..=cfg.max_rounds.max(1))
        .map(|r| {
            kmeans(
                vectors,
                k,
                &KMeansConfig {
                    max_rounds: r,
                    ..*cfg
                },
            )
            .map(|a| a.objective)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn separated_pairs() {
        let a = kmeans(&pts(&[0.0, 0.1, 10.0, 10.1]), 2, &KMeansConfig::default()).unwrap();
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[2], a.labels[3]);
        assert_ne!(a.labels[0], a.labels[2]);
        let mut c: Vec<f64> = a.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
        assert!((a.objective - 0.01).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n() {
        let v = pts(&[3.0, 1.0, 2.0, 7.0]);
        let a = kmeans(&v, 4, &KMeansConfig::default()).unwrap();
        assert_eq!(a.objective, 0.0);
        assert!(a.sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn k_equals_one() {
        let v = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]];
        let a = kmeans(&v, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(a.centroids[0], vec![2.0, 4.0]);
    }

    #[test]
    fn invalid_k() {
        let v = pts(&[1.0, 2.0]);
        assert!(kmeans(&v, 3, &KMeansConfig::default()).is_err());
        assert!(kmeans(&v, 0, &KMeansConfig::default()).is_err());
    }

    #[test]
    fn duplicate_points_fill_every_cluster() {
        let v = pts(&[1.0, 1.0, 1.0, 1.0, 5.0]);
        let a = kmeans(&v, 3, &KMeansConfig::default()).unwrap();
        assert!(a.sizes.iter().all(|&s| s > 0));
        assert_eq!(a.sizes.iter().sum::<usize>(), 5);
    }

    #[test]
    fn labels_csv_format() {
        let a = ClusterAssignment::singletons(&pts(&[1.0, 2.0]));
        assert_eq!(a.labels_csv(), "player_id,cluster_id\n0,0\n1,1\n");
    }
}
