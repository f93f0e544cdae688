use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    /// Cluster of each input point.
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Point positions per cluster, in ascending order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (p, &c) in self.assignments.iter().enumerate() {
            out[c].push(p);
        }
        out
    }

    pub fn inertia(&self) -> f64 {
        self.inertia_trace.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn seed_centroids(points: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let mut centroids = Array2::zeros((k, points.ncols()));
    for (c, &p) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&points.row(p));
    }
    centroids
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm from k-means++ seeds, deterministic given `seed`.
///
/// An empty cluster takes over the point farthest from its own centroid. When
/// every point coincides with its centroid there is nothing to take over and
/// the cluster stays empty.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= k <= #points, got k={k} for {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(points.row(i), &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        let mut sizes = vec![0usize; k];
        for &c in &assignments {
            sizes[c] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let (far, d) = dists
                .iter()
                .enumerate()
                .filter(|&(i, _)| sizes[assignments[i]] > 1)
                .fold((usize::MAX, 0.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
            if far == usize::MAX || d <= 0.0 {
                continue;
            }
            sizes[assignments[far]] -= 1;
            assignments[far] = c;
            sizes[c] = 1;
            dists[far] = 0.0;
            centroids.row_mut(c).assign(&points.row(far));
            changed = true;
        }
        inertia_trace.push(dists.iter().sum());
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        for (i, &c) in assignments.iter().enumerate() {
            sums.row_mut(c).scaled_add(1.0, &points.row(i));
        }
        for c in 0..k {
            if sizes[c] > 0 {
                let mean = &sums.row(c) / sizes[c] as f64;
                centroids.row_mut(c).assign(&mean);
            }
        }
        if !changed && iterations > 1 {
            break;
        }
    }
    let mut result = KMeans {
        assignments,
        centroids,
        inertia_trace,
        iterations,
    };
    // Inertia of the final centroids.
    let final_inertia: f64 = (0..n)
        .map(|i| sq_dist(points.row(i), result.centroids.row(result.assignments[i])))
        .sum();
    result.inertia_trace.push(final_inertia);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn k_equal_n_gives_singletons() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 5.0], [3.0, 3.0]];
        let km = kmeans(pts.view(), 4, 1).unwrap();
        assert!(km.clusters().iter().all(|c| c.len() == 1));
        assert_eq!(km.inertia(), 0.0);
    }

    #[test]
    fn identical_points_collapse_into_one_cluster() {
        let pts = Array2::from_elem((5, 3), 2.5);
        let a = kmeans(pts.view(), 2, 9).unwrap();
        let b = kmeans(pts.view(), 2, 9).unwrap();
        assert_eq!(a, b);
        let sizes: Vec<usize> = a.clusters().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 0]);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let pts = array![[0.0], [1.0]];
        assert!(kmeans(pts.view(), 3, 0).is_err());
        assert!(kmeans(pts.view(), 0, 0).is_err());
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = Array2::from_shape_fn((80, 3), |_| rng.random_range(-5.0..5.0));
        let km = kmeans(pts.view(), 6, 2).unwrap();
        for w in km.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", km.inertia_trace);
        }
    }
}
