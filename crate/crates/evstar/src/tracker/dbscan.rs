//! Density-based clustering of image points (eps-neighborhood, minimum
//! samples including the point itself), used to find star blobs in binned
//! event windows.
//!
//! Deterministic for a given input order: clusters are seeded by the first
//! unvisited core point, and expansion proceeds breadth-first in input
//! order, so a border point reachable from two clusters joins the
//! earlier-seeded one.

use std::collections::HashMap;

use nalgebra::Vector2;

/// Cluster assignment produced by [`dbscan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbscanResult {
    /// Point indices per cluster, in discovery order.
    pub clusters: Vec<Vec<usize>>,
    /// Indices of points in no cluster.
    pub noise: Vec<usize>,
}

struct CellGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl CellGrid {
    fn build(points: &[Vector2<f64>], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(((p.x / cell).floor() as i64, (p.y / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        CellGrid { cell, cells }
    }

    /// Indices within `eps` of `p` (inclusive), in input order.
    fn neighbors(&self, points: &[Vector2<f64>], p: &Vector2<f64>, eps: f64) -> Vec<usize> {
        let cx = (p.x / self.cell).floor() as i64;
        let cy = (p.y / self.cell).floor() as i64;
        let reach = (eps / self.cell).ceil() as i64;
        let mut out = Vec::new();
        for gy in cy - reach..=cy + reach {
            for gx in cx - reach..=cx + reach {
                if let Some(ids) = self.cells.get(&(gx, gy)) {
                    for &i in ids {
                        if (points[i] - p).norm_squared() <= eps * eps {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Cluster `points` with neighborhood radius `eps` and density threshold
/// `min_samples` (neighbor count includes the point itself).
pub fn dbscan(points: &[Vector2<f64>], eps: f64, min_samples: usize) -> DbscanResult {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_samples >= 1, "min_samples must be at least 1");
    let grid = CellGrid::build(points, eps.max(1e-9));
    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let neighborhood = grid.neighbors(points, &points[i], eps);
        if neighborhood.len() < min_samples {
            continue; // noise unless claimed by a later cluster
        }
        let cluster_id = clusters.len();
        clusters.push(Vec::new());
        label[i] = Some(cluster_id);
        clusters[cluster_id].push(i);
        let mut queue: std::collections::VecDeque<usize> = neighborhood.into();
        while let Some(j) = queue.pop_front() {
            if label[j].is_none() {
                label[j] = Some(cluster_id);
                clusters[cluster_id].push(j);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = grid.neighbors(points, &points[j], eps);
            if nj.len() >= min_samples {
                queue.extend(nj);
            }
        }
        clusters[cluster_id].sort_unstable();
    }

    let noise = (0..points.len()).filter(|&i| label[i].is_none()).collect();
    DbscanResult { clusters, noise }
}

/// Mean position of a cluster.
pub fn cluster_mean(points: &[Vector2<f64>], cluster: &[usize]) -> Vector2<f64> {
    cluster.iter().map(|&i| points[i]).sum::<Vector2<f64>>() / cluster.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn pts(raw: &[(f64, f64)]) -> Vec<Vector2<f64>> {
        raw.iter().map(|&(x, y)| Vector2::new(x, y)).collect()
    }

    #[test]
    fn three_mutually_close_points_form_one_cluster() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let r = dbscan(&p, 2.0, 3);
        assert_eq!(r.clusters, vec![vec![0, 1, 2]]);
        assert!(r.noise.is_empty());
    }

    #[test]
    fn distant_groups_form_separate_clusters() {
        let p = pts(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (0.5, 0.5),
            (40.0, 40.0),
            (41.0, 40.0),
            (40.5, 40.6),
            (100.0, 0.0),
        ]);
        let r = dbscan(&p, 2.0, 3);
        assert_eq!(r.clusters.len(), 2);
        assert_eq!(r.clusters[0], vec![0, 1, 2]);
        assert_eq!(r.clusters[1], vec![3, 4, 5]);
        assert_eq!(r.noise, vec![6]);
    }

    /// Brute-force oracle: core points from exhaustive neighbor counts,
    /// clusters as connected components of the core graph ordered by their
    /// first core point, border points joining the earliest adjacent
    /// cluster.
    fn dbscan_oracle(points: &[Vector2<f64>], eps: f64, min_samples: usize) -> DbscanResult {
        let n = points.len();
        let near = |a: usize, b: usize| (points[a] - points[b]).norm_squared() <= eps * eps;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_samples)
            .collect();
        // Union-find over core points.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        for i in 0..n {
            for j in i + 1..n {
                if core[i] && core[j] && near(i, j) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        // Components in order of their smallest core index.
        let mut comp_of_root: HashMap<usize, usize> = HashMap::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            if core[i] {
                let root = find(&mut parent, i);
                let id = *comp_of_root.entry(root).or_insert_with(|| {
                    clusters.push(Vec::new());
                    clusters.len() - 1
                });
                clusters[id].push(i);
            }
        }
        // Border points join the earliest cluster with a core neighbor.
        let mut noise = Vec::new();
        for i in 0..n {
            if core[i] {
                continue;
            }
            let joined = (0..clusters.len())
                .find(|&c| clusters[c].iter().any(|&j| core[j] && near(i, j)));
            match joined {
                Some(c) => clusters[c].push(i),
                None => noise.push(i),
            }
        }
        for c in &mut clusters {
            c.sort_unstable();
        }
        DbscanResult { clusters, noise }
    }

    #[test]
    fn matches_brute_force_oracle_on_random_sets() {
        let mut rng = StdRng::seed_from_u64(55);
        for case in 0..50 {
            let n = rng.random_range(5..120);
            let points: Vec<Vector2<f64>> = (0..n)
                .map(|_| Vector2::new(rng.random::<f64>() * 30.0, rng.random::<f64>() * 30.0))
                .collect();
            let eps = rng.random::<f64>() * 3.0 + 0.5;
            let min_samples = rng.random_range(2..6);
            let fast = dbscan(&points, eps, min_samples);
            let slow = dbscan_oracle(&points, eps, min_samples);
            assert_eq!(fast, slow, "case {case}: eps {eps}, min_samples {min_samples}");
        }
    }
}
