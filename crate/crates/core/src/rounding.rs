//! Stage 4: turn the denoised matrix into patch clusters.
//!
//! Starting from one cluster per patch, the two clusters whose columns of `A`
//! correlate most are merged while that correlation reaches `n/2` with
//! `n = N/m`. Column `c` of `A` is the mean of the columns of `X` over the
//! members of cluster `c`.

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::patching::Patch;

const SYMMETRY_TOL: f64 = 1e-9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Merge loop state. `clusters[c]` owns column `columns[c]` of `A`.
#[derive(Debug, Clone)]
pub struct MergeState {
    x: Mat,
    clusters: Vec<Vec<usize>>,
    columns: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
    threshold: f64,
}

impl MergeState {
    /// Validates `x`, clamps it to `[0, 1]` and starts with singleton clusters.
    pub fn new(x: &Mat, m: usize) -> Result<Self> {
        if !x.is_square() {
            return Err(Error::InvalidInput(format!("rounding needs a square matrix, got {}x{}", x.rows(), x.cols())));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("rounding: m must be at least 1".into()));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        if x.asymmetry() > SYMMETRY_TOL {
            return Err(Error::InvalidInput("matrix is not symmetric".into()));
        }
        let n = x.rows();
        let x = x.map(|v| v.clamp(0.0, 1.0));
        let columns: Vec<Vec<f64>> = (0..n).map(|c| x.column(c)).collect();
        let gram = (0..n).map(|i| (0..n).map(|j| dot(&columns[i], &columns[j])).collect()).collect();
        Ok(MergeState {
            x,
            clusters: (0..n).map(|i| vec![i]).collect(),
            columns,
            gram,
            threshold: 0.5 * n as f64 / m as f64,
        })
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// `n/2` with `n = N/m` as a real number.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `A^T A` for the current columns.
    pub fn gram(&self) -> Mat {
        let w = self.width();
        Mat::from_fn(w, w, |i, j| self.gram[i][j])
    }

    /// Largest strictly off-diagonal entry of `A^T A` with its position; the
    /// lexicographically smallest `(i, j)`, `i < j`, wins ties.
    pub fn best_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.width() {
            for j in i + 1..self.width() {
                let v = self.gram[i][j];
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }

    /// Performs one merge if the best pair reaches the threshold; returns the merged pair.
    pub fn step(&mut self) -> Option<(usize, usize)> {
        let (i, j, v) = self.best_pair()?;
        if v < self.threshold {
            return None;
        }
        let absorbed = self.clusters.remove(j);
        self.clusters[i].extend(absorbed);
        self.columns.remove(j);
        self.gram.remove(j);
        for row in &mut self.gram {
            row.remove(j);
        }
        let n = self.x.rows();
        let members = &self.clusters[i];
        let mut col = vec![0.0; n];
        for &p in members {
            for (r, c) in col.iter_mut().enumerate() {
                *c += self.x[(r, p)];
            }
        }
        let inv = 1.0 / members.len() as f64;
        col.iter_mut().for_each(|c| *c *= inv);
        self.columns[i] = col;
        for k in 0..self.width() {
            let d = dot(&self.columns[i], &self.columns[k]);
            self.gram[i][k] = d;
            self.gram[k][i] = d;
        }
        Some((i, j))
    }

    pub fn into_clustering(self) -> Clustering {
        Clustering::from_groups(self.x.rows(), &self.clusters)
    }
}

/// Clusters patches from a (lifted or raw) pair matrix with face-count bound `m`.
pub fn round_clusters(x: &Mat, m: usize) -> Result<Clustering> {
    let mut state = MergeState::new(x, m)?;
    while state.step().is_some() {}
    Ok(state.into_clustering())
}

/// Lifts a patch clustering to the points: every point takes its patch's cluster.
/// Points covered by no patch stay outliers.
pub fn clusters_to_points(clustering: &Clustering, patches: &[Patch], num_points: usize) -> Result<Clustering> {
    if clustering.len() != patches.len() {
        return Err(Error::IndexMismatch(format!(
            "{} patch assignments for {} patches",
            clustering.len(),
            patches.len()
        )));
    }
    let mut assignments = vec![None; num_points];
    let mut seen = vec![false; num_points];
    for (patch, cluster) in patches.iter().zip(&clustering.assignments) {
        for &p in &patch.point_indices {
            if p >= num_points {
                return Err(Error::IndexMismatch(format!("point {p} out of range for {num_points} points")));
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::IndexMismatch(format!("point {p} belongs to more than one patch")));
            }
            assignments[p] = *cluster;
        }
    }
    Ok(Clustering { assignments, num_clusters: clustering.num_clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, PointCloud};
    use crate::matchlift::PairMatrix;
    use proptest::prelude::*;

    fn block_matrix(labels: &[u32]) -> Mat {
        PairMatrix::from_labels(labels).to_mat()
    }

    /// Canonical form: sorted member lists.
    fn partition(c: &Clustering) -> Vec<Vec<usize>> {
        let mut g = c.groups();
        g.sort();
        g
    }

    #[test]
    fn ideal_cube() {
        let labels: Vec<u32> = (0..12).map(|i| i / 2).collect();
        let c = round_clusters(&block_matrix(&labels), 6).unwrap();
        assert_eq!(c.num_clusters, 6);
        assert!(c.sizes().iter().all(|&s| s == 2));
        assert_eq!(partition(&c), (0..6).map(|f| vec![2 * f, 2 * f + 1]).collect::<Vec<_>>());
    }

    #[test]
    fn identity_gives_singletons() {
        for m in [1, 3, 7] {
            let c = round_clusters(&Mat::identity(7), m).unwrap();
            assert_eq!(c.num_clusters, 7);
        }
    }

    #[test]
    fn all_ones_single_cluster() {
        let c = round_clusters(&Mat::filled(9, 9, 1.0), 1).unwrap();
        assert_eq!(c.num_clusters, 1);
        assert_eq!(c.sizes(), vec![9]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(round_clusters(&Mat::zeros(2, 3), 1), Err(Error::InvalidInput(_))));
        let mut x = Mat::identity(3);
        x[(0, 1)] = 0.4;
        assert!(matches!(round_clusters(&x, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn lexicographic_tie_break() {
        // Three identical columns: the first merge must join 0 and 1.
        let mut s = MergeState::new(&Mat::filled(3, 3, 1.0), 1).unwrap();
        assert_eq!(s.step(), Some((0, 1)));
        assert_eq!(s.clusters(), &[vec![0, 1], vec![2]]);
    }

    #[test]
    fn clamps_entries() {
        let mut x = Mat::filled(4, 4, 1.3);
        for i in 0..4 {
            x[(i, i)] = 1.0;
        }
        let mut s = MergeState::new(&x, 1).unwrap();
        assert!(s.gram().as_slice().iter().all(|&v| v <= 4.0));
        while s.step().is_some() {}
        assert_eq!(s.width(), 1);
    }

    #[test]
    fn lifting_to_points() {
        let cloud = PointCloud::new("c", (0..10).map(|i| Point::new(i as f64, 0.0, 0.0)).collect());
        let patches = vec![
            Patch::from_indices(&cloud, 0, vec![0, 1, 2, 3, 4]),
            Patch::from_indices(&cloud, 5, vec![5, 6, 7, 8, 9]),
        ];
        let joined = Clustering { assignments: vec![Some(0), Some(0)], num_clusters: 1 };
        let pts = clusters_to_points(&joined, &patches, 10).unwrap();
        assert!(pts.assignments.iter().all(|a| *a == Some(0)));

        let single = Clustering::from_groups(10, &(0..10).map(|i| vec![i]).collect::<Vec<_>>());
        let singletons: Vec<Patch> = (0..10).map(|i| Patch::from_indices(&cloud, i, vec![i])).collect();
        assert_eq!(clusters_to_points(&single, &singletons, 10).unwrap(), single);

        assert!(clusters_to_points(&joined, &patches[..1], 10).is_err());
        let overlapping = vec![patches[0].clone(), patches[0].clone()];
        assert!(clusters_to_points(&joined, &overlapping, 10).is_err());
    }

    fn noisy_blocks() -> impl Strategy<Value = (Vec<u32>, Vec<f64>, usize)> {
        (2usize..16, 1usize..5).prop_flat_map(|(n, m)| {
            (prop::collection::vec(0u32..m as u32, n), prop::collection::vec(-0.2f64..0.5, n * n), 1usize..=m + 2)
        })
    }

    fn noisy_matrix(labels: &[u32], noise: &[f64]) -> Mat {
        let n = labels.len();
        let base = block_matrix(labels);
        Mat::from_fn(n, n, |r, c| {
            if r == c {
                1.0
            } else {
                let (a, b) = (r.min(c), r.max(c));
                base[(r, c)] + noise[a * n + b]
            }
        })
    }

    proptest! {
        #[test]
        fn merge_loop_invariants((labels, noise, m) in noisy_blocks()) {
            let n = labels.len();
            let x = noisy_matrix(&labels, &noise);
            let mut s = MergeState::new(&x, m).unwrap();
            let mut steps = 0;
            loop {
                let g = s.gram();
                prop_assert!(g.as_slice().iter().all(|&v| v <= n as f64 + 1e-9));
                prop_assert_eq!(s.width(), s.clusters().len());
                let mut all: Vec<usize> = s.clusters().concat();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                let before = s.width();
                if s.step().is_none() {
                    break;
                }
                prop_assert_eq!(s.width(), before - 1);
                steps += 1;
            }
            prop_assert!(steps < n);
        }

        #[test]
        fn fixpoint_idempotence((labels, noise, m) in noisy_blocks()) {
            let n = labels.len();
            let x = noisy_matrix(&labels, &noise);
            let c = round_clusters(&x, m).unwrap();
            let implied = |c: &Clustering| -> Vec<u32> { c.assignments.iter().map(|a| a.unwrap() as u32).collect() };
            // On a block matrix, members of one cluster correlate with exactly its size,
            // so clusters below the threshold fall apart into singletons.
            let threshold = 0.5 * n as f64 / m as f64;
            let mut expected: Vec<Vec<usize>> = Vec::new();
            for g in partition(&c) {
                if g.len() as f64 >= threshold {
                    expected.push(g);
                } else {
                    expected.extend(g.into_iter().map(|i| vec![i]));
                }
            }
            expected.sort();
            let once = round_clusters(&block_matrix(&implied(&c)), m).unwrap();
            prop_assert_eq!(partition(&once), expected);
            let twice = round_clusters(&block_matrix(&implied(&once)), m).unwrap();
            prop_assert_eq!(partition(&twice), partition(&once));
        }

        #[test]
        fn permutation_equivariance((labels, noise, m) in noisy_blocks(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = labels.len();
            // Distinct off-diagonal values avoid order-dependent tie-breaks.
            let noise: Vec<f64> = noise.iter().enumerate().map(|(k, v)| v + 1e-7 * k as f64).collect();
            let x = noisy_matrix(&labels, &noise);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let px = Mat::from_fn(n, n, |r, c| x[(perm[r], perm[c])]);
            let a = round_clusters(&x, m).unwrap();
            let b = round_clusters(&px, m).unwrap();
            let mapped: Vec<Vec<usize>> = {
                let mut g: Vec<Vec<usize>> = b.groups().into_iter()
                    .map(|g| { let mut v: Vec<usize> = g.into_iter().map(|i| perm[i]).collect(); v.sort_unstable(); v })
                    .collect();
                g.sort();
                g
            };
            prop_assert_eq!(mapped, partition(&a));
        }
    }
}
