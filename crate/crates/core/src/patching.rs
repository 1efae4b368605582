//! Stage 1: disjoint local patches, their statistics and occupancy voxelization.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, fit_points, ActiveMask, LocalSurface, NeighborIndex, Point, PointCloud};

/// Number of entries in a [`PatchFeatures`] vector.
pub const NUM_FEATURES: usize = 10;

/// A small group of neighboring points built around a random seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub seed: usize,
    pub point_indices: Vec<usize>,
    pub centroid: Point,
    /// Majority ground-truth face label of the member points.
    pub gt_label: Option<u32>,
    /// Plane fit of the whole patch; `None` for degenerate patches.
    pub stats: Option<LocalSurface>,
    /// Per-axis span of the member points.
    pub extent: [f64; 3],
    /// Member points shifted so the centroid sits at the origin.
    #[serde(skip)]
    pub centered: Vec<Point>,
}

impl Patch {
    /// Builds a patch from member indices of `cloud`.
    pub fn from_indices(cloud: &PointCloud, seed: usize, point_indices: Vec<usize>) -> Self {
        let pts: Vec<Point> = point_indices.iter().map(|&i| cloud.points[i]).collect();
        let c = centroid(&pts).unwrap_or(Point::ZERO);
        let centered: Vec<Point> = pts.iter().map(|&p| p - c).collect();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &centered {
            for a in 0..3 {
                lo[a] = lo[a].min(p.axis(a));
                hi[a] = hi[a].max(p.axis(a));
            }
        }
        let extent = if pts.is_empty() { [0.0; 3] } else { [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]] };
        let gt_label = cloud.labels.as_ref().and_then(|l| majority(point_indices.iter().map(|&i| l[i])));
        Patch {
            seed,
            point_indices,
            centroid: c,
            gt_label,
            stats: fit_points(&centered).ok(),
            extent,
            centered,
        }
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    /// Restores `centered` after deserialization.
    pub fn recenter(&mut self, cloud: &PointCloud) {
        self.centered = self.point_indices.iter().map(|&i| cloud.points[i] - self.centroid).collect();
    }
}

/// Most frequent label; ties go to the smallest label.
fn majority(labels: impl Iterator<Item = u32>) -> Option<u32> {
    let mut v: Vec<u32> = labels.collect();
    v.sort_unstable();
    let mut best: Option<(usize, u32)> = None;
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().position(|&x| x != v[i]).map_or(v.len(), |o| i + o);
        if best.is_none_or(|(n, _)| j - i > n) {
            best = Some((j - i, v[i]));
        }
        i = j;
    }
    best.map(|(_, l)| l)
}

/// Partitions the cloud into patches.
///
/// Seeds are drawn uniformly among unassigned points. Each patch takes the `k` nearest
/// unassigned points of its seed and keeps those inside the axis-aligned cube of side
/// `l_b` centered at the seed.
pub fn build_patches(cloud: &PointCloud, k: usize, l_b: f64, rng: &mut impl Rng) -> Result<Vec<Patch>> {
    if k == 0 {
        return Err(Error::InvalidParameter("patching: k must be at least 1".into()));
    }
    if !(l_b > 0.0 && l_b <= 1.0) {
        return Err(Error::InvalidParameter("patching: l_b must lie in (0, 1]".into()));
    }
    cloud.validate()?;
    let index = NeighborIndex::build(&cloud.points);
    let mut mask = ActiveMask::new(&index);
    // Unassigned points with O(1) random pick and removal.
    let mut pool: Vec<usize> = (0..cloud.len()).collect();
    let mut slot: Vec<usize> = (0..cloud.len()).collect();
    let half = 0.5 * l_b;
    let mut patches = Vec::new();
    while !pool.is_empty() {
        let seed = pool[rng.random_range(0..pool.len())];
        let seed_pt = cloud.points[seed];
        let members: Vec<usize> = index
            .knn_active(seed, k, &mask)?
            .into_iter()
            .filter(|&i| cloud.points[i].linf(seed_pt) <= half)
            .collect();
        for &m in &members {
            mask.deactivate(&index, m);
            let s = slot[m];
            let last = *pool.last().expect("member is pooled");
            pool.swap_remove(s);
            if last != m {
                slot[last] = s;
            }
        }
        patches.push(Patch::from_indices(cloud, seed, members));
    }
    Ok(patches)
}

/// Binary `M x M x M` occupancy grid around a centered patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub m: usize,
    /// Voxel edge length `l_b / M`, stored as bits for exact equality.
    voxel_edge_bits: u64,
    values: Vec<u8>,
}

impl VoxelGrid {
    pub fn voxel_edge(&self) -> f64 {
        f64::from_bits(self.voxel_edge_bits)
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> u8 {
        self.values[(a * self.m + b) * self.m + c]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn occupied(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }
}

/// Occupancy voxelization over `[-l_b/2, l_b/2]^3`.
///
/// Voxels are half-open; points exactly on the upper boundary fall into the last voxel
/// and points outside the box are ignored.
pub fn voxelize(patch: &Patch, m: usize, l_b: f64) -> Result<VoxelGrid> {
    if m == 0 {
        return Err(Error::InvalidParameter("voxelize: M must be at least 1".into()));
    }
    if !(l_b > 0.0) {
        return Err(Error::InvalidParameter("voxelize: l_b must be positive".into()));
    }
    let edge = l_b / m as f64;
    let half = 0.5 * l_b;
    let mut values = vec![0u8; m * m * m];
    let cell = |v: f64| -> Option<usize> {
        let t = v + half;
        if !(0.0..=l_b).contains(&t) {
            return None;
        }
        Some(((t / edge).floor() as usize).min(m - 1))
    };
    for p in &patch.centered {
        if let (Some(a), Some(b), Some(c)) = (cell(p.x), cell(p.y), cell(p.z)) {
            values[(a * m + b) * m + c] = 1;
        }
    }
    Ok(VoxelGrid { m, voxel_edge_bits: edge.to_bits(), values })
}

/// Compact description of a patch fed to pair predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchFeatures {
    /// normal (3), curvature (1), normalized eigenvalue spectrum (3), extents (3).
    pub values: [f64; NUM_FEATURES],
    pub degenerate: bool,
}

impl PatchFeatures {
    pub fn normal(&self) -> Point {
        Point::new(self.values[0], self.values[1], self.values[2])
    }

    pub fn curvature(&self) -> f64 {
        self.values[3]
    }
}

pub fn patch_statistics(patch: &Patch) -> PatchFeatures {
    let Some(s) = patch.stats.as_ref().filter(|_| patch.len() >= 3) else {
        return PatchFeatures { values: [0.0; NUM_FEATURES], degenerate: true };
    };
    let total: f64 = s.eigenvalues.iter().sum();
    let spectrum = if total > 0.0 { s.eigenvalues.map(|l| l / total) } else { [0.0; 3] };
    PatchFeatures {
        values: [
            s.normal.x,
            s.normal.y,
            s.normal.z,
            s.curvature,
            spectrum[0],
            spectrum[1],
            spectrum[2],
            patch.extent[0],
            patch.extent[1],
            patch.extent[2],
        ],
        degenerate: false,
    }
}

/// JSON sidecar describing a patch set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchSidecar {
    pub num_points: usize,
    pub knn_k: usize,
    pub l_b: f64,
    pub patches: Vec<Patch>,
}

impl PatchSidecar {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_hull, shapes};
    use crate::geometry::normalize;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_cloud(n: usize, z: f64, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Point::new(rng.random(), rng.random(), z)).collect()
    }

    fn check_partition(patches: &[Patch], n: usize) {
        let mut seen = vec![0u8; n];
        for p in patches {
            for &i in &p.point_indices {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn whole_cloud_single_patch() {
        // Any seed's cube of side 1 covers a plane of half that extent.
        let pts = plane_cloud(400, 0.0, 1).into_iter().map(|p| Point::new(0.5 * p.x, 0.5 * p.y, 0.0)).collect();
        let cloud = PointCloud::new("p", pts);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let patches = build_patches(&cloud, 400, 1.0, &mut rng).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0].len(), 400);
    }

    #[test]
    fn reference_config_bounds_patch_diameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud = normalize(&sample_hull(&shapes::builtin("cube").unwrap(), 5000, &mut rng).unwrap()).unwrap();
        let patches = build_patches(&cloud, 5000 / 50, 0.2, &mut rng).unwrap();
        check_partition(&patches, cloud.len());
        assert!(patches.len() >= 5000 / 100);
        for p in &patches {
            assert!(p.len() <= 100);
            for &a in &p.point_indices {
                assert!(cloud.points[a].linf(cloud.points[p.seed]) <= 0.1);
                for &b in &p.point_indices {
                    assert!((cloud.points[a] - cloud.points[b]).norm() < 0.2 * 3f64.sqrt());
                }
            }
            let mean = centroid(&p.centered).unwrap();
            assert!(mean.norm() < 1e-9);
        }
    }

    #[test]
    fn separated_planes_never_mix() {
        let mut pts = plane_cloud(800, 0.0, 3);
        pts.extend(plane_cloud(800, 0.5, 4));
        let labels = (0..1600).map(|i| (i >= 800) as u32).collect();
        let cloud = PointCloud::labeled("two", pts, labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let patches = build_patches(&cloud, 60, 0.2, &mut rng).unwrap();
        let l = cloud.labels.as_ref().unwrap();
        for p in &patches {
            let first = l[p.point_indices[0]];
            assert!(p.point_indices.iter().all(|&i| l[i] == first));
            assert_eq!(p.gt_label, Some(first));
        }
    }

    #[test]
    fn majority_ties_to_smallest() {
        assert_eq!(majority([3, 1, 3, 1, 2].into_iter()), Some(1));
        assert_eq!(majority([5, 5, 1].into_iter()), Some(5));
        assert_eq!(majority(std::iter::empty()), None);
    }

    fn patch_of(points: Vec<Point>) -> Patch {
        let cloud = PointCloud::new("x", points);
        let n = cloud.len();
        Patch::from_indices(&cloud, 0, (0..n).collect())
    }

    #[test]
    fn voxel_cases() {
        let single = patch_of(vec![Point::new(0.3, 0.3, 0.3)]);
        let g = voxelize(&single, 5, 0.2).unwrap();
        assert_eq!(g.occupied(), 1);
        assert_eq!(g.get(2, 2, 2), 1);

        let many = patch_of(plane_cloud(50, 0.1, 7).into_iter().map(|p| p * 0.1).collect());
        let g1 = voxelize(&many, 1, 0.2).unwrap();
        assert_eq!(g1.values(), &[1]);

        let g21 = voxelize(&many, 21, 0.2).unwrap();
        assert!((g21.voxel_edge() - 0.2 / 21.0).abs() < 1e-15);
        assert!((g21.voxel_edge() - 0.00952).abs() < 1e-5);
        assert!(g21.occupied() >= 1);
        assert!(g21.values().iter().all(|&v| v <= 1));
    }

    #[test]
    fn upper_boundary_clamps_into_last_voxel() {
        let mut p = patch_of(vec![Point::ZERO]);
        p.centered = vec![Point::new(0.1, 0.1, 0.1), Point::new(-0.1, -0.1, -0.1), Point::new(0.2, 0.0, 0.0)];
        let g = voxelize(&p, 4, 0.2).unwrap();
        assert_eq!(g.get(3, 3, 3), 1);
        assert_eq!(g.get(0, 0, 0), 1);
        assert_eq!(g.occupied(), 2);
    }

    #[test]
    fn statistics_cases() {
        let flat = patch_of(plane_cloud(40, 0.7, 8).into_iter().map(|p| Point::new(p.x * 0.1, p.y * 0.05, p.z)).collect());
        let f = patch_statistics(&flat);
        assert!(!f.degenerate);
        assert!((f.normal() - Point::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!(f.curvature().abs() < 1e-12);

        let rotated = patch_of(flat.centered.iter().map(|p| Point::new(-p.y, p.x, p.z)).collect());
        let r = patch_statistics(&rotated);
        for i in 3..7 {
            assert!((r.values[i] - f.values[i]).abs() < 1e-12);
        }
        assert!((r.normal() - Point::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!((r.values[7] - f.values[8]).abs() < 1e-12);

        let single = patch_statistics(&patch_of(vec![Point::new(0.5, 0.5, 0.5)]));
        assert!(single.degenerate);
        assert_eq!(single.values, [0.0; NUM_FEATURES]);
    }

    #[test]
    fn sidecar_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = PointCloud::new("p", plane_cloud(300, 0.2, 10));
        let patches = build_patches(&cloud, 30, 0.2, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        PatchSidecar { num_points: 300, knn_k: 30, l_b: 0.2, patches: patches.clone() }.write(&path).unwrap();
        let mut back = PatchSidecar::read(&path).unwrap();
        for p in &mut back.patches {
            p.recenter(&cloud);
        }
        assert_eq!(back.patches.len(), patches.len());
        for (a, b) in back.patches.iter().zip(&patches) {
            assert_eq!(a.point_indices, b.point_indices);
            assert_eq!(a.gt_label, b.gt_label);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn partition_and_size_bounds(n in 1usize..600, k in 1usize..80, l_b in 0.05f64..1.0, seed in 0u64..1000) {
            let cloud = PointCloud::new("p", plane_cloud(n, 0.0, seed));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let patches = build_patches(&cloud, k, l_b, &mut rng).unwrap();
            check_partition(&patches, n);
            prop_assert!(patches.len() >= n.div_ceil(k));
            prop_assert!(patches.iter().all(|p| p.len() <= k && !p.is_empty()));
        }

        #[test]
        fn voxelization_ignores_point_order(seed in 0u64..1000, m in 1usize..25) {
            let mut pts: Vec<Point> = plane_cloud(60, 0.0, seed).into_iter().map(|p| p * 0.15).collect();
            let a = voxelize(&patch_of(pts.clone()), m, 0.2).unwrap();
            pts.reverse();
            pts.rotate_left(seed as usize % 60);
            let b = voxelize(&patch_of(pts), m, 0.2).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
