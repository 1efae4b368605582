use serde::{Deserialize, Serialize};

use super::{centroid, Point, PointCloud};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Mat};

/// Plane fit of a local neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSurface {
    /// Unit normal, sign-canonicalized (first clearly nonzero component positive).
    pub normal: Point,
    /// `λ0 / (λ0 + λ1 + λ2)`, zero on a perfect plane.
    pub curvature: f64,
    /// Covariance eigenvalues, ascending.
    pub eigenvalues: [f64; 3],
}

/// Flips `v` so that its first component with magnitude above 1e-9 is positive.
pub fn canonicalize_sign(v: Point) -> Point {
    for c in v.to_array() {
        if c.abs() > 1e-9 {
            return if c > 0.0 { v } else { -v };
        }
    }
    v
}

/// PCA plane fit over the points of `cloud` selected by `neighborhood`.
pub fn fit_local_surface(cloud: &PointCloud, neighborhood: &[usize]) -> Result<LocalSurface> {
    let n = cloud.len();
    if let Some(&bad) = neighborhood.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidIndex { index: bad, len: n });
    }
    let pts: Vec<Point> = neighborhood.iter().map(|&i| cloud.points[i]).collect();
    fit_points(&pts)
}

/// PCA plane fit over an explicit point list.
pub fn fit_points(points: &[Point]) -> Result<LocalSurface> {
    if points.len() < 3 {
        return Err(Error::DegenerateNeighborhood("fewer than 3 points"));
    }
    let c = centroid(points).expect("non-empty");
    let mut cov = Mat::zeros(3, 3);
    for p in points {
        let d = (*p - c).to_array();
        for r in 0..3 {
            for s in 0..=r {
                cov[(r, s)] += d[r] * d[s];
            }
        }
    }
    let inv = 1.0 / points.len() as f64;
    for r in 0..3 {
        for s in 0..=r {
            cov[(r, s)] *= inv;
            cov[(s, r)] = cov[(r, s)];
        }
    }
    let eig = sym_eigen(&cov);
    let vals = [eig.values[0].max(0.0), eig.values[1].max(0.0), eig.values[2].max(0.0)];
    // Rank < 2 means all points lie on a line (or coincide): no plane is defined.
    if vals[2] <= 0.0 || vals[1] <= 1e-12 * vals[2] {
        return Err(Error::DegenerateNeighborhood("covariance rank below 2"));
    }
    let v = eig.vector(0);
    let normal = Point::new(v[0], v[1], v[2])
        .normalized()
        .ok_or(Error::DegenerateNeighborhood("zero normal"))?;
    let total = vals[0] + vals[1] + vals[2];
    let curvature = if total > 0.0 { vals[0] / total } else { 0.0 };
    Ok(LocalSurface { normal: canonicalize_sign(normal), curvature, eigenvalues: vals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn principal_axes_oracle(points: &[Point]) -> [f64; 3] {
        // Independent route: eigenvalues of a symmetric 3x3 via the trigonometric formula.
        let c = centroid(points).unwrap();
        let mut a = [[0.0; 3]; 3];
        for p in points {
            let d = (*p - c).to_array();
            for r in 0..3 {
                for s in 0..3 {
                    a[r][s] += d[r] * d[s] / points.len() as f64;
                }
            }
        }
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = [[0.0; 3]; 3];
        for r in 0..3 {
            for s in 0..3 {
                b[r][s] = (a[r][s] - if r == s { q } else { 0.0 }) / p;
            }
        }
        let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
            - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let l_max = q + 2.0 * p * phi.cos();
        let l_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let l_mid = 3.0 * q - l_max - l_min;
        [l_min, l_mid, l_max]
    }

    #[test]
    fn flat_plane() {
        let pts: Vec<Point> = (0..10).map(|i| Point::new((i % 4) as f64 * 0.1, (i / 4) as f64 * 0.1, 0.3)).collect();
        let s = fit_points(&pts).unwrap();
        assert!((s.normal - Point::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!(s.curvature.abs() < 1e-12);
    }

    #[test]
    fn sphere_patch_is_curved() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point> = (0..200)
            .map(|_| {
                let t: f64 = rng.random_range(0.0..0.6);
                let f: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Point::new(t.sin() * f.cos(), t.sin() * f.sin(), t.cos())
            })
            .collect();
        let s = fit_points(&pts).unwrap();
        assert!(s.curvature > 0.0);
        let oracle = principal_axes_oracle(&pts);
        for (a, b) in s.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let total: f64 = oracle.iter().sum();
        assert!((s.curvature - oracle[0] / total).abs() < 1e-10);
    }

    #[test]
    fn three_points_on_diagonal_plane() {
        let pts = [Point::new(0.0, 0.0, 0.0), Point::new(1.0, 1.0, 0.0), Point::new(0.0, 0.0, 1.0)];
        let s = fit_points(&pts).unwrap();
        let expect = Point::new(1.0, -1.0, 0.0) / 2f64.sqrt();
        assert!((s.normal - expect).norm() < 1e-12, "{:?}", s.normal);
    }

    #[test]
    fn degenerate_inputs() {
        let two = [Point::ZERO, Point::new(1.0, 0.0, 0.0)];
        assert!(matches!(fit_points(&two), Err(Error::DegenerateNeighborhood(_))));
        let line: Vec<Point> = (0..5).map(|i| Point::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(fit_points(&line), Err(Error::DegenerateNeighborhood(_))));
    }

    fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let (sc, cc) = c.sin_cos();
        [
            [cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa],
            [sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa],
            [-sb, cb * sa, cb * ca],
        ]
    }

    fn apply(r: &[[f64; 3]; 3], p: Point) -> Point {
        let v = p.to_array();
        Point::new(
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        )
    }

    proptest! {
        #[test]
        fn normal_orthogonal_and_rotation_equivariant(
            raw in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 6..40),
            angles in prop::array::uniform3(0.0f64..std::f64::consts::TAU),
        ) {
            // Squash z to make a well-conditioned, roughly planar cloud.
            let pts: Vec<Point> = raw.iter().map(|a| Point::new(a[0], a[1], 0.05 * a[2])).collect();
            let s = fit_points(&pts);
            prop_assume!(s.is_ok());
            let s = s.unwrap();
            prop_assume!(s.eigenvalues[1] - s.eigenvalues[0] > 1e-3);
            prop_assert!((s.normal.norm() - 1.0).abs() < 1e-9);
            // Orthogonal to the two leading principal directions.
            let c = centroid(&pts).unwrap();
            let mut cov = Mat::zeros(3, 3);
            for p in &pts {
                let d = (*p - c).to_array();
                for r in 0..3 { for q in 0..3 { cov[(r, q)] += d[r] * d[q]; } }
            }
            let eig = sym_eigen(&cov);
            for k in 1..3 {
                let v = eig.vector(k);
                prop_assert!(s.normal.dot(Point::new(v[0], v[1], v[2])).abs() < 1e-8);
            }
            let r = rotation(angles[0], angles[1], angles[2]);
            let rotated: Vec<Point> = pts.iter().map(|&p| apply(&r, p)).collect();
            let sr = fit_points(&rotated).unwrap();
            let expect = canonicalize_sign(apply(&r, s.normal));
            prop_assert!((sr.normal - expect).norm() < 1e-6 || (sr.normal + expect).norm() < 1e-6);
            prop_assert!((sr.curvature - s.curvature).abs() < 1e-9);
        }
    }
}
