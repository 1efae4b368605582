//! Point-cloud containers, normalization, nearest-neighbor search and PCA plane fitting.

mod knn;
mod surface;

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use knn::{ActiveMask, NeighborIndex};
pub use surface::{canonicalize_sign, fit_local_surface, fit_points, LocalSurface};

/// A point (or direction) in 3D space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point) -> Point {
        Point::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist2(self, o: Point) -> f64 {
        (self - o).dot(self - o)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(self) -> Option<Point> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    /// Chebyshev (L-infinity) distance.
    pub fn linf(self, o: Point) -> f64 {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }

    pub fn axis(self, a: usize) -> f64 {
        match a {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, o: Point) {
        *self = *self + o;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point {
    type Output = Point;
    fn div(self, s: f64) -> Point {
        Point::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y, -self.z)
    }
}

/// Mean of a set of points; `None` when empty.
pub fn centroid<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Point> {
    let mut sum = Point::ZERO;
    let mut count = 0usize;
    for p in points {
        sum += *p;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// An ordered set of points with optional ground-truth face labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub labels: Option<Vec<u32>>,
    pub name: String,
}

impl PointCloud {
    pub fn new(name: impl Into<String>, points: Vec<Point>) -> Self {
        PointCloud { points, labels: None, name: name.into() }
    }

    /// Builds a labeled cloud, checking that every point carries a label.
    pub fn labeled(name: impl Into<String>, points: Vec<Point>, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::SizeMismatch(points.len(), labels.len()));
        }
        Ok(PointCloud { points, labels: Some(labels), name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks finiteness and label length.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePoint(i));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.points.len() {
                return Err(Error::SizeMismatch(self.points.len(), labels.len()));
            }
        }
        Ok(())
    }

    /// Number of distinct labels, if labeled.
    pub fn num_labels(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut v = l.clone();
            v.sort_unstable();
            v.dedup();
            v.len()
        })
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (
                Point::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Point::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        }))
    }
}

/// Translates the cloud so every axis starts at zero and divides all coordinates by the
/// single largest remaining coordinate, so the cloud fits tightly in `[0,1]^3` with its
/// proportions preserved.
pub fn normalize(cloud: &PointCloud) -> Result<PointCloud> {
    let (lo, hi) = cloud.bounds().ok_or(Error::EmptyCloud)?;
    cloud.validate()?;
    let span = hi - lo;
    let scale = span.x.max(span.y).max(span.z);
    if scale <= 0.0 {
        return Err(Error::DegenerateCloud);
    }
    let points = cloud
        .points
        .iter()
        .map(|&p| {
            let q = (p - lo) / scale;
            // Guard against 1 + ulp from the division.
            Point::new(q.x.clamp(0.0, 1.0), q.y.clamp(0.0, 1.0), q.z.clamp(0.0, 1.0))
        })
        .collect();
    Ok(PointCloud { points, labels: cloud.labels.clone(), name: cloud.name.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new("t", pts.iter().map(|&a| Point::from_array(a)).collect())
    }

    #[test]
    fn normalize_single_axis_scale() {
        let out = normalize(&cloud(&[[0., 0., 0.], [2., 0., 0.], [0., 1., 0.]])).unwrap();
        assert_eq!(
            out.points,
            vec![Point::new(0., 0., 0.), Point::new(1., 0., 0.), Point::new(0., 0.5, 0.)]
        );
    }

    #[test]
    fn normalize_identity_on_unit_box() {
        let c = cloud(&[[0., 0., 0.], [1., 1., 1.], [0.25, 0.5, 0.75]]);
        assert_eq!(normalize(&c).unwrap().points, c.points);
    }

    #[test]
    fn normalize_translates_then_divides() {
        let out = normalize(&cloud(&[[1., 1., 1.], [3., 5., 1.]])).unwrap();
        assert_eq!(out.points, vec![Point::new(0., 0., 0.), Point::new(0.5, 1., 0.)]);
    }

    #[test]
    fn normalize_errors() {
        assert!(matches!(normalize(&cloud(&[])), Err(Error::EmptyCloud)));
        assert!(matches!(
            normalize(&cloud(&[[1., 2., 3.], [1., 2., 3.]])),
            Err(Error::DegenerateCloud)
        ));
        assert!(matches!(
            normalize(&cloud(&[[1., 2., 3.], [f64::NAN, 2., 3.]])),
            Err(Error::NonFinitePoint(1))
        ));
    }

    proptest! {
        #[test]
        fn normalize_idempotent_and_tight(
            pts in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..60)
        ) {
            let c = cloud(&pts);
            prop_assume!(normalize(&c).is_ok());
            let once = normalize(&c).unwrap();
            let twice = normalize(&once).unwrap();
            for (a, b) in once.points.iter().zip(&twice.points) {
                prop_assert!(a.linf(*b) <= 1e-12);
            }
            let (lo, hi) = once.bounds().unwrap();
            prop_assert_eq!(lo, Point::ZERO);
            let top = hi.x.max(hi.y).max(hi.z);
            prop_assert!((top - 1.0).abs() < 1e-12);
        }
    }
}
