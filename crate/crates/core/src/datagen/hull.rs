use crate::geometry::Point;

/// One planar face of a convex polyhedron, triangulated.
#[derive(Debug, Clone)]
pub struct HullFace {
    /// Outward unit normal.
    pub normal: Point,
    /// Plane offset: `normal . p = offset` for points on the face.
    pub offset: f64,
    /// Face polygon vertices in counter-clockwise order around `normal`.
    pub polygon: Vec<Point>,
    pub triangles: Vec<[Point; 3]>,
}

impl HullFace {
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(triangle_area).sum()
    }
}

pub fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(t[2] - t[0]).norm()
}

const ANGLE_TOL: f64 = 1e-6;

/// Faces of the convex hull of `vertices`, with coplanar triangles merged into one face.
///
/// Every supporting plane through three vertices is found by enumeration; planes whose
/// normals differ by less than 1e-6 rad are the same face. Returns `None` when the
/// vertices do not span a volume.
pub fn convex_hull_faces(vertices: &[Point]) -> Option<Vec<HullFace>> {
    let mut verts: Vec<Point> = Vec::with_capacity(vertices.len());
    let (lo, hi) = bounds(vertices)?;
    let diam = (hi - lo).norm();
    if !(diam > 0.0 && diam.is_finite()) {
        return None;
    }
    let eps = 1e-9 * diam;
    for v in vertices {
        if verts.iter().all(|w| (*w - *v).norm() > eps) {
            verts.push(*v);
        }
    }
    let n = verts.len();
    if n < 4 {
        return None;
    }
    let mut planes: Vec<(Point, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let raw = (verts[j] - verts[i]).cross(verts[k] - verts[i]);
                if raw.norm() <= eps * diam {
                    continue;
                }
                let normal = raw.normalized()?;
                let offset = normal.dot(verts[i]);
                let (mut above, mut below) = (false, false);
                for v in &verts {
                    let s = normal.dot(*v) - offset;
                    above |= s > eps;
                    below |= s < -eps;
                }
                let outward = match (above, below) {
                    (false, false) => return None, // every vertex on one plane
                    (true, true) => continue,
                    (false, true) => normal,
                    (true, false) => -normal,
                };
                let dup = planes.iter().any(|(m, _)| {
                    let cos = m.dot(outward).clamp(-1.0, 1.0);
                    cos.acos() < ANGLE_TOL
                });
                if !dup {
                    planes.push((outward, outward.dot(verts[i])));
                }
            }
        }
    }
    if planes.len() < 4 {
        return None;
    }
    let faces = planes
        .into_iter()
        .map(|(normal, offset)| {
            let on: Vec<Point> = verts.iter().copied().filter(|v| (normal.dot(*v) - offset).abs() <= eps).collect();
            let polygon = order_polygon(&on, normal);
            let triangles = (1..polygon.len() - 1).map(|t| [polygon[0], polygon[t], polygon[t + 1]]).collect();
            HullFace { normal, offset, polygon, triangles }
        })
        .collect();
    Some(faces)
}

fn bounds(vertices: &[Point]) -> Option<(Point, Point)> {
    let first = *vertices.first()?;
    Some(vertices.iter().fold((first, first), |(lo, hi), p| {
        (
            Point::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
            Point::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
        )
    }))
}

fn order_polygon(points: &[Point], normal: Point) -> Vec<Point> {
    let c = crate::geometry::centroid(points).expect("face has vertices");
    let u = (points[0] - c).normalized().expect("face vertices are distinct");
    let w = normal.cross(u);
    let mut with_angle: Vec<(f64, Point)> =
        points.iter().map(|p| ((*p - c).dot(w).atan2((*p - c).dot(u)), *p)).collect();
    with_angle.sort_by(|a, b| a.0.total_cmp(&b.0));
    with_angle.into_iter().map(|(_, p)| p).collect()
}
