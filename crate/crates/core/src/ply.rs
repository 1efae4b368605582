//! ASCII PLY reading and writing.
//!
//! Vertices carry `x y z`, an optional integer `face` label (`-1` marks outliers) and
//! optional `red green blue` colors. Other elements in input files are skipped.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};
use crate::Clustering;

/// Raw vertex data of a PLY file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyData {
    pub points: Vec<Point>,
    pub face: Option<Vec<i64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

struct Element {
    name: String,
    count: usize,
    props: Vec<String>,
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PlyData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text).map_err(|reason| Error::format(path, reason))
}

pub fn parse_ply(text: &str) -> std::result::Result<PlyData, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing `ply` magic".into());
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or("header not terminated by end_header")?.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let fmt = tok.next().unwrap_or("");
                if fmt != "ascii" {
                    return Err(format!("unsupported PLY format `{fmt}` (only ascii)"));
                }
                ascii = true;
            }
            Some("element") => {
                let name = tok.next().ok_or("element without name")?.to_string();
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format!("bad count for element {name}"))?;
                elements.push(Element { name, count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or("property before element")?;
                let kind = tok.next().ok_or("property without type")?;
                let name = if kind == "list" {
                    tok.nth(2)
                } else {
                    tok.next()
                }
                .ok_or("property without name")?;
                el.props.push(name.to_string());
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(format!("unexpected header keyword `{other}`")),
        }
    }
    if !ascii {
        return Err("missing format line".into());
    }
    let mut data = PlyData::default();
    let mut body = lines.filter(|l| !l.trim().is_empty());
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                body.next().ok_or_else(|| format!("truncated element {}", el.name))?;
            }
            continue;
        }
        let pos = |n: &str| el.props.iter().position(|p| p == n);
        let (xi, yi, zi) = match (pos("x"), pos("y"), pos("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err("vertex element lacks x/y/z".into()),
        };
        let fi = pos("face").or_else(|| pos("label"));
        let rgb = match (pos("red"), pos("green"), pos("blue")) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            _ => None,
        };
        let mut face = fi.map(|_| Vec::with_capacity(el.count));
        let mut colors = rgb.map(|_| Vec::with_capacity(el.count));
        data.points.reserve(el.count);
        for row in 0..el.count {
            let line = body.next().ok_or_else(|| format!("expected {} vertices, found {row}", el.count))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() < el.props.len() {
                return Err(format!("vertex {row}: expected {} values", el.props.len()));
            }
            let num = |i: usize| -> std::result::Result<f64, String> {
                vals[i].parse::<f64>().map_err(|_| format!("vertex {row}: bad number `{}`", vals[i]))
            };
            data.points.push(Point::new(num(xi)?, num(yi)?, num(zi)?));
            if let (Some(fi), Some(face)) = (fi, face.as_mut()) {
                let v = num(fi)?;
                if v.fract() != 0.0 {
                    return Err(format!("vertex {row}: non-integer label {v}"));
                }
                face.push(v as i64);
            }
            if let (Some(idx), Some(colors)) = (rgb, colors.as_mut()) {
                let c = |i: usize| num(i).map(|v| v.clamp(0.0, 255.0) as u8);
                colors.push([c(idx[0])?, c(idx[1])?, c(idx[2])?]);
            }
        }
        data.face = face;
        data.colors = colors;
    }
    Ok(data)
}

/// Renders vertex data as an ASCII PLY document.
pub fn render_ply(points: &[Point], face: Option<&[i64]>, colors: Option<&[[u8; 3]]>) -> String {
    let mut s = String::with_capacity(points.len() * 64 + 256);
    s.push_str("ply\nformat ascii 1.0\ncomment facetseg\n");
    let _ = writeln!(s, "element vertex {}", points.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if face.is_some() {
        s.push_str("property int face\n");
    }
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in points.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(f) = face {
            let _ = write!(s, " {}", f[i]);
        }
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    s
}

pub fn write_ply(
    path: impl AsRef<Path>,
    points: &[Point],
    face: Option<&[i64]>,
    colors: Option<&[[u8; 3]]>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_ply(points, face, colors)).map_err(|e| Error::io(path, e))
}

/// Reads a cloud; the `face` property, if present, becomes the ground-truth labels.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let data = read_ply(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let labels = match data.face {
        Some(f) => Some(
            f.into_iter()
                .map(|v| u32::try_from(v).map_err(|_| Error::format(path, format!("negative or oversized label {v}"))))
                .collect::<Result<Vec<u32>>>()?,
        ),
        None => None,
    };
    let cloud = PointCloud { points: data.points, labels, name };
    cloud.validate().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(cloud)
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let labels: Option<Vec<i64>> = cloud.labels.as_ref().map(|l| l.iter().map(|&v| v as i64).collect());
    write_ply(path, &cloud.points, labels.as_deref(), None)
}

/// Writes points labeled with cluster ids (`-1` for outliers).
pub fn write_clustering(path: impl AsRef<Path>, points: &[Point], clustering: &Clustering) -> Result<()> {
    write_ply(path, points, Some(&clustering.to_labels()), None)
}

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

/// Display color of a cluster: a fixed palette cycled by id, black for outliers.
pub fn cluster_color(label: i64) -> [u8; 3] {
    if label < 0 {
        [0, 0, 0]
    } else {
        PALETTE[(label as usize) % PALETTE.len()]
    }
}

/// Adds per-point colors to a labeled PLY file.
pub fn export_colored(input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<()> {
    let data = read_ply(input)?;
    let face = data.face.ok_or(Error::UnlabeledInput)?;
    let colors: Vec<[u8; 3]> = face.iter().map(|&l| cluster_color(l)).collect();
    write_ply(output, &data.points, Some(&face), Some(&colors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_foreign_header() {
        let text = "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 2\n\
            property float x\nproperty float y\nproperty float z\nproperty float nx\nproperty int label\n\
            element face 1\nproperty list uchar int vertex_indices\nend_header\n\
            0 0 0 1 3\n1.5 2 -3 0 -1\n3 0 1 2\n";
        let d = parse_ply(text).unwrap();
        assert_eq!(d.points[1], Point::new(1.5, 2.0, -3.0));
        assert_eq!(d.face, Some(vec![3, -1]));
        assert!(d.colors.is_none());
    }

    #[test]
    fn rejects_binary_and_truncated() {
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let t = "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n";
        assert!(parse_ply(t).unwrap_err().contains("expected 3 vertices"));
    }

    #[test]
    fn roundtrip_exact() {
        let pts = vec![Point::new(0.1, 1.0 / 3.0, 2e-17), Point::new(-4.0, 5.5, 1e300)];
        let text = render_ply(&pts, Some(&[0, -1]), Some(&[[1, 2, 3], [255, 0, 9]]));
        let d = parse_ply(&text).unwrap();
        assert_eq!(d.points, pts);
        assert_eq!(d.face, Some(vec![0, -1]));
        assert_eq!(d.colors, Some(vec![[1, 2, 3], [255, 0, 9]]));
    }

    #[test]
    fn colors() {
        let distinct: std::collections::HashSet<[u8; 3]> = (0..6).map(cluster_color).collect();
        assert_eq!(distinct.len(), 6);
        assert_eq!(cluster_color(-1), [0, 0, 0]);
        assert!((0..12).all(|l| cluster_color(l) != [0, 0, 0]));
        assert_eq!(cluster_color(3), cluster_color(3));
    }

    #[test]
    fn export_requires_labels() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("a.ply");
        let pts = [Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0)];
        write_ply(&src, &pts, None, None).unwrap();
        assert!(matches!(export_colored(&src, dir.path().join("b.ply")), Err(Error::UnlabeledInput)));
        write_ply(&src, &pts, Some(&[-1, 2]), None).unwrap();
        export_colored(&src, dir.path().join("b.ply")).unwrap();
        let out = read_ply(dir.path().join("b.ply")).unwrap();
        assert_eq!(out.colors.unwrap(), vec![[0, 0, 0], cluster_color(2)]);
    }
}
