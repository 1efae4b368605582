//! Built-in convex polyhedra.

use std::f64::consts::TAU;

use super::PolyhedronSpec;
use crate::geometry::Point;

/// Shapes reserved for the test split.
pub const TEST_SHAPES: [&str; 3] = ["cube", "octagonal_prism", "pentagonal_pyramid"];

/// Shapes used for the training and validation splits.
pub const TRAIN_SHAPES: [&str; 15] = [
    "tetrahedron",
    "octahedron",
    "pentagonal_prism",
    "triangular_prism",
    "hexagonal_prism",
    "heptagonal_prism",
    "square_pyramid",
    "triangular_bipyramid",
    "hexagonal_pyramid",
    "pentagonal_bipyramid",
    "cuboid",
    "icosahedron",
    "dodecahedron",
    "truncated_square_pyramid",
    "wedge",
];

pub fn all_names() -> impl Iterator<Item = &'static str> {
    TEST_SHAPES.iter().chain(TRAIN_SHAPES.iter()).copied()
}

fn ring(sides: usize, radius: f64, z: f64, phase: f64) -> Vec<Point> {
    (0..sides)
        .map(|i| {
            let a = phase + TAU * i as f64 / sides as f64;
            Point::new(radius * a.cos(), radius * a.sin(), z)
        })
        .collect()
}

fn prism(sides: usize, half_height: f64) -> Vec<Point> {
    let mut v = ring(sides, 1.0, -half_height, 0.0);
    v.extend(ring(sides, 1.0, half_height, 0.0));
    v
}

fn pyramid(sides: usize, height: f64) -> Vec<Point> {
    let mut v = ring(sides, 1.0, 0.0, 0.0);
    v.push(Point::new(0.0, 0.0, height));
    v
}

fn bipyramid(sides: usize, height: f64) -> Vec<Point> {
    let mut v = pyramid(sides, height);
    v.push(Point::new(0.0, 0.0, -height));
    v
}

fn cuboid(a: f64, b: f64, c: f64) -> Vec<Point> {
    let mut v = Vec::with_capacity(8);
    for &x in &[-a, a] {
        for &y in &[-b, b] {
            for &z in &[-c, c] {
                v.push(Point::new(x, y, z));
            }
        }
    }
    v
}

/// Looks up a built-in polyhedron by name.
pub fn builtin(name: &str) -> Option<PolyhedronSpec> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let vertices = match name {
        "cube" => cuboid(1.0, 1.0, 1.0),
        "cuboid" => cuboid(1.0, 0.6, 0.35),
        "tetrahedron" => vec![
            Point::new(1.0, 1.0, 1.0),
            Point::new(1.0, -1.0, -1.0),
            Point::new(-1.0, 1.0, -1.0),
            Point::new(-1.0, -1.0, 1.0),
        ],
        "octahedron" => vec![
            Point::new(1.0, 0.0, 0.0),
            Point::new(-1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, -1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
            Point::new(0.0, 0.0, -1.0),
        ],
        "pentagonal_pyramid" => pyramid(5, 1.2),
        "octagonal_prism" => prism(8, 0.5),
        "pentagonal_prism" => prism(5, 0.7),
        "triangular_prism" => prism(3, 0.8),
        "hexagonal_prism" => prism(6, 0.6),
        "heptagonal_prism" => prism(7, 0.4),
        "square_pyramid" => pyramid(4, 1.0),
        "hexagonal_pyramid" => pyramid(6, 0.9),
        "triangular_bipyramid" => bipyramid(3, 1.0),
        "pentagonal_bipyramid" => bipyramid(5, 0.9),
        "icosahedron" => {
            let mut v = Vec::new();
            for &a in &[-1.0, 1.0] {
                for &b in &[-phi, phi] {
                    v.push(Point::new(0.0, a, b));
                    v.push(Point::new(a, b, 0.0));
                    v.push(Point::new(b, 0.0, a));
                }
            }
            v
        }
        "dodecahedron" => {
            let mut v = cuboid(1.0, 1.0, 1.0);
            let ip = 1.0 / phi;
            for &a in &[-ip, ip] {
                for &b in &[-phi, phi] {
                    v.push(Point::new(0.0, a, b));
                    v.push(Point::new(a, b, 0.0));
                    v.push(Point::new(b, 0.0, a));
                }
            }
            v
        }
        "truncated_square_pyramid" => {
            let mut v = ring(4, 1.0, 0.0, TAU / 8.0);
            v.extend(ring(4, 0.5, 0.7, TAU / 8.0));
            v
        }
        "wedge" => vec![
            Point::new(-1.0, -0.6, 0.0),
            Point::new(1.0, -0.6, 0.0),
            Point::new(-1.0, 0.6, 0.0),
            Point::new(1.0, 0.6, 0.0),
            Point::new(-0.5, 0.0, 0.8),
            Point::new(0.5, 0.0, 0.8),
        ],
        _ => return None,
    };
    Some(PolyhedronSpec { name: name.to_string(), vertices })
}

pub fn train_specs() -> Vec<PolyhedronSpec> {
    TRAIN_SHAPES.iter().map(|n| builtin(n).expect("builtin")).collect()
}

pub fn test_specs() -> Vec<PolyhedronSpec> {
    TEST_SHAPES.iter().map(|n| builtin(n).expect("builtin")).collect()
}
