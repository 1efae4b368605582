//! Labeled point clouds sampled from the surfaces of convex polyhedra.
//!
//! Each cloud is drawn uniformly from the hull surface, randomly rotated, stretched
//! along x and y, optionally edge-rounded by neighborhood averaging, normalized into
//! `[0,1]^3` and finally perturbed with Gaussian noise.

mod hull;
pub mod shapes;

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize, NeighborIndex, Point, PointCloud};
use crate::seed::rng_for;

pub use hull::{convex_hull_faces, triangle_area, HullFace};

/// A convex polyhedron given by its vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedronSpec {
    pub name: String,
    pub vertices: Vec<Point>,
}

impl PolyhedronSpec {
    pub fn faces(&self) -> Result<Vec<HullFace>> {
        convex_hull_faces(&self.vertices).ok_or_else(|| Error::DegenerateSpec(self.name.clone()))
    }
}

/// Randomization ranges of the generator. Every range is `[lower, upper]`, sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub num_points_range: [usize; 2],
    pub rounding_apply_prob: f64,
    pub rounding_alpha_range: [f64; 2],
    pub rotation_range_deg: [f64; 2],
    pub stretch_range: [f64; 2],
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_points_range: [5000, 50000],
            rounding_apply_prob: 0.5,
            rounding_alpha_range: [100.0, 10000.0],
            rotation_range_deg: [0.0, 360.0],
            stretch_range: [0.5, 1.0],
            noise_sigma: 0.0,
            rng_seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("generator: {what}")));
        if self.num_points_range[0] == 0 || self.num_points_range[0] > self.num_points_range[1] {
            return bad("num_points_range must satisfy 1 <= lower <= upper");
        }
        for (name, r) in [
            ("rounding_alpha_range", self.rounding_alpha_range),
            ("rotation_range_deg", self.rotation_range_deg),
            ("stretch_range", self.stretch_range),
        ] {
            if !(r[0] <= r[1]) {
                return bad(&format!("{name} lower bound exceeds upper bound"));
            }
        }
        if self.rounding_alpha_range[0] <= 0.0 {
            return bad("rounding alpha must be positive");
        }
        if !(0.0..=1.0).contains(&self.rounding_apply_prob) {
            return bad("rounding_apply_prob must lie in [0,1]");
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::NegativeSigma(self.noise_sigma));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Draws `n` points uniformly from the hull surface; each point is labeled with its face.
pub fn sample_hull(spec: &PolyhedronSpec, n: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    let faces = spec.faces()?;
    let mut tris: Vec<([Point; 3], u32)> = Vec::new();
    for (label, f) in faces.iter().enumerate() {
        for t in &f.triangles {
            tris.push((*t, label as u32));
        }
    }
    let mut cumulative = Vec::with_capacity(tris.len());
    let mut total = 0.0;
    for (t, _) in &tris {
        total += triangle_area(t);
        cumulative.push(total);
    }
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let ti = cumulative.partition_point(|&c| c <= u).min(tris.len() - 1);
        let ([a, b, c], label) = tris[ti];
        let s = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
        labels.push(label);
    }
    PointCloud::labeled(spec.name.clone(), points, labels)
}

/// Rotation angles (degrees) and x/y stretch factors applied to one cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub mu: f64,
    pub nu: f64,
}

impl TransformParams {
    pub const IDENTITY: TransformParams = TransformParams { roll_deg: 0.0, pitch_deg: 0.0, yaw_deg: 0.0, mu: 1.0, nu: 1.0 };

    pub fn sample(rng: &mut impl Rng, config: &GeneratorConfig) -> Self {
        TransformParams {
            roll_deg: uniform(rng, config.rotation_range_deg),
            pitch_deg: uniform(rng, config.rotation_range_deg),
            yaw_deg: uniform(rng, config.rotation_range_deg),
            mu: uniform(rng, config.stretch_range),
            nu: uniform(rng, config.stretch_range),
        }
    }

    /// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let (sr, cr) = self.roll_deg.to_radians().sin_cos();
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        let (sy, cy) = self.yaw_deg.to_radians().sin_cos();
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    }

    /// Rotates, then stretches x by `mu` and y by `nu`.
    pub fn apply(&self, p: Point) -> Point {
        let r = self.rotation();
        let v = p.to_array();
        let rot = |row: usize| r[row][0] * v[0] + r[row][1] * v[1] + r[row][2] * v[2];
        Point::new(rot(0) * self.mu, rot(1) * self.nu, rot(2))
    }
}

pub fn apply_transform(cloud: &PointCloud, params: &TransformParams) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|&p| params.apply(p)).collect(),
        labels: cloud.labels.clone(),
        name: cloud.name.clone(),
    }
}

/// Samples rotation and stretch parameters and applies them.
pub fn transform(cloud: &PointCloud, rng: &mut impl Rng, config: &GeneratorConfig) -> (PointCloud, TransformParams) {
    let params = TransformParams::sample(rng, config);
    (apply_transform(cloud, &params), params)
}

/// Moves every point to the mean of its `k` nearest neighbors (itself included).
///
/// All means are taken over the original coordinates. `index` must be built over
/// `cloud.points`.
pub fn round_edges(cloud: &PointCloud, k: usize, index: &NeighborIndex) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::InvalidParameter("round_edges needs k >= 1".into()));
    }
    if index.len() != cloud.len() {
        return Err(Error::SizeMismatch(index.len(), cloud.len()));
    }
    let points = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nb = index.knn(i, k)?;
            let mut sum = Point::ZERO;
            for &j in &nb {
                sum += cloud.points[j];
            }
            Ok(sum / nb.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud { points, labels: cloud.labels.clone(), name: cloud.name.clone() })
}

/// Adds i.i.d. `N(0, sigma)` noise to every coordinate.
pub fn add_noise(cloud: &PointCloud, sigma: f64, rng: &mut impl Rng) -> Result<PointCloud> {
    if !(sigma >= 0.0) {
        return Err(Error::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let points = cloud
        .points
        .iter()
        .map(|p| Point::new(p.x + normal.sample(rng), p.y + normal.sample(rng), p.z + normal.sample(rng)))
        .collect();
    Ok(PointCloud { points, labels: cloud.labels.clone(), name: cloud.name.clone() })
}

/// Which split a generated cloud belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Every randomized parameter of one generated cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudRecord {
    pub index: usize,
    pub split: Split,
    pub file: String,
    pub seed: u64,
    pub spec: String,
    pub n: usize,
    pub mu: f64,
    pub nu: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    /// Edge-rounding divisor, if rounding was applied.
    pub alpha: Option<f64>,
    /// Edge-rounding neighborhood size, if rounding was applied.
    pub rounding_k: Option<usize>,
    pub sigma: f64,
    pub num_faces: usize,
}

/// Number of clouds per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    /// Set sizes of the reference experiment.
    pub const REFERENCE: SplitCounts = SplitCounts { train: 500, val: 50, test: 50 };
}

/// Draws every random parameter of cloud `index` without generating points.
pub fn sample_record(
    config: &GeneratorConfig,
    specs: &[PolyhedronSpec],
    index: usize,
    split: Split,
) -> Result<CloudRecord> {
    if specs.is_empty() {
        return Err(Error::InvalidParameter(format!("no polyhedron specs for the {} split", split.dir_name())));
    }
    let seed = crate::seed::mix(config.rng_seed, index as u64);
    let mut rng = rng_for(seed, 0);
    let spec = &specs[rng.random_range(0..specs.len())];
    let [lo, hi] = config.num_points_range;
    let n = rng.random_range(lo..=hi);
    let t = TransformParams::sample(&mut rng, config);
    let rounded = rng.random::<f64>() < config.rounding_apply_prob;
    let alpha = uniform(&mut rng, config.rounding_alpha_range);
    let (alpha, rounding_k) = if rounded {
        (Some(alpha), Some(((n as f64 / alpha).round() as usize).max(1)))
    } else {
        (None, None)
    };
    Ok(CloudRecord {
        index,
        split,
        file: format!("{}_{}.ply", spec.name, index),
        seed,
        spec: spec.name.clone(),
        n,
        mu: t.mu,
        nu: t.nu,
        roll_deg: t.roll_deg,
        pitch_deg: t.pitch_deg,
        yaw_deg: t.yaw_deg,
        alpha,
        rounding_k,
        sigma: config.noise_sigma,
        num_faces: spec.faces()?.len(),
    })
}

/// Generates the cloud described by `record`.
pub fn generate_cloud(spec: &PolyhedronSpec, record: &CloudRecord) -> Result<PointCloud> {
    let mut rng = rng_for(record.seed, 1);
    let raw = sample_hull(spec, record.n, &mut rng)?;
    let params = TransformParams {
        roll_deg: record.roll_deg,
        pitch_deg: record.pitch_deg,
        yaw_deg: record.yaw_deg,
        mu: record.mu,
        nu: record.nu,
    };
    let mut cloud = apply_transform(&raw, &params);
    if let Some(k) = record.rounding_k {
        let index = NeighborIndex::build(&cloud.points);
        cloud = round_edges(&cloud, k, &index)?;
    }
    let mut cloud = add_noise(&normalize(&cloud)?, record.sigma, &mut rng)?;
    cloud.name = record.file.trim_end_matches(".ply").to_string();
    Ok(cloud)
}

/// A generated dataset: clouds per split plus the manifest of all sampled parameters.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<PointCloud>,
    pub val: Vec<PointCloud>,
    pub test: Vec<PointCloud>,
    pub manifest: Vec<CloudRecord>,
}

/// Generates train/val clouds from `train_specs` and test clouds from `test_specs`.
pub fn generate_dataset(
    train_specs: &[PolyhedronSpec],
    test_specs: &[PolyhedronSpec],
    config: &GeneratorConfig,
    counts: SplitCounts,
) -> Result<Dataset> {
    config.validate()?;
    let mut jobs = Vec::new();
    let mut index = 0;
    for (split, count, specs) in [
        (Split::Train, counts.train, train_specs),
        (Split::Val, counts.val, train_specs),
        (Split::Test, counts.test, test_specs),
    ] {
        for _ in 0..count {
            jobs.push((sample_record(config, specs, index, split)?, specs));
            index += 1;
        }
    }
    let clouds = jobs
        .par_iter()
        .map(|(rec, specs)| {
            let spec = specs.iter().find(|s| s.name == rec.spec).expect("record spec comes from list");
            generate_cloud(spec, rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset { train: Vec::new(), val: Vec::new(), test: Vec::new(), manifest: Vec::new() };
    for ((rec, _), cloud) in jobs.into_iter().zip(clouds) {
        match rec.split {
            Split::Train => ds.train.push(cloud),
            Split::Val => ds.val.push(cloud),
            Split::Test => ds.test.push(cloud),
        }
        ds.manifest.push(rec);
    }
    Ok(ds)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: GeneratorConfig,
    counts: SplitCounts,
    clouds: Vec<CloudRecord>,
}

/// Writes `train/`, `val/`, `test/` PLY files and `manifest.json` under `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, dataset: &Dataset, config: &GeneratorConfig) -> Result<()> {
    let dir = dir.as_ref();
    let splits = [(Split::Train, &dataset.train), (Split::Val, &dataset.val), (Split::Test, &dataset.test)];
    for (split, clouds) in splits {
        let sub = dir.join(split.dir_name());
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for cloud in clouds {
            crate::ply::write_cloud(sub.join(format!("{}.ply", cloud.name)), cloud)?;
        }
    }
    let manifest = Manifest {
        config: config.clone(),
        counts: SplitCounts { train: dataset.train.len(), val: dataset.val.len(), test: dataset.test.len() },
        clouds: dataset.manifest.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Reads every `.ply` file of a directory in file-name order.
pub fn load_split(dir: impl AsRef<Path>) -> Result<Vec<PointCloud>> {
    let dir = dir.as_ref();
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ply"))
        .collect();
    files.sort();
    files.iter().map(crate::ply::read_cloud).collect()
}
