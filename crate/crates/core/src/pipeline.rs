//! End-to-end segmentation: normalize, patch, predict, lift, round.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::geometry::{normalize, PointCloud};
use crate::matchlift::{estimate_m, harden, solve_matchlift, PairKind, PairMatrix, SdpSolution, SolverParams};
use crate::patching::{build_patches, patch_statistics, Patch};
use crate::predictor::{predict_matrix, ModelConfig, PairPredictor, TrainConfig};
use crate::rounding::{clusters_to_points, round_clusters};

/// Every tunable of the pipeline. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Patches hold at most `P / knn_divisor` nearest neighbors of their seed.
    pub knn_divisor: usize,
    /// Edge of the cube around a patch seed.
    pub l_b: f64,
    /// Edge of the voxelization box.
    pub voxel_box: f64,
    /// Voxels per axis.
    pub voxel_m: usize,
    /// Threshold turning probabilities into hard decisions.
    pub threshold: f64,
    /// Face-count bound for the solver and the rounding threshold.
    pub m: usize,
    /// Estimate `m` from the input spectrum instead of using `m`.
    pub estimate_m: bool,
    /// Feed hard instead of soft decisions into the solver.
    pub hard_input: bool,
    /// Round the (thresholded) input directly, without the solver.
    pub skip_lift: bool,
    pub solver: SolverParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            knn_divisor: 50,
            l_b: 0.2,
            voxel_box: 0.2,
            voxel_m: 21,
            threshold: 0.5,
            m: 14,
            estimate_m: false,
            hard_input: false,
            skip_lift: false,
            solver: SolverParams::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("config: {what}")));
        if self.knn_divisor == 0 {
            return bad("knn_divisor must be positive");
        }
        if !(self.l_b > 0.0 && self.l_b.is_finite()) || !(self.voxel_box > 0.0 && self.voxel_box.is_finite()) {
            return bad("l_b and voxel_box must be positive");
        }
        if self.voxel_m == 0 {
            return bad("voxel_m must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if self.model.features != crate::patching::NUM_FEATURES || self.model.hidden == 0 {
            return bad("model.features must match the patch statistics and hidden must be positive");
        }
        self.solver.validate()?;
        self.train.validate()
    }

    /// Reads a JSON document; absent fields keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Neighbor count for a cloud of `num_points` points.
    pub fn knn_k(&self, num_points: usize) -> usize {
        (num_points / self.knn_divisor).max(1)
    }
}

/// Normalizes `cloud` and splits it into patches. `stream` selects the random stream
/// for seed selection, so distinct clouds can share one base seed.
pub fn patch_cloud(cloud: &PointCloud, config: &PipelineConfig, stream: u64) -> Result<(PointCloud, Vec<Patch>)> {
    let normalized = normalize(cloud)?;
    let mut rng = crate::seed::rng_for(config.seed, stream);
    let patches = build_patches(&normalized, config.knn_k(normalized.len()), config.l_b, &mut rng)?;
    Ok((normalized, patches))
}

/// Output of stages 2 to 4 on one patch set.
#[derive(Debug, Clone)]
pub struct PatchSegmentation {
    pub soft: PairMatrix,
    /// The matrix handed to the solver or, with `skip_lift`, to rounding.
    pub input: PairMatrix,
    pub lifted: Option<SdpSolution>,
    pub m_used: usize,
    pub clusters: Clustering,
}

/// Runs prediction, optional lifting and rounding. A solver that stops at
/// `max_iter` still yields a clustering from its last iterate; the returned
/// solution then has `converged == false`.
pub fn segment_patches(
    predictor: &(impl PairPredictor + ?Sized),
    patches: &[Patch],
    config: &PipelineConfig,
) -> Result<PatchSegmentation> {
    let features: Vec<_> = patches.iter().map(patch_statistics).collect();
    let centroids: Vec<_> = patches.iter().map(|p| p.centroid).collect();
    let soft = predict_matrix(predictor, &features, &centroids);
    let m = if config.estimate_m { estimate_m(&soft) } else { config.m };
    segment_matrix(soft, m, config)
}

/// Stages 3 and 4 on a given soft matrix and face-count bound.
pub fn segment_matrix(soft: PairMatrix, m: usize, config: &PipelineConfig) -> Result<PatchSegmentation> {
    let (input, lifted) = lift(&soft, m, config)?;
    let clusters = round_clusters(lifted.as_ref().map_or(&input.to_mat(), |s| &s.x), m)?;
    Ok(PatchSegmentation { soft, input, lifted, m_used: m, clusters })
}

/// Stage 3: thresholds if configured, then solves unless `skip_lift` is set.
pub fn lift(soft: &PairMatrix, m: usize, config: &PipelineConfig) -> Result<(PairMatrix, Option<SdpSolution>)> {
    let input = if config.hard_input { harden(soft, config.threshold) } else { soft.clone() };
    if config.skip_lift {
        return Ok((input, None));
    }
    let solution = match solve_matchlift(&input, m, &config.solver) {
        Ok(s) => s,
        Err(e) => e.into_partial_solution()?,
    };
    Ok((input, Some(solution)))
}

/// Wall-clock time per stage in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub patching_ms: f64,
    pub prediction_ms: f64,
    pub lifting_ms: f64,
    pub rounding_ms: f64,
}

/// Full result of [`segment`].
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub normalized: PointCloud,
    pub patches: Vec<Patch>,
    pub result: PatchSegmentation,
    pub points: Clustering,
    pub timings: Timings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Segments one cloud end to end.
pub fn segment(cloud: &PointCloud, predictor: &(impl PairPredictor + ?Sized), config: &PipelineConfig) -> Result<Segmentation> {
    config.validate()?;
    let t = Instant::now();
    let (normalized, patches) = patch_cloud(cloud, config, 0)?;
    let patching_ms = ms(t);

    let t = Instant::now();
    let features: Vec<_> = patches.iter().map(patch_statistics).collect();
    let centroids: Vec<_> = patches.iter().map(|p| p.centroid).collect();
    let soft = predict_matrix(predictor, &features, &centroids);
    let m = if config.estimate_m { estimate_m(&soft) } else { config.m };
    let prediction_ms = ms(t);

    let t = Instant::now();
    let (input, lifted) = lift(&soft, m, config)?;
    let lifting_ms = ms(t);

    let t = Instant::now();
    let clusters = round_clusters(lifted.as_ref().map_or(&input.to_mat(), |s| &s.x), m)?;
    let points = clusters_to_points(&clusters, &patches, normalized.len())?;
    let rounding_ms = ms(t);
    let result = PatchSegmentation { soft, input, lifted, m_used: m, clusters };
    Ok(Segmentation {
        normalized,
        patches,
        result,
        points,
        timings: Timings { patching_ms, prediction_ms, lifting_ms, rounding_ms },
    })
}

/// Predicted cluster sizes of `points` sorted descending.
pub fn cluster_sizes_desc(points: &Clustering) -> Vec<usize> {
    let mut s = points.sizes();
    s.sort_unstable_by(|a, b| b.cmp(a));
    s
}

/// Patch gt labels, or an error if any patch is unlabeled.
pub fn patch_labels(patches: &[Patch]) -> Result<Vec<u32>> {
    patches.iter().map(|p| p.gt_label).collect::<Option<Vec<_>>>().ok_or(Error::UnlabeledInput)
}

/// `PairKind` of the solver input under `config`.
pub fn input_kind(config: &PipelineConfig) -> PairKind {
    if config.hard_input {
        PairKind::Hard
    } else {
        PairKind::Soft
    }
}
