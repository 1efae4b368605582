//! Stage 2: pairwise same-face probabilities.

mod adam;
mod analytic;
mod mlp;
mod train;

use rayon::prelude::*;

pub use adam::Adam;
pub use analytic::AnalyticPredictor;
pub use mlp::{ClassWeights, Layer, MlpModel, ModelConfig};
pub use train::{train, EpochMetrics, PatchedCloud, TrainConfig, TrainOutcome};

use crate::geometry::Point;
use crate::matchlift::PairMatrix;
use crate::patching::PatchFeatures;

/// Input of one pair evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub feat_i: Vec<f64>,
    pub feat_j: Vec<f64>,
    /// `c_i - c_j`.
    pub shift: Point,
}

impl PairFeatures {
    pub fn new(a: &PatchFeatures, b: &PatchFeatures, shift: Point) -> Self {
        PairFeatures { feat_i: a.values.to_vec(), feat_j: b.values.to_vec(), shift }
    }
}

/// Anything that scores a patch pair with a same-face probability.
pub trait PairPredictor: Sync {
    /// Probability in `[0, 1]` that patches `a` and `b` lie on one face, where
    /// `shift` is the centroid of `a` minus the centroid of `b`.
    fn probability(&self, a: &PatchFeatures, b: &PatchFeatures, shift: Point) -> f64;
}

/// Scores every ordered pair, symmetrizes as `(Q + Q^T) / 2` and sets the diagonal to 1.
pub fn predict_matrix(
    predictor: &(impl PairPredictor + ?Sized),
    features: &[PatchFeatures],
    centroids: &[Point],
) -> PairMatrix {
    assert_eq!(features.len(), centroids.len(), "one centroid per patch");
    let n = features.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        predictor.probability(&features[i], &features[j], centroids[i] - centroids[j]).clamp(0.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = 0.5 * (rows[i][j] + rows[j][i]);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    PairMatrix::soft(n, values).expect("symmetric probabilities with unit diagonal")
}
