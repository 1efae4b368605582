use serde::{Deserialize, Serialize};

use super::PairPredictor;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::patching::PatchFeatures;

/// Closed-form same-face score from normals and a coplanarity residual.
///
/// `p = s(beta (cos t - cos a)) * s(beta (d_max - d))` where `s` is the logistic
/// function, `t` the angle between the two normals and `d` the larger of
/// `|<n_i, s>|, |<n_j, s>|` divided by `|s|` (0 for coincident centroids).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPredictor {
    pub beta: f64,
    pub max_angle_deg: f64,
    pub max_residual: f64,
}

impl Default for AnalyticPredictor {
    fn default() -> Self {
        AnalyticPredictor { beta: 200.0, max_angle_deg: 10.0, max_residual: 0.1 }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl AnalyticPredictor {
    pub fn score(&self, a: &PatchFeatures, b: &PatchFeatures, shift: Point) -> Result<f64> {
        for f in [a, b] {
            if f.degenerate {
                return Err(Error::DegeneratePatch(0));
            }
        }
        let (na, nb) = (a.normal(), b.normal());
        // Normals are sign-canonical; the absolute value keeps nearly flipped pairs together.
        let cos = na.dot(nb).abs().min(1.0);
        let len = shift.norm();
        let d = if len > 0.0 { na.dot(shift).abs().max(nb.dot(shift).abs()) / len } else { 0.0 };
        Ok(logistic(self.beta * (cos - self.max_angle_deg.to_radians().cos()))
            * logistic(self.beta * (self.max_residual - d)))
    }
}

impl PairPredictor for AnalyticPredictor {
    fn probability(&self, a: &PatchFeatures, b: &PatchFeatures, shift: Point) -> f64 {
        self.score(a, b, shift).unwrap_or(0.0)
    }
}
