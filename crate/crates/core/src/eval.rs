//! Pairwise accuracy and the variant-by-noise experiment table.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::Clustering;
use crate::datagen::add_noise;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::matchlift::PairKind;
use crate::patching::patch_statistics;
use crate::pipeline::{patch_cloud, patch_labels, segment_matrix, PipelineConfig};
use crate::predictor::{predict_matrix, PairPredictor};

/// Fraction of the N^2 ordered pairs (diagonal included) on which "same cluster"
/// agrees with "same label". Outliers count as singleton clusters.
pub fn pairwise_accuracy(predicted: &Clustering, gt: &[u32]) -> Result<f64> {
    let n = predicted.len();
    if n != gt.len() {
        return Err(Error::SizeMismatch(n, gt.len()));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let a = &predicted.assignments;
    let mut agree = 0usize;
    for i in 0..n {
        for j in 0..n {
            let same_pred = i == j || (a[i].is_some() && a[i] == a[j]);
            agree += usize::from(same_pred == (gt[i] == gt[j]));
        }
    }
    Ok(agree as f64 / (n * n) as f64)
}

/// One processing method of the experiment table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub input: PairKind,
    pub lift: bool,
    /// Use the true number of faces as `m` instead of the configured value.
    pub oracle_m: bool,
}

impl Variant {
    /// The six rows: hard/soft without lifting, hard/soft with lifting and fixed `m`,
    /// hard/soft with lifting and oracle `m`.
    pub const TABLE: [Variant; 6] = [
        Variant { input: PairKind::Hard, lift: false, oracle_m: false },
        Variant { input: PairKind::Soft, lift: false, oracle_m: false },
        Variant { input: PairKind::Hard, lift: true, oracle_m: false },
        Variant { input: PairKind::Soft, lift: true, oracle_m: false },
        Variant { input: PairKind::Hard, lift: true, oracle_m: true },
        Variant { input: PairKind::Soft, lift: true, oracle_m: true },
    ];

    pub fn label(&self, fixed_m: usize) -> String {
        let input = match self.input {
            PairKind::Hard => "X_hard",
            PairKind::Soft => "X_soft",
        };
        let lift = if self.lift { "ML" } else { "no ML" };
        let m = if self.oracle_m { "oracle m".to_string() } else { format!("m={fixed_m}") };
        format!("{input}, {lift}, {m}")
    }

    fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        PipelineConfig {
            hard_input: self.input == PairKind::Hard,
            skip_lift: !self.lift,
            estimate_m: false,
            ..base.clone()
        }
    }
}

/// What to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub noise_levels: Vec<f64>,
    pub variants: Vec<Variant>,
    pub config: PipelineConfig,
    /// Seed of the added noise.
    pub noise_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            noise_levels: vec![0.0, 0.01, 0.032],
            variants: Variant::TABLE.to_vec(),
            config: PipelineConfig::default(),
            noise_seed: 0,
        }
    }
}

/// Per cloud and noise level: patch count, true face count and one accuracy per variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudResult {
    pub cloud: String,
    pub sigma: f64,
    pub num_patches: usize,
    pub oracle_m: usize,
    pub accuracy: Vec<f64>,
    /// Solver iterations per variant (0 without lifting).
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub spec: ExperimentSpec,
    pub variant_labels: Vec<String>,
    /// `mean_accuracy[v][s]` for variant `v` and noise level `s`.
    pub mean_accuracy: Vec<Vec<f64>>,
    pub clouds: Vec<CloudResult>,
}

/// Evaluates every variant on every cloud and noise level.
pub fn run_experiment(
    clouds: &[PointCloud],
    predictor: &(impl PairPredictor + ?Sized),
    spec: &ExperimentSpec,
) -> Result<ExperimentResults> {
    spec.config.validate()?;
    if clouds.is_empty() {
        return Err(Error::InvalidInput("no clouds to evaluate".into()));
    }
    let jobs: Vec<(usize, usize)> =
        (0..spec.noise_levels.len()).flat_map(|s| (0..clouds.len()).map(move |c| (s, c))).collect();
    let results = jobs
        .par_iter()
        .map(|&(s, c)| {
            let sigma = spec.noise_levels[s];
            let stream = (s * clouds.len() + c) as u64;
            let mut rng = crate::seed::rng_for(spec.noise_seed, stream);
            let noisy = add_noise(&clouds[c], sigma, &mut rng)?;
            let (_, patches) = patch_cloud(&noisy, &spec.config, c as u64)?;
            let labels = patch_labels(&patches)?;
            let mut distinct = labels.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let oracle_m = distinct.len();
            let features: Vec<_> = patches.iter().map(patch_statistics).collect();
            let centroids: Vec<_> = patches.iter().map(|p| p.centroid).collect();
            let soft = predict_matrix(predictor, &features, &centroids);
            let mut accuracy = Vec::new();
            let mut iterations = Vec::new();
            let mut converged = Vec::new();
            for v in &spec.variants {
                let m = if v.oracle_m { oracle_m } else { spec.config.m };
                let r = segment_matrix(soft.clone(), m, &v.apply(&spec.config))?;
                accuracy.push(pairwise_accuracy(&r.clusters, &labels)?);
                iterations.push(r.lifted.as_ref().map_or(0, |l| l.iterations));
                converged.push(r.lifted.as_ref().is_none_or(|l| l.converged));
            }
            Ok(CloudResult {
                cloud: clouds[c].name.clone(),
                sigma,
                num_patches: patches.len(),
                oracle_m,
                accuracy,
                iterations,
                converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_accuracy = (0..spec.variants.len())
        .map(|v| {
            spec.noise_levels
                .iter()
                .map(|&sigma| {
                    let rows: Vec<f64> =
                        results.iter().filter(|r| r.sigma == sigma).map(|r| r.accuracy[v]).collect();
                    rows.iter().sum::<f64>() / rows.len() as f64
                })
                .collect()
        })
        .collect();
    Ok(ExperimentResults {
        variant_labels: spec.variants.iter().map(|v| v.label(spec.config.m)).collect(),
        spec: spec.clone(),
        mean_accuracy,
        clouds: results,
    })
}

impl ExperimentResults {
    /// Rows are variants, columns noise levels, cells mean accuracy in percent.
    pub fn render_table(&self) -> String {
        let width = self.variant_labels.iter().map(String::len).max().unwrap_or(0).max(8);
        let mut out = format!("{:width$}", "");
        for &s in &self.spec.noise_levels {
            let head = if s == 0.0 { "no noise".to_string() } else { format!("sigma={s}") };
            let _ = write!(out, " | {head:>12}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(width + 15 * self.spec.noise_levels.len()));
        out.push('\n');
        for (label, row) in self.variant_labels.iter().zip(&self.mean_accuracy) {
            let _ = write!(out, "{label:width$}");
            for v in row {
                let _ = write!(out, " | {:>11.2}%", 100.0 * v);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(pred: &[i64], gt: &[u32]) -> f64 {
        let n = pred.len();
        let mut hits = 0;
        for i in 0..n {
            for j in 0..n {
                let p = i == j || (pred[i] >= 0 && pred[i] == pred[j]);
                if p == (gt[i] == gt[j]) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (n * n) as f64
    }

    #[test]
    fn identical_is_perfect() {
        let gt = [0u32, 0, 1, 2, 2, 2];
        let c = Clustering::from_labels(&[5, 5, 1, 3, 3, 3]);
        assert_eq!(pairwise_accuracy(&c, &gt).unwrap(), 1.0);
    }

    #[test]
    fn two_patches_split() {
        let c = Clustering::from_labels(&[0, 1]);
        assert_eq!(pairwise_accuracy(&c, &[4, 4]).unwrap(), 0.5);
    }

    #[test]
    fn one_cluster_vs_two_faces() {
        let n = 10;
        let gt: Vec<u32> = (0..n).map(|i| u32::from(i >= n / 2)).collect();
        let c = Clustering::from_labels(&vec![0; n as usize]);
        // Correct: the two within-face blocks, 2 * (n/2)^2 of n^2 entries.
        assert_eq!(pairwise_accuracy(&c, &gt).unwrap(), 0.5);
        assert_eq!(pairwise_accuracy(&c, &gt).unwrap(), brute_force(&vec![0; n as usize], &gt));
    }

    #[test]
    fn size_mismatch() {
        assert!(matches!(pairwise_accuracy(&Clustering::from_labels(&[0]), &[0, 0]), Err(Error::SizeMismatch(1, 2))));
    }

    #[test]
    fn table_labels() {
        let labels: Vec<String> = Variant::TABLE.iter().map(|v| v.label(14)).collect();
        assert_eq!(labels[0], "X_hard, no ML, m=14");
        assert_eq!(labels[5], "X_soft, ML, oracle m");
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_is_symmetric(
            pairs in prop::collection::vec((-1i64..4, 0u32..4), 1..25)
        ) {
            let pred: Vec<i64> = pairs.iter().map(|p| p.0).collect();
            let gt: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            let c = Clustering::from_labels(&pred);
            let acc = pairwise_accuracy(&c, &gt).unwrap();
            prop_assert!((acc - brute_force(&pred, &gt)).abs() < 1e-12);
            // Swap roles: ground truth as prediction. Outliers become fresh labels.
            let mut next = 100u32;
            let pred_as_gt: Vec<u32> = pred.iter().map(|&l| if l < 0 { next += 1; next } else { l as u32 }).collect();
            let gt_as_pred = Clustering::from_labels(&gt.iter().map(|&l| i64::from(l)).collect::<Vec<_>>());
            prop_assert!((pairwise_accuracy(&gt_as_pred, &pred_as_gt).unwrap() - acc).abs() < 1e-12);
            let relabeled = Clustering::from_labels(&pred.iter().map(|&l| if l < 0 { l } else { 7 - l }).collect::<Vec<_>>());
            prop_assert_eq!(pairwise_accuracy(&relabeled, &gt).unwrap(), acc);
        }

        #[test]
        fn correct_extra_patch_never_hurts(
            pairs in prop::collection::vec((0i64..4, 0u32..4), 1..20)
        ) {
            let pred: Vec<i64> = pairs.iter().map(|p| p.0).collect();
            let gt: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            let before = pairwise_accuracy(&Clustering::from_labels(&pred), &gt).unwrap();
            // A new patch on a new face, predicted as its own cluster, agrees on every pair.
            let mut p2 = pred.clone();
            p2.push(99);
            let mut g2 = gt.clone();
            g2.push(99);
            let after = pairwise_accuracy(&Clustering::from_labels(&p2), &g2).unwrap();
            prop_assert!(after >= before - 1e-12);
        }
    }
}
