use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_matrix, Adam, ClassWeights, MlpModel, PairFeatures};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::patching::{patch_statistics, Patch, PatchFeatures};

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Loss weight of the "same face" class relative to "different".
    pub class_weight_ratio: f64,
    /// Update rounds per cloud and epoch.
    pub rounds_per_cloud: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 13,
            class_weight_ratio: 8.0,
            rounds_per_cloud: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("train: {what}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 || self.rounds_per_cloud == 0 {
            return bad("epochs and rounds_per_cloud must be positive");
        }
        if !(self.class_weight_ratio >= 1.0 && self.class_weight_ratio.is_finite()) {
            return bad("class_weight_ratio must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        Ok(())
    }
}

/// The per-patch inputs of one labeled cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedCloud {
    pub name: String,
    pub features: Vec<PatchFeatures>,
    pub centroids: Vec<Point>,
    pub labels: Vec<u32>,
}

impl PatchedCloud {
    pub fn from_patches(name: impl Into<String>, patches: &[Patch]) -> Result<Self> {
        let labels = patches.iter().map(|p| p.gt_label).collect::<Option<Vec<u32>>>().ok_or(Error::NoLabels)?;
        Ok(PatchedCloud {
            name: name.into(),
            features: patches.iter().map(patch_statistics).collect(),
            centroids: patches.iter().map(|p| p.centroid).collect(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Fraction of the N^2 ordered pairs whose thresholded prediction matches the labels.
    pub fn pair_accuracy(&self, model: &MlpModel) -> f64 {
        let n = self.len();
        if n == 0 {
            return 1.0;
        }
        let q = predict_matrix(model, &self.features, &self.centroids);
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                hits += usize::from((q.get(i, j) >= 0.5) == (self.labels[i] == self.labels[j]));
            }
        }
        hits as f64 / (n * n) as f64
    }
}

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation accuracy (training accuracy
    /// when no validation clouds are given).
    pub model: MlpModel,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
}

const GRAD_CHUNK: usize = 32;

fn batch_step(model: &MlpModel, batch: &[(PairFeatures, bool)], weights: ClassWeights) -> Result<(f64, Vec<f64>)> {
    let denom = batch.len() as f64;
    let partials = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; model.num_params()];
            let loss = model.accumulate(chunk, weights, denom, &mut g)?;
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}

fn mean_accuracy(model: &MlpModel, clouds: &[PatchedCloud]) -> f64 {
    clouds.iter().map(|c| c.pair_accuracy(model)).sum::<f64>() / clouds.len() as f64
}

/// Trains `model` by repeatedly fixing one random patch of a cloud, pairing it with
/// every patch of that cloud and taking one Adam step on the weighted loss.
pub fn train(
    mut model: MlpModel,
    train_set: &[PatchedCloud],
    val_set: &[PatchedCloud],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let train_set: Vec<&PatchedCloud> = train_set.iter().filter(|c| !c.is_empty()).collect();
    if train_set.is_empty() {
        return Err(Error::NoLabels);
    }
    let owned: Vec<PatchedCloud> = train_set.iter().map(|c| (*c).clone()).collect();
    let weights = ClassWeights::from_ratio(config.class_weight_ratio);
    let mut adam = Adam::new(model.num_params(), config.lr, config.beta1, config.beta2, config.eps);
    let mut rng = crate::seed::rng_for(config.rng_seed, 0);
    let mut order: Vec<usize> = (0..owned.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, MlpModel)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for &ci in &order {
            let cloud = &owned[ci];
            let n = cloud.len();
            for _ in 0..config.rounds_per_cloud {
                let a = rng.random_range(0..n);
                let batch: Vec<(PairFeatures, bool)> = (0..n)
                    .map(|j| {
                        let (i, j) = if rng.random::<bool>() { (a, j) } else { (j, a) };
                        let pair = PairFeatures::new(
                            &cloud.features[i],
                            &cloud.features[j],
                            cloud.centroids[i] - cloud.centroids[j],
                        );
                        (pair, cloud.labels[i] == cloud.labels[j])
                    })
                    .collect();
                let (loss, grad) = batch_step(&model, &batch, weights)?;
                adam.step(model.params_mut(), &grad);
                loss_sum += loss;
                steps += 1;
            }
        }
        let train_accuracy = mean_accuracy(&model, &owned);
        let val_accuracy = (!val_set.is_empty()).then(|| mean_accuracy(&model, val_set));
        history.push(EpochMetrics { epoch, mean_loss: loss_sum / steps as f64, train_accuracy, val_accuracy });
        let score = val_accuracy.unwrap_or(train_accuracy);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best_epoch, history })
}
