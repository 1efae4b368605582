use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PairFeatures, PairPredictor};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::patching::{PatchFeatures, NUM_FEATURES};

/// Layer sizes of an [`MlpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub features: usize,
    pub hidden: usize,
    pub residual_blocks: usize,
    /// Zero the second affine map of every residual block at initialization.
    #[serde(default)]
    pub zero_init_residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { features: NUM_FEATURES, hidden: 30, residual_blocks: 2, zero_init_residual: false }
    }
}

/// Shape and location of one affine layer in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub offset: usize,
}

impl Layer {
    fn len(&self) -> usize {
        self.n_out * (self.n_in + 1)
    }

    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.n_out * self.n_in]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.n_out * self.n_in;
        &p[start..start + self.n_out]
    }

    /// `out = W x + b`.
    fn forward(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        let w = self.weights(p);
        for (o, (row, b)) in out.iter_mut().zip(w.chunks_exact(self.n_in).zip(self.bias(p))) {
            *o = b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients for upstream gradient `dout` and, if requested,
    /// writes the input gradient into `dx`.
    fn backward(&self, p: &[f64], grad: &mut [f64], x: &[f64], dout: &[f64], dx: Option<&mut [f64]>) {
        let wlen = self.n_out * self.n_in;
        let (gw, gb) = grad[self.offset..self.offset + self.len()].split_at_mut(wlen);
        for (o, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            for (g, xi) in gw[o * self.n_in..(o + 1) * self.n_in].iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            let w = self.weights(p);
            for (o, &d) in dout.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (v, wi) in dx.iter_mut().zip(&w[o * self.n_in..(o + 1) * self.n_in]) {
                    *v += d * wi;
                }
            }
        }
    }
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn relu_mask(z: &[f64], d: &mut [f64]) {
    for (dv, &zv) in d.iter_mut().zip(z) {
        if zv <= 0.0 {
            *dv = 0.0;
        }
    }
}

/// Pairwise same-face classifier over patch statistics.
///
/// Both patches pass through one shared encoder; the two embeddings are combined,
/// concatenated with the centroid shift, fused, refined by residual blocks
/// `y = ReLU(f(x) + x)` and mapped to two softmax classes (different, same).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    config: ModelConfig,
    encoder: Layer,
    combiner: Layer,
    fusion: Layer,
    blocks: Vec<(Layer, Layer)>,
    head: Layer,
    params: Vec<f64>,
}

/// Class weights of the cross-entropy loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub same: f64,
    pub different: f64,
}

impl ClassWeights {
    /// Weight `ratio` on the "same face" class, 1 on "different".
    pub fn from_ratio(ratio: f64) -> Self {
        ClassWeights { same: ratio, different: 1.0 }
    }
}

/// Activations of one forward pass, kept for the backward pass.
struct Trace {
    xi: Vec<f64>,
    xj: Vec<f64>,
    zi: Vec<f64>,
    zj: Vec<f64>,
    cat: Vec<f64>,
    zc: Vec<f64>,
    fused_in: Vec<f64>,
    zf: Vec<f64>,
    /// (block input, first pre-activation, first activation, pre-activation of the sum)
    blocks: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>,
    last: Vec<f64>,
    probs: [f64; 2],
}

impl MlpModel {
    /// Builds a model with Kaiming-normal weights and uniform `±1/sqrt(fan_in)` biases.
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Self {
        let h = config.hidden;
        let mut offset = 0;
        let mut layer = |n_in: usize, n_out: usize| {
            let l = Layer { n_in, n_out, offset };
            offset += l.len();
            l
        };
        let encoder = layer(config.features, h);
        let combiner = layer(2 * h, h);
        let fusion = layer(h + 3, h);
        let blocks: Vec<(Layer, Layer)> = (0..config.residual_blocks).map(|_| (layer(h, h), layer(h, h))).collect();
        let head = layer(h, 2);
        let mut model = MlpModel { config, encoder, combiner, fusion, blocks, head, params: vec![0.0; offset] };
        for l in model.layers() {
            let std = (2.0 / l.n_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let bound = 1.0 / (l.n_in as f64).sqrt();
            let wlen = l.n_in * l.n_out;
            for i in 0..wlen {
                model.params[l.offset + i] = normal.sample(rng);
            }
            for i in 0..l.n_out {
                model.params[l.offset + wlen + i] = rng.random_range(-bound..bound);
            }
        }
        if config.zero_init_residual {
            for (_, second) in model.blocks.clone() {
                model.params[second.offset..second.offset + second.len()].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        model
    }

    pub fn config(&self) -> ModelConfig {
        self.config
    }

    /// All layers in parameter order.
    pub fn layers(&self) -> Vec<Layer> {
        let mut v = vec![self.encoder, self.combiner, self.fusion];
        for (a, b) in &self.blocks {
            v.push(*a);
            v.push(*b);
        }
        v.push(self.head);
        v
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_dims(&self, fi: &[f64], fj: &[f64]) -> Result<()> {
        for f in [fi, fj] {
            if f.len() != self.config.features {
                return Err(Error::DimensionMismatch { expected: self.config.features, got: f.len() });
            }
        }
        Ok(())
    }

    fn trace(&self, fi: &[f64], fj: &[f64], shift: Point) -> Trace {
        let h = self.config.hidden;
        let p = &self.params;
        let mut zi = vec![0.0; h];
        let mut zj = vec![0.0; h];
        self.encoder.forward(p, fi, &mut zi);
        self.encoder.forward(p, fj, &mut zj);
        let mut cat = Vec::with_capacity(2 * h);
        cat.extend(zi.iter().map(|v| v.max(0.0)));
        cat.extend(zj.iter().map(|v| v.max(0.0)));
        let mut zc = vec![0.0; h];
        self.combiner.forward(p, &cat, &mut zc);
        let mut fused_in = Vec::with_capacity(h + 3);
        fused_in.extend(zc.iter().map(|v| v.max(0.0)));
        fused_in.extend(shift.to_array());
        let mut zf = vec![0.0; h];
        self.fusion.forward(p, &fused_in, &mut zf);
        let mut x: Vec<f64> = zf.iter().map(|v| v.max(0.0)).collect();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (first, second) in &self.blocks {
            let mut z1 = vec![0.0; h];
            first.forward(p, &x, &mut z1);
            let mut a1 = z1.clone();
            relu_in_place(&mut a1);
            let mut z2 = vec![0.0; h];
            second.forward(p, &a1, &mut z2);
            for (z, xv) in z2.iter_mut().zip(&x) {
                *z += xv;
            }
            let mut y = z2.clone();
            relu_in_place(&mut y);
            blocks.push((std::mem::replace(&mut x, y), z1, a1, z2));
        }
        let mut logits = [0.0; 2];
        self.head.forward(p, &x, &mut logits);
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let probs = [e0 / (e0 + e1), e1 / (e0 + e1)];
        Trace { xi: fi.to_vec(), xj: fj.to_vec(), zi, zj, cat, zc, fused_in, zf, blocks, last: x, probs }
    }

    /// Softmax output `[p(different), p(same)]`.
    pub fn class_probabilities(&self, fi: &[f64], fj: &[f64], shift: Point) -> Result<[f64; 2]> {
        self.check_dims(fi, fj)?;
        Ok(self.trace(fi, fj, shift).probs)
    }

    /// Probability that the two patches lie on the same face.
    pub fn forward(&self, pair: &PairFeatures) -> Result<f64> {
        Ok(self.class_probabilities(&pair.feat_i, &pair.feat_j, pair.shift)?[1])
    }

    /// Hidden state after the fusion layer and after each residual block.
    pub fn hidden_states(&self, pair: &PairFeatures) -> Result<Vec<Vec<f64>>> {
        self.check_dims(&pair.feat_i, &pair.feat_j)?;
        let t = self.trace(&pair.feat_i, &pair.feat_j, pair.shift);
        let mut v: Vec<Vec<f64>> = t.blocks.iter().map(|b| b.0.clone()).collect();
        v.push(t.last);
        Ok(v)
    }

    fn backward(&self, t: &Trace, dlogits: [f64; 2], grad: &mut [f64]) {
        let h = self.config.hidden;
        let p = &self.params;
        let mut dx = vec![0.0; h];
        self.head.backward(p, grad, &t.last, &dlogits, Some(&mut dx));
        let mut tmp = vec![0.0; h];
        for ((first, second), (input, z1, a1, zsum)) in self.blocks.iter().zip(&t.blocks).rev() {
            relu_mask(zsum, &mut dx);
            // dx now holds the gradient of the block sum; the skip path passes it through.
            second.backward(p, grad, a1, &dx, Some(&mut tmp));
            relu_mask(z1, &mut tmp);
            let mut dinput = vec![0.0; h];
            first.backward(p, grad, input, &tmp, Some(&mut dinput));
            for (d, s) in dinput.iter_mut().zip(&dx) {
                *d += s;
            }
            dx = dinput;
        }
        relu_mask(&t.zf, &mut dx);
        let mut dfused = vec![0.0; h + 3];
        self.fusion.backward(p, grad, &t.fused_in, &dx, Some(&mut dfused));
        let mut dc = dfused[..h].to_vec();
        relu_mask(&t.zc, &mut dc);
        let mut dcat = vec![0.0; 2 * h];
        self.combiner.backward(p, grad, &t.cat, &dc, Some(&mut dcat));
        let (dhi, dhj) = dcat.split_at_mut(h);
        relu_mask(&t.zi, dhi);
        relu_mask(&t.zj, dhj);
        self.encoder.backward(p, grad, &t.xi, dhi, None);
        self.encoder.backward(p, grad, &t.xj, dhj, None);
    }

    /// Weighted cross-entropy averaged over the batch, and its gradient with respect to
    /// every parameter. Labels are `true` for "same face".
    pub fn loss_and_grad(&self, batch: &[(PairFeatures, bool)], weights: ClassWeights) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(batch, weights, batch.len().max(1) as f64, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds the gradient of `sum(-w log p) / denom` over `batch` into `grad`; returns that sum / denom.
    pub(crate) fn accumulate(
        &self,
        batch: &[(PairFeatures, bool)],
        weights: ClassWeights,
        denom: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let mut loss = 0.0;
        for (pair, same) in batch {
            self.check_dims(&pair.feat_i, &pair.feat_j)?;
            let t = self.trace(&pair.feat_i, &pair.feat_j, pair.shift);
            let (class, w) = if *same { (1, weights.same) } else { (0, weights.different) };
            loss -= w * t.probs[class].max(f64::MIN_POSITIVE).ln();
            let scale = w / denom;
            let mut dlogits = [scale * t.probs[0], scale * t.probs[1]];
            dlogits[class] -= scale;
            self.backward(&t, dlogits, grad);
        }
        Ok(loss / denom)
    }

    const MAGIC: &'static [u8; 8] = b"FSEGMLP\0";
    const VERSION: u32 = 1;

    /// Writes the model: magic, version, JSON header length and header, then row-major
    /// little-endian f64 parameters in layer order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = serde_json::to_vec(&ModelHeader { config: self.config, layers: self.layers() })?;
        let mut buf = Vec::with_capacity(16 + header.len() + 8 * self.params.len());
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&Self::VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for v in &self.params {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf).map_err(|reason| Error::format(path, reason))
    }

    pub fn from_bytes(buf: &[u8]) -> std::result::Result<Self, String> {
        if buf.len() < 16 || &buf[..8] != Self::MAGIC {
            return Err("not a facetseg model file".into());
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
        if version != Self::VERSION {
            return Err(format!("unsupported model version {version}"));
        }
        let hlen = u32::from_le_bytes(buf[12..16].try_into().expect("4 bytes")) as usize;
        let body = buf.get(16..16 + hlen).ok_or("truncated header")?;
        let header: ModelHeader = serde_json::from_slice(body).map_err(|e| e.to_string())?;
        let c = header.config;
        if c.features == 0 || c.hidden == 0 || c.features > 4096 || c.hidden > 4096 || c.residual_blocks > 256 {
            return Err("implausible layer sizes".into());
        }
        let mut model = MlpModel::new(header.config, &mut crate::seed::rng_for(0, 0));
        if model.layers() != header.layers {
            return Err("layer table does not match the model configuration".into());
        }
        let data = &buf[16 + hlen..];
        if data.len() != 8 * model.params.len() {
            return Err(format!("expected {} parameters, found {} bytes", model.params.len(), data.len()));
        }
        for (p, chunk) in model.params.iter_mut().zip(data.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    config: ModelConfig,
    layers: Vec<Layer>,
}

impl PairPredictor for MlpModel {
    fn probability(&self, a: &PatchFeatures, b: &PatchFeatures, shift: Point) -> f64 {
        self.class_probabilities(&a.values, &b.values, shift).map(|p| p[1]).unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> ModelConfig {
        ModelConfig { features: NUM_FEATURES, hidden: 6, residual_blocks: 2, zero_init_residual: false }
    }

    fn random_pair(rng: &mut impl Rng, scale: f64) -> PairFeatures {
        let mut v = || (0..NUM_FEATURES).map(|_| rng.random_range(-scale..scale)).collect::<Vec<f64>>();
        let (feat_i, feat_j) = (v(), v());
        PairFeatures { feat_i, feat_j, shift: Point::new(rng.random_range(-1.0..1.0), 0.3, -0.2) }
    }

    #[test]
    fn probabilities_sum_to_one_and_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let model = MlpModel::new(ModelConfig::default(), &mut rng);
            let pair = random_pair(&mut rng, 10.0 / (NUM_FEATURES as f64).sqrt());
            let p = model.class_probabilities(&pair.feat_i, &pair.feat_j, pair.shift).unwrap();
            assert!(p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn self_pair_matches_duplicate_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = MlpModel::new(ModelConfig::default(), &mut rng);
        let a = random_pair(&mut rng, 1.0).feat_i;
        let p1 = model.forward(&PairFeatures { feat_i: a.clone(), feat_j: a.clone(), shift: Point::ZERO }).unwrap();
        let p2 = model.forward(&PairFeatures { feat_i: a.clone(), feat_j: a, shift: Point::ZERO }).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn dimension_mismatch() {
        let model = MlpModel::new(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        let pair = PairFeatures { feat_i: vec![0.0; 3], feat_j: vec![0.0; NUM_FEATURES], shift: Point::ZERO };
        assert!(matches!(model.forward(&pair), Err(Error::DimensionMismatch { expected: 10, got: 3 })));
    }

    #[test]
    fn zero_initialized_blocks_are_relu_identity() {
        let config = ModelConfig { zero_init_residual: true, ..ModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = MlpModel::new(config, &mut rng);
        let states = model.hidden_states(&random_pair(&mut rng, 1.0)).unwrap();
        assert_eq!(states.len(), config.residual_blocks + 1);
        for w in states.windows(2) {
            // Block inputs are already non-negative, so ReLU(0 + x) = x.
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn uniform_prediction_costs_ln2() {
        let mut model = MlpModel::new(small_config(), &mut ChaCha8Rng::seed_from_u64(1));
        let head = model.head;
        model.params[head.offset..head.offset + head.len()].iter_mut().for_each(|v| *v = 0.0);
        let pair = random_pair(&mut ChaCha8Rng::seed_from_u64(2), 1.0);
        let (loss, _) = model.loss_and_grad(&[(pair, false)], ClassWeights::from_ratio(8.0)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_prediction_costs_nothing() {
        let mut model = MlpModel::new(small_config(), &mut ChaCha8Rng::seed_from_u64(1));
        let head = model.head;
        let blen = head.n_out * head.n_in;
        model.params[head.offset..head.offset + blen].iter_mut().for_each(|v| *v = 0.0);
        model.params[head.offset + blen + 1] = 60.0;
        let pair = random_pair(&mut ChaCha8Rng::seed_from_u64(2), 1.0);
        let (loss, _) = model.loss_and_grad(&[(pair, true)], ClassWeights::from_ratio(8.0)).unwrap();
        assert!(loss < 1e-20, "{loss}");
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = MlpModel::new(ModelConfig::default(), &mut rng);
        let batch: Vec<(PairFeatures, bool)> = (0..6).map(|i| (random_pair(&mut rng, 1.0), i % 2 == 0)).collect();
        let mut rev = batch.clone();
        rev.reverse();
        let w = ClassWeights::from_ratio(8.0);
        let (a, ga) = model.loss_and_grad(&batch, w).unwrap();
        let (b, gb) = model.loss_and_grad(&rev, w).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(ga.iter().zip(&gb).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = MlpModel::new(small_config(), &mut rng);
        let batch: Vec<(PairFeatures, bool)> = (0..5).map(|i| (random_pair(&mut rng, 1.0), i % 2 == 1)).collect();
        let w = ClassWeights::from_ratio(8.0);
        let (_, grad) = model.loss_and_grad(&batch, w).unwrap();
        let h = 1e-5;
        for k in 0..model.num_params() {
            let orig = model.params[k];
            model.params[k] = orig + h;
            let (lp, _) = model.loss_and_grad(&batch, w).unwrap();
            model.params[k] = orig - h;
            let (lm, _) = model.loss_and_grad(&batch, w).unwrap();
            model.params[k] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {k}: analytic {} numeric {numeric}", grad[k]);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let model = MlpModel::new(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        model.save(&path).unwrap();
        assert_eq!(MlpModel::load(&path).unwrap(), model);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(MlpModel::from_bytes(&bytes).is_err());
        assert!(MlpModel::from_bytes(b"garbage").is_err());
    }
}
