//! Fully connected scoring heads and their online SGD training.
//!
//! Both heads share one shape: feature (3*3*C) -> hidden -> hidden -> logits
//! with ReLU between, softmax cross-entropy on top. The object head emits 2
//! logits (background, object), the localization head 5. Conv weights are
//! never trained here — only head parameters move.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LocClass;

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// (out, in) row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl FcLayer {
    pub fn random<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let std = (2.0 / in_dim as f32).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| {
                let z: f32 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        FcLayer {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o] as f64;
            for (w, v) in row.iter().zip(x) {
                acc += *w as f64 * *v as f64;
            }
            out.push(acc as f32);
        }
        out
    }
}

/// One scoring branch: two ReLU hidden layers and a logits layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub hidden1: FcLayer,
    pub hidden2: FcLayer,
    pub logits: FcLayer,
}

impl HeadParams {
    pub fn random<R: Rng>(in_dim: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        HeadParams {
            hidden1: FcLayer::random(in_dim, hidden, rng),
            hidden2: FcLayer::random(hidden, hidden, rng),
            logits: FcLayer::random(hidden, classes, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden1.in_dim
    }

    pub fn classes(&self) -> usize {
        self.logits.out_dim
    }
}

fn relu_vec(mut v: Vec<f32>) -> Vec<f32> {
    for x in &mut v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    v
}

/// Raw logits for one feature vector.
pub fn head_forward(head: &HeadParams, features: &[f32]) -> Result<Vec<f32>> {
    if features.len() != head.in_dim() {
        return Err(Error::Config(format!(
            "head expects {} inputs, feature has {}",
            head.in_dim(),
            features.len()
        )));
    }
    let a1 = relu_vec(head.hidden1.forward(features));
    let a2 = relu_vec(head.hidden2.forward(&a1));
    Ok(head.logits.forward(&a2))
}

/// Numerically stable softmax (max-shifted, f64 accumulation).
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let m = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|z| ((*z as f64) - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / sum) as f32).collect()
}

/// Softmax probability of the object class (index 1) on a 2-class head.
pub fn positive_probability(head: &HeadParams, features: &[f32]) -> Result<f32> {
    if head.classes() != 2 {
        return Err(Error::Config(format!(
            "positive probability needs a 2-class head, got {}",
            head.classes()
        )));
    }
    Ok(softmax(&head_forward(head, features)?)[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub iterations: usize,
    /// Learning rate of the two hidden layers.
    pub lr_hidden: f32,
    /// Learning rate of the logits layer.
    pub lr_logits: f32,
    pub momentum: f32,
    /// L2 decay on weights (biases are not decayed).
    pub weight_decay: f32,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            iterations: 10,
            lr_hidden: 1e-2,
            lr_logits: 1e-1,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

struct Tensors {
    h1_w: Vec<f64>,
    h1_b: Vec<f64>,
    h2_w: Vec<f64>,
    h2_b: Vec<f64>,
    lg_w: Vec<f64>,
    lg_b: Vec<f64>,
}

impl Tensors {
    fn zeros_like(head: &HeadParams) -> Self {
        Tensors {
            h1_w: vec![0.0; head.hidden1.weights.len()],
            h1_b: vec![0.0; head.hidden1.bias.len()],
            h2_w: vec![0.0; head.hidden2.weights.len()],
            h2_b: vec![0.0; head.hidden2.bias.len()],
            lg_w: vec![0.0; head.logits.weights.len()],
            lg_b: vec![0.0; head.logits.bias.len()],
        }
    }
}

fn fc_forward_f64(layer: &FcLayer, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layer.out_dim);
    for o in 0..layer.out_dim {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = layer.bias[o] as f64;
        for (w, v) in row.iter().zip(x) {
            acc += *w as f64 * v;
        }
        out.push(acc);
    }
    out
}

/// Mean softmax cross-entropy over the batch plus gradients for every head
/// parameter. The whole pass runs in f64 so the loss surface is smooth
/// enough for finite-difference verification.
fn loss_and_gradients(
    head: &HeadParams,
    batch: &[&[f32]],
    labels: &[usize],
) -> Result<(f64, Tensors)> {
    if batch.is_empty() || batch.len() != labels.len() {
        return Err(Error::Training(format!(
            "bad batch: {} features, {} labels",
            batch.len(),
            labels.len()
        )));
    }
    let classes = head.classes();
    let mut g = Tensors::zeros_like(head);
    let mut loss = 0.0f64;
    let inv_b = 1.0 / batch.len() as f64;
    let (d_in, d_h) = (head.in_dim(), head.hidden1.out_dim);

    for (x, &y) in batch.iter().zip(labels) {
        if y >= classes {
            return Err(Error::Training(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let a1: Vec<f64> = fc_forward_f64(&head.hidden1, &xf)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let a2: Vec<f64> = fc_forward_f64(&head.hidden2, &a1)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let z = fc_forward_f64(&head.logits, &a2);
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|&v| (v - zmax).exp()).collect();
        let esum: f64 = exps.iter().sum();
        let p: Vec<f64> = exps.iter().map(|&e| e / esum).collect();
        loss -= p[y].max(1e-300).ln();

        // dL/dz = p - onehot(y)
        let dz: Vec<f64> = (0..classes)
            .map(|c| p[c] - if c == y { 1.0 } else { 0.0 })
            .collect();
        let mut da2 = vec![0.0f64; d_h];
        for c in 0..classes {
            g.lg_b[c] += dz[c] * inv_b;
            for j in 0..d_h {
                g.lg_w[c * d_h + j] += dz[c] * a2[j] * inv_b;
                da2[j] += head.logits.weights[c * d_h + j] as f64 * dz[c];
            }
        }
        let mut da1 = vec![0.0f64; d_h];
        for j in 0..d_h {
            if a2[j] <= 0.0 {
                continue;
            }
            g.h2_b[j] += da2[j] * inv_b;
            for i in 0..d_h {
                g.h2_w[j * d_h + i] += da2[j] * a1[i] * inv_b;
                da1[i] += head.hidden2.weights[j * d_h + i] as f64 * da2[j];
            }
        }
        for j in 0..d_h {
            if a1[j] <= 0.0 {
                continue;
            }
            g.h1_b[j] += da1[j] * inv_b;
            for i in 0..d_in {
                g.h1_w[j * d_in + i] += da1[j] * xf[i] * inv_b;
            }
        }
    }
    Ok((loss * inv_b, g))
}

fn apply_tensor(
    params: &mut [f32],
    bias: bool,
    grads: &[f64],
    vel: &mut [f64],
    lr: f32,
    cfg: &SgdConfig,
) {
    let decay = if bias { 0.0 } else { cfg.weight_decay as f64 };
    for ((w, g), v) in params.iter_mut().zip(grads).zip(vel) {
        let step = *g + decay * *w as f64;
        *v = cfg.momentum as f64 * *v - lr as f64 * step;
        *w = (*w as f64 + *v) as f32;
    }
}

fn sgd_step(head: &mut HeadParams, grads: &Tensors, vel: &mut Tensors, cfg: &SgdConfig) {
    apply_tensor(&mut head.hidden1.weights, false, &grads.h1_w, &mut vel.h1_w, cfg.lr_hidden, cfg);
    apply_tensor(&mut head.hidden1.bias, true, &grads.h1_b, &mut vel.h1_b, cfg.lr_hidden, cfg);
    apply_tensor(&mut head.hidden2.weights, false, &grads.h2_w, &mut vel.h2_w, cfg.lr_hidden, cfg);
    apply_tensor(&mut head.hidden2.bias, true, &grads.h2_b, &mut vel.h2_b, cfg.lr_hidden, cfg);
    apply_tensor(&mut head.logits.weights, false, &grads.lg_w, &mut vel.lg_w, cfg.lr_logits, cfg);
    apply_tensor(&mut head.logits.bias, true, &grads.lg_b, &mut vel.lg_b, cfg.lr_logits, cfg);
}

/// Worst relative disagreement between the analytic gradient and a central
/// finite difference over `probes` randomly chosen parameters. Exposed so
/// the verification suite can re-run the check outside the unit tests.
pub fn gradient_check<R: Rng>(
    head: &HeadParams,
    batch: &[&[f32]],
    labels: &[usize],
    probes: usize,
    rng: &mut R,
) -> Result<f64> {
    let (_, analytic) = loss_and_gradients(head, batch, labels)?;
    let tensors: [(&[f32], &[f64]); 6] = [
        (&head.hidden1.weights, &analytic.h1_w),
        (&head.hidden1.bias, &analytic.h1_b),
        (&head.hidden2.weights, &analytic.h2_w),
        (&head.hidden2.bias, &analytic.h2_b),
        (&head.logits.weights, &analytic.lg_w),
        (&head.logits.bias, &analytic.lg_b),
    ];
    fn slot(head: &mut HeadParams, tensor: usize, i: usize) -> &mut f32 {
        match tensor {
            0 => &mut head.hidden1.weights[i],
            1 => &mut head.hidden1.bias[i],
            2 => &mut head.hidden2.weights[i],
            3 => &mut head.hidden2.bias[i],
            4 => &mut head.logits.weights[i],
            _ => &mut head.logits.bias[i],
        }
    }
    let total: usize = tensors.iter().map(|(t, _)| t.len()).sum();
    let mut worst = 0.0f64;
    // Small enough that probes almost never straddle a ReLU kink; the f64
    // loss keeps the quotient noise far below the tolerance.
    let eps = 1e-4f32;
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut tensor = 0;
        while flat >= tensors[tensor].0.len() {
            flat -= tensors[tensor].0.len();
            tensor += 1;
        }
        let mut perturbed = head.clone();
        let base = *slot(&mut perturbed, tensor, flat);
        let hi = base + eps;
        let lo = base - eps;
        *slot(&mut perturbed, tensor, flat) = hi;
        let (up, _) = loss_and_gradients(&perturbed, batch, labels)?;
        *slot(&mut perturbed, tensor, flat) = lo;
        let (down, _) = loss_and_gradients(&perturbed, batch, labels)?;
        // Divide by the realized f32 interval, not the nominal 2*eps, so
        // parameter quantization does not pollute the quotient.
        let fd = (up - down) / (hi as f64 - lo as f64);
        let a = tensors[tensor].1[flat];
        let denom = a.abs().max(fd.abs()).max(1e-4);
        let rel = (a - fd).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

/// Indices into `bank` of the `keep` hardest negatives among `pool`
/// (highest object probability first; equal scores break toward the lower
/// bank index, independent of pool order).
pub fn mine_hard_negatives(
    head: &HeadParams,
    bank: &[Vec<f32>],
    pool: &[usize],
    keep: usize,
) -> Result<Vec<usize>> {
    let mut scored: Vec<(f32, usize)> = Vec::with_capacity(pool.len());
    for &i in pool {
        let f = bank
            .get(i)
            .ok_or_else(|| Error::Training(format!("negative pool index {i} out of bank")))?;
        scored.push((positive_probability(head, f)?, i));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(keep).map(|(_, i)| i).collect())
}

/// Minibatch composition for object-head updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectBatchPolicy {
    pub positives_per_batch: usize,
    pub mined_negatives: usize,
    pub negative_pool: usize,
}

impl Default for ObjectBatchPolicy {
    fn default() -> Self {
        ObjectBatchPolicy {
            positives_per_batch: 32,
            mined_negatives: 96,
            negative_pool: 1024,
        }
    }
}

/// Random draw of `amount` bank indices: without replacement when the bank
/// is large enough, otherwise every index once plus uniform top-up draws.
fn draw_indices<R: Rng>(rng: &mut R, len: usize, amount: usize) -> Vec<usize> {
    if len >= amount {
        index::sample(rng, len, amount).into_vec()
    } else {
        let mut out: Vec<usize> = (0..len).collect();
        while out.len() < amount {
            out.push(rng.random_range(0..len));
        }
        out
    }
}

/// Momentum-SGD training of the 2-class object head: each iteration draws
/// positives, mines hard negatives from a random pool, and takes one step.
/// Returns the per-iteration minibatch loss.
pub fn train_object_head<R: Rng>(
    head: &mut HeadParams,
    positives: &[Vec<f32>],
    negatives: &[Vec<f32>],
    cfg: &SgdConfig,
    policy: &ObjectBatchPolicy,
    rng: &mut R,
) -> Result<Vec<f32>> {
    if positives.is_empty() {
        return Err(Error::Training("object head: empty positive bank".into()));
    }
    if negatives.is_empty() {
        return Err(Error::Training("object head: empty negative bank".into()));
    }
    let mut vel = Tensors::zeros_like(head);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let pos_idx = draw_indices(rng, positives.len(), policy.positives_per_batch);
        let pool = draw_indices(rng, negatives.len(), policy.negative_pool.min(negatives.len()));
        let mined = mine_hard_negatives(head, negatives, &pool, policy.mined_negatives)?;

        let mut batch: Vec<&[f32]> = Vec::with_capacity(pos_idx.len() + mined.len());
        let mut labels = Vec::with_capacity(batch.capacity());
        for &i in &pos_idx {
            batch.push(&positives[i]);
            labels.push(1);
        }
        for &i in &mined {
            batch.push(&negatives[i]);
            labels.push(0);
        }
        let (loss, grads) = loss_and_gradients(head, &batch, &labels)?;
        sgd_step(head, &grads, &mut vel, cfg);
        trace.push(loss as f32);
    }
    Ok(trace)
}

/// Momentum-SGD training of the 5-class localization head on class-balanced
/// minibatches (`per_class` samples from each class bank).
pub fn train_loc_head<R: Rng>(
    head: &mut HeadParams,
    class_banks: &[Vec<Vec<f32>>; 5],
    per_class: usize,
    cfg: &SgdConfig,
    rng: &mut R,
) -> Result<Vec<f32>> {
    for (c, bank) in class_banks.iter().enumerate() {
        if bank.is_empty() {
            return Err(Error::Training(format!(
                "localization head: empty {:?} bank",
                LocClass::from_index(c).unwrap()
            )));
        }
    }
    let mut vel = Tensors::zeros_like(head);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let mut batch: Vec<&[f32]> = Vec::with_capacity(5 * per_class);
        let mut labels = Vec::with_capacity(5 * per_class);
        for (c, bank) in class_banks.iter().enumerate() {
            for i in draw_indices(rng, bank.len(), per_class) {
                batch.push(&bank[i]);
                labels.push(c);
            }
        }
        let (loss, grads) = loss_and_gradients(head, &batch, &labels)?;
        sgd_step(head, &grads, &mut vel, cfg);
        trace.push(loss as f32);
    }
    Ok(trace)
}
