//! From-scratch convolutional stack: valid convolution, ReLU, max-pool and
//! cross-channel normalization, plus analytic operation counting.
//!
//! The reference geometry (effective stride 16) maps square inputs of side
//! 107 + 16j to feature maps of side 3 + j, which is what every window /
//! re-forward equivalence in this engine relies on.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::FeatureMap;

/// Input side that produces a 3x3 output under the reference geometry.
pub const PATCH_SIDE: u32 = 107;
/// Input side producing 5x5 (used for the scale pyramid).
pub const INIT_SIDE: u32 = 139;
/// Input side producing 15x15 (the search region).
pub const ROI_SIDE: u32 = 299;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        padding: usize,
    },
    ReLU,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Lrn {
        window: usize,
        bias: f32,
        alpha: f32,
        beta: f32,
    },
}

/// Ordered layer stack of the convolutional backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBackboneSpec {
    pub layers: Vec<LayerSpec>,
}

/// Named channel configurations for the reference stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneProfile {
    /// Small channels (8, 16, 32) for fast desk-scale runs.
    Desk,
    /// VGG-M-compatible channels (96, 256, 512).
    VggmGeometry,
}

impl BackboneProfile {
    pub fn channels(self) -> [usize; 3] {
        match self {
            BackboneProfile::Desk => [8, 16, 32],
            BackboneProfile::VggmGeometry => [96, 256, 512],
        }
    }

    /// Hidden width of the fully connected heads at this scale.
    pub fn head_hidden(self) -> usize {
        match self {
            BackboneProfile::Desk => 64,
            BackboneProfile::VggmGeometry => 512,
        }
    }

    pub fn spec(self) -> ConvBackboneSpec {
        ConvBackboneSpec::reference(self.channels())
    }
}

impl ConvBackboneSpec {
    /// The fixed reference stack: conv 7x7/2, conv 5x5/2, conv 3x3/1 with
    /// ReLU + LRN + 3x3/2 max-pool after the first two convolutions, all
    /// zero padding. LRN uses n=5, k=2, alpha=1e-4, beta=0.75.
    pub fn reference(channels: [usize; 3]) -> Self {
        let lrn = LayerSpec::Lrn {
            window: 5,
            bias: 2.0,
            alpha: 1e-4,
            beta: 0.75,
        };
        ConvBackboneSpec {
            layers: vec![
                LayerSpec::Conv {
                    kernel: 7,
                    stride: 2,
                    in_channels: 3,
                    out_channels: channels[0],
                    padding: 0,
                },
                LayerSpec::ReLU,
                lrn,
                LayerSpec::MaxPool { window: 3, stride: 2 },
                LayerSpec::Conv {
                    kernel: 5,
                    stride: 2,
                    in_channels: channels[0],
                    out_channels: channels[1],
                    padding: 0,
                },
                LayerSpec::ReLU,
                lrn,
                LayerSpec::MaxPool { window: 3, stride: 2 },
                LayerSpec::Conv {
                    kernel: 3,
                    stride: 1,
                    in_channels: channels[1],
                    out_channels: channels[2],
                    padding: 0,
                },
                LayerSpec::ReLU,
            ],
        }
    }

    /// Spatial output side for a square input, or a configuration error when
    /// some layer window no longer fits.
    pub fn output_side(&self, input_side: usize) -> Result<usize> {
        let mut n = input_side;
        for (i, layer) in self.layers.iter().enumerate() {
            n = match *layer {
                LayerSpec::Conv {
                    kernel,
                    stride,
                    padding,
                    ..
                } => spatial_out(n, kernel, stride, padding).ok_or_else(|| {
                    Error::Config(format!(
                        "layer {i}: conv kernel {kernel} does not fit input side {n}"
                    ))
                })?,
                LayerSpec::MaxPool { window, stride } => spatial_out(n, window, stride, 0)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "layer {i}: pool window {window} does not fit input side {n}"
                        ))
                    })?,
                LayerSpec::ReLU | LayerSpec::Lrn { .. } => n,
            };
        }
        Ok(n)
    }

    /// Channels of the final feature map.
    pub fn output_channels(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Conv { out_channels, .. } => Some(*out_channels),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn input_channels(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match l {
                LayerSpec::Conv { in_channels, .. } => Some(*in_channels),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Flattened dimension of an `out_side` x `out_side` window of the final
    /// map (the head input for out_side = 3).
    pub fn window_dim(&self, out_side: usize) -> usize {
        out_side * out_side * self.output_channels()
    }

    /// Square input side that yields `output_side` cells under the reference
    /// stride-16 geometry.
    pub fn input_side_for_output(output_side: usize) -> usize {
        PATCH_SIDE as usize + 16 * (output_side - 3)
    }
}

fn spatial_out(n: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let n = n + 2 * p;
    if n < k || s == 0 {
        None
    } else {
        Some((n - k) / s + 1)
    }
}

/// One convolution layer's parameters. Weight layout is
/// (out-channel, in-channel, kernel-row, kernel-col), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvWeights {
    pub fn random<R: Rng>(kernel: usize, in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let fan_in = (kernel * kernel * in_channels) as f32;
        let std = (2.0 / fan_in).sqrt();
        let weights = (0..out_channels * in_channels * kernel * kernel)
            .map(|_| {
                let z: f32 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        ConvWeights {
            kernel,
            in_channels,
            out_channels,
            weights,
            bias: vec![0.0; out_channels],
        }
    }
}

/// All convolution parameters of a backbone, aligned with the spec's conv
/// layers in order.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub convs: Vec<ConvWeights>,
}

impl BackboneWeights {
    pub fn random<R: Rng>(spec: &ConvBackboneSpec, rng: &mut R) -> Self {
        let convs = spec
            .layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Conv {
                    kernel,
                    in_channels,
                    out_channels,
                    ..
                } => Some(ConvWeights::random(kernel, in_channels, out_channels, rng)),
                _ => None,
            })
            .collect();
        BackboneWeights { convs }
    }
}

/// Valid convolution with optional zero padding. Accumulates in f64.
pub fn conv_forward(
    input: &FeatureMap,
    stride: usize,
    padding: usize,
    w: &ConvWeights,
) -> Result<FeatureMap> {
    if input.channels() != w.in_channels {
        return Err(Error::Config(format!(
            "conv expects {} input channels, got {}",
            w.in_channels,
            input.channels()
        )));
    }
    let oh = spatial_out(input.height(), w.kernel, stride, padding)
        .ok_or_else(|| Error::Config(format!(
            "conv kernel {} does not fit input {}x{}",
            w.kernel,
            input.height(),
            input.width()
        )))?;
    let ow = spatial_out(input.width(), w.kernel, stride, padding).ok_or_else(|| {
        Error::Config(format!(
            "conv kernel {} does not fit input {}x{}",
            w.kernel,
            input.height(),
            input.width()
        ))
    })?;

    let k = w.kernel;
    let cin = w.in_channels;
    let cout = w.out_channels;
    // Transpose weights to (out, kh, kw, in) so the inner loop walks both the
    // input row and the kernel row contiguously.
    let mut wt = vec![0.0f32; w.weights.len()];
    for o in 0..cout {
        for ci in 0..cin {
            for kh in 0..k {
                for kw in 0..k {
                    wt[((o * k + kh) * k + kw) * cin + ci] =
                        w.weights[((o * cin + ci) * k + kh) * k + kw];
                }
            }
        }
    }

    let iw = input.width() as i64;
    let ih = input.height() as i64;
    let vals = input.values();
    let mut out = vec![0.0f32; oh * ow * cout];
    for r in 0..oh {
        for c in 0..ow {
            let base_r = (r * stride) as i64 - padding as i64;
            let base_c = (c * stride) as i64 - padding as i64;
            for o in 0..cout {
                let mut acc = w.bias[o] as f64;
                for kh in 0..k {
                    let ir = base_r + kh as i64;
                    if ir < 0 || ir >= ih {
                        continue;
                    }
                    for kw in 0..k {
                        let ic = base_c + kw as i64;
                        if ic < 0 || ic >= iw {
                            continue;
                        }
                        let in_base = ((ir * iw + ic) as usize) * cin;
                        let w_base = ((o * k + kh) * k + kw) * cin;
                        let mut dot = 0.0f64;
                        for ci in 0..cin {
                            dot += vals[in_base + ci] as f64 * wt[w_base + ci] as f64;
                        }
                        acc += dot;
                    }
                }
                out[(r * ow + c) * cout + o] = acc as f32;
            }
        }
    }
    FeatureMap::new(oh, ow, cout, out, input.scale, input.transform)
}

pub fn relu_forward(input: &FeatureMap) -> FeatureMap {
    let mut out = input.clone();
    for v in out.values_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Channel-wise window maxima.
pub fn max_pool_forward(input: &FeatureMap, window: usize, stride: usize) -> Result<FeatureMap> {
    let oh = spatial_out(input.height(), window, stride, 0).ok_or_else(|| {
        Error::Config(format!(
            "pool window {window} larger than input {}x{}",
            input.height(),
            input.width()
        ))
    })?;
    let ow = spatial_out(input.width(), window, stride, 0).ok_or_else(|| {
        Error::Config(format!(
            "pool window {window} larger than input {}x{}",
            input.height(),
            input.width()
        ))
    })?;
    let c = input.channels();
    let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
    for r in 0..oh {
        for cc in 0..ow {
            for wr in 0..window {
                for wc in 0..window {
                    let cell = input.cell(r * stride + wr, cc * stride + wc);
                    let out_base = (r * ow + cc) * c;
                    for ch in 0..c {
                        if cell[ch] > out[out_base + ch] {
                            out[out_base + ch] = cell[ch];
                        }
                    }
                }
            }
        }
    }
    FeatureMap::new(oh, ow, c, out, input.scale, input.transform)
}

/// Local response normalization across `window` adjacent channels:
/// v / (bias + alpha * sum of squares)^beta, window clamped at the channel
/// range boundaries.
pub fn lrn_forward(input: &FeatureMap, window: usize, bias: f32, alpha: f32, beta: f32) -> FeatureMap {
    let c = input.channels();
    let half = window / 2;
    let mut out = input.clone();
    for r in 0..input.height() {
        for cc in 0..input.width() {
            let cell = input.cell(r, cc);
            for ch in 0..c {
                let lo = ch.saturating_sub(half);
                let hi = (ch + half).min(c - 1);
                let mut sq = 0.0f64;
                for j in lo..=hi {
                    sq += (cell[j] as f64) * (cell[j] as f64);
                }
                let denom = (bias as f64 + alpha as f64 * sq).powf(beta as f64);
                out.set(r, cc, ch, (cell[ch] as f64 / denom) as f32);
            }
        }
    }
    out
}

/// Runs the full stack over a crop and attaches the crop's scale/transform
/// provenance to the resulting feature map.
pub fn backbone_forward(
    crop: &FeatureMap,
    spec: &ConvBackboneSpec,
    weights: &BackboneWeights,
) -> Result<FeatureMap> {
    let min_side = crop.height().min(crop.width());
    spec.output_side(min_side)
        .map_err(|_| Error::Input(format!(
            "crop {}x{} too small for the backbone geometry",
            crop.height(),
            crop.width()
        )))?;

    let mut x = crop.clone();
    let mut conv_idx = 0usize;
    for layer in &spec.layers {
        x = match *layer {
            LayerSpec::Conv { stride, padding, .. } => {
                let w = weights.convs.get(conv_idx).ok_or_else(|| {
                    Error::Config("backbone weights have fewer conv layers than the spec".into())
                })?;
                conv_idx += 1;
                conv_forward(&x, stride, padding, w)?
            }
            LayerSpec::ReLU => relu_forward(&x),
            LayerSpec::MaxPool { window, stride } => max_pool_forward(&x, window, stride)?,
            LayerSpec::Lrn {
                window,
                bias,
                alpha,
                beta,
            } => lrn_forward(&x, window, bias, alpha, beta),
        };
    }
    x.scale = crop.scale;
    x.transform = crop.transform;
    Ok(x)
}

/// Per-layer analytic operation counts for a square input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFlops {
    pub layer: String,
    pub output_side: usize,
    /// Multiply-accumulates (convolution only).
    pub macs: u64,
    /// Window comparisons (max-pool only).
    pub pool_ops: u64,
    /// Normalization arithmetic ops (LRN only).
    pub lrn_ops: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlopBreakdown {
    pub input_side: usize,
    pub layers: Vec<LayerFlops>,
    /// Total convolution multiply-accumulates.
    pub conv_macs: u64,
    pub pool_ops: u64,
    pub lrn_ops: u64,
}

impl FlopBreakdown {
    /// Total floating-point operations: two per multiply-accumulate plus
    /// pooling comparisons and normalization arithmetic.
    pub fn total_flops(&self) -> u64 {
        2 * self.conv_macs + self.pool_ops + self.lrn_ops
    }
}

/// Counts convolution multiply-accumulates exactly
/// (output positions x kH x kW x Cin x Cout per layer); pooling comparisons
/// and LRN arithmetic are tallied separately.
pub fn count_flops(spec: &ConvBackboneSpec, input_side: usize) -> Result<FlopBreakdown> {
    let mut n = input_side;
    let mut channels = spec.input_channels();
    let mut layers = Vec::new();
    let (mut conv_macs, mut pool_total, mut lrn_total) = (0u64, 0u64, 0u64);
    for (i, layer) in spec.layers.iter().enumerate() {
        let entry = match *layer {
            LayerSpec::Conv {
                kernel,
                stride,
                in_channels,
                out_channels,
                padding,
            } => {
                if in_channels != channels {
                    return Err(Error::Config(format!(
                        "layer {i}: expects {in_channels} channels, preceding stack produces {channels}"
                    )));
                }
                let out = spatial_out(n, kernel, stride, padding).ok_or_else(|| {
                    Error::Config(format!("layer {i}: kernel {kernel} does not fit side {n}"))
                })?;
                let macs =
                    (out * out) as u64 * (kernel * kernel * in_channels * out_channels) as u64;
                n = out;
                channels = out_channels;
                conv_macs += macs;
                LayerFlops {
                    layer: format!("conv{}x{}s{}", kernel, kernel, stride),
                    output_side: n,
                    macs,
                    pool_ops: 0,
                    lrn_ops: 0,
                }
            }
            LayerSpec::MaxPool { window, stride } => {
                let out = spatial_out(n, window, stride, 0).ok_or_else(|| {
                    Error::Config(format!("layer {i}: pool {window} does not fit side {n}"))
                })?;
                let ops = (out * out * channels) as u64 * (window * window - 1) as u64;
                n = out;
                pool_total += ops;
                LayerFlops {
                    layer: format!("pool{}s{}", window, stride),
                    output_side: n,
                    macs: 0,
                    pool_ops: ops,
                    lrn_ops: 0,
                }
            }
            LayerSpec::Lrn { window, .. } => {
                let ops = (n * n * channels) as u64 * (2 * window + 2) as u64;
                lrn_total += ops;
                LayerFlops {
                    layer: format!("lrn{}", window),
                    output_side: n,
                    macs: 0,
                    pool_ops: 0,
                    lrn_ops: ops,
                }
            }
            LayerSpec::ReLU => LayerFlops {
                layer: "relu".into(),
                output_side: n,
                macs: 0,
                pool_ops: 0,
                lrn_ops: 0,
            },
        };
        layers.push(entry);
    }
    Ok(FlopBreakdown {
        input_side,
        layers,
        conv_macs,
        pool_ops: pool_total,
        lrn_ops: lrn_total,
    })
}
