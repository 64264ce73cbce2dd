//! The trackable network: fixed conv backbone plus the two trainable heads,
//! and its binary weight-file format.
//!
//! Format (little-endian): magic "ILNW", version u32 = 1, tensor count u32;
//! per tensor: name length u16, UTF-8 name, rank u8, one u32 per dim, then
//! raw f32 values row-major. Conv kernels are (out, in, row, col); fully
//! connected weights are (out, in). The file ends with a CRC32 (IEEE) of
//! every preceding byte.

use std::path::Path;

use rand::Rng;

use crate::backbone::{BackboneProfile, BackboneWeights, ConvBackboneSpec, ConvWeights, LayerSpec};
use crate::error::{Error, Result};
use crate::heads::{FcLayer, HeadParams};

pub const WEIGHT_MAGIC: &[u8; 4] = b"ILNW";
pub const WEIGHT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub spec: ConvBackboneSpec,
    pub backbone: BackboneWeights,
    pub object_head: HeadParams,
    pub loc_head: HeadParams,
}

impl NetworkModel {
    pub fn random<R: Rng>(profile: BackboneProfile, rng: &mut R) -> Self {
        let spec = profile.spec();
        let backbone = BackboneWeights::random(&spec, rng);
        let in_dim = spec.window_dim(3);
        let hidden = profile.head_hidden();
        NetworkModel {
            object_head: HeadParams::random(in_dim, hidden, 2, rng),
            loc_head: HeadParams::random(in_dim, hidden, 5, rng),
            spec,
            backbone,
        }
    }

    pub fn conv_channels(&self) -> Vec<usize> {
        self.spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv { out_channels, .. } => Some(*out_channels),
                _ => None,
            })
            .collect()
    }
}

// CRC32 (IEEE 802.3, reflected, polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, slot) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *slot = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

fn push_tensor(out: &mut Vec<u8>, name: &str, dims: &[usize], values: &[f32]) {
    let expect: usize = dims.iter().product();
    debug_assert_eq!(expect, values.len(), "{name} shape/value mismatch");
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn head_tensors(out: &mut Vec<u8>, prefix: &str, head: &HeadParams) {
    for (tag, layer) in [
        ("fc1", &head.hidden1),
        ("fc2", &head.hidden2),
        ("logits", &head.logits),
    ] {
        push_tensor(
            out,
            &format!("{prefix}.{tag}.weight"),
            &[layer.out_dim, layer.in_dim],
            &layer.weights,
        );
        push_tensor(out, &format!("{prefix}.{tag}.bias"), &[layer.out_dim], &layer.bias);
    }
}

pub fn save_weights(model: &NetworkModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    let count = (model.backbone.convs.len() * 2 + 12) as u32;
    out.extend_from_slice(&count.to_le_bytes());
    for (i, conv) in model.backbone.convs.iter().enumerate() {
        push_tensor(
            &mut out,
            &format!("conv{}.weight", i + 1),
            &[conv.out_channels, conv.in_channels, conv.kernel, conv.kernel],
            &conv.weights,
        );
        push_tensor(&mut out, &format!("conv{}.bias", i + 1), &[conv.out_channels], &conv.bias);
    }
    head_tensors(&mut out, "object", &model.object_head);
    head_tensors(&mut out, "loc", &model.loc_head);
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.offset as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

#[derive(Debug)]
struct RawTensor {
    dims: Vec<usize>,
    values: Vec<f32>,
}

fn err_at(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn load_weights(bytes: &[u8]) -> Result<NetworkModel> {
    if bytes.len() < 4 {
        return Err(err_at(0, "file shorter than the magic"));
    }
    if &bytes[..4] != WEIGHT_MAGIC {
        return Err(err_at(0, "bad magic (expected ILNW)"));
    }
    if bytes.len() < 16 {
        return Err(err_at(bytes.len(), "truncated header"));
    }
    let body_len = bytes.len() - 4;
    let stored_crc = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let actual = crc32(&bytes[..body_len]);
    if stored_crc != actual {
        return Err(err_at(
            body_len,
            format!("CRC mismatch: stored {stored_crc:#010x}, computed {actual:#010x}"),
        ));
    }

    let mut r = Reader {
        bytes: &bytes[..body_len],
        offset: 4,
    };
    let version = r.u32("version")?;
    if version != WEIGHT_VERSION {
        return Err(err_at(4, format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    let mut tensors: Vec<(String, RawTensor)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_at = r.offset;
        let name_len = r.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| err_at(name_at, "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.take(1, "tensor rank")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("tensor dim")? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n * 4, &format!("values of {name}"))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if tensors.iter().any(|(existing, _)| *existing == name) {
            return Err(err_at(name_at, format!("duplicate tensor {name}")));
        }
        tensors.push((name, RawTensor { dims, values }));
    }
    if r.offset != body_len {
        return Err(err_at(r.offset, "trailing bytes after the declared tensors"));
    }

    let get = |name: &str| -> Result<&RawTensor> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| err_at(body_len, format!("missing tensor {name}")))
    };

    let mut convs = Vec::with_capacity(3);
    let expected_kernels = [7usize, 5, 3];
    let mut in_c = 3usize;
    for i in 0..3 {
        let w = get(&format!("conv{}.weight", i + 1))?;
        let b = get(&format!("conv{}.bias", i + 1))?;
        if w.dims.len() != 4 || w.dims[1] != in_c || w.dims[2] != expected_kernels[i] || w.dims[3] != expected_kernels[i] {
            return Err(err_at(
                body_len,
                format!(
                    "tensor conv{}.weight: expected (C,{},{},{}), got {:?}",
                    i + 1,
                    in_c,
                    expected_kernels[i],
                    expected_kernels[i],
                    w.dims
                ),
            ));
        }
        let out_c = w.dims[0];
        if b.dims != [out_c] {
            return Err(err_at(
                body_len,
                format!("tensor conv{}.bias: expected ({out_c}), got {:?}", i + 1, b.dims),
            ));
        }
        convs.push(ConvWeights {
            kernel: expected_kernels[i],
            in_channels: in_c,
            out_channels: out_c,
            weights: w.values.clone(),
            bias: b.values.clone(),
        });
        in_c = out_c;
    }
    let channels = [convs[0].out_channels, convs[1].out_channels, convs[2].out_channels];
    let spec = ConvBackboneSpec::reference(channels);
    let feature_dim = spec.window_dim(3);

    let load_head = |prefix: &str, classes: usize| -> Result<HeadParams> {
        let mut layers = Vec::with_capacity(3);
        for tag in ["fc1", "fc2", "logits"] {
            let w = get(&format!("{prefix}.{tag}.weight"))?;
            let b = get(&format!("{prefix}.{tag}.bias"))?;
            if w.dims.len() != 2 {
                return Err(err_at(
                    body_len,
                    format!("tensor {prefix}.{tag}.weight: expected rank 2, got {:?}", w.dims),
                ));
            }
            let (out_dim, in_dim) = (w.dims[0], w.dims[1]);
            if b.dims != [out_dim] {
                return Err(err_at(
                    body_len,
                    format!("tensor {prefix}.{tag}.bias: expected ({out_dim}), got {:?}", b.dims),
                ));
            }
            layers.push(FcLayer {
                in_dim,
                out_dim,
                weights: w.values.clone(),
                bias: b.values.clone(),
            });
        }
        let logits = layers.pop().unwrap();
        let hidden2 = layers.pop().unwrap();
        let hidden1 = layers.pop().unwrap();
        if hidden1.in_dim != feature_dim {
            return Err(err_at(
                body_len,
                format!(
                    "tensor {prefix}.fc1.weight: input {} does not match the 3x3x{} conv feature",
                    hidden1.in_dim, channels[2]
                ),
            ));
        }
        if hidden2.in_dim != hidden1.out_dim || logits.in_dim != hidden2.out_dim {
            return Err(err_at(
                body_len,
                format!("tensor {prefix}.fc2.weight: hidden dimensions do not chain"),
            ));
        }
        if logits.out_dim != classes {
            return Err(err_at(
                body_len,
                format!(
                    "tensor {prefix}.logits.weight: expected {classes} classes, got {}",
                    logits.out_dim
                ),
            ));
        }
        Ok(HeadParams { hidden1, hidden2, logits })
    };

    Ok(NetworkModel {
        object_head: load_head("object", 2)?,
        loc_head: load_head("loc", 5)?,
        spec,
        backbone: BackboneWeights { convs },
    })
}

pub fn save_weights_file(model: &NetworkModel, path: &Path) -> Result<()> {
    std::fs::write(path, save_weights(model)).map_err(|e| Error::io(path, e))
}

pub fn load_weights_file(path: &Path) -> Result<NetworkModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_weights(&bytes)
}
