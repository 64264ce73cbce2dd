//! Deterministic synthetic sequences: a textured target moving over a
//! blurred noise background along an analytic path, with ground truth exact
//! under round-half-up pixel rounding.

use std::f32::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Sequence;
use crate::geometry::Box;
use crate::image::{gaussian_blur_f32, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionModel {
    /// Constant velocity, in fractions of the initial target size per frame.
    Linear { vx: f32, vy: f32 },
    /// Sinusoidal sweep: amplitude in fractions of the initial target size,
    /// period in frames.
    Sinusoidal { amp_x: f32, amp_y: f32, period: f32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub initial_box: Box,
    pub motion: MotionModel,
    /// Per-frame size multiplier.
    pub scale_drift: f32,
    pub background_seed: u64,
    pub target_seed: u64,
    /// Gaussian blur applied to the background noise, in pixels.
    pub blur_sigma: f32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            name: "synth".into(),
            width: 320,
            height: 240,
            frame_count: 60,
            initial_box: Box::new(140.0, 104.0, 40.0, 32.0),
            motion: MotionModel::Linear { vx: 0.05, vy: 0.025 },
            scale_drift: 1.0,
            background_seed: 7,
            target_seed: 11,
            blur_sigma: 2.0,
        }
    }
}

/// Round half up, the rule the rendered boxes and ground truth share.
pub fn round_half_up(v: f32) -> f32 {
    (v + 0.5).floor()
}

const MIN_TARGET_SIDE: f32 = 16.0;
const BORDER_WIDTH: usize = 2;
const BORDER_VALUE: u8 = 235;
const TEXTURE_GRID: usize = 12;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 2 {
            return Err(Error::Spec(format!(
                "frame count must be at least 2, got {}",
                self.frame_count
            )));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::Spec(format!(
                "frame size {}x{} is below the 32x32 minimum",
                self.width, self.height
            )));
        }
        if !(self.scale_drift > 0.0) || !self.scale_drift.is_finite() {
            return Err(Error::Spec(format!(
                "scale drift must be positive, got {}",
                self.scale_drift
            )));
        }
        if self.blur_sigma < 0.0 {
            return Err(Error::Spec("blur sigma must be non-negative".into()));
        }
        self.initial_box
            .validate()
            .map_err(|e| Error::Spec(format!("initial box invalid: {e}")))?;
        if let MotionModel::Sinusoidal { period, .. } = self.motion {
            if !(period > 0.0) {
                return Err(Error::Spec("sinusoidal period must be positive".into()));
            }
        }
        // The rounded path must stay inside the frame at a usable size; this
        // also runs the full analytic path so errors name the frame.
        ground_truth_boxes(self).map(|_| ())
    }

    /// The exact (un-rounded) box at frame `t`.
    pub fn continuous_box(&self, t: usize) -> Box {
        let b0 = &self.initial_box;
        let (cx0, cy0) = b0.center();
        let tf = t as f32;
        let (dx, dy) = match self.motion {
            MotionModel::Linear { vx, vy } => (vx * b0.w * tf, vy * b0.h * tf),
            MotionModel::Sinusoidal { amp_x, amp_y, period } => {
                let phase = TAU * tf / period;
                (amp_x * b0.w * phase.sin(), amp_y * b0.h * phase.sin())
            }
        };
        let s = self.scale_drift.powi(t as i32);
        Box::from_center(cx0 + dx, cy0 + dy, b0.w * s, b0.h * s)
    }
}

/// The rendered (and annotated) path: each analytic box rounded half-up per
/// field, bounds-checked against the frame.
pub fn ground_truth_boxes(spec: &SynthSpec) -> Result<Vec<Box>> {
    let mut out = Vec::with_capacity(spec.frame_count);
    for t in 0..spec.frame_count {
        let c = spec.continuous_box(t);
        let b = Box::new(
            round_half_up(c.x),
            round_half_up(c.y),
            round_half_up(c.w),
            round_half_up(c.h),
        );
        if b.w < MIN_TARGET_SIDE || b.h < MIN_TARGET_SIDE {
            return Err(Error::Spec(format!(
                "target shrinks to {}x{} at frame {t}, below the {MIN_TARGET_SIDE} px minimum",
                b.w, b.h
            )));
        }
        if b.x < 0.0
            || b.y < 0.0
            || b.x + b.w > spec.width as f32
            || b.y + b.h > spec.height as f32
        {
            return Err(Error::Spec(format!(
                "target leaves the {}x{} frame at frame {t} (box {:.0},{:.0},{:.0},{:.0})",
                spec.width, spec.height, b.x, b.y, b.w, b.h
            )));
        }
        out.push(b);
    }
    Ok(out)
}

/// Seeded uniform noise in [0, 255] blurred by `sigma`, quantized half-up.
/// Shared by the synthesizer and the interpolation-fidelity checks.
pub fn noise_image(width: usize, height: usize, seed: u64, sigma: f32) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field: Vec<f32> = (0..width * height)
        .map(|_| rng.random_range(0.0..=255.0))
        .collect();
    if sigma > 0.0 {
        gaussian_blur_f32(&mut field, width, height, 1, sigma);
    }
    let data = field
        .iter()
        .map(|&v| round_half_up(v).clamp(0.0, 255.0) as u8)
        .collect();
    Image::new(width, height, 1, data).expect("noise field dimensions are valid")
}

/// The target's base texture: a coarse noise grid, bilinearly upsampled at
/// render time so the pattern scales with the box.
fn target_texture(seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..TEXTURE_GRID * TEXTURE_GRID)
        .map(|_| rng.random_range(30.0..=220.0))
        .collect()
}

fn sample_texture(base: &[f32], u: f32, v: f32) -> f32 {
    // u, v in [0, 1]; sample the coarse grid bilinearly with clamped edges.
    let fx = (u * TEXTURE_GRID as f32 - 0.5).clamp(0.0, (TEXTURE_GRID - 1) as f32);
    let fy = (v * TEXTURE_GRID as f32 - 0.5).clamp(0.0, (TEXTURE_GRID - 1) as f32);
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(TEXTURE_GRID - 1);
    let y1 = (y0 + 1).min(TEXTURE_GRID - 1);
    let ax = fx - x0 as f32;
    let ay = fy - y0 as f32;
    let top = base[y0 * TEXTURE_GRID + x0] * (1.0 - ax) + base[y0 * TEXTURE_GRID + x1] * ax;
    let bot = base[y1 * TEXTURE_GRID + x0] * (1.0 - ax) + base[y1 * TEXTURE_GRID + x1] * ax;
    top * (1.0 - ay) + bot * ay
}

fn composite_target(pixels: &mut [u8], frame_w: usize, b: &Box, base: &[f32]) {
    let x0 = b.x as usize;
    let y0 = b.y as usize;
    let w = b.w as usize;
    let h = b.h as usize;
    for r in 0..h {
        for c in 0..w {
            let border = r < BORDER_WIDTH || c < BORDER_WIDTH || r >= h - BORDER_WIDTH || c >= w - BORDER_WIDTH;
            let v = if border {
                BORDER_VALUE
            } else {
                let u = (c - BORDER_WIDTH) as f32 / (w - 2 * BORDER_WIDTH) as f32;
                let vv = (r - BORDER_WIDTH) as f32 / (h - 2 * BORDER_WIDTH) as f32;
                round_half_up(sample_texture(base, u, vv)).clamp(0.0, 255.0) as u8
            };
            pixels[(y0 + r) * frame_w + (x0 + c)] = v;
        }
    }
}

pub fn synth_sequence(spec: &SynthSpec) -> Result<Sequence> {
    spec.validate()?;
    let gt = ground_truth_boxes(spec)?;
    let background = noise_image(spec.width, spec.height, spec.background_seed, spec.blur_sigma);
    let base = target_texture(spec.target_seed);
    let mut frames = Vec::with_capacity(spec.frame_count);
    for b in &gt {
        let mut pixels = background.data.clone();
        composite_target(&mut pixels, spec.width, b, &base);
        frames.push(Image::new(spec.width, spec.height, 1, pixels)?);
    }
    let seq = Sequence {
        name: spec.name.clone(),
        frames,
        ground_truth: Some(gt),
    };
    seq.validate()?;
    Ok(seq)
}

/// Materializes a sequence in the on-disk layout `load_sequence` reads:
/// `img/0001.pgm...` plus a 1-based `groundtruth_rect.txt`.
pub fn write_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    seq.validate()?;
    let gt = seq.ground_truth.as_ref().ok_or_else(|| {
        Error::Input("cannot write a sequence without ground truth".into())
    })?;
    let img_dir = dir.join("img");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        frame.save_pnm(&img_dir.join(format!("{:04}.pgm", i + 1)))?;
    }
    let mut text = String::new();
    for b in gt {
        text.push_str(&format!("{},{},{},{}\n", b.x + 1.0, b.y + 1.0, b.w, b.h));
    }
    let gt_path = dir.join("groundtruth_rect.txt");
    fs::write(&gt_path, text).map_err(|e| Error::io(&gt_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::load_sequence;

    fn still_spec() -> SynthSpec {
        SynthSpec {
            motion: MotionModel::Linear { vx: 0.0, vy: 0.0 },
            scale_drift: 1.0,
            frame_count: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn zero_velocity_keeps_the_box_fixed() {
        let gt = ground_truth_boxes(&still_spec()).unwrap();
        assert_eq!(gt.len(), 5);
        for b in &gt[1..] {
            assert_eq!(*b, gt[0]);
        }
        assert_eq!(gt[0], Box::new(140.0, 104.0, 40.0, 32.0));
    }

    #[test]
    fn linear_velocity_advances_exactly() {
        // vx = 0.05 of a 40 px target: 2 px per frame, exact after rounding.
        let spec = SynthSpec {
            motion: MotionModel::Linear { vx: 0.05, vy: 0.0 },
            frame_count: 10,
            ..SynthSpec::default()
        };
        let gt = ground_truth_boxes(&spec).unwrap();
        for (t, b) in gt.iter().enumerate() {
            assert_eq!(b.x, 140.0 + 2.0 * t as f32, "frame {t}");
            assert_eq!(b.y, 104.0);
        }
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(10.5), 11.0);
        assert_eq!(round_half_up(10.499), 10.0);
        assert_eq!(round_half_up(-0.5), 0.0);
        // A 0.5 px/frame path alternates between integers by the half-up rule.
        let spec = SynthSpec {
            motion: MotionModel::Linear { vx: 0.0125, vy: 0.0 }, // 0.5 px/frame
            frame_count: 4,
            ..SynthSpec::default()
        };
        let xs: Vec<f32> = ground_truth_boxes(&spec).unwrap().iter().map(|b| b.x).collect();
        assert_eq!(xs, vec![140.0, 141.0, 141.0, 142.0]);
    }

    #[test]
    fn sinusoidal_path_follows_the_analytic_formula() {
        let spec = SynthSpec {
            motion: MotionModel::Sinusoidal {
                amp_x: 0.5,
                amp_y: 0.25,
                period: 20.0,
            },
            frame_count: 40,
            ..SynthSpec::default()
        };
        let gt = ground_truth_boxes(&spec).unwrap();
        for (t, b) in gt.iter().enumerate() {
            let c = spec.continuous_box(t);
            assert_eq!(b.x, round_half_up(c.x), "frame {t}");
            assert_eq!(b.y, round_half_up(c.y), "frame {t}");
        }
        // The sweep actually moves both ways.
        let xs: Vec<f32> = gt.iter().map(|b| b.x).collect();
        assert!(xs.iter().cloned().fold(f32::MIN, f32::max) > 150.0);
        assert!(xs.iter().cloned().fold(f32::MAX, f32::min) < 130.0);
    }

    #[test]
    fn escaping_target_is_a_spec_error() {
        let spec = SynthSpec {
            motion: MotionModel::Linear { vx: 0.5, vy: 0.0 },
            frame_count: 60,
            ..SynthSpec::default()
        };
        let err = ground_truth_boxes(&spec).unwrap_err();
        assert!(err.to_string().contains("leaves the"), "{err}");
    }

    #[test]
    fn shrinking_below_16px_is_a_spec_error() {
        let spec = SynthSpec {
            scale_drift: 0.95,
            frame_count: 30,
            ..still_spec()
        };
        let err = ground_truth_boxes(&spec).unwrap_err();
        assert!(err.to_string().contains("below the 16 px minimum"), "{err}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec::default();
        let a = synth_sequence(&spec).unwrap();
        let b = synth_sequence(&spec).unwrap();
        assert_eq!(a.frames.len(), 60);
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.data, fb.data);
        }
        assert_eq!(a.ground_truth, b.ground_truth);
        // Different seeds give different pixels.
        let other = synth_sequence(&SynthSpec {
            background_seed: 1234,
            ..spec
        })
        .unwrap();
        assert_ne!(a.frames[0].data, other.frames[0].data);
    }

    #[test]
    fn target_region_is_rendered() {
        let spec = still_spec();
        let seq = synth_sequence(&spec).unwrap();
        let b = seq.ground_truth.as_ref().unwrap()[0];
        let f = &seq.frames[0];
        // Border pixels carry the border value.
        assert_eq!(f.get(b.y as usize, b.x as usize, 0), BORDER_VALUE);
        assert_eq!(
            f.get((b.y + b.h - 1.0) as usize, (b.x + b.w - 1.0) as usize, 0),
            BORDER_VALUE
        );
        // The interior differs from the blurred background around the box.
        let inside = f.get((b.y + b.h / 2.0) as usize, (b.x + b.w / 2.0) as usize, 0);
        let outside = f.get(10, 10, 0);
        assert_ne!(inside, outside);
    }

    #[test]
    fn scale_drift_changes_the_rendered_size() {
        let spec = SynthSpec {
            scale_drift: 1.01,
            frame_count: 30,
            ..still_spec()
        };
        let gt = ground_truth_boxes(&spec).unwrap();
        assert_eq!(gt[0].w, 40.0);
        assert!(gt[29].w > gt[0].w);
        assert_eq!(gt[29].w, round_half_up(40.0 * 1.01f32.powi(29)));
    }

    #[test]
    fn round_trips_through_the_on_disk_layout() {
        let spec = SynthSpec {
            frame_count: 4,
            ..SynthSpec::default()
        };
        let seq = synth_sequence(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sequence(&seq, dir.path()).unwrap();
        assert!(dir.path().join("img/0001.pgm").exists());
        assert!(dir.path().join("img/0004.pgm").exists());
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.len(), 4);
        assert_eq!(loaded.ground_truth, seq.ground_truth);
        for (a, b) in loaded.frames.iter().zip(&seq.frames) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = SynthSpec::default();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: SynthSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let partial: SynthSpec =
            serde_json::from_str(r#"{"frame_count": 12, "motion": {"kind": "linear", "vx": 0.1, "vy": 0.0}}"#)
                .unwrap();
        assert_eq!(partial.frame_count, 12);
        assert_eq!(partial.width, 320);
    }
}
