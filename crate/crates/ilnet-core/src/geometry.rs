//! Boxes, overlap metrics, the image/crop/grid coordinate algebra and the
//! Gaussian box samplers.
//!
//! All region arithmetic derives from one convention: the tracked object spans
//! exactly [`OBJECT_CROP_PIXELS`] pixels of a network crop, and one final
//! feature cell corresponds to [`CELL_STRIDE_PIXELS`] crop pixels.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::FeatureMap;
use crate::image::Image;

/// Crop pixels spanned by the object at scale 1.
pub const OBJECT_CROP_PIXELS: f32 = 75.0;
/// Crop pixels between adjacent final-feature-map cells (effective stride).
pub const CELL_STRIDE_PIXELS: f32 = 16.0;
/// Half-cell coarse move step, as a fraction of the object dimension.
pub const COARSE_MOVE_STEP: f32 = 8.0 / 75.0;
/// Quarter-cell band that keeps a sample in the `Middle` class.
pub const MIDDLE_THRESHOLD: f32 = 4.0 / 75.0;
/// Default fill for crop samples outside the image (128/255).
pub const DEFAULT_PAD_VALUE: f32 = 128.0 / 255.0;

/// Axis-aligned rectangle in image pixel coordinates; `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
}

impl Box {
    pub fn new(x: f32, y: f32, w: f32, h: f32) -> Self {
        Box { x, y, w, h }
    }

    pub fn from_center(cx: f32, cy: f32, w: f32, h: f32) -> Self {
        Box {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn center(&self) -> (f32, f32) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f32 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Input(format!("degenerate box {self:?}")))
        }
    }

    /// Clips to `[0, w) x [0, h)` keeping at least one pixel of extent.
    pub fn clipped_to(&self, frame_w: usize, frame_h: usize) -> Box {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = (self.x + self.w).min(frame_w as f32).max(x0 + 1.0);
        let y1 = (self.y + self.h).min(frame_h as f32).max(y0 + 1.0);
        Box {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }
}

/// Intersection area over union area; 0 for disjoint boxes.
pub fn iou(a: &Box, b: &Box) -> f32 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.area() + b.area() - inter)
}

/// Euclidean distance between box centers, in pixels.
pub fn center_error(a: &Box, b: &Box) -> f32 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Mapping from a source image rectangle to a square crop of `dest_side`
/// pixels, resampled bilinearly. Out-of-image samples take `pad_value`
/// (normalized, 0..1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub src_x: f32,
    pub src_y: f32,
    pub src_w: f32,
    pub src_h: f32,
    pub dest_side: u32,
    pub pad_value: f32,
}

impl CropTransform {
    /// Crop pixels per image pixel, x axis.
    pub fn scale_x(&self) -> f32 {
        self.dest_side as f32 / self.src_w
    }

    pub fn scale_y(&self) -> f32 {
        self.dest_side as f32 / self.src_h
    }

    pub fn src_center(&self) -> (f32, f32) {
        (self.src_x + self.src_w / 2.0, self.src_y + self.src_h / 2.0)
    }

    /// Continuous crop coordinate -> continuous image coordinate.
    pub fn crop_to_image(&self, u: f32, v: f32) -> (f32, f32) {
        (self.src_x + u / self.scale_x(), self.src_y + v / self.scale_y())
    }

    /// The object dimensions this transform centers on, recovered from the
    /// "object spans 75 crop pixels" convention.
    pub fn object_size(&self) -> (f32, f32) {
        let ratio = OBJECT_CROP_PIXELS / self.dest_side as f32;
        (self.src_w * ratio, self.src_h * ratio)
    }
}

/// Builds the crop transform under which the scaled target maps to exactly
/// 75x75 crop pixels at the crop center. `dest_side` 107 covers a patch of
/// (107/75) of the object, 299 covers the search region.
pub fn roi_crop_transform(target: &Box, scale: f32, dest_side: u32, pad_value: f32) -> Result<CropTransform> {
    target.validate()?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Input(format!("invalid crop scale {scale}")));
    }
    let ratio = dest_side as f32 / OBJECT_CROP_PIXELS;
    let src_w = ratio * scale * target.w;
    let src_h = ratio * scale * target.h;
    let (cx, cy) = target.center();
    Ok(CropTransform {
        src_x: cx - src_w / 2.0,
        src_y: cy - src_h / 2.0,
        src_w,
        src_h,
        dest_side,
        pad_value,
    })
}

/// Box hypothesized by the grid window at integer offset (kx, ky) plus
/// fractional offset (dx, dy), in units of the transform's cell pitch.
/// The box keeps the scaled object size; its center shifts by
/// (k + d) * 16 crop pixels per axis.
pub fn grid_to_box(kx: i32, ky: i32, dx: f32, dy: f32, transform: &CropTransform) -> Box {
    let (ow, oh) = transform.object_size();
    let (cx, cy) = transform.src_center();
    let pitch_x = CELL_STRIDE_PIXELS / OBJECT_CROP_PIXELS * ow;
    let pitch_y = CELL_STRIDE_PIXELS / OBJECT_CROP_PIXELS * oh;
    Box::from_center(
        cx + (kx as f32 + dx) * pitch_x,
        cy + (ky as f32 + dy) * pitch_y,
        ow,
        oh,
    )
}

/// Where the object sits inside a positive patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocClass {
    Up,
    Down,
    Left,
    Right,
    Middle,
}

impl LocClass {
    pub const ALL: [LocClass; 5] = [
        LocClass::Up,
        LocClass::Down,
        LocClass::Left,
        LocClass::Right,
        LocClass::Middle,
    ];

    pub fn index(self) -> usize {
        match self {
            LocClass::Up => 0,
            LocClass::Down => 1,
            LocClass::Left => 2,
            LocClass::Right => 3,
            LocClass::Middle => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<LocClass> {
        LocClass::ALL.get(i).copied()
    }

    /// Unit direction toward the labeled object position (y grows downward).
    pub fn direction(self) -> (f32, f32) {
        match self {
            LocClass::Up => (0.0, -1.0),
            LocClass::Down => (0.0, 1.0),
            LocClass::Left => (-1.0, 0.0),
            LocClass::Right => (1.0, 0.0),
            LocClass::Middle => (0.0, 0.0),
        }
    }
}

/// Labels where `target` sits inside `sample`: offsets within
/// `middle_threshold` (per axis, normalized by the sample dimensions) are
/// `Middle`; otherwise the dominant axis and its sign decide.
pub fn localization_label(sample: &Box, target: &Box, middle_threshold: f32) -> LocClass {
    let (sx, sy) = sample.center();
    let (tx, ty) = target.center();
    let ox = (tx - sx) / sample.w;
    let oy = (ty - sy) / sample.h;
    if ox.abs().max(oy.abs()) <= middle_threshold {
        LocClass::Middle
    } else if ox.abs() >= oy.abs() {
        if ox > 0.0 {
            LocClass::Right
        } else {
            LocClass::Left
        }
    } else if oy > 0.0 {
        LocClass::Down
    } else {
        LocClass::Up
    }
}

/// Rejection-samples `n` boxes around `mean`: center jitter is
/// N(0, trans_sigma * mean(w,h)) per axis, and a single scale multiplier
/// 1.2^N(0, scale_sigma) applies to both dimensions. Fails with a sampling
/// error naming `label` after 100*n rejected attempts.
pub fn sample_gaussian_boxes<R: Rng>(
    rng: &mut R,
    mean: &Box,
    trans_sigma: f32,
    scale_sigma: f32,
    n: usize,
    label: &str,
    predicate: impl Fn(&Box) -> bool,
) -> Result<Vec<Box>> {
    let mut out = Vec::with_capacity(n);
    let cap = 100 * n;
    let mut attempts = 0usize;
    let jitter = trans_sigma * 0.5 * (mean.w + mean.h);
    let (cx, cy) = mean.center();
    while out.len() < n {
        if attempts >= cap {
            return Err(Error::Sampling {
                label: label.to_string(),
                attempts,
            });
        }
        attempts += 1;
        let zx: f32 = rng.sample(StandardNormal);
        let zy: f32 = rng.sample(StandardNormal);
        let zs: f32 = rng.sample(StandardNormal);
        let mult = 1.2f32.powf(zs * scale_sigma);
        let candidate = Box::from_center(
            cx + zx * jitter,
            cy + zy * jitter,
            mean.w * mult,
            mean.h * mult,
        );
        if candidate.is_valid() && predicate(&candidate) {
            out.push(candidate);
        }
    }
    Ok(out)
}

/// Bilinearly resamples the transform's source region to its destination
/// square. Output is a 3-channel float map with values in [0,1]; grayscale
/// input is replicated across channels so crops always feed the backbone
/// directly. Samples outside the image take the transform's pad value.
pub fn crop_patch(frame: &Image, transform: &CropTransform) -> FeatureMap {
    let side = transform.dest_side as usize;
    let mut values = vec![0.0f32; side * side * 3];
    let sx = transform.scale_x();
    let sy = transform.scale_y();
    for r in 0..side {
        // Pixel centers sit at half-integers in continuous coordinates.
        let img_y = transform.src_y + (r as f32 + 0.5) / sy;
        let fy = img_y - 0.5;
        let y0 = fy.floor();
        let wy = fy - y0;
        for c in 0..side {
            let img_x = transform.src_x + (c as f32 + 0.5) / sx;
            let fx = img_x - 0.5;
            let x0 = fx.floor();
            let wx = fx - x0;
            for ch in 0..3 {
                let v00 = pixel_or_pad(frame, y0 as i64, x0 as i64, ch, transform.pad_value);
                let v01 = pixel_or_pad(frame, y0 as i64, x0 as i64 + 1, ch, transform.pad_value);
                let v10 = pixel_or_pad(frame, y0 as i64 + 1, x0 as i64, ch, transform.pad_value);
                let v11 = pixel_or_pad(frame, y0 as i64 + 1, x0 as i64 + 1, ch, transform.pad_value);
                let top = v00 + (v01 - v00) * wx;
                let bot = v10 + (v11 - v10) * wx;
                values[(r * side + c) * 3 + ch] = top + (bot - top) * wy;
            }
        }
    }
    let mut map = FeatureMap::new(side, side, 3, values, 1.0, Some(*transform))
        .expect("crop dimensions are positive");
    map.scale = 1.0;
    map
}

#[inline]
fn pixel_or_pad(frame: &Image, row: i64, col: i64, ch: usize, pad: f32) -> f32 {
    if row < 0 || col < 0 || row >= frame.height as i64 || col >= frame.width as i64 {
        return pad;
    }
    let src_ch = if frame.channels == 1 { 0 } else { ch };
    frame.data[(row as usize * frame.width + col as usize) * frame.channels + src_ch] as f32 / 255.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Unit-grid area oracle: counts pixel centers inside each region.
    /// Exact for integer-coordinate boxes.
    fn iou_pixel_oracle(a: &Box, b: &Box) -> f64 {
        let x0 = a.x.min(b.x).floor() as i64;
        let y0 = a.y.min(b.y).floor() as i64;
        let x1 = (a.x + a.w).max(b.x + b.w).ceil() as i64;
        let y1 = (a.y + a.h).max(b.y + b.h).ceil() as i64;
        let mut inter = 0u64;
        let mut union = 0u64;
        let contains = |bx: &Box, px: f32, py: f32| {
            px >= bx.x && px < bx.x + bx.w && py >= bx.y && py < bx.y + bx.h
        };
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                let in_a = contains(a, px, py);
                let in_b = contains(b, px, py);
                if in_a && in_b {
                    inter += 1;
                }
                if in_a || in_b {
                    union += 1;
                }
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn iou_identity_disjoint_and_third() {
        let a = Box::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        let far = Box::new(100.0, 100.0, 10.0, 10.0);
        assert_eq!(iou(&a, &far), 0.0);
        // Pixel-enumeration oracle: intersection 50, union 150.
        let b = Box::new(5.0, 0.0, 10.0, 10.0);
        let oracle = iou_pixel_oracle(&a, &b);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-9);
        assert!((iou(&a, &b) as f64 - oracle).abs() < 1e-6);
    }

    #[test]
    fn iou_matches_pixel_oracle_on_random_integer_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = Box::new(
                rng.random_range(0..20) as f32,
                rng.random_range(0..20) as f32,
                rng.random_range(1..15) as f32,
                rng.random_range(1..15) as f32,
            );
            let b = Box::new(
                rng.random_range(0..20) as f32,
                rng.random_range(0..20) as f32,
                rng.random_range(1..15) as f32,
                rng.random_range(1..15) as f32,
            );
            let oracle = iou_pixel_oracle(&a, &b);
            assert!(
                (iou(&a, &b) as f64 - oracle).abs() < 1e-6,
                "iou mismatch for {a:?} vs {b:?} ({} vs {oracle})",
                iou(&a, &b),
            );
        }
    }

    #[test]
    fn translation_iou_closed_form() {
        // Pure x-translation by t: iou = (w - t) / (w + t).
        let w = 12.0;
        for t in [1.0f32, 3.0, 5.0, 11.0] {
            let a = Box::new(0.0, 0.0, w, w);
            let b = Box::new(t, 0.0, w, w);
            let expect = (w - t) / (w + t);
            assert!((iou(&a, &b) - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn center_error_pythagorean() {
        let a = Box::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(center_error(&a, &a), 0.0);
        let b = Box::new(3.0, 4.0, 10.0, 10.0);
        assert!((center_error(&a, &b) - 5.0).abs() < 1e-6);
        assert_eq!(center_error(&a, &b), center_error(&b, &a));
    }

    #[test]
    fn roi_transform_patch_ratio() {
        let target = Box::new(10.0, 20.0, 30.0, 45.0);
        let t = roi_crop_transform(&target, 1.0, 107, DEFAULT_PAD_VALUE).unwrap();
        assert!((t.src_w - 107.0 / 75.0 * 30.0).abs() < 1e-4);
        assert!((t.src_h - 107.0 / 75.0 * 45.0).abs() < 1e-4);
        let (cx, cy) = t.src_center();
        assert!((cx - 25.0).abs() < 1e-4);
        assert!((cy - 42.5).abs() < 1e-4);
        // Recovered object size matches the target.
        let (ow, oh) = t.object_size();
        assert!((ow - 30.0).abs() < 1e-4 && (oh - 45.0).abs() < 1e-4);

        // 75x75 target at scale 1 with dest 299 covers ~299 source pixels.
        let square = Box::new(0.0, 0.0, 75.0, 75.0);
        let t299 = roi_crop_transform(&square, 1.0, 299, DEFAULT_PAD_VALUE).unwrap();
        assert!((t299.src_w - 299.0).abs() < 1e-3);
        assert!((t299.scale_x() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_to_box_identity_and_shift() {
        let target = Box::new(100.0, 50.0, 40.0, 40.0);
        let t = roi_crop_transform(&target, 1.0, 299, DEFAULT_PAD_VALUE).unwrap();
        let b0 = grid_to_box(0, 0, 0.0, 0.0, &t);
        assert!((b0.x - target.x).abs() < 1e-3);
        assert!((b0.y - target.y).abs() < 1e-3);
        assert!((b0.w - target.w).abs() < 1e-3);

        let b1 = grid_to_box(1, 0, 0.0, 0.0, &t);
        assert!((b1.center().0 - (b0.center().0 + 16.0 / 75.0 * 40.0)).abs() < 1e-3);

        let b6 = grid_to_box(6, 6, 0.0, 0.0, &t);
        assert!((b6.center().0 - b0.center().0 - 1.28 * 40.0).abs() < 1e-3);
        assert!((b6.center().1 - b0.center().1 - 1.28 * 40.0).abs() < 1e-3);
    }

    #[test]
    fn grid_cells_are_16_crop_pixels_apart() {
        let target = Box::new(33.0, 21.0, 50.0, 34.0);
        let t = roi_crop_transform(&target, 1.0, 299, DEFAULT_PAD_VALUE).unwrap();
        let a = grid_to_box(0, 0, 0.0, 0.0, &t);
        let b = grid_to_box(1, 0, 0.0, 0.0, &t);
        let shift_crop_px = (b.center().0 - a.center().0) * t.scale_x();
        assert!((shift_crop_px - 16.0).abs() < 1e-3);
        let c = grid_to_box(0, 1, 0.0, 0.0, &t);
        let shift_crop_py = (c.center().1 - a.center().1) * t.scale_y();
        assert!((shift_crop_py - 16.0).abs() < 1e-3);
    }

    #[test]
    fn localization_labels() {
        let target = Box::new(0.0, 0.0, 75.0, 75.0);
        assert_eq!(
            localization_label(&target, &target, MIDDLE_THRESHOLD),
            LocClass::Middle
        );
        // +8/75 of w to the right: beyond the 4/75 band.
        let sample = Box::from_center(37.5 - 8.0, 37.5, 75.0, 75.0);
        assert_eq!(
            localization_label(&sample, &target, MIDDLE_THRESHOLD),
            LocClass::Right
        );
        let sample = Box::from_center(37.5, 37.5 + 8.0, 75.0, 75.0);
        assert_eq!(
            localization_label(&sample, &target, MIDDLE_THRESHOLD),
            LocClass::Up
        );
        let sample = Box::from_center(37.5, 37.5 - 8.0, 75.0, 75.0);
        assert_eq!(
            localization_label(&sample, &target, MIDDLE_THRESHOLD),
            LocClass::Down
        );
    }

    #[test]
    fn label_flips_with_offset_sign() {
        let target = Box::new(0.0, 0.0, 40.0, 40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let ox: f32 = rng.random_range(-0.5..0.5);
            let oy: f32 = rng.random_range(-0.5..0.5);
            let (tx, ty) = target.center();
            let s1 = Box::from_center(tx - ox * 40.0, ty - oy * 40.0, 40.0, 40.0);
            let s2 = Box::from_center(tx + ox * 40.0, ty + oy * 40.0, 40.0, 40.0);
            let l1 = localization_label(&s1, &target, MIDDLE_THRESHOLD);
            let l2 = localization_label(&s2, &target, MIDDLE_THRESHOLD);
            let flipped = match l1 {
                LocClass::Up => LocClass::Down,
                LocClass::Down => LocClass::Up,
                LocClass::Left => LocClass::Right,
                LocClass::Right => LocClass::Left,
                LocClass::Middle => LocClass::Middle,
            };
            assert_eq!(l2, flipped, "offset ({ox},{oy})");
        }
    }

    #[test]
    fn sampler_degenerate_and_deterministic() {
        let mean = Box::new(10.0, 10.0, 20.0, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!(sample_gaussian_boxes(&mut rng, &mean, 0.1, 1.0, 0, "none", |_| true)
            .unwrap()
            .is_empty());

        let copies =
            sample_gaussian_boxes(&mut rng, &mean, 0.0, 0.0, 5, "copies", |_| true).unwrap();
        assert_eq!(copies.len(), 5);
        for b in &copies {
            assert!((b.x - mean.x).abs() < 1e-6 && (b.w - mean.w).abs() < 1e-6);
        }

        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let s1 = sample_gaussian_boxes(&mut r1, &mean, 0.1, 0.5, 8, "a", |_| true).unwrap();
        let s2 = sample_gaussian_boxes(&mut r2, &mean, 0.1, 0.5, 8, "a", |_| true).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn sampler_cap_names_the_predicate() {
        let mean = Box::new(0.0, 0.0, 10.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let err = sample_gaussian_boxes(&mut rng, &mean, 0.1, 0.1, 3, "impossible", |_| false)
            .unwrap_err();
        match err {
            Error::Sampling { label, attempts } => {
                assert_eq!(label, "impossible");
                assert_eq!(attempts, 300);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn crop_identity_is_pixel_exact() {
        let mut img = Image::filled(8, 8, 3, 0);
        for r in 0..8 {
            for c in 0..8 {
                for ch in 0..3 {
                    img.set(r, c, ch, (r * 31 + c * 7 + ch * 13) as u8);
                }
            }
        }
        let t = CropTransform {
            src_x: 0.0,
            src_y: 0.0,
            src_w: 8.0,
            src_h: 8.0,
            dest_side: 8,
            pad_value: DEFAULT_PAD_VALUE,
        };
        let crop = crop_patch(&img, &t);
        for r in 0..8 {
            for c in 0..8 {
                for ch in 0..3 {
                    let expect = img.get(r, c, ch) as f32 / 255.0;
                    assert!((crop.get(r, c, ch) - expect).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn crop_constant_image_stays_constant() {
        let img = Image::filled(16, 16, 1, 77);
        let t = CropTransform {
            src_x: 2.0,
            src_y: 3.0,
            src_w: 9.5,
            src_h: 7.25,
            dest_side: 12,
            pad_value: 77.0 / 255.0,
        };
        let crop = crop_patch(&img, &t);
        for v in crop.values() {
            assert!((v - 77.0 / 255.0).abs() < 1e-6);
        }
    }

    #[test]
    fn checkerboard_downscale_averages_to_gray() {
        // Period-2 checkerboard, 2x downscale: every output pixel sits at the
        // meeting corner of a 2x2 cell and averages to exactly 127.5.
        let mut img = Image::filled(8, 8, 1, 0);
        for r in 0..8 {
            for c in 0..8 {
                if (r + c) % 2 == 0 {
                    img.set(r, c, 0, 255);
                }
            }
        }
        let t = CropTransform {
            src_x: 0.0,
            src_y: 0.0,
            src_w: 8.0,
            src_h: 8.0,
            dest_side: 4,
            pad_value: 0.5,
        };
        let crop = crop_patch(&img, &t);
        for v in crop.values() {
            assert!((v - 127.5 / 255.0).abs() < 1e-6, "got {v}");
        }
    }

    #[test]
    fn crop_near_edge_uses_pad() {
        let img = Image::filled(10, 10, 1, 200);
        let target = Box::new(-5.0, -5.0, 10.0, 10.0);
        let t = roi_crop_transform(&target, 1.0, 107, 0.25).unwrap();
        let crop = crop_patch(&img, &t);
        // Top-left corner of the crop is entirely outside the image.
        assert!((crop.get(0, 0, 0) - 0.25).abs() < 1e-6);
        // Bottom-right samples real image content.
        let side = crop.height();
        assert!((crop.get(side - 1, side - 1, 0) - 200.0 / 255.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn iou_bounds_and_symmetry(
            ax in -50.0f32..50.0, ay in -50.0f32..50.0,
            aw in 0.5f32..40.0, ah in 0.5f32..40.0,
            bx in -50.0f32..50.0, by in -50.0f32..50.0,
            bw in 0.5f32..40.0, bh in 0.5f32..40.0,
        ) {
            let a = Box::new(ax, ay, aw, ah);
            let b = Box::new(bx, by, bw, bh);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - iou(&b, &a)).abs() < 1e-6);
        }

        #[test]
        fn label_is_total(
            ox in -0.9f32..0.9, oy in -0.9f32..0.9,
        ) {
            let target = Box::new(0.0, 0.0, 30.0, 30.0);
            let (tx, ty) = target.center();
            let sample = Box::from_center(tx - ox * 30.0, ty - oy * 30.0, 30.0, 30.0);
            // Exactly one of the five classes, deterministically.
            let l1 = localization_label(&sample, &target, MIDDLE_THRESHOLD);
            let l2 = localization_label(&sample, &target, MIDDLE_THRESHOLD);
            prop_assert_eq!(l1, l2);
        }
    }
}
