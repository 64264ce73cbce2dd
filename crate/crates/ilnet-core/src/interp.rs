//! Feature-map reuse: integer window extraction, fractional bilinear
//! sampling, linear blending between fixed-scale maps, and the candidate
//! grid over a shared search-region map.
//!
//! Map cell centers sit at integer coordinates. Sampling outside the convex
//! hull of the grid is an error, never a clamp — silent clamping would mask
//! caller bugs in the grid arithmetic.

use crate::error::{Error, Result};
use crate::feature_map::FeatureMap;
use crate::geometry::{Box, CELL_STRIDE_PIXELS, OBJECT_CROP_PIXELS};

/// Continuous crop-pixel coordinate of a cell index. Cell k's receptive
/// field is centered 75/2 pixels past k strides, for every map produced by
/// the reference stack.
pub fn cell_to_crop(cell: f32) -> f32 {
    cell * CELL_STRIDE_PIXELS + 0.5 * OBJECT_CROP_PIXELS
}

pub fn crop_to_cell(crop: f32) -> f32 {
    (crop - 0.5 * OBJECT_CROP_PIXELS) / CELL_STRIDE_PIXELS
}

/// Copies a `side` x `side` window with top-left cell (row, col), flattened
/// row-major with channels innermost.
pub fn extract_window(map: &FeatureMap, row: usize, col: usize, side: usize) -> Result<Vec<f32>> {
    if row + side > map.height() || col + side > map.width() {
        return Err(Error::Range(format!(
            "window {side}x{side} at ({row},{col}) exceeds map {}x{}",
            map.height(),
            map.width()
        )));
    }
    let c = map.channels();
    let mut out = Vec::with_capacity(side * side * c);
    for r in 0..side {
        for cc in 0..side {
            out.extend_from_slice(map.cell(row + r, col + cc));
        }
    }
    Ok(out)
}

/// Positions closer to an integer cell than this are treated as exact.
/// Transform arithmetic carries float noise a few orders below any
/// deliberate fractional offset (the smallest the tracker uses is 0.2
/// cells); snapping keeps integer-intent sampling bitwise equal to window
/// extraction.
const CELL_SNAP: f32 = 1e-4;

/// One cell's channel vector at a fractional grid position, bilinearly
/// blended from the four surrounding cells. Exact (bitwise) at integer
/// positions.
pub fn sample_cell_bilinear(map: &FeatureMap, row: f32, col: f32) -> Result<Vec<f32>> {
    let (h, w, c) = (map.height(), map.width(), map.channels());
    let row = if (row - row.round()).abs() < CELL_SNAP { row.round() } else { row };
    let col = if (col - col.round()).abs() < CELL_SNAP { col.round() } else { col };
    if !row.is_finite() || !col.is_finite() || row < 0.0 || col < 0.0 {
        return Err(Error::Range(format!(
            "sample ({row},{col}) outside map hull {h}x{w}"
        )));
    }
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = (row - r0) as f64;
    let fc = (col - c0) as f64;
    let r0 = r0 as usize;
    let c0 = c0 as usize;
    let r1 = if fr > 0.0 { r0 + 1 } else { r0 };
    let c1 = if fc > 0.0 { c0 + 1 } else { c0 };
    if r1 >= h || c1 >= w {
        return Err(Error::Range(format!(
            "sample ({row},{col}) outside map hull {h}x{w}"
        )));
    }
    let v00 = map.cell(r0, c0);
    let v01 = map.cell(r0, c1);
    let v10 = map.cell(r1, c0);
    let v11 = map.cell(r1, c1);
    let (w00, w01, w10, w11) = (
        (1.0 - fr) * (1.0 - fc),
        (1.0 - fr) * fc,
        fr * (1.0 - fc),
        fr * fc,
    );
    let mut out = Vec::with_capacity(c);
    for ch in 0..c {
        out.push(
            (v00[ch] as f64 * w00
                + v01[ch] as f64 * w01
                + v10[ch] as f64 * w10
                + v11[ch] as f64 * w11) as f32,
        );
    }
    Ok(out)
}

/// A `side` x `side` window whose center cell sits at the fractional
/// position (center_row, center_col). At integer centers this equals
/// `extract_window` exactly.
pub fn sample_window_bilinear(
    map: &FeatureMap,
    center_row: f32,
    center_col: f32,
    side: usize,
) -> Result<Vec<f32>> {
    let half = (side as f32 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(side * side * map.channels());
    for r in 0..side {
        for c in 0..side {
            let cell = sample_cell_bilinear(
                map,
                center_row - half + r as f32,
                center_col - half + c as f32,
            )?;
            out.extend_from_slice(&cell);
        }
    }
    Ok(out)
}

/// Integer cell displacement of a candidate window from the map center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridOffset {
    pub kx: i32,
    pub ky: i32,
}

/// All window placements of `window_side` on a `map_side` map, as center
/// offsets in row-major order (ky outer, kx inner, both ascending). A 15-map
/// with 3-windows yields the 169 offsets [-6, 6]^2.
pub fn candidate_offsets(map_side: usize, window_side: usize) -> Result<Vec<GridOffset>> {
    if window_side > map_side || (map_side - window_side) % 2 != 0 {
        return Err(Error::Config(format!(
            "window {window_side} on map {map_side} has no centered placement"
        )));
    }
    let reach = ((map_side - window_side) / 2) as i32;
    let mut out = Vec::with_capacity(((2 * reach + 1) * (2 * reach + 1)) as usize);
    for ky in -reach..=reach {
        for kx in -reach..=reach {
            out.push(GridOffset { kx, ky });
        }
    }
    Ok(out)
}

/// Window at an integer grid offset from the map center.
pub fn window_at_offset(map: &FeatureMap, off: GridOffset, window_side: usize) -> Result<Vec<f32>> {
    let base_r = (map.height() - window_side) as i64 / 2 + off.ky as i64;
    let base_c = (map.width() - window_side) as i64 / 2 + off.kx as i64;
    if base_r < 0 || base_c < 0 {
        return Err(Error::Range(format!(
            "offset ({},{}) places the window outside the map",
            off.kx, off.ky
        )));
    }
    extract_window(map, base_r as usize, base_c as usize, window_side)
}

/// Linear blend of two equally-shaped feature vectors: (1-alpha)*lo + alpha*hi.
pub fn blend_features(lo: &[f32], hi: &[f32], alpha: f32) -> Result<Vec<f32>> {
    if lo.len() != hi.len() {
        return Err(Error::Input(format!(
            "blend of mismatched features ({} vs {})",
            lo.len(),
            hi.len()
        )));
    }
    let a = alpha as f64;
    Ok(lo
        .iter()
        .zip(hi)
        .map(|(l, h)| ((1.0 - a) * *l as f64 + a * *h as f64) as f32)
        .collect())
}

/// Linear interpolation between two maps of the same shape at a scale in
/// [lo.scale, hi.scale]. Exact at the endpoints. The result carries the
/// requested scale and no crop provenance.
pub fn interp_scale_maps(lo: &FeatureMap, hi: &FeatureMap, scale: f32) -> Result<FeatureMap> {
    if (lo.height(), lo.width(), lo.channels()) != (hi.height(), hi.width(), hi.channels()) {
        return Err(Error::Input(format!(
            "scale blend of mismatched maps {}x{}x{} vs {}x{}x{}",
            lo.height(),
            lo.width(),
            lo.channels(),
            hi.height(),
            hi.width(),
            hi.channels()
        )));
    }
    if !(lo.scale < hi.scale) {
        return Err(Error::Input(format!(
            "scale blend needs lo.scale < hi.scale, got {} and {}",
            lo.scale, hi.scale
        )));
    }
    if scale < lo.scale || scale > hi.scale {
        return Err(Error::Range(format!(
            "scale {} outside [{}, {}]",
            scale, lo.scale, hi.scale
        )));
    }
    let alpha = (scale - lo.scale) / (hi.scale - lo.scale);
    let values = blend_features(lo.values(), hi.values(), alpha)?;
    FeatureMap::new(lo.height(), lo.width(), lo.channels(), values, scale, None)
}

/// Feature maps of one frame region held at several scales, each carrying
/// its own crop transform. Maps are kept sorted by scale; shapes may differ
/// (a 15x15 search map can sit beside 5x5 refinement maps) but channel
/// counts must agree.
#[derive(Debug, Clone)]
pub struct ScaledMapSet {
    maps: Vec<FeatureMap>,
}

impl ScaledMapSet {
    pub fn new(mut maps: Vec<FeatureMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Input("empty scaled map set".into()));
        }
        let channels = maps[0].channels();
        for m in &maps {
            if m.channels() != channels {
                return Err(Error::Input(format!(
                    "scaled map set mixes channel counts {} and {}",
                    channels,
                    m.channels()
                )));
            }
            if m.transform.is_none() {
                return Err(Error::Input(
                    "scaled map set requires crop provenance on every map".into(),
                ));
            }
            if !(m.scale > 0.0) || !m.scale.is_finite() {
                return Err(Error::Input(format!("invalid map scale {}", m.scale)));
            }
        }
        maps.sort_by(|a, b| a.scale.partial_cmp(&b.scale).unwrap());
        if maps.windows(2).any(|w| w[0].scale == w[1].scale) {
            return Err(Error::Input("duplicate scales in map set".into()));
        }
        Ok(ScaledMapSet { maps })
    }

    pub fn maps(&self) -> &[FeatureMap] {
        &self.maps
    }

    pub fn scales(&self) -> Vec<f32> {
        self.maps.iter().map(|m| m.scale).collect()
    }

    pub fn scale_range(&self) -> (f32, f32) {
        (self.maps[0].scale, self.maps[self.maps.len() - 1].scale)
    }

    /// Reference object size shared by the set (each map's scaled object,
    /// divided back by its scale).
    pub fn reference_size(&self) -> (f32, f32) {
        let m = &self.maps[0];
        let (ow, oh) = m.transform.as_ref().unwrap().object_size();
        (ow / m.scale, oh / m.scale)
    }

    /// Adjacent maps with lo.scale <= scale <= hi.scale plus the blend
    /// weight. A scale within relative 1e-5 of a retained map snaps to it
    /// exactly (weight 0), absorbing transform-arithmetic float noise.
    pub fn bracket(&self, scale: f32) -> Result<(&FeatureMap, &FeatureMap, f32)> {
        for m in &self.maps {
            if (scale - m.scale).abs() <= 1e-5 * m.scale {
                return Ok((m, m, 0.0));
            }
        }
        let (lo, hi) = self.scale_range();
        if !(scale >= lo && scale <= hi) {
            return Err(Error::Range(format!(
                "scale {scale} outside the retained range [{lo}, {hi}]"
            )));
        }
        for (i, w) in self.maps.windows(2).enumerate() {
            if scale > w[0].scale && scale < w[1].scale {
                let alpha = (scale - w[0].scale) / (w[1].scale - w[0].scale);
                return Ok((&self.maps[i], &self.maps[i + 1], alpha));
            }
        }
        Err(Error::Range(format!("scale {scale} not bracketed")))
    }

    /// Samples one map's window at the cell position of an image point.
    fn sample_from(&self, map: &FeatureMap, b: &Box, side: usize) -> Result<Vec<f32>> {
        let t = map.transform.as_ref().unwrap();
        let (cx, cy) = b.center();
        let u = (cx - t.src_x) * t.scale_x();
        let v = (cy - t.src_y) * t.scale_y();
        sample_window_bilinear(map, crop_to_cell(v), crop_to_cell(u), side)
    }

    /// Produces the `side` x `side` feature of an arbitrary box purely from
    /// the retained maps: the box scale (relative to the set's reference
    /// size) is bracketed between map scales, the box center is sampled
    /// bilinearly from each bracketing map at its own cell pitch, and the
    /// two windows are blended linearly in scale.
    ///
    /// `scale_slack` >= 1 permits boxes beyond the retained scale range by
    /// that factor, sampled from the nearest endpoint map without blending
    /// (used for loosely-featurized background samples); 1.0 demands a true
    /// bracket.
    pub fn featurize_box(&self, b: &Box, side: usize, scale_slack: f32) -> Result<Vec<f32>> {
        b.validate()?;
        let (rw, rh) = self.reference_size();
        let mut scale = ((b.w / rw) * (b.h / rh)).sqrt();
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::Range(format!("degenerate box scale {scale}")));
        }
        let (lo, hi) = self.scale_range();
        // Absorb float noise at the hull boundary without admitting real
        // out-of-range scales.
        if scale > hi && scale <= hi * (1.0 + 1e-5) {
            scale = hi;
        } else if scale < lo && scale >= lo * (1.0 - 1e-5) {
            scale = lo;
        }
        if scale < lo || scale > hi {
            if scale >= lo / scale_slack && scale <= hi * scale_slack {
                let endpoint = if scale < lo {
                    &self.maps[0]
                } else {
                    &self.maps[self.maps.len() - 1]
                };
                return self.sample_from(endpoint, b, side);
            }
            return Err(Error::Range(format!(
                "box scale {scale} outside retained range [{lo}, {hi}]"
            )));
        }
        let (m_lo, m_hi, alpha) = self.bracket(scale)?;
        let f_lo = self.sample_from(m_lo, b, side)?;
        if alpha == 0.0 {
            return Ok(f_lo);
        }
        let f_hi = self.sample_from(m_hi, b, side)?;
        blend_features(&f_lo, &f_hi, alpha)
    }

    /// Whether `featurize_box` would succeed — the rejection predicate used
    /// when drawing training boxes.
    pub fn can_featurize(&self, b: &Box, side: usize, scale_slack: f32) -> bool {
        self.featurize_box(b, side, scale_slack).is_ok()
    }
}
