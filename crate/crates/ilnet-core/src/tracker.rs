//! The tracking-by-detection state machine: first-frame training, per-frame
//! coarse + fine localization over one shared search-region forward,
//! interpolation-based sample collection, and scheduled online updates.
//!
//! The per-frame compute contract: at most 3 backbone forwards per tracked
//! frame (the 299 search region plus two 139 refinement crops) no matter how
//! many candidates are scored — 169 coarse windows and 100 fine samples all
//! come from window extraction and interpolation.

use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backbone::{backbone_forward, BackboneProfile, INIT_SIDE, PATCH_SIDE, ROI_SIDE};
use crate::error::{Error, Result};
use crate::feature_map::FeatureMap;
use crate::geometry::{
    crop_patch, grid_to_box, iou, localization_label, roi_crop_transform, sample_gaussian_boxes,
    Box, LocClass, CELL_STRIDE_PIXELS, COARSE_MOVE_STEP, DEFAULT_PAD_VALUE, MIDDLE_THRESHOLD,
    OBJECT_CROP_PIXELS,
};
use crate::heads::{
    head_forward, positive_probability, train_loc_head, train_object_head, ObjectBatchPolicy,
    SgdConfig,
};
use crate::image::Image;
use crate::interp::{candidate_offsets, crop_to_cell, sample_window_bilinear, window_at_offset, ScaledMapSet};
use crate::model::NetworkModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub profile: BackboneProfile,
    pub seed: u64,
    /// Object-probability gate for detection, collection, and short-term
    /// update triggering.
    pub score_threshold: f32,
    pub positive_iou: f32,
    pub negative_iou: f32,
    /// First-frame scale pyramid step: maps at {1/step, 1, step}.
    pub initial_scale_step: f32,
    /// Refinement pyramid step: new maps at {1/step, step} around the coarse
    /// location.
    pub fine_scale_step: f32,
    pub long_term_interval: usize,
    pub frame_positive_count: usize,
    pub frame_loc_count: usize,
    pub frame_negative_count: usize,
    pub online_iterations: usize,
    pub initial_iterations: usize,
    pub object_minibatch: usize,
    pub loc_minibatch: usize,
    pub mining_keep: usize,
    pub mining_pool: usize,
    /// Recentering shift applied to a classified coarse window, as a
    /// fraction of the scaled object dimension.
    pub coarse_move_step: f32,
    pub middle_threshold: f32,
    /// Fine-stage center offsets per axis, in feature cells.
    pub fine_lattice: Vec<f32>,
    pub fine_scale_draws: usize,
    /// Std-dev of the fine scale draws ~ N(1, sigma^2), clamped to the fine
    /// scale range.
    pub fine_scale_sigma: f32,
    /// Positive/localization eviction window (successful frames) for
    /// long-term updates.
    pub long_window: usize,
    /// Positive window for short-term updates.
    pub short_window: usize,
    pub negative_window: usize,
    pub init_positive_count: usize,
    pub init_loc_count: usize,
    pub init_negative_count: usize,
    pub positive_trans_sigma: f32,
    /// First-frame positive/localization scale jitter (units of
    /// 1.2^N(0, sigma)).
    pub init_scale_sigma: f32,
    /// Online positive/localization scale jitter; small so samples stay
    /// within the refinement scale range.
    pub online_scale_sigma: f32,
    pub negative_trans_sigma: f32,
    pub init_negative_scale_sigma: f32,
    /// Hidden-layer learning rate; the logits layer conventionally trains
    /// 10x faster. Both are calibrated to the desk-scale feature magnitudes
    /// (roughly 0.15 rms), which sit orders below full-scale conv3 output.
    pub lr_hidden: f32,
    pub lr_logits: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            profile: BackboneProfile::Desk,
            seed: 0,
            score_threshold: 0.5,
            positive_iou: 0.7,
            negative_iou: 0.5,
            initial_scale_step: 1.2,
            fine_scale_step: 1.05,
            long_term_interval: 10,
            frame_positive_count: 30,
            frame_loc_count: 30,
            frame_negative_count: 100,
            online_iterations: 10,
            initial_iterations: 90,
            object_minibatch: 128,
            loc_minibatch: 65,
            mining_keep: 96,
            mining_pool: 1024,
            coarse_move_step: COARSE_MOVE_STEP,
            middle_threshold: MIDDLE_THRESHOLD,
            fine_lattice: vec![-0.4, -0.2, 0.0, 0.2, 0.4],
            fine_scale_draws: 4,
            fine_scale_sigma: 0.05,
            long_window: 100,
            short_window: 20,
            negative_window: 20,
            init_positive_count: 500,
            init_loc_count: 500,
            init_negative_count: 2500,
            positive_trans_sigma: 0.1,
            init_scale_sigma: 0.3,
            online_scale_sigma: 0.05,
            negative_trans_sigma: 0.7,
            init_negative_scale_sigma: 0.5,
            lr_hidden: 1e-2,
            lr_logits: 1e-1,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("score_threshold", self.score_threshold),
            ("positive_iou", self.positive_iou),
            ("negative_iou", self.negative_iou),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if !(self.initial_scale_step > 1.0) || !(self.fine_scale_step > 1.0) {
            return Err(Error::Config("scale steps must exceed 1".into()));
        }
        let counts = [
            ("long_term_interval", self.long_term_interval),
            ("frame_positive_count", self.frame_positive_count),
            ("frame_loc_count", self.frame_loc_count),
            ("frame_negative_count", self.frame_negative_count),
            ("online_iterations", self.online_iterations),
            ("initial_iterations", self.initial_iterations),
            ("object_minibatch", self.object_minibatch),
            ("loc_minibatch", self.loc_minibatch),
            ("mining_keep", self.mining_keep),
            ("mining_pool", self.mining_pool),
            ("long_window", self.long_window),
            ("short_window", self.short_window),
            ("negative_window", self.negative_window),
            ("init_positive_count", self.init_positive_count),
            ("init_loc_count", self.init_loc_count),
            ("init_negative_count", self.init_negative_count),
            ("fine_scale_draws", self.fine_scale_draws),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let lattice_points = self.fine_lattice.len() * self.fine_lattice.len();
        if lattice_points * self.fine_scale_draws != 100 {
            return Err(Error::Config(format!(
                "fine lattice ({} points) x {} scale draws must produce 100 samples",
                lattice_points, self.fine_scale_draws
            )));
        }
        if self.object_minibatch <= self.mining_keep {
            return Err(Error::Config(format!(
                "object minibatch {} must exceed the {} mined negatives",
                self.object_minibatch, self.mining_keep
            )));
        }
        if self.loc_minibatch % 5 != 0 {
            return Err(Error::Config(format!(
                "localization minibatch {} must divide evenly into 5 classes",
                self.loc_minibatch
            )));
        }
        if self.frame_loc_count % 5 != 0 || self.init_loc_count % 5 != 0 {
            return Err(Error::Config(
                "localization sample counts must divide evenly into 5 classes".into(),
            ));
        }
        if !(self.coarse_move_step > 0.0) || !(self.middle_threshold > 0.0) {
            return Err(Error::Config("move step and middle threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn initial_scales(&self) -> [f32; 3] {
        [1.0 / self.initial_scale_step, 1.0, self.initial_scale_step]
    }

    fn sgd(&self, iterations: usize) -> SgdConfig {
        SgdConfig {
            iterations,
            lr_hidden: self.lr_hidden,
            lr_logits: self.lr_logits,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    fn object_policy(&self) -> ObjectBatchPolicy {
        ObjectBatchPolicy {
            positives_per_batch: self.object_minibatch - self.mining_keep,
            mined_negatives: self.mining_keep,
            negative_pool: self.mining_pool,
        }
    }
}

type Feature = Vec<f32>;

/// Per-frame feature banks with eviction by successful-frame windows.
#[derive(Debug, Clone, Default)]
pub struct SampleStore {
    positives: VecDeque<(usize, Vec<Feature>)>,
    localization: VecDeque<(usize, [Vec<Feature>; 5])>,
    negatives: VecDeque<(usize, Vec<Feature>)>,
    long_window: usize,
    negative_window: usize,
}

impl SampleStore {
    pub fn new(cfg: &TrackerConfig) -> Self {
        SampleStore {
            positives: VecDeque::new(),
            localization: VecDeque::new(),
            negatives: VecDeque::new(),
            long_window: cfg.long_window,
            negative_window: cfg.negative_window,
        }
    }

    /// Commits one frame's samples atomically and evicts groups beyond each
    /// bank's window.
    pub fn push_frame(
        &mut self,
        frame: usize,
        positives: Vec<Feature>,
        localization: [Vec<Feature>; 5],
        negatives: Vec<Feature>,
    ) {
        self.positives.push_back((frame, positives));
        self.localization.push_back((frame, localization));
        self.negatives.push_back((frame, negatives));
        while self.positives.len() > self.long_window {
            self.positives.pop_front();
        }
        while self.localization.len() > self.long_window {
            self.localization.pop_front();
        }
        while self.negatives.len() > self.negative_window {
            self.negatives.pop_front();
        }
    }

    /// Flattened positives of the most recent `window` successful frames.
    pub fn positive_bank(&self, window: usize) -> Vec<Feature> {
        let skip = self.positives.len().saturating_sub(window);
        self.positives
            .iter()
            .skip(skip)
            .flat_map(|(_, g)| g.iter().cloned())
            .collect()
    }

    pub fn negative_bank(&self) -> Vec<Feature> {
        self.negatives
            .iter()
            .flat_map(|(_, g)| g.iter().cloned())
            .collect()
    }

    pub fn loc_banks(&self, window: usize) -> [Vec<Feature>; 5] {
        let skip = self.localization.len().saturating_sub(window);
        let mut out: [Vec<Feature>; 5] = Default::default();
        for (_, group) in self.localization.iter().skip(skip) {
            for c in 0..5 {
                out[c].extend(group[c].iter().cloned());
            }
        }
        out
    }

    /// (positive, localization, negative) record totals.
    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.positives.iter().map(|(_, g)| g.len()).sum(),
            self.localization
                .iter()
                .map(|(_, g)| g.iter().map(Vec::len).sum::<usize>())
                .sum(),
            self.negatives.iter().map(|(_, g)| g.len()).sum(),
        )
    }

    /// Source-frame tags currently present per bank (ascending).
    pub fn negative_frames(&self) -> Vec<usize> {
        self.negatives.iter().map(|(f, _)| *f).collect()
    }

    pub fn positive_frames(&self) -> Vec<usize> {
        self.positives.iter().map(|(f, _)| *f).collect()
    }
}

/// The maps retained from one tracked frame, from which every training
/// sample of that frame is featurized.
#[derive(Debug, Clone)]
pub struct RetainedMaps {
    /// The 15x15 search-region map at scale 1 (wide spatial reach).
    pub roi: ScaledMapSet,
    /// The refinement 5x5 set around the coarse location (scale reach),
    /// absent on no-detection frames.
    pub fine: Option<ScaledMapSet>,
}

#[derive(Debug, Clone)]
pub struct CoarseCandidate {
    /// Row-major enumeration index on the candidate grid.
    pub index: usize,
    pub score: f32,
    pub class: LocClass,
    /// Candidate box after the class-driven recentering move.
    pub moved: Box,
}

#[derive(Debug, Clone)]
pub struct CoarseOutcome {
    pub best: Option<CoarseCandidate>,
    /// Highest window score regardless of the threshold (the frame score on
    /// no-detection).
    pub best_score: f32,
    pub survivors: usize,
}

/// Scores all grid windows, recenters those above the threshold according to
/// their localization class, and picks the moved box that overlaps the other
/// survivors most.
pub fn coarse_localize(
    model: &NetworkModel,
    roi_map: &FeatureMap,
    cfg: &TrackerConfig,
) -> Result<CoarseOutcome> {
    let transform = roi_map
        .transform
        .ok_or_else(|| Error::Input("search-region map lacks crop provenance".into()))?;
    let offsets = candidate_offsets(roi_map.height().min(roi_map.width()), 3)?;
    let move_cells = cfg.coarse_move_step * OBJECT_CROP_PIXELS / CELL_STRIDE_PIXELS;

    let mut best_score = f32::MIN;
    let mut survivors: Vec<CoarseCandidate> = Vec::new();
    for (index, off) in offsets.into_iter().enumerate() {
        let window = window_at_offset(roi_map, off, 3)?;
        let score = positive_probability(&model.object_head, &window)?;
        if score > best_score {
            best_score = score;
        }
        if score > cfg.score_threshold {
            let logits = head_forward(&model.loc_head, &window)?;
            let mut class = LocClass::Up;
            let mut best_logit = f32::MIN;
            for (c, &z) in logits.iter().enumerate() {
                if z > best_logit {
                    best_logit = z;
                    class = LocClass::from_index(c).unwrap();
                }
            }
            let (dx, dy) = class.direction();
            let moved = grid_to_box(
                off.kx,
                off.ky,
                dx * move_cells,
                dy * move_cells,
                &transform,
            );
            survivors.push(CoarseCandidate {
                index,
                score,
                class,
                moved,
            });
        }
    }
    let n = survivors.len();
    let best = select_by_overlap(&survivors).map(|i| survivors.swap_remove(i));
    Ok(CoarseOutcome {
        best,
        best_score,
        survivors: n,
    })
}

/// Position (in the given slice) of the candidate maximizing the summed IoU
/// with every other candidate; ties break toward higher score, then lower
/// grid index. The sum is accumulated in ascending value order, so the
/// outcome does not depend on the enumeration order of the slice.
pub fn select_by_overlap(candidates: &[CoarseCandidate]) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let mut overlaps: Vec<f64> = candidates
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, o)| iou(&c.moved, &o.moved) as f64)
            .collect();
        overlaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let sum: f64 = overlaps.iter().sum();
        let better = match best {
            None => true,
            Some((bi, bsum)) => {
                let b = &candidates[bi];
                sum > bsum
                    || (sum == bsum
                        && (c.score > b.score || (c.score == b.score && c.index < b.index)))
            }
        };
        if better {
            best = Some((i, sum));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone)]
pub struct FineOutcome {
    pub box_: Box,
    /// Size multiplier relative to the pre-refinement box.
    pub scale: f32,
    pub score: f32,
    pub candidates: usize,
    pub scale_draws: Vec<f32>,
}

/// Builds the refinement map set for a coarse detection: two fresh forwards
/// at the fine scale steps, plus the scale-1 5x5 window sampled bilinearly
/// out of the existing search-region map. When the coarse center sits too
/// close to the search-region edge for that window, the set simply omits
/// the scale-1 map (keeping the per-frame forward budget) and candidate
/// scales are bracketed by the two fresh maps alone.
pub fn build_fine_set(
    model: &NetworkModel,
    frame: &Image,
    roi_map: &FeatureMap,
    coarse: &Box,
    cfg: &TrackerConfig,
) -> Result<(ScaledMapSet, usize)> {
    let mut maps = Vec::with_capacity(3);
    let mut forwards = 0usize;
    for s in [1.0 / cfg.fine_scale_step, cfg.fine_scale_step] {
        let t = roi_crop_transform(coarse, s, INIT_SIDE, DEFAULT_PAD_VALUE)?;
        let mut crop = crop_patch(frame, &t);
        crop.scale = s;
        maps.push(backbone_forward(&crop, &model.spec, &model.backbone)?);
        forwards += 1;
    }
    let rt = roi_map
        .transform
        .ok_or_else(|| Error::Input("search-region map lacks crop provenance".into()))?;
    let (cx, cy) = coarse.center();
    let col = crop_to_cell((cx - rt.src_x) * rt.scale_x());
    let row = crop_to_cell((cy - rt.src_y) * rt.scale_y());
    match sample_window_bilinear(roi_map, row, col, 5) {
        Ok(values) => {
            let t = roi_crop_transform(coarse, 1.0, INIT_SIDE, DEFAULT_PAD_VALUE)?;
            let mut m = FeatureMap::new(5, 5, roi_map.channels(), values, 1.0, Some(t))?;
            m.scale = 1.0;
            maps.push(m);
        }
        Err(Error::Range(_)) => {
            log::debug!("coarse center outside the search-map hull; fine set runs on 2 scales");
        }
        Err(e) => return Err(e),
    }
    Ok((ScaledMapSet::new(maps)?, forwards))
}

/// Scores the fixed offset lattice x Gaussian scale draws entirely by
/// interpolation from the refinement set and averages the top 3.
pub fn fine_localize<R: Rng>(
    model: &NetworkModel,
    fine_set: &ScaledMapSet,
    coarse: &Box,
    cfg: &TrackerConfig,
    rng: &mut R,
) -> Result<FineOutcome> {
    let (lo, hi) = (1.0 / cfg.fine_scale_step, cfg.fine_scale_step);
    let draws: Vec<f32> = (0..cfg.fine_scale_draws)
        .map(|_| {
            let z: f32 = rng.sample(StandardNormal);
            (1.0 + cfg.fine_scale_sigma * z).clamp(lo, hi)
        })
        .collect();
    let pitch_x = CELL_STRIDE_PIXELS / OBJECT_CROP_PIXELS * coarse.w;
    let pitch_y = CELL_STRIDE_PIXELS / OBJECT_CROP_PIXELS * coarse.h;
    let (ccx, ccy) = coarse.center();

    let mut scored: Vec<(f32, Box, f32)> = Vec::with_capacity(100);
    for &dy in &cfg.fine_lattice {
        for &dx in &cfg.fine_lattice {
            for &s in &draws {
                let b = Box::from_center(
                    ccx + dx * pitch_x,
                    ccy + dy * pitch_y,
                    coarse.w * s,
                    coarse.h * s,
                );
                let f = fine_set.featurize_box(&b, 3, 1.0)?;
                let p = positive_probability(&model.object_head, &f)?;
                scored.push((p, b, s));
            }
        }
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b].0
            .partial_cmp(&scored[a].0)
            .unwrap()
            .then(a.cmp(&b))
    });
    let top = &order[..order.len().min(3)];
    let inv = 1.0 / top.len() as f64;
    let mcx: f64 = top.iter().map(|&i| scored[i].1.center().0 as f64).sum::<f64>() * inv;
    let mcy: f64 = top.iter().map(|&i| scored[i].1.center().1 as f64).sum::<f64>() * inv;
    let ms: f64 = top.iter().map(|&i| scored[i].2 as f64).sum::<f64>() * inv;
    let mscore: f64 = top.iter().map(|&i| scored[i].0 as f64).sum::<f64>() * inv;
    Ok(FineOutcome {
        box_: Box::from_center(
            mcx as f32,
            mcy as f32,
            coarse.w * ms as f32,
            coarse.h * ms as f32,
        ),
        scale: ms as f32,
        score: mscore as f32,
        candidates: scored.len(),
        scale_draws: draws,
    })
}

/// Which updates fire at a frame: long-term strictly on the interval,
/// short-term strictly on a sub-threshold score. Both may fire at once.
pub fn update_triggers(frame_index: usize, score: f32, cfg: &TrackerConfig) -> (bool, bool) {
    (
        frame_index % cfg.long_term_interval == 0,
        score < cfg.score_threshold,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub frame_index: usize,
    /// Full backbone forwards consumed by this frame (<= 3).
    pub backbone_forwards: usize,
    pub detected: bool,
    pub collected: bool,
    pub long_update: bool,
    pub short_update: bool,
    pub coarse_survivors: usize,
    pub best_window_score: f32,
    pub fine_candidates: usize,
    pub roi_ms: f64,
    pub coarse_ms: f64,
    pub fine_ms: f64,
    pub collect_ms: f64,
    pub update_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub box_: Box,
    pub score: f32,
    pub diagnostics: FrameDiagnostics,
}

pub struct TrackerState {
    pub model: NetworkModel,
    pub config: TrackerConfig,
    pub current_box: Box,
    /// Cumulative size multiplier relative to the initial box.
    pub current_scale: f32,
    /// Frames processed so far; the initial frame is 0.
    pub frame_index: usize,
    pub store: SampleStore,
    rng: ChaCha8Rng,
    retained: Option<RetainedMaps>,
    frame_size: (usize, usize),
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn center_in_frame(b: &Box, size: (usize, usize)) -> bool {
    let (cx, cy) = b.center();
    cx >= 0.0 && cy >= 0.0 && cx < size.0 as f32 && cy < size.1 as f32
}

impl TrackerState {
    /// First-frame training with a freshly initialized network drawn from
    /// the configured seed.
    pub fn init(frame: &Image, init_box: &Box, config: TrackerConfig) -> Result<TrackerState> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = NetworkModel::random(config.profile, &mut rng);
        Self::init_core(frame, init_box, config, model, rng)
    }

    /// First-frame training on an externally provided model (e.g. loaded
    /// weights).
    pub fn init_with_model(
        frame: &Image,
        init_box: &Box,
        config: TrackerConfig,
        model: NetworkModel,
    ) -> Result<TrackerState> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::init_core(frame, init_box, config, model, rng)
    }

    fn init_core(
        frame: &Image,
        init_box: &Box,
        config: TrackerConfig,
        mut model: NetworkModel,
        mut rng: ChaCha8Rng,
    ) -> Result<TrackerState> {
        init_box.validate()?;
        let target = init_box.clipped_to(frame.width, frame.height);
        if !target.is_valid() || target.w < 4.0 || target.h < 4.0 {
            return Err(Error::Input(format!(
                "initial box degenerate after clipping to the {}x{} frame",
                frame.width, frame.height
            )));
        }

        // Scale pyramid around the target plus the wide search-region map.
        let mut pyramid = Vec::with_capacity(3);
        for s in config.initial_scales() {
            let t = roi_crop_transform(&target, s, INIT_SIDE, DEFAULT_PAD_VALUE)?;
            let mut crop = crop_patch(frame, &t);
            crop.scale = s;
            pyramid.push(backbone_forward(&crop, &model.spec, &model.backbone)?);
        }
        let pyramid = ScaledMapSet::new(pyramid)?;
        let rt = roi_crop_transform(&target, 1.0, ROI_SIDE, DEFAULT_PAD_VALUE)?;
        let mut roi_crop = crop_patch(frame, &rt);
        roi_crop.scale = 1.0;
        let roi_map = backbone_forward(&roi_crop, &model.spec, &model.backbone)?;
        let roi_set = ScaledMapSet::new(vec![roi_map])?;

        // Positive and localization samples live inside the pyramid's reach
        // by construction (IoU above 0.7 bounds both displacement and scale),
        // so their features always come from interpolation.
        let pos_boxes = sample_gaussian_boxes(
            &mut rng,
            &target,
            config.positive_trans_sigma,
            config.init_scale_sigma,
            config.init_positive_count,
            "initial positives",
            |b| iou(b, &target) > config.positive_iou && pyramid.can_featurize(b, 3, 1.0),
        )?;
        let pos_feats: Vec<Feature> = pos_boxes
            .iter()
            .map(|b| pyramid.featurize_box(b, 3, 1.0))
            .collect::<Result<_>>()?;

        let per_class = config.init_loc_count / 5;
        let mut loc_banks: [Vec<Feature>; 5] = Default::default();
        for class in LocClass::ALL {
            let boxes = sample_gaussian_boxes(
                &mut rng,
                &target,
                config.positive_trans_sigma,
                config.init_scale_sigma,
                per_class,
                &format!("initial {class:?} samples"),
                |b| {
                    iou(b, &target) > config.positive_iou
                        && localization_label(b, &target, config.middle_threshold) == class
                        && pyramid.can_featurize(b, 3, 1.0)
                },
            )?;
            loc_banks[class.index()] = boxes
                .iter()
                .map(|b| pyramid.featurize_box(b, 3, 1.0))
                .collect::<Result<_>>()?;
        }

        // Background boxes split by interpolation reachability: close ones
        // (within the search map and the pyramid's scale range) are
        // featurized from the scale-1 search map, far ones get their own
        // patch forward.
        let frame_size = (frame.width, frame.height);
        let neg_boxes = sample_gaussian_boxes(
            &mut rng,
            &target,
            config.negative_trans_sigma,
            config.init_negative_scale_sigma,
            config.init_negative_count,
            "initial negatives",
            |b| iou(b, &target) < config.negative_iou && center_in_frame(b, frame_size),
        )?;
        let mut neg_feats: Vec<Feature> = Vec::with_capacity(neg_boxes.len());
        let mut far = 0usize;
        for b in &neg_boxes {
            match roi_set.featurize_box(b, 3, config.initial_scale_step) {
                Ok(f) => neg_feats.push(f),
                Err(Error::Range(_)) => {
                    let t = roi_crop_transform(b, 1.0, PATCH_SIDE, DEFAULT_PAD_VALUE)?;
                    let crop = crop_patch(frame, &t);
                    let map = backbone_forward(&crop, &model.spec, &model.backbone)?;
                    neg_feats.push(map.values().to_vec());
                    far += 1;
                }
                Err(e) => return Err(e),
            }
        }
        log::debug!(
            "initial frame: {} close / {} far background samples",
            neg_feats.len() - far,
            far
        );

        let trace = train_object_head(
            &mut model.object_head,
            &pos_feats,
            &neg_feats,
            &config.sgd(config.initial_iterations),
            &config.object_policy(),
            &mut rng,
        )?;
        log::debug!(
            "initial object training: loss {:.4} -> {:.4}",
            trace.first().copied().unwrap_or(0.0),
            trace.last().copied().unwrap_or(0.0)
        );
        train_loc_head(
            &mut model.loc_head,
            &loc_banks,
            config.loc_minibatch / 5,
            &config.sgd(config.initial_iterations),
            &mut rng,
        )?;

        let mut store = SampleStore::new(&config);
        let neg_cap = config.negative_window * config.frame_negative_count;
        let mut seed_negs = neg_feats;
        seed_negs.truncate(neg_cap);
        store.push_frame(0, pos_feats, loc_banks, seed_negs);

        Ok(TrackerState {
            model,
            current_box: target,
            current_scale: 1.0,
            frame_index: 0,
            store,
            rng,
            retained: Some(RetainedMaps {
                roi: roi_set,
                fine: Some(pyramid),
            }),
            frame_size,
            config,
        })
    }

    /// Tracks one frame: one search-region forward, coarse grid detection,
    /// fine refinement, sample collection, and any scheduled update. Never
    /// aborts mid-sequence for tracking reasons — a lost target keeps the
    /// previous box and lets the low score trigger recovery updates.
    pub fn track(&mut self, frame: &Image) -> Result<TrackResult> {
        if (frame.width, frame.height) != self.frame_size {
            return Err(Error::Input(format!(
                "frame is {}x{}, sequence started at {}x{}",
                frame.width, frame.height, self.frame_size.0, self.frame_size.1
            )));
        }
        let t_total = Instant::now();
        self.frame_index += 1;
        let mut forwards = 0usize;

        let t_roi = Instant::now();
        let rt = roi_crop_transform(&self.current_box, 1.0, ROI_SIDE, DEFAULT_PAD_VALUE)?;
        let mut roi_crop = crop_patch(frame, &rt);
        roi_crop.scale = 1.0;
        let roi_map = backbone_forward(&roi_crop, &self.model.spec, &self.model.backbone)?;
        forwards += 1;
        let roi_ms = ms(t_roi);

        let t_coarse = Instant::now();
        let coarse = coarse_localize(&self.model, &roi_map, &self.config)?;
        let coarse_ms = ms(t_coarse);

        let t_fine = Instant::now();
        let mut fine_set = None;
        let mut fine_candidates = 0;
        let (estimated, scale_mult, score, detected) = match &coarse.best {
            Some(c) => {
                let (set, n) = build_fine_set(&self.model, frame, &roi_map, &c.moved, &self.config)?;
                forwards += n;
                let fine = fine_localize(&self.model, &set, &c.moved, &self.config, &mut self.rng)?;
                fine_candidates = fine.candidates;
                fine_set = Some(set);
                (fine.box_, fine.scale, fine.score, true)
            }
            None => (self.current_box, 1.0, coarse.best_score, false),
        };
        let fine_ms = ms(t_fine);

        self.retained = Some(RetainedMaps {
            roi: ScaledMapSet::new(vec![roi_map])?,
            fine: fine_set,
        });
        self.current_box = estimated;
        self.current_scale *= scale_mult;

        let t_collect = Instant::now();
        let collected = self.collect_samples(&estimated, score)?;
        let collect_ms = ms(t_collect);

        let t_update = Instant::now();
        let (long_update, short_update) = self.maybe_update(score)?;
        let update_ms = ms(t_update);

        Ok(TrackResult {
            box_: estimated,
            score,
            diagnostics: FrameDiagnostics {
                frame_index: self.frame_index,
                backbone_forwards: forwards,
                detected,
                collected,
                long_update,
                short_update,
                coarse_survivors: coarse.survivors,
                best_window_score: coarse.best_score,
                fine_candidates,
                roi_ms,
                coarse_ms,
                fine_ms,
                collect_ms,
                update_ms,
                total_ms: ms(t_total),
            },
        })
    }

    /// Adds this frame's 30/30/100 training features — every one produced by
    /// interpolation from the retained maps — when the score clears the
    /// threshold. A tripped sampler cap skips collection for the frame
    /// without touching the banks.
    fn collect_samples(&mut self, estimated: &Box, score: f32) -> Result<bool> {
        if score <= self.config.score_threshold {
            return Ok(false);
        }
        let cfg = &self.config;
        let retained = self
            .retained
            .as_ref()
            .ok_or_else(|| Error::Input("sample collection before any tracked frame".into()))?;
        let pos_source = retained.fine.as_ref().unwrap_or(&retained.roi);
        let frame_size = self.frame_size;
        let frame = self.frame_index;

        let outcome = (|| -> Result<(Vec<Feature>, [Vec<Feature>; 5], Vec<Feature>)> {
            let pos_boxes = sample_gaussian_boxes(
                &mut self.rng,
                estimated,
                cfg.positive_trans_sigma,
                cfg.online_scale_sigma,
                cfg.frame_positive_count,
                "online positives",
                |b| iou(b, estimated) > cfg.positive_iou && pos_source.can_featurize(b, 3, 1.0),
            )?;
            let positives: Vec<Feature> = pos_boxes
                .iter()
                .map(|b| pos_source.featurize_box(b, 3, 1.0))
                .collect::<Result<_>>()?;

            let per_class = cfg.frame_loc_count / 5;
            let mut loc: [Vec<Feature>; 5] = Default::default();
            for class in LocClass::ALL {
                let boxes = sample_gaussian_boxes(
                    &mut self.rng,
                    estimated,
                    cfg.positive_trans_sigma,
                    cfg.online_scale_sigma,
                    per_class,
                    &format!("online {class:?} samples"),
                    |b| {
                        iou(b, estimated) > cfg.positive_iou
                            && localization_label(b, estimated, cfg.middle_threshold) == class
                            && pos_source.can_featurize(b, 3, 1.0)
                    },
                )?;
                loc[class.index()] = boxes
                    .iter()
                    .map(|b| pos_source.featurize_box(b, 3, 1.0))
                    .collect::<Result<_>>()?;
            }

            // Negatives ride on the scale-1 search map alone: they keep the
            // previous frame's object size (the map's reference), jittering
            // only in translation, which keeps them featurizable across the
            // whole search region.
            let (rw, rh) = retained.roi.reference_size();
            let (ecx, ecy) = estimated.center();
            let neg_mean = Box::from_center(ecx, ecy, rw, rh);
            let neg_boxes = sample_gaussian_boxes(
                &mut self.rng,
                &neg_mean,
                cfg.negative_trans_sigma,
                0.0,
                cfg.frame_negative_count,
                "online negatives",
                |b| {
                    iou(b, estimated) < cfg.negative_iou
                        && center_in_frame(b, frame_size)
                        && retained.roi.can_featurize(b, 3, 1.0)
                },
            )?;
            let negatives: Vec<Feature> = neg_boxes
                .iter()
                .map(|b| retained.roi.featurize_box(b, 3, 1.0))
                .collect::<Result<_>>()?;
            Ok((positives, loc, negatives))
        })();

        match outcome {
            Ok((positives, loc, negatives)) => {
                self.store.push_frame(frame, positives, loc, negatives);
                Ok(true)
            }
            Err(Error::Sampling { label, attempts }) => {
                log::warn!(
                    "frame {frame}: sampler cap tripped for {label} after {attempts} attempts; skipping collection"
                );
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }

    /// Long-term update on the interval, short-term on a sub-threshold
    /// score; when both fire the long-term one runs first.
    fn maybe_update(&mut self, score: f32) -> Result<(bool, bool)> {
        let (long, short) = update_triggers(self.frame_index, score, &self.config);
        if long {
            self.run_update(self.config.long_window)?;
        }
        if short {
            self.run_update(self.config.short_window)?;
        }
        Ok((long, short))
    }

    fn run_update(&mut self, positive_window: usize) -> Result<()> {
        let positives = self.store.positive_bank(positive_window);
        let negatives = self.store.negative_bank();
        if positives.is_empty() || negatives.is_empty() {
            log::warn!(
                "frame {}: update skipped (positive bank {}, negative bank {})",
                self.frame_index,
                positives.len(),
                negatives.len()
            );
            return Ok(());
        }
        train_object_head(
            &mut self.model.object_head,
            &positives,
            &negatives,
            &self.config.sgd(self.config.online_iterations),
            &self.config.object_policy(),
            &mut self.rng,
        )?;
        let loc_banks = self.store.loc_banks(positive_window);
        if loc_banks.iter().any(Vec::is_empty) {
            log::warn!(
                "frame {}: localization update skipped (a class bank is empty)",
                self.frame_index
            );
            return Ok(());
        }
        train_loc_head(
            &mut self.model.loc_head,
            &loc_banks,
            self.config.loc_minibatch / 5,
            &self.config.sgd(self.config.online_iterations),
            &mut self.rng,
        )?;
        Ok(())
    }

    pub fn retained_maps(&self) -> Option<&RetainedMaps> {
        self.retained.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{BackboneWeights, ConvBackboneSpec};
    use crate::heads::{FcLayer, HeadParams};

    fn fc(in_dim: usize, out_dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> FcLayer {
        assert_eq!(weights.len(), in_dim * out_dim);
        assert_eq!(bias.len(), out_dim);
        FcLayer {
            in_dim,
            out_dim,
            weights,
            bias,
        }
    }

    fn identity_fc(dim: usize) -> FcLayer {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        fc(dim, dim, w, vec![0.0; dim])
    }

    /// Object head reading only the window's center cell `u = f[4]` and
    /// emitting logit1 - logit0 = 50u - 25: probability ~1 when the center
    /// cell holds 1.0, ~0 when it holds 0.0.
    fn center_detector_head() -> HeadParams {
        let mut sel = vec![0.0; 9];
        sel[4] = 1.0;
        HeadParams {
            hidden1: fc(9, 1, sel, vec![0.0]),
            hidden2: identity_fc(1),
            logits: fc(1, 2, vec![0.0, 50.0], vec![0.0, -25.0]),
        }
    }

    /// Localization head that always answers with the given class.
    fn constant_loc_head(class: LocClass) -> HeadParams {
        let mut bias = vec![0.0; 5];
        bias[class.index()] = 5.0;
        HeadParams {
            hidden1: fc(9, 1, vec![0.0; 9], vec![0.0]),
            hidden2: identity_fc(1),
            logits: fc(1, 5, vec![0.0; 5], bias),
        }
    }

    fn stub_model(object_head: HeadParams, loc_head: HeadParams) -> NetworkModel {
        let spec = ConvBackboneSpec::reference([1, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let backbone = BackboneWeights::random(&spec, &mut rng);
        NetworkModel {
            spec,
            backbone,
            object_head,
            loc_head,
        }
    }

    fn roi_map_with_peak(prev: &Box, peak: Option<(usize, usize)>) -> FeatureMap {
        let t = roi_crop_transform(prev, 1.0, ROI_SIDE, DEFAULT_PAD_VALUE).unwrap();
        let mut values = vec![0.0f32; 15 * 15];
        if let Some((row, col)) = peak {
            values[row * 15 + col] = 1.0;
        }
        FeatureMap::new(15, 15, 1, values, 1.0, Some(t)).unwrap()
    }

    #[test]
    fn coarse_finds_single_peak_window() {
        let prev = Box::from_center(100.0, 80.0, 40.0, 30.0);
        // Peak at map cell (row 6, col 9); windows center on cell
        // (7 + ky, 7 + kx), so only the window at kx=2, ky=-1 holds the
        // peak in its center cell.
        let map = roi_map_with_peak(&prev, Some((6, 9)));
        let model = stub_model(center_detector_head(), constant_loc_head(LocClass::Middle));
        let cfg = TrackerConfig::default();
        let out = coarse_localize(&model, &map, &cfg).unwrap();
        let best = out.best.expect("peak window must be detected");
        assert_eq!(out.survivors, 1);
        assert_eq!(best.index, (-1i32 + 6) as usize * 13 + (2 + 6) as usize);
        assert_eq!(best.class, LocClass::Middle);
        assert!(out.best_score > 0.99);
        let t = map.transform.unwrap();
        let expected = grid_to_box(2, -1, 0.0, 0.0, &t);
        assert_eq!(best.moved, expected);
        // Middle keeps the grid center: half the object width right of the
        // previous center per grid step.
        let (cx, cy) = best.moved.center();
        assert!((cx - (100.0 + 2.0 * 16.0 * 40.0 / 75.0)).abs() < 1e-3);
        assert!((cy - (80.0 - 16.0 * 30.0 / 75.0)).abs() < 1e-3);
        assert!((best.moved.w - 40.0).abs() < 1e-3);
        assert!((best.moved.h - 30.0).abs() < 1e-3);
    }

    #[test]
    fn coarse_applies_class_move() {
        let prev = Box::from_center(100.0, 80.0, 40.0, 30.0);
        let map = roi_map_with_peak(&prev, Some((6, 9)));
        let model = stub_model(center_detector_head(), constant_loc_head(LocClass::Right));
        let cfg = TrackerConfig::default();
        let out = coarse_localize(&model, &map, &cfg).unwrap();
        let best = out.best.unwrap();
        assert_eq!(best.class, LocClass::Right);
        let t = map.transform.unwrap();
        // The move step is half a cell: 8/75 of the object size.
        assert_eq!(best.moved, grid_to_box(2, -1, 0.5, 0.0, &t));
        let middle = grid_to_box(2, -1, 0.0, 0.0, &t);
        let dx = best.moved.center().0 - middle.center().0;
        assert!((dx - 8.0 / 75.0 * 40.0).abs() < 1e-3);
    }

    #[test]
    fn coarse_reports_no_detection_on_flat_map() {
        let prev = Box::from_center(100.0, 80.0, 40.0, 30.0);
        let map = roi_map_with_peak(&prev, None);
        let model = stub_model(center_detector_head(), constant_loc_head(LocClass::Middle));
        let cfg = TrackerConfig::default();
        let out = coarse_localize(&model, &map, &cfg).unwrap();
        assert!(out.best.is_none());
        assert_eq!(out.survivors, 0);
        // Every window scores sigmoid(-25); the best score is still reported.
        assert!(out.best_score > 0.0 && out.best_score < 1e-9);
    }

    fn candidate(index: usize, score: f32, b: Box) -> CoarseCandidate {
        CoarseCandidate {
            index,
            score,
            class: LocClass::Middle,
            moved: b,
        }
    }

    #[test]
    fn overlap_selection_prefers_the_cluster() {
        // Three near-identical boxes and one off on its own: any cluster
        // member out-sums the outlier.
        let cands = vec![
            candidate(3, 0.8, Box::new(10.0, 10.0, 20.0, 20.0)),
            candidate(7, 0.9, Box::new(11.0, 10.0, 20.0, 20.0)),
            candidate(9, 0.7, Box::new(10.0, 11.0, 20.0, 20.0)),
            candidate(20, 0.99, Box::new(200.0, 200.0, 20.0, 20.0)),
        ];
        let sel = select_by_overlap(&cands).unwrap();
        assert!(cands[sel].index != 20);
    }

    #[test]
    fn overlap_selection_is_permutation_invariant() {
        let base = vec![
            candidate(0, 0.6, Box::new(10.0, 10.0, 20.0, 20.0)),
            candidate(1, 0.9, Box::new(12.0, 11.0, 20.0, 20.0)),
            candidate(2, 0.7, Box::new(9.0, 12.0, 21.0, 19.0)),
            candidate(3, 0.8, Box::new(40.0, 40.0, 20.0, 20.0)),
            candidate(4, 0.5, Box::new(41.0, 39.0, 20.0, 20.0)),
            candidate(5, 0.95, Box::new(10.5, 10.5, 20.0, 20.0)),
        ];
        let reference = base[select_by_overlap(&base).unwrap()].index;
        let perms: [[usize; 6]; 4] = [
            [5, 4, 3, 2, 1, 0],
            [2, 0, 5, 1, 4, 3],
            [3, 5, 1, 0, 2, 4],
            [1, 2, 3, 4, 5, 0],
        ];
        for p in perms {
            let shuffled: Vec<CoarseCandidate> = p.iter().map(|&i| base[i].clone()).collect();
            let got = shuffled[select_by_overlap(&shuffled).unwrap()].index;
            assert_eq!(got, reference, "selection changed under permutation {p:?}");
        }
    }

    #[test]
    fn overlap_selection_ties_break_by_score_then_index() {
        // Two disjoint boxes: both sum to zero overlap.
        let a = Box::new(0.0, 0.0, 10.0, 10.0);
        let b = Box::new(100.0, 100.0, 10.0, 10.0);
        let cands = vec![candidate(4, 0.6, a), candidate(2, 0.8, b)];
        assert_eq!(cands[select_by_overlap(&cands).unwrap()].index, 2);
        let cands = vec![candidate(4, 0.8, a), candidate(2, 0.8, b)];
        assert_eq!(cands[select_by_overlap(&cands).unwrap()].index, 2);
        let cands = vec![candidate(1, 0.8, a), candidate(2, 0.8, b)];
        assert_eq!(cands[select_by_overlap(&cands).unwrap()].index, 1);
    }

    /// Three identical 5x5 maps at the fine scales whose center value reads
    /// 2 + dx/sigma - 0.1*|dy|/sigma for a candidate offset (dx, dy).
    fn fine_ramp_set(coarse: &Box, cfg: &TrackerConfig) -> ScaledMapSet {
        let mut maps = Vec::new();
        for s in [1.0 / cfg.fine_scale_step, 1.0, cfg.fine_scale_step] {
            let t = roi_crop_transform(coarse, s, INIT_SIDE, DEFAULT_PAD_VALUE).unwrap();
            let mut values = vec![0.0f32; 25];
            for r in 0..5 {
                for c in 0..5 {
                    values[r * 5 + c] = c as f32 - 0.1 * (r as f32 - 2.0).abs();
                }
            }
            let mut m = FeatureMap::new(5, 5, 1, values, s, Some(t)).unwrap();
            m.scale = s;
            maps.push(m);
        }
        ScaledMapSet::new(maps).unwrap()
    }

    /// Head scoring sigmoid(-10 * |f[4] - 2.2|): the peak sits exactly at
    /// lattice offset dx = +0.2, dy = 0 for every admissible scale draw.
    fn kink_head() -> HeadParams {
        let mut w1 = vec![0.0; 2 * 9];
        w1[4] = 1.0; // u1 = relu(f4 - 2.2)
        w1[9 + 4] = -1.0; // u2 = relu(2.2 - f4)
        HeadParams {
            hidden1: fc(9, 2, w1, vec![-2.2, 2.2]),
            hidden2: identity_fc(2),
            logits: fc(2, 2, vec![0.0, 0.0, -10.0, -10.0], vec![0.0, 0.0]),
        }
    }

    #[test]
    fn fine_peak_lands_on_fractional_lattice_offset() {
        let cfg = TrackerConfig::default();
        let coarse = Box::from_center(100.0, 80.0, 40.0, 30.0);
        let set = fine_ramp_set(&coarse, &cfg);
        let model = stub_model(kink_head(), constant_loc_head(LocClass::Middle));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = fine_localize(&model, &set, &coarse, &cfg, &mut rng).unwrap();
        assert_eq!(out.candidates, 100);
        for &s in &out.scale_draws {
            assert!(s >= 1.0 / cfg.fine_scale_step && s <= cfg.fine_scale_step);
        }
        // All top-3 candidates sit at (dx, dy) = (0.2, 0): the mean center
        // is exactly the coarse center shifted 0.2 cells right.
        let pitch_x = 16.0 / 75.0 * coarse.w;
        let (cx, cy) = out.box_.center();
        assert!((cx - (100.0 + 0.2 * pitch_x)).abs() < 1e-3, "cx {cx}");
        assert!((cy - 80.0).abs() < 1e-3, "cy {cy}");
        assert!(out.scale >= 1.0 / cfg.fine_scale_step && out.scale <= cfg.fine_scale_step);
        assert!((out.box_.w - coarse.w * out.scale).abs() < 1e-3);
        assert!((out.box_.h - coarse.h * out.scale).abs() < 1e-3);
    }

    #[test]
    fn fine_ties_resolve_by_enumeration_order() {
        let cfg = TrackerConfig::default();
        let coarse = Box::from_center(100.0, 80.0, 40.0, 30.0);
        let set = fine_ramp_set(&coarse, &cfg);
        // Zero head: every candidate scores exactly 0.5, so the top 3 are
        // the first three enumerated: dy = dx = -0.4, scale draws 0..3.
        let zero_head = HeadParams {
            hidden1: fc(9, 1, vec![0.0; 9], vec![0.0]),
            hidden2: identity_fc(1),
            logits: fc(1, 2, vec![0.0, 0.0], vec![0.0, 0.0]),
        };
        let model = stub_model(zero_head, constant_loc_head(LocClass::Middle));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = fine_localize(&model, &set, &coarse, &cfg, &mut rng).unwrap();
        assert_eq!(out.candidates, 100);
        assert!((out.score - 0.5).abs() < 1e-6);
        let pitch_x = 16.0 / 75.0 * coarse.w;
        let pitch_y = 16.0 / 75.0 * coarse.h;
        let (cx, cy) = out.box_.center();
        assert!((cx - (100.0 - 0.4 * pitch_x)).abs() < 1e-3);
        assert!((cy - (80.0 - 0.4 * pitch_y)).abs() < 1e-3);
        let expected_scale: f64 =
            out.scale_draws[..3].iter().map(|&s| s as f64).sum::<f64>() / 3.0;
        assert!((out.scale as f64 - expected_scale).abs() < 1e-6);
    }

    #[test]
    fn update_trigger_table() {
        let cfg = TrackerConfig::default();
        let cases = [
            (1, 0.9, (false, false)),
            (7, 0.3, (false, true)),
            (10, 0.9, (true, false)),
            (10, 0.3, (true, true)),
            (20, 0.5, (true, false)), // the gate is strict
            (20, 0.4999, (true, true)),
            (25, 0.5001, (false, false)),
            (30, 0.0, (true, true)),
        ];
        for (frame, score, expected) in cases {
            assert_eq!(
                update_triggers(frame, score, &cfg),
                expected,
                "frame {frame} score {score}"
            );
        }
        for frame in 1..=40usize {
            let (long, _) = update_triggers(frame, 0.9, &cfg);
            assert_eq!(long, frame % 10 == 0);
        }
    }

    fn feature_group(n: usize, tag: f32) -> Vec<Feature> {
        (0..n).map(|i| vec![tag, i as f32]).collect()
    }

    #[test]
    fn store_evicts_by_frame_windows() {
        let cfg = TrackerConfig::default();
        let mut store = SampleStore::new(&cfg);
        for frame in 1..=25 {
            let loc: [Vec<Feature>; 5] = std::array::from_fn(|c| feature_group(6, c as f32));
            store.push_frame(frame, feature_group(30, frame as f32), loc, feature_group(100, 0.0));
        }
        let (p, l, n) = store.counts();
        assert_eq!(p, 25 * 30);
        assert_eq!(l, 25 * 30);
        // Negatives keep only the last 20 frames.
        assert_eq!(n, 20 * 100);
        assert_eq!(store.negative_frames(), (6..=25).collect::<Vec<_>>());
        assert_eq!(store.positive_frames().len(), 25);

        // Long-window positive eviction kicks in past 100 frames.
        for frame in 26..=130 {
            let loc: [Vec<Feature>; 5] = std::array::from_fn(|c| feature_group(6, c as f32));
            store.push_frame(frame, feature_group(30, frame as f32), loc, feature_group(100, 0.0));
        }
        let (p, l, n) = store.counts();
        assert_eq!(p, 100 * 30);
        assert_eq!(l, 100 * 30);
        assert_eq!(n, 20 * 100);
        assert_eq!(store.positive_frames().first().copied(), Some(31));

        // Short-window banks pull only the trailing frames.
        assert_eq!(store.positive_bank(20).len(), 20 * 30);
        assert_eq!(store.positive_bank(200).len(), 100 * 30);
        let banks = store.loc_banks(1);
        for b in &banks {
            assert_eq!(b.len(), 6);
        }
        // The short positive bank is the most recent frames: tags run
        // 111..=130.
        let bank = store.positive_bank(20);
        assert_eq!(bank[0][0], 111.0);
        assert_eq!(bank.last().unwrap()[0], 130.0);
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = TrackerConfig::default();
        cfg.fine_lattice = vec![-0.2, 0.0, 0.2];
        assert!(cfg.validate().is_err(), "9 lattice points x 4 draws != 100");
        let mut cfg = TrackerConfig::default();
        cfg.loc_minibatch = 64;
        assert!(cfg.validate().is_err());
        let mut cfg = TrackerConfig::default();
        cfg.mining_keep = 128;
        assert!(cfg.validate().is_err());
        let mut cfg = TrackerConfig::default();
        cfg.score_threshold = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrackerConfig::default();
        cfg.initial_scale_step = 1.0;
        assert!(cfg.validate().is_err());
        assert!(TrackerConfig::default().validate().is_ok());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = TrackerConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: TrackerConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        // Partial configs take defaults for the rest.
        let partial: TrackerConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.long_term_interval, 10);
    }

    fn quick_config() -> TrackerConfig {
        TrackerConfig {
            init_positive_count: 60,
            init_loc_count: 50,
            init_negative_count: 150,
            initial_iterations: 5,
            online_iterations: 2,
            seed: 42,
            ..TrackerConfig::default()
        }
    }

    fn square_frame(w: usize, h: usize, cx: f32, cy: f32) -> Image {
        let mut px = vec![40u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f32 - cx).abs();
                let dy = (y as f32 - cy).abs();
                if dx < 15.0 && dy < 12.0 {
                    px[y * w + x] = 220;
                }
            }
        }
        Image::new(w, h, 1, px).unwrap()
    }

    #[test]
    fn tracker_runs_frames_within_forward_budget() {
        let frame0 = square_frame(200, 150, 100.0, 75.0);
        let init = Box::from_center(100.0, 75.0, 30.0, 24.0);
        let mut state = TrackerState::init(&frame0, &init, quick_config()).unwrap();
        assert_eq!(state.frame_index, 0);
        let retained = state.retained_maps().unwrap();
        assert_eq!(retained.roi.maps().len(), 1);
        assert_eq!(retained.fine.as_ref().unwrap().maps().len(), 3);
        let (p, l, n) = state.store.counts();
        assert_eq!(p, 60);
        assert_eq!(l, 50);
        assert!(n <= 150);

        for step in 1..=3usize {
            let frame = square_frame(200, 150, 100.0 + step as f32, 75.0);
            let result = state.track(&frame).unwrap();
            assert_eq!(result.diagnostics.frame_index, step);
            assert!(
                result.diagnostics.backbone_forwards <= 3,
                "forward budget exceeded: {}",
                result.diagnostics.backbone_forwards
            );
            assert!(result.box_.is_valid());
            assert_eq!(
                result.diagnostics.long_update,
                step % 10 == 0,
                "long-term schedule"
            );
        }
        assert_eq!(state.frame_index, 3);
    }

    #[test]
    fn tracker_rejects_mismatched_frame_size() {
        let frame0 = square_frame(200, 150, 100.0, 75.0);
        let init = Box::from_center(100.0, 75.0, 30.0, 24.0);
        let mut state = TrackerState::init(&frame0, &init, quick_config()).unwrap();
        let odd = square_frame(190, 150, 100.0, 75.0);
        assert!(matches!(state.track(&odd), Err(Error::Input(_))));
    }

    #[test]
    fn init_rejects_degenerate_box() {
        let frame = square_frame(200, 150, 100.0, 75.0);
        let outside = Box::new(500.0, 500.0, 30.0, 30.0);
        assert!(TrackerState::init(&frame, &outside, quick_config()).is_err());
        let flat = Box::new(10.0, 10.0, 0.0, 20.0);
        assert!(TrackerState::init(&frame, &flat, quick_config()).is_err());
    }

    #[test]
    fn init_is_deterministic_for_a_seed() {
        let frame = square_frame(200, 150, 100.0, 75.0);
        let init = Box::from_center(100.0, 75.0, 30.0, 24.0);
        let a = TrackerState::init(&frame, &init, quick_config()).unwrap();
        let b = TrackerState::init(&frame, &init, quick_config()).unwrap();
        assert_eq!(a.model.object_head.logits.weights, b.model.object_head.logits.weights);
        assert_eq!(a.model.loc_head.hidden1.weights, b.model.loc_head.hidden1.weights);
        let next = square_frame(200, 150, 101.0, 75.0);
        let mut a = a;
        let mut b = b;
        let ra = a.track(&next).unwrap();
        let rb = b.track(&next).unwrap();
        assert_eq!(ra.box_, rb.box_);
        assert_eq!(ra.score, rb.score);
    }
}
