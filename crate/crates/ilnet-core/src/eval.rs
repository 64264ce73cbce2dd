//! Sequence ingestion, one-pass-evaluation metrics, and result file output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center_error, iou, Box};
use crate::image::Image;
use crate::tracker::FrameDiagnostics;

/// An ordered frame sequence with optional per-frame ground truth.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Image>,
    pub ground_truth: Option<Vec<Box>>,
}

impl Sequence {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::Input(format!(
                "sequence '{}' needs at least 2 frames, has {}",
                self.name,
                self.frames.len()
            )));
        }
        let (w, h) = (self.frames[0].width, self.frames[0].height);
        for (i, f) in self.frames.iter().enumerate() {
            if (f.width, f.height) != (w, h) {
                return Err(Error::Input(format!(
                    "sequence '{}' frame {} is {}x{}, frame 0 is {}x{}",
                    self.name, i, f.width, f.height, w, h
                )));
            }
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != self.frames.len() {
                return Err(Error::Input(format!(
                    "sequence '{}' has {} frames but {} annotations",
                    self.name,
                    self.frames.len(),
                    gt.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Numeric value of a frame file stem, for sorting zero-padded names.
fn frame_number(path: &Path) -> Option<u64> {
    path.file_stem()?.to_str()?.parse().ok()
}

const FRAME_EXTENSIONS: &[&str] = &["pgm", "ppm", "pnm", "png"];

/// Parses one annotation line: four comma-, tab- or space-separated numbers,
/// 1-based corner origin.
fn parse_annotation(line: &str, path: &Path, line_no: usize) -> Result<Box> {
    let fields: Vec<&str> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if fields.len() != 4 {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: Some(line_no),
            message: format!("expected 4 fields, found {}", fields.len()),
        });
    }
    let mut v = [0.0f32; 4];
    for (i, f) in fields.iter().enumerate() {
        v[i] = f.parse().map_err(|_| Error::Ingest {
            path: path.to_path_buf(),
            line: Some(line_no),
            message: format!("unparsable number '{f}'"),
        })?;
    }
    // Annotations are 1-based; the engine works 0-based.
    Ok(Box::new(v[0] - 1.0, v[1] - 1.0, v[2], v[3]))
}

/// Loads `<dir>/img/NNNN.pgm...` plus `<dir>/groundtruth_rect.txt`.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let img_dir = dir.join("img");
    let entries = fs::read_dir(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&img_dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !ext.as_deref().is_some_and(|e| FRAME_EXTENSIONS.contains(&e)) {
            continue;
        }
        let Some(n) = frame_number(&path) else {
            return Err(Error::Ingest {
                path: path.clone(),
                line: None,
                message: "frame file name is not numeric".into(),
            });
        };
        frames.push((n, path));
    }
    if frames.is_empty() {
        return Err(Error::Ingest {
            path: img_dir,
            line: None,
            message: "no frame images found".into(),
        });
    }
    frames.sort_by_key(|(n, _)| *n);

    let gt_path = dir.join("groundtruth_rect.txt");
    let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        boxes.push(parse_annotation(line, &gt_path, i + 1)?);
    }
    if boxes.len() != frames.len() {
        return Err(Error::Ingest {
            path: gt_path,
            line: None,
            message: format!(
                "{} annotation lines for {} frames",
                boxes.len(),
                frames.len()
            ),
        });
    }

    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("sequence")
        .to_string();
    let mut images = Vec::with_capacity(frames.len());
    for (_, path) in &frames {
        images.push(Image::load(path)?);
    }
    let seq = Sequence {
        name,
        frames: images,
        ground_truth: Some(boxes),
    };
    seq.validate()?;
    Ok(seq)
}

pub const PRECISION_THRESHOLDS: usize = 51;
pub const SUCCESS_THRESHOLDS: usize = 21;

/// Success thresholds are i/20 so the 0.5 sample is exact in f32.
pub fn success_threshold(i: usize) -> f32 {
    i as f32 / 20.0
}

/// Whether an overlap value clears success sample `i`. The rule is strictly
/// "larger than the threshold", except at the top threshold 1.0 where strict
/// comparison would make the sample identically zero; there perfect overlap
/// counts, so a perfect trajectory scores AUC 1.
pub fn success_passes(overlap: f32, i: usize) -> bool {
    let t = success_threshold(i);
    if i + 1 == SUCCESS_THRESHOLDS {
        overlap >= t
    } else {
        overlap > t
    }
}

/// One-pass-evaluation summary: curves plus their headline scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeResult {
    pub frames: usize,
    /// Fraction of frames with center error <= t, t = 0..=50 px.
    pub precision: Vec<f32>,
    /// Fraction of frames clearing success sample i (see `success_passes`),
    /// i = 0..=20.
    pub success: Vec<f32>,
    pub precision_at_20: f32,
    /// Mean of the 21 success samples.
    pub auc: f32,
    pub mean_iou: f32,
    pub mean_center_error: f32,
}

pub fn ope_evaluate(estimates: &[Box], truth: &[Box]) -> Result<OpeResult> {
    if estimates.len() != truth.len() {
        return Err(Error::Input(format!(
            "{} estimates vs {} ground-truth boxes",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::Input("cannot evaluate an empty trajectory".into()));
    }
    let n = estimates.len();
    let errors: Vec<f32> = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| center_error(e, t))
        .collect();
    let overlaps: Vec<f32> = estimates.iter().zip(truth).map(|(e, t)| iou(e, t)).collect();

    let precision: Vec<f32> = (0..PRECISION_THRESHOLDS)
        .map(|t| errors.iter().filter(|&&e| e <= t as f32).count() as f32 / n as f32)
        .collect();
    let success: Vec<f32> = (0..SUCCESS_THRESHOLDS)
        .map(|i| overlaps.iter().filter(|&&o| success_passes(o, i)).count() as f32 / n as f32)
        .collect();
    let auc = (success.iter().map(|&v| v as f64).sum::<f64>() / success.len() as f64) as f32;
    Ok(OpeResult {
        frames: n,
        precision_at_20: precision[20],
        auc,
        mean_iou: (overlaps.iter().map(|&v| v as f64).sum::<f64>() / n as f64) as f32,
        mean_center_error: (errors.iter().map(|&v| v as f64).sum::<f64>() / n as f64) as f32,
        precision,
        success,
    })
}

/// One trajectory entry as written to boxes.csv.
#[derive(Debug, Clone, Copy)]
pub struct TrackedBox {
    /// 1-based frame number matching the image file names.
    pub frame: usize,
    pub box_: Box,
    pub score: f32,
}

/// Per-stage wall-clock means over the tracked frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingSummary {
    pub frames: usize,
    pub roi_ms: f64,
    pub coarse_ms: f64,
    pub fine_ms: f64,
    pub collect_ms: f64,
    pub update_ms: f64,
    pub total_ms: f64,
    pub mean_backbone_forwards: f64,
    pub max_backbone_forwards: usize,
}

impl TimingSummary {
    pub fn from_diagnostics(diags: &[FrameDiagnostics]) -> TimingSummary {
        let n = diags.len();
        let inv = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        let mean = |f: fn(&FrameDiagnostics) -> f64| diags.iter().map(f).sum::<f64>() * inv;
        TimingSummary {
            frames: n,
            roi_ms: mean(|d| d.roi_ms),
            coarse_ms: mean(|d| d.coarse_ms),
            fine_ms: mean(|d| d.fine_ms),
            collect_ms: mean(|d| d.collect_ms),
            update_ms: mean(|d| d.update_ms),
            total_ms: mean(|d| d.total_ms),
            mean_backbone_forwards: mean(|d| d.backbone_forwards as f64),
            max_backbone_forwards: diags.iter().map(|d| d.backbone_forwards).max().unwrap_or(0),
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn boxes_csv(trajectory: &[TrackedBox]) -> String {
    let mut out = String::from("frame,x,y,w,h,score\n");
    for t in trajectory {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.frame, t.box_.x, t.box_.y, t.box_.w, t.box_.h, t.score
        ));
    }
    out
}

pub fn curves_csv(metrics: &OpeResult) -> String {
    let mut out = String::from("plot,threshold,value\n");
    for (t, v) in metrics.precision.iter().enumerate() {
        out.push_str(&format!("precision,{t},{v}\n"));
    }
    for (i, v) in metrics.success.iter().enumerate() {
        out.push_str(&format!("success,{},{v}\n", success_threshold(i)));
    }
    out
}

/// Writes boxes.csv, timings.json, and (when metrics are present)
/// metrics.json and curves.csv into `out_dir`.
pub fn write_results(
    out_dir: &Path,
    trajectory: &[TrackedBox],
    metrics: Option<&OpeResult>,
    diagnostics: &[FrameDiagnostics],
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_text(&out_dir.join("boxes.csv"), &boxes_csv(trajectory))?;
    let timings = TimingSummary::from_diagnostics(diagnostics);
    let timing_json = serde_json::to_string_pretty(&timings)
        .map_err(|e| Error::Input(format!("timing serialization failed: {e}")))?;
    write_text(&out_dir.join("timings.json"), &(timing_json + "\n"))?;
    if let Some(m) = metrics {
        let json = serde_json::to_string_pretty(m)
            .map_err(|e| Error::Input(format!("metric serialization failed: {e}")))?;
        write_text(&out_dir.join("metrics.json"), &(json + "\n"))?;
        write_text(&out_dir.join("curves.csv"), &curves_csv(m))?;
    }
    Ok(())
}
