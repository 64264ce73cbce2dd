use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ilnet_bench::fixture;
use ilnet_core::backbone::{PATCH_SIDE, ROI_SIDE};
use ilnet_core::geometry::{crop_patch, grid_to_box, roi_crop_transform, DEFAULT_PAD_VALUE};
use ilnet_core::heads::positive_probability;
use ilnet_core::interp::{candidate_offsets, sample_window_bilinear, window_at_offset};
use ilnet_core::backbone_forward;

fn bench_backbone(c: &mut Criterion) {
    let (model, image, target) = fixture();
    let mut group = c.benchmark_group("backbone-forward");
    for side in [PATCH_SIDE, 139, ROI_SIDE] {
        let t = roi_crop_transform(&target, 1.0, side, DEFAULT_PAD_VALUE).unwrap();
        let crop = crop_patch(&image, &t);
        group.bench_function(format!("{side}px"), |b| {
            b.iter(|| backbone_forward(black_box(&crop), &model.spec, &model.backbone).unwrap())
        });
    }
    group.finish();
}

/// Scoring all 169 coarse candidates: one shared search-region forward plus
/// window extraction, against re-cropping and re-forwarding every candidate.
fn bench_candidate_scoring(c: &mut Criterion) {
    let (model, image, target) = fixture();
    let rt = roi_crop_transform(&target, 1.0, ROI_SIDE, DEFAULT_PAD_VALUE).unwrap();
    let offsets = candidate_offsets(15, 3).unwrap();

    let mut group = c.benchmark_group("candidate-scoring");
    group.sample_size(10);
    group.bench_function("interpolated", |b| {
        b.iter(|| {
            let crop = crop_patch(&image, &rt);
            let map = backbone_forward(&crop, &model.spec, &model.backbone).unwrap();
            let mut sum = 0.0f32;
            for &off in &offsets {
                let w = window_at_offset(&map, off, 3).unwrap();
                sum += positive_probability(&model.object_head, &w).unwrap();
            }
            black_box(sum)
        })
    });
    group.bench_function("brute-force", |b| {
        b.iter(|| {
            let mut sum = 0.0f32;
            for &off in &offsets {
                let candidate = grid_to_box(off.kx, off.ky, 0.0, 0.0, &rt);
                let pt = roi_crop_transform(&candidate, 1.0, PATCH_SIDE, DEFAULT_PAD_VALUE).unwrap();
                let map = backbone_forward(&crop_patch(&image, &pt), &model.spec, &model.backbone).unwrap();
                sum += positive_probability(&model.object_head, map.values()).unwrap();
            }
            black_box(sum)
        })
    });
    group.finish();
}

/// Pure sampling cost on a retained map, integer windows vs bilinear ones.
fn bench_feature_sampling(c: &mut Criterion) {
    let (model, image, target) = fixture();
    let rt = roi_crop_transform(&target, 1.0, ROI_SIDE, DEFAULT_PAD_VALUE).unwrap();
    let map = backbone_forward(&crop_patch(&image, &rt), &model.spec, &model.backbone).unwrap();
    let offsets = candidate_offsets(15, 3).unwrap();

    let mut group = c.benchmark_group("feature-sampling");
    group.bench_function("integer-169", |b| {
        b.iter(|| {
            let mut sum = 0.0f32;
            for &off in &offsets {
                sum += window_at_offset(black_box(&map), off, 3).unwrap()[0];
            }
            black_box(sum)
        })
    });
    group.bench_function("bilinear-169", |b| {
        b.iter(|| {
            let mut sum = 0.0f32;
            // Shrunk toward the interior so every fractional window stays
            // inside the 15x15 map.
            for &off in &offsets {
                let row = 7.0 + 0.9 * off.ky as f32 + 0.3;
                let col = 7.0 + 0.9 * off.kx as f32 - 0.3;
                sum += sample_window_bilinear(black_box(&map), row, col, 3).unwrap()[0];
            }
            black_box(sum)
        })
    });
    group.finish();
}

criterion_group!(benches, bench_backbone, bench_candidate_scoring, bench_feature_sampling);
criterion_main!(benches);
