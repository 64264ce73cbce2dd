//! Tracking-by-detection engine built around one shared convolutional
//! forward per frame: candidate windows and training samples are produced by
//! window extraction and bilinear/linear interpolation from retained feature
//! maps instead of per-patch re-forwarding.

pub mod backbone;
pub mod error;
pub mod eval;
pub mod feature_map;
pub mod geometry;
pub mod heads;
pub mod image;
pub mod interp;
pub mod model;
pub mod synth;
pub mod tracker;
pub mod verify;

pub use backbone::{
    backbone_forward, count_flops, BackboneProfile, BackboneWeights, ConvBackboneSpec,
    FlopBreakdown, INIT_SIDE, PATCH_SIDE, ROI_SIDE,
};
pub use error::{Error, Result};
pub use eval::{load_sequence, ope_evaluate, write_results, OpeResult, Sequence, TrackedBox};
pub use feature_map::FeatureMap;
pub use geometry::{iou, Box, CropTransform, LocClass};
pub use image::Image;
pub use interp::ScaledMapSet;
pub use model::{load_weights_file, save_weights_file, NetworkModel};
pub use synth::{synth_sequence, write_sequence, SynthSpec};
pub use tracker::{FrameDiagnostics, TrackResult, TrackerConfig, TrackerState};
pub use verify::{run_suite, SuiteOptions, VerifyReport};
