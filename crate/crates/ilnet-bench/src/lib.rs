//! Seeded fixtures shared by the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ilnet_core::backbone::BackboneProfile;
use ilnet_core::synth::noise_image;
use ilnet_core::{Box, Image, NetworkModel};

pub const SCENE_SEED: u64 = 0xB0_0E;

/// A deterministic desk-scale model, a blurred-noise scene, and a target box
/// well inside it.
pub fn fixture() -> (NetworkModel, Image, Box) {
    let mut rng = ChaCha8Rng::seed_from_u64(SCENE_SEED);
    let model = NetworkModel::random(BackboneProfile::Desk, &mut rng);
    let image = noise_image(320, 240, SCENE_SEED ^ 0xB1A5, 2.0);
    let target = Box::new(140.0, 104.0, 40.0, 32.0);
    (model, image, target)
}
