//! Scenes with exact intrinsic ground truth, plus the compositing pipeline
//! for captured plates.
//!
//! On disk a dataset is `<root>/manifest.json` and one directory per scene
//! holding `P, A, F, R, S_A, S_F, depth, normals` as PFM files.

mod composite;
mod manifest;
mod render;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use composite::{chroma_key, composite_pair, normalize_brightness, KeyThresholds};
pub use manifest::{
    assign_splits, build_manifest, Manifest, ManifestRecord, Source, SplitRatios, COMPONENTS, MANIFEST_FILE,
    MANIFEST_VERSION,
};
pub use render::{render_synthetic, SceneConfig};

use crate::error::Result;
use crate::formation::IntrinsicComponents;
use crate::imgcore::LinearImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One flash/no-flash sample with its intrinsic components and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub id: String,
    /// Flash photograph `P`.
    pub photo: LinearImage,
    /// Ambient illumination `A`.
    pub ambient_image: LinearImage,
    /// Flash illumination `F`.
    pub flash_image: LinearImage,
    pub components: IntrinsicComponents,
    /// Camera-space z depth.
    pub depth: LinearImage,
    /// Unit surface normals.
    pub normals: LinearImage,
    pub split: Split,
}

/// Seed of scene `index` in a dataset seeded with `seed` (SplitMix64 mixing).
pub fn scene_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders `count` scenes (ids `s0000`, `s0001`, ...) and writes them with a manifest.
pub fn synthesize(
    root: impl AsRef<Path>,
    count: usize,
    config: &SceneConfig,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Manifest> {
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = render_synthetic(scene_seed(seed, i as u64), config)?;
            r.id = format!("s{i:04}");
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    build_manifest(&records, ratios, seed, root)
}
