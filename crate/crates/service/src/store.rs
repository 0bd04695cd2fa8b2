use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flashlab::dataset::{Manifest, ManifestRecord, MANIFEST_FILE};
use flashlab::formation::{split_illuminations, AmbientLight, DecompositionResult, ShadingMap};
use serde::{Deserialize, Serialize};

/// Per-scene subdirectory that may hold a saved [`DecompositionResult`].
pub const DECOMPOSITION_DIR: &str = "decomposition";

/// Components that can be fetched through the API.
pub const SERVED_COMPONENTS: [&str; 6] = ["P", "A", "F", "R", "S_A", "S_F"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub kelvin: Option<f64>,
    pub has_decomposition: bool,
}

#[derive(Debug)]
struct Scene {
    summary: SceneSummary,
    record: ManifestRecord,
    decomposition: Option<DecompositionResult>,
}

/// Scenes of one dataset root, loaded once and then read-only.
#[derive(Debug)]
pub struct SceneStore {
    root: PathBuf,
    scenes: BTreeMap<String, Scene>,
}

/// A saved decomposition if the scene has one, otherwise the split of `P`
/// by the recorded shadings and temperature.
fn find_decomposition(root: &Path, rec: &ManifestRecord) -> flashlab::Result<DecompositionResult> {
    let saved = root.join(&rec.id).join(DECOMPOSITION_DIR);
    if saved.join("meta.json").exists() {
        return DecompositionResult::load_dir(saved);
    }
    let kelvin = rec
        .kelvin
        .ok_or_else(|| flashlab::Error::Config(format!("scene {} has no temperature", rec.id)))?;
    let photo = rec.read(root, "P")?;
    let s_a = ShadingMap::new(rec.read(root, "S_A")?)?;
    let s_f = ShadingMap::new(rec.read(root, "S_F")?)?;
    split_illuminations(&photo, &s_a, &s_f, &AmbientLight::from_kelvin(kelvin)?)
}

/// Height and width of the first readable component.
fn dims(root: &Path, rec: &ManifestRecord, d: Option<&DecompositionResult>) -> (usize, usize) {
    if let Some(d) = d {
        return (d.albedo.height(), d.albedo.width());
    }
    SERVED_COMPONENTS
        .iter()
        .find_map(|c| rec.read(root, c).ok())
        .map_or((0, 0), |img| (img.height(), img.width()))
}

impl SceneStore {
    /// Loads every scene under `root`. A root without a manifest is empty.
    pub fn open(root: impl AsRef<Path>) -> flashlab::Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::read_dir(&root).map_err(|e| flashlab::Error::Io { path: root.clone(), source: e })?;
        let mut scenes = BTreeMap::new();
        if !root.join(MANIFEST_FILE).exists() {
            return Ok(Self { root, scenes });
        }
        for record in Manifest::load(&root)?.records {
            let decomposition = match find_decomposition(&root, &record) {
                Ok(d) => Some(d),
                Err(e) => {
                    log::warn!("scene {}: no decomposition ({e})", record.id);
                    None
                }
            };
            let (height, width) = dims(&root, &record, decomposition.as_ref());
            let summary = SceneSummary {
                id: record.id.clone(),
                width,
                height,
                kelvin: decomposition.as_ref().map(|d| d.ambient.kelvin).or(record.kelvin),
                has_decomposition: decomposition.is_some(),
            };
            scenes.insert(record.id.clone(), Scene { summary, record, decomposition });
        }
        Ok(Self { root, scenes })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Summaries sorted by id.
    pub fn summaries(&self) -> Vec<SceneSummary> {
        self.scenes.values().map(|s| s.summary.clone()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.scenes.contains_key(id)
    }

    pub fn decomposition(&self, id: &str) -> Option<&DecompositionResult> {
        self.scenes.get(id)?.decomposition.as_ref()
    }

    /// Path of a served component on disk, if the scene lists it.
    pub fn component_path(&self, id: &str, name: &str) -> Option<PathBuf> {
        if !SERVED_COMPONENTS.contains(&name) {
            return None;
        }
        self.scenes.get(id)?.record.path(&self.root, name).ok()
    }
}
