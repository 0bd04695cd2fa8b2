use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SceneRecord, Split};
use crate::error::{Error, Result};
use crate::formation::{AmbientLight, IntrinsicComponents, ShadingMap};
use crate::imgcore::{read_pfm, write_pfm, LinearImage};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Component files written for every synthetic record.
pub const COMPONENTS: [&str; 8] = ["P", "A", "F", "R", "S_A", "S_F", "depth", "normals"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    Composited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    /// Component name to path relative to the dataset root.
    pub paths: BTreeMap<String, String>,
    /// Ambient temperature, when known.
    pub kelvin: Option<f64>,
    pub split: Split,
    pub source: Source,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub records: Vec<ManifestRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    /// Record counts per split; rounding leftovers go to the test split.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&r| !(r >= 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split ratios {self:?} must be >= 0 and sum to 1")));
        }
        let train = ((n as f64 * self.train).round() as usize).min(n);
        let val = ((n as f64 * self.val).round() as usize).min(n - train);
        Ok((train, val, n - train - val))
    }
}

/// Deterministic shuffled split assignment, in input order.
pub fn assign_splits(n: usize, ratios: SplitRatios, seed: u64) -> Result<Vec<Split>> {
    let (train, val, _) = ratios.counts(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(splits)
}

fn record_images(r: &SceneRecord) -> [&LinearImage; 8] {
    [
        &r.photo,
        &r.ambient_image,
        &r.flash_image,
        &r.components.albedo,
        r.components.s_a.image(),
        r.components.s_f.image(),
        &r.depth,
        &r.normals,
    ]
}

/// Assigns splits, writes every record's components under `root/<id>/` and
/// writes `root/manifest.json`.
pub fn build_manifest(records: &[SceneRecord], ratios: SplitRatios, seed: u64, root: impl AsRef<Path>) -> Result<Manifest> {
    let root = root.as_ref();
    let ids: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    if ids.len() != records.len() {
        return Err(Error::InvalidArgument("record ids must be unique".into()));
    }
    let splits = assign_splits(records.len(), ratios, seed)?;
    let mut entries = Vec::with_capacity(records.len());
    for (record, split) in records.iter().zip(splits) {
        let dir = root.join(&record.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut paths = BTreeMap::new();
        for (name, img) in COMPONENTS.iter().zip(record_images(record)) {
            let rel = format!("{}/{name}.pfm", record.id);
            write_pfm(img, root.join(&rel))?;
            paths.insert(name.to_string(), rel);
        }
        entries.push(ManifestRecord {
            id: record.id.clone(),
            paths,
            kelvin: Some(record.components.ambient.kelvin),
            split,
            source: Source::Synthetic,
        });
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let manifest = Manifest { version: MANIFEST_VERSION, records: entries };
    manifest.save(root)?;
    Ok(manifest)
}

impl Manifest {
    pub fn save(&self, root: impl AsRef<Path>) -> Result<()> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Reads and validates `root/manifest.json`.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_slice(&bytes)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Config(format!("unsupported manifest version {}", manifest.version)));
        }
        let ids: BTreeSet<&str> = manifest.records.iter().map(|r| r.id.as_str()).collect();
        if ids.len() != manifest.records.len() {
            return Err(Error::Config("manifest has duplicate ids".into()));
        }
        Ok(manifest)
    }

    /// Referenced files that do not exist.
    pub fn missing_files(&self, root: impl AsRef<Path>) -> Vec<PathBuf> {
        let root = root.as_ref();
        self.records
            .iter()
            .flat_map(|r| r.paths.values())
            .map(|p| root.join(p))
            .filter(|p| !p.exists())
            .collect()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

impl ManifestRecord {
    pub fn path(&self, root: &Path, component: &str) -> Result<PathBuf> {
        self.paths
            .get(component)
            .map(|p| root.join(p))
            .ok_or_else(|| Error::Config(format!("record {} has no {component} component", self.id)))
    }

    /// Reads one component image.
    pub fn read(&self, root: &Path, component: &str) -> Result<LinearImage> {
        read_pfm(self.path(root, component)?)
    }

    /// Reads a complete synthetic record.
    pub fn load(&self, root: &Path) -> Result<SceneRecord> {
        let kelvin = self
            .kelvin
            .ok_or_else(|| Error::Config(format!("record {} has no temperature", self.id)))?;
        let [p, a, f, r, s_a, s_f, depth, normals] = COMPONENTS.map(|c| self.read(root, c));
        Ok(SceneRecord {
            id: self.id.clone(),
            photo: p?,
            ambient_image: a?,
            flash_image: f?,
            components: IntrinsicComponents::new(
                r?,
                ShadingMap::new(s_a?)?,
                ShadingMap::new(s_f?)?,
                AmbientLight::from_kelvin(kelvin)?,
            )?,
            depth: depth?,
            normals: normals?,
            split: self.split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts() {
        assert_eq!(SplitRatios::default().counts(10).unwrap(), (8, 1, 1));
        assert_eq!(SplitRatios::default().counts(200).unwrap(), (160, 20, 20));
        assert!(SplitRatios { train: 0.5, val: 0.1, test: 0.1 }.counts(10).is_err());
    }

    #[test]
    fn split_assignment_is_seeded() {
        let a = assign_splits(10, SplitRatios::default(), 4).unwrap();
        assert_eq!(a, assign_splits(10, SplitRatios::default(), 4).unwrap());
        assert_eq!(a.iter().filter(|s| **s == Split::Train).count(), 8);
        assert_eq!(a.iter().filter(|s| **s == Split::Val).count(), 1);
    }
}
