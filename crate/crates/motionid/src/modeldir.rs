//! On-disk layout of a trained hierarchy.
//!
//! A model directory holds `manifest.json` plus one GBDT1 file per group
//! and component model. The manifest lists every layer's groups by user id,
//! the layer-3 components, and each model file with its SHA-256.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use motionid_core::hierarchy::{Component, HierarchicalModel, HierarchyConfig, Layer};
use motionid_core::{TreeModel, UserId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::{gbdt_bytes, read_gbdt};

pub const FORMAT: &str = "motionid-model";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

pub type Model = HierarchicalModel<TreeModel>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub members: Vec<String>,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerManifest {
    pub index: u8,
    pub groups: Vec<ModelFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub n_groups: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub max_component_size: usize,
    pub similar_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub n_features: usize,
    pub hierarchy: HierarchyManifest,
    /// Column order of the model's score maps.
    pub users: Vec<String>,
    pub layers: Vec<LayerManifest>,
    pub components: Vec<ModelFile>,
    pub components_stale: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn names(model: &Model, members: &[usize]) -> Vec<String> {
    members.iter().map(|&u| model.users[u].0.clone()).collect()
}

/// Writes a model file only when its content changed, so untouched models
/// keep their bytes and timestamps.
fn put(dir: &Path, file: &str, bytes: &[u8]) -> Result<String> {
    let path = dir.join(file);
    let unchanged = std::fs::read(&path).map(|old| old == bytes).unwrap_or(false);
    if !unchanged {
        std::fs::write(&path, bytes)?;
    }
    Ok(sha256_hex(bytes))
}

pub fn layer_file(layer: u8, group: usize) -> String {
    format!("layer{layer}_group{group:03}.gbdt")
}

pub fn component_file(i: usize) -> String {
    format!("layer3_component{i:04}.gbdt")
}

/// Saves `model` into `dir`, creating it if needed. Stale component files
/// from an earlier save are removed.
pub fn save(dir: &Path, model: &Model) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut layers = Vec::new();
    for layer in &model.layers {
        let mut groups = Vec::new();
        for (g, (members, m)) in layer.groups.iter().zip(&layer.models).enumerate() {
            let file = layer_file(layer.index, g);
            let sha256 = put(dir, &file, &gbdt_bytes(m))?;
            groups.push(ModelFile {
                members: names(model, members),
                file,
                sha256,
            });
        }
        layers.push(LayerManifest {
            index: layer.index,
            groups,
        });
    }
    let mut components = Vec::new();
    for (i, c) in model.components.iter().enumerate() {
        let file = component_file(i);
        let sha256 = put(dir, &file, &gbdt_bytes(&c.model))?;
        components.push(ModelFile {
            members: names(model, &c.members),
            file,
            sha256,
        });
    }
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.starts_with("layer3_component") && !components.iter().any(|c| c.file == name) {
            std::fs::remove_file(dir.join(&name))?;
        }
    }
    let c = &model.config;
    let manifest = Manifest {
        format: FORMAT.to_string(),
        version: VERSION,
        n_features: model.n_features,
        hierarchy: HierarchyManifest {
            n_groups: c.n_groups,
            seed: c.seed,
            epsilon: c.epsilon,
            max_component_size: c.max_component_size,
            similar_users: c.similar_users,
        },
        users: model.users.iter().map(|u| u.0.clone()).collect(),
        layers,
        components,
        components_stale: model.components_stale,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    put(dir, MANIFEST, text.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Workspace(format!("cannot read {}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::parse(path, format!("unsupported model format {} v{}", m.format, m.version)));
    }
    Ok(m)
}

fn load_model(dir: &Path, f: &ModelFile) -> Result<Arc<TreeModel>> {
    let path: PathBuf = dir.join(&f.file);
    let bytes = std::fs::read(&path)?;
    if sha256_hex(&bytes) != f.sha256 {
        return Err(Error::parse(&path, "checksum does not match the manifest"));
    }
    Ok(Arc::new(read_gbdt(&path, &bytes[..])?))
}

fn indices(path: &Path, users: &[UserId], members: &[String]) -> Result<Vec<usize>> {
    let idx = members
        .iter()
        .map(|m| {
            users
                .iter()
                .position(|u| u.0 == *m)
                .ok_or_else(|| Error::parse(path, format!("unknown member {m:?}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    if !idx.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::parse(path, "group members are not in model order"));
    }
    Ok(idx)
}

pub fn load(dir: &Path) -> Result<Model> {
    let m = read_manifest(dir)?;
    let path = dir.join(MANIFEST);
    let users: Vec<UserId> = m.users.iter().cloned().map(UserId).collect();
    if m.layers.len() != 2 {
        return Err(Error::parse(&path, "expected two layers"));
    }
    let mut layers = Vec::new();
    for l in &m.layers {
        let mut groups = Vec::new();
        let mut models = Vec::new();
        for f in &l.groups {
            groups.push(indices(&path, &users, &f.members)?);
            models.push(load_model(dir, f)?);
        }
        layers.push(Layer {
            index: l.index,
            groups,
            models,
        });
    }
    let mut components = Vec::new();
    for f in &m.components {
        components.push(Component {
            members: indices(&path, &users, &f.members)?,
            model: load_model(dir, f)?,
        });
    }
    let h = &m.hierarchy;
    let l2 = layers.pop().expect("two layers");
    let l1 = layers.pop().expect("two layers");
    Ok(HierarchicalModel {
        users,
        config: HierarchyConfig {
            n_groups: h.n_groups,
            seed: h.seed,
            epsilon: h.epsilon,
            max_component_size: h.max_component_size,
            similar_users: h.similar_users,
        },
        n_features: m.n_features,
        layers: [l1, l2],
        components,
        components_stale: m.components_stale,
    })
}
