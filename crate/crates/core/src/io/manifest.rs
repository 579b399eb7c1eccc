//! JSON manifests tying NPY files to ids and layer names.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::npy::{read_npy, NpyArray};
use super::to_sorted_json;
use crate::error::{Error, Result};
use crate::model::{validate_activation_set, ActivationSet, Layer, RawActivationSet, Rdm, SubjectRdmStack, VoxelDataset};
use crate::rdm::DissimilarityMetric;

pub const FORMAT_VERSION: &str = "1";
pub const ACTIVATION_MANIFEST: &str = "net2rdm-activations.json";
pub const RDM_MANIFEST: &str = "net2rdm-rdms.json";
pub const BRAIN_MANIFEST: &str = "net2rdm-brain.json";

/// Relative tolerance under which input RDM asymmetry is repaired.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFile {
    pub name: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationManifest {
    pub format_version: String,
    pub network_id: String,
    pub layers: Vec<LayerFile>,
    pub stimulus_ids: Vec<String>,
}

/// Per-layer model RDMs written by `net2rdm rdm`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RdmManifest {
    pub format_version: String,
    pub model_id: String,
    pub metric: DissimilarityMetric,
    pub condition_ids: Vec<String>,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrainKind {
    Rdm,
    Voxel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectFile {
    pub id: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrainManifest {
    pub format_version: String,
    pub kind: BrainKind,
    pub roi_name: String,
    pub condition_ids: Vec<String>,
    pub subjects: Vec<SubjectFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BrainData {
    Rdm(SubjectRdmStack),
    Voxel(VoxelDataset),
}

fn read_manifest<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

fn check_version(path: &Path, version: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            reason: format!("unsupported format_version '{version}' (expected '{FORMAT_VERSION}')"),
        });
    }
    Ok(())
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Writes any manifest with sorted keys and a trailing newline.
pub fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> Result<()> {
    let text = to_sorted_json(manifest).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reshapes to `[rows x product(trailing dims)]`; 1-D arrays become one column.
fn as_matrix(arr: NpyArray, path: &Path) -> Result<Array2<f64>> {
    let rows = arr.shape[0];
    let cols: usize = arr.shape[1..].iter().product();
    Array2::from_shape_vec((rows, cols), arr.data)
        .map_err(|e| Error::Manifest { path: path.to_path_buf(), reason: e.to_string() })
}

pub fn load_activation_set(manifest_path: &Path) -> Result<ActivationSet> {
    let manifest: ActivationManifest = read_manifest(manifest_path)?;
    check_version(manifest_path, &manifest.format_version)?;
    let dir = base_dir(manifest_path);
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let path = dir.join(&entry.file);
        let matrix = read_npy(&path)
            .and_then(|a| as_matrix(a, &path))
            .map_err(|e| e.context(format!("layer '{}'", entry.name)))?;
        layers.push(Layer { name: entry.name.clone(), matrix });
    }
    validate_activation_set(RawActivationSet {
        network_id: manifest.network_id,
        layers,
        stimulus_ids: manifest.stimulus_ids,
    })
    .map_err(|e| e.context(manifest_path.display().to_string()))
}

/// Reads a square matrix and repairs asymmetry / diagonal noise up to
/// [`SYMMETRY_TOLERANCE`] relative to the largest magnitude in the matrix.
pub fn read_rdm_file(path: &Path, condition_ids: &[String]) -> Result<Rdm> {
    let arr = read_npy(path)?;
    let n = condition_ids.len();
    if arr.shape != [n, n] {
        return Err(Error::Shape(format!("{}: RDM has shape {:?}, expected [{n}, {n}]", path.display(), arr.shape)));
    }
    let mut values = Array2::from_shape_vec((n, n), arr.data).expect("shape checked");
    symmetrize(&mut values).map_err(|e| e.context(path.display().to_string()))?;
    Rdm::new(condition_ids.to_vec(), values).map_err(|e| e.context(path.display().to_string()))
}

fn symmetrize(values: &mut Array2<f64>) -> Result<()> {
    let n = values.nrows();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = SYMMETRY_TOLERANCE * scale;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (values[[i, j]], values[[j, i]]);
            if (a - b).abs() > tol {
                return Err(Error::AsymmetricRdm { row: i, col: j });
            }
            let m = 0.5 * (a + b);
            values[[i, j]] = m;
            values[[j, i]] = m;
        }
        if values[[i, i]].abs() > tol {
            return Err(Error::NonzeroDiagonal(i));
        }
        values[[i, i]] = 0.0;
    }
    Ok(())
}

pub fn load_brain_data(manifest_path: &Path) -> Result<BrainData> {
    let manifest: BrainManifest = read_manifest(manifest_path)?;
    check_version(manifest_path, &manifest.format_version)?;
    let dir = base_dir(manifest_path);
    let ids: Vec<String> = manifest.subjects.iter().map(|s| s.id.clone()).collect();
    match manifest.kind {
        BrainKind::Rdm => {
            let rdms = manifest
                .subjects
                .iter()
                .map(|s| {
                    read_rdm_file(&dir.join(&s.file), &manifest.condition_ids)
                        .map_err(|e| e.context(format!("subject '{}'", s.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BrainData::Rdm(SubjectRdmStack::new(manifest.roi_name, ids, rdms)?))
        }
        BrainKind::Voxel => {
            let coords_file = manifest.coordinates.as_ref().ok_or_else(|| Error::Manifest {
                path: manifest_path.to_path_buf(),
                reason: "voxel manifest needs a 'coordinates' file".into(),
            })?;
            let coords_path = dir.join(coords_file);
            let coords = read_npy(&coords_path)?;
            if coords.shape.len() != 2 || coords.shape[1] != 3 {
                return Err(Error::Shape(format!(
                    "{}: coordinates have shape {:?}, expected [n_voxels, 3]",
                    coords_path.display(),
                    coords.shape
                )));
            }
            let coordinates = as_matrix(coords, &coords_path)?;
            let mut responses = Vec::with_capacity(manifest.subjects.len());
            for s in &manifest.subjects {
                let path = dir.join(&s.file);
                let arr = read_npy(&path)?;
                if arr.shape.len() != 2 {
                    return Err(Error::Shape(format!(
                        "{}: responses have shape {:?}, expected [n_conditions, n_voxels]",
                        path.display(),
                        arr.shape
                    )));
                }
                responses.push(as_matrix(arr, &path)?);
            }
            Ok(BrainData::Voxel(VoxelDataset::new(ids, responses, coordinates, manifest.condition_ids)?))
        }
    }
}

/// Loads every layer RDM listed in an RDM manifest.
pub fn load_model_rdms(manifest_path: &Path) -> Result<(String, Vec<(String, Rdm)>)> {
    let manifest: RdmManifest = read_manifest(manifest_path)?;
    check_version(manifest_path, &manifest.format_version)?;
    let dir = base_dir(manifest_path);
    let layers = manifest
        .layers
        .iter()
        .map(|l| {
            read_rdm_file(&dir.join(&l.file), &manifest.condition_ids)
                .map(|r| (l.name.clone(), r))
                .map_err(|e| e.context(format!("layer '{}'", l.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest.model_id, layers))
}
