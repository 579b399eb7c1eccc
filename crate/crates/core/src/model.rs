//! Domain types shared by every analysis.
//!
//! All types validate on construction and are immutable afterwards, so an
//! [`Rdm`] in hand is always symmetric with a zero diagonal.

use std::collections::{BTreeSet, HashMap, HashSet};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named layer of an activation set: `[n_stimuli x n_features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub matrix: Array2<f64>,
}

/// Activation data as read from disk, before any checks.
#[derive(Debug, Clone, Default)]
pub struct RawActivationSet {
    pub network_id: String,
    pub layers: Vec<Layer>,
    pub stimulus_ids: Vec<String>,
}

/// Per-layer activations of one network over an ordered stimulus set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    network_id: String,
    layers: Vec<Layer>,
    stimulus_ids: Vec<String>,
}

impl ActivationSet {
    pub fn network_id(&self) -> &str {
        &self.network_id
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn stimulus_ids(&self) -> &[String] {
        &self.stimulus_ids
    }

    pub fn n_stimuli(&self) -> usize {
        self.stimulus_ids.len()
    }
}

/// Checks raw activations and returns a validated set. Data is never repaired.
pub fn validate_activation_set(raw: RawActivationSet) -> Result<ActivationSet> {
    let expected = raw.stimulus_ids.len();
    let mut names = HashSet::new();
    for layer in &raw.layers {
        if !names.insert(layer.name.as_str()) {
            return Err(Error::DuplicateLayerName(layer.name.clone()));
        }
        if layer.matrix.nrows() != expected {
            return Err(Error::MismatchedStimulusCount {
                layer: layer.name.clone(),
                rows: layer.matrix.nrows(),
                expected,
            });
        }
        if layer.matrix.ncols() == 0 {
            return Err(Error::Shape(format!("layer '{}' has no features", layer.name)));
        }
        check_finite(layer.matrix.view(), &format!("layer '{}'", layer.name))?;
    }
    check_unique_ids(&raw.stimulus_ids)?;
    Ok(ActivationSet {
        network_id: raw.network_id,
        layers: raw.layers,
        stimulus_ids: raw.stimulus_ids,
    })
}

pub(crate) fn check_finite(matrix: ArrayView2<'_, f64>, context: &str) -> Result<()> {
    for ((row, col), v) in matrix.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { context: context.to_string(), row, col });
        }
    }
    Ok(())
}

fn check_unique_ids(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateCondition(id.clone()));
        }
    }
    Ok(())
}

/// Representational dissimilarity matrix over an ordered condition set.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    condition_ids: Vec<String>,
    values: Array2<f64>,
}

impl Rdm {
    /// Validates symmetry (exact), zero diagonal, finiteness and `n >= 3`.
    pub fn new(condition_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let n = condition_ids.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::Shape(format!(
                "RDM values are {}x{} but {} condition ids were given",
                values.nrows(),
                values.ncols(),
                n
            )));
        }
        if n < 3 {
            return Err(Error::TooFewConditions(n));
        }
        check_unique_ids(&condition_ids)?;
        check_finite(values.view(), "RDM")?;
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(Error::NonzeroDiagonal(i));
            }
            for j in (i + 1)..n {
                if values[[i, j]] != values[[j, i]] {
                    return Err(Error::AsymmetricRdm { row: i, col: j });
                }
            }
        }
        Ok(Rdm { condition_ids, values })
    }

    /// Rebuilds a symmetric matrix from its row-major upper triangle.
    pub fn from_upper(condition_ids: Vec<String>, upper: &[f64]) -> Result<Self> {
        let n = condition_ids.len();
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::Shape(format!(
                "upper triangle of length {} does not fit {} conditions",
                upper.len(),
                n
            )));
        }
        let mut values = Array2::zeros((n, n));
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                values[[i, j]] = upper[k];
                values[[j, i]] = upper[k];
                k += 1;
            }
        }
        Rdm::new(condition_ids, values)
    }

    // Callers guarantee the invariants (used by engines that mirror pairs).
    pub(crate) fn from_parts_unchecked(condition_ids: Vec<String>, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.nrows(), condition_ids.len());
        Rdm { condition_ids, values }
    }

    pub fn condition_ids(&self) -> &[String] {
        &self.condition_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_conditions(&self) -> usize {
        self.condition_ids.len()
    }

    /// Restricts and reorders to `ids`, every one of which must be present.
    pub fn select(&self, ids: &[String]) -> Result<Rdm> {
        if ids == self.condition_ids.as_slice() {
            return Ok(self.clone());
        }
        let index = self.index_of(ids)?;
        let n = index.len();
        let values = Array2::from_shape_fn((n, n), |(i, j)| self.values[[index[i], index[j]]]);
        Rdm::new(ids.to_vec(), values)
    }

    fn index_of(&self, ids: &[String]) -> Result<Vec<usize>> {
        let lookup: HashMap<&str, usize> =
            self.condition_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        ids.iter()
            .map(|id| {
                lookup
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::ConditionMismatch(format!("RDM and request ('{id}' missing)")))
            })
            .collect()
    }
}

/// Per-subject brain RDMs for one region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRdmStack {
    roi_name: String,
    subjects: Vec<String>,
    rdms: Vec<Rdm>,
}

impl SubjectRdmStack {
    pub fn new(roi_name: impl Into<String>, subjects: Vec<String>, rdms: Vec<Rdm>) -> Result<Self> {
        if rdms.is_empty() {
            return Err(Error::EmptyInput("subject RDM stack has no subjects".into()));
        }
        if subjects.len() != rdms.len() {
            return Err(Error::Shape(format!(
                "{} subject ids for {} RDMs",
                subjects.len(),
                rdms.len()
            )));
        }
        check_unique_ids(&subjects).map_err(|_| Error::Shape("duplicate subject id".into()))?;
        let ids = rdms[0].condition_ids();
        for (s, rdm) in subjects.iter().zip(&rdms).skip(1) {
            if rdm.condition_ids() != ids {
                return Err(Error::ConditionMismatch(format!(
                    "subject '{}' and subject '{}'",
                    subjects[0], s
                )));
            }
        }
        Ok(SubjectRdmStack { roi_name: roi_name.into(), subjects, rdms })
    }

    pub fn roi_name(&self) -> &str {
        &self.roi_name
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn rdms(&self) -> &[Rdm] {
        &self.rdms
    }

    pub fn condition_ids(&self) -> &[String] {
        self.rdms[0].condition_ids()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn select(&self, ids: &[String]) -> Result<SubjectRdmStack> {
        let rdms = self.rdms.iter().map(|r| r.select(ids)).collect::<Result<Vec<_>>>()?;
        Ok(SubjectRdmStack { roi_name: self.roi_name.clone(), subjects: self.subjects.clone(), rdms })
    }

    /// Keeps only the listed subjects, in the given order.
    pub fn subset(&self, subject_indices: &[usize]) -> Result<SubjectRdmStack> {
        let subjects = subject_indices.iter().map(|&i| self.subjects[i].clone()).collect();
        let rdms = subject_indices.iter().map(|&i| self.rdms[i].clone()).collect();
        SubjectRdmStack::new(self.roi_name.clone(), subjects, rdms)
    }
}

/// Per-subject condition x voxel responses with voxel coordinates in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelDataset {
    subjects: Vec<String>,
    responses: Vec<Array2<f64>>,
    coordinates: Array2<f64>,
    condition_ids: Vec<String>,
}

impl VoxelDataset {
    pub fn new(
        subjects: Vec<String>,
        responses: Vec<Array2<f64>>,
        coordinates: Array2<f64>,
        condition_ids: Vec<String>,
    ) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::EmptyInput("voxel dataset has no subjects".into()));
        }
        if subjects.len() != responses.len() {
            return Err(Error::Shape(format!(
                "{} subject ids for {} response matrices",
                subjects.len(),
                responses.len()
            )));
        }
        if coordinates.ncols() != 3 {
            return Err(Error::Shape(format!(
                "coordinates have {} columns, expected 3",
                coordinates.ncols()
            )));
        }
        check_unique_ids(&condition_ids)?;
        check_unique_ids(&subjects).map_err(|_| Error::Shape("duplicate subject id".into()))?;
        let n_voxels = coordinates.nrows();
        check_finite(coordinates.view(), "coordinates")?;
        for (s, r) in subjects.iter().zip(&responses) {
            if r.nrows() != condition_ids.len() {
                return Err(Error::Shape(format!(
                    "subject '{s}' has {} condition rows, expected {}",
                    r.nrows(),
                    condition_ids.len()
                )));
            }
            if r.ncols() != n_voxels {
                return Err(Error::Shape(format!(
                    "subject '{s}' has {} voxels but there are {n_voxels} coordinate rows",
                    r.ncols()
                )));
            }
            check_finite(r.view(), &format!("subject '{s}'"))?;
        }
        let mut seen: HashMap<[u64; 3], usize> = HashMap::with_capacity(n_voxels);
        for (v, row) in coordinates.outer_iter().enumerate() {
            // +0.0 normalises -0.0 so the bit pattern is a faithful key
            let key = [(row[0] + 0.0).to_bits(), (row[1] + 0.0).to_bits(), (row[2] + 0.0).to_bits()];
            if let Some(prev) = seen.insert(key, v) {
                return Err(Error::DuplicateCoordinate(prev, v));
            }
        }
        Ok(VoxelDataset { subjects, responses, coordinates, condition_ids })
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn responses(&self) -> &[Array2<f64>] {
        &self.responses
    }

    pub fn coordinates(&self) -> &Array2<f64> {
        &self.coordinates
    }

    pub fn condition_ids(&self) -> &[String] {
        &self.condition_ids
    }

    pub fn n_voxels(&self) -> usize {
        self.coordinates.nrows()
    }

    /// Restricts and reorders condition rows to `ids`.
    pub fn select_conditions(&self, ids: &[String]) -> Result<VoxelDataset> {
        if ids == self.condition_ids.as_slice() {
            return Ok(self.clone());
        }
        let lookup: HashMap<&str, usize> =
            self.condition_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let index = ids
            .iter()
            .map(|id| {
                lookup
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::ConditionMismatch(format!("voxel data ('{id}' missing)")))
            })
            .collect::<Result<Vec<_>>>()?;
        let responses = self
            .responses
            .iter()
            .map(|r| r.select(ndarray::Axis(0), &index))
            .collect();
        Ok(VoxelDataset {
            subjects: self.subjects.clone(),
            responses,
            coordinates: self.coordinates.clone(),
            condition_ids: ids.to_vec(),
        })
    }

    /// Reorders subjects; used by permutation checks.
    pub fn permute_subjects(&self, order: &[usize]) -> Result<VoxelDataset> {
        VoxelDataset::new(
            order.iter().map(|&i| self.subjects[i].clone()).collect(),
            order.iter().map(|&i| self.responses[i].clone()).collect(),
            self.coordinates.clone(),
            self.condition_ids.clone(),
        )
    }
}

/// Lower and upper noise ceiling on the signed-square score scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCeiling {
    pub lower: f64,
    pub upper: f64,
}

/// Group-level RSA outcome for one model layer in one ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub model_id: String,
    pub layer_name: String,
    pub roi_name: String,
    pub subjects: Vec<String>,
    pub per_subject_rho: Vec<f64>,
    pub per_subject_score: Vec<f64>,
    pub mean_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sem: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub significant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_ceiling: Option<NoiseCeiling>,
}

/// Sorted intersection of two id lists.
pub fn shared_conditions(a: &[String], b: &[String]) -> Vec<String> {
    let a: BTreeSet<&String> = a.iter().collect();
    b.iter()
        .filter(|id| a.contains(id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .cloned()
        .collect()
}

/// Restricts model and brain RDMs to their lexicographically sorted shared
/// conditions, permuting rows and columns consistently.
pub fn align_conditions(model_rdm: &Rdm, brain: &SubjectRdmStack) -> Result<(Rdm, SubjectRdmStack)> {
    let shared = shared_conditions(model_rdm.condition_ids(), brain.condition_ids());
    if shared.len() < 3 {
        return Err(Error::InsufficientOverlap(shared.len()));
    }
    Ok((model_rdm.select(&shared)?, brain.select(&shared)?))
}

/// Aligns several model RDMs and a brain stack on the conditions all of them share.
pub fn align_many(model_rdms: &[Rdm], brain: &SubjectRdmStack) -> Result<(Vec<Rdm>, SubjectRdmStack)> {
    let mut shared = brain.condition_ids().to_vec();
    for rdm in model_rdms {
        shared = shared_conditions(&shared, rdm.condition_ids());
    }
    shared.sort();
    if shared.len() < 3 {
        return Err(Error::InsufficientOverlap(shared.len()));
    }
    let models = model_rdms.iter().map(|r| r.select(&shared)).collect::<Result<Vec<_>>>()?;
    Ok((models, brain.select(&shared)?))
}
