//! Volumetric searchlight RSA.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{shared_conditions, Rdm, VoxelDataset};
use crate::rdm::{flatten_upper, upper_triangle_seq, DissimilarityMetric};
use crate::stats::{average_ranks, signed_square, spearman_ranked};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchlightConfig {
    pub radius_mm: f64,
    pub min_voxels: usize,
    pub metric: DissimilarityMetric,
}

impl Default for SearchlightConfig {
    fn default() -> Self {
        SearchlightConfig { radius_mm: 10.0, min_voxels: 5, metric: DissimilarityMetric::Correlation }
    }
}

/// Per-voxel scores. Invalid centres hold `NaN` in both score arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchlightMap {
    /// `[n_subjects x n_voxels]` signed-square Spearman scores.
    pub per_subject_scores: Array2<f64>,
    pub mean_scores: Vec<f64>,
    pub n_voxels_per_sphere: Vec<usize>,
    pub valid: Vec<bool>,
}

impl SearchlightMap {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Valid centres sorted by mean score (descending), ties by index.
    pub fn top_centers(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.valid.len()).filter(|&i| self.valid[i]).collect();
        idx.sort_by(|&a, &b| self.mean_scores[b].total_cmp(&self.mean_scores[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

fn distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Voxel indices within `radius_mm` of each voxel, sorted by index.
///
/// Candidates come from a uniform grid hash with cells slightly larger than
/// the radius, so only the 27 neighbouring cells are scanned.
pub fn build_spheres(coordinates: ArrayView2<'_, f64>, radius_mm: f64) -> Vec<Vec<usize>> {
    let n = coordinates.nrows();
    if n == 0 {
        return Vec::new();
    }
    let cell = radius_mm.max(f64::MIN_POSITIVE) * (1.0 + 1e-9);
    let origin: Vec<f64> = (0..3)
        .map(|d| coordinates.column(d).iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let key = |v: usize| -> [i64; 3] {
        let row = coordinates.row(v);
        [0, 1, 2].map(|d| ((row[d] - origin[d]) / cell).floor() as i64)
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for v in 0..n {
        grid.entry(key(v)).or_default().push(v);
    }
    (0..n)
        .into_par_iter()
        .map(|c| {
            let [x, y, z] = key(c);
            let center = coordinates.row(c);
            let mut members = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(cell_members) = grid.get(&[x + dx, y + dy, z + dz]) {
                            members.extend(
                                cell_members
                                    .iter()
                                    .copied()
                                    .filter(|&v| distance(coordinates.row(v), center) <= radius_mm),
                            );
                        }
                    }
                }
            }
            members.sort_unstable();
            members
        })
        .collect()
}

/// Scores every voxel's sphere against `model_rdm` for each subject.
///
/// Centres with fewer than `min_voxels` members, or whose local RDM cannot
/// be computed or ranked for any subject, are marked invalid for all
/// subjects. Work runs in rayon's current pool; each centre is computed
/// sequentially, so output does not depend on the worker count.
pub fn searchlight_rsa(data: &VoxelDataset, model_rdm: &Rdm, config: &SearchlightConfig) -> Result<SearchlightMap> {
    if !(config.radius_mm > 0.0 && config.radius_mm.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {}", config.radius_mm)));
    }
    if config.min_voxels < 2 {
        return Err(Error::InvalidParameter(format!("min_voxels must be at least 2, got {}", config.min_voxels)));
    }
    let shared = shared_conditions(model_rdm.condition_ids(), data.condition_ids());
    if shared.len() < 3 {
        return Err(Error::InsufficientOverlap(shared.len()));
    }
    let model = model_rdm.select(&shared)?;
    let data = data.select_conditions(&shared)?;
    let model_ranks = average_ranks(&flatten_upper(&model));

    let spheres = build_spheres(data.coordinates().view(), config.radius_mm);
    let n_subjects = data.subjects().len();
    let n_voxels = data.n_voxels();

    let scores: Vec<Option<Vec<f64>>> = spheres
        .par_iter()
        .map(|members| {
            if members.len() < config.min_voxels {
                return None;
            }
            let mut out = Vec::with_capacity(n_subjects);
            for responses in data.responses() {
                let local = responses.select(ndarray::Axis(1), members);
                let upper = upper_triangle_seq(local.view(), config.metric).ok()?;
                let rho = spearman_ranked(&model_ranks, &average_ranks(&upper)).ok()?;
                out.push(signed_square(rho));
            }
            Some(out)
        })
        .collect();

    let mut per_subject_scores = Array2::from_elem((n_subjects, n_voxels), f64::NAN);
    let mut mean_scores = vec![f64::NAN; n_voxels];
    let mut valid = vec![false; n_voxels];
    for (v, s) in scores.iter().enumerate() {
        if let Some(values) = s {
            valid[v] = true;
            for (subject, &x) in values.iter().enumerate() {
                per_subject_scores[[subject, v]] = x;
            }
            mean_scores[v] = values.iter().sum::<f64>() / n_subjects as f64;
        }
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::AllCentersInvalid);
    }
    Ok(SearchlightMap {
        per_subject_scores,
        mean_scores,
        n_voxels_per_sphere: spheres.iter().map(Vec::len).collect(),
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(side: usize, spacing: f64) -> Array2<f64> {
        let mut rows = Vec::new();
        for x in 0..side {
            for y in 0..side {
                for z in 0..side {
                    rows.extend([x as f64 * spacing, y as f64 * spacing, z as f64 * spacing]);
                }
            }
        }
        Array2::from_shape_vec((side * side * side, 3), rows).unwrap()
    }

    fn brute_spheres(coords: &Array2<f64>, r: f64) -> Vec<Vec<usize>> {
        let n = coords.nrows();
        (0..n)
            .map(|c| (0..n).filter(|&v| distance(coords.row(v), coords.row(c)) <= r).collect())
            .collect()
    }

    #[test]
    fn grid_sphere_sizes() {
        let coords = grid(3, 1.0);
        let center = 13; // (1, 1, 1)
        assert_eq!(coords.row(center).to_vec(), vec![1.0, 1.0, 1.0]);
        assert_eq!(build_spheres(coords.view(), 1.0)[center].len(), 7);
        assert_eq!(build_spheres(coords.view(), 1.5)[center].len(), 19);
        assert_eq!(build_spheres(coords.view(), 1.8)[center].len(), 27);
    }

    #[test]
    fn random_cloud_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let coords = Array2::from_shape_fn((50, 3), |_| rng.random_range(-20.0..20.0));
        for r in [0.5, 3.0, 7.5, 15.0, 100.0] {
            let fast = build_spheres(coords.view(), r);
            assert_eq!(fast, brute_spheres(&coords, r));
            for (c, members) in fast.iter().enumerate() {
                assert!(members.contains(&c));
                for &v in members {
                    assert!(fast[v].contains(&c));
                }
            }
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn tiny_radius_invalidates_everything() {
        let coords = grid(3, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let resp = Array2::from_shape_fn((5, 27), |_| rng.random_range(-1.0..1.0));
        let data = VoxelDataset::new(vec!["s".into()], vec![resp], coords, ids(5)).unwrap();
        let model = Rdm::from_upper(ids(5), &(0..10).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let config = SearchlightConfig { radius_mm: 1.0, min_voxels: 5, ..Default::default() };
        assert!(matches!(searchlight_rsa(&data, &model, &config), Err(Error::AllCentersInvalid)));
    }

    #[test]
    fn scores_bounded_and_subjects_permute() {
        let coords = grid(4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let responses: Vec<Array2<f64>> =
            (0..3).map(|_| Array2::from_shape_fn((6, 64), |_| rng.random_range(-1.0..1.0))).collect();
        let data = VoxelDataset::new(vec!["a".into(), "b".into(), "c".into()], responses, coords, ids(6)).unwrap();
        let model = Rdm::from_upper(ids(6), &(0..15).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>()).unwrap();
        let config = SearchlightConfig { radius_mm: 1.5, min_voxels: 5, ..Default::default() };
        let map = searchlight_rsa(&data, &model, &config).unwrap();
        assert_eq!(map.valid_count(), 64);
        assert!(map.per_subject_scores.iter().all(|s| (-1.0..=1.0).contains(s)));

        let permuted = data.permute_subjects(&[2, 0, 1]).unwrap();
        let pmap = searchlight_rsa(&permuted, &model, &config).unwrap();
        for (row, src) in [2, 0, 1].iter().enumerate() {
            assert_eq!(pmap.per_subject_scores.row(row), map.per_subject_scores.row(*src));
        }
        for (a, b) in pmap.mean_scores.iter().zip(&map.mean_scores) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_sphere_is_invalid_for_all_subjects() {
        let coords = grid(3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let good = Array2::from_shape_fn((5, 27), |_| rng.random_range(-1.0..1.0));
        let mut bad = good.clone();
        // voxel 0's 1mm sphere is {0, 1, 3, 9}; make condition 0 constant over it
        for v in [0, 1, 3, 9] {
            bad[[0, v]] = 0.5;
        }
        let data = VoxelDataset::new(vec!["a".into(), "b".into()], vec![good, bad], coords, ids(5)).unwrap();
        let model = Rdm::from_upper(ids(5), &(0..10).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let config = SearchlightConfig { radius_mm: 1.0, min_voxels: 4, ..Default::default() };
        let map = searchlight_rsa(&data, &model, &config).unwrap();
        assert!(!map.valid[0]);
        assert!(map.per_subject_scores[[0, 0]].is_nan() && map.per_subject_scores[[1, 0]].is_nan());
        assert!(map.mean_scores[0].is_nan());
        assert!(map.valid[13]);
    }
}
