//! Fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::Command;

use ndarray::Array2;
use net2rdm_core::io::{
    write_manifest, write_npy, ActivationManifest, BrainKind, BrainManifest, LayerFile, RdmManifest, SubjectFile,
    FORMAT_VERSION,
};
use net2rdm_core::{compute_rdm, DissimilarityMetric, Rdm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_net2rdm"))
        .args(args)
        .env_remove("NET2RDM_WORKERS")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

pub fn uniform_rdm(rng: &mut ChaCha8Rng, ids: &[String]) -> Rdm {
    let n = ids.len();
    let upper: Vec<f64> = (0..n * (n - 1) / 2).map(|_| rng.random_range(0.0..1.0)).collect();
    Rdm::from_upper(ids.to_vec(), &upper).unwrap()
}

pub fn correlation_rdm(matrix: &Array2<f64>, ids: &[String]) -> Rdm {
    compute_rdm(matrix.view(), DissimilarityMetric::Correlation, ids.to_vec()).unwrap()
}

fn write_matrix(path: &Path, m: &Array2<f64>) {
    let m = m.as_standard_layout();
    write_npy(path, &[m.nrows(), m.ncols()], m.as_slice().unwrap()).unwrap();
}

pub fn write_activations(dir: &Path, network: &str, layers: &[(&str, Array2<f64>)], stimulus_ids: &[String]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut files = Vec::new();
    for (i, (name, m)) in layers.iter().enumerate() {
        let file = format!("act{i}.npy");
        write_matrix(&dir.join(&file), m);
        files.push(LayerFile { name: name.to_string(), file });
    }
    let manifest = ActivationManifest {
        format_version: FORMAT_VERSION.into(),
        network_id: network.into(),
        layers: files,
        stimulus_ids: stimulus_ids.to_vec(),
    };
    let path = dir.join("activations.json");
    write_manifest(&path, &manifest).unwrap();
    path
}

pub fn write_model_rdms(dir: &Path, model_id: &str, layers: &[(&str, &Rdm)]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut files = Vec::new();
    for (i, (name, rdm)) in layers.iter().enumerate() {
        let file = format!("layer{i}.npy");
        write_matrix(&dir.join(&file), rdm.values());
        files.push(LayerFile { name: name.to_string(), file });
    }
    let manifest = RdmManifest {
        format_version: FORMAT_VERSION.into(),
        model_id: model_id.into(),
        metric: DissimilarityMetric::Correlation,
        condition_ids: layers[0].1.condition_ids().to_vec(),
        layers: files,
    };
    let path = dir.join("net2rdm-rdms.json");
    write_manifest(&path, &manifest).unwrap();
    path
}

pub fn write_rdm_brain(dir: &Path, roi: &str, subjects: &[Rdm]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut files = Vec::new();
    for (i, rdm) in subjects.iter().enumerate() {
        let file = format!("sub{i}.npy");
        write_matrix(&dir.join(&file), rdm.values());
        files.push(SubjectFile { id: format!("sub{i}"), file });
    }
    let manifest = BrainManifest {
        format_version: FORMAT_VERSION.into(),
        kind: BrainKind::Rdm,
        roi_name: roi.into(),
        condition_ids: subjects[0].condition_ids().to_vec(),
        subjects: files,
        coordinates: None,
    };
    let path = dir.join("brain.json");
    write_manifest(&path, &manifest).unwrap();
    path
}

pub fn write_voxel_brain(dir: &Path, roi: &str, volume: &PlantedVolume) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    write_matrix(&dir.join("coords.npy"), &volume.coordinates);
    let mut files = Vec::new();
    for (i, r) in volume.responses.iter().enumerate() {
        let file = format!("sub{i}.npy");
        write_matrix(&dir.join(&file), r);
        files.push(SubjectFile { id: format!("sub{i}"), file });
    }
    let manifest = BrainManifest {
        format_version: FORMAT_VERSION.into(),
        kind: BrainKind::Voxel,
        roi_name: roi.into(),
        condition_ids: volume.condition_ids.clone(),
        subjects: files,
        coordinates: Some("coords.npy".into()),
    };
    let path = dir.join("brain.json");
    write_manifest(&path, &manifest).unwrap();
    path
}

pub const GRID: usize = 12;

/// A 12x12x12 volume (1 mm spacing) where a 3x3x3 block of voxels carries
/// condition patterns whose correlation RDM is `model`; everything else is
/// noise.
pub struct PlantedVolume {
    pub coordinates: Array2<f64>,
    pub responses: Vec<Array2<f64>>,
    pub condition_ids: Vec<String>,
    pub model: Rdm,
    pub region: Vec<usize>,
}

pub fn voxel_index(x: usize, y: usize, z: usize) -> usize {
    (x * GRID + y) * GRID + z
}

pub fn planted_volume(seed: u64, n_subjects: usize, n_conditions: usize) -> PlantedVolume {
    let mut rng = rng(seed);
    let n_voxels = GRID * GRID * GRID;
    let coordinates = Array2::from_shape_fn((n_voxels, 3), |(v, a)| {
        let (x, y, z) = (v / (GRID * GRID), (v / GRID) % GRID, v % GRID);
        [x, y, z][a] as f64
    });
    let c: Vec<usize> = (0..3).map(|_| rng.random_range(2..GRID - 2)).collect();
    let mut region = Vec::new();
    for x in c[0] - 1..=c[0] + 1 {
        for y in c[1] - 1..=c[1] + 1 {
            for z in c[2] - 1..=c[2] + 1 {
                region.push(voxel_index(x, y, z));
            }
        }
    }
    region.sort_unstable();
    let latent = normal_matrix(&mut rng, n_conditions, 4);
    let loading = normal_matrix(&mut rng, 4, region.len());
    let pattern = latent.dot(&loading);
    let condition_ids = ids("cond", n_conditions);
    let model = correlation_rdm(&pattern, &condition_ids);
    let responses = (0..n_subjects)
        .map(|_| {
            let mut r = normal_matrix(&mut rng, n_conditions, n_voxels) * 0.5;
            for (k, &v) in region.iter().enumerate() {
                for cond in 0..n_conditions {
                    r[[cond, v]] += pattern[[cond, k]];
                }
            }
            r
        })
        .collect();
    PlantedVolume { coordinates, responses, condition_ids, model, region }
}

/// Subject RDMs scattered around `base`: each off-diagonal entry gets
/// independent uniform noise of half-width `noise`.
pub fn noisy_copies(rng: &mut ChaCha8Rng, base: &Rdm, n: usize, noise: f64) -> Vec<Rdm> {
    (0..n).map(|_| perturb(rng, base, noise)).collect()
}

pub fn perturb(rng: &mut ChaCha8Rng, base: &Rdm, noise: f64) -> Rdm {
    let k = base.n_conditions();
    let mut upper = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            upper.push(base.values()[[i, j]] + rng.random_range(-noise..=noise));
        }
    }
    Rdm::from_upper(base.condition_ids().to_vec(), &upper).unwrap()
}

/// `data-value` of every bar in a rendered report, as (model, layer, value).
pub fn svg_bars(svg: &str) -> Vec<(String, String, f64)> {
    let attr = |line: &str, name: &str| -> String {
        let key = format!("{name}=\"");
        let start = line.find(&key).unwrap() + key.len();
        let end = start + line[start..].find('"').unwrap();
        line[start..end].to_string()
    };
    svg.lines()
        .filter(|l| l.contains("class=\"bar\""))
        .map(|l| (attr(l, "data-model"), attr(l, "data-layer"), attr(l, "data-value").parse().unwrap()))
        .collect()
}
