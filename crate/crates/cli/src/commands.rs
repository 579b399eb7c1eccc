//! The four subcommands.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use net2rdm_core::io::{
    load_activation_set, load_brain_data, BrainManifest, load_model_rdms, read_rdm_file, AnalysisConfig, BrainData, Inputs,
    LayerFile, RdmManifest, ResultsDocument, FORMAT_VERSION, RDM_MANIFEST, TOOL_VERSION,
};
use net2rdm_core::report::{render_report, Bar, BarGroup, ReportSpec};
use net2rdm_core::rsa::ModelRdms;
use net2rdm_core::{
    compute_rdm, rsa_evaluate_models, searchlight_rsa, wrsa_evaluate_models, DissimilarityMetric, EvaluationResult,
    PermutationScheme, Rdm, RsaConfig, SearchlightConfig, SubjectRdmStack, VoxelDataset, WrsaConfig, WrsaResult,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::OutputDir;
use crate::table::format_table;
use crate::{CompareArgs, RdmArgs, RsaArgs, SearchlightArgs, WrsaArgs};

fn parse_metric(text: &str) -> CliResult<DissimilarityMetric> {
    Ok(text.parse::<DissimilarityMetric>()?)
}

/// A directory argument stands for the default manifest inside it.
fn manifest_path(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}

fn file_stem_for(index: usize, name: &str) -> String {
    let clean: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("rdm_{index:03}_{clean}.npy")
}

pub fn cmd_rdm(args: &RdmArgs) -> CliResult<()> {
    let metric = parse_metric(&args.metric)?;
    let set = load_activation_set(&args.activations)?;
    let mut out = OutputDir::prepare(&args.out.out, args.out.force)?;
    let mut layers = Vec::with_capacity(set.layers().len());
    for (i, layer) in set.layers().iter().enumerate() {
        let rdm = compute_rdm(layer.matrix.view(), metric, set.stimulus_ids().to_vec())
            .map_err(|e| CliError::new(e.code(), format!("layer '{}': {e}", layer.name)))?;
        let file = file_stem_for(i, &layer.name);
        let n = rdm.n_conditions();
        out.write_npy(&file, &[n, n], rdm.values().as_slice().expect("standard layout"))?;
        layers.push(LayerFile { name: layer.name.clone(), file });
    }
    let manifest = RdmManifest {
        format_version: FORMAT_VERSION.into(),
        model_id: set.network_id().into(),
        metric,
        condition_ids: set.stimulus_ids().to_vec(),
        layers,
    };
    out.write_json(RDM_MANIFEST, &manifest)?;
    out.commit();
    println!("wrote {} RDMs ({} metric) to {}", manifest.layers.len(), metric, args.out.out.display());
    Ok(())
}

struct Loaded {
    models: Vec<ModelRdms>,
    brain: SubjectRdmStack,
    inputs: Inputs,
}

fn load_compare_inputs(args: &CompareArgs) -> CliResult<Loaded> {
    let mut models: Vec<ModelRdms> = Vec::new();
    let mut manifests = Vec::new();
    for path in &args.model_rdms {
        let path = manifest_path(path, RDM_MANIFEST);
        let (model_id, layers) = load_model_rdms(&path)?;
        if models.iter().any(|(id, _)| *id == model_id) {
            return Err(CliError::new("E_VALIDATION", format!("model id '{model_id}' given twice")));
        }
        manifests.push(path.display().to_string());
        models.push((model_id, layers));
    }
    let brain = match load_brain_data(&args.brain)? {
        BrainData::Rdm(stack) => stack,
        BrainData::Voxel(_) => {
            return Err(CliError::new(
                "E_KIND",
                format!("{}: expected a brain manifest of kind 'rdm', got 'voxel'", args.brain.display()),
            ))
        }
    };
    if brain.n_subjects() == 1 {
        eprintln!("warning: brain data has a single subject; sem, p-values and noise ceiling are not reported");
    }
    let inputs = Inputs { model_manifests: manifests, brain_manifest: args.brain.display().to_string() };
    Ok(Loaded { models, brain, inputs })
}

fn permutation(args: &CompareArgs) -> CliResult<Option<PermutationScheme>> {
    if !(args.fdr_q > 0.0 && args.fdr_q < 1.0) {
        return Err(CliError::args(format!("--fdr-q must lie in (0, 1), got {}", args.fdr_q)));
    }
    Ok(args.permutations.map(|n| PermutationScheme::monte_carlo(n, args.seed)))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Best layer per model by mean score; ties go to the earlier layer.
fn best_layers(results: &[EvaluationResult]) -> Vec<&EvaluationResult> {
    let mut best: Vec<&EvaluationResult> = Vec::new();
    for r in results {
        match best.iter_mut().find(|b| b.model_id == r.model_id) {
            Some(b) if r.mean_score > b.mean_score => *b = r,
            Some(_) => {}
            None => best.push(r),
        }
    }
    best
}

fn rsa_report(results: &[EvaluationResult], roi: &str) -> ReportSpec {
    let mut groups: Vec<BarGroup> = Vec::new();
    for r in results {
        let bar = Bar {
            label: r.layer_name.clone(),
            mean_score: r.mean_score,
            sem: r.sem,
            significant: r.significant,
        };
        match groups.iter_mut().find(|g| g.model == r.model_id) {
            Some(g) => g.bars.push(bar),
            None => groups.push(BarGroup { model: r.model_id.clone(), bars: vec![bar] }),
        }
    }
    let table = best_layers(results)
        .iter()
        .map(|b| format!("best layer of {}: {} (score {:.4})", b.model_id, b.layer_name, b.mean_score))
        .collect();
    ReportSpec {
        title: format!("RSA against {roi}"),
        y_label: "signed squared Spearman rho".into(),
        groups,
        noise_ceiling: results.iter().find_map(|r| r.noise_ceiling),
        table,
    }
}

fn write_results(out: &mut OutputDir, doc: &ResultsDocument) -> CliResult<()> {
    out.write_text("results.json", &doc.to_json()?)?;
    out.write_text("results.csv", &doc.to_csv()?)
}

pub fn cmd_rsa(args: &RsaArgs) -> CliResult<()> {
    let a = &args.common;
    let permutation = permutation(a)?;
    let loaded = load_compare_inputs(a)?;
    let config = RsaConfig { fdr_q: a.fdr_q, seed: a.seed, permutation };
    let results = rsa_evaluate_models(&loaded.models, &loaded.brain, &config)?;
    let mut out = OutputDir::prepare(&a.out.out, a.out.force)?;
    let doc = ResultsDocument {
        tool_version: TOOL_VERSION.into(),
        config: AnalysisConfig::Rsa(config),
        inputs: loaded.inputs,
        rsa_results: results,
        wrsa_results: Vec::new(),
        created_unix: None,
    };
    write_results(&mut out, &doc)?;
    if a.plot {
        let svg = render_report(&rsa_report(&doc.rsa_results, loaded.brain.roi_name()))?;
        out.write_text("report.svg", &svg)?;
    }
    out.commit();
    let rows: Vec<Vec<String>> = best_layers(&doc.rsa_results)
        .iter()
        .map(|r| {
            vec![
                r.model_id.clone(),
                r.layer_name.clone(),
                format!("{:.4}", r.mean_score),
                fmt_opt(r.sem),
                fmt_opt(r.p_value),
                if r.significant { "*".into() } else { String::new() },
            ]
        })
        .collect();
    print!("{}", format_table(&["model", "best_layer", "score", "sem", "p", "sig"], &rows));
    Ok(())
}

fn wrsa_report(results: &[WrsaResult], roi: &str) -> ReportSpec {
    let groups = results
        .iter()
        .map(|r| BarGroup {
            model: r.model_id.clone(),
            bars: vec![Bar {
                label: "weighted".into(),
                mean_score: r.mean_score,
                sem: r.sem,
                significant: r.significant,
            }],
        })
        .collect();
    let table = results
        .iter()
        .map(|r| {
            let weights: Vec<String> = r
                .predictor_names
                .iter()
                .zip(r.mean_weights())
                .map(|(name, w)| format!("{name}={w:.4}"))
                .collect();
            format!("weights of {}: {}", r.model_id, weights.join(", "))
        })
        .collect();
    ReportSpec {
        title: format!("Weighted RSA against {roi}"),
        y_label: "signed squared held-out r".into(),
        groups,
        noise_ceiling: results.iter().find_map(|r| r.noise_ceiling),
        table,
    }
}

pub fn cmd_wrsa(args: &WrsaArgs) -> CliResult<()> {
    let a = &args.common;
    let permutation = permutation(a)?;
    if args.nnls_tol.is_nan() || args.nnls_tol <= 0.0 {
        return Err(CliError::args("--nnls-tol must be positive"));
    }
    let loaded = load_compare_inputs(a)?;
    let config = WrsaConfig {
        n_folds: args.folds,
        seed: a.seed,
        nnls_tolerance: args.nnls_tol,
        nnls_max_iterations: args.nnls_max_iter,
        fdr_q: a.fdr_q,
        permutation,
    };
    let results = wrsa_evaluate_models(&loaded.models, &loaded.brain, &config)?;
    for r in &results {
        for w in &r.warnings {
            eprintln!("warning: {}: {w}", r.model_id);
        }
    }
    let mut out = OutputDir::prepare(&a.out.out, a.out.force)?;
    let doc = ResultsDocument {
        tool_version: TOOL_VERSION.into(),
        config: AnalysisConfig::Wrsa(config),
        inputs: loaded.inputs,
        rsa_results: Vec::new(),
        wrsa_results: results,
        created_unix: None,
    };
    write_results(&mut out, &doc)?;
    if a.plot {
        let svg = render_report(&wrsa_report(&doc.wrsa_results, loaded.brain.roi_name()))?;
        out.write_text("report.svg", &svg)?;
    }
    out.commit();
    let rows: Vec<Vec<String>> = doc
        .wrsa_results
        .iter()
        .map(|r| {
            let mean_r = r.per_subject_r.iter().sum::<f64>() / r.per_subject_r.len() as f64;
            vec![
                r.model_id.clone(),
                format!("{mean_r:.4}"),
                format!("{:.4}", r.mean_score),
                fmt_opt(r.sem),
                fmt_opt(r.p_value),
                if r.significant { "*".into() } else { String::new() },
            ]
        })
        .collect();
    print!("{}", format_table(&["model", "r", "score", "sem", "p", "sig"], &rows));
    Ok(())
}

#[derive(Debug, Serialize)]
struct Center {
    index: usize,
    coordinate: [f64; 3],
    mean_score: f64,
    n_voxels: usize,
}

#[derive(Debug, Serialize)]
struct SearchlightSummary {
    tool_version: String,
    roi_name: String,
    subjects: Vec<String>,
    condition_ids: Vec<String>,
    config: SearchlightConfig,
    n_voxels: usize,
    valid_centers: usize,
    top_centers: Vec<Center>,
}

fn load_voxels(path: &Path) -> CliResult<(String, VoxelDataset)> {
    match load_brain_data(path)? {
        BrainData::Voxel(ds) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::new("E_IO", e.to_string()))?;
            let manifest: BrainManifest =
                serde_json::from_str(&text).map_err(|e| CliError::new("E_FORMAT", e.to_string()))?;
            Ok((manifest.roi_name, ds))
        }
        BrainData::Rdm(_) => Err(CliError::new(
            "E_KIND",
            format!("{}: expected a brain manifest of kind 'voxel', got 'rdm'", path.display()),
        )),
    }
}

fn load_searchlight_model(args: &SearchlightArgs, data: &VoxelDataset) -> CliResult<Rdm> {
    let is_npy = args.model_rdm.extension().is_some_and(|e| e.eq_ignore_ascii_case("npy"));
    if is_npy {
        return Ok(read_rdm_file(&args.model_rdm, data.condition_ids())?);
    }
    let (model_id, mut layers) = load_model_rdms(&manifest_path(&args.model_rdm, RDM_MANIFEST))?;
    match &args.layer {
        Some(name) => layers
            .into_iter()
            .find(|(l, _)| l == name)
            .map(|(_, rdm)| rdm)
            .ok_or_else(|| CliError::args(format!("model '{model_id}' has no layer '{name}'"))),
        None if layers.len() == 1 => Ok(layers.remove(0).1),
        None => Err(CliError::args(format!("model '{model_id}' has {} layers; choose one with --layer", layers.len()))),
    }
}

pub fn cmd_searchlight(args: &SearchlightArgs) -> CliResult<()> {
    let metric = parse_metric(&args.metric)?;
    if !(args.radius > 0.0 && args.radius.is_finite()) {
        return Err(CliError::args("--radius must be a positive number"));
    }
    let (roi_name, data) = load_voxels(&args.brain)?;
    let model = load_searchlight_model(args, &data)?;
    let config = SearchlightConfig { radius_mm: args.radius, min_voxels: args.min_voxels, metric };
    let map = searchlight_rsa(&data, &model, &config)?;
    let n_subjects = data.subjects().len();
    let n_voxels = data.n_voxels();
    let mut out = OutputDir::prepare(&args.out.out, args.out.force)?;
    let scores: Array2<f64> = map.per_subject_scores.as_standard_layout().to_owned();
    out.write_npy("map.npy", &[n_subjects, n_voxels], scores.as_slice().expect("standard layout"))?;
    out.write_npy("mean_map.npy", &[n_voxels], &map.mean_scores)?;
    let coords = data.coordinates().as_standard_layout().to_owned();
    out.write_npy("coordinates.npy", &[n_voxels, 3], coords.as_slice().expect("standard layout"))?;
    let top_centers: Vec<Center> = map
        .top_centers(args.top_k)
        .into_iter()
        .map(|i| Center {
            index: i,
            coordinate: [coords[[i, 0]], coords[[i, 1]], coords[[i, 2]]],
            mean_score: map.mean_scores[i],
            n_voxels: map.n_voxels_per_sphere[i],
        })
        .collect();
    let summary = SearchlightSummary {
        tool_version: TOOL_VERSION.into(),
        roi_name,
        subjects: data.subjects().to_vec(),
        condition_ids: model.condition_ids().to_vec(),
        config,
        n_voxels,
        valid_centers: map.valid_count(),
        top_centers,
    };
    out.write_json("summary.json", &summary)?;
    out.commit();
    println!("{} of {} centres valid", summary.valid_centers, n_voxels);
    let rows: Vec<Vec<String>> = summary
        .top_centers
        .iter()
        .map(|c| {
            vec![
                c.index.to_string(),
                format!("({}, {}, {})", c.coordinate[0], c.coordinate[1], c.coordinate[2]),
                format!("{:.4}", c.mean_score),
                c.n_voxels.to_string(),
            ]
        })
        .collect();
    print!("{}", format_table(&["index", "coordinate", "score", "voxels"], &rows));
    Ok(())
}
