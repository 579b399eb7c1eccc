//! Weighted RSA: non-negative combinations of model RDMs fitted to each
//! subject's RDM and scored on held-out conditions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{align_many, NoiseCeiling, Rdm, SubjectRdmStack};
use crate::rdm::flatten_upper;
use crate::rsa::{noise_ceiling, stream_id};
use crate::stats::{
    derive_seed, fdr_bh, mean, pearson, sem, sign_flip_test, signed_square, Alternative, PermutationScheme,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrsaConfig {
    pub n_folds: usize,
    pub seed: u64,
    pub nnls_tolerance: f64,
    pub nnls_max_iterations: usize,
    pub fdr_q: f64,
    /// `None` picks [`PermutationScheme::auto`] from the subject count.
    pub permutation: Option<PermutationScheme>,
}

impl Default for WrsaConfig {
    fn default() -> Self {
        WrsaConfig {
            n_folds: 5,
            seed: 0,
            nnls_tolerance: 1e-10,
            nnls_max_iterations: 10_000,
            fdr_q: 0.05,
            permutation: None,
        }
    }
}

impl WrsaConfig {
    pub fn nnls_options(&self) -> NnlsOptions {
        NnlsOptions { tolerance: self.nnls_tolerance, max_iterations: self.nnls_max_iterations }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlsOptions {
    /// Convergence threshold on the largest KKT violation.
    pub tolerance: f64,
    /// Maximum number of full coordinate sweeps.
    pub max_iterations: usize,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions { tolerance: 1e-10, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsFit {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub kkt_violation: f64,
    /// False when `max_iterations` ran out; `weights` is then the last iterate.
    pub converged: bool,
}

/// Largest KKT violation of `w` given the gradient `g = A'Aw - A'b`.
fn kkt_violation(w: &[f64], g: &[f64]) -> f64 {
    w.iter()
        .zip(g)
        .map(|(&wi, &gi)| if wi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max)
}

/// Non-negative least squares by projected coordinate descent on the
/// normal equations.
///
/// `predictors` is row-major `[m x k]` (one column per predictor).
pub fn nnls_fit(predictors: &[Vec<f64>], target: &[f64], options: &NnlsOptions) -> Result<NnlsFit> {
    let m = predictors.len();
    if m != target.len() {
        return Err(Error::LengthMismatch(m, target.len()));
    }
    let k = predictors.first().map_or(0, Vec::len);
    if k == 0 || m < k {
        return Err(Error::Shape(format!("NNLS needs m >= k >= 1, got m = {m}, k = {k}")));
    }
    if predictors.iter().any(|row| row.len() != k) {
        return Err(Error::Shape("ragged predictor matrix".into()));
    }
    if predictors.iter().flatten().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { context: "NNLS input".into(), row: 0, col: 0 });
    }

    let mut gram = vec![vec![0.0; k]; k];
    let mut atb = vec![0.0; k];
    for (row, &y) in predictors.iter().zip(target) {
        for a in 0..k {
            atb[a] += row[a] * y;
            for b in a..k {
                gram[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }

    let gradient = |w: &[f64]| -> Vec<f64> {
        (0..k).map(|a| (0..k).map(|b| gram[a][b] * w[b]).sum::<f64>() - atb[a]).collect()
    };

    let mut w = vec![0.0; k];
    let mut g: Vec<f64> = atb.iter().map(|v| -v).collect();
    let mut iterations = 0;
    let mut violation = kkt_violation(&w, &g);
    while violation > options.tolerance && iterations < options.max_iterations {
        for i in 0..k {
            if gram[i][i] <= 0.0 {
                continue;
            }
            let updated = (w[i] - g[i] / gram[i][i]).max(0.0);
            let delta = updated - w[i];
            if delta != 0.0 {
                w[i] = updated;
                for (gj, row) in g.iter_mut().zip(&gram) {
                    *gj += row[i] * delta;
                }
            }
        }
        iterations += 1;
        // refresh to stop incremental drift from masking convergence
        g = gradient(&w);
        violation = kkt_violation(&w, &g);
    }
    for wi in w.iter_mut() {
        if *wi <= 0.0 {
            *wi = 0.0;
        }
    }
    Ok(NnlsFit { weights: w, iterations, kkt_violation: violation, converged: violation <= options.tolerance })
}

/// Seeded shuffle of `0..n_conditions` split into `n_folds` folds whose sizes
/// differ by at most one. Indices inside each fold are sorted.
pub fn condition_folds(n_conditions: usize, n_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_folds > n_conditions {
        return Err(Error::TooManyFolds { n_conditions, n_folds });
    }
    let mut order: Vec<usize> = (0..n_conditions).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n_conditions / n_folds;
    let extra = n_conditions % n_folds;
    let mut folds = Vec::with_capacity(n_folds);
    let mut start = 0;
    for f in 0..n_folds {
        let size = base + usize::from(f < extra);
        let mut fold = order[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

/// Upper-triangle pair indices used for training (both conditions outside
/// the fold) and testing (both inside). Straddling pairs appear in neither.
pub fn fold_pairs(n_conditions: usize, test_fold: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut in_test = vec![false; n_conditions];
    for &c in test_fold {
        in_test[c] = true;
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut p = 0;
    for i in 0..n_conditions {
        for j in (i + 1)..n_conditions {
            match (in_test[i], in_test[j]) {
                (false, false) => train.push(p),
                (true, true) => test.push(p),
                _ => {}
            }
            p += 1;
        }
    }
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrsaResult {
    pub model_id: String,
    pub roi_name: String,
    pub subjects: Vec<String>,
    pub predictor_names: Vec<String>,
    pub condition_ids: Vec<String>,
    /// All folds as indices into `condition_ids`.
    pub folds: Vec<Vec<usize>>,
    /// Folds actually scored (those with at least 3 test conditions).
    pub evaluated_folds: Vec<usize>,
    /// `[subject][evaluated fold][predictor]`, all >= 0.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `[subject][evaluated fold]` held-out Pearson r.
    pub per_subject_per_fold_r: Vec<Vec<f64>>,
    pub per_subject_r: Vec<f64>,
    pub per_subject_score: Vec<f64>,
    pub mean_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sem: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub significant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_ceiling: Option<NoiseCeiling>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl WrsaResult {
    /// Mean weight per predictor over subjects and folds.
    pub fn mean_weights(&self) -> Vec<f64> {
        let k = self.predictor_names.len();
        let mut acc = vec![0.0; k];
        let mut count = 0usize;
        for fold_weights in self.weights.iter().flatten() {
            for (a, w) in acc.iter_mut().zip(fold_weights) {
                *a += w;
            }
            count += 1;
        }
        acc.iter().map(|a| a / count.max(1) as f64).collect()
    }
}

struct SubjectFit {
    weights: Vec<Vec<f64>>,
    r: Vec<f64>,
    warnings: Vec<String>,
}

fn fit_subject(
    subject: &str,
    design: &[Vec<f64>],
    observed: &[f64],
    folds: &[(usize, Vec<usize>, Vec<usize>)],
    options: &NnlsOptions,
) -> Result<SubjectFit> {
    let mut out = SubjectFit { weights: Vec::new(), r: Vec::new(), warnings: Vec::new() };
    for (f, train, test) in folds {
        let a: Vec<Vec<f64>> = train.iter().map(|&p| design[p].clone()).collect();
        let b: Vec<f64> = train.iter().map(|&p| observed[p]).collect();
        let fit = nnls_fit(&a, &b, options)?;
        if !fit.converged {
            out.warnings.push(format!(
                "subject '{subject}' fold {f}: NNLS stopped after {} sweeps (KKT violation {:e})",
                fit.iterations, fit.kkt_violation
            ));
        }
        let predicted: Vec<f64> = test
            .iter()
            .map(|&p| design[p].iter().zip(&fit.weights).map(|(x, w)| x * w).sum())
            .collect();
        let held_out: Vec<f64> = test.iter().map(|&p| observed[p]).collect();
        let r = match pearson(&predicted, &held_out) {
            Ok(r) => r,
            Err(Error::ConstantInput) => {
                out.warnings.push(format!(
                    "subject '{subject}' fold {f}: constant prediction or target, r set to 0"
                ));
                0.0
            }
            Err(e) => return Err(e),
        };
        out.weights.push(fit.weights);
        out.r.push(r);
    }
    Ok(out)
}

/// Fits and scores one weighted-RSA model (all its RDMs as predictors).
/// `significant` is left false; [`wrsa_evaluate_models`] applies FDR.
pub fn wrsa_evaluate(
    model_id: &str,
    model_rdms: &[(String, Rdm)],
    brain: &SubjectRdmStack,
    config: &WrsaConfig,
) -> Result<WrsaResult> {
    if model_rdms.is_empty() {
        return Err(Error::EmptyInput("weighted RSA needs at least one predictor RDM".into()));
    }
    let rdms: Vec<Rdm> = model_rdms.iter().map(|(_, r)| r.clone()).collect();
    let (aligned, brain) = align_many(&rdms, brain).map_err(|e| e.context(format!("model '{model_id}'")))?;
    let n = brain.condition_ids().len();
    if n < 2 * config.n_folds {
        return Err(Error::TooManyFolds { n_conditions: n, n_folds: config.n_folds }
            .context(format!("weighted RSA needs at least 2 conditions per fold ({n} conditions)")));
    }
    let folds = condition_folds(n, config.n_folds, config.seed)?;

    let mut warnings = Vec::new();
    let mut evaluated = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        if fold.len() < 3 {
            warnings.push(format!("fold {f} skipped: {} test conditions (< 3)", fold.len()));
            continue;
        }
        let (train, test) = fold_pairs(n, fold);
        evaluated.push((f, train, test));
    }
    if evaluated.is_empty() {
        return Err(Error::TestFoldTooSmall);
    }

    let predictor_uppers: Vec<Vec<f64>> = aligned.iter().map(flatten_upper).collect();
    let n_pairs = n * (n - 1) / 2;
    let design: Vec<Vec<f64>> = (0..n_pairs).map(|p| predictor_uppers.iter().map(|u| u[p]).collect()).collect();
    let options = config.nnls_options();

    let fits = brain
        .subjects()
        .par_iter()
        .zip(brain.rdms().par_iter())
        .map(|(s, rdm)| fit_subject(s, &design, &flatten_upper(rdm), &evaluated, &options))
        .collect::<Result<Vec<_>>>()?;

    let per_subject_r: Vec<f64> = fits.iter().map(|f| mean(&f.r)).collect();
    let per_subject_score: Vec<f64> = per_subject_r.iter().map(|&r| signed_square(r)).collect();
    let n_subjects = per_subject_score.len();
    let (sem_value, p_value, ceiling) = if n_subjects >= 2 {
        let stream = derive_seed(config.seed, stream_id(&[model_id, "wrsa"]));
        let scheme = match config.permutation {
            Some(p) => PermutationScheme { seed: stream, ..p },
            None => PermutationScheme::auto(n_subjects, stream),
        };
        (
            Some(sem(&per_subject_score)?),
            Some(sign_flip_test(&per_subject_score, Alternative::Greater, &scheme)?),
            Some(noise_ceiling(&brain)?),
        )
    } else {
        (None, None, None)
    };
    for f in &fits {
        warnings.extend(f.warnings.iter().cloned());
    }

    Ok(WrsaResult {
        model_id: model_id.to_string(),
        roi_name: brain.roi_name().to_string(),
        subjects: brain.subjects().to_vec(),
        predictor_names: model_rdms.iter().map(|(n, _)| n.clone()).collect(),
        condition_ids: brain.condition_ids().to_vec(),
        folds,
        evaluated_folds: evaluated.iter().map(|(f, _, _)| *f).collect(),
        weights: fits.iter().map(|f| f.weights.clone()).collect(),
        per_subject_per_fold_r: fits.iter().map(|f| f.r.clone()).collect(),
        mean_score: mean(&per_subject_score),
        per_subject_r,
        per_subject_score,
        sem: sem_value,
        p_value,
        significant: false,
        noise_ceiling: ceiling,
        warnings,
    })
}

/// Evaluates several models and applies FDR across them.
pub fn wrsa_evaluate_models(
    models: &[(String, Vec<(String, Rdm)>)],
    brain: &SubjectRdmStack,
    config: &WrsaConfig,
) -> Result<Vec<WrsaResult>> {
    let mut results = models
        .iter()
        .map(|(id, layers)| wrsa_evaluate(id, layers, brain, config))
        .collect::<Result<Vec<_>>>()?;
    let tested: Vec<usize> = (0..results.len()).filter(|&i| results[i].p_value.is_some()).collect();
    let p: Vec<f64> = tested.iter().filter_map(|&i| results[i].p_value).collect();
    for (&i, flag) in tested.iter().zip(fdr_bh(&p, config.fdr_q)?) {
        results[i].significant = flag;
    }
    Ok(results)
}
