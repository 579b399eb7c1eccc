//! Classical RSA: layer RDM vs subject RDMs, group statistics, noise ceiling.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{align_conditions, EvaluationResult, NoiseCeiling, Rdm, SubjectRdmStack};
use crate::rdm::{flatten_upper, mean_values};
use crate::stats::{
    average_ranks, derive_seed, fdr_bh, mean, paired_difference_test, sem, sign_flip_test, signed_square,
    spearman, spearman_ranked, Alternative, PermutationScheme,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsaConfig {
    pub fdr_q: f64,
    /// Base seed; each layer derives its own Monte-Carlo stream from it.
    pub seed: u64,
    /// `None` picks [`PermutationScheme::auto`] from the subject count.
    pub permutation: Option<PermutationScheme>,
}

impl Default for RsaConfig {
    fn default() -> Self {
        RsaConfig { fdr_q: 0.05, seed: 0, permutation: None }
    }
}

impl RsaConfig {
    pub(crate) fn scheme_for(&self, n_subjects: usize, stream: u64) -> PermutationScheme {
        let seed = derive_seed(self.seed, stream);
        match self.permutation {
            Some(p) => PermutationScheme { seed, ..p },
            None => PermutationScheme::auto(n_subjects, seed),
        }
    }
}

/// FNV-1a; gives each (model, layer) a seed stream that does not depend on
/// how layers are batched.
pub(crate) fn stream_id(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Lower and upper noise ceiling of a subject stack.
///
/// For each subject the lower bound correlates it with the mean of the other
/// subjects and the upper bound with the mean of all subjects. Correlations
/// are averaged over subjects first and then signed-squared. `lower` is
/// capped at `upper`.
pub fn noise_ceiling(brain: &SubjectRdmStack) -> Result<NoiseCeiling> {
    let n = brain.n_subjects();
    if n < 2 {
        return Err(Error::TooFewSubjects { needed: 2, got: n });
    }
    let rdms = brain.rdms();
    let all_mean = upper_of(&mean_values(rdms.iter()));
    let all_ranks = average_ranks(&all_mean);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for (s, rdm) in rdms.iter().enumerate() {
        let own = average_ranks(&flatten_upper(rdm));
        let others = rdms.iter().enumerate().filter(|&(k, _)| k != s).map(|(_, r)| r);
        let others_mean = upper_of(&mean_values(others));
        lower.push(spearman_ranked(&own, &average_ranks(&others_mean))?);
        upper.push(spearman_ranked(&own, &all_ranks)?);
    }
    let upper = signed_square(mean(&upper));
    let lower = signed_square(mean(&lower)).min(upper);
    Ok(NoiseCeiling { lower, upper })
}

fn upper_of(values: &ndarray::Array2<f64>) -> Vec<f64> {
    let n = values.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(values[[i, j]]);
        }
    }
    out
}

/// Scores one layer against every subject. `significant` is left false;
/// [`apply_fdr`] sets it across a whole report.
pub fn score_layer(
    model_id: &str,
    layer_name: &str,
    model_rdm: &Rdm,
    brain: &SubjectRdmStack,
    config: &RsaConfig,
) -> Result<EvaluationResult> {
    let (model, brain) = align_conditions(model_rdm, brain)?;
    let ceiling = if brain.n_subjects() >= 2 { Some(noise_ceiling(&brain)?) } else { None };
    score_aligned(model_id, layer_name, &model, &brain, ceiling, config)
}

fn score_aligned(
    model_id: &str,
    layer_name: &str,
    model: &Rdm,
    brain: &SubjectRdmStack,
    noise_ceiling: Option<NoiseCeiling>,
    config: &RsaConfig,
) -> Result<EvaluationResult> {
    let model_ranks = average_ranks(&flatten_upper(model));
    let per_subject_rho = brain
        .rdms()
        .iter()
        .map(|r| spearman_ranked(&model_ranks, &average_ranks(&flatten_upper(r))))
        .collect::<Result<Vec<f64>>>()
        .map_err(|e| e.context(format!("layer '{layer_name}'")))?;
    let per_subject_score: Vec<f64> = per_subject_rho.iter().map(|&r| signed_square(r)).collect();
    let n = per_subject_score.len();
    let (sem_value, p_value) = if n >= 2 {
        let scheme = config.scheme_for(n, stream_id(&[model_id, layer_name]));
        (
            Some(sem(&per_subject_score)?),
            Some(sign_flip_test(&per_subject_score, Alternative::Greater, &scheme)?),
        )
    } else {
        (None, None)
    };
    Ok(EvaluationResult {
        model_id: model_id.to_string(),
        layer_name: layer_name.to_string(),
        roi_name: brain.roi_name().to_string(),
        subjects: brain.subjects().to_vec(),
        mean_score: mean(&per_subject_score),
        per_subject_rho,
        per_subject_score,
        sem: sem_value,
        p_value,
        significant: false,
        noise_ceiling,
    })
}

/// Benjamini-Hochberg over every result that carries a p-value.
pub fn apply_fdr(results: &mut [EvaluationResult], q: f64) -> Result<()> {
    let tested: Vec<usize> = (0..results.len()).filter(|&i| results[i].p_value.is_some()).collect();
    let p: Vec<f64> = tested.iter().filter_map(|&i| results[i].p_value).collect();
    let flags = fdr_bh(&p, q)?;
    for r in results.iter_mut() {
        r.significant = false;
    }
    for (&i, flag) in tested.iter().zip(flags) {
        results[i].significant = flag;
    }
    Ok(())
}

/// A named model and its per-layer RDMs.
pub type ModelRdms = (String, Vec<(String, Rdm)>);

/// Evaluates every layer of every model against one brain stack. FDR is
/// applied across all returned results.
pub fn rsa_evaluate_models(
    models: &[ModelRdms],
    brain: &SubjectRdmStack,
    config: &RsaConfig,
) -> Result<Vec<EvaluationResult>> {
    if models.iter().all(|(_, layers)| layers.is_empty()) {
        return Err(Error::EmptyInput("no model layers to evaluate".into()));
    }
    // align each layer; layers sharing a condition set share one ceiling
    let mut aligned = Vec::new();
    let mut ceilings: HashMap<Vec<String>, Option<NoiseCeiling>> = HashMap::new();
    for (model_id, layers) in models {
        for (layer_name, rdm) in layers {
            let (m, b) = align_conditions(rdm, brain)
                .map_err(|e| e.context(format!("model '{model_id}' layer '{layer_name}'")))?;
            if !ceilings.contains_key(b.condition_ids()) {
                let c = if b.n_subjects() >= 2 { Some(noise_ceiling(&b)?) } else { None };
                ceilings.insert(b.condition_ids().to_vec(), c);
            }
            aligned.push((model_id.as_str(), layer_name.as_str(), m, b));
        }
    }
    let mut results = aligned
        .par_iter()
        .map(|(model_id, layer_name, m, b)| {
            score_aligned(model_id, layer_name, m, b, ceilings[b.condition_ids()], config)
        })
        .collect::<Result<Vec<_>>>()?;
    apply_fdr(&mut results, config.fdr_q)?;
    Ok(results)
}

/// Single-model form of [`rsa_evaluate_models`].
pub fn rsa_evaluate(
    model_id: &str,
    model_rdms: &[(String, Rdm)],
    brain: &SubjectRdmStack,
    config: &RsaConfig,
) -> Result<Vec<EvaluationResult>> {
    rsa_evaluate_models(&[(model_id.to_string(), model_rdms.to_vec())], brain, config)
}

/// Two-sided paired sign-flip test on per-subject scores of two results.
pub fn compare_models(a: &EvaluationResult, b: &EvaluationResult, scheme: &PermutationScheme) -> Result<f64> {
    if a.roi_name != b.roi_name || a.subjects != b.subjects {
        return Err(Error::SubjectMismatch);
    }
    paired_difference_test(&a.per_subject_score, &b.per_subject_score, scheme)
}

/// Spearman between two RDMs' upper triangles, after alignment.
pub fn rdm_spearman(a: &Rdm, b: &Rdm) -> Result<f64> {
    spearman(&flatten_upper(a), &flatten_upper(b))
}
