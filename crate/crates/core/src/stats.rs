//! Correlation, permutation and multiple-comparison primitives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest subject count for which exact enumeration is permitted.
pub const EXACT_MAX_SUBJECTS: usize = 20;
/// Largest subject count for which [`PermutationScheme::auto`] chooses exact enumeration.
pub const AUTO_EXACT_MAX_SUBJECTS: usize = 12;
pub const DEFAULT_MONTE_CARLO_SAMPLES: usize = 10_000;
pub const MIN_MONTE_CARLO_SAMPLES: usize = 1_000;

/// Relative slack when comparing a permuted statistic with the observed one.
/// Absorbs summation rounding between assignments that tie mathematically.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationScheme {
    pub mode: PermutationMode,
    /// Number of random assignments in Monte-Carlo mode; ignored when exact.
    pub n_samples: usize,
    pub seed: u64,
}

impl PermutationScheme {
    pub fn exact() -> Self {
        PermutationScheme { mode: PermutationMode::Exact, n_samples: 0, seed: 0 }
    }

    pub fn monte_carlo(n_samples: usize, seed: u64) -> Self {
        PermutationScheme { mode: PermutationMode::MonteCarlo, n_samples, seed }
    }

    /// Exact for up to 12 subjects, otherwise 10,000 Monte-Carlo samples.
    pub fn auto(n_subjects: usize, seed: u64) -> Self {
        if n_subjects <= AUTO_EXACT_MAX_SUBJECTS {
            PermutationScheme { seed, ..PermutationScheme::exact() }
        } else {
            PermutationScheme::monte_carlo(DEFAULT_MONTE_CARLO_SAMPLES, seed)
        }
    }

    fn check(&self, n_subjects: usize) -> Result<()> {
        match self.mode {
            PermutationMode::Exact if n_subjects > EXACT_MAX_SUBJECTS => Err(Error::InvalidParameter(format!(
                "exact permutation needs at most {EXACT_MAX_SUBJECTS} subjects, got {n_subjects}"
            ))),
            PermutationMode::MonteCarlo if self.n_samples < MIN_MONTE_CARLO_SAMPLES => {
                Err(Error::InvalidParameter(format!(
                    "Monte-Carlo permutation needs at least {MIN_MONTE_CARLO_SAMPLES} samples, got {}",
                    self.n_samples
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Greater,
    TwoSided,
}

fn check_lengths(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min {
        return Err(Error::TooFewSubjects { needed: min, got: a.len() });
    }
    Ok(())
}

/// Product-moment correlation, two-pass (centre first, then accumulate).
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b, 2)?;
    pearson_unchecked(a, b).ok_or(Error::ConstantInput)
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    // sqrt of the product keeps self-correlation at exactly 1
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Fractional ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, mean = (start + 1 + end) / 2
        let rank = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson on average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b, 3)?;
    spearman_ranked(&average_ranks(a), &average_ranks(b))
}

/// Spearman on inputs that are already ranked with [`average_ranks`].
pub fn spearman_ranked(rank_a: &[f64], rank_b: &[f64]) -> Result<f64> {
    check_lengths(rank_a, rank_b, 3)?;
    pearson_unchecked(rank_a, rank_b).ok_or(Error::AllTied)
}

/// `sign(r) * r^2`
pub fn signed_square(r: f64) -> f64 {
    r * r.abs()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean with the `n - 1` sample deviation.
pub fn sem(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewSubjects { needed: 2, got: values.len() });
    }
    let n = values.len() as f64;
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (n - 1.0)).sqrt() / n.sqrt())
}

/// Sum of `values` with element `i` negated wherever `negate(i)` is true.
fn flipped_sum(values: &[f64], mut negate: impl FnMut(usize) -> bool) -> f64 {
    let mut s = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if negate(i) {
            s -= v;
        } else {
            s += v;
        }
    }
    s
}

/// Whether a permuted statistic is at least as extreme as the observed one.
///
/// Comparisons use sums rather than means (same ordering) with a tolerance
/// of `1e-12 * sum(|values|)`.
pub fn at_least_as_extreme(permuted: f64, observed: f64, scale: f64, alternative: Alternative) -> bool {
    let slack = TIE_TOLERANCE * scale;
    match alternative {
        Alternative::Greater => permuted >= observed - slack,
        Alternative::TwoSided => permuted.abs() >= observed.abs() - slack,
    }
}

/// Sign-flip permutation test on the mean of per-subject values.
///
/// The identity assignment always counts, so `p > 0`. Exact mode enumerates
/// all `2^n` assignments; Monte-Carlo mode draws `n_samples` assignments
/// from a ChaCha8 stream seeded with `scheme.seed` and adds the identity to
/// numerator and denominator.
pub fn sign_flip_test(values: &[f64], alternative: Alternative, scheme: &PermutationScheme) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewSubjects { needed: 2, got: n });
    }
    scheme.check(n)?;
    let scale: f64 = values.iter().map(|v| v.abs()).sum();
    let observed = flipped_sum(values, |_| false);
    match scheme.mode {
        PermutationMode::Exact => {
            let total: u64 = 1 << n;
            let mut hits: u64 = 0;
            for mask in 0..total {
                let s = flipped_sum(values, |i| mask >> i & 1 == 1);
                if at_least_as_extreme(s, observed, scale, alternative) {
                    hits += 1;
                }
            }
            Ok(hits as f64 / total as f64)
        }
        PermutationMode::MonteCarlo => {
            let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
            let mut hits: u64 = 1;
            for _ in 0..scheme.n_samples {
                let s = flipped_sum(values, |_| rng.random::<bool>());
                if at_least_as_extreme(s, observed, scale, alternative) {
                    hits += 1;
                }
            }
            Ok(hits as f64 / (scheme.n_samples as f64 + 1.0))
        }
    }
}

/// Two-sided sign-flip test on paired differences `a - b`.
pub fn paired_difference_test(a: &[f64], b: &[f64], scheme: &PermutationScheme) -> Result<f64> {
    check_lengths(a, b, 2)?;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    sign_flip_test(&diff, Alternative::TwoSided, scheme)
}

/// Benjamini-Hochberg step-up. Returns rejection flags in input order.
pub fn fdr_bh(p_values: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("FDR level q must be in (0, 1), got {q}")));
    }
    if let Some(&bad) = p_values.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::InvalidP(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut k = 0;
    for (rank, &i) in order.iter().enumerate() {
        if p_values[i] <= (rank + 1) as f64 * q / m as f64 {
            k = rank + 1;
        }
    }
    let mut rejected = vec![false; m];
    for &i in &order[..k] {
        rejected[i] = true;
    }
    Ok(rejected)
}

/// SplitMix64 step; derives independent per-item seeds from one base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
