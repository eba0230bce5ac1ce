//! Shapley-value attributions on model log-odds and Spearman feature ranking.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::{average_ranks, ln_gamma, median, pearson, student_t_two_sided_p, Matrix};

pub const MAX_EXACT_FEATURES: usize = 15;
pub const DEFAULT_EXACT_LIMIT: usize = 12;
pub const DEFAULT_MC_SAMPLES: usize = 2048;
const PROB_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("exact Shapley enumeration supports at most {MAX_EXACT_FEATURES} features, got {0}")]
    TooManyFeaturesForExact(usize),
    #[error("model returned a non-probability value {0}")]
    DegenerateProbability(f64),
    #[error("instance has {instance} features, background has {background}")]
    ShapeMismatch { instance: usize, background: usize },
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("Monte Carlo estimation needs at least 2 permutations")]
    TooFewPermutations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapMethod {
    Exact,
    /// Antithetic permutation sampling; `n_samples` permutations in total.
    PermutationMc { n_samples: usize, seed: u64 },
}

impl ShapMethod {
    /// Exact enumeration up to 12 features, 2048 sampled permutations beyond.
    pub fn default_for(n_features: usize, seed: u64) -> Self {
        if n_features <= DEFAULT_EXACT_LIMIT {
            Self::Exact
        } else {
            Self::PermutationMc {
                n_samples: DEFAULT_MC_SAMPLES,
                seed,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapResult {
    pub values: Vec<f64>,
    /// f(empty set): log-odds with every feature at its background median.
    pub base_value: f64,
    /// f(all features).
    pub full_value: f64,
    /// Standard error per feature (sampled method only).
    pub std_errors: Option<Vec<f64>>,
    pub method: ShapMethod,
}

/// Column medians used to stand in for absent features.
pub fn background_medians(background: &Matrix) -> Vec<f64> {
    (0..background.cols()).map(|j| median(&background.column(j))).collect()
}

fn log_odds(p: f64) -> Result<f64, ExplainError> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(ExplainError::DegenerateProbability(p));
    }
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    Ok(libm::log(p / (1.0 - p)))
}

/// Shapley values of `x` under `model`, which maps a full feature vector to
/// a probability. Features outside a coalition take their background median.
pub fn shap_values<F>(model: F, x: &[f64], background: &Matrix, method: ShapMethod) -> Result<ShapResult, ExplainError>
where
    F: Fn(&[f64]) -> f64,
{
    if background.cols() != x.len() {
        return Err(ExplainError::ShapeMismatch {
            instance: x.len(),
            background: background.cols(),
        });
    }
    let reference = background_medians(background);
    shap_values_with_reference(model, x, &reference, method)
}

pub fn shap_values_with_reference<F>(
    model: F,
    x: &[f64],
    reference: &[f64],
    method: ShapMethod,
) -> Result<ShapResult, ExplainError>
where
    F: Fn(&[f64]) -> f64,
{
    if reference.len() != x.len() {
        return Err(ExplainError::ShapeMismatch {
            instance: x.len(),
            background: reference.len(),
        });
    }
    match method {
        ShapMethod::Exact => exact(&model, x, reference),
        ShapMethod::PermutationMc { n_samples, seed } => permutation_mc(&model, x, reference, n_samples, seed),
    }
}

fn exact<F: Fn(&[f64]) -> f64>(model: &F, x: &[f64], reference: &[f64]) -> Result<ShapResult, ExplainError> {
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeaturesForExact(d));
    }
    let n_masks = 1usize << d;
    let mut f = vec![0.0; n_masks];
    let mut z = reference.to_vec();
    for (mask, slot) in f.iter_mut().enumerate() {
        for i in 0..d {
            z[i] = if mask & (1 << i) != 0 { x[i] } else { reference[i] };
        }
        *slot = log_odds(model(&z))?;
    }
    // w(s) = s! (d - s - 1)! / d!
    let ln_d_fact = ln_gamma(d as f64 + 1.0);
    let weights: Vec<f64> = (0..d)
        .map(|s| libm::exp(ln_gamma(s as f64 + 1.0) + ln_gamma((d - s) as f64) - ln_d_fact))
        .collect();
    let mut values = vec![0.0; d];
    for mask in 0..n_masks {
        let size = mask.count_ones() as usize;
        for (i, phi) in values.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                *phi += weights[size] * (f[mask | (1 << i)] - f[mask]);
            }
        }
    }
    Ok(ShapResult {
        values,
        base_value: f[0],
        full_value: f[n_masks - 1],
        std_errors: None,
        method: ShapMethod::Exact,
    })
}

fn permutation_mc<F: Fn(&[f64]) -> f64>(
    model: &F,
    x: &[f64],
    reference: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<ShapResult, ExplainError> {
    if n_samples < 2 {
        return Err(ExplainError::TooFewPermutations);
    }
    let d = x.len();
    let base_value = log_odds(model(reference))?;
    let full_value = log_odds(model(x))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = n_samples / 2;
    let mut order: Vec<usize> = (0..d).collect();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut forward = vec![0.0; d];
    let mut backward = vec![0.0; d];
    let walk = |order: &mut dyn Iterator<Item = usize>, out: &mut [f64]| -> Result<(), ExplainError> {
        let mut z = reference.to_vec();
        let mut prev = base_value;
        for i in order {
            z[i] = x[i];
            let cur = log_odds(model(&z))?;
            out[i] = cur - prev;
            prev = cur;
        }
        Ok(())
    };
    for _ in 0..pairs {
        order.shuffle(&mut rng);
        walk(&mut order.iter().copied(), &mut forward)?;
        walk(&mut order.iter().rev().copied(), &mut backward)?;
        for i in 0..d {
            let s = 0.5 * (forward[i] + backward[i]);
            sum[i] += s;
            sum_sq[i] += s * s;
        }
    }
    let n = pairs as f64;
    let values: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_errors = sum_sq
        .iter()
        .zip(&values)
        .map(|(sq, m)| {
            let var = if pairs > 1 {
                ((sq - n * m * m) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            libm::sqrt(var / n)
        })
        .collect();
    Ok(ShapResult {
        values,
        base_value,
        full_value,
        std_errors: Some(std_errors),
        method: ShapMethod::PermutationMc { n_samples, seed },
    })
}

/// Features ordered by mean |phi| over instances, descending; ties by index.
pub fn global_importance(results: &[ShapResult]) -> Vec<(usize, f64)> {
    let d = results.first().map_or(0, |r| r.values.len());
    let n = results.len().max(1) as f64;
    let mut imp: Vec<(usize, f64)> = (0..d)
        .map(|i| (i, results.iter().map(|r| r.values[i].abs()).sum::<f64>() / n))
        .collect();
    imp.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    imp
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCorrelation {
    pub name: String,
    pub rho: f64,
    pub p_value: f64,
    /// Constant feature (or labels): rho fixed to 0 and p to 1.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRanking {
    /// Sorted by |rho| descending, ties by feature name.
    pub entries: Vec<FeatureCorrelation>,
}

/// Spearman rank correlation with average-rank ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Two-sided p-value from the t approximation with n - 2 degrees of freedom.
pub fn spearman_p_value(rho: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let t = rho * libm::sqrt(df / (1.0 - rho * rho));
    student_t_two_sided_p(t, df)
}

pub fn spearman_rank(names: &[String], x: &Matrix, labels: &[u8]) -> Result<CorrelationRanking, ExplainError> {
    let n = x.rows();
    if n < 3 {
        return Err(ExplainError::TooFewSamples(n));
    }
    if names.len() != x.cols() || labels.len() != n {
        return Err(ExplainError::ShapeMismatch {
            instance: names.len(),
            background: x.cols(),
        });
    }
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let mut entries: Vec<FeatureCorrelation> = names
        .iter()
        .enumerate()
        .map(|(j, name)| match spearman(&x.column(j), &y) {
            Some(rho) => FeatureCorrelation {
                name: name.clone(),
                rho,
                p_value: spearman_p_value(rho, n),
                constant: false,
            },
            None => FeatureCorrelation {
                name: name.clone(),
                rho: 0.0,
                p_value: 1.0,
                constant: true,
            },
        })
        .collect();
    entries.sort_by(|a, b| b.rho.abs().total_cmp(&a.rho.abs()).then_with(|| a.name.cmp(&b.name)));
    Ok(CorrelationRanking { entries })
}
