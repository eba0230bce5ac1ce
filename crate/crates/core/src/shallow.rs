//! Standardization, PCA and kernel SVM/SVR for the statistical-feature
//! systems.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::eval::Task;
use crate::eval::{binary_label, Confusion};
use crate::math::{median, symmetric_eigen, Matrix};

pub const DEFAULT_COMPONENTS: usize = 5;
pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShallowError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("solver did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("need at least {needed} rows, got {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("grid search needs at least 2 folds and a non-empty grid")]
    BadGrid,
    #[error("every grid cell failed to fit")]
    NoViableCell,
}

/// Participants by named features. Missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureMatrix {
    names: Vec<String>,
    data: Matrix,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, data: Matrix) -> Result<Self, ShallowError> {
        if names.len() != data.cols() {
            return Err(ShallowError::ShapeMismatch("names vs columns"));
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(ShallowError::DuplicateFeature(n.clone()));
            }
        }
        Ok(Self { names, data })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn select(&self, names: &[&str]) -> Result<Self, ShallowError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| ShallowError::UnknownFeature((*n).into()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            names: names.iter().map(|&n| n.into()).collect(),
            data: select_columns(&self.data, &idx),
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            data: select_rows(&self.data, rows),
        }
    }
}

pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), m.cols());
    for (o, &r) in rows.iter().enumerate() {
        out.row_mut(o).copy_from_slice(m.row(r));
    }
    out
}

fn select_columns(m: &Matrix, cols: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), cols.len());
    for r in 0..m.rows() {
        for (o, &c) in cols.iter().enumerate() {
            out[(r, o)] = m[(r, c)];
        }
    }
    out
}

/// Median imputation followed by z-scoring, both fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let d = x.cols();
        let mut medians = vec![0.0; d];
        let mut means = vec![0.0; d];
        let mut stds = vec![1.0; d];
        for j in 0..d {
            let present: Vec<f64> = x.column(j).into_iter().filter(|v| v.is_finite()).collect();
            medians[j] = if present.is_empty() { 0.0 } else { median(&present) };
            let col: Vec<f64> = x
                .column(j)
                .into_iter()
                .map(|v| if v.is_finite() { v } else { medians[j] })
                .collect();
            let n = col.len().max(1) as f64;
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            means[j] = m;
            if var > 0.0 {
                stds[j] = libm::sqrt(var);
            }
        }
        Self { medians, means, stds }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                let filled = if v.is_finite() { *v } else { self.medians[j] };
                *v = (filled - self.means[j]) / self.stds[j];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One component per row (k x D), orthonormal.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    /// Fewer components than requested had non-zero variance.
    pub rank_deficient: bool,
}

/// Principal components of the sample covariance. Each component's
/// largest-magnitude coordinate is made positive.
pub fn fit_pca(x: &Matrix, n_components: usize) -> Result<PcaModel, ShallowError> {
    let (n, d) = (x.rows(), x.cols());
    if n < n_components.max(2) {
        return Err(ShallowError::TooFewRows {
            needed: n_components.max(2),
            have: n,
        });
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let mut centred = x.clone();
    for r in 0..n {
        for (v, m) in centred.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = centred.t_matmul(&centred);
    for v in cov.as_mut_slice() {
        *v /= (n - 1) as f64;
    }
    let (values, vectors) = symmetric_eigen(&cov);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = top * 1e-12;
    let wanted = n_components.min(d);
    let k = values.iter().take(wanted).filter(|&&v| v > cutoff).count();
    let mut components = Matrix::zeros(k, d);
    for c in 0..k {
        let mut v = vectors.column(c);
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        components.row_mut(c).copy_from_slice(&v);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: values[..k].to_vec(),
        rank_deficient: k < n_components,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut centred = x.clone();
        for r in 0..centred.rows() {
            for (v, m) in centred.row_mut(r).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        centred.matmul_t(&self.components)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => crate::math::dot(a, b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                libm::exp(-gamma * d2)
            }
        }
    }
}

/// Kernel choice before data is seen; `RbfAuto` resolves to 1 / (D Var(Z)).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: Option<f64> },
}

impl KernelSpec {
    pub fn resolve(&self, z: &Matrix) -> Kernel {
        match *self {
            KernelSpec::Linear => Kernel::Linear,
            KernelSpec::Rbf { gamma: Some(g) } => Kernel::Rbf { gamma: g },
            KernelSpec::Rbf { gamma: None } => Kernel::Rbf {
                gamma: auto_gamma(z),
            },
        }
    }
}

/// 1 / (D * variance of all entries), or 1 / D when the variance is zero.
pub fn auto_gamma(z: &Matrix) -> f64 {
    let d = z.cols().max(1) as f64;
    let vals = z.as_slice();
    let n = vals.len().max(1) as f64;
    let m = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d * var)
    } else {
        1.0 / d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SvmVariant {
    Classifier,
    EpsilonRegressor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl SvmParams {
    pub fn new(kernel: Kernel, c: f64) -> Self {
        Self {
            kernel,
            c,
            epsilon: DEFAULT_EPSILON,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// P(y = 1 | f) = 1 / (1 + exp(a f + b)).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn probability(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        if z >= 0.0 {
            let e = libm::exp(-z);
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + libm::exp(z))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvmModel {
    pub variant: SvmVariant,
    pub params: SvmParams,
    pub support_vectors: Matrix,
    /// y_i alpha_i for classifiers, alpha_i - alpha*_i for regressors.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub platt: Option<PlattScaling>,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    /// Dual objective in maximization form.
    pub dual_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    /// Calibrated P(NCD) for classifiers; None for regressors.
    pub probability: Option<f64>,
}

impl SvmModel {
    pub fn decision(&self, z: &[f64]) -> f64 {
        let mut s = self.bias;
        for (i, c) in self.dual_coef.iter().enumerate() {
            s += c * self.params.kernel.eval(self.support_vectors.row(i), z);
        }
        s
    }

    pub fn predict(&self, z: &[f64]) -> Prediction {
        let score = self.decision(z);
        Prediction {
            score,
            probability: self.platt.map(|p| p.probability(score)),
        }
    }
}

/// Result of the generic SMO solver for
/// min 0.5 a'Qa + p'a  s.t.  y'a = const, 0 <= a <= c.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub gap: f64,
    pub objective: f64,
}

/// Sequential minimal optimization with second-order working-set selection.
pub fn smo_solve(
    q: &Matrix,
    p: &[f64],
    y: &[f64],
    c: f64,
    alpha0: Vec<f64>,
    tolerance: f64,
    max_iter: usize,
) -> Result<SmoSolution, ShallowError> {
    let n = p.len();
    let mut alpha = alpha0;
    let mut g: Vec<f64> = p.to_vec();
    for i in 0..n {
        if alpha[i] != 0.0 {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += q[(i, k)] * alpha[i];
            }
        }
    }
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let mut iterations = 0;
    let gap = loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * g[t] > gmax {
                gmax = -y[t] * g[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = y[t] * g[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let b = gmax + v;
            if b > 0.0 && i != usize::MAX {
                let mut a = q[(i, i)] + q[(t, t)] - 2.0 * y[i] * y[t] * q[(i, t)];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < obj_min {
                    obj_min = obj;
                    j = t;
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < tolerance || j == usize::MAX || i == usize::MAX {
            break gap.max(0.0);
        }
        if iterations >= max_iter {
            return Err(ShallowError::NonConvergence(max_iter));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q[(i, i)] + q[(j, j)] + 2.0 * q[(i, j)];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q[(i, i)] + q[(j, j)] - 2.0 * q[(i, j)];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += q[(i, k)] * di + q[(j, k)] * dj;
        }
    };

    let mut free_sum = 0.0;
    let mut n_free = 0;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = alpha.iter().zip(g.iter().zip(p)).map(|(a, (gi, pi))| a * (gi + pi)).sum::<f64>() / 2.0;
    Ok(SmoSolution {
        alpha,
        rho,
        iterations,
        gap,
        objective,
    })
}

pub fn kernel_matrix(kernel: &Kernel, z: &Matrix) -> Matrix {
    let n = z.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(z.row(i), z.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Soft-margin classifier; labels are 0/1 with 1 the positive class.
pub fn fit_svc(z: &Matrix, labels: &[u8], params: SvmParams) -> Result<SvmModel, ShallowError> {
    let n = z.rows();
    if labels.len() != n {
        return Err(ShallowError::ShapeMismatch("labels vs rows"));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(ShallowError::SingleClass);
    }
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let k = kernel_matrix(&params.kernel, z);
    let mut q = k.clone();
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] *= y[i] * y[j];
        }
    }
    let sol = smo_solve(&q, &vec![-1.0; n], &y, params.c, vec![0.0; n], params.tolerance, params.max_iter)?;
    let coef: Vec<f64> = sol.alpha.iter().zip(&y).map(|(a, yi)| a * yi).collect();
    let mut model = assemble(SvmVariant::Classifier, params, z, &coef, -sol.rho, &sol);
    let scores: Vec<f64> = (0..n).map(|i| model.decision(z.row(i))).collect();
    model.platt = Some(fit_platt(&scores, labels));
    Ok(model)
}

/// Epsilon-insensitive regression on targets (already normalized).
pub fn fit_svr(z: &Matrix, targets: &[f64], params: SvmParams) -> Result<SvmModel, ShallowError> {
    let n = z.rows();
    if targets.len() != n {
        return Err(ShallowError::ShapeMismatch("targets vs rows"));
    }
    let k = kernel_matrix(&params.kernel, z);
    let mut q = Matrix::zeros(2 * n, 2 * n);
    let mut y = vec![1.0; 2 * n];
    let mut p = vec![0.0; 2 * n];
    for i in 0..n {
        y[i + n] = -1.0;
        p[i] = params.epsilon - targets[i];
        p[i + n] = params.epsilon + targets[i];
    }
    for i in 0..2 * n {
        for j in 0..2 * n {
            q[(i, j)] = y[i] * y[j] * k[(i % n, j % n)];
        }
    }
    let sol = smo_solve(&q, &p, &y, params.c, vec![0.0; 2 * n], params.tolerance, params.max_iter)?;
    let coef: Vec<f64> = (0..n).map(|i| sol.alpha[i] - sol.alpha[i + n]).collect();
    Ok(assemble(SvmVariant::EpsilonRegressor, params, z, &coef, -sol.rho, &sol))
}

fn assemble(variant: SvmVariant, params: SvmParams, z: &Matrix, coef: &[f64], bias: f64, sol: &SmoSolution) -> SvmModel {
    let keep: Vec<usize> = (0..coef.len()).filter(|&i| coef[i] != 0.0).collect();
    SvmModel {
        variant,
        params,
        support_vectors: select_rows(z, &keep),
        dual_coef: keep.iter().map(|&i| coef[i]).collect(),
        bias,
        platt: None,
        iterations: sol.iterations,
        kkt_gap: sol.gap,
        dual_objective: -sol.objective,
    }
}

/// Logistic calibration of decision values with Newton iterations and
/// smoothed targets.
pub fn fit_platt(scores: &[f64], labels: &[u8]) -> PlattScaling {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = labels.iter().map(|&l| if l == 1 { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&t)
            .map(|(f, ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + libm::log1p(libm::exp(-z))
                } else {
                    (ti - 1.0) * z + libm::log1p(libm::exp(z))
                }
            })
            .sum()
    };
    let sigma = 1e-12;
    let mut a = 0.0;
    let mut b = libm::log((n_neg + 1.0) / (n_pos + 1.0));
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (f, ti) in scores.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = libm::exp(-z);
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = libm::exp(z);
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    PlattScaling { a, b }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShallowConfig {
    pub task: Task,
    /// 0 disables PCA.
    pub n_components: usize,
    pub kernel: KernelSpec,
    pub c: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for ShallowConfig {
    fn default() -> Self {
        Self {
            task: Task::Classify,
            n_components: DEFAULT_COMPONENTS,
            kernel: KernelSpec::Rbf { gamma: None },
            c: DEFAULT_C,
            epsilon: DEFAULT_EPSILON,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Standardizer, optional PCA and SVM fitted together on one training split.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShallowModel {
    pub scaler: Standardizer,
    pub pca: Option<PcaModel>,
    pub svm: SvmModel,
}

impl ShallowModel {
    /// `labels` are severity grades 0..=4; classification uses grade >= 2.
    pub fn fit(x: &Matrix, labels: &[u8], config: &ShallowConfig) -> Result<Self, ShallowError> {
        let scaler = Standardizer::fit(x);
        let zs = scaler.transform(x);
        let pca = if config.n_components > 0 {
            Some(fit_pca(&zs, config.n_components)?)
        } else {
            None
        };
        let z = match &pca {
            Some(p) => p.transform(&zs),
            None => zs,
        };
        let mut params = SvmParams::new(config.kernel.resolve(&z), config.c);
        params.epsilon = config.epsilon;
        params.tolerance = config.tolerance;
        params.max_iter = config.max_iter;
        let svm = match config.task {
            Task::Classify => {
                let binary: Vec<u8> = labels.iter().map(|&l| binary_label(l)).collect();
                fit_svc(&z, &binary, params)?
            }
            Task::Regress => {
                let t: Vec<f64> = labels.iter().map(|&l| crate::eval::normalize_label(l)).collect();
                fit_svr(&z, &t, params)?
            }
        };
        Ok(Self { scaler, pca, svm })
    }

    /// Maps raw feature rows into the SVM input space.
    pub fn embed(&self, x: &Matrix) -> Matrix {
        let zs = self.scaler.transform(x);
        match &self.pca {
            Some(p) => p.transform(&zs),
            None => zs,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<Prediction> {
        let z = self.embed(x);
        (0..z.rows()).map(|i| self.svm.predict(z.row(i))).collect()
    }

    /// P(NCD) for one raw feature row (classifiers only; regressors clamp
    /// their score to [0, 1]).
    pub fn probability(&self, row: &[f64]) -> f64 {
        let m = Matrix::from_vec(1, row.len(), row.to_vec());
        let p = self.predict(&m)[0];
        p.probability.unwrap_or(p.score.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridCell {
    pub kernel: KernelSpec,
    pub c: f64,
    pub n_components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: GridCell,
    pub best_f1: f64,
    /// Mean fold F1 per cell, in grid order; None if the cell failed.
    pub scores: Vec<Option<f64>>,
}

/// Fold assignment stratified by label: each class is shuffled and dealt
/// round-robin.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| binary_label(labels[i]) == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Mean F1 over `k` stratified folds for one configuration.
pub fn cross_validate_f1(x: &Matrix, labels: &[u8], config: &ShallowConfig, k: usize, seed: u64) -> Result<f64, ShallowError> {
    let folds = stratified_folds(labels, k, seed);
    let mut total = 0.0;
    for f in 0..k {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == f).collect();
        let ytr: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        let model = ShallowModel::fit(&select_rows(x, &train), &ytr, config)?;
        let probs: Vec<f64> = model
            .predict(&select_rows(x, &test))
            .iter()
            .map(|p| p.probability.unwrap_or(p.score))
            .collect();
        let yte: Vec<u8> = test.iter().map(|&i| binary_label(labels[i])).collect();
        total += Confusion::from_scores(&probs, &yte, crate::eval::DEFAULT_THRESHOLD).f1();
    }
    Ok(total / k as f64)
}

/// Cross-validated F1-maximizing cell; ties go to smaller C, then fewer
/// components, then grid order.
pub fn grid_search(
    x: &Matrix,
    labels: &[u8],
    grid: &[GridCell],
    base: &ShallowConfig,
    folds: usize,
    seed: u64,
) -> Result<GridResult, ShallowError> {
    if folds < 2 || grid.is_empty() {
        return Err(ShallowError::BadGrid);
    }
    let scores: Vec<Option<f64>> = grid
        .iter()
        .map(|cell| {
            let cfg = ShallowConfig {
                kernel: cell.kernel,
                c: cell.c,
                n_components: cell.n_components,
                ..*base
            };
            cross_validate_f1(x, labels, &cfg, folds, seed).ok().filter(|s| s.is_finite())
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = *s else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let (bs, bc) = (scores[b].unwrap(), &grid[b]);
                s > bs || (s == bs && (grid[i].c, grid[i].n_components) < (bc.c, bc.n_components))
            }
        };
        if better {
            best = Some(i);
        }
    }
    let b = best.ok_or(ShallowError::NoViableCell)?;
    Ok(GridResult {
        best: grid[b],
        best_f1: scores[b].unwrap(),
        scores,
    })
}
