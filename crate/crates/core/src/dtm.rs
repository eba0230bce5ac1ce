//! Dynamic topic model: variational EM over time-sliced narratives, per-slice
//! topic trajectories and the six trajectory statistics.
//!
//! Each topic-word chain is approximated by a Gaussian whose mean comes from
//! Kalman smoothing of variational pseudo-observations. The document side is
//! the usual LDA mean-field family.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::SlicedTranscript;
use crate::math::{digamma, ln_gamma, log_sum_exp, pearson, solve_tridiagonal, std_dev, Matrix};

pub const TOP_WORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DtmError {
    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,
    #[error("slice {slice} has {have} non-empty documents; at least 2 are required")]
    TooFewDocuments { slice: usize, have: usize },
    #[error("document has {got} slices, model expects {expected}")]
    SliceCountMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("topic {topic} or slice {slice} out of range")]
    OutOfRange { topic: usize, slice: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DtmConfig {
    pub n_topics: usize,
    pub n_slices: usize,
    /// Symmetric Dirichlet concentration.
    pub alpha: f64,
    /// Drift variance between adjacent slices.
    pub sigma2: f64,
    /// Prior variance of the first slice.
    pub init_variance: f64,
    /// Variance of the variational pseudo-observations.
    pub obs_variance: f64,
    pub vocab_min_count: usize,
    pub max_em_iters: usize,
    /// Relative ELBO change that ends EM.
    pub elbo_tol: f64,
    pub max_doc_iters: usize,
    pub doc_tol: f64,
    pub max_topic_iters: usize,
    pub seed: u64,
}

impl Default for DtmConfig {
    fn default() -> Self {
        Self {
            n_topics: 5,
            n_slices: 15,
            alpha: 0.01,
            sigma2: 0.005,
            init_variance: 5.0,
            obs_variance: 0.5,
            vocab_min_count: 1,
            max_em_iters: 50,
            elbo_tol: 1e-5,
            max_doc_iters: 100,
            doc_tol: 1e-6,
            max_topic_iters: 30,
            seed: 0,
        }
    }
}

impl DtmConfig {
    pub fn validate(&self) -> Result<(), DtmError> {
        if self.n_topics < 1 {
            return Err(DtmError::InvalidConfig("n_topics must be at least 1"));
        }
        if self.n_slices < 2 {
            return Err(DtmError::InvalidConfig("n_slices must be at least 2"));
        }
        if !(self.alpha > 0.0) {
            return Err(DtmError::InvalidConfig("alpha must be positive"));
        }
        if !(self.sigma2 > 0.0 && self.init_variance > 0.0 && self.obs_variance > 0.0) {
            return Err(DtmError::InvalidConfig("variances must be positive"));
        }
        Ok(())
    }
}

/// Smoothed Gaussian chain for one (topic, word) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPosterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Cov(x_t, x_{t+1}), length T - 1.
    pub lag_cov: Vec<f64>,
}

/// Kalman filter followed by Rauch-Tung-Striebel smoothing of a random walk
/// `x_1 ~ N(0, init_var)`, `x_t ~ N(x_{t-1}, sigma2)` observed with noise
/// `obs_var`.
pub fn kalman_smooth(obs: &[f64], sigma2: f64, init_var: f64, obs_var: f64) -> ChainPosterior {
    let t_len = obs.len();
    let mut fm = vec![0.0; t_len];
    let mut fv = vec![0.0; t_len];
    let mut prev_m = 0.0;
    let mut prev_v = 0.0;
    for t in 0..t_len {
        let r = if t == 0 { init_var } else { prev_v + sigma2 };
        let gain = r / (r + obs_var);
        fm[t] = prev_m + gain * (obs[t] - prev_m);
        fv[t] = (1.0 - gain) * r;
        prev_m = fm[t];
        prev_v = fv[t];
    }
    let mut mean = fm.clone();
    let mut variance = fv.clone();
    let mut lag_cov = vec![0.0; t_len.saturating_sub(1)];
    for t in (0..t_len.saturating_sub(1)).rev() {
        let r = fv[t] + sigma2;
        let j = fv[t] / r;
        mean[t] = fm[t] + j * (mean[t + 1] - fm[t]);
        variance[t] = fv[t] + j * j * (variance[t + 1] - r);
        lag_cov[t] = j * variance[t + 1];
    }
    ChainPosterior {
        mean,
        variance,
        lag_cov,
    }
}

/// Tridiagonal prior precision of the random walk: (diag, off-diagonal).
fn prior_precision(t_len: usize, sigma2: f64, init_var: f64) -> (Vec<f64>, Vec<f64>) {
    let mut diag = vec![2.0 / sigma2; t_len];
    diag[0] = 1.0 / init_var + 1.0 / sigma2;
    diag[t_len - 1] = if t_len == 1 { 1.0 / init_var } else { 1.0 / sigma2 };
    (diag, vec![-1.0 / sigma2; t_len - 1])
}

fn tridiag_mul(diag: &[f64], off: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for t in 0..n {
        let mut v = diag[t] * x[t];
        if t > 0 {
            v += off[t - 1] * x[t - 1];
        }
        if t + 1 < n {
            v += off[t] * x[t + 1];
        }
        out[t] = v;
    }
}

fn tridiag_log_det(diag: &[f64], off: &[f64]) -> f64 {
    let mut d_prev = diag[0];
    let mut total = libm::log(d_prev);
    for t in 1..diag.len() {
        let d = diag[t] - off[t - 1] * off[t - 1] / d_prev;
        total += libm::log(d);
        d_prev = d;
    }
    total
}

/// A document: one participant's slice as sparse in-vocabulary counts.
#[derive(Debug, Clone, PartialEq)]
struct Doc {
    slice: usize,
    words: Vec<(usize, f64)>,
    total: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TopicModelState {
    pub config: DtmConfig,
    pub vocab: Vec<String>,
    index: BTreeMap<String, usize>,
    /// Smoothed natural parameters, K x T x V flattened.
    beta: Vec<f64>,
    /// Posterior chain variance per slice (shared by every chain).
    pub chain_variance: Vec<f64>,
    /// Mean training topic proportions per slice (T x K).
    pub corpus_theta: Matrix,
    /// Variational Dirichlet parameters of the training documents, one T x K
    /// matrix per participant (rows of empty slices stay at alpha).
    pub doc_gamma: Vec<Matrix>,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
}

impl TopicModelState {
    /// Rebuilds a state from stored parameters. `beta` is K x T x V.
    pub fn from_parts(
        config: DtmConfig,
        vocab: Vec<String>,
        beta: Vec<f64>,
        corpus_theta: Matrix,
    ) -> Result<Self, DtmError> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(DtmError::EmptyVocabulary);
        }
        let (k, t) = (config.n_topics, config.n_slices);
        if beta.len() != k * t * vocab.len() || corpus_theta.rows() != t || corpus_theta.cols() != k {
            return Err(DtmError::InvalidConfig("parameter shapes do not match the configuration"));
        }
        let index: BTreeMap<String, usize> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(DtmError::InvalidConfig("duplicate vocabulary entry"));
        }
        let chain_variance =
            kalman_smooth(&vec![0.0; t], config.sigma2, config.init_variance, config.obs_variance).variance;
        Ok(Self {
            config,
            vocab,
            index,
            beta,
            chain_variance,
            corpus_theta,
            doc_gamma: Vec::new(),
            elbo_trace: Vec::new(),
            converged: true,
        })
    }

    pub fn n_topics(&self) -> usize {
        self.config.n_topics
    }

    pub fn n_slices(&self) -> usize {
        self.config.n_slices
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn word_index(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// Natural parameters of topic `k` at slice `t`.
    pub fn beta(&self, k: usize, t: usize) -> &[f64] {
        let v = self.vocab.len();
        let off = (k * self.config.n_slices + t) * v;
        &self.beta[off..off + v]
    }

    pub fn beta_flat(&self) -> &[f64] {
        &self.beta
    }

    /// softmax(beta_{k,t}).
    pub fn word_distribution(&self, k: usize, t: usize) -> Vec<f64> {
        let b = self.beta(k, t);
        let lse = log_sum_exp(b);
        b.iter().map(|x| libm::exp(x - lse)).collect()
    }

    /// Expected log word probabilities under the variational bound.
    fn expected_log_beta(&self) -> Vec<f64> {
        let (k_n, t_n, v) = (self.config.n_topics, self.config.n_slices, self.vocab.len());
        let mut out = vec![0.0; k_n * t_n * v];
        for k in 0..k_n {
            for t in 0..t_n {
                let b = self.beta(k, t);
                let lse = log_sum_exp(b) + self.chain_variance[t] / 2.0;
                let off = (k * t_n + t) * v;
                for (o, x) in out[off..off + v].iter_mut().zip(b) {
                    *o = x - lse;
                }
            }
        }
        out
    }

    /// Top `n` words of topic `k` at slice `t`; ties by vocabulary index.
    pub fn top_words(&self, k: usize, t: usize, n: usize) -> Result<Vec<&str>, DtmError> {
        if k >= self.config.n_topics || t >= self.config.n_slices {
            return Err(DtmError::OutOfRange { topic: k, slice: t });
        }
        let b = self.beta(k, t);
        let mut idx: Vec<usize> = (0..b.len()).collect();
        idx.sort_by(|&a, &c| b[c].total_cmp(&b[a]).then(a.cmp(&c)));
        Ok(idx.into_iter().take(n).map(|i| self.vocab[i].as_str()).collect())
    }

    /// Topic with the largest mean training proportion at slice `t`.
    pub fn dominant_topic(&self, t: usize) -> usize {
        let row = self.corpus_theta.row(t);
        (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
    }
}

struct DocFit {
    elbo: f64,
}

/// Coordinate ascent on one document's (gamma, phi); accumulates expected
/// counts into `stats` (K x V for the document's slice) when given.
fn fit_document(
    doc: &[(usize, f64)],
    elog_beta: &dyn Fn(usize, usize) -> f64,
    alpha: f64,
    gamma: &mut [f64],
    max_iter: usize,
    tol: f64,
    mut stats: Option<&mut [f64]>,
    vocab: usize,
) -> DocFit {
    let k_n = gamma.len();
    let mut phi = vec![0.0; doc.len() * k_n];
    let mut elog_theta = vec![0.0; k_n];
    let mut logits = vec![0.0; k_n];
    for _ in 0..max_iter.max(1) {
        let dg = digamma(gamma.iter().sum());
        for (e, g) in elog_theta.iter_mut().zip(gamma.iter()) {
            *e = digamma(*g) - dg;
        }
        let mut new_gamma = vec![alpha; k_n];
        for (i, &(w, c)) in doc.iter().enumerate() {
            for k in 0..k_n {
                logits[k] = elog_theta[k] + elog_beta(k, w);
            }
            let lse = log_sum_exp(&logits);
            for k in 0..k_n {
                let p = libm::exp(logits[k] - lse);
                phi[i * k_n + k] = p;
                new_gamma[k] += c * p;
            }
        }
        let change = gamma.iter().zip(&new_gamma).map(|(a, b)| (a - b).abs()).sum::<f64>() / k_n as f64;
        gamma.copy_from_slice(&new_gamma);
        if change < tol {
            break;
        }
    }
    let sum_g: f64 = gamma.iter().sum();
    let dg = digamma(sum_g);
    for (e, g) in elog_theta.iter_mut().zip(gamma.iter()) {
        *e = digamma(*g) - dg;
    }
    let mut elbo = ln_gamma(k_n as f64 * alpha) - k_n as f64 * ln_gamma(alpha) - ln_gamma(sum_g);
    for k in 0..k_n {
        elbo += (alpha - gamma[k]) * elog_theta[k] + ln_gamma(gamma[k]);
    }
    for (i, &(w, c)) in doc.iter().enumerate() {
        for k in 0..k_n {
            let p = phi[i * k_n + k];
            if p > 0.0 {
                elbo += c * p * (elog_theta[k] + elog_beta(k, w) - libm::log(p));
            }
            if let Some(s) = stats.as_deref_mut() {
                s[k * vocab + w] += c * p;
            }
        }
    }
    DocFit { elbo }
}

/// Per-participant topic proportions over slices.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicTrajectory {
    /// T x K, rows on the simplex.
    pub theta: Matrix,
    /// Slices with no in-vocabulary words (uniform rows).
    pub uniform_slices: Vec<bool>,
}

/// Fits the model on participants' sliced transcripts. Every document is one
/// participant's slice; slice index is the time step.
pub fn fit_dtm(corpus: &[SlicedTranscript], cfg: &DtmConfig) -> Result<TopicModelState, DtmError> {
    cfg.validate()?;
    let (k_n, t_n) = (cfg.n_topics, cfg.n_slices);
    for d in corpus {
        if d.n_slices() != t_n {
            return Err(DtmError::SliceCountMismatch {
                expected: t_n,
                got: d.n_slices(),
            });
        }
    }
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for d in corpus {
        for w in d.words.iter().flatten() {
            *freq.entry(w.as_str()).or_insert(0) += 1;
        }
    }
    let vocab: Vec<String> = freq
        .iter()
        .filter(|(_, &c)| c >= cfg.vocab_min_count.max(1))
        .map(|(w, _)| String::from(*w))
        .collect();
    if vocab.is_empty() {
        return Err(DtmError::EmptyVocabulary);
    }
    let v = vocab.len();
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();

    // docs[p][t]: None for empty slices
    let docs: Vec<Vec<Option<Doc>>> = corpus
        .iter()
        .map(|d| {
            (0..t_n)
                .map(|t| {
                    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
                    for w in &d.words[t] {
                        if let Some(&i) = index.get(w.as_str()) {
                            *counts.entry(i).or_insert(0.0) += 1.0;
                        }
                    }
                    let total: f64 = counts.values().sum();
                    (total > 0.0).then(|| Doc {
                        slice: t,
                        words: counts.into_iter().collect(),
                        total,
                    })
                })
                .collect()
        })
        .collect();
    for t in 0..t_n {
        let have = docs.iter().filter(|d| d[t].is_some()).count();
        if have < 2 {
            return Err(DtmError::TooFewDocuments { slice: t, have });
        }
    }

    let mut state = TopicModelState::from_parts(
        *cfg,
        vocab,
        vec![0.0; k_n * t_n * v],
        Matrix::zeros(t_n, k_n),
    )?;
    init_topics(&mut state, &docs, cfg.seed);

    let (p_diag, p_off) = prior_precision(t_n, cfg.sigma2, cfg.init_variance);
    let smoothed = kalman_smooth(&vec![0.0; t_n], cfg.sigma2, cfg.init_variance, cfg.obs_variance);
    let chain_const = chain_constant(&p_diag, &p_off, &smoothed, cfg.obs_variance);

    let mut gammas: Vec<Vec<Vec<f64>>> = docs
        .iter()
        .map(|d| {
            d.iter()
                .map(|doc| {
                    let n = doc.as_ref().map_or(0.0, |x| x.total);
                    vec![cfg.alpha + n / k_n as f64; k_n]
                })
                .collect()
        })
        .collect();

    let mut stats = vec![0.0; k_n * t_n * v];
    let mut prev: Option<f64> = None;
    for iter in 0..=cfg.max_em_iters {
        let elbo = e_step(&state, &docs, &mut gammas, &mut stats) + topic_prior_term(&state, &p_diag, &p_off) + chain_const * (k_n * v) as f64;
        state.elbo_trace.push(elbo);
        if let Some(p) = prev {
            if (elbo - p).abs() <= cfg.elbo_tol * p.abs() {
                state.converged = true;
                break;
            }
        }
        prev = Some(elbo);
        if iter == cfg.max_em_iters {
            state.converged = false;
            break;
        }
        m_step(&mut state, &stats, &p_diag, &p_off);
    }

    let mut theta = Matrix::zeros(t_n, k_n);
    let mut counts = vec![0usize; t_n];
    state.doc_gamma = Vec::with_capacity(docs.len());
    for (p, d) in docs.iter().enumerate() {
        let mut g = Matrix::zeros(t_n, k_n);
        for t in 0..t_n {
            let row = &gammas[p][t];
            if d[t].is_some() {
                g.row_mut(t).copy_from_slice(row);
                let s: f64 = row.iter().sum();
                for k in 0..k_n {
                    theta[(t, k)] += row[k] / s;
                }
                counts[t] += 1;
            } else {
                g.row_mut(t).fill(cfg.alpha);
            }
        }
        state.doc_gamma.push(g);
    }
    for t in 0..t_n {
        for k in 0..k_n {
            theta[(t, k)] /= counts[t] as f64;
        }
    }
    state.corpus_theta = theta;
    Ok(state)
}

/// Seeds each topic with the word counts of a few random documents plus
/// noise, constant across slices.
fn init_topics(state: &mut TopicModelState, docs: &[Vec<Option<Doc>>], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k_n, t_n, v) = (state.config.n_topics, state.config.n_slices, state.vocab.len());
    let flat: Vec<&Doc> = docs.iter().flatten().flatten().collect();
    for k in 0..k_n {
        let mut w = vec![0.0; v];
        for x in &mut w {
            *x = 1.0 + rng.random::<f64>();
        }
        for _ in 0..5 {
            let d = flat[rng.random_range(0..flat.len())];
            for &(i, c) in &d.words {
                w[i] += 2.0 * c;
            }
        }
        let total: f64 = w.iter().sum();
        for t in 0..t_n {
            let off = (k * t_n + t) * v;
            for (o, x) in state.beta[off..off + v].iter_mut().zip(&w) {
                *o = libm::log(x / total);
            }
        }
    }
}

fn e_step(state: &TopicModelState, docs: &[Vec<Option<Doc>>], gammas: &mut [Vec<Vec<f64>>], stats: &mut [f64]) -> f64 {
    let (t_n, v) = (state.config.n_slices, state.vocab.len());
    let k_n = state.config.n_topics;
    let elog = state.expected_log_beta();
    stats.fill(0.0);
    let mut total = 0.0;
    let mut slice_stats = vec![0.0; k_n * v];
    for (p, d) in docs.iter().enumerate() {
        for doc in d.iter().flatten() {
            let t = doc.slice;
            let eb = |k: usize, w: usize| elog[(k * t_n + t) * v + w];
            slice_stats.fill(0.0);
            let fit = fit_document(
                &doc.words,
                &eb,
                state.config.alpha,
                &mut gammas[p][t],
                state.config.max_doc_iters,
                state.config.doc_tol,
                Some(&mut slice_stats),
                v,
            );
            total += fit.elbo;
            for k in 0..k_n {
                let off = (k * t_n + t) * v;
                for (s, x) in stats[off..off + v].iter_mut().zip(&slice_stats[k * v..(k + 1) * v]) {
                    *s += x;
                }
            }
        }
    }
    total
}

/// Constant part of each chain's prior-plus-entropy terms.
fn chain_constant(p_diag: &[f64], p_off: &[f64], post: &ChainPosterior, obs_var: f64) -> f64 {
    let t_n = p_diag.len();
    let mut trace = 0.0;
    for t in 0..t_n {
        trace += p_diag[t] * post.variance[t];
        if t + 1 < t_n {
            trace += 2.0 * p_off[t] * post.lag_cov[t];
        }
    }
    let post_diag: Vec<f64> = p_diag.iter().map(|d| d + 1.0 / obs_var).collect();
    let log_det_post = -tridiag_log_det(&post_diag, p_off);
    0.5 * (tridiag_log_det(p_diag, p_off) + log_det_post - trace + t_n as f64)
}

/// -1/2 m' P m summed over all chains.
fn topic_prior_term(state: &TopicModelState, p_diag: &[f64], p_off: &[f64]) -> f64 {
    let (k_n, t_n, v) = (state.config.n_topics, state.config.n_slices, state.vocab.len());
    let mut chain = vec![0.0; t_n];
    let mut pm = vec![0.0; t_n];
    let mut total = 0.0;
    for k in 0..k_n {
        for w in 0..v {
            for t in 0..t_n {
                chain[t] = state.beta[(k * t_n + t) * v + w];
            }
            tridiag_mul(p_diag, p_off, &chain, &mut pm);
            total -= 0.5 * chain.iter().zip(&pm).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    total
}

/// Topic-side objective for one topic given its T x V mean matrix.
fn topic_objective(m: &[f64], counts: &[f64], totals: &[f64], var: &[f64], p_diag: &[f64], p_off: &[f64], v: usize) -> f64 {
    let t_n = totals.len();
    let mut f = 0.0;
    let mut chain = vec![0.0; t_n];
    let mut pm = vec![0.0; t_n];
    for w in 0..v {
        for t in 0..t_n {
            chain[t] = m[t * v + w];
        }
        tridiag_mul(p_diag, p_off, &chain, &mut pm);
        f -= 0.5 * chain.iter().zip(&pm).map(|(a, b)| a * b).sum::<f64>();
    }
    for t in 0..t_n {
        let row = &m[t * v..(t + 1) * v];
        f += row.iter().zip(&counts[t * v..(t + 1) * v]).map(|(a, b)| a * b).sum::<f64>();
        f -= totals[t] * (log_sum_exp(row) + var[t] / 2.0);
    }
    f
}

/// Raises the topic-side bound for every topic. The search direction is a
/// diagonal-curvature Newton step on the smoothed means; it is applied to the
/// pseudo-observations and pushed back through the smoother, and steps are
/// halved until the objective improves.
fn m_step(state: &mut TopicModelState, stats: &[f64], p_diag: &[f64], p_off: &[f64]) {
    let cfg = state.config;
    let (k_n, t_n, v) = (cfg.n_topics, cfg.n_slices, state.vocab.len());
    let var = state.chain_variance.clone();
    let nu = cfg.obs_variance;
    for k in 0..k_n {
        let off = k * t_n * v;
        let counts = &stats[off..off + t_n * v];
        let totals: Vec<f64> = (0..t_n).map(|t| counts[t * v..(t + 1) * v].iter().sum()).collect();
        let mut m = state.beta[off..off + t_n * v].to_vec();
        // pseudo-observations: (nu P + I) m
        let mut obs = vec![0.0; t_n * v];
        let mut chain = vec![0.0; t_n];
        let mut tmp = vec![0.0; t_n];
        for w in 0..v {
            for t in 0..t_n {
                chain[t] = m[t * v + w];
            }
            tridiag_mul(p_diag, p_off, &chain, &mut tmp);
            for t in 0..t_n {
                obs[t * v + w] = nu * tmp[t] + chain[t];
            }
        }
        let mut f = topic_objective(&m, counts, &totals, &var, p_diag, p_off, v);
        for _ in 0..cfg.max_topic_iters {
            let mut soft = vec![0.0; t_n * v];
            for t in 0..t_n {
                let row = &m[t * v..(t + 1) * v];
                let lse = log_sum_exp(row);
                for w in 0..v {
                    soft[t * v + w] = libm::exp(row[w] - lse);
                }
            }
            let mut d_obs = vec![0.0; t_n * v];
            let mut diag = vec![0.0; t_n];
            let mut rhs = vec![0.0; t_n];
            for w in 0..v {
                for t in 0..t_n {
                    chain[t] = m[t * v + w];
                }
                tridiag_mul(p_diag, p_off, &chain, &mut tmp);
                for t in 0..t_n {
                    let s = soft[t * v + w];
                    rhs[t] = -tmp[t] + counts[t * v + w] - totals[t] * s;
                    diag[t] = p_diag[t] + totals[t] * s + 1e-12;
                }
                solve_tridiagonal(p_off, &diag, p_off, &mut rhs);
                tridiag_mul(p_diag, p_off, &rhs, &mut tmp);
                for t in 0..t_n {
                    d_obs[t * v + w] = nu * tmp[t] + rhs[t];
                }
            }
            let mut step = 1.0;
            let mut accepted = false;
            let mut trial_obs = vec![0.0; t_n * v];
            let mut trial_m = vec![0.0; t_n * v];
            let mut col = vec![0.0; t_n];
            for _ in 0..40 {
                for (o, (a, d)) in trial_obs.iter_mut().zip(obs.iter().zip(&d_obs)) {
                    *o = a + step * d;
                }
                for w in 0..v {
                    for t in 0..t_n {
                        col[t] = trial_obs[t * v + w];
                    }
                    let post = kalman_smooth(&col, cfg.sigma2, cfg.init_variance, nu);
                    for t in 0..t_n {
                        trial_m[t * v + w] = post.mean[t];
                    }
                }
                let f_new = topic_objective(&trial_m, counts, &totals, &var, p_diag, p_off, v);
                if f_new > f {
                    accepted = true;
                    let gain = f_new - f;
                    f = f_new;
                    core::mem::swap(&mut obs, &mut trial_obs);
                    core::mem::swap(&mut m, &mut trial_m);
                    if gain <= 1e-12 * f.abs() {
                        accepted = false;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        state.beta[off..off + t_n * v].copy_from_slice(&m);
    }
}

/// Topic proportions of an unseen participant, slice by slice.
pub fn infer_trajectory(state: &TopicModelState, doc: &SlicedTranscript) -> Result<TopicTrajectory, DtmError> {
    let (k_n, t_n, v) = (state.config.n_topics, state.config.n_slices, state.vocab.len());
    if doc.n_slices() != t_n {
        return Err(DtmError::SliceCountMismatch {
            expected: t_n,
            got: doc.n_slices(),
        });
    }
    let elog = state.expected_log_beta();
    let mut theta = Matrix::zeros(t_n, k_n);
    let mut uniform_slices = vec![false; t_n];
    for t in 0..t_n {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for w in &doc.words[t] {
            if let Some(i) = state.word_index(w) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        if counts.is_empty() {
            theta.row_mut(t).fill(1.0 / k_n as f64);
            uniform_slices[t] = true;
            continue;
        }
        let words: Vec<(usize, f64)> = counts.into_iter().collect();
        let total: f64 = words.iter().map(|x| x.1).sum();
        let mut gamma = vec![state.config.alpha + total / k_n as f64; k_n];
        let eb = |k: usize, w: usize| elog[(k * t_n + t) * v + w];
        fit_document(
            &words,
            &eb,
            state.config.alpha,
            &mut gamma,
            state.config.max_doc_iters,
            state.config.doc_tol,
            None,
            v,
        );
        let s: f64 = gamma.iter().sum();
        for k in 0..k_n {
            theta[(t, k)] = gamma[k] / s;
        }
    }
    Ok(TopicTrajectory { theta, uniform_slices })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DtmStatistics {
    pub topic_consistency: f64,
    pub topic_cycle: f64,
    pub topic_variability: f64,
    pub topic_temporal_corr: f64,
    pub topic_ptp_range: f64,
    pub topic_change_rate: f64,
    /// Some topic had a constant proportion, so its lag-1 correlation was
    /// taken as 0.
    pub degenerate_corr: bool,
}

pub const DTM_FEATURE_NAMES: [&str; 6] = [
    "topic_consistency",
    "topic_cycle",
    "topic_variability",
    "topic_temporal_corr",
    "topic_ptp_range",
    "topic_change_rate",
];

impl DtmStatistics {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.topic_consistency,
            self.topic_cycle,
            self.topic_variability,
            self.topic_temporal_corr,
            self.topic_ptp_range,
            self.topic_change_rate,
        ]
    }
}

/// Fraction of the dominant topic's top words present in each slice,
/// averaged over slices.
pub fn topic_consistency(state: &TopicModelState, doc: &SlicedTranscript) -> Result<f64, DtmError> {
    let t_n = state.n_slices();
    if doc.n_slices() != t_n {
        return Err(DtmError::SliceCountMismatch {
            expected: t_n,
            got: doc.n_slices(),
        });
    }
    let denom = TOP_WORDS.min(state.vocab_size()) as f64;
    let mut total = 0.0;
    for t in 0..t_n {
        let top = state.top_words(state.dominant_topic(t), t, TOP_WORDS)?;
        let present: BTreeSet<&str> = doc.words[t].iter().map(String::as_str).collect();
        let hits = top.iter().filter(|w| present.contains(*w)).count();
        total += hits as f64 / denom;
    }
    Ok(total / t_n as f64)
}

/// 1.0 when a cycle word appears in the second half of the slices
/// (slices ceil(T/2)+1 ..= T, counting from one).
pub fn topic_cycle(doc: &SlicedTranscript, cycle_lexicon: &BTreeSet<String>) -> f64 {
    let t_n = doc.n_slices();
    let start = t_n.div_ceil(2);
    let hit = doc.words[start..].iter().flatten().any(|w| cycle_lexicon.contains(w));
    if hit {
        1.0
    } else {
        0.0
    }
}

/// The four trajectory-shape statistics: (variability, temporal correlation,
/// peak-to-peak range, change rate, degenerate flag).
pub fn trajectory_shape(theta: &Matrix) -> (f64, f64, f64, f64, bool) {
    let (t_n, k_n) = (theta.rows(), theta.cols());
    let mut variability = 0.0;
    let mut corr = 0.0;
    let mut ptp = 0.0;
    let mut degenerate = false;
    for k in 0..k_n {
        let col = theta.column(k);
        variability += std_dev(&col);
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        ptp += hi - lo;
        match (t_n >= 3).then(|| pearson(&col[..t_n - 1], &col[1..])).flatten() {
            Some(r) => corr += r,
            None => degenerate = true,
        }
    }
    let k = k_n as f64;
    let mut change = 0.0;
    for t in 0..t_n.saturating_sub(1) {
        let d: f64 = theta
            .row(t)
            .iter()
            .zip(theta.row(t + 1))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        change += libm::sqrt(d);
    }
    let change = if t_n > 1 { change / (t_n - 1) as f64 } else { 0.0 };
    (variability / k, corr / k, ptp / k, change, degenerate)
}

pub fn dtm_statistics(
    state: &TopicModelState,
    doc: &SlicedTranscript,
    traj: &TopicTrajectory,
    cycle_lexicon: &BTreeSet<String>,
) -> Result<DtmStatistics, DtmError> {
    let topic_consistency = topic_consistency(state, doc)?;
    let (topic_variability, topic_temporal_corr, topic_ptp_range, topic_change_rate, degenerate_corr) =
        trajectory_shape(&traj.theta);
    Ok(DtmStatistics {
        topic_consistency,
        topic_cycle: topic_cycle(doc, cycle_lexicon),
        topic_variability,
        topic_temporal_corr,
        topic_ptp_range,
        topic_change_rate,
        degenerate_corr,
    })
}
