//! Seeded synthetic corpora: drifting-topic documents drawn from the
//! dynamic topic model itself, and image/text embedding sequences whose
//! cross-modal alignment depends on the severity grade.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::corpus::{EmbeddingSequence, SlicedTranscript, Split};
use crate::math::{log_sum_exp, softmax_in_place, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtmSynthSpec {
    pub n_topics: usize,
    pub vocab_size: usize,
    pub n_slices: usize,
    pub n_docs: usize,
    pub sigma2: f64,
    /// Dirichlet concentration of the per-document topic proportions.
    pub alpha: f64,
    /// Standard deviation of the first-slice natural parameters.
    pub init_std: f64,
    pub words_per_slice: usize,
    pub seed: u64,
}

impl DtmSynthSpec {
    pub fn new(n_topics: usize, vocab_size: usize, n_slices: usize, n_docs: usize, sigma2: f64, seed: u64) -> Self {
        Self {
            n_topics,
            vocab_size,
            n_slices,
            n_docs,
            sigma2,
            alpha: 0.1,
            init_std: 2.0,
            words_per_slice: 20,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtmSynthCorpus {
    pub docs: Vec<SlicedTranscript>,
    /// Sorted, zero-padded word strings `w000`, `w001`, ...
    pub vocab: Vec<String>,
    /// Generator natural parameters, K x T x V row-major.
    pub beta: Vec<f64>,
    /// Generator topic proportions, one row per document.
    pub theta: Matrix,
}

impl DtmSynthCorpus {
    pub fn beta_row(&self, k: usize, t: usize) -> &[f64] {
        let v = self.vocab.len();
        let t_n = self.beta.len() / (v * self.theta.cols());
        let start = (k * t_n + t) * v;
        &self.beta[start..start + v]
    }

    pub fn word_distribution(&self, k: usize, t: usize) -> Vec<f64> {
        let mut p = self.beta_row(k, t).to_vec();
        softmax_in_place(&mut p);
        p
    }
}

fn dirichlet(rng: &mut impl Rng, alpha: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let g = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let mut x: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
        let s: f64 = x.iter().sum();
        if s > 0.0 && s.is_finite() {
            for v in &mut x {
                *v /= s;
            }
            return x;
        }
    }
}

fn categorical(rng: &mut impl Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn vocab_names(v: usize) -> Vec<String> {
    let width = format!("{}", v.saturating_sub(1)).len().max(3);
    (0..v).map(|i| format!("w{i:0width$}")).collect()
}

/// Samples topic chains, per-document proportions and words. A participant
/// keeps one topic proportion across its slices.
pub fn gen_dtm_corpus(spec: &DtmSynthSpec) -> DtmSynthCorpus {
    let (k_n, v_n, t_n) = (spec.n_topics, spec.vocab_size, spec.n_slices);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let drift_std = libm::sqrt(spec.sigma2.max(0.0));
    let mut beta = vec![0.0; k_n * t_n * v_n];
    for k in 0..k_n {
        for w in 0..v_n {
            let mut x = spec.init_std * rng.sample::<f64, _>(StandardNormal);
            for t in 0..t_n {
                if t > 0 && drift_std > 0.0 {
                    x += drift_std * rng.sample::<f64, _>(StandardNormal);
                }
                beta[(k * t_n + t) * v_n + w] = x;
            }
        }
    }
    let dists: Vec<Vec<f64>> = (0..k_n * t_n)
        .map(|kt| {
            let mut p = beta[kt * v_n..(kt + 1) * v_n].to_vec();
            softmax_in_place(&mut p);
            p
        })
        .collect();
    let vocab = vocab_names(v_n);
    let mut theta = Matrix::zeros(spec.n_docs, k_n);
    let mut docs = Vec::with_capacity(spec.n_docs);
    for d in 0..spec.n_docs {
        let th = dirichlet(&mut rng, spec.alpha, k_n);
        theta.row_mut(d).copy_from_slice(&th);
        let words = (0..t_n)
            .map(|t| {
                (0..spec.words_per_slice)
                    .map(|_| {
                        let z = categorical(&mut rng, &th);
                        vocab[categorical(&mut rng, &dists[z * t_n + t])].clone()
                    })
                    .collect()
            })
            .collect();
        docs.push(SlicedTranscript::from_words(words));
    }
    DtmSynthCorpus { docs, vocab, beta, theta }
}

/// Log-likelihood of `docs` with topics integrated out:
/// sum over words of log sum_k theta_dk softmax(beta_kt)_w.
pub fn dtm_log_likelihood(docs: &[SlicedTranscript], vocab: &[String], beta: &[f64], theta: &Matrix) -> f64 {
    let (v_n, k_n) = (vocab.len(), theta.cols());
    let t_n = beta.len() / (v_n * k_n);
    let log_dists: Vec<Vec<f64>> = (0..k_n * t_n)
        .map(|kt| {
            let row = &beta[kt * v_n..(kt + 1) * v_n];
            let z = log_sum_exp(row);
            row.iter().map(|b| b - z).collect()
        })
        .collect();
    let mut total = 0.0;
    for (d, doc) in docs.iter().enumerate() {
        for (t, ws) in doc.words.iter().enumerate() {
            for w in ws {
                let Ok(wi) = vocab.binary_search(w) else { continue };
                let terms: Vec<f64> = (0..k_n)
                    .map(|k| libm::log(theta[(d, k)]) + log_dists[k * t_n + t][wi])
                    .collect();
                total += log_sum_exp(&terms);
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingSynthSpec {
    pub n: usize,
    pub n_images: usize,
    pub n_texts: usize,
    pub hidden: usize,
    /// 0 makes the two classes identically distributed; 1 removes all image
    /// content from the most severe texts.
    pub class_separation: f64,
    /// Norm of the per-row isotropic noise before renormalization.
    pub noise: f64,
    /// Probability that a sequence gets a masked tail of text rows.
    pub mask_prob: f64,
    pub seed: u64,
}

impl EmbeddingSynthSpec {
    pub fn new(n: usize, n_images: usize, n_texts: usize, hidden: usize, class_separation: f64, seed: u64) -> Self {
        Self {
            n,
            n_images,
            n_texts,
            hidden,
            class_separation,
            noise: 0.5,
            mask_prob: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParticipant {
    pub id: String,
    /// Severity on the 0-4 scale; grades 0-1 are controls.
    pub grade: u8,
    pub split: Split,
    pub seq: EmbeddingSequence,
}

fn unit_gaussian(rng: &mut impl Rng, h: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..h).map(|_| rng.sample(StandardNormal)).collect();
        let n = crate::math::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = crate::math::norm(&v);
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

/// How far grade `g` moves text away from the pictures, in [0, 1].
fn grade_shift(g: u8) -> f64 {
    match g {
        0 | 1 => 0.0,
        2 => 0.6,
        3 => 0.8,
        _ => 1.0,
    }
}

/// Image rows shared by every participant (one picture set).
pub fn shared_images(n_images: usize, hidden: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a4e_5eed);
    let common = unit_gaussian(&mut rng, hidden);
    let mut m = Matrix::zeros(n_images, hidden);
    for j in 0..n_images {
        let own = unit_gaussian(&mut rng, hidden);
        let row: Vec<f64> = common.iter().zip(&own).map(|(c, o)| 0.5 * c + o).collect();
        m.row_mut(j).copy_from_slice(&normalized(row));
    }
    m
}

/// Participant `i` is a control when `i` is even. Every fifth participant
/// goes to the test split.
pub fn gen_embedding_corpus(spec: &EmbeddingSynthSpec) -> Vec<SynthParticipant> {
    let (j_n, k_n, h) = (spec.n_images, spec.n_texts, spec.hidden);
    let images = shared_images(j_n, h, spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let off_topic = unit_gaussian(&mut rng, h);
    let width = format!("{}", spec.n.saturating_sub(1)).len().max(3);
    (0..spec.n)
        .map(|i| {
            let ncd = i % 2 == 1;
            let grade: u8 = if ncd { rng.random_range(2..=4) } else { rng.random_range(0..=1) };
            let shift = (spec.class_separation * grade_shift(grade)).clamp(0.0, 1.0);
            let mut text = Matrix::zeros(k_n, h);
            for r in 0..k_n {
                let img = images.row(r * j_n / k_n);
                let distractor = normalized(
                    off_topic
                        .iter()
                        .zip(unit_gaussian(&mut rng, h))
                        .map(|(a, b)| a + b)
                        .collect(),
                );
                let noise = unit_gaussian(&mut rng, h);
                let row: Vec<f64> = (0..h)
                    .map(|c| (1.0 - shift) * img[c] + shift * distractor[c] + spec.noise * noise[c])
                    .collect();
                text.row_mut(r).copy_from_slice(&normalized(row));
            }
            // scramble part of the narrative order
            let n_swaps = libm::round(shift * k_n as f64 / 2.0) as usize;
            let mut perm: Vec<usize> = (0..k_n).collect();
            for _ in 0..n_swaps {
                let a = rng.random_range(0..k_n);
                let b = rng.random_range(0..k_n);
                perm.swap(a, b);
            }
            let mut mask = vec![true; j_n + k_n];
            if spec.mask_prob > 0.0 && k_n > 1 && rng.random::<f64>() < spec.mask_prob {
                let n_masked = rng.random_range(1..=(k_n / 4).max(1));
                for r in k_n - n_masked..k_n {
                    mask[j_n + r] = false;
                    for c in 0..h {
                        text[(r, c)] = 10.0 * rng.random_range(-1.0..1.0);
                    }
                }
            }
            let order = perm_valid_prefix(&perm, mask_tail(&mask[j_n..]));
            let seq = EmbeddingSequence::new(images.clone(), text, mask)
                .expect("generated shapes agree")
                .permute_text(&order);
            SynthParticipant {
                id: format!("S{i:0width$}"),
                grade,
                split: if i % 5 == 4 { Split::Test } else { Split::Train },
                seq,
            }
        })
        .collect()
}

fn mask_tail(text_mask: &[bool]) -> usize {
    text_mask.iter().filter(|&&m| m).count()
}

/// Restricts `perm` to the first `n_valid` rows so masked rows stay at the end.
fn perm_valid_prefix(perm: &[usize], n_valid: usize) -> Vec<usize> {
    let mut head: Vec<usize> = perm.iter().copied().filter(|&p| p < n_valid).collect();
    head.extend(n_valid..perm.len());
    head
}

/// Voice-activity segments for `n_segments` utterances. Longer pauses and
/// shorter speech bursts as `severity` (0-1) grows.
pub fn gen_vad(n_segments: usize, severity: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = rng.random_range(0.1..0.5);
    let mut out = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        let speech = rng.random_range(0.8..2.5) * (1.0 - 0.4 * severity);
        out.push((t, t + speech));
        let pause = rng.random_range(0.1..0.6) + severity * rng.random_range(0.0..2.0);
        t += speech + pause;
    }
    out
}
