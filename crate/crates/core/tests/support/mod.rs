//! Independent reference implementations used by the integration tests and
//! the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use vsn_core::dtm::TopicModelState;
use vsn_core::math::cosine;
use vsn_core::synth::DtmSynthCorpus;

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Generator distribution re-indexed onto the fitted vocabulary.
fn generator_on_fitted_vocab(c: &DtmSynthCorpus, s: &TopicModelState, k: usize, t: usize) -> Vec<f64> {
    let full = c.word_distribution(k, t);
    let mut out = vec![0.0; s.vocab_size()];
    for (w, p) in c.vocab.iter().zip(full) {
        if let Some(i) = s.word_index(w) {
            out[i] = p;
        }
    }
    out
}

/// Best mean cosine between generator and fitted topics over all matchings,
/// each pair averaged across slices.
pub fn matched_topic_cosine(c: &DtmSynthCorpus, s: &TopicModelState) -> f64 {
    let (k_n, t_n) = (s.n_topics(), s.n_slices());
    let mut sim = vec![vec![0.0; k_n]; k_n];
    for (g, row) in sim.iter_mut().enumerate() {
        for (f, cell) in row.iter_mut().enumerate() {
            *cell = (0..t_n)
                .map(|t| cosine(&generator_on_fitted_vocab(c, s, g, t), &s.word_distribution(f, t)))
                .sum::<f64>()
                / t_n as f64;
        }
    }
    permutations(k_n)
        .iter()
        .map(|p| (0..k_n).map(|g| sim[g][p[g]]).sum::<f64>() / k_n as f64)
        .fold(f64::MIN, f64::max)
}

/// Largest total-variation distance between any slice and the first slice.
pub fn max_drift_tv(s: &TopicModelState) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..s.n_topics() {
        let first = s.word_distribution(k, 0);
        for t in 1..s.n_slices() {
            let tv = 0.5 * s.word_distribution(k, t).iter().zip(&first).map(|(a, b)| (a - b).abs()).sum::<f64>();
            worst = worst.max(tv);
        }
    }
    worst
}

/// Maximum of sum(a) - a'Qa/2 over 0 <= a <= c, y'a = 0, by enumerating
/// which coordinates sit at 0, at c, or strictly inside.
pub fn active_set_dual_max(q: &DMatrix<f64>, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut x = code;
        for s in state.iter_mut() {
            *s = (x % 3) as u8;
            x /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a = DVector::from_fn(n, |i, _| if state[i] == 1 { c } else { 0.0 });
        if !free.is_empty() {
            let m = free.len();
            let mut lhs = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            let qa = q * &a;
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    lhs[(r, s)] = q[(i, j)];
                }
                lhs[(r, m)] = y[i];
                lhs[(m, r)] = y[i];
                rhs[r] = 1.0 - qa[i];
            }
            rhs[m] = -(0..n).map(|i| y[i] * a[i]).sum::<f64>();
            let Some(sol) = lhs.lu().solve(&rhs) else { continue };
            for (r, &i) in free.iter().enumerate() {
                a[i] = sol[r];
            }
        }
        let feasible = a.iter().all(|&v| v >= -1e-12 && v <= c + 1e-12)
            && (0..n).map(|i| y[i] * a[i]).sum::<f64>().abs() < 1e-9;
        if feasible {
            let obj = a.sum() - 0.5 * (a.transpose() * q * &a)[(0, 0)];
            best = best.max(obj);
        }
    }
    best
}

/// Sine of the largest principal angle between two orthonormal column bases.
pub fn largest_principal_angle_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = a - b * (b.transpose() * a);
    residual.singular_values().max()
}

/// Voiced-segment traces on a quarter-second grid, with syllable counts.
pub fn acoustic_cases() -> Vec<(Vec<(f64, f64)>, u32)> {
    vec![
        (vec![(0.0, 1.0), (2.0, 3.0)], 4),
        (vec![(0.0, 2.0)], 8),
        (vec![(0.5, 1.5), (1.75, 2.75), (4.0, 5.0)], 6),
        (vec![(0.0, 0.5), (0.75, 1.25), (1.5, 2.0), (2.25, 2.75)], 2),
        (vec![(0.0, 3.0), (3.25, 6.0), (9.0, 12.0)], 24),
        (vec![(1.0, 2.0), (2.5, 3.0), (5.0, 5.25), (5.5, 8.0)], 10),
        (vec![(0.0, 1.0), (1.5, 2.5), (3.0, 4.0), (4.5, 5.5), (6.0, 7.0)], 20),
        (vec![(0.0, 0.25), (10.0, 10.25)], 1),
        (vec![(0.0, 4.0), (4.25, 4.5), (6.0, 7.5)], 23),
        (vec![(2.0, 2.5), (3.0, 3.75), (3.875, 4.0), (6.0, 6.5), (6.625, 9.0)], 13),
        (vec![(0.0, 1.0), (1.25, 2.0), (2.25, 3.0), (3.25, 4.0)], 16),
    ]
}

/// A1-A10 straight from their definitions: pauses are inter-segment gaps
/// longer than the mean syllable duration.
pub fn acoustic_oracle(segs: &[(f64, f64)], syllables: u32) -> [f64; 10] {
    let syl = syllables as f64;
    let mut voiced = 0.0;
    for &(s, e) in segs {
        voiced += e - s;
    }
    let threshold = voiced / syl;
    let mut n_pauses = 0usize;
    let mut pause_total = 0.0;
    for i in 1..segs.len() {
        let gap = segs[i].0 - segs[i - 1].1;
        if gap > threshold {
            n_pauses += 1;
            pause_total += gap;
        }
    }
    let avg_pause = if n_pauses > 0 { pause_total / n_pauses as f64 } else { 0.0 };
    let artic = syl / voiced;
    let span = segs.last().unwrap().1 - segs[0].0;
    [
        n_pauses as f64,
        pause_total,
        avg_pause,
        pause_total / artic,
        n_pauses as f64 / voiced,
        n_pauses as f64 / syl,
        voiced,
        voiced / segs.len() as f64,
        artic,
        syl / span,
    ]
}

pub struct LexiconSpec {
    pub stopwords: &'static [&'static str],
    pub filled_pauses: &'static [&'static str],
    pub lexical_fillers: &'static [&'static str],
    pub backchannels: &'static [&'static str],
    pub functional_tags: &'static [&'static str],
}

pub const LEXICON: LexiconSpec = LexiconSpec {
    stopwords: &["the", "a", "is", "and", "of", "it"],
    filled_pauses: &["uh", "um", "er"],
    lexical_fillers: &["like", "well"],
    backchannels: &["yeah", "mhm", "okay"],
    functional_tags: &["DET", "ADP", "AUX", "CCONJ", "PART"],
};

/// Word/tag sequences covering every counted category.
pub fn linguistic_cases() -> Vec<Vec<(&'static str, &'static str)>> {
    vec![
        vec![("the", "DET"), ("boy", "NOUN"), ("is", "AUX"), ("running", "VERB")],
        vec![("uh", "INTJ"), ("uh", "INTJ"), ("the", "DET"), ("cookie", "NOUN"), ("jar", "NOUN")],
        vec![("She", "PRON"), ("she", "PRON"), ("falls", "VERB"), ("quickly", "ADV"), (".", "PUNCT")],
        vec![("yeah", "INTJ"), ("well", "ADV"), ("like", "ADP"), ("a", "DET"), ("big", "ADJ"), ("big", "ADJ"), ("window", "NOUN")],
        vec![("mhm", "INTJ"), ("okay", "INTJ"), ("um", "INTJ"), ("water", "NOUN"), ("overflowing", "VERB"), ("the", "DET"), ("sink", "NOUN")],
        vec![("a", "X"), ("b", "X"), ("c", "X"), ("d", "X"), ("e", "X"), ("f", "X"), ("a", "X"), ("b", "X")],
        vec![("Mother", "PROPN"), ("is", "AUX"), ("drying", "VERB"), ("dishes", "NOUN"), ("and", "CCONJ"), ("the", "DET"), ("boy", "NOUN"), ("is", "AUX"), ("stealing", "VERB"), ("cookies", "NOUN")],
        vec![("it", "PRON"), (",", "PUNCT"), ("it", "PRON"), ("is", "AUX"), ("er", "INTJ"), ("quite", "ADV"), ("quite", "ADV"), ("wet", "ADJ")],
        vec![("stool", "NOUN"), ("tipping", "VERB"), ("over", "ADP"), ("to", "PART"), ("the", "DET"), ("left", "NOUN"), ("yeah", "INTJ")],
        vec![("the", "DET"), ("The", "DET"), ("THE", "DET"), ("curtains", "NOUN"), ("of", "ADP"), ("the", "DET"), ("window", "NOUN"), ("are", "AUX"), ("open", "ADJ")],
        vec![("um", "INTJ"), ("okay", "INTJ")],
    ]
}

/// L1-L13 straight from their definitions over the non-punctuation tokens.
pub fn linguistic_oracle(tokens: &[(&str, &str)], lex: &LexiconSpec) -> [f64; 13] {
    let words: Vec<(String, &str)> = tokens
        .iter()
        .filter(|(w, _)| w.chars().any(char::is_alphanumeric))
        .map(|(w, t)| (w.to_lowercase(), *t))
        .collect();
    let n = words.len() as f64;
    let frac = |pred: &dyn Fn(usize) -> bool| (0..words.len()).filter(|&i| pred(i)).count() as f64 / n;
    let in_list = |list: &[&str], w: &str| list.contains(&w);
    let types: BTreeSet<&String> = words.iter().map(|(w, _)| w).collect();
    [
        n,
        frac(&|i| in_list(lex.stopwords, &words[i].0)),
        frac(&|i| in_list(lex.filled_pauses, &words[i].0)),
        frac(&|i| in_list(lex.lexical_fillers, &words[i].0)),
        frac(&|i| in_list(lex.backchannels, &words[i].0)),
        frac(&|i| i > 0 && words[i].0 == words[i - 1].0),
        frac(&|i| words[i].1 == "ADJ"),
        frac(&|i| words[i].1 == "ADV"),
        frac(&|i| words[i].1 == "NOUN" || words[i].1 == "PROPN"),
        frac(&|i| words[i].1 == "PRON"),
        frac(&|i| words[i].1 == "VERB"),
        frac(&|i| in_list(lex.functional_tags, words[i].1)),
        types.len() as f64 / (2.0 * n).sqrt(),
    ]
}

fn ngram_counts(x: &[String], n: usize) -> BTreeMap<Vec<String>, usize> {
    let mut m = BTreeMap::new();
    if x.len() >= n {
        for i in 0..=x.len() - n {
            *m.entry(x[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    m
}

/// Single-reference BLEU with uniform weights up to order `n`, no smoothing.
pub fn bleu_oracle(hyp: &[String], reference: &[String], n: usize) -> f64 {
    let mut precisions = Vec::new();
    for order in 1..=n {
        let h = ngram_counts(hyp, order);
        let r = ngram_counts(reference, order);
        let total: usize = h.values().sum();
        let clipped: usize = h.iter().map(|(g, c)| (*c).min(*r.get(g).unwrap_or(&0))).sum();
        if total == 0 || clipped == 0 {
            return 0.0;
        }
        precisions.push(clipped as f64 / total as f64);
    }
    let geo = precisions.iter().map(|p| p.ln()).sum::<f64>() / n as f64;
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * geo.exp()
}

/// Longest common subsequence by trying every subsequence of `a`.
pub fn lcs_brute(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if sub.len() <= best {
            continue;
        }
        let mut it = b.iter();
        if sub.iter().all(|s| it.any(|x| x == *s)) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l_oracle(hyp: &[String], reference: &[String]) -> f64 {
    let l = lcs_brute(hyp, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, r) = (l / hyp.len() as f64, l / reference.len() as f64);
    2.0 * p * r / (p + r)
}

/// Exact-match unigram METEOR (alpha 0.9, beta 3, gamma 0.5). Occurrences
/// of a word are paired in order.
pub fn meteor_oracle(hyp: &[String], reference: &[String]) -> f64 {
    let mut seen_h: BTreeMap<&String, usize> = BTreeMap::new();
    let mut link: Vec<Option<usize>> = Vec::with_capacity(hyp.len());
    for w in hyp {
        let occ = seen_h.entry(w).or_insert(0);
        let pos = reference.iter().enumerate().filter(|(_, x)| *x == w).nth(*occ).map(|(j, _)| j);
        *occ += 1;
        link.push(pos);
    }
    let pairs: Vec<(usize, usize)> = link.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect();
    let m = pairs.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let mut chunks = 1;
    for w in pairs.windows(2) {
        if w[1].0 != w[0].0 + 1 || w[1].1 != w[0].1 + 1 {
            chunks += 1;
        }
    }
    let (p, r) = (m / hyp.len() as f64, m / reference.len() as f64);
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let frag = (chunks - 1) as f64 / m;
    fmean * (1.0 - 0.5 * frag.powi(3))
}
