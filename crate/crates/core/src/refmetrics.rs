//! Reference-based narrative features: visual-word ranking, coverage, and
//! BLEU / METEOR / ROUGE-L against expert reference narratives.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{normalize_word, TokenizedTranscript};
use crate::linguistic::PosClass;
use crate::math::{cosine, Matrix};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RefMetricsError {
    #[error("embedding dimension mismatch: words {words}, images {images}")]
    DimensionMismatch { words: usize, images: usize },
    #[error("word list length {words} does not match embedding rows {rows}")]
    RowMismatch { words: usize, rows: usize },
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("no reference narratives")]
    NoReferences,
}

/// Narrative element categories scored by coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Category {
    Introduction,
    Character,
    Object,
    Action,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Introduction,
        Category::Character,
        Category::Object,
        Category::Action,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Introduction => "introduction",
            Category::Character => "character",
            Category::Object => "object",
            Category::Action => "action",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

pub const REFERENCE_FEATURE_NAMES: [&str; 16] = [
    "cvg_introduction",
    "cvg_character",
    "cvg_object",
    "cvg_action",
    "cvg_noun",
    "cvg_verb",
    "cvg_pronoun",
    "cvg_adj",
    "cvg_adv",
    "cvg_all",
    "bleu1",
    "bleu2",
    "bleu3",
    "bleu4",
    "meteor",
    "rouge_l",
];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankedWord {
    pub word: String,
    pub relevance: f64,
    pub pos_class: PosClass,
}

/// Visual-relevance ranked vocabulary plus curated category word sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VisualLexicon {
    pub ranked_words: Vec<RankedWord>,
    pub categories: BTreeMap<Category, BTreeSet<String>>,
}

/// Ranks `words` by mean cosine similarity to the image embeddings.
///
/// Ties are broken alphabetically. Category sets start empty; they are
/// curated separately.
pub fn rank_visual_words(
    words: &[(String, PosClass)],
    word_embs: &Matrix,
    image_embs: &Matrix,
) -> Result<VisualLexicon, RefMetricsError> {
    if word_embs.cols() != image_embs.cols() {
        return Err(RefMetricsError::DimensionMismatch {
            words: word_embs.cols(),
            images: image_embs.cols(),
        });
    }
    if words.len() != word_embs.rows() {
        return Err(RefMetricsError::RowMismatch {
            words: words.len(),
            rows: word_embs.rows(),
        });
    }
    let n_img = image_embs.rows().max(1) as f64;
    let mut ranked: Vec<RankedWord> = words
        .iter()
        .enumerate()
        .map(|(i, (w, class))| {
            let rel = (0..image_embs.rows())
                .map(|j| cosine(word_embs.row(i), image_embs.row(j)))
                .sum::<f64>()
                / n_img;
            RankedWord {
                word: normalize_word(w),
                relevance: rel,
                pos_class: *class,
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then_with(|| a.word.cmp(&b.word)));
    Ok(VisualLexicon {
        ranked_words: ranked,
        categories: BTreeMap::new(),
    })
}

/// Coverage ratios: four narrative categories then top-k visual words for
/// noun, verb, pronoun, adjective, adverb and all classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub values: [f64; 10],
    /// Features whose word set was empty and were set to zero.
    pub empty: [bool; 10],
}

pub fn coverage_features(
    t: &TokenizedTranscript,
    vl: &VisualLexicon,
    top_k: usize,
) -> Result<Coverage, RefMetricsError> {
    if top_k == 0 {
        return Err(RefMetricsError::ZeroTopK);
    }
    let present: BTreeSet<String> = t.words().map(|tok| normalize_word(&tok.surface)).collect();
    let mut values = [0.0; 10];
    let mut empty = [false; 10];
    let ratio = |set: &mut dyn Iterator<Item = &String>| -> Option<f64> {
        let mut total = 0usize;
        let mut hit = 0usize;
        for w in set {
            total += 1;
            hit += usize::from(present.contains(w));
        }
        (total > 0).then(|| hit as f64 / total as f64)
    };
    for (i, cat) in Category::ALL.iter().enumerate() {
        let empty_set = BTreeSet::new();
        let set = vl.categories.get(cat).unwrap_or(&empty_set);
        match ratio(&mut set.iter()) {
            Some(v) => values[i] = v,
            None => empty[i] = true,
        }
    }
    let classes: [Option<PosClass>; 6] = [
        Some(PosClass::Noun),
        Some(PosClass::Verb),
        Some(PosClass::Pronoun),
        Some(PosClass::Adj),
        Some(PosClass::Adv),
        None,
    ];
    for (i, class) in classes.iter().enumerate() {
        let mut top = vl
            .ranked_words
            .iter()
            .filter(|r| class.is_none_or(|c| r.pos_class == c))
            .take(top_k)
            .map(|r| &r.word);
        match ratio(&mut top) {
            Some(v) => values[4 + i] = v,
            None => empty[4 + i] = true,
        }
    }
    Ok(Coverage { values, empty })
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut m = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return m;
    }
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Clipped n-gram precision numerator and denominator against a set of
/// references (each hypothesis n-gram is clipped at its maximum count in any
/// single reference).
fn clipped_precision(hyp: &[String], refs: &[&[String]], n: usize) -> (usize, usize) {
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
    let mut matched = 0;
    let mut total = 0;
    for (g, &c) in &hyp_counts {
        let max_ref = ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
        matched += c.min(max_ref);
        total += c;
    }
    (matched, total)
}

/// Corpus-free sentence BLEU of `hyp` against one reference set, orders 1..=n,
/// uniform weights, no smoothing.
pub fn sentence_bleu(hyp: &[String], refs: &[&[String]], n: usize) -> f64 {
    if hyp.is_empty() || refs.is_empty() || n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for order in 1..=n {
        let (m, t) = clipped_precision(hyp, refs, order);
        if m == 0 || t == 0 {
            return 0.0;
        }
        log_sum += libm::log(m as f64 / t as f64);
    }
    let h = hyp.len();
    // closest reference length, shorter wins ties
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by(|a, b| a.abs_diff(h).cmp(&b.abs_diff(h)).then(a.cmp(b)))
        .unwrap_or(0);
    let bp = if h > r {
        1.0
    } else {
        libm::exp(1.0 - r as f64 / h as f64)
    };
    bp * libm::exp(log_sum / n as f64)
}

/// BLEU-n scored against each reference separately, then averaged.
pub fn bleu_n(hyp: &[String], refs: &[Vec<String>], n: usize) -> f64 {
    if refs.is_empty() {
        return 0.0;
    }
    refs.iter()
        .map(|r| sentence_bleu(hyp, &[r.as_slice()], n))
        .sum::<f64>()
        / refs.len() as f64
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l(hyp: &[String], reference: &[String]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(hyp, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / hyp.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Exact-match alignment: the i-th occurrence of a word in the hypothesis is
/// paired with its i-th occurrence in the reference. Returned pairs are
/// sorted by hypothesis position.
pub fn exact_alignment(hyp: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (i, w) in hyp.iter().enumerate() {
        if let Some(j) = (0..reference.len()).find(|&j| !used[j] && &reference[j] == w) {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Number of contiguous runs in an alignment sorted by hypothesis position.
pub fn count_chunks(alignment: &[(usize, usize)]) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// Unigram METEOR with exact matching only.
///
/// The fragmentation term counts breaks between chunks, so a hypothesis
/// identical to the reference scores exactly 1.
pub fn meteor(hyp: &[String], reference: &[String]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let alignment = exact_alignment(hyp, reference);
    let m = alignment.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / hyp.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    // one contiguous chunk carries no fragmentation
    let frag = (count_chunks(&alignment) - 1) as f64 / m;
    let penalty = METEOR_GAMMA * libm::pow(frag, METEOR_BETA);
    fmean * (1.0 - penalty)
}

/// BLEU-1..4, METEOR and ROUGE-L, each averaged over references.
pub fn similarity_scores(hyp: &[String], refs: &[Vec<String>]) -> Result<[f64; 6], RefMetricsError> {
    if refs.is_empty() {
        return Err(RefMetricsError::NoReferences);
    }
    let k = refs.len() as f64;
    let avg = |f: &dyn Fn(&[String]) -> f64| refs.iter().map(|r| f(r)).sum::<f64>() / k;
    Ok([
        bleu_n(hyp, refs, 1),
        bleu_n(hyp, refs, 2),
        bleu_n(hyp, refs, 3),
        bleu_n(hyp, refs, 4),
        avg(&|r| meteor(hyp, r)),
        avg(&|r| rouge_l(hyp, r)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenizedTranscript;
    use alloc::string::ToString;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(ToString::to_string).collect()
    }

    #[test]
    fn identity_scores_one() {
        let a = toks("the girl looks for the rabbit in the garden");
        for n in 1..=4 {
            assert_relative_eq!(bleu_n(&a, &[a.clone()], n), 1.0);
        }
        assert_relative_eq!(rouge_l(&a, &a), 1.0);
        assert_eq!(meteor(&a, &a), 1.0);
    }

    #[test]
    fn clipping() {
        let (m, t) = clipped_precision(&toks("the the the"), &[&toks("the cat")], 1);
        assert_eq!((m, t), (1, 3));
    }

    #[test]
    fn rouge_hand_case() {
        let f = rouge_l(&toks("a c d"), &toks("a b c d"));
        assert_relative_eq!(f, 2.0 * 0.75 / 1.75);
    }

    #[test]
    fn disjoint_vocab() {
        let a = toks("a b c");
        let b = toks("x y z");
        assert_eq!(rouge_l(&a, &b), 0.0);
        assert_eq!(meteor(&a, &b), 0.0);
        assert_eq!(bleu_n(&a, &[b], 1), 0.0);
    }

    #[test]
    fn brevity_penalty_applied() {
        let hyp = toks("a b");
        let r = toks("a b c d");
        assert_relative_eq!(bleu_n(&hyp, &[r], 1), libm::exp(1.0 - 2.0));
    }

    #[test]
    fn ranking_by_cosine() {
        let images = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let words = Matrix::from_rows(&[vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
        let names = [
            ("orth".to_string(), PosClass::Noun),
            ("both".to_string(), PosClass::Noun),
            ("first".to_string(), PosClass::Verb),
        ];
        let vl = rank_visual_words(&names, &words, &images).unwrap();
        let order: Vec<&str> = vl.ranked_words.iter().map(|r| r.word.as_str()).collect();
        assert_eq!(order, vec!["both", "first", "orth"]);
        assert_relative_eq!(vl.ranked_words[0].relevance, libm::sqrt(0.5));
        assert_relative_eq!(vl.ranked_words[1].relevance, 0.5);
        assert_eq!(vl.ranked_words[2].relevance, 0.0);

        let bad = Matrix::zeros(3, 4);
        assert!(matches!(
            rank_visual_words(&names, &bad, &images),
            Err(RefMetricsError::DimensionMismatch { .. })
        ));
    }

    fn lexicon() -> VisualLexicon {
        let mut categories = BTreeMap::new();
        categories.insert(
            Category::Character,
            ["girl", "dog", "rabbit", "goose", "cow"].iter().map(|s| s.to_string()).collect(),
        );
        VisualLexicon {
            ranked_words: vec![
                RankedWord { word: "rabbit".into(), relevance: 0.9, pos_class: PosClass::Noun },
                RankedWord { word: "run".into(), relevance: 0.8, pos_class: PosClass::Verb },
                RankedWord { word: "girl".into(), relevance: 0.7, pos_class: PosClass::Noun },
            ],
            categories,
        }
    }

    #[test]
    fn coverage_cases() {
        let vl = lexicon();
        let all = TokenizedTranscript::whitespace("girl dog rabbit goose cow");
        let c = coverage_features(&all, &vl, 50).unwrap();
        assert_eq!(c.values[1], 1.0);
        let none = TokenizedTranscript::whitespace("the sofa");
        assert_eq!(coverage_features(&none, &vl, 50).unwrap().values[1], 0.0);
        let three = TokenizedTranscript::whitespace("girl dog and a rabbit");
        let c = coverage_features(&three, &vl, 50).unwrap();
        assert_relative_eq!(c.values[1], 0.6);
        assert!(c.empty[0]);
        assert_eq!(c.values[0], 0.0);
        // top-1 noun is "rabbit"
        let c = coverage_features(&three, &vl, 1).unwrap();
        assert_eq!(c.values[4], 1.0);
        assert_eq!(c.values[5], 0.0);
        assert!(c.empty[6]);
        assert!(matches!(coverage_features(&three, &vl, 0), Err(RefMetricsError::ZeroTopK)));
    }

    proptest! {
        #[test]
        fn coverage_permutation_and_duplication(words in proptest::collection::vec(0usize..6, 1..20)) {
            let vocab = ["girl", "dog", "rabbit", "run", "sofa", "the"];
            let text: Vec<&str> = words.iter().map(|&i| vocab[i]).collect();
            let a = TokenizedTranscript::whitespace(&text.join(" "));
            let mut rev = text.clone();
            rev.reverse();
            rev.extend(text.iter().copied());
            let b = TokenizedTranscript::whitespace(&rev.join(" "));
            let vl = lexicon();
            prop_assert_eq!(coverage_features(&a, &vl, 2).unwrap(), coverage_features(&b, &vl, 2).unwrap());
        }

        #[test]
        fn scores_bounded_and_bleu_ordered(
            h in proptest::collection::vec(0usize..5, 1..15),
            r in proptest::collection::vec(0usize..5, 1..15),
        ) {
            let hyp: Vec<String> = h.iter().map(|i| i.to_string()).collect();
            let reference: Vec<String> = r.iter().map(|i| i.to_string()).collect();
            let refs = [reference.clone()];
            let s = similarity_scores(&hyp, &refs).unwrap();
            for v in s {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn ranking_scale_invariant(vals in proptest::collection::vec(-1.0f64..1.0, 12), c in 0.1f64..50.0) {
            let images = Matrix::from_vec(2, 3, vals[..6].to_vec());
            let words = Matrix::from_vec(2, 3, vals[6..].to_vec());
            let names = [("p".to_string(), PosClass::Noun), ("q".to_string(), PosClass::Noun)];
            let a = rank_visual_words(&names, &words, &images).unwrap();
            let scale = |m: &Matrix| Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|x| x * c).collect());
            let b = rank_visual_words(&names, &scale(&words), &scale(&images)).unwrap();
            let wa: Vec<_> = a.ranked_words.iter().map(|r| r.word.clone()).collect();
            let wb: Vec<_> = b.ranked_words.iter().map(|r| r.word.clone()).collect();
            if (a.ranked_words[0].relevance - a.ranked_words[1].relevance).abs() > 1e-9 {
                prop_assert_eq!(wa, wb);
            }
        }
    }
}
