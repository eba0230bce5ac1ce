//! Lexical and part-of-speech features L1-L13.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;

use crate::corpus::{normalize_word, TokenizedTranscript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LinguisticError {
    #[error("transcript has no words")]
    EmptyTranscript,
}

pub const LINGUISTIC_FEATURE_NAMES: [&str; 13] = [
    "n_words",
    "stopword_ratio",
    "filled_pause_ratio",
    "lexical_filler_ratio",
    "backchannel_ratio",
    "repetition_ratio",
    "adj_ratio",
    "adv_ratio",
    "noun_ratio",
    "pronoun_ratio",
    "verb_ratio",
    "functional_ratio",
    "cttr",
];

/// Word lists, all lowercase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicons {
    pub stopwords: BTreeSet<String>,
    pub filled_pauses: BTreeSet<String>,
    pub lexical_fillers: BTreeSet<String>,
    pub backchannels: BTreeSet<String>,
    pub functional_pos_tags: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PosClass {
    Adj,
    Adv,
    Noun,
    Pronoun,
    Verb,
    Functional,
    Other,
}

/// Maps corpus-specific tags onto the coarse classes used by L7-L11.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TagMap(pub BTreeMap<String, PosClass>);

impl TagMap {
    /// Universal Dependencies tag set.
    pub fn universal() -> Self {
        let pairs = [
            ("ADJ", PosClass::Adj),
            ("ADV", PosClass::Adv),
            ("NOUN", PosClass::Noun),
            ("PROPN", PosClass::Noun),
            ("PRON", PosClass::Pronoun),
            ("VERB", PosClass::Verb),
            ("AUX", PosClass::Functional),
            ("ADP", PosClass::Functional),
            ("CCONJ", PosClass::Functional),
            ("SCONJ", PosClass::Functional),
            ("DET", PosClass::Functional),
            ("PART", PosClass::Functional),
        ];
        Self(pairs.iter().map(|(t, c)| ((*t).into(), *c)).collect())
    }

    pub fn class_of(&self, tag: &str) -> PosClass {
        self.0.get(tag).copied().unwrap_or(PosClass::Other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinguisticFeatures {
    pub n_words: usize,
    pub stopword_ratio: f64,
    pub filled_pause_ratio: f64,
    pub lexical_filler_ratio: f64,
    pub backchannel_ratio: f64,
    pub repetition_ratio: f64,
    pub adj_ratio: f64,
    pub adv_ratio: f64,
    pub noun_ratio: f64,
    pub pronoun_ratio: f64,
    pub verb_ratio: f64,
    pub functional_ratio: f64,
    pub cttr: f64,
}

impl LinguisticFeatures {
    pub fn to_array(&self) -> [f64; 13] {
        [
            self.n_words as f64,
            self.stopword_ratio,
            self.filled_pause_ratio,
            self.lexical_filler_ratio,
            self.backchannel_ratio,
            self.repetition_ratio,
            self.adj_ratio,
            self.adv_ratio,
            self.noun_ratio,
            self.pronoun_ratio,
            self.verb_ratio,
            self.functional_ratio,
            self.cttr,
        ]
    }
}

/// Computes L1-L13 over the word tokens of `t` (punctuation excluded).
pub fn linguistic_features(
    t: &TokenizedTranscript,
    lex: &Lexicons,
    tags: &TagMap,
) -> Result<LinguisticFeatures, LinguisticError> {
    let mut n = 0usize;
    let mut counts = [0usize; 11];
    let mut types = BTreeSet::new();
    let mut prev: Option<String> = None;
    for tok in t.words() {
        let w = normalize_word(&tok.surface);
        n += 1;
        counts[0] += usize::from(lex.stopwords.contains(&w));
        counts[1] += usize::from(lex.filled_pauses.contains(&w));
        counts[2] += usize::from(lex.lexical_fillers.contains(&w));
        counts[3] += usize::from(lex.backchannels.contains(&w));
        counts[4] += usize::from(prev.as_deref() == Some(w.as_str()));
        match tags.class_of(&tok.pos) {
            PosClass::Adj => counts[5] += 1,
            PosClass::Adv => counts[6] += 1,
            PosClass::Noun => counts[7] += 1,
            PosClass::Pronoun => counts[8] += 1,
            PosClass::Verb => counts[9] += 1,
            PosClass::Functional | PosClass::Other => {}
        }
        counts[10] += usize::from(lex.functional_pos_tags.contains(&tok.pos));
        types.insert(w.clone());
        prev = Some(w);
    }
    if n == 0 {
        return Err(LinguisticError::EmptyTranscript);
    }
    let r = |c: usize| c as f64 / n as f64;
    Ok(LinguisticFeatures {
        n_words: n,
        stopword_ratio: r(counts[0]),
        filled_pause_ratio: r(counts[1]),
        lexical_filler_ratio: r(counts[2]),
        backchannel_ratio: r(counts[3]),
        repetition_ratio: r(counts[4]),
        adj_ratio: r(counts[5]),
        adv_ratio: r(counts[6]),
        noun_ratio: r(counts[7]),
        pronoun_ratio: r(counts[8]),
        verb_ratio: r(counts[9]),
        functional_ratio: r(counts[10]),
        cttr: types.len() as f64 / libm::sqrt(2.0 * n as f64),
    })
}
