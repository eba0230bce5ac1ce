//! Participant data model, transcript slicing and the `NME1` embedding codec.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::math::Matrix;

/// Default boundary punctuation, CJK and Latin sentence/clause marks.
pub const DEFAULT_PUNCTUATION: &str = "。，？！.,?!;";

pub const EMBEDDING_MAGIC: &[u8; 4] = b"NME1";
pub const EMBEDDING_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("severity label {0} outside 0..=4")]
    InvalidLabel(i64),
    #[error("token {index} starts at {char_start}, not after the previous token")]
    TokenOrder { index: usize, char_start: usize },
    #[error("token {index} starts past the end of the text")]
    TokenOutOfRange { index: usize },
    #[error("token {index} has tag {tag:?} outside the declared tag set")]
    UnknownTag { index: usize, tag: String },
    #[error("VAD segment {index} is invalid or overlaps its predecessor")]
    BadSegment { index: usize },
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("slice count must be at least 1")]
    ZeroSlices,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    VersionMismatch(u16),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("non-finite value in embedding payload")]
    NonFiniteValue,
    #[error("mask byte {0} is neither 0 nor 1")]
    InvalidMask(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Language {
    Cantonese,
    English,
}

/// Clinical severity on the 0..=4 scale. 0-1 are healthy controls, 2-4 NCD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "i64", into = "i64"))]
pub struct Severity(u8);

impl Severity {
    pub fn new(label: i64) -> Result<Self, CorpusError> {
        if (0..=4).contains(&label) {
            Ok(Self(label as u8))
        } else {
            Err(CorpusError::InvalidLabel(label))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_ncd(self) -> bool {
        self.0 >= 2
    }

    /// Binary target: 1 for NCD, 0 for HC.
    pub fn binary(self) -> u8 {
        u8::from(self.is_ncd())
    }

    /// Regression target on [0, 1].
    pub fn normalized(self) -> f64 {
        f64::from(self.0) / 4.0
    }
}

impl TryFrom<i64> for Severity {
    type Error = CorpusError;
    fn try_from(v: i64) -> Result<Self, CorpusError> {
        Self::new(v)
    }
}

impl From<Severity> for i64 {
    fn from(s: Severity) -> i64 {
        i64::from(s.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParticipantRecord {
    pub id: String,
    pub label: Severity,
    pub split: Split,
    pub language: Language,
    pub transcript_path: String,
    pub vad_path: String,
    pub text_emb_path: String,
    pub image_set_id: String,
    pub syllable_count: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Token {
    pub surface: String,
    pub pos: String,
    pub char_start: usize,
}

/// A transcript plus its segmentation and part-of-speech tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedTranscript {
    raw_text: String,
    tokens: Vec<Token>,
}

impl TokenizedTranscript {
    /// Validates token ordering and, when `tagset` is given, tag membership.
    pub fn new(
        raw_text: String,
        tokens: Vec<Token>,
        tagset: Option<&BTreeSet<String>>,
    ) -> Result<Self, CorpusError> {
        let n_chars = raw_text.chars().count();
        for (index, tok) in tokens.iter().enumerate() {
            if index > 0 && tok.char_start <= tokens[index - 1].char_start {
                return Err(CorpusError::TokenOrder {
                    index,
                    char_start: tok.char_start,
                });
            }
            if tok.char_start >= n_chars {
                return Err(CorpusError::TokenOutOfRange { index });
            }
            if let Some(set) = tagset {
                if !set.contains(&tok.pos) {
                    return Err(CorpusError::UnknownTag {
                        index,
                        tag: tok.pos.clone(),
                    });
                }
            }
        }
        Ok(Self { raw_text, tokens })
    }

    /// Splits on whitespace and peels leading/trailing punctuation into
    /// separate tokens. Every token is tagged `X`.
    pub fn whitespace(raw_text: &str) -> Self {
        let mut tokens = Vec::new();
        let chars: Vec<char> = raw_text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if chars[i].is_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            if !chars[i].is_alphanumeric() && chars[i] != '\'' {
                tokens.push(Token {
                    surface: chars[i].to_string(),
                    pos: "X".into(),
                    char_start: i,
                });
                i += 1;
                continue;
            }
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '\'') {
                i += 1;
            }
            tokens.push(Token {
                surface: chars[start..i].iter().collect(),
                pos: "X".into(),
                char_start: start,
            });
        }
        Self {
            raw_text: raw_text.to_string(),
            tokens,
        }
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Tokens that contain at least one alphanumeric character.
    pub fn words(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| is_word(&t.surface))
    }
}

/// A token counts as a word when it has at least one alphanumeric character.
pub fn is_word(surface: &str) -> bool {
    surface.chars().any(char::is_alphanumeric)
}

/// Lowercased surface form used for all lexical lookups.
pub fn normalize_word(surface: &str) -> String {
    surface.to_lowercase()
}

/// Ordered, non-overlapping voiced segments in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct VadSegments(Vec<(f64, f64)>);

impl VadSegments {
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self, CorpusError> {
        for (index, &(s, e)) in segments.iter().enumerate() {
            if !(s.is_finite() && e.is_finite()) || s < 0.0 || s >= e {
                return Err(CorpusError::BadSegment { index });
            }
            if index > 0 && s < segments[index - 1].1 {
                return Err(CorpusError::BadSegment { index });
            }
        }
        Ok(Self(segments))
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Image and text-chunk embeddings sharing one multimodal space.
///
/// `mask` covers the image rows first, then the text rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    image: Matrix,
    text: Matrix,
    mask: Vec<bool>,
}

impl EmbeddingSequence {
    pub fn new(image: Matrix, text: Matrix, mask: Vec<bool>) -> Result<Self, CorpusError> {
        if image.rows() == 0 || text.rows() == 0 {
            return Err(CorpusError::ShapeMismatch("need at least one image and one text row"));
        }
        if image.cols() != text.cols() {
            return Err(CorpusError::ShapeMismatch("image and text widths differ"));
        }
        if mask.len() != image.rows() + text.rows() {
            return Err(CorpusError::ShapeMismatch("mask length must equal J + K"));
        }
        if !mask.iter().any(|&m| m) {
            return Err(CorpusError::ShapeMismatch("mask has no valid rows"));
        }
        if !image.is_finite() || !text.is_finite() {
            return Err(CorpusError::NonFiniteValue);
        }
        Ok(Self { image, text, mask })
    }

    /// All rows valid.
    pub fn unmasked(image: Matrix, text: Matrix) -> Result<Self, CorpusError> {
        let n = image.rows() + text.rows();
        Self::new(image, text, vec![true; n])
    }

    pub fn image(&self) -> &Matrix {
        &self.image
    }

    pub fn text(&self) -> &Matrix {
        &self.text
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn hidden(&self) -> usize {
        self.image.cols()
    }

    pub fn n_images(&self) -> usize {
        self.image.rows()
    }

    pub fn n_texts(&self) -> usize {
        self.text.rows()
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Copy with the text rows reordered by `perm` (row `i` takes old row `perm[i]`).
    pub fn permute_text(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.text.rows());
        let j = self.image.rows();
        let mut text = Matrix::zeros(self.text.rows(), self.text.cols());
        let mut mask = self.mask.clone();
        for (i, &p) in perm.iter().enumerate() {
            text.row_mut(i).copy_from_slice(self.text.row(p));
            mask[j + i] = self.mask[j + p];
        }
        Self {
            image: self.image.clone(),
            text,
            mask,
        }
    }
}

/// Serializes to the `NME1` layout. Values are narrowed to `f32`.
pub fn encode_embeddings(seq: &EmbeddingSequence) -> Vec<u8> {
    let h = seq.hidden();
    let j = seq.n_images();
    let k = seq.n_texts();
    let mut out = Vec::with_capacity(18 + 4 * (j + k) * h + j + k);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(j as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    for &v in seq.image.as_slice().iter().chain(seq.text.as_slice()) {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend(seq.mask.iter().map(|&m| u8::from(m)));
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSequence, CorpusError> {
    if bytes.len() < 4 || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(CorpusError::BadMagic);
    }
    if bytes.len() < 18 {
        return Err(CorpusError::ShapeMismatch("truncated header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != EMBEDDING_VERSION {
        return Err(CorpusError::VersionMismatch(version));
    }
    let read_u32 = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize;
    let h = read_u32(6);
    let j = read_u32(10);
    let k = read_u32(14);
    let n_floats = (j + k)
        .checked_mul(h)
        .ok_or(CorpusError::ShapeMismatch("header dimensions overflow"))?;
    let expected = 18 + 4 * n_floats + j + k;
    if bytes.len() != expected {
        return Err(CorpusError::ShapeMismatch("payload length disagrees with header"));
    }
    let mut values = Vec::with_capacity(n_floats);
    for chunk in bytes[18..18 + 4 * n_floats].chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(CorpusError::NonFiniteValue);
        }
        values.push(f64::from(v));
    }
    let mut mask = Vec::with_capacity(j + k);
    for &b in &bytes[18 + 4 * n_floats..] {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            other => return Err(CorpusError::InvalidMask(other)),
        }
    }
    let text_vals = values.split_off(j * h);
    EmbeddingSequence::new(Matrix::from_vec(j, h, values), Matrix::from_vec(k, h, text_vals), mask)
}

/// A transcript cut into consecutive narrative slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedTranscript {
    /// Slice texts; their concatenation is the raw transcript.
    pub slices: Vec<String>,
    /// `slices.len() + 1` char offsets, first 0 and last the text length.
    pub boundaries: Vec<usize>,
    /// Normalized words of each slice, assigned by token start offset.
    pub words: Vec<Vec<String>>,
}

impl SlicedTranscript {
    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    /// Slices that carry no words (kept as empty documents).
    pub fn empty_slices(&self) -> Vec<usize> {
        self.words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    /// Builds a sliced document straight from per-slice word lists.
    pub fn from_words(words: Vec<Vec<String>>) -> Self {
        let mut slices = Vec::with_capacity(words.len());
        let mut boundaries = vec![0];
        let mut offset = 0;
        for w in &words {
            let mut s = w.join(" ");
            if !s.is_empty() {
                s.push(' ');
            }
            offset += s.chars().count();
            boundaries.push(offset);
            slices.push(s);
        }
        Self {
            slices,
            boundaries,
            words,
        }
    }
}

/// Cuts `t` into `n_slices` pieces of roughly equal character length, moving
/// each interior cut onto the nearest punctuation mark.
///
/// A moved cut sits *at* the punctuation character, which therefore opens the
/// following slice. Equidistant marks resolve to the later one. Cuts that
/// collapse onto the same mark fall back to their arithmetic positions, and
/// any remaining shortfall is made up by halving the longest slice, so the
/// result always has `n_slices` pieces and empty pieces only appear when the
/// text has fewer than `n_slices` characters.
pub fn slice_transcript(
    t: &TokenizedTranscript,
    n_slices: usize,
    punctuation: &str,
) -> Result<SlicedTranscript, CorpusError> {
    if n_slices == 0 {
        return Err(CorpusError::ZeroSlices);
    }
    let chars: Vec<char> = t.raw_text.chars().collect();
    let len = chars.len();
    if len == 0 {
        return Err(CorpusError::EmptyTranscript);
    }
    let marks: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(i, c)| *i > 0 && punctuation.contains(**c))
        .map(|(i, _)| i)
        .collect();

    let arithmetic: Vec<usize> = (1..n_slices)
        .map(|i| (2 * i * len + n_slices) / (2 * n_slices))
        .collect();
    let mut cuts: BTreeSet<usize> = arithmetic
        .iter()
        .map(|&c| nearest_mark(&marks, c).unwrap_or(c))
        .collect();
    for &c in &arithmetic {
        if cuts.len() + 1 >= n_slices {
            break;
        }
        if c > 0 && c < len {
            cuts.insert(c);
        }
    }
    while cuts.len() + 1 < n_slices {
        let mut bounds: Vec<usize> = Vec::with_capacity(cuts.len() + 2);
        bounds.push(0);
        bounds.extend(cuts.iter().copied());
        bounds.push(len);
        let widest = bounds
            .windows(2)
            .enumerate()
            .max_by(|a, b| (a.1[1] - a.1[0]).cmp(&(b.1[1] - b.1[0])).then(b.0.cmp(&a.0)))
            .map(|(_, w)| (w[0], w[1]))
            .unwrap_or((0, len));
        if widest.1 - widest.0 < 2 {
            break;
        }
        cuts.insert(widest.0 + (widest.1 - widest.0) / 2);
    }

    let mut boundaries = Vec::with_capacity(n_slices + 1);
    boundaries.push(0);
    boundaries.extend(cuts.iter().copied().filter(|&c| c > 0 && c < len));
    while boundaries.len() < n_slices {
        boundaries.push(len);
    }
    boundaries.push(len);

    let slices: Vec<String> = boundaries
        .windows(2)
        .map(|w| chars[w[0]..w[1]].iter().collect())
        .collect();
    let mut words = vec![Vec::new(); n_slices];
    for tok in t.words() {
        // last slice whose start is <= char_start, skipping empty slices
        let idx = boundaries[1..n_slices]
            .iter()
            .take_while(|&&b| b <= tok.char_start)
            .count();
        words[idx].push(normalize_word(&tok.surface));
    }
    Ok(SlicedTranscript {
        slices,
        boundaries,
        words,
    })
}

fn nearest_mark(marks: &[usize], cut: usize) -> Option<usize> {
    marks
        .iter()
        .copied()
        .min_by(|&a, &b| a.abs_diff(cut).cmp(&b.abs_diff(cut)).then(b.cmp(&a)))
}
