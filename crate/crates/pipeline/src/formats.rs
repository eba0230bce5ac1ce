//! On-disk corpus formats: JSONL manifest, transcript and VAD JSON, word
//! lists, category files, reference narratives and embedding files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vsn_core::corpus::{
    decode_embeddings, encode_embeddings, normalize_word, EmbeddingSequence, Language, ParticipantRecord, Severity,
    Split, Token, TokenizedTranscript, VadSegments,
};
use vsn_core::refmetrics::Category;

use crate::error::{format_err, io_err, PipelineError, Result};

/// One manifest line. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLine {
    pub id: String,
    pub label: i64,
    pub split: Split,
    pub language: Language,
    pub transcript: String,
    pub vad: String,
    pub text_emb: String,
    pub image_set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syllables: Option<u32>,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Parses and validates every record. Referenced files must exist.
pub fn load_manifest(path: &Path) -> Result<Vec<ParticipantRecord>> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: ManifestLine = serde_json::from_str(raw).map_err(|e| PipelineError::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;
        let label = Severity::new(rec.label).map_err(|e| PipelineError::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;
        if rec.syllables == Some(0) {
            return Err(PipelineError::MalformedRecord {
                line,
                reason: "syllables must be positive".into(),
            });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(PipelineError::DuplicateId(rec.id));
        }
        let resolve = |rel: &str| -> Result<String> {
            let p = base.join(rel);
            if p.is_file() {
                Ok(p.to_string_lossy().into_owned())
            } else {
                Err(PipelineError::UnresolvablePath {
                    id: rec.id.clone(),
                    path: p,
                })
            }
        };
        out.push(ParticipantRecord {
            transcript_path: resolve(&rec.transcript)?,
            vad_path: resolve(&rec.vad)?,
            text_emb_path: resolve(&rec.text_emb)?,
            id: rec.id,
            label,
            split: rec.split,
            language: rec.language,
            image_set_id: rec.image_set,
            syllable_count: rec.syllables,
        });
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyManifest);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, lines: &[ManifestLine]) -> Result<()> {
    let mut s = String::new();
    for l in lines {
        s.push_str(&serde_json::to_string(l).map_err(|e| format_err(path, e))?);
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptFile {
    pub raw_text: String,
    pub tokens: Vec<Token>,
}

pub fn read_transcript(path: &Path, tagset: Option<&BTreeSet<String>>) -> Result<TokenizedTranscript> {
    let f: TranscriptFile = serde_json::from_str(&read_text(path)?).map_err(|e| format_err(path, e))?;
    Ok(TokenizedTranscript::new(f.raw_text, f.tokens, tagset)?)
}

pub fn write_transcript(path: &Path, t: &TranscriptFile) -> Result<()> {
    let s = serde_json::to_string_pretty(t).map_err(|e| format_err(path, e))?;
    write_bytes(path, s.as_bytes())
}

pub fn read_vad(path: &Path) -> Result<VadSegments> {
    let pairs: Vec<(f64, f64)> = serde_json::from_str(&read_text(path)?).map_err(|e| format_err(path, e))?;
    Ok(VadSegments::new(pairs)?)
}

pub fn write_vad(path: &Path, segments: &[(f64, f64)]) -> Result<()> {
    let s = serde_json::to_string(segments).map_err(|e| format_err(path, e))?;
    write_bytes(path, s.as_bytes())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSequence> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(decode_embeddings(&bytes)?)
}

pub fn write_embeddings(path: &Path, seq: &EmbeddingSequence) -> Result<()> {
    write_bytes(path, &encode_embeddings(seq))
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// One lowercase entry per line; blank lines and `#` comments skipped.
pub fn read_word_list(path: &Path) -> Result<BTreeSet<String>> {
    Ok(content_lines(&read_text(path)?).map(normalize_word).collect())
}

/// Tag lists keep their case.
pub fn read_tag_list(path: &Path) -> Result<BTreeSet<String>> {
    Ok(content_lines(&read_text(path)?).map(str::to_string).collect())
}

/// `[category]` headers, each followed by its words.
pub fn read_categories(path: &Path) -> Result<BTreeMap<Category, BTreeSet<String>>> {
    let mut out: BTreeMap<Category, BTreeSet<String>> = BTreeMap::new();
    let mut current = None;
    for line in content_lines(&read_text(path)?) {
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let cat = Category::from_name(name.trim()).ok_or_else(|| format_err(path, format!("unknown category {name}")))?;
            out.entry(cat).or_default();
            current = Some(cat);
        } else {
            let cat = current.ok_or_else(|| format_err(path, "word before the first [category] header"))?;
            out.entry(cat).or_default().insert(normalize_word(line));
        }
    }
    Ok(out)
}

/// Whitespace-tokenized, lowercased words of a reference narrative.
pub fn read_reference(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    Ok(TokenizedTranscript::whitespace(&text)
        .words()
        .map(|t| normalize_word(&t.surface))
        .collect())
}

/// `word<TAB>tag` lines.
pub fn read_tagged_words(path: &Path) -> Result<Vec<(String, String)>> {
    content_lines(&read_text(path)?)
        .map(|l| {
            let mut it = l.split('\t');
            match (it.next(), it.next(), it.next()) {
                (Some(w), Some(t), None) => Ok((w.trim().to_string(), t.trim().to_string())),
                _ => Err(format_err(path, format!("expected `word<TAB>tag`, got {l:?}"))),
            }
        })
        .collect()
}

pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vsn_core::math::Matrix;

    fn touch(dir: &Path, name: &str) {
        fs::write(dir.join(name), "x").unwrap();
    }

    fn line(id: &str, label: i64) -> String {
        format!(
            r#"{{"id":"{id}","label":{label},"split":"train","language":"english","transcript":"t.json","vad":"v.json","text_emb":"e.nme1","image_set":"rabbit"}}"#
        )
    }

    fn manifest(lines: &[String]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        for f in ["t.json", "v.json", "e.nme1"] {
            touch(dir.path(), f);
        }
        let p = dir.path().join("m.jsonl");
        fs::write(&p, lines.join("\n")).unwrap();
        (dir, p)
    }

    #[test]
    fn two_records() {
        let (_d, p) = manifest(&[line("a", 0), line("b", 3)]);
        let recs = load_manifest(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].label.value(), 3);
        assert!(recs[1].label.is_ncd());
        assert_eq!(load_manifest(&p).unwrap(), recs);
    }

    #[test]
    fn bad_records() {
        let (_d, p) = manifest(&[line("a", 0), line("b", 5)]);
        assert!(matches!(load_manifest(&p), Err(PipelineError::MalformedRecord { line: 2, .. })));
        let (_d, p) = manifest(&[line("a", 0), line("a", 1)]);
        assert!(matches!(load_manifest(&p), Err(PipelineError::DuplicateId(_))));
        let (_d, p) = manifest(&[line("a", 0).replace("t.json", "missing.json")]);
        assert!(matches!(load_manifest(&p), Err(PipelineError::UnresolvablePath { .. })));
        let (_d, p) = manifest(&[]);
        assert!(matches!(load_manifest(&p), Err(PipelineError::EmptyManifest)));
    }

    #[test]
    fn categories_and_lists() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "# curated\n[character]\nRabbit\nmother\n\n[object]\ncarrot\n").unwrap();
        let c = read_categories(&p).unwrap();
        assert_eq!(c[&Category::Character].len(), 2);
        assert!(c[&Category::Character].contains("rabbit"));
        fs::write(&p, "rabbit\n").unwrap();
        assert!(read_categories(&p).is_err());
        fs::write(&p, "[setting]\n").unwrap();
        assert!(read_categories(&p).is_err());
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.nme1");
        let img = Matrix::from_vec(15, 8, (0..120).map(|i| i as f64 * 0.25).collect());
        let txt = Matrix::from_vec(20, 8, (0..160).map(|i| -(i as f64) * 0.5).collect());
        let seq = EmbeddingSequence::unmasked(img, txt).unwrap();
        write_embeddings(&p, &seq).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), seq);
    }
}
