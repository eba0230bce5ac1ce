//! Feature families, system definitions and per-participant extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use vsn_core::acoustic::{acoustic_features, ACOUSTIC_FEATURE_NAMES};
use vsn_core::corpus::{
    normalize_word, slice_transcript, Language, ParticipantRecord, Split, SlicedTranscript, TokenizedTranscript,
};
use vsn_core::dtm::{dtm_statistics, infer_trajectory, TopicModelState, TopicTrajectory, DTM_FEATURE_NAMES};
use vsn_core::linguistic::{linguistic_features, Lexicons, TagMap, LINGUISTIC_FEATURE_NAMES};
use vsn_core::math::Matrix;
use vsn_core::refmetrics::{coverage_features, rank_visual_words, similarity_scores, VisualLexicon, REFERENCE_FEATURE_NAMES};

use crate::config::RunConfig;
use crate::error::{format_err, PipelineError, Result};
use crate::formats::{
    load_manifest, read_categories, read_embeddings, read_reference, read_tag_list, read_tagged_words, read_transcript,
    read_vad, read_word_list,
};
use crate::output::{fmt_f64, parse_f64, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    Acoustic,
    Linguistic,
    Reference,
    Dtm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Acoustic, Family::Linguistic, Family::Reference, Family::Dtm];

    pub fn name(self) -> &'static str {
        match self {
            Family::Acoustic => "acoustic",
            Family::Linguistic => "linguistic",
            Family::Reference => "reference",
            Family::Dtm => "dtm",
        }
    }

    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            Family::Acoustic => &ACOUSTIC_FEATURE_NAMES,
            Family::Linguistic => &LINGUISTIC_FEATURE_NAMES,
            Family::Reference => &REFERENCE_FEATURE_NAMES,
            Family::Dtm => &DTM_FEATURE_NAMES,
        }
    }

    pub fn file(self) -> String {
        format!("features/{}.csv", self.name())
    }
}

pub const TITAN_SYSTEM: u8 = 8;

/// Feature families of systems 1-7. System 8 is the embedding model.
pub fn system_families(system: u8) -> Result<&'static [Family]> {
    use Family::*;
    Ok(match system {
        1 => &[Acoustic],
        2 => &[Linguistic],
        3 => &[Acoustic, Linguistic],
        4 => &[Reference],
        5 => &[Dtm],
        6 => &[Reference, Dtm],
        7 => &[Acoustic, Linguistic, Reference, Dtm],
        _ => return Err(PipelineError::UnsupportedSystem(system)),
    })
}

pub fn system_label(system: u8) -> &'static str {
    match system {
        1 => "Acoustics",
        2 => "Linguistics",
        3 => "Acoustics + Linguistics",
        4 => "Reference metrics",
        5 => "DTM statistics",
        6 => "Reference metrics + DTM statistics",
        7 => "All statistics",
        8 => "Text-image embeddings",
        _ => "unknown",
    }
}

pub fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn parse_split(path: &Path, s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format_err(path, format!("unknown split {s:?}"))),
    }
}

pub const ID_COLUMNS: [&str; 3] = ["id", "label", "split"];

/// Everything extraction needs besides the participants' own files.
#[derive(Debug, Clone)]
pub struct Resources {
    pub records: Vec<ParticipantRecord>,
    pub tagset: Option<BTreeSet<String>>,
    pub lexicons: Lexicons,
    pub cycle: BTreeSet<String>,
    pub visual: VisualLexicon,
    pub references: Vec<Vec<String>>,
    pub n_slices: usize,
    pub punctuation: String,
    pub top_k: usize,
}

impl Resources {
    pub fn load(cfg: &RunConfig, base: &Path) -> Result<Self> {
        let p = |rel: &str| base.join(rel);
        let records = load_manifest(&p(&cfg.corpus.manifest))?;
        let tagset = cfg.corpus.tagset.as_deref().map(|t| read_tag_list(&p(t))).transpose()?;
        let lx = &cfg.lexicons;
        let lexicons = Lexicons {
            stopwords: read_word_list(&p(&lx.stopwords))?,
            filled_pauses: read_word_list(&p(&lx.filled_pauses))?,
            lexical_fillers: read_word_list(&p(&lx.lexical_fillers))?,
            backchannels: read_word_list(&p(&lx.backchannels))?,
            functional_pos_tags: read_tag_list(&p(&lx.functional_tags))?,
        };
        let tags = TagMap::universal();
        let words: Vec<_> = read_tagged_words(&p(&cfg.refmetrics.visual_words))?
            .into_iter()
            .map(|(w, t)| (w, tags.class_of(&t)))
            .collect();
        let emb = read_embeddings(&p(&cfg.refmetrics.visual_embeddings))?;
        let mut visual = rank_visual_words(&words, emb.text(), emb.image())?;
        visual.categories = read_categories(&p(&lx.categories))?;
        let references = cfg
            .refmetrics
            .references
            .iter()
            .map(|r| read_reference(&p(r)))
            .collect::<Result<_>>()?;
        Ok(Self {
            records,
            tagset,
            lexicons,
            cycle: read_word_list(&p(&lx.cycle))?,
            visual,
            references,
            n_slices: cfg.corpus.n_slices,
            punctuation: cfg.corpus.punctuation.clone(),
            top_k: cfg.refmetrics.top_k,
        })
    }

    pub fn transcript(&self, rec: &ParticipantRecord) -> Result<TokenizedTranscript> {
        read_transcript(Path::new(&rec.transcript_path), self.tagset.as_ref())
    }

    pub fn sliced(&self, rec: &ParticipantRecord) -> Result<SlicedTranscript> {
        Ok(slice_transcript(&self.transcript(rec)?, self.n_slices, &self.punctuation)?)
    }
}

/// Vowel groups in an English word, at least one.
fn english_syllables(word: &str) -> u32 {
    let mut n = 0;
    let mut prev = false;
    for c in word.chars() {
        let v = matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
        n += u32::from(v && !prev);
        prev = v;
    }
    n.max(1)
}

/// Manifest count when given; otherwise one per Cantonese character or an
/// English vowel-group estimate.
pub fn syllable_count(rec: &ParticipantRecord, t: &TokenizedTranscript) -> u32 {
    rec.syllable_count.unwrap_or_else(|| {
        t.words()
            .map(|w| match rec.language {
                Language::Cantonese => w.surface.chars().filter(|c| c.is_alphanumeric()).count() as u32,
                Language::English => english_syllables(&w.surface),
            })
            .sum()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFeatures {
    pub acoustic: [f64; 10],
    pub linguistic: [f64; 13],
    pub reference: [f64; 16],
}

pub fn surface_features(rec: &ParticipantRecord, res: &Resources) -> Result<SurfaceFeatures> {
    let t = res.transcript(rec)?;
    let vad = read_vad(Path::new(&rec.vad_path))?;
    let acoustic = acoustic_features(&vad, syllable_count(rec, &t))?.to_array();
    let linguistic = linguistic_features(&t, &res.lexicons, &TagMap::universal())?.to_array();
    let cov = coverage_features(&t, &res.visual, res.top_k)?;
    let hyp: Vec<String> = t.words().map(|w| normalize_word(&w.surface)).collect();
    let sim = similarity_scores(&hyp, &res.references)?;
    let mut reference = [0.0; 16];
    reference[..10].copy_from_slice(&cov.values);
    reference[10..].copy_from_slice(&sim);
    Ok(SurfaceFeatures {
        acoustic,
        linguistic,
        reference,
    })
}

/// A participant that could not be processed, with the failing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub id: String,
    pub stage: &'static str,
    pub error: String,
}

fn family_table(family: Family) -> Table {
    let mut h: Vec<&str> = ID_COLUMNS.to_vec();
    h.extend_from_slice(family.feature_names());
    Table::new(&h)
}

fn row(rec: &ParticipantRecord, values: &[f64]) -> Vec<String> {
    let mut r = vec![
        rec.id.clone(),
        rec.label.value().to_string(),
        split_name(rec.split).to_string(),
    ];
    r.extend(values.iter().map(|v| fmt_f64(*v)));
    r
}

/// Acoustic, linguistic and reference tables, in manifest order. A
/// participant failing any family is left out of all three.
pub fn extract_surface(res: &Resources) -> (Vec<(Family, Table)>, Vec<Failure>) {
    let results: Vec<_> = res.records.par_iter().map(|r| surface_features(r, res)).collect();
    let mut tables = [
        family_table(Family::Acoustic),
        family_table(Family::Linguistic),
        family_table(Family::Reference),
    ];
    let mut failures = Vec::new();
    for (rec, out) in res.records.iter().zip(results) {
        match out {
            Ok(f) => {
                tables[0].push(row(rec, &f.acoustic));
                tables[1].push(row(rec, &f.linguistic));
                tables[2].push(row(rec, &f.reference));
            }
            Err(e) => {
                log::warn!("participant {} excluded: {e}", rec.id);
                failures.push(Failure {
                    id: rec.id.clone(),
                    stage: "surface",
                    error: e.to_string(),
                });
            }
        }
    }
    let [a, l, r] = tables;
    (vec![(Family::Acoustic, a), (Family::Linguistic, l), (Family::Reference, r)], failures)
}

/// Per-participant trajectory plus its six statistics.
pub fn dtm_participant(
    state: &TopicModelState,
    rec: &ParticipantRecord,
    res: &Resources,
) -> Result<(TopicTrajectory, [f64; 6])> {
    let doc = res.sliced(rec)?;
    let traj = infer_trajectory(state, &doc)?;
    let stats = dtm_statistics(state, &doc, &traj, &res.cycle)?;
    Ok((traj, stats.to_array()))
}

/// DTM statistics table and long-form trajectory table.
pub fn extract_dtm(state: &TopicModelState, res: &Resources) -> (Table, Table, Vec<Failure>) {
    let results: Vec<_> = res.records.par_iter().map(|r| dtm_participant(state, r, res)).collect();
    let mut stats = family_table(Family::Dtm);
    let mut h: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.push("slice".into());
    h.extend((0..state.n_topics()).map(|k| format!("topic_{k}")));
    let mut traj = Table::new(&h);
    let mut failures = Vec::new();
    for (rec, out) in res.records.iter().zip(results) {
        match out {
            Ok((tr, s)) => {
                stats.push(row(rec, &s));
                for t in 0..tr.theta.rows() {
                    let mut r = row(rec, &[]);
                    r.push(t.to_string());
                    r.extend(tr.theta.row(t).iter().map(|v| fmt_f64(*v)));
                    traj.push(r);
                }
            }
            Err(e) => {
                log::warn!("participant {} excluded from topic features: {e}", rec.id);
                failures.push(Failure {
                    id: rec.id.clone(),
                    stage: "dtm",
                    error: e.to_string(),
                });
            }
        }
    }
    (stats, traj, failures)
}

/// Participants by features for one system, joined across families.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub ids: Vec<String>,
    pub grades: Vec<u8>,
    pub splits: Vec<Split>,
    pub names: Vec<String>,
    pub x: Matrix,
}

impl FeatureSet {
    /// Inner join on participant id, keeping the first table's order.
    pub fn join(tables: &[(&Path, Table)]) -> Result<Self> {
        let (first_path, first) = tables.first().ok_or(PipelineError::NoParticipants("feature join"))?;
        let mut names = Vec::new();
        let mut lookup: Vec<BTreeMap<&str, &Vec<String>>> = Vec::new();
        for (path, t) in tables {
            if t.header[..3] != ID_COLUMNS {
                return Err(format_err(path, "expected id,label,split leading columns"));
            }
            names.extend(t.header[3..].iter().cloned());
            lookup.push(t.rows.iter().map(|r| (r[0].as_str(), r)).collect());
        }
        let (mut ids, mut grades, mut splits, mut data) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        'rows: for r in &first.rows {
            let mut values = Vec::with_capacity(names.len());
            for ((path, _), m) in tables.iter().zip(&lookup) {
                let Some(other) = m.get(r[0].as_str()) else { continue 'rows };
                for v in &other[3..] {
                    values.push(parse_f64(path, v)?);
                }
            }
            ids.push(r[0].clone());
            grades.push(r[1].parse().map_err(|_| format_err(first_path, format!("bad label {:?}", r[1])))?);
            splits.push(parse_split(first_path, &r[2])?);
            data.extend(values);
        }
        if ids.is_empty() {
            return Err(PipelineError::NoParticipants("feature join"));
        }
        let x = Matrix::from_vec(ids.len(), names.len(), data);
        Ok(Self {
            ids,
            grades,
            splits,
            names,
            x,
        })
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn to_table(&self) -> Table {
        let mut h: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).collect();
        h.extend(self.names.iter().cloned());
        let mut t = Table::new(&h);
        for i in 0..self.ids.len() {
            let mut r = vec![self.ids[i].clone(), self.grades[i].to_string(), split_name(self.splits[i]).into()];
            r.extend(self.x.row(i).iter().map(|v| fmt_f64(*v)));
            t.push(r);
        }
        t
    }
}
