//! Synthetic English picture-story corpus with every resource a run needs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsn_core::corpus::{EmbeddingSequence, Language, Split, Token};
use vsn_core::math::Matrix;
use vsn_core::synth::{gen_embedding_corpus, gen_vad, shared_images, EmbeddingSynthSpec};

use crate::error::Result;
use crate::formats::{write_bytes, write_embeddings, write_manifest, write_transcript, write_vad, ManifestLine, TranscriptFile};

pub const N_PARTICIPANTS: usize = 12;
pub const N_IMAGES: usize = 15;
pub const N_CHUNKS: usize = 15;
pub const HIDDEN: usize = 32;
pub const SEPARATION: f64 = 0.8;

const SCENES: [&str; 10] = [
    "the little rabbit wakes up at home",
    "mother rabbit gives him a basket",
    "he walks to the garden",
    "he picks big orange carrots",
    "a fox watches from the trees",
    "the rabbit runs away quickly",
    "he drops the basket near the river",
    "his friend the bird helps him",
    "they find the carrots again",
    "the rabbit goes back home happily",
];

const SWAPS: [(&str, &str); 4] = [("big", "large"), ("quickly", "fast"), ("little", "small"), ("happily", "slowly")];

const TAGS: [(&str, &str); 54] = [
    ("the", "DET"),
    ("a", "DET"),
    ("little", "ADJ"),
    ("small", "ADJ"),
    ("big", "ADJ"),
    ("large", "ADJ"),
    ("orange", "ADJ"),
    ("rabbit", "NOUN"),
    ("mother", "NOUN"),
    ("basket", "NOUN"),
    ("garden", "NOUN"),
    ("carrots", "NOUN"),
    ("fox", "NOUN"),
    ("trees", "NOUN"),
    ("river", "NOUN"),
    ("friend", "NOUN"),
    ("bird", "NOUN"),
    ("home", "NOUN"),
    ("thing", "NOUN"),
    ("wakes", "VERB"),
    ("gives", "VERB"),
    ("walks", "VERB"),
    ("picks", "VERB"),
    ("watches", "VERB"),
    ("runs", "VERB"),
    ("drops", "VERB"),
    ("helps", "VERB"),
    ("find", "VERB"),
    ("goes", "VERB"),
    ("is", "AUX"),
    ("up", "ADP"),
    ("at", "ADP"),
    ("to", "ADP"),
    ("from", "ADP"),
    ("near", "ADP"),
    ("away", "ADV"),
    ("quickly", "ADV"),
    ("fast", "ADV"),
    ("again", "ADV"),
    ("back", "ADV"),
    ("happily", "ADV"),
    ("slowly", "ADV"),
    ("there", "ADV"),
    ("he", "PRON"),
    ("him", "PRON"),
    ("his", "PRON"),
    ("they", "PRON"),
    ("it", "PRON"),
    ("um", "INTJ"),
    ("uh", "INTJ"),
    ("well", "INTJ"),
    ("like", "INTJ"),
    ("yeah", "INTJ"),
    ("okay", "INTJ"),
];

const NCD_INSERTS: [&str; 7] = ["um", "uh", "well", "like", "yeah", "okay", "there is a thing"];

fn tag(word: &str) -> &'static str {
    match word {
        "." => "PUNCT",
        w => TAGS.iter().find(|(t, _)| *t == w).map_or("X", |(_, g)| g),
    }
}

/// Sentences as word lists; punctuation is added when rendering.
fn narrative(ncd: bool, rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let mut scenes: Vec<Vec<String>> = SCENES
        .iter()
        .map(|s| {
            s.split(' ')
                .map(|w| {
                    let swap = SWAPS.iter().find(|(a, _)| *a == w).filter(|_| rng.random_bool(0.5));
                    swap.map_or(w, |(_, b)| b).to_string()
                })
                .collect()
        })
        .collect();
    if !ncd {
        return scenes;
    }
    scenes.truncate(SCENES.len() - 1);
    scenes.shuffle(rng);
    let keep = rng.random_range(5..=7);
    scenes.truncate(keep);
    for s in &mut scenes {
        for _ in 0..rng.random_range(1..=2) {
            let at = rng.random_range(0..=s.len());
            let ins = NCD_INSERTS[rng.random_range(0..NCD_INSERTS.len())];
            for (o, w) in ins.split(' ').enumerate() {
                s.insert(at + o, w.to_string());
            }
        }
        if rng.random_bool(0.5) {
            let at = rng.random_range(0..s.len());
            let w = s[at].clone();
            s.insert(at, w);
        }
    }
    scenes
}

fn render(sentences: &[Vec<String>]) -> TranscriptFile {
    let mut raw = String::new();
    let mut tokens = Vec::new();
    for s in sentences {
        for w in s.iter().map(String::as_str).chain(["."]) {
            if !raw.is_empty() && w != "." {
                raw.push(' ');
            }
            tokens.push(Token {
                surface: w.to_string(),
                pos: tag(w).to_string(),
                char_start: raw.chars().count(),
            });
            raw.push_str(w);
        }
    }
    TranscriptFile { raw_text: raw, tokens }
}

fn unit(rng: &mut ChaCha8Rng, h: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..h).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Story words sit near the pictures; filler words do not.
fn visual_embeddings(words: &[(&str, &str)], seed: u64) -> EmbeddingSequence {
    let images = shared_images(N_IMAGES, HIDDEN, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7157_0a11);
    let mut text = Matrix::zeros(words.len(), HIDDEN);
    for (i, (w, _)) in words.iter().enumerate() {
        let story = SCENES.iter().any(|s| s.split(' ').any(|x| x == *w));
        let weight = if story { 1.0 } else { 0.1 };
        let noise = unit(&mut rng, HIDDEN);
        let img = images.row(i % N_IMAGES);
        for c in 0..HIDDEN {
            text[(i, c)] = weight * img[c] + 0.5 * noise[c];
        }
    }
    EmbeddingSequence::unmasked(images, text).expect("shapes agree")
}

const CONFIG: &str = r#"seed = 7

[corpus]
manifest = "manifest.jsonl"
n_slices = 15

[lexicons]
stopwords = "lexicons/stopwords.txt"
filled_pauses = "lexicons/filled_pauses.txt"
lexical_fillers = "lexicons/lexical_fillers.txt"
backchannels = "lexicons/backchannels.txt"
functional_tags = "lexicons/functional_tags.txt"
cycle = "lexicons/cycle.txt"
categories = "lexicons/categories.txt"

[refmetrics]
references = ["references/ref1.txt", "references/ref2.txt"]
visual_words = "visual/words.tsv"
visual_embeddings = "visual/words.nme1"
top_k = 10

[dtm]
n_topics = 3
max_em_iters = 15

[shallow]
n_components = 3

[grid]
enabled = true
c = [0.5, 2.0]
n_components = [2, 3]
kernels = ["rbf"]
folds = 2

[titan]
epochs = 100
lr = 0.01
batch_size = 4

[explain]
mc_samples = 256
"#;

fn lines(words: &[&str]) -> String {
    words.iter().map(|w| format!("{w}\n")).collect()
}

/// Writes the corpus, resources and `config.toml` under `dir`.
pub fn generate(dir: &Path, seed: u64) -> Result<()> {
    let spec = EmbeddingSynthSpec::new(N_PARTICIPANTS, N_IMAGES, N_CHUNKS, HIDDEN, SEPARATION, seed);
    let people = gen_embedding_corpus(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = Vec::new();
    for (i, p) in people.iter().enumerate() {
        let ncd = p.grade >= 2;
        let sentences = narrative(ncd, &mut rng);
        let stem = format!("participants/{}", p.id);
        write_transcript(&dir.join(format!("{stem}.json")), &render(&sentences))?;
        let vad = gen_vad(sentences.len() * 2, f64::from(p.grade) / 4.0, seed.wrapping_add(i as u64));
        write_vad(&dir.join(format!("{stem}.vad.json")), &vad)?;
        write_embeddings(&dir.join(format!("{stem}.nme1")), &p.seq)?;
        manifest.push(ManifestLine {
            id: p.id.clone(),
            label: i64::from(p.grade),
            split: if i % 3 == 2 { Split::Test } else { Split::Train },
            language: Language::English,
            transcript: format!("{stem}.json"),
            vad: format!("{stem}.vad.json"),
            text_emb: format!("{stem}.nme1"),
            image_set: "rabbit".into(),
            syllables: None,
        });
    }
    write_manifest(&dir.join("manifest.jsonl"), &manifest)?;

    let lex = dir.join("lexicons");
    write_bytes(
        &lex.join("stopwords.txt"),
        lines(&["the", "a", "to", "at", "from", "near", "he", "him", "his", "they", "it", "is", "up"]).as_bytes(),
    )?;
    write_bytes(&lex.join("filled_pauses.txt"), lines(&["um", "uh", "er"]).as_bytes())?;
    write_bytes(&lex.join("lexical_fillers.txt"), lines(&["well", "like", "so"]).as_bytes())?;
    write_bytes(&lex.join("backchannels.txt"), lines(&["yeah", "okay", "mhm"]).as_bytes())?;
    write_bytes(
        &lex.join("functional_tags.txt"),
        lines(&["ADP", "AUX", "CCONJ", "DET", "PART", "SCONJ"]).as_bytes(),
    )?;
    write_bytes(&lex.join("cycle.txt"), lines(&["home"]).as_bytes())?;
    write_bytes(
        &lex.join("categories.txt"),
        "[introduction]\nwakes\nhome\nmorning\n\n[character]\nrabbit\nmother\nfox\nbird\nfriend\n\n\
         [object]\nbasket\ncarrots\ngarden\ntrees\nriver\n\n[action]\ngives\nwalks\npicks\nwatches\nruns\ndrops\nhelps\nfind\ngoes\n"
            .as_bytes(),
    )?;

    let mut ref_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed5);
    for r in 1..=2 {
        let text: Vec<String> = narrative(false, &mut ref_rng).iter().map(|s| format!("{}.", s.join(" "))).collect();
        write_bytes(&dir.join(format!("references/ref{r}.txt")), text.join(" ").as_bytes())?;
    }

    let words: Vec<(&str, &str)> = TAGS.iter().copied().filter(|(_, t)| *t != "INTJ").collect();
    let tsv: String = words.iter().map(|(w, t)| format!("{w}\t{t}\n")).collect();
    write_bytes(&dir.join("visual/words.tsv"), tsv.as_bytes())?;
    write_embeddings(&dir.join("visual/words.nme1"), &visual_embeddings(&words, seed))?;

    write_bytes(&dir.join("config.toml"), CONFIG.replacen("seed = 7", &format!("seed = {seed}"), 1).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use vsn_core::corpus::TokenizedTranscript;

    #[test]
    fn every_word_is_tagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for ncd in [false, true] {
            for _ in 0..20 {
                let t = render(&narrative(ncd, &mut rng));
                assert!(t.tokens.iter().all(|k| k.pos != "X"), "{:?}", t.raw_text);
                TokenizedTranscript::new(t.raw_text, t.tokens, None).unwrap();
            }
        }
    }

    #[test]
    fn controls_tell_the_whole_story_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = narrative(false, &mut rng);
        assert_eq!(s.len(), SCENES.len());
        assert!(s[9].contains(&"home".to_string()));
        for _ in 0..20 {
            let n = narrative(true, &mut rng);
            assert!(n.len() < SCENES.len());
            assert!(n.iter().all(|x| !x.contains(&"goes".to_string())));
            assert!(n.iter().flatten().any(|w| NCD_INSERTS.iter().any(|f| f.split(' ').any(|p| p == w))));
        }
    }
}
