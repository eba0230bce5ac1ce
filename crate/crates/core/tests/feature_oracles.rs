mod support;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{acoustic_cases, acoustic_oracle, bleu_oracle, linguistic_cases, linguistic_oracle, meteor_oracle, rouge_l_oracle, LEXICON};
use vsn_core::acoustic::acoustic_features;
use vsn_core::corpus::{Token, TokenizedTranscript, VadSegments};
use vsn_core::linguistic::{linguistic_features, Lexicons, TagMap};
use vsn_core::refmetrics::{meteor, rouge_l, sentence_bleu};

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn lexicons() -> Lexicons {
    Lexicons {
        stopwords: set(LEXICON.stopwords),
        filled_pauses: set(LEXICON.filled_pauses),
        lexical_fillers: set(LEXICON.lexical_fillers),
        backchannels: set(LEXICON.backchannels),
        functional_pos_tags: set(LEXICON.functional_tags),
    }
}

fn transcript(words: &[(&str, &str)]) -> TokenizedTranscript {
    let mut raw = String::new();
    let mut tokens = Vec::new();
    for (w, tag) in words {
        tokens.push(Token {
            surface: w.to_string(),
            pos: tag.to_string(),
            char_start: raw.chars().count(),
        });
        raw.push_str(w);
        raw.push(' ');
    }
    TokenizedTranscript::new(raw, tokens, None).unwrap()
}

fn assert_features(got: &[f64], want: &[f64], count_slots: &[usize]) {
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if count_slots.contains(&i) {
            assert_eq!(g, w, "slot {i}");
        } else {
            assert!((g - w).abs() <= 1e-9, "slot {i}: {g} vs {w}");
        }
    }
}

#[test]
fn acoustic_matches_oracle() {
    for (segs, syl) in acoustic_cases() {
        let f = acoustic_features(&VadSegments::new(segs.clone()).unwrap(), syl).unwrap();
        assert_features(&f.to_array(), &acoustic_oracle(&segs, syl), &[0]);
    }
}

#[test]
fn acoustic_hand_values() {
    let f = acoustic_features(&VadSegments::new(vec![(0.0, 1.0), (2.0, 3.0)]).unwrap(), 4).unwrap();
    assert_features(&f.to_array(), &[1.0, 1.0, 1.0, 0.5, 0.5, 0.25, 2.0, 1.0, 2.0, 4.0 / 3.0], &[0]);
    let f = acoustic_features(&VadSegments::new(vec![(0.0, 2.0)]).unwrap(), 8).unwrap();
    assert_features(&f.to_array(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 4.0, 4.0], &[0]);
}

#[test]
fn linguistic_matches_oracle() {
    let lex = lexicons();
    for case in linguistic_cases() {
        let f = linguistic_features(&transcript(&case), &lex, &TagMap::universal()).unwrap();
        assert_features(&f.to_array(), &linguistic_oracle(&case, &LEXICON), &[0]);
    }
}

#[test]
fn linguistic_hand_values() {
    let case = [("the", "DET"), ("boy", "NOUN"), ("is", "AUX"), ("running", "VERB")];
    let f = linguistic_features(&transcript(&case), &lexicons(), &TagMap::universal()).unwrap();
    let want = [4.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25, 0.0, 0.25, 0.5, 4.0 / 8f64.sqrt()];
    assert_features(&f.to_array(), &want, &[0]);
}

fn random_tokens(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.random_range(1..=9);
    (0..n).map(|_| ["cat", "dog", "sink", "jar"][rng.random_range(0..4)].to_string()).collect()
}

#[test]
fn text_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let hyp = random_tokens(&mut rng);
        let reference = random_tokens(&mut rng);
        for n in 1..=4 {
            let got = sentence_bleu(&hyp, &[reference.as_slice()], n);
            assert!((got - bleu_oracle(&hyp, &reference, n)).abs() <= 1e-9);
        }
        assert!((rouge_l(&hyp, &reference) - rouge_l_oracle(&hyp, &reference)).abs() <= 1e-9);
        assert!((meteor(&hyp, &reference) - meteor_oracle(&hyp, &reference)).abs() <= 1e-9);
    }
}
