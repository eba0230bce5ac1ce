use vsn_core::corpus::Split;
use vsn_core::eval::{classification_metrics, binary_label, Task, DEFAULT_THRESHOLD};
use vsn_core::synth::{gen_embedding_corpus, EmbeddingSynthSpec};
use vsn_core::titan::{score, train, Sample, Target, TitanConfig};

fn run(separation: f64, seed: u64) -> (f64, f64) {
    let spec = EmbeddingSynthSpec {
        mask_prob: 0.2,
        ..EmbeddingSynthSpec::new(200, 6, 15, 32, separation, seed)
    };
    let people = gen_embedding_corpus(&spec);
    let to_sample = |p: &vsn_core::synth::SynthParticipant| Sample {
        seq: p.seq.clone(),
        target: Target::Class(binary_label(p.grade) as usize),
    };
    let train_set: Vec<Sample> = people.iter().filter(|p| p.split == Split::Train).map(to_sample).collect();
    let test: Vec<_> = people.iter().filter(|p| p.split == Split::Test).collect();
    let cfg = TitanConfig {
        epochs: 100,
        batch_size: 16,
        seed,
        ..TitanConfig::new(32, Task::Classify)
    };
    let out = train(&train_set, None, &cfg).unwrap();
    let scores: Vec<f64> = test.iter().map(|p| score(&out.params, &p.seq, &cfg).unwrap()).collect();
    let labels: Vec<u8> = test.iter().map(|p| binary_label(p.grade)).collect();
    let m = classification_metrics(&scores, &labels, DEFAULT_THRESHOLD).unwrap();
    (m.f1, m.auc)
}

#[test]
fn separable_corpus_is_learned() {
    let t = std::time::Instant::now();
    let (f1, auc) = run(1.0, 1);
    eprintln!("separated: f1 {f1:.3} auc {auc:.3} in {:?}", t.elapsed());
    assert!(f1 >= 0.9 && auc >= 0.95);
}

#[test]
fn null_corpus_is_chance() {
    let aucs: Vec<f64> = (0..5).map(|s| run(0.0, 100 + s).1).collect();
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    eprintln!("null aucs {aucs:?} mean {mean:.3}");
    assert!((0.4..=0.6).contains(&mean));
}
