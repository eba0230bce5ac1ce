//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{
    acoustic_cases, acoustic_oracle, active_set_dual_max, bleu_oracle, largest_principal_angle_sine, linguistic_cases,
    linguistic_oracle, matched_topic_cosine, max_drift_tv, meteor_oracle, rouge_l_oracle, LEXICON,
};
use vsn_core::acoustic::acoustic_features;
use vsn_core::corpus::{EmbeddingSequence, Severity, SlicedTranscript, Split, Token, TokenizedTranscript, VadSegments};
use vsn_core::dtm::{dtm_statistics, fit_dtm, topic_consistency, DtmConfig, TopicModelState, TopicTrajectory};
use vsn_core::eval::{binary_label, classification_metrics, normalize_label, roc_auc, Confusion, Task, DEFAULT_THRESHOLD};
use vsn_core::explain::{shap_values, ShapMethod};
use vsn_core::linguistic::{linguistic_features, Lexicons, TagMap};
use vsn_core::math::Matrix;
use vsn_core::refmetrics::{meteor, rouge_l, sentence_bleu};
use vsn_core::shallow::{fit_pca, fit_svc, kernel_matrix, Kernel, SvmParams};
use vsn_core::synth::{gen_dtm_corpus, gen_embedding_corpus, DtmSynthSpec, EmbeddingSynthSpec};
use vsn_core::titan::{
    backward, forward, loss, rope_encode, score, train, Sample, Target, TitanConfig, TitanParameters, IMAGE_ROPE_BASE,
    PARAMETER_NAMES, TEXT_ROPE_BASE,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, || format!("{what} took {elapsed:.1?}, limit {limit:?}"))
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_seq(rng: &mut ChaCha8Rng, j: usize, k: usize, h: usize, mask: Vec<bool>) -> EmbeddingSequence {
    EmbeddingSequence::new(random_matrix(rng, j, h), random_matrix(rng, k, h), mask).unwrap()
}

fn target_for(task: Task) -> Target {
    match task {
        Task::Classify => Target::Class(1),
        Task::Regress => Target::Value(0.75),
    }
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na.max(nb) == 0.0 {
        0.0
    } else {
        diff / na.max(nb)
    }
}

fn titan_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let seeds = 0..6u64;
    for seed in seeds.clone() {
        let task = if seed % 2 == 0 { Task::Classify } else { Task::Regress };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = TitanConfig {
            bottleneck: 4,
            ..TitanConfig::new(6, task)
        };
        let p = TitanParameters::init(&cfg, &mut rng);
        let seq = random_seq(&mut rng, 2, 3, 6, vec![true, true, true, true, false]);
        let target = target_for(task);
        let analytic = backward(&forward(&p, &seq, &cfg).unwrap(), &p, target, &cfg);
        let h = 1e-6;
        for (ti, name) in PARAMETER_NAMES.iter().enumerate() {
            let n = p.tensors()[ti].len();
            let mut numeric = vec![0.0; n];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let mut plus = p.clone();
                plus.tensors_mut()[ti][i] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti][i] -= h;
                let lp = loss(&forward(&plus, &seq, &cfg).unwrap(), target);
                let lm = loss(&forward(&minus, &seq, &cfg).unwrap(), target);
                *slot = (lp - lm) / (2.0 * h);
            }
            let e = relative_error(analytic.tensors()[ti], &numeric);
            ensure(e < 1e-4, || format!("seed {seed}, {name}: relative error {e:e}"))?;
            worst = worst.max(e);
        }
    }
    within(start.elapsed(), Duration::from_secs(10), "gradient check")?;
    Ok(format!("{} seeds, max relative error {worst:.2e}", seeds.count()))
}

fn rope_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut norm_err, mut shift_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..500 {
        let width = 2 * rng.random_range(1..=8);
        let q = random_matrix(&mut rng, 1, width);
        let k = random_matrix(&mut rng, 1, width);
        let (i, j, s) = (rng.random_range(0..200), rng.random_range(0..200), rng.random_range(0..200));
        for base in [IMAGE_ROPE_BASE, TEXT_ROPE_BASE] {
            let enc = |x: &Matrix, pos: usize| rope_encode(x, &[pos], base).unwrap();
            let rq = enc(&q, i);
            norm_err = norm_err.max((vsn_core::math::norm(rq.row(0)) - vsn_core::math::norm(q.row(0))).abs());
            let dot = |a: &Matrix, b: &Matrix| a.row(0).iter().zip(b.row(0)).map(|(x, y)| x * y).sum::<f64>();
            let before = dot(&rq, &enc(&k, j));
            let after = dot(&enc(&q, i + s), &enc(&k, j + s));
            shift_err = shift_err.max((before - after).abs());
        }
    }
    ensure(norm_err <= 1e-6, || format!("norm changed by {norm_err:e}"))?;
    ensure(shift_err <= 1e-6, || format!("shifted inner product changed by {shift_err:e}"))?;
    Ok(format!("norm {norm_err:.1e}, shift {shift_err:.1e} over 1000 encodings"))
}

fn masking_contract() -> Outcome {
    let mut worst_out: f64 = 0.0;
    let mut worst_row: f64 = 0.0;
    for seed in 0..10u64 {
        let task = if seed % 2 == 0 { Task::Classify } else { Task::Regress };
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let cfg = TitanConfig::new(8, task);
        let p = TitanParameters::init(&cfg, &mut rng);
        let mask = vec![true, true, true, true, true, true, false, false];
        let seq = random_seq(&mut rng, 3, 5, 8, mask.clone());
        let mut text = seq.text().clone();
        for r in [3, 4] {
            for c in 0..8 {
                text[(r, c)] = 100.0 * rng.random_range(-1.0..1.0);
            }
        }
        let other = EmbeddingSequence::new(seq.image().clone(), text, mask).unwrap();
        let a = forward(&p, &seq, &cfg).unwrap();
        let b = forward(&p, &other, &cfg).unwrap();
        for (x, y) in a.output.iter().zip(&b.output) {
            worst_out = worst_out.max((x - y).abs());
        }
        for (i, &valid) in a.valid_rows().iter().enumerate() {
            if valid {
                worst_row = worst_row.max((a.attention.row(i).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    ensure(worst_out < 1e-6, || format!("masked rows moved the output by {worst_out:e}"))?;
    ensure(worst_row <= 1e-6, || format!("attention row sum off by {worst_row:e}"))?;
    Ok(format!("output shift {worst_out:.1e}, row-sum error {worst_row:.1e}"))
}

fn permutation_test() -> Outcome {
    let mut invariant: f64 = 0.0;
    let mut variant = f64::INFINITY;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let on = TitanConfig::new(8, Task::Regress);
        let mut off = on;
        off.rope.enabled = false;
        // unit-scale weights, so attention is far from uniform
        let mut p = TitanParameters::zeros(&on);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        }
        let seq = random_seq(&mut rng, 3, 6, 8, vec![true; 9]);
        let mut perm: Vec<usize> = (0..6).collect();
        while perm.iter().enumerate().all(|(i, &v)| i == v) {
            perm.shuffle(&mut rng);
        }
        let shuffled = seq.permute_text(&perm);
        let y = |s: &EmbeddingSequence, cfg: &TitanConfig| forward(&p, s, cfg).unwrap().output[0];
        invariant = invariant.max((y(&seq, &off) - y(&shuffled, &off)).abs());
        variant = variant.min((y(&seq, &on) - y(&shuffled, &on)).abs());
    }
    ensure(invariant <= 1e-6, || format!("RoPE off: prediction moved by {invariant:e}"))?;
    ensure(variant >= 1e-3, || format!("RoPE on: smallest change {variant:e}"))?;
    Ok(format!("off {invariant:.1e}, on min {variant:.2e} over 10 fixtures"))
}

fn titan_run(separation: f64, seed: u64) -> (f64, f64, Duration) {
    let start = Instant::now();
    let spec = EmbeddingSynthSpec {
        mask_prob: 0.2,
        ..EmbeddingSynthSpec::new(200, 6, 15, 32, separation, seed)
    };
    let people = gen_embedding_corpus(&spec);
    let train_set: Vec<Sample> = people
        .iter()
        .filter(|p| p.split == Split::Train)
        .map(|p| Sample {
            seq: p.seq.clone(),
            target: Target::Class(binary_label(p.grade) as usize),
        })
        .collect();
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
    (m.f1, m.auc, start.elapsed())
}

fn titan_end_to_end() -> Outcome {
    let limit = Duration::from_secs(120);
    let (f1, auc, took) = titan_run(1.0, 1);
    within(took, limit, "separated run")?;
    ensure(f1 >= 0.9 && auc >= 0.95, || format!("separated corpus: f1 {f1:.3}, auc {auc:.3}"))?;
    let mut aucs = Vec::new();
    for seed in 100..105 {
        let (_, a, took) = titan_run(0.0, seed);
        within(took, limit, "null run")?;
        aucs.push(a);
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    ensure((0.4..=0.6).contains(&mean), || format!("null corpus: mean auc {mean:.3} from {aucs:.3?}"))?;
    Ok(format!("f1 {f1:.3}, auc {auc:.3}; null mean auc {mean:.3} over 5 seeds"))
}

fn dtm_checks() -> Outcome {
    let limit = Duration::from_secs(300);
    let start = Instant::now();
    let c = gen_dtm_corpus(&DtmSynthSpec::new(3, 50, 15, 200, 0.005, 7));
    let s = fit_dtm(
        &c.docs,
        &DtmConfig {
            n_topics: 3,
            ..DtmConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    within(start.elapsed(), limit, "recovery fit")?;
    for (i, w) in s.elbo_trace.windows(2).enumerate() {
        ensure(w[1] >= w[0] - 1e-6 * w[0].abs().max(1.0), || {
            format!("ELBO fell at iteration {}: {} -> {}", i + 1, w[0], w[1])
        })?;
    }
    let cos = matched_topic_cosine(&c, &s);
    ensure(cos >= 0.8, || format!("mean matched cosine {cos:.3}"))?;

    let start = Instant::now();
    let c = gen_dtm_corpus(&DtmSynthSpec::new(3, 50, 15, 200, 0.0, 8));
    let s = fit_dtm(
        &c.docs,
        &DtmConfig {
            n_topics: 3,
            sigma2: 1e-8,
            ..DtmConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    within(start.elapsed(), limit, "static fit")?;
    let tv = max_drift_tv(&s);
    ensure(tv < 0.05, || format!("max total variation {tv:.4}"))?;
    Ok(format!("recovery cosine {cos:.3}, static TV {tv:.2e}"))
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

fn hand_state(n_slices: usize) -> TopicModelState {
    // topic 0 ranks w00..w09 highest at every slice and dominates the corpus
    let vocab: Vec<String> = (0..20).map(|i| format!("w{i:02}")).collect();
    let mut beta = Vec::new();
    for k in 0..2 {
        for _ in 0..n_slices {
            beta.extend((0..20).map(|v| if (v < 10) == (k == 0) { 2.0 - 0.01 * v as f64 } else { -2.0 }));
        }
    }
    let theta = Matrix::from_vec(n_slices, 2, [0.8, 0.2].repeat(n_slices));
    let cfg = DtmConfig {
        n_topics: 2,
        n_slices,
        ..DtmConfig::default()
    };
    TopicModelState::from_parts(cfg, vocab, beta, theta).unwrap()
}

fn random_simplex_rows(rng: &mut ChaCha8Rng, t: usize, k: usize) -> Matrix {
    let mut data = Vec::with_capacity(t * k);
    for _ in 0..t {
        let row: Vec<f64> = if rng.random_bool(0.2) {
            let hot = rng.random_range(0..k);
            (0..k).map(|i| f64::from(u8::from(i == hot))).collect()
        } else {
            (0..k).map(|_| -rng.random_range(1e-9f64..1.0).ln()).collect()
        };
        let total: f64 = row.iter().sum();
        data.extend(row.iter().map(|x| x / total));
    }
    Matrix::from_vec(t, k, data)
}

fn dtm_statistic_ranges() -> Outcome {
    let t_n = 15;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = 3;
    let vocab: Vec<String> = (0..30).map(|i| format!("w{i:02}")).collect();
    let beta: Vec<f64> = (0..k * t_n * 30).map(|_| rng.random_range(-3.0..3.0)).collect();
    let cfg = DtmConfig {
        n_topics: k,
        n_slices: t_n,
        ..DtmConfig::default()
    };
    let state = TopicModelState::from_parts(cfg, vocab.clone(), beta, random_simplex_rows(&mut rng, t_n, k)).unwrap();
    let cycle: BTreeSet<String> = words(&["w03", "w17"]).into_iter().collect();
    for case in 0..1000 {
        let doc = SlicedTranscript::from_words(
            (0..t_n)
                .map(|_| {
                    let n = rng.random_range(0..8);
                    (0..n).map(|_| vocab[rng.random_range(0..30)].clone()).collect()
                })
                .collect(),
        );
        let traj = TopicTrajectory {
            theta: random_simplex_rows(&mut rng, t_n, k),
            uniform_slices: vec![false; t_n],
        };
        let st = dtm_statistics(&state, &doc, &traj, &cycle).map_err(|e| e.to_string())?;
        let checks = [
            ("consistency", (0.0..=1.0).contains(&st.topic_consistency)),
            ("cycle", st.topic_cycle == 0.0 || st.topic_cycle == 1.0),
            ("variability", (0.0..=0.5).contains(&st.topic_variability)),
            ("temporal_corr", (-1.0..=1.0).contains(&st.topic_temporal_corr)),
            ("ptp_range", (0.0..=1.0).contains(&st.topic_ptp_range)),
            ("change_rate", (0.0..=std::f64::consts::SQRT_2).contains(&st.topic_change_rate)),
        ];
        for (name, ok) in checks {
            ensure(ok, || format!("case {case}: {name} out of range in {st:?}"))?;
        }
    }

    let constant = TopicTrajectory {
        theta: Matrix::from_vec(4, 2, [0.3, 0.7].repeat(4)),
        uniform_slices: vec![false; 4],
    };
    let doc4 = SlicedTranscript::from_words(vec![words(&["w00"]); 4]);
    let st = dtm_statistics(&hand_state(4), &doc4, &constant, &BTreeSet::new()).map_err(|e| e.to_string())?;
    ensure(
        st.topic_variability == 0.0 && st.topic_ptp_range == 0.0 && st.topic_change_rate == 0.0,
        || format!("constant trajectory: {st:?}"),
    )?;

    let flip = TopicTrajectory {
        theta: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
        uniform_slices: vec![false; 2],
    };
    let doc2 = SlicedTranscript::from_words(vec![words(&["w00"]); 2]);
    let st = dtm_statistics(&hand_state(2), &doc2, &flip, &BTreeSet::new()).map_err(|e| e.to_string())?;
    ensure(st.topic_change_rate == std::f64::consts::SQRT_2, || {
        format!("(1,0)->(0,1) change rate {}", st.topic_change_rate)
    })?;

    let top: Vec<String> = (0..10).map(|i| format!("w{i:02}")).collect();
    let full = SlicedTranscript::from_words(vec![top; 3]);
    let c = topic_consistency(&hand_state(3), &full).map_err(|e| e.to_string())?;
    ensure(c == 1.0, || format!("all-top-10 consistency {c}"))?;
    Ok("1000 random trajectories in range; hand cases exact".into())
}

fn lexicons() -> Lexicons {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<String>>();
    Lexicons {
        stopwords: set(LEXICON.stopwords),
        filled_pauses: set(LEXICON.filled_pauses),
        lexical_fillers: set(LEXICON.lexical_fillers),
        backchannels: set(LEXICON.backchannels),
        functional_pos_tags: set(LEXICON.functional_tags),
    }
}

fn transcript(ws: &[(&str, &str)]) -> TokenizedTranscript {
    let mut raw = String::new();
    let mut tokens = Vec::new();
    for (w, tag) in ws {
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

fn compare(got: &[f64], want: &[f64], what: &str) -> Result<(), String> {
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        // slot 0 is a count in both families
        let ok = if i == 0 { g == w } else { (g - w).abs() <= 1e-9 };
        ensure(ok, || format!("{what} slot {}: {g} vs {w}", i + 1))?;
    }
    Ok(())
}

fn feature_formulas() -> Outcome {
    let acoustic = acoustic_cases();
    ensure(acoustic.len() >= 10, || format!("only {} acoustic cases", acoustic.len()))?;
    for (segs, syl) in &acoustic {
        let f = acoustic_features(&VadSegments::new(segs.clone()).unwrap(), *syl).map_err(|e| e.to_string())?;
        compare(&f.to_array(), &acoustic_oracle(segs, *syl), "acoustic")?;
    }
    let ling = linguistic_cases();
    ensure(ling.len() >= 10, || format!("only {} linguistic cases", ling.len()))?;
    let lex = lexicons();
    for case in &ling {
        let f = linguistic_features(&transcript(case), &lex, &TagMap::universal()).map_err(|e| e.to_string())?;
        compare(&f.to_array(), &linguistic_oracle(case, &LEXICON), "linguistic")?;
    }
    // 8 tokens, 6 types
    let case = [
        ("the", "DET"),
        ("dog", "NOUN"),
        ("saw", "VERB"),
        ("the", "DET"),
        ("cat", "NOUN"),
        ("and", "CCONJ"),
        ("the", "DET"),
        ("bird", "NOUN"),
    ];
    let cttr = linguistic_features(&transcript(&case), &lex, &TagMap::universal()).map_err(|e| e.to_string())?.to_array()[12];
    ensure(cttr == 1.5, || format!("cttr {cttr}"))?;
    Ok(format!("{} acoustic, {} linguistic traces; cttr 1.5", acoustic.len(), ling.len()))
}

fn random_tokens(rng: &mut ChaCha8Rng, min: usize) -> Vec<String> {
    let n = rng.random_range(min..=9);
    (0..n).map(|_| ["cat", "dog", "sink", "jar"][rng.random_range(0..4)].to_string()).collect()
}

fn text_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let hyp = random_tokens(&mut rng, 1);
        let reference = random_tokens(&mut rng, 1);
        for n in 1..=4 {
            worst = worst.max((sentence_bleu(&hyp, &[reference.as_slice()], n) - bleu_oracle(&hyp, &reference, n)).abs());
        }
        worst = worst.max((rouge_l(&hyp, &reference) - rouge_l_oracle(&hyp, &reference)).abs());
        worst = worst.max((meteor(&hyp, &reference) - meteor_oracle(&hyp, &reference)).abs());
    }
    ensure(worst <= 1e-9, || format!("largest oracle gap {worst:e}"))?;
    for _ in 0..20 {
        let a = random_tokens(&mut rng, 4);
        let scores = [
            sentence_bleu(&a, &[a.as_slice()], 1),
            sentence_bleu(&a, &[a.as_slice()], 4),
            rouge_l(&a, &a),
            meteor(&a, &a),
        ];
        ensure(scores.iter().all(|s| (s - 1.0).abs() <= 1e-9), || format!("identity scores {scores:?} for {a:?}"))?;
    }
    Ok(format!("50 cases, largest gap {worst:.1e}; identity 1.0"))
}

fn svm_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut cases = 0;
    let (mut worst_dual, mut worst_kkt): (f64, f64) = (0.0, 0.0);
    while cases < 20 {
        let z = Matrix::from_vec(6, 2, (0..12).map(|_| rng.random_range(-2.0..2.0)).collect());
        let labels: Vec<u8> = (0..6).map(|_| rng.random_range(0..2)).collect();
        if !(labels.contains(&0) && labels.contains(&1)) {
            continue;
        }
        cases += 1;
        let kernel = if cases % 2 == 0 { Kernel::Linear } else { Kernel::Rbf { gamma: 0.7 } };
        let c = [0.5, 1.0, 4.0][cases % 3];
        let mut params = SvmParams::new(kernel, c);
        params.tolerance = 1e-6;
        let model = fit_svc(&z, &labels, params).map_err(|e| e.to_string())?;
        let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let k = kernel_matrix(&kernel, &z);
        let q = DMatrix::from_fn(6, 6, |i, j| y[i] * y[j] * k[(i, j)]);
        worst_dual = worst_dual.max((model.dual_objective - active_set_dual_max(&q, &y, c)).abs());

        // KKT residual on the training points
        let sv = &model.support_vectors;
        for i in 0..6 {
            let alpha = (0..sv.rows())
                .find(|&s| sv.row(s) == z.row(i))
                .map_or(0.0, |s| model.dual_coef[s].abs());
            let margin = y[i] * model.decision(z.row(i));
            let r = if alpha < 1e-9 {
                (1.0 - margin).max(0.0)
            } else if alpha > c - 1e-9 {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst_kkt = worst_kkt.max(r);
        }
    }
    ensure(worst_dual < 1e-4, || format!("dual objective gap {worst_dual:e}"))?;
    ensure(worst_kkt <= 1e-3, || format!("KKT residual {worst_kkt:e}"))?;

    let z = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]]);
    let y = [1, 1, 0, 0];
    let m = fit_svc(&z, &y, SvmParams::new(Kernel::Rbf { gamma: 0.5 }, 1.0)).map_err(|e| e.to_string())?;
    let correct = (0..4).filter(|&i| u8::from(m.decision(z.row(i)) > 0.0) == y[i]).count();
    ensure(correct == 4, || format!("XOR train accuracy {correct}/4"))?;
    Ok(format!("{cases} problems, dual gap {worst_dual:.1e}, KKT {worst_kkt:.1e}; XOR 4/4"))
}

fn pca_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (mut ortho, mut angle): (f64, f64) = (0.0, 0.0);
    for _ in 0..10 {
        let x = Matrix::from_vec(20, 8, (0..160).map(|_| rng.random_range(-2.0..2.0)).collect());
        let k = 3;
        let model = fit_pca(&x, k).map_err(|e| e.to_string())?;
        let xs = DMatrix::from_row_slice(20, 8, x.as_slice());
        let mean = xs.row_mean();
        let centred = DMatrix::from_fn(20, 8, |i, j| xs[(i, j)] - mean[j]);
        let eig = (centred.transpose() * &centred / 19.0).symmetric_eigen();
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let oracle = DMatrix::from_fn(8, k, |r, c| eig.eigenvectors[(r, order[c])]);
        let ours = DMatrix::from_fn(8, k, |r, c| model.components[(c, r)]);
        ortho = ortho.max((ours.transpose() * &ours - DMatrix::identity(k, k)).abs().max());
        angle = angle.max(largest_principal_angle_sine(&ours, &oracle));
    }
    ensure(ortho <= 1e-8, || format!("orthonormality error {ortho:e}"))?;
    ensure(angle <= 1e-6, || format!("subspace angle sine {angle:e}"))?;
    Ok(format!("10 matrices, orthonormality {ortho:.1e}, angle {angle:.1e}"))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn interaction_model(z: &[f64]) -> f64 {
    sigmoid(0.3 * z[0] * z[1] * z[2] + (z[3] + z[4] + z[5]).tanh() - 0.1 * z[6] * z[7] * z[0])
}

fn shap_checks() -> Outcome {
    let bg = Matrix::from_rows(
        &[-1.0, 1.0, 0.0]
            .iter()
            .map(|s| (0..8).map(|i| i as f64 * 0.3 + s).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut eff: f64 = 0.0;
    for _ in 0..50 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = shap_values(interaction_model, &x, &bg, ShapMethod::Exact).map_err(|e| e.to_string())?;
        eff = eff.max((r.values.iter().sum::<f64>() - (r.full_value - r.base_value)).abs());
    }
    ensure(eff <= 1e-6, || format!("efficiency gap {eff:e}"))?;

    // feature 4 never enters the model
    let null = |z: &[f64]| sigmoid(z[0] * z[1] - z[7]);
    let x = [1.0, -2.0, 0.5, 1.5, -1.0, 2.0, 0.3, -0.7];
    let r = shap_values(null, &x, &bg, ShapMethod::Exact).map_err(|e| e.to_string())?;
    ensure(r.values[4] == 0.0, || format!("null player got {}", r.values[4]))?;

    let e = shap_values(interaction_model, &x, &bg, ShapMethod::Exact).map_err(|e| e.to_string())?;
    let m = shap_values(interaction_model, &x, &bg, ShapMethod::PermutationMc { n_samples: 4096, seed: 9 })
        .map_err(|e| e.to_string())?;
    let se = m.std_errors.ok_or("sampled result has no standard errors")?;
    let mut worst_z: f64 = 0.0;
    for i in 0..8 {
        let gap = (e.values[i] - m.values[i]).abs();
        ensure(gap <= 3.0 * se[i] + 1e-12, || format!("feature {i}: gap {gap:e} vs 3 SE {:e}", 3.0 * se[i]))?;
        if se[i] > 0.0 {
            worst_z = worst_z.max(gap / se[i]);
        }
    }
    Ok(format!("efficiency {eff:.1e}; null player 0; MC within {worst_z:.2} SE"))
}

fn metric_checks() -> Outcome {
    let scores = [0.9, 0.8, 0.3, 0.6, 0.1, 0.5];
    let labels = [1, 1, 1, 0, 0, 0];
    let c = Confusion::from_scores(&scores, &labels, DEFAULT_THRESHOLD);
    ensure(c == Confusion { tp: 2, fp: 2, fn_: 1, tn: 1 }, || format!("confusion {c:?}"))?;
    let m = classification_metrics(&scores, &labels, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
    let want = [(m.precision, 0.5), (m.recall, 2.0 / 3.0), (m.accuracy, 0.5), (m.f1, 4.0 / 7.0), (m.auc, 7.0 / 9.0)];
    for (got, w) in want {
        ensure((got - w).abs() <= 1e-12, || format!("metric {got} vs {w}"))?;
    }
    let all_neg = Confusion::from_scores(&[0.1, 0.2], &[0, 0], DEFAULT_THRESHOLD);
    ensure(all_neg == Confusion { tp: 0, fp: 0, fn_: 0, tn: 2 } && all_neg.f1() == 0.0, || format!("{all_neg:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(4..30);
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        y[0] = 0;
        y[1] = 1;
        let s: Vec<f64> = (0..n).map(|_| (rng.random_range(0..10) as f64) / 10.0).collect();
        let base = roc_auc(&s, &y).map_err(|e| e.to_string())?;
        let transforms: [fn(f64) -> f64; 3] = [|x| x.exp(), |x| x * x * x, |x| sigmoid(5.0 * x - 2.0)];
        for f in transforms {
            let t: Vec<f64> = s.iter().map(|&x| f(x)).collect();
            let a = roc_auc(&t, &y).map_err(|e| e.to_string())?;
            ensure(a == base, || format!("auc {a} after transform vs {base}"))?;
        }
    }
    ensure(normalize_label(0) == 0.0 && normalize_label(4) == 1.0, || "label map endpoints".into())?;
    let sev = Severity::new(4).map_err(|e| e.to_string())?;
    ensure(sev.normalized() == 1.0, || format!("severity 4 maps to {}", sev.normalized()))?;
    Ok("hand confusion exact; AUC invariant under 3 transforms; 0->0.0, 4->1.0".into())
}

fn vsn(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vsn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`vsn {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn run_study(root: &Path) -> Result<(), String> {
    let fixtures = root.join("fixtures");
    let fx = fixtures.to_str().unwrap();
    vsn(&["gen-fixtures", "--out", fx, "--seed", "7"])?;
    let config = fixtures.join("config.toml");
    let config = config.to_str().unwrap();
    let out = root.join("out");
    let out = out.to_str().unwrap();
    let step = |cmd: &str, system: Option<u8>| {
        let s = system.map(|s| s.to_string());
        let mut args = vec![cmd, "--config", config, "--out", out];
        if let Some(s) = &s {
            args.extend(["--system", s.as_str()]);
        }
        vsn(&args)
    };
    step("extract", None)?;
    step("train-dtm", None)?;
    step("extract", Some(7))?;
    for s in 1..=7 {
        step("train-svm", Some(s))?;
    }
    step("train-titan", None)?;
    for s in 1..=8 {
        step("eval", Some(s))?;
    }
    for s in 1..=7 {
        step("explain", Some(s))?;
    }
    step("plotdata", None)
}

fn files_under(dir: &Path, prefix: &Path, out: &mut Vec<std::path::PathBuf>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            files_under(&p, prefix, out);
        } else {
            out.push(p.strip_prefix(prefix).unwrap().to_path_buf());
        }
    }
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_study(a.path())?;
    run_study(b.path())?;
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    files_under(a.path(), a.path(), &mut fa);
    files_under(b.path(), b.path(), &mut fb);
    fa.sort();
    fb.sort();
    ensure(fa == fb, || "the two runs wrote different file sets".into())?;
    let mut csv = 0;
    for rel in &fa {
        let (x, y) = (std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap());
        ensure(x == y, || format!("{} differs", rel.display()))?;
        if rel.extension().is_some_and(|e| e == "csv") {
            csv += 1;
        }
    }
    ensure(csv > 0, || "no CSV output".into())?;
    Ok(format!("{} files identical, {csv} of them CSV", fa.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("titan gradient correctness", titan_gradients),
        ("rope properties", rope_properties),
        ("masking contract", masking_contract),
        ("permutation test", permutation_test),
        ("titan end-to-end", titan_end_to_end),
        ("dtm fit", dtm_checks),
        ("dtm statistics", dtm_statistic_ranges),
        ("feature formulas", feature_formulas),
        ("text metrics", text_metrics),
        ("svm", svm_checks),
        ("pca", pca_checks),
        ("shap", shap_checks),
        ("metrics", metric_checks),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{took:.1?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{took:.1?}]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
