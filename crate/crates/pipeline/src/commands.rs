//! Subcommand implementations. Each one owns the output directory for its
//! duration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{Map, Value};
use vsn_core::corpus::{EmbeddingSequence, ParticipantRecord, Split};
use vsn_core::dtm::{fit_dtm, TOP_WORDS};
use vsn_core::eval::{
    binary_label, classification_metrics, epoch_average, normalize_label, regression_metrics, ClassificationMetrics,
    Confusion, EpochRecord, EvalReport, RegressionMetrics, Task, DEFAULT_EPOCH_WINDOW, DEFAULT_THRESHOLD,
};
use vsn_core::explain::{global_importance, shap_values, spearman_rank};
use vsn_core::math::{mean, std_dev, Matrix};
use vsn_core::shallow::{grid_search, select_rows, GridCell, ShallowModel};
use vsn_core::titan::{self, attention_map, crossmodal_corr, forward, Sample, Target};

use crate::config::RunConfig;
use crate::error::{format_err, PipelineError, Result};
use crate::features::{
    extract_dtm, extract_surface, split_name, system_families, system_label, Failure, Family, FeatureSet, Resources,
    TITAN_SYSTEM,
};
use crate::formats::{load_manifest, read_embeddings, write_bytes};
use crate::models::{self, TitanCheckpoint};
use crate::output::{fmt_f64, parse_f64, write_matrix, OutDir, Table};

pub const DTM_MODEL: &str = "models/dtm.nmc";
pub const TRAJECTORIES: &str = "dtm/trajectories.csv";

pub fn task_name(t: Task) -> &'static str {
    match t {
        Task::Classify => "classify",
        Task::Regress => "regress",
    }
}

pub fn svm_model_path(system: u8, task: Task) -> String {
    format!("models/svm_system{system}_{}.nmc", task_name(task))
}

pub fn titan_model_path(task: Task) -> String {
    format!("models/titan_{}.nmc", task_name(task))
}

/// Loaded configuration plus the locked output directory.
#[derive(Debug)]
pub struct Run {
    pub cfg: RunConfig,
    pub base: PathBuf,
    pub hash: String,
    pub out: OutDir,
    pub system: Option<u8>,
}

impl Run {
    pub fn open(config: &Path, system: Option<u8>, seed: Option<u64>, out: &Path) -> Result<Self> {
        if let Some(s) = system {
            if !(1..=8).contains(&s) {
                return Err(PipelineError::UnsupportedSystem(s));
            }
        }
        let (cfg, base) = RunConfig::load(config, seed)?;
        let hash = cfg.hash();
        let out = OutDir::acquire(out)?;
        Ok(Self {
            cfg,
            base,
            hash,
            out,
            system,
        })
    }

    fn require_system(&self) -> Result<u8> {
        self.system
            .ok_or_else(|| PipelineError::Config("this command needs --system".into()))
    }

    fn write(&self, rel: &str, t: &Table) -> Result<()> {
        t.write(&self.out.path(rel), &self.hash)
    }

    fn read(&self, rel: &str, hint: &str) -> Result<Table> {
        Table::read(&self.out.path(rel), &self.hash, hint)
    }

    fn write_failures(&self, rel: &str, failures: &[Failure]) -> Result<()> {
        let mut t = Table::new(&["id", "stage", "error"]);
        for f in failures {
            t.push(vec![f.id.clone(), f.stage.into(), f.error.clone()]);
        }
        self.write(rel, &t)
    }

    fn manifest(&self) -> Result<Vec<ParticipantRecord>> {
        load_manifest(&self.base.join(&self.cfg.corpus.manifest))
    }

    /// Joins the family tables of a shallow system and stores the merged
    /// matrix.
    fn system_features(&self, system: u8) -> Result<FeatureSet> {
        let mut tables = Vec::new();
        let mut paths = Vec::new();
        for f in system_families(system)? {
            let hint = match f {
                Family::Dtm => "run `vsn train-dtm` first",
                _ => "run `vsn extract` first",
            };
            paths.push(self.out.path(&f.file()));
            tables.push(self.read(&f.file(), hint)?);
        }
        let pairs: Vec<(&Path, Table)> = paths.iter().map(PathBuf::as_path).zip(tables).collect();
        let fs = FeatureSet::join(&pairs)?;
        self.write(&format!("features/system{system}.csv"), &fs.to_table())?;
        Ok(fs)
    }
}

pub fn extract(run: &Run) -> Result<()> {
    let res = Resources::load(&run.cfg, &run.base)?;
    let (tables, failures) = extract_surface(&res);
    if tables[0].1.rows.is_empty() {
        return Err(PipelineError::NoParticipants("feature extraction"));
    }
    for (family, t) in &tables {
        run.write(&family.file(), t)?;
    }
    run.write_failures("features/failures_surface.csv", &failures)?;
    log::info!(
        "extracted {} participants, {} excluded",
        tables[0].1.rows.len(),
        failures.len()
    );
    if let Some(s) = run.system.filter(|&s| s != TITAN_SYSTEM) {
        let fs = run.system_features(s)?;
        log::info!("system {s}: {} participants x {} features", fs.ids.len(), fs.names.len());
    }
    Ok(())
}

pub fn train_dtm(run: &Run) -> Result<()> {
    let res = Resources::load(&run.cfg, &run.base)?;
    let sliced: Vec<_> = res.records.par_iter().map(|r| res.sliced(r)).collect();
    let mut docs = Vec::new();
    let mut failures = Vec::new();
    for (rec, s) in res.records.iter().zip(sliced) {
        match s {
            Ok(d) => docs.push(d),
            Err(e) => failures.push(Failure {
                id: rec.id.clone(),
                stage: "slicing",
                error: e.to_string(),
            }),
        }
    }
    if docs.is_empty() {
        return Err(PipelineError::NoParticipants("topic model training"));
    }
    let fitted = fit_dtm(&docs, &run.cfg.dtm_config())?;
    if !fitted.converged {
        log::warn!("topic model stopped at the EM iteration limit");
    }
    let model_path = run.out.path(DTM_MODEL);
    models::dtm_container(&fitted, &run.hash).write(&model_path)?;
    let state = models::load_dtm(&model_path, &run.hash)?;

    let mut elbo = Table::new(&["iteration", "elbo"]);
    for (i, v) in fitted.elbo_trace.iter().enumerate() {
        elbo.push(vec![i.to_string(), fmt_f64(*v)]);
    }
    run.write("dtm/elbo.csv", &elbo)?;

    let mut topics = Table::new(&["topic", "slice", "rank", "word", "probability"]);
    for k in 0..state.n_topics() {
        for t in 0..state.n_slices() {
            let dist = state.word_distribution(k, t);
            for (rank, w) in state.top_words(k, t, TOP_WORDS)?.into_iter().enumerate() {
                let p = dist[state.word_index(w).expect("top word is in the vocabulary")];
                topics.push(vec![k.to_string(), t.to_string(), rank.to_string(), w.to_string(), fmt_f64(p)]);
            }
        }
    }
    run.write("dtm/topics.csv", &topics)?;

    let (stats, traj, dtm_failures) = extract_dtm(&state, &res);
    failures.extend(dtm_failures);
    run.write(&Family::Dtm.file(), &stats)?;
    run.write(TRAJECTORIES, &traj)?;
    run.write_failures("features/failures_dtm.csv", &failures)?;
    log::info!(
        "topic model: {} documents, vocabulary {}, {} EM iterations",
        docs.len(),
        state.vocab_size(),
        fitted.elbo_trace.len()
    );
    Ok(())
}

fn grid_choice(run: &Run) -> Result<Option<GridCell>> {
    if !run.cfg.grid.enabled {
        return Ok(None);
    }
    let fs = run.system_features(7)?;
    let train = fs.rows_in(Split::Train);
    let x = select_rows(&fs.x, &train);
    let grades: Vec<u8> = train.iter().map(|&i| fs.grades[i]).collect();
    let cells = run.cfg.grid_cells();
    let g = grid_search(
        &x,
        &grades,
        &cells,
        &run.cfg.shallow_config(Task::Classify),
        run.cfg.grid.folds,
        run.cfg.seed,
    )?;
    let mut t = Table::new(&["kernel", "c", "n_components", "mean_f1"]);
    for (cell, s) in cells.iter().zip(&g.scores) {
        t.push(vec![
            format!("{:?}", cell.kernel),
            fmt_f64(cell.c),
            cell.n_components.to_string(),
            s.map_or_else(|| "failed".into(), fmt_f64),
        ]);
    }
    run.write("reports/grid_search.csv", &t)?;
    log::info!("grid search picked {:?} (F1 {})", g.best, g.best_f1);
    Ok(Some(g.best))
}

pub fn train_svm(run: &Run) -> Result<()> {
    let system = run.require_system()?;
    if system == TITAN_SYSTEM {
        return Err(PipelineError::UnsupportedSystem(system));
    }
    let best = grid_choice(run)?;
    let fs = run.system_features(system)?;
    let train = fs.rows_in(Split::Train);
    if train.is_empty() {
        return Err(PipelineError::NoParticipants("shallow training"));
    }
    let x = select_rows(&fs.x, &train);
    let grades: Vec<u8> = train.iter().map(|&i| fs.grades[i]).collect();
    for task in [Task::Classify, Task::Regress] {
        let mut cfg = run.cfg.shallow_config(task);
        if let Some(cell) = best {
            cfg.kernel = cell.kernel;
            cfg.c = cell.c;
            cfg.n_components = cell.n_components;
        }
        cfg.n_components = cfg.n_components.min(fs.names.len());
        let model = ShallowModel::fit(&x, &grades, &cfg)?;
        models::svm_container(&model, system, task, &fs.names, &run.hash).write(&run.out.path(&svm_model_path(system, task)))?;
        log::info!(
            "system {system} {}: {} support vectors, KKT gap {}",
            task_name(task),
            model.svm.dual_coef.len(),
            model.svm.kkt_gap
        );
    }
    Ok(())
}

/// Embedding sequences of the manifest participants, failures set aside.
fn embeddings(records: &[ParticipantRecord]) -> (Vec<(&ParticipantRecord, EmbeddingSequence)>, Vec<Failure>) {
    let loaded: Vec<_> = records
        .par_iter()
        .map(|r| read_embeddings(Path::new(&r.text_emb_path)))
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    let mut hidden = None;
    for (rec, seq) in records.iter().zip(loaded) {
        let seq = seq.and_then(|s| match hidden {
            Some(h) if h != s.hidden() => Err(format_err(
                Path::new(&rec.text_emb_path),
                format!("embedding width {} differs from {h}", s.hidden()),
            )),
            _ => Ok(s),
        });
        match seq {
            Ok(s) => {
                hidden.get_or_insert(s.hidden());
                ok.push((rec, s));
            }
            Err(e) => {
                log::warn!("participant {} excluded: {e}", rec.id);
                failures.push(Failure {
                    id: rec.id.clone(),
                    stage: "embeddings",
                    error: e.to_string(),
                });
            }
        }
    }
    (ok, failures)
}

fn target(rec: &ParticipantRecord, task: Task) -> Target {
    match task {
        Task::Classify => Target::Class(usize::from(rec.label.binary())),
        Task::Regress => Target::Value(rec.label.normalized()),
    }
}

fn samples(data: &[(&ParticipantRecord, EmbeddingSequence)], split: Split, task: Task) -> Vec<Sample> {
    data.iter()
        .filter(|(r, _)| r.split == split)
        .map(|(r, s)| Sample {
            seq: s.clone(),
            target: target(r, task),
        })
        .collect()
}

fn check_titan_system(run: &Run) -> Result<()> {
    match run.system {
        None | Some(TITAN_SYSTEM) => Ok(()),
        Some(s) => Err(PipelineError::UnsupportedSystem(s)),
    }
}

pub fn train_titan(run: &Run) -> Result<()> {
    check_titan_system(run)?;
    let records = run.manifest()?;
    let (data, failures) = embeddings(&records);
    run.write_failures("features/failures_titan.csv", &failures)?;
    let hidden = data
        .first()
        .map(|(_, s)| s.hidden())
        .ok_or(PipelineError::NoParticipants("embedding model training"))?;
    for task in [Task::Classify, Task::Regress] {
        let cfg = run.cfg.titan_config(hidden, task);
        let train = samples(&data, Split::Train, task);
        let test = samples(&data, Split::Test, task);
        let outcome = titan::train(&train, (!test.is_empty()).then_some(&test[..]), &cfg)?;
        let mut log = String::new();
        for rec in &outcome.log {
            let mut m = Map::new();
            m.insert("config_hash".into(), Value::from(run.hash.clone()));
            m.insert("epoch".into(), Value::from(rec.epoch));
            for (k, v) in &rec.values {
                m.insert(k.clone(), Value::from(*v));
            }
            log.push_str(&Value::Object(m).to_string());
            log.push('\n');
        }
        write_bytes(&run.out.path(&format!("logs/titan_{}.jsonl", task_name(task))), log.as_bytes())?;
        let ck = TitanCheckpoint {
            config: cfg,
            params: outcome.params,
            snapshots: outcome.snapshots,
        };
        models::titan_container(&ck, &run.hash).write(&run.out.path(&titan_model_path(task)))?;
        log::info!(
            "embedding model {}: {} epochs on {} participants",
            task_name(task),
            outcome.log.len(),
            train.len()
        );
    }
    Ok(())
}

struct Scored {
    ids: Vec<String>,
    grades: Vec<u8>,
    probability: Vec<f64>,
    regression: Vec<f64>,
}

fn report_table(r: &EvalReport) -> Table {
    let mut t = Table::new(&[
        "system",
        "features",
        "n_features",
        "model",
        "f1",
        "auc",
        "recall",
        "precision",
        "accuracy",
        "tp",
        "fp",
        "fn",
        "tn",
        "r2",
        "rmse",
        "seed",
        "epoch_window",
    ]);
    let c = r.classification.as_ref();
    let f = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
    let n = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
    t.push(vec![
        r.system.to_string(),
        r.features.clone(),
        r.n_features.to_string(),
        r.model.clone(),
        f(c.map(|m| m.f1)),
        f(c.map(|m| m.auc)),
        f(c.map(|m| m.recall)),
        f(c.map(|m| m.precision)),
        f(c.map(|m| m.accuracy)),
        n(c.map(|m| m.confusion.tp)),
        n(c.map(|m| m.confusion.fp)),
        n(c.map(|m| m.confusion.fn_)),
        n(c.map(|m| m.confusion.tn)),
        f(r.regression.map(|m| m.r2)),
        f(r.regression.map(|m| m.rmse)),
        r.seed.to_string(),
        r.epoch_window.to_string(),
    ]);
    t
}

fn report_json(r: &EvalReport) -> Value {
    let metrics = |c: &ClassificationMetrics| {
        serde_json::json!({
            "f1": c.f1, "auc": c.auc, "recall": c.recall, "precision": c.precision, "accuracy": c.accuracy,
            "confusion": {"tp": c.confusion.tp, "fp": c.confusion.fp, "fn": c.confusion.fn_, "tn": c.confusion.tn},
        })
    };
    serde_json::json!({
        "system": r.system,
        "features": r.features,
        "n_features": r.n_features,
        "model": r.model,
        "classification": r.classification.as_ref().map(metrics),
        "regression": r.regression.map(|m| serde_json::json!({"r2": m.r2, "rmse": m.rmse})),
        "seed": r.seed,
        "config_hash": r.config_hash,
        "epoch_window": r.epoch_window,
    })
}

fn write_eval(run: &Run, report: &EvalReport, scored: &Scored) -> Result<()> {
    let s = report.system;
    let mut p = Table::new(&["id", "label", "p_ncd", "predicted", "regression"]);
    for i in 0..scored.ids.len() {
        p.push(vec![
            scored.ids[i].clone(),
            scored.grades[i].to_string(),
            fmt_f64(scored.probability[i]),
            u8::from(scored.probability[i] >= DEFAULT_THRESHOLD).to_string(),
            fmt_f64(scored.regression[i]),
        ]);
    }
    run.write(&format!("predictions/system{s}.csv"), &p)?;
    run.write(&format!("reports/system{s}.csv"), &report_table(report))?;
    let json = serde_json::to_string_pretty(&report_json(report)).expect("report serializes");
    write_bytes(&run.out.path(&format!("reports/system{s}.json")), json.as_bytes())?;

    let mut summary: Option<Table> = None;
    for sys in 1..=8 {
        let rel = format!("reports/system{sys}.csv");
        if !run.out.path(&rel).is_file() {
            continue;
        }
        match run.read(&rel, "") {
            Ok(t) => summary.get_or_insert_with(|| Table::new(&t.header)).rows.extend(t.rows),
            Err(PipelineError::HashMismatch { .. }) => log::warn!("{rel} is from another config, left out of the summary"),
            Err(e) => return Err(e),
        }
    }
    if let Some(t) = summary {
        run.write("reports/summary.csv", &t)?;
    }
    Ok(())
}

fn binary(grades: &[u8]) -> Vec<u8> {
    grades.iter().map(|&g| binary_label(g)).collect()
}

fn targets(grades: &[u8]) -> Vec<f64> {
    grades.iter().map(|&g| normalize_label(g)).collect()
}

fn eval_shallow(run: &Run, system: u8) -> Result<()> {
    let hint = format!("run `vsn train-svm --system {system}` first");
    let mut loaded = Vec::new();
    for task in [Task::Classify, Task::Regress] {
        loaded.push(models::load_svm(&run.out.path(&svm_model_path(system, task)), &run.hash, &hint)?);
    }
    let fs = FeatureSet::join(&[(
        run.out.path(&format!("features/system{system}.csv")).as_path(),
        run.read(&format!("features/system{system}.csv"), &hint)?,
    )])?;
    for (h, _) in &loaded {
        if h.feature_names != fs.names {
            return Err(format_err(run.out.path(&svm_model_path(system, h.task)), "feature list differs from the stored matrix"));
        }
    }
    let test = fs.rows_in(Split::Test);
    if test.is_empty() {
        return Err(PipelineError::NoParticipants("evaluation"));
    }
    let x = select_rows(&fs.x, &test);
    let grades: Vec<u8> = test.iter().map(|&i| fs.grades[i]).collect();
    let probability: Vec<f64> = loaded[0]
        .1
        .predict(&x)
        .iter()
        .map(|p| p.probability.unwrap_or(p.score))
        .collect();
    let regression: Vec<f64> = loaded[1].1.predict(&x).iter().map(|p| p.score).collect();
    let classification = classification_metrics(&probability, &binary(&grades), DEFAULT_THRESHOLD)?;
    let reg = regression_metrics(&regression, &targets(&grades))?;
    let model = if loaded[0].1.pca.is_some() { "PCA + SVM" } else { "SVM" };
    let report = EvalReport {
        system,
        features: system_label(system).into(),
        n_features: fs.names.len(),
        model: model.into(),
        classification: Some(classification),
        regression: Some(reg),
        seed: run.cfg.seed,
        config_hash: run.hash.clone(),
        epoch_window: 1,
    };
    let scored = Scored {
        ids: test.iter().map(|&i| fs.ids[i].clone()).collect(),
        grades,
        probability,
        regression,
    };
    write_eval(run, &report, &scored)
}

fn averaged(ck: &TitanCheckpoint, test: &[Sample]) -> Result<BTreeMap<String, f64>> {
    let log = ck
        .snapshots
        .iter()
        .enumerate()
        .map(|(epoch, p)| {
            let values = titan::evaluate(p, test, &ck.config)?
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            Ok(EpochRecord { epoch, values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(epoch_average(&log, DEFAULT_EPOCH_WINDOW)?.into_iter().collect())
}

fn eval_titan(run: &Run) -> Result<()> {
    let cls = models::load_titan(&run.out.path(&titan_model_path(Task::Classify)), &run.hash)?;
    let reg = models::load_titan(&run.out.path(&titan_model_path(Task::Regress)), &run.hash)?;
    let records = run.manifest()?;
    let (data, _) = embeddings(&records);
    let test_data: Vec<_> = data.iter().filter(|(r, _)| r.split == Split::Test).collect();
    if test_data.is_empty() {
        return Err(PipelineError::NoParticipants("evaluation"));
    }
    let grades: Vec<u8> = test_data.iter().map(|(r, _)| r.label.value()).collect();
    let probability = test_data
        .iter()
        .map(|(_, s)| titan::score(&cls.params, s, &cls.config))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let regression = test_data
        .iter()
        .map(|(_, s)| titan::score(&reg.params, s, &reg.config))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let c = averaged(&cls, &samples(&data, Split::Test, Task::Classify))?;
    let r = averaged(&reg, &samples(&data, Split::Test, Task::Regress))?;
    let report = EvalReport {
        system: TITAN_SYSTEM,
        features: system_label(TITAN_SYSTEM).into(),
        n_features: cls.config.hidden,
        model: "TITAN".into(),
        classification: Some(ClassificationMetrics {
            f1: c["f1"],
            auc: c["auc"],
            recall: c["recall"],
            precision: c["precision"],
            accuracy: c["accuracy"],
            confusion: Confusion::from_scores(&probability, &binary(&grades), DEFAULT_THRESHOLD),
        }),
        regression: Some(RegressionMetrics {
            r2: r["r2"],
            rmse: r["rmse"],
        }),
        seed: run.cfg.seed,
        config_hash: run.hash.clone(),
        epoch_window: DEFAULT_EPOCH_WINDOW,
    };
    let scored = Scored {
        ids: test_data.iter().map(|(r, _)| r.id.clone()).collect(),
        grades,
        probability,
        regression,
    };
    write_eval(run, &report, &scored)
}

pub fn eval(run: &Run) -> Result<()> {
    match run.require_system()? {
        TITAN_SYSTEM => eval_titan(run),
        s => eval_shallow(run, s),
    }
}

pub fn explain(run: &Run) -> Result<()> {
    let system = run.require_system()?;
    if system == TITAN_SYSTEM {
        return Err(PipelineError::UnsupportedSystem(system));
    }
    let hint = format!("run `vsn train-svm --system {system}` first");
    let (h, model) = models::load_svm(&run.out.path(&svm_model_path(system, Task::Classify)), &run.hash, &hint)?;
    let rel = format!("features/system{system}.csv");
    let fs = FeatureSet::join(&[(run.out.path(&rel).as_path(), run.read(&rel, &hint)?)])?;
    if h.feature_names != fs.names {
        return Err(format_err(run.out.path(&rel), "feature list differs from the model"));
    }
    let background = select_rows(&fs.x, &fs.rows_in(Split::Train));
    let test = fs.rows_in(Split::Test);
    let method = run.cfg.shap_method(fs.names.len());
    let results = test
        .par_iter()
        .map(|&i| shap_values(|r| model.probability(r), fs.x.row(i), &background, method))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let mut header = vec!["id".to_string(), "label".into(), "base_value".into(), "full_value".into()];
    header.extend(fs.names.iter().cloned());
    let mut shap = Table::new(&header);
    for (&i, r) in test.iter().zip(&results) {
        let mut row = vec![fs.ids[i].clone(), fs.grades[i].to_string(), fmt_f64(r.base_value), fmt_f64(r.full_value)];
        row.extend(r.values.iter().map(|v| fmt_f64(*v)));
        shap.push(row);
    }
    run.write(&format!("explain/shap_system{system}.csv"), &shap)?;

    let mut summary = Table::new(&["rank", "feature", "mean_abs_shap"]);
    for (rank, (j, v)) in global_importance(&results).into_iter().enumerate() {
        summary.push(vec![(rank + 1).to_string(), fs.names[j].clone(), fmt_f64(v)]);
    }
    run.write(&format!("explain/shap_summary_system{system}.csv"), &summary)?;

    let ranking = spearman_rank(&fs.names, &fs.x, &binary(&fs.grades))?;
    let mut sp = Table::new(&["rank", "feature", "rho", "p_value", "constant"]);
    for (rank, e) in ranking.entries.iter().enumerate() {
        sp.push(vec![
            (rank + 1).to_string(),
            e.name.clone(),
            fmt_f64(e.rho),
            fmt_f64(e.p_value),
            e.constant.to_string(),
        ]);
    }
    run.write(&format!("explain/spearman_system{system}.csv"), &sp)?;
    Ok(())
}

const GROUPS: [(u8, &str); 2] = [(0, "hc"), (1, "ncd")];

/// Element-wise mean and population standard deviation of equal-shaped
/// matrices.
pub fn mean_std(ms: &[Matrix]) -> (Matrix, Matrix) {
    let (r, c) = (ms[0].rows(), ms[0].cols());
    let mut m = Matrix::zeros(r, c);
    let mut s = Matrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            let xs: Vec<f64> = ms.iter().map(|x| x[(i, j)]).collect();
            m[(i, j)] = mean(&xs);
            s[(i, j)] = std_dev(&xs);
        }
    }
    (m, s)
}

fn same_shape(ms: &[Matrix], what: &str, path: &Path) -> Result<()> {
    if ms.iter().any(|m| m.rows() != ms[0].rows() || m.cols() != ms[0].cols()) {
        return Err(format_err(path, format!("{what} matrices differ in shape")));
    }
    Ok(())
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Test-split trajectories grouped by HC (0) and NCD (1), keyed by id.
pub fn read_trajectories(t: &Table, path: &Path) -> Result<BTreeMap<u8, Vec<Matrix>>> {
    let n_topics = t.header.len() - 4;
    let mut per_id: Vec<(String, u8, Vec<f64>)> = Vec::new();
    for r in &t.rows {
        if r[2] != split_name(Split::Test) {
            continue;
        }
        let grade: u8 = r[1].parse().map_err(|_| format_err(path, "bad label"))?;
        if per_id.last().is_none_or(|(id, _, _)| *id != r[0]) {
            per_id.push((r[0].clone(), binary_label(grade), Vec::new()));
        }
        for v in &r[4..] {
            per_id.last_mut().expect("pushed above").2.push(parse_f64(path, v)?);
        }
    }
    let mut out: BTreeMap<u8, Vec<Matrix>> = BTreeMap::new();
    for (_, g, vals) in per_id {
        out.entry(g).or_default().push(Matrix::from_vec(vals.len() / n_topics, n_topics, vals));
    }
    Ok(out)
}

pub fn plotdata(run: &Run) -> Result<()> {
    let tpath = run.out.path(TRAJECTORIES);
    let traj = run.read(TRAJECTORIES, "run `vsn train-dtm` first")?;
    let groups = read_trajectories(&traj, &tpath)?;
    for (g, name) in GROUPS {
        let Some(ms) = groups.get(&g) else {
            log::warn!("no {name} participants in the test split");
            continue;
        };
        same_shape(ms, "trajectory", &tpath)?;
        let (m, s) = mean_std(ms);
        let h = labels("topic", m.cols());
        write_matrix(&run.out.path(&format!("plots/topic_mean_{name}.csv")), &run.hash, &h, &m)?;
        write_matrix(&run.out.path(&format!("plots/topic_std_{name}.csv")), &run.hash, &h, &s)?;
    }

    let records = run.manifest()?;
    let (data, _) = embeddings(&records);
    let test: Vec<_> = data.iter().filter(|(r, _)| r.split == Split::Test).collect();
    let epath = run.base.join(&run.cfg.corpus.manifest);
    for (g, name) in GROUPS {
        let ms: Vec<Matrix> = test
            .iter()
            .filter(|(r, _)| r.label.binary() == g)
            .map(|(_, s)| crossmodal_corr(s))
            .collect();
        if ms.is_empty() {
            continue;
        }
        same_shape(&ms, "correlation", &epath)?;
        let (m, _) = mean_std(&ms);
        write_matrix(
            &run.out.path(&format!("plots/crossmodal_{name}.csv")),
            &run.hash,
            &labels("text", m.cols()),
            &m,
        )?;
    }

    let ck_path = run.out.path(&titan_model_path(Task::Classify));
    if !ck_path.is_file() {
        log::info!("no embedding-model checkpoint; attention maps skipped");
        return Ok(());
    }
    let ck = models::load_titan(&ck_path, &run.hash)?;
    if !ck.config.use_image {
        log::info!("image rows disabled; attention maps skipped");
        return Ok(());
    }
    let mut att: BTreeMap<u8, Matrix> = BTreeMap::new();
    for (g, name) in GROUPS {
        let ms = test
            .iter()
            .filter(|(r, _)| r.label.binary() == g)
            .map(|(_, s)| forward(&ck.params, s, &ck.config).map(|tr| attention_map(&tr)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if ms.is_empty() {
            continue;
        }
        same_shape(&ms, "attention", &ck_path)?;
        let (m, _) = mean_std(&ms);
        write_matrix(&run.out.path(&format!("plots/attention_{name}.csv")), &run.hash, &labels("image", m.cols()), &m)?;
        att.insert(g, m);
    }
    if let (Some(hc), Some(ncd)) = (att.get(&0), att.get(&1)) {
        if hc.rows() == ncd.rows() && hc.cols() == ncd.cols() {
            let diff = Matrix::from_vec(
                hc.rows(),
                hc.cols(),
                ncd.as_slice().iter().zip(hc.as_slice()).map(|(a, b)| a - b).collect(),
            );
            write_matrix(&run.out.path("plots/attention_diff.csv"), &run.hash, &labels("image", diff.cols()), &diff)?;
        }
    }
    Ok(())
}
