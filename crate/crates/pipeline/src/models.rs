//! Model artifacts stored in NMC1 containers. Every header carries the
//! config hash it was trained under.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vsn_core::dtm::{DtmConfig, TopicModelState};
use vsn_core::eval::Task;
use vsn_core::math::Matrix;
use vsn_core::shallow::{PcaModel, PlattScaling, ShallowModel, Standardizer, SvmModel, SvmParams, SvmVariant};
use vsn_core::titan::{TitanConfig, TitanParameters, PARAMETER_NAMES};

use crate::container::{Container, DType, Tensor};
use crate::error::{format_err, io_err, PipelineError, Result};
use crate::output::check_hash;

/// Reads a container, checking kind and config hash.
pub fn load(path: &Path, kind: &str, hash: &str, hint: &str) -> Result<Container> {
    if !path.is_file() {
        return Err(PipelineError::MissingArtifact {
            path: path.to_path_buf(),
            hint: hint.to_string(),
        });
    }
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let c = Container::from_bytes(&bytes, path)?;
    let field = |k: &str| c.header.get(k).and_then(|v| v.as_str()).unwrap_or_default().to_string();
    if field("kind") != kind {
        return Err(format_err(path, format!("expected a {kind} model, found {:?}", field("kind"))));
    }
    check_hash(path, hash, &field("config_hash"))?;
    Ok(c)
}

fn matrix(name: &str, dtype: DType, m: &Matrix) -> Tensor {
    Tensor::new(name, dtype, vec![m.rows(), m.cols()], m.as_slice().to_vec())
}

fn vector(name: &str, dtype: DType, v: &[f64]) -> Tensor {
    Tensor::new(name, dtype, vec![v.len()], v.to_vec())
}

fn get<'a>(c: &'a Container, path: &Path, name: &str) -> Result<&'a Tensor> {
    c.tensor(name).ok_or_else(|| format_err(path, format!("missing tensor {name}")))
}

fn get_matrix(c: &Container, path: &Path, name: &str) -> Result<Matrix> {
    let t = get(c, path, name)?;
    match t.dims[..] {
        [r, k] => Ok(Matrix::from_vec(r, k, t.data.clone())),
        _ => Err(format_err(path, format!("{name} is not a matrix"))),
    }
}

fn get_vector(c: &Container, path: &Path, name: &str) -> Result<Vec<f64>> {
    Ok(get(c, path, name)?.data.clone())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DtmHeader {
    kind: String,
    config_hash: String,
    config: DtmConfig,
    vocab: Vec<String>,
    converged: bool,
}

pub fn dtm_container(state: &TopicModelState, hash: &str) -> Container {
    let mut c = Container::new(&DtmHeader {
        kind: "dtm".into(),
        config_hash: hash.into(),
        config: state.config,
        vocab: state.vocab.clone(),
        converged: state.converged,
    });
    let dims = vec![state.n_topics(), state.n_slices(), state.vocab_size()];
    c.push(Tensor::new("beta", DType::F32, dims, state.beta_flat().to_vec()));
    c.push(matrix("corpus_theta", DType::F32, &state.corpus_theta));
    c
}

pub fn load_dtm(path: &Path, hash: &str) -> Result<TopicModelState> {
    let c = load(path, "dtm", hash, "run `vsn train-dtm` first")?;
    let h: DtmHeader = c.header_as(path)?;
    let beta = get_vector(&c, path, "beta")?;
    let theta = get_matrix(&c, path, "corpus_theta")?;
    Ok(TopicModelState::from_parts(h.config, h.vocab, beta, theta)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmHeader {
    pub kind: String,
    pub config_hash: String,
    pub system: u8,
    pub task: Task,
    pub feature_names: Vec<String>,
    pub variant: SvmVariant,
    pub params: SvmParams,
    pub bias: f64,
    pub platt: Option<PlattScaling>,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub dual_objective: f64,
    pub pca_rank_deficient: Option<bool>,
}

pub fn svm_container(m: &ShallowModel, system: u8, task: Task, names: &[String], hash: &str) -> Container {
    let mut c = Container::new(&SvmHeader {
        kind: "svm".into(),
        config_hash: hash.into(),
        system,
        task,
        feature_names: names.to_vec(),
        variant: m.svm.variant,
        params: m.svm.params,
        bias: m.svm.bias,
        platt: m.svm.platt,
        iterations: m.svm.iterations,
        kkt_gap: m.svm.kkt_gap,
        dual_objective: m.svm.dual_objective,
        pca_rank_deficient: m.pca.as_ref().map(|p| p.rank_deficient),
    });
    c.push(vector("scaler_medians", DType::F64, &m.scaler.medians));
    c.push(vector("scaler_means", DType::F64, &m.scaler.means));
    c.push(vector("scaler_stds", DType::F64, &m.scaler.stds));
    if let Some(p) = &m.pca {
        c.push(vector("pca_mean", DType::F64, &p.mean));
        c.push(matrix("pca_components", DType::F64, &p.components));
        c.push(vector("pca_explained_variance", DType::F64, &p.explained_variance));
    }
    c.push(matrix("support_vectors", DType::F64, &m.svm.support_vectors));
    c.push(vector("dual_coef", DType::F64, &m.svm.dual_coef));
    c
}

pub fn load_svm(path: &Path, hash: &str, hint: &str) -> Result<(SvmHeader, ShallowModel)> {
    let c = load(path, "svm", hash, hint)?;
    let h: SvmHeader = c.header_as(path)?;
    let scaler = Standardizer {
        medians: get_vector(&c, path, "scaler_medians")?,
        means: get_vector(&c, path, "scaler_means")?,
        stds: get_vector(&c, path, "scaler_stds")?,
    };
    let pca = match h.pca_rank_deficient {
        Some(rank_deficient) => Some(PcaModel {
            mean: get_vector(&c, path, "pca_mean")?,
            components: get_matrix(&c, path, "pca_components")?,
            explained_variance: get_vector(&c, path, "pca_explained_variance")?,
            rank_deficient,
        }),
        None => None,
    };
    let svm = SvmModel {
        variant: h.variant,
        params: h.params,
        support_vectors: get_matrix(&c, path, "support_vectors")?,
        dual_coef: get_vector(&c, path, "dual_coef")?,
        bias: h.bias,
        platt: h.platt,
        iterations: h.iterations,
        kkt_gap: h.kkt_gap,
        dual_objective: h.dual_objective,
    };
    if scaler.medians.len() != h.feature_names.len() {
        return Err(format_err(path, "scaler width differs from the feature list"));
    }
    Ok((h, ShallowModel { scaler, pca, svm }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TitanHeader {
    pub kind: String,
    pub config_hash: String,
    pub config: TitanConfig,
    pub n_snapshots: usize,
}

fn push_params(c: &mut Container, prefix: &str, p: &TitanParameters) {
    let dims = [
        vec![p.w_down.rows(), p.w_down.cols()],
        vec![p.b_down.len()],
        vec![p.w_q.rows(), p.w_q.cols()],
        vec![p.w_k.rows(), p.w_k.cols()],
        vec![p.w_v.rows(), p.w_v.cols()],
        vec![p.w_up.rows(), p.w_up.cols()],
        vec![p.b_up.len()],
        vec![p.w_fc.rows(), p.w_fc.cols()],
        vec![p.b_fc.len()],
    ];
    for ((name, data), d) in PARAMETER_NAMES.iter().zip(p.tensors()).zip(dims) {
        c.push(Tensor::new(format!("{prefix}{name}"), DType::F32, d, data.to_vec()));
    }
}

fn read_params(c: &Container, path: &Path, prefix: &str, cfg: &TitanConfig) -> Result<TitanParameters> {
    let mut p = TitanParameters::zeros(cfg);
    for (name, slot) in PARAMETER_NAMES.iter().zip(p.tensors_mut()) {
        let t = get(c, path, &format!("{prefix}{name}"))?;
        if t.data.len() != slot.len() {
            return Err(format_err(path, format!("{prefix}{name} has the wrong size")));
        }
        slot.copy_from_slice(&t.data);
    }
    Ok(p)
}

/// Final parameters plus the snapshots of the last epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TitanCheckpoint {
    pub config: TitanConfig,
    pub params: TitanParameters,
    pub snapshots: Vec<TitanParameters>,
}

pub fn titan_container(ck: &TitanCheckpoint, hash: &str) -> Container {
    let mut c = Container::new(&TitanHeader {
        kind: "titan".into(),
        config_hash: hash.into(),
        config: ck.config,
        n_snapshots: ck.snapshots.len(),
    });
    push_params(&mut c, "", &ck.params);
    for (i, s) in ck.snapshots.iter().enumerate() {
        push_params(&mut c, &format!("snapshot{i}."), s);
    }
    c
}

pub fn load_titan(path: &Path, hash: &str) -> Result<TitanCheckpoint> {
    let c = load(path, "titan", hash, "run `vsn train-titan` first")?;
    let h: TitanHeader = c.header_as(path)?;
    let params = read_params(&c, path, "", &h.config)?;
    let snapshots = (0..h.n_snapshots)
        .map(|i| read_params(&c, path, &format!("snapshot{i}."), &h.config))
        .collect::<Result<_>>()?;
    Ok(TitanCheckpoint {
        config: h.config,
        params,
        snapshots,
    })
}

/// Round-trips parameters through f32 so in-memory results match a reload.
pub fn narrow(p: &TitanParameters) -> TitanParameters {
    let mut out = p.clone();
    for t in out.tensors_mut() {
        for x in t {
            *x = f64::from(*x as f32);
        }
    }
    out
}
