//! Run configuration: a TOML document of corpus paths and module settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vsn_core::corpus::DEFAULT_PUNCTUATION;
use vsn_core::dtm::DtmConfig;
use vsn_core::eval::Task;
use vsn_core::explain::{ShapMethod, DEFAULT_EXACT_LIMIT, DEFAULT_MC_SAMPLES};
use vsn_core::shallow::{self, GridCell, KernelSpec, ShallowConfig};
use vsn_core::titan::{RopeConfig, TitanConfig, IMAGE_ROPE_BASE, TEXT_ROPE_BASE};

use crate::error::{io_err, PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub corpus: CorpusSection,
    pub lexicons: LexiconSection,
    pub refmetrics: RefMetricsSection,
    #[serde(default)]
    pub dtm: DtmSection,
    #[serde(default)]
    pub shallow: ShallowSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub titan: TitanSection,
    #[serde(default)]
    pub explain: ExplainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub manifest: String,
    #[serde(default = "default_slices")]
    pub n_slices: usize,
    #[serde(default = "default_punctuation")]
    pub punctuation: String,
    /// Optional closed tag set; transcripts using other tags are rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tagset: Option<String>,
}

fn default_slices() -> usize {
    15
}

fn default_punctuation() -> String {
    DEFAULT_PUNCTUATION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconSection {
    pub stopwords: String,
    pub filled_pauses: String,
    pub lexical_fillers: String,
    pub backchannels: String,
    pub functional_tags: String,
    /// Words whose reappearance marks a narrative returning to its start.
    pub cycle: String,
    pub categories: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefMetricsSection {
    pub references: Vec<String>,
    /// `word<TAB>tag` lines.
    pub visual_words: String,
    /// NME1 file: picture embeddings in the image block, one text row per
    /// visual word.
    pub visual_embeddings: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_top_k() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtmSection {
    pub n_topics: usize,
    pub alpha: f64,
    pub sigma2: f64,
    pub init_variance: f64,
    pub obs_variance: f64,
    pub vocab_min_count: usize,
    pub max_em_iters: usize,
    pub elbo_tol: f64,
    pub max_doc_iters: usize,
    pub doc_tol: f64,
    pub max_topic_iters: usize,
}

impl Default for DtmSection {
    fn default() -> Self {
        let d = DtmConfig::default();
        Self {
            n_topics: d.n_topics,
            alpha: d.alpha,
            sigma2: d.sigma2,
            init_variance: d.init_variance,
            obs_variance: d.obs_variance,
            vocab_min_count: d.vocab_min_count,
            max_em_iters: d.max_em_iters,
            elbo_tol: d.elbo_tol,
            max_doc_iters: d.max_doc_iters,
            doc_tol: d.doc_tol,
            max_topic_iters: d.max_topic_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShallowSection {
    /// 0 disables PCA.
    pub n_components: usize,
    pub kernel: KernelName,
    /// RBF width; omitted means 1 / (D Var(Z)).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub c: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for ShallowSection {
    fn default() -> Self {
        Self {
            n_components: shallow::DEFAULT_COMPONENTS,
            kernel: KernelName::Rbf,
            gamma: None,
            c: shallow::DEFAULT_C,
            epsilon: shallow::DEFAULT_EPSILON,
            tolerance: shallow::DEFAULT_TOLERANCE,
            max_iter: shallow::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub enabled: bool,
    pub c: Vec<f64>,
    pub n_components: Vec<usize>,
    pub kernels: Vec<KernelName>,
    pub folds: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            enabled: false,
            c: vec![0.1, 1.0, 10.0],
            n_components: vec![3, 5, 10],
            kernels: vec![KernelName::Rbf, KernelName::Linear],
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TitanSection {
    pub bottleneck: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub use_rope: bool,
    pub use_attention: bool,
    pub use_image: bool,
    pub image_rope_base: f64,
    pub text_rope_base: f64,
}

impl Default for TitanSection {
    fn default() -> Self {
        let d = TitanConfig::new(1, Task::Classify);
        Self {
            bottleneck: d.bottleneck,
            epochs: d.epochs,
            lr: d.lr,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            use_rope: true,
            use_attention: true,
            use_image: true,
            image_rope_base: IMAGE_ROPE_BASE,
            text_rope_base: TEXT_ROPE_BASE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMethodName {
    Auto,
    Exact,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub method: ShapMethodName,
    pub mc_samples: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            method: ShapMethodName::Auto,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

fn kernel_spec(k: KernelName, gamma: Option<f64>) -> KernelSpec {
    match k {
        KernelName::Rbf => KernelSpec::Rbf { gamma },
        KernelName::Linear => KernelSpec::Linear,
    }
}

impl RunConfig {
    /// Reads `path`; `seed` replaces the file's seed when given.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.refmetrics.references.is_empty() {
            return bad("refmetrics.references is empty");
        }
        if self.refmetrics.top_k == 0 {
            return bad("refmetrics.top_k must be positive");
        }
        if self.grid.enabled
            && (self.grid.folds < 2 || self.grid.c.is_empty() || self.grid.n_components.is_empty() || self.grid.kernels.is_empty())
        {
            return bad("grid needs at least 2 folds and one value per axis");
        }
        if self.titan.epochs < vsn_core::eval::DEFAULT_EPOCH_WINDOW {
            return bad("titan.epochs must cover the final-epoch averaging window");
        }
        if self.explain.mc_samples < 2 {
            return bad("explain.mc_samples must be at least 2");
        }
        self.dtm_config().validate()?;
        Ok(())
    }

    /// TOML rendering of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn dtm_config(&self) -> DtmConfig {
        let d = &self.dtm;
        DtmConfig {
            n_topics: d.n_topics,
            n_slices: self.corpus.n_slices,
            alpha: d.alpha,
            sigma2: d.sigma2,
            init_variance: d.init_variance,
            obs_variance: d.obs_variance,
            vocab_min_count: d.vocab_min_count,
            max_em_iters: d.max_em_iters,
            elbo_tol: d.elbo_tol,
            max_doc_iters: d.max_doc_iters,
            doc_tol: d.doc_tol,
            max_topic_iters: d.max_topic_iters,
            seed: self.seed,
        }
    }

    pub fn shallow_config(&self, task: Task) -> ShallowConfig {
        let s = &self.shallow;
        ShallowConfig {
            task,
            n_components: s.n_components,
            kernel: kernel_spec(s.kernel, s.gamma),
            c: s.c,
            epsilon: s.epsilon,
            tolerance: s.tolerance,
            max_iter: s.max_iter,
        }
    }

    /// Cells in kernel, C, components order.
    pub fn grid_cells(&self) -> Vec<GridCell> {
        let g = &self.grid;
        let mut cells = Vec::new();
        for &k in &g.kernels {
            for &c in &g.c {
                for &n in &g.n_components {
                    cells.push(GridCell {
                        kernel: kernel_spec(k, self.shallow.gamma),
                        c,
                        n_components: n,
                    });
                }
            }
        }
        cells
    }

    pub fn titan_config(&self, hidden: usize, task: Task) -> TitanConfig {
        let t = &self.titan;
        TitanConfig {
            bottleneck: t.bottleneck,
            epochs: t.epochs,
            lr: t.lr,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            seed: self.seed,
            rope: RopeConfig {
                enabled: t.use_rope,
                image_base: t.image_rope_base,
                text_base: t.text_rope_base,
            },
            use_attention: t.use_attention,
            use_image: t.use_image,
            ..TitanConfig::new(hidden, task)
        }
    }

    pub fn shap_method(&self, n_features: usize) -> ShapMethod {
        let mc = ShapMethod::PermutationMc {
            n_samples: self.explain.mc_samples,
            seed: self.seed,
        };
        match self.explain.method {
            ShapMethodName::Exact => ShapMethod::Exact,
            ShapMethodName::Mc => mc,
            ShapMethodName::Auto if n_features <= DEFAULT_EXACT_LIMIT => ShapMethod::Exact,
            ShapMethodName::Auto => mc,
        }
    }
}
