//! Text-image temporal alignment network: bottleneck projection, rotary
//! masked attention over the concatenated image and text rows, masked mean
//! pooling and a linear head. Gradients are derived by hand.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::EmbeddingSequence;
use crate::eval::{classification_metrics, regression_metrics, EpochRecord, Task, DEFAULT_EPOCH_WINDOW};
use crate::math::{cosine, log_sum_exp, softmax_in_place, Matrix};

pub const IMAGE_ROPE_BASE: f64 = 10_000.0;
pub const TEXT_ROPE_BASE: f64 = 500.0;
const MASK_PENALTY: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TitanError {
    #[error("rotary encoding needs an even width, got {0}")]
    OddDimension(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid target: {0}")]
    InvalidTarget(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RopeConfig {
    pub enabled: bool,
    pub image_base: f64,
    pub text_base: f64,
}

impl Default for RopeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            image_base: IMAGE_ROPE_BASE,
            text_base: TEXT_ROPE_BASE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TitanConfig {
    pub hidden: usize,
    pub bottleneck: usize,
    pub n_outputs: usize,
    pub task: Task,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub rope: RopeConfig,
    /// Ablation: skip the attention branch (the bottleneck residual remains).
    pub use_attention: bool,
    /// Ablation: drop the image rows and attend over text only.
    pub use_image: bool,
}

impl TitanConfig {
    pub fn new(hidden: usize, task: Task) -> Self {
        Self {
            hidden,
            bottleneck: 5,
            n_outputs: match task {
                Task::Classify => 2,
                Task::Regress => 1,
            },
            task,
            epochs: 100,
            lr: 1e-3,
            weight_decay: 1e-2,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            rope: RopeConfig::default(),
            use_attention: true,
            use_image: true,
        }
    }

    pub fn validate(&self) -> Result<(), TitanError> {
        if self.bottleneck == 0 || self.bottleneck > self.hidden {
            return Err(TitanError::InvalidConfig("bottleneck must be in 1..=hidden"));
        }
        if self.n_outputs == 0 {
            return Err(TitanError::InvalidConfig("need at least one output"));
        }
        if self.task == Task::Classify && self.n_outputs < 2 {
            return Err(TitanError::InvalidConfig("classification needs at least two outputs"));
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0) {
            return Err(TitanError::InvalidConfig("lr and weight decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(TitanError::InvalidConfig("batch size must be positive"));
        }
        Ok(())
    }
}

/// Network weights. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TitanParameters {
    pub w_down: Matrix,
    pub b_down: Vec<f64>,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_up: Matrix,
    pub b_up: Vec<f64>,
    pub w_fc: Matrix,
    pub b_fc: Vec<f64>,
}

pub const PARAMETER_NAMES: [&str; 9] = ["w_down", "b_down", "w_q", "w_k", "w_v", "w_up", "b_up", "w_fc", "b_fc"];

impl TitanParameters {
    pub fn zeros(cfg: &TitanConfig) -> Self {
        let (h, hp, c) = (cfg.hidden, cfg.bottleneck, cfg.n_outputs);
        Self {
            w_down: Matrix::zeros(hp, h),
            b_down: vec![0.0; hp],
            w_q: Matrix::zeros(hp, hp),
            w_k: Matrix::zeros(hp, hp),
            w_v: Matrix::zeros(hp, hp),
            w_up: Matrix::zeros(h, hp),
            b_up: vec![0.0; h],
            w_fc: Matrix::zeros(c, h),
            b_fc: vec![0.0; c],
        }
    }

    /// Uniform in +-1/sqrt(fan_in) for every weight and bias.
    pub fn init(cfg: &TitanConfig, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(cfg);
        let (h, hp) = (cfg.hidden as f64, cfg.bottleneck as f64);
        let fans = [h, h, hp, hp, hp, hp, hp, h, h];
        for (t, fan) in p.tensors_mut().into_iter().zip(fans) {
            let bound = 1.0 / libm::sqrt(fan);
            for x in t {
                *x = rng.random_range(-bound..bound);
            }
        }
        p
    }

    /// Flat views in `PARAMETER_NAMES` order.
    pub fn tensors(&self) -> [&[f64]; 9] {
        [
            self.w_down.as_slice(),
            &self.b_down,
            self.w_q.as_slice(),
            self.w_k.as_slice(),
            self.w_v.as_slice(),
            self.w_up.as_slice(),
            &self.b_up,
            self.w_fc.as_slice(),
            &self.b_fc,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.w_down.as_mut_slice(),
            &mut self.b_down,
            self.w_q.as_mut_slice(),
            self.w_k.as_mut_slice(),
            self.w_v.as_mut_slice(),
            self.w_up.as_mut_slice(),
            &mut self.b_up,
            self.w_fc.as_mut_slice(),
            &mut self.b_fc,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn add_scaled(&mut self, other: &Self, s: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }
}

/// Rotary position encoding of each row of `x` at `positions`.
pub fn rope_encode(x: &Matrix, positions: &[usize], base: f64) -> Result<Matrix, TitanError> {
    if x.cols() % 2 != 0 {
        return Err(TitanError::OddDimension(x.cols()));
    }
    if positions.len() != x.rows() {
        return Err(TitanError::ShapeMismatch("one position per row"));
    }
    let mut out = x.clone();
    rotate_rows(&mut out, 0, positions, base, x.cols(), 1.0);
    Ok(out)
}

/// Row layout of one forward pass.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    n_images: usize,
    n_texts: usize,
    valid: Vec<bool>,
}

/// Applies the per-modality rotation to a bottleneck matrix. An odd width
/// leaves its last coordinate unrotated.
fn apply_rope(m: &mut Matrix, layout: &Layout, rope: &RopeConfig, sign: f64) {
    if !rope.enabled {
        return;
    }
    let width = m.cols();
    let img_pos: Vec<usize> = (0..layout.n_images).collect();
    let txt_pos: Vec<usize> = (0..layout.n_texts).collect();
    rotate_rows(m, 0, &img_pos, rope.image_base, width, sign);
    rotate_rows(m, layout.n_images, &txt_pos, rope.text_base, width, sign);
}

/// Rotates pairs (2j, 2j+1), j < width/2, of each row by `pos * base^(-2j/width)`.
/// `sign` -1 applies the inverse rotation.
fn rotate_rows(m: &mut Matrix, first_row: usize, positions: &[usize], base: f64, width: usize, sign: f64) {
    let pairs = width / 2;
    for (r, &pos) in positions.iter().enumerate() {
        let row = m.row_mut(first_row + r);
        for j in 0..pairs {
            let omega = libm::pow(base, -2.0 * j as f64 / width as f64);
            let angle = sign * pos as f64 * omega;
            let (s, c) = (libm::sin(angle), libm::cos(angle));
            let (a, b) = (row[2 * j], row[2 * j + 1]);
            row[2 * j] = a * c - b * s;
            row[2 * j + 1] = a * s + b * c;
        }
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    layout: Layout,
    x: Matrix,
    d: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Row-stochastic attention weights over all rows (N x N).
    pub attention: Matrix,
    r: Matrix,
    /// Output rows after the outer residual (N x H).
    pub y: Matrix,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
    /// Softmax of the logits for classification, the logits for regression.
    pub output: Vec<f64>,
}

impl ForwardTrace {
    pub fn n_images(&self) -> usize {
        self.layout.n_images
    }

    pub fn valid_rows(&self) -> &[bool] {
        &self.layout.valid
    }
}

fn stack_rows(seq: &EmbeddingSequence, use_image: bool) -> (Matrix, Layout) {
    let h = seq.hidden();
    let (j, k) = (seq.n_images(), seq.n_texts());
    if use_image {
        let mut x = Matrix::zeros(j + k, h);
        for r in 0..j {
            x.row_mut(r).copy_from_slice(seq.image().row(r));
        }
        for r in 0..k {
            x.row_mut(j + r).copy_from_slice(seq.text().row(r));
        }
        let layout = Layout {
            n_images: j,
            n_texts: k,
            valid: seq.mask().to_vec(),
        };
        (x, layout)
    } else {
        let layout = Layout {
            n_images: 0,
            n_texts: k,
            valid: seq.mask()[j..].to_vec(),
        };
        (seq.text().clone(), layout)
    }
}

fn add_bias(m: &mut Matrix, b: &[f64]) {
    for r in 0..m.rows() {
        for (x, y) in m.row_mut(r).iter_mut().zip(b) {
            *x += y;
        }
    }
}

pub fn forward(params: &TitanParameters, seq: &EmbeddingSequence, cfg: &TitanConfig) -> Result<ForwardTrace, TitanError> {
    if seq.hidden() != cfg.hidden {
        return Err(TitanError::ShapeMismatch("embedding width differs from the configured hidden size"));
    }
    let (x, layout) = stack_rows(seq, cfg.use_image);
    if !layout.valid.iter().any(|&m| m) {
        return Err(TitanError::ShapeMismatch("no valid rows"));
    }
    let n = x.rows();
    let hp = cfg.bottleneck;

    let mut d = x.matmul_t(&params.w_down);
    add_bias(&mut d, &params.b_down);

    let mut q = d.matmul_t(&params.w_q);
    let mut k = d.matmul_t(&params.w_k);
    let v = d.matmul_t(&params.w_v);
    apply_rope(&mut q, &layout, &cfg.rope, 1.0);
    apply_rope(&mut k, &layout, &cfg.rope, 1.0);

    let scale = 1.0 / libm::sqrt(hp as f64);
    let mut attention = q.matmul_t(&k);
    for i in 0..n {
        let row = attention.row_mut(i);
        for (j, s) in row.iter_mut().enumerate() {
            *s *= scale;
            if !layout.valid[j] {
                *s += MASK_PENALTY;
            }
        }
        softmax_in_place(row);
    }

    let mut r = d.clone();
    if cfg.use_attention {
        let attn = attention.matmul(&v);
        for (a, b) in r.as_mut_slice().iter_mut().zip(attn.as_slice()) {
            *a += b;
        }
    }
    let mut y = r.matmul_t(&params.w_up);
    add_bias(&mut y, &params.b_up);
    for (a, b) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *a += b;
    }

    let n_valid = layout.valid.iter().filter(|&&m| m).count() as f64;
    let mut pooled = vec![0.0; cfg.hidden];
    for i in (0..n).filter(|&i| layout.valid[i]) {
        for (p, v) in pooled.iter_mut().zip(y.row(i)) {
            *p += v / n_valid;
        }
    }
    let mut logits = params.b_fc.clone();
    for (c, l) in logits.iter_mut().enumerate() {
        *l += crate::math::dot(params.w_fc.row(c), &pooled);
    }
    let mut output = logits.clone();
    if cfg.task == Task::Classify {
        softmax_in_place(&mut output);
    }
    if !output.iter().all(|v| v.is_finite()) {
        return Err(TitanError::NonFiniteActivation("output"));
    }
    Ok(ForwardTrace {
        layout,
        x,
        d,
        q,
        k,
        v,
        attention,
        r,
        y,
        pooled,
        logits,
        output,
    })
}

/// Training target: class index or a value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(usize),
    Value(f64),
}

/// Cross-entropy for classification, squared error for regression.
pub fn loss(trace: &ForwardTrace, target: Target) -> f64 {
    match target {
        Target::Class(c) => log_sum_exp(&trace.logits) - trace.logits[c],
        Target::Value(t) => {
            let e = trace.logits[0] - t;
            e * e
        }
    }
}

/// Gradient of `loss` with respect to every parameter.
pub fn backward(trace: &ForwardTrace, params: &TitanParameters, target: Target, cfg: &TitanConfig) -> TitanParameters {
    let mut g = TitanParameters::zeros(cfg);
    let (n, h, hp) = (trace.x.rows(), cfg.hidden, cfg.bottleneck);

    let dz: Vec<f64> = match target {
        Target::Class(c) => {
            let mut p = trace.logits.clone();
            softmax_in_place(&mut p);
            p[c] -= 1.0;
            p
        }
        Target::Value(t) => vec![2.0 * (trace.logits[0] - t)],
    };
    for (c, dzc) in dz.iter().enumerate() {
        g.b_fc[c] = *dzc;
        for (w, p) in g.w_fc.row_mut(c).iter_mut().zip(&trace.pooled) {
            *w = dzc * p;
        }
    }
    let mut dp = vec![0.0; h];
    for (c, dzc) in dz.iter().enumerate() {
        for (d, w) in dp.iter_mut().zip(params.w_fc.row(c)) {
            *d += dzc * w;
        }
    }
    let valid = &trace.layout.valid;
    let n_valid = valid.iter().filter(|&&m| m).count() as f64;

    // dY rows: dp / n_valid on valid rows, zero elsewhere
    let mut dy = Matrix::zeros(n, h);
    for i in (0..n).filter(|&i| valid[i]) {
        for (a, b) in dy.row_mut(i).iter_mut().zip(&dp) {
            *a = b / n_valid;
        }
    }
    g.w_up = dy.t_matmul(&trace.r);
    for i in 0..n {
        for (b, d) in g.b_up.iter_mut().zip(dy.row(i)) {
            *b += d;
        }
    }
    let dr = dy.matmul(&params.w_up);
    let mut dd = dr.clone();

    if cfg.use_attention {
        let da = dr.matmul_t(&trace.v);
        let dv = trace.attention.t_matmul(&dr);
        let mut ds = Matrix::zeros(n, n);
        for i in 0..n {
            let a = trace.attention.row(i);
            let gi = da.row(i);
            let inner: f64 = a.iter().zip(gi).map(|(x, y)| x * y).sum();
            for (s, (aj, gj)) in ds.row_mut(i).iter_mut().zip(a.iter().zip(gi)) {
                *s = aj * (gj - inner);
            }
        }
        let scale = 1.0 / libm::sqrt(hp as f64);
        let mut dq = ds.matmul(&trace.k);
        let mut dk = ds.t_matmul(&trace.q);
        for x in dq.as_mut_slice().iter_mut().chain(dk.as_mut_slice()) {
            *x *= scale;
        }
        apply_rope(&mut dq, &trace.layout, &cfg.rope, -1.0);
        apply_rope(&mut dk, &trace.layout, &cfg.rope, -1.0);

        g.w_q = dq.t_matmul(&trace.d);
        g.w_k = dk.t_matmul(&trace.d);
        g.w_v = dv.t_matmul(&trace.d);
        for (dq_, w) in [(&dq, &params.w_q), (&dk, &params.w_k), (&dv, &params.w_v)] {
            let back = dq_.matmul(w);
            for (a, b) in dd.as_mut_slice().iter_mut().zip(back.as_slice()) {
                *a += b;
            }
        }
    }
    g.w_down = dd.t_matmul(&trace.x);
    for i in 0..n {
        for (b, d) in g.b_down.iter_mut().zip(dd.row(i)) {
            *b += d;
        }
    }
    g
}

/// Decoupled-weight-decay Adam.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamW {
    pub m: TitanParameters,
    pub v: TitanParameters,
    pub step: u64,
}

impl AdamW {
    pub fn new(cfg: &TitanConfig) -> Self {
        Self {
            m: TitanParameters::zeros(cfg),
            v: TitanParameters::zeros(cfg),
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut TitanParameters, grad: &TitanParameters, cfg: &TitanConfig) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(cfg.beta1, t);
        let bc2 = 1.0 - libm::pow(cfg.beta2, t);
        let (lr, wd) = (cfg.lr, cfg.weight_decay);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * wd * p[i];
                p[i] -= lr * mhat / (libm::sqrt(vhat) + cfg.adam_eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub seq: EmbeddingSequence,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: TitanParameters,
    /// One record per epoch: train loss, then evaluation metrics if an
    /// evaluation set was given.
    pub log: Vec<EpochRecord>,
    /// Parameters after each of the final epochs (at most five), oldest first.
    pub snapshots: Vec<TitanParameters>,
}

fn check_target(t: Target, cfg: &TitanConfig) -> Result<(), TitanError> {
    match (cfg.task, t) {
        (Task::Classify, Target::Class(c)) if c < cfg.n_outputs => Ok(()),
        (Task::Regress, Target::Value(v)) if (0.0..=1.0).contains(&v) => Ok(()),
        (Task::Classify, _) => Err(TitanError::InvalidTarget("class index out of range")),
        (Task::Regress, _) => Err(TitanError::InvalidTarget("regression targets must lie in [0, 1]")),
    }
}

/// Mean loss and mean gradient over a batch, accumulated in index order.
pub fn batch_gradient(
    params: &TitanParameters,
    batch: &[&Sample],
    cfg: &TitanConfig,
) -> Result<(f64, TitanParameters), TitanError> {
    let mut total = TitanParameters::zeros(cfg);
    let mut loss_sum = 0.0;
    for s in batch {
        let tr = forward(params, &s.seq, cfg)?;
        loss_sum += loss(&tr, s.target);
        total.add_scaled(&backward(&tr, params, s.target, cfg), 1.0);
    }
    let nb = batch.len() as f64;
    for t in total.tensors_mut() {
        for x in t {
            *x /= nb;
        }
    }
    Ok((loss_sum / nb, total))
}

/// Probability of class 1 (classification) or the regression output.
pub fn score(params: &TitanParameters, seq: &EmbeddingSequence, cfg: &TitanConfig) -> Result<f64, TitanError> {
    let tr = forward(params, seq, cfg)?;
    Ok(match cfg.task {
        Task::Classify => tr.output[1],
        Task::Regress => tr.output[0],
    })
}

/// Loss and metrics of `params` on `samples`, as named values.
pub fn evaluate(params: &TitanParameters, samples: &[Sample], cfg: &TitanConfig) -> Result<Vec<(&'static str, f64)>, TitanError> {
    let mut scores = Vec::with_capacity(samples.len());
    let mut total = 0.0;
    for s in samples {
        let tr = forward(params, &s.seq, cfg)?;
        total += loss(&tr, s.target);
        scores.push(match cfg.task {
            Task::Classify => tr.output[1],
            Task::Regress => tr.output[0],
        });
    }
    let mean_loss = total / samples.len().max(1) as f64;
    Ok(match cfg.task {
        Task::Classify => {
            let labels: Vec<u8> = samples
                .iter()
                .map(|s| match s.target {
                    Target::Class(c) => u8::from(c == 1),
                    Target::Value(_) => 0,
                })
                .collect();
            let (f1, auc, rec, prec, acc) = match classification_metrics(&scores, &labels, crate::eval::DEFAULT_THRESHOLD) {
                Ok(m) => (m.f1, m.auc, m.recall, m.precision, m.accuracy),
                Err(_) => {
                    let c = crate::eval::Confusion::from_scores(&scores, &labels, crate::eval::DEFAULT_THRESHOLD);
                    (c.f1(), f64::NAN, c.recall(), c.precision(), c.accuracy())
                }
            };
            vec![("loss", mean_loss), ("f1", f1), ("auc", auc), ("recall", rec), ("precision", prec), ("accuracy", acc)]
        }
        Task::Regress => {
            let targets: Vec<f64> = samples
                .iter()
                .map(|s| match s.target {
                    Target::Value(v) => v,
                    Target::Class(c) => c as f64,
                })
                .collect();
            let (r2, rmse) = match regression_metrics(&scores, &targets) {
                Ok(m) => (m.r2, m.rmse),
                Err(_) => (f64::NAN, f64::NAN),
            };
            vec![("loss", mean_loss), ("r2", r2), ("rmse", rmse)]
        }
    })
}

/// Seeded mini-batch training. The evaluation set, when given, is scored
/// after every epoch.
pub fn train(train_set: &[Sample], eval_set: Option<&[Sample]>, cfg: &TitanConfig) -> Result<TrainOutcome, TitanError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TitanError::EmptyDataset);
    }
    for s in train_set.iter().chain(eval_set.unwrap_or(&[])) {
        check_target(s.target, cfg)?;
        if s.seq.hidden() != cfg.hidden {
            return Err(TitanError::ShapeMismatch("embedding width differs from the configured hidden size"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = TitanParameters::init(cfg, &mut rng);
    let mut opt = AdamW::new(cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut snapshots = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (l, grad) = batch_gradient(&params, &batch, cfg)?;
            if !l.is_finite() || !grad.is_finite() {
                return Err(TitanError::Divergence { epoch, batch: b });
            }
            epoch_loss += l * batch.len() as f64;
            opt.update(&mut params, &grad, cfg);
        }
        let mut values = vec![(alloc::string::String::from("train_loss"), epoch_loss / train_set.len() as f64)];
        if let Some(ev) = eval_set {
            for (name, v) in evaluate(&params, ev, cfg)? {
                values.push((alloc::format!("eval_{name}"), v));
            }
        }
        log.push(EpochRecord { epoch, values });
        if cfg.epochs - epoch <= DEFAULT_EPOCH_WINDOW {
            snapshots.push(params.clone());
        }
    }
    Ok(TrainOutcome { params, log, snapshots })
}

/// Text-query by image-key block of the attention matrix (K x J).
pub fn attention_map(trace: &ForwardTrace) -> Matrix {
    let j = trace.layout.n_images;
    let k = trace.layout.n_texts;
    let mut out = Matrix::zeros(k, j);
    for r in 0..k {
        out.row_mut(r).copy_from_slice(&trace.attention.row(j + r)[..j]);
    }
    out
}

/// Cosine similarity of every image row with every text row (J x K).
pub fn crossmodal_corr(seq: &EmbeddingSequence) -> Matrix {
    let (j, k) = (seq.n_images(), seq.n_texts());
    let mut out = Matrix::zeros(j, k);
    for a in 0..j {
        for b in 0..k {
            out[(a, b)] = cosine(seq.image().row(a), seq.text().row(b));
        }
    }
    out
}
