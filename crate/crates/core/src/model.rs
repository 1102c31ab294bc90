//! The full classifier: three views, attention fusion, a two-way softmax
//! head, and the cross-entropy plus contrastive objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dataset::{Dataset, PropagationTree};
use crate::dhsl::DhslParams;
use crate::error::{Error, Result};
use crate::hyper_encoder::{cosine_matrix, hgnn_forward, DhslContext, HyperEncoderParams};
use crate::ops::Mode;
use crate::params::{glorot, ParamId, ParamStore};
use crate::prop_encoder::{encode_trees, PropEncoderParams, TreeBatch};
use crate::tensor::Tensor;

/// Floor inside the cross-entropy logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewToggles {
    pub text: bool,
    pub pro: bool,
    pub hg: bool,
}

impl Default for ViewToggles {
    fn default() -> Self {
        Self {
            text: true,
            pro: true,
            hg: true,
        }
    }
}

impl ViewToggles {
    pub fn as_array(&self) -> [bool; 3] {
        [self.text, self.pro, self.hg]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_in: usize,
    pub d_h: usize,
    pub layers_gnn: usize,
    pub layers_hgnn: usize,
    pub dropout: f64,
    pub p_thd: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Weight of the contrastive term.
    pub lambda: f64,
    pub views: ViewToggles,
    pub contrastive: bool,
    pub dhsl: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_in: 768,
            d_h: 128,
            layers_gnn: 2,
            layers_hgnn: 2,
            dropout: 0.5,
            p_thd: 0.2,
            tau: 0.5,
            lambda: 0.5,
            views: ViewToggles::default(),
            contrastive: true,
            dhsl: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_in == 0 || self.d_h == 0 {
            return bad("model.d_in and model.d_h must be positive".into());
        }
        if self.layers_gnn == 0 || self.layers_hgnn == 0 {
            return bad("layer counts must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!(
                "model.dropout must be in [0, 1), got {}",
                self.dropout
            ));
        }
        if !(0.0..=1.0).contains(&self.p_thd) {
            return bad(format!("model.p_thd must be in [0, 1], got {}", self.p_thd));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("model.tau must be positive, got {}", self.tau));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "model.lambda must be non-negative, got {}",
                self.lambda
            ));
        }
        if !self.views.as_array().contains(&true) {
            return bad("at least one view must be enabled".into());
        }
        Ok(())
    }

    /// Whether the contrastive term takes part in the loss.
    pub fn uses_contrastive(&self) -> bool {
        self.contrastive && self.views.pro && self.views.hg
    }
}

/// Parameter handles of the whole model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub text_w: ParamId,
    pub text_b: ParamId,
    pub prop: PropEncoderParams,
    pub hg: HyperEncoderParams,
    pub dhsl: DhslParams,
    /// `[1 x 3]` view-fusion logits.
    pub beta: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

impl ModelParams {
    /// Registers every parameter in a fixed order whatever the toggles, so
    /// variants started from one seed share their initial weights.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> (ParamStore, Self) {
        let mut store = ParamStore::new();
        let (d_in, d_h) = (cfg.d_in, cfg.d_h);
        let text_w = store.insert("text.w", glorot(d_in, d_h, rng));
        let text_b = store.insert("text.b", Tensor::zeros(&[1, d_h]));
        let prop = PropEncoderParams::init(&mut store, d_in, d_h, cfg.layers_gnn, rng);
        let hg = HyperEncoderParams::init(&mut store, d_in, d_h, cfg.layers_hgnn, rng);
        let dhsl = DhslParams::init(&mut store, d_in, d_h, rng);
        let beta = store.insert("fusion.beta", Tensor::zeros(&[1, 3]));
        let head_w = store.insert("head.w", glorot(d_h, 2, rng));
        let head_b = store.insert("head.b", Tensor::zeros(&[1, 2]));
        let params = Self {
            text_w,
            text_b,
            prop,
            hg,
            dhsl,
            beta,
            head_w,
            head_b,
        };
        (store, params)
    }

    /// Parameters owned by each view, in text, propagation, hypergraph order.
    pub fn view_params(&self) -> [Vec<ParamId>; 3] {
        let prop = self
            .prop
            .layers
            .iter()
            .flat_map(|l| [l.w_self, l.w_nbr])
            .collect();
        let mut hg: Vec<ParamId> = self
            .hg
            .layers
            .iter()
            .flat_map(|l| [l.w1, l.w2, l.attn])
            .collect();
        hg.extend([
            self.dhsl.w_ebd,
            self.dhsl.w_text,
            self.dhsl.alpha,
            self.dhsl.p_text,
        ]);
        [vec![self.text_w, self.text_b], prop, hg]
    }
}

/// Dense views of a dataset reused by every forward pass.
#[derive(Debug, Clone)]
pub struct ModelInputs<'a> {
    pub text: Tensor,
    pub incidence: Tensor,
    pub trees: &'a [PropagationTree],
    pub labels: Vec<usize>,
}

impl<'a> ModelInputs<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        Self {
            text: dataset.text_matrix(),
            incidence: dataset.hypergraph.incidence().clone(),
            trees: &dataset.trees,
            labels: dataset.labels().into_iter().map(usize::from).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Recorded forward pass over one batch of news.
pub struct ForwardPass {
    pub tape: Tape,
    /// `[B x 2]` class probabilities, column 1 is "fake".
    pub probs: Var,
    pub x_pro: Option<Var>,
    pub x_hg: Option<Var>,
    /// Structure used by each hypergraph layer's second stage.
    pub structures: Vec<Var>,
    pub batch: Vec<usize>,
}

/// Runs all enabled views on `batch` (indices into the dataset). The
/// hypergraph view is computed over every news and then restricted to the
/// batch. Dropout draws from `rng` in propagation then hypergraph order.
pub fn forward(
    store: &ParamStore,
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &ModelInputs<'_>,
    batch: &[usize],
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<ForwardPass> {
    if batch.is_empty() {
        return Err(crate::error::DataError::EmptyIndexSet.into());
    }
    let mut tape = Tape::new();
    let mut views: [Option<Var>; 3] = [None, None, None];

    if cfg.views.text {
        let x = tape.constant(gather(&inputs.text, batch));
        let w = tape.param(store, params.text_w);
        let b = tape.param(store, params.text_b);
        let xw = tape.matmul(x, w);
        views[0] = Some(tape.add_row(xw, b));
    }

    if cfg.views.pro {
        let tree_batch = TreeBatch::new(batch.iter().map(|&i| &inputs.trees[i]));
        views[1] = Some(encode_trees(
            &mut tape,
            store,
            &params.prop,
            &tree_batch,
            cfg.dropout,
            mode,
            rng,
        ));
    }

    let mut structures = Vec::new();
    if cfg.views.hg {
        let x = tape.constant(inputs.text.clone());
        let h = tape.constant(inputs.incidence.clone());
        let ctx = if cfg.dhsl {
            let p = tape.param(store, params.dhsl.p_text);
            let text_proj = tape.matmul(x, p);
            Some(DhslContext {
                params: &params.dhsl,
                text_proj,
                p_thd: cfg.p_thd,
            })
        } else {
            None
        };
        let out = hgnn_forward(
            &mut tape,
            store,
            &params.hg,
            x,
            h,
            ctx,
            cfg.dropout,
            mode,
            rng,
        );
        structures = out.layer_structures;
        views[2] = Some(tape.gather_rows(out.x_hg, batch));
    }

    let beta = tape.param(store, params.beta);
    let x_news = fuse_views(&mut tape, views, beta)?;
    let w = tape.param(store, params.head_w);
    let b = tape.param(store, params.head_b);
    let probs = classify(&mut tape, x_news, w, b);
    Ok(ForwardPass {
        tape,
        probs,
        x_pro: views[1],
        x_hg: views[2],
        structures,
        batch: batch.to_vec(),
    })
}

fn gather(m: &Tensor, rows: &[usize]) -> Tensor {
    let data = rows
        .iter()
        .flat_map(|&r| m.row(r).iter().copied())
        .collect();
    Tensor::matrix(rows.len(), m.cols(), data)
}

/// Softmax over `beta` restricted to the present views, then the weighted
/// sum. A single present view is returned as is.
pub fn fuse_views(tape: &mut Tape, views: [Option<Var>; 3], beta: Var) -> Result<Var> {
    let present: Vec<(usize, Var)> = views
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect();
    match present.as_slice() {
        [] => Err(Error::Config("no views enabled".into())),
        [(_, only)] => Ok(*only),
        _ => {
            let cols: Vec<usize> = present.iter().map(|&(k, _)| k).collect();
            let logits = tape.gather_cols(beta, &cols);
            let weights = tape.softmax_rows(logits, None);
            let mut acc: Option<Var> = None;
            for (slot, &(_, v)) in present.iter().enumerate() {
                let w = tape.element(weights, slot);
                let term = tape.mul_scalar(v, w);
                acc = Some(match acc {
                    None => term,
                    Some(prev) => tape.add(prev, term),
                });
            }
            Ok(acc.expect("at least two views"))
        }
    }
}

/// `softmax(x·W + b)` row-wise.
pub fn classify(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let xw = tape.matmul(x, w);
    let logits = tape.add_row(xw, b);
    tape.softmax_rows(logits, None)
}

/// Mean negative log-probability of the true class.
pub fn ce_loss(tape: &mut Tape, probs: Var, labels: &[usize]) -> Var {
    let p = tape.pick(probs, labels);
    let lp = tape.ln_clamped(p, LOG_FLOOR);
    let mean = tape.mean_all(lp);
    tape.scale(mean, -1.0)
}

/// Which anchors count and with which weights.
struct ContrastSets {
    /// `1/|K(i)|` on same-label partners `k != i`.
    positive: Tensor,
    /// 1 on different-label partners.
    negative: Tensor,
    anchors: Vec<usize>,
}

fn contrast_sets(labels: &[usize]) -> ContrastSets {
    let b = labels.len();
    let mut positive = Tensor::zeros(&[b, b]);
    let mut negative = Tensor::zeros(&[b, b]);
    let mut anchors = Vec::new();
    for i in 0..b {
        let pos: Vec<usize> = (0..b)
            .filter(|&k| k != i && labels[k] == labels[i])
            .collect();
        let neg: Vec<usize> = (0..b).filter(|&t| labels[t] != labels[i]).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        anchors.push(i);
        for &k in &pos {
            positive.set(i, k, 1.0 / pos.len() as f64);
        }
        for &t in &neg {
            negative.set(i, t, 1.0);
        }
    }
    ContrastSets {
        positive,
        negative,
        anchors,
    }
}

/// Supervised InfoNCE between propagation and hypergraph embeddings of one
/// batch. For anchor `i`:
/// `-log( mean_{k in K(i)} e^{s_ik/τ} / Σ_{t in T(i)} e^{s_it/τ} )`
/// with `s` the cross-view cosine, `K(i)` same-label partners other than
/// `i` and `T(i)` different-label ones. Anchors without a partner of either
/// kind are skipped; if none remain the loss is 0.
pub fn infonce_loss(tape: &mut Tape, x_pro: Var, x_hg: Var, labels: &[usize], tau: f64) -> Var {
    let sets = contrast_sets(labels);
    if sets.anchors.is_empty() {
        log::warn!(
            "contrastive loss skipped: batch has no anchor with both positives and negatives"
        );
        return tape.constant(Tensor::scalar(0.0));
    }
    let b = labels.len();
    let sim = cosine_matrix(tape, x_pro, x_hg);
    // shifting by the largest possible cosine keeps exp bounded for small τ
    let shift = tape.constant(Tensor::full(&[b, b], -1.0));
    let shifted = tape.add(sim, shift);
    let scaled = tape.scale(shifted, 1.0 / tau);
    let e = tape.exp(scaled);
    let pos = tape.mul_const(e, sets.positive);
    let neg = tape.mul_const(e, sets.negative);
    let num = tape.sum_cols(pos);
    let den = tape.sum_cols(neg);
    let num = tape.gather_rows(num, &sets.anchors);
    let den = tape.gather_rows(den, &sets.anchors);
    let ln_num = tape.ln_clamped(num, f64::MIN_POSITIVE);
    let ln_den = tape.ln_clamped(den, f64::MIN_POSITIVE);
    let per_anchor = tape.sub(ln_den, ln_num);
    tape.mean_all(per_anchor)
}

/// `ce + λ·cl`.
pub fn total_loss(tape: &mut Tape, ce: Var, cl: Var, lambda: f64) -> Var {
    let weighted = tape.scale(cl, lambda);
    tape.add(ce, weighted)
}

/// Loss nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub ce: Var,
    pub cl: Option<Var>,
}

impl ForwardPass {
    /// Training objective on this pass's batch.
    pub fn loss(&mut self, labels: &[usize], cfg: &ModelConfig) -> LossParts {
        let batch_labels: Vec<usize> = self.batch.iter().map(|&i| labels[i]).collect();
        let ce = ce_loss(&mut self.tape, self.probs, &batch_labels);
        match (cfg.uses_contrastive(), self.x_pro, self.x_hg) {
            (true, Some(p), Some(h)) => {
                let cl = infonce_loss(&mut self.tape, p, h, &batch_labels, cfg.tau);
                let total = total_loss(&mut self.tape, ce, cl, cfg.lambda);
                LossParts {
                    total,
                    ce,
                    cl: Some(cl),
                }
            }
            _ => LossParts {
                total: ce,
                ce,
                cl: None,
            },
        }
    }

    pub fn probabilities(&self) -> &Tensor {
        self.tape.value(self.probs)
    }
}

/// Eval-mode class probabilities for `indices`.
pub fn predict(
    store: &ParamStore,
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &ModelInputs<'_>,
    indices: &[usize],
) -> Result<Tensor> {
    // eval mode draws nothing from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fp = forward(store, params, cfg, inputs, indices, Mode::Eval, &mut rng)?;
    Ok(fp.probabilities().clone())
}
