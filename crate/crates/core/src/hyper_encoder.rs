//! Hypergraph view: attention-weighted two-stage message passing
//! (nodes → hyperedges → nodes), optionally interleaved with structure
//! learning.
//!
//! Attention scores are `LeakyReLU(cos(a·W, b·W))` normalised by a softmax
//! over the incidence support (`H > 0`). The hyperedge vectors used for
//! scoring are incidence-weighted means of the current node embeddings under
//! whichever structure the stage runs on. Layer nonlinearities are ReLU.
//! The (possibly real-valued) incidence multiplies the attention weights, so
//! learned structure weights scale messages.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dhsl::{self, DhslParams};
use crate::ops::{dropout_mask, Mode, NORM_EPS};
use crate::params::{glorot, ParamId, ParamStore};

pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HgLayerIds {
    /// Node → hyperedge transform.
    pub w1: ParamId,
    /// Hyperedge → node transform.
    pub w2: ParamId,
    /// Shared attention transform.
    pub attn: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperEncoderParams {
    pub layers: Vec<HgLayerIds>,
}

impl HyperEncoderParams {
    pub fn init(
        store: &mut ParamStore,
        d_in: usize,
        d_h: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let din = if l == 0 { d_in } else { d_h };
                HgLayerIds {
                    w1: store.insert(format!("hg.{l}.w1"), glorot(din, d_h, rng)),
                    w2: store.insert(format!("hg.{l}.w2"), glorot(d_h, d_h, rng)),
                    attn: store.insert(format!("hg.{l}.attn"), glorot(din, d_h, rng)),
                }
            })
            .collect();
        Self { layers }
    }
}

/// Incidence-weighted mean of member rows for every hyperedge:
/// `u_j = Σ_v H(v,j)·x_v / Σ_v H(v,j)`; empty hyperedges give zero rows.
pub fn hyperedge_seed(tape: &mut Tape, x: Var, h: Var) -> Var {
    let sizes = tape.sum_rows(h);
    let inv = tape.recip_guarded(sizes, 0.0);
    let inv = tape.transpose(inv);
    let ht = tape.transpose(h);
    let sums = tape.matmul(ht, x);
    tape.mul_col(sums, inv)
}

/// Cosine similarity between every row of `a` and every row of `b`.
pub fn cosine_matrix(tape: &mut Tape, a: Var, b: Var) -> Var {
    let an = tape.normalize_rows(a, NORM_EPS);
    let bn = tape.normalize_rows(b, NORM_EPS);
    let bt = tape.transpose(bn);
    tape.matmul(an, bt)
}

fn support_mask(h: &crate::tensor::Tensor, transpose: bool) -> Vec<bool> {
    let t;
    let src = if transpose {
        t = h.transpose();
        &t
    } else {
        h
    };
    src.data().iter().map(|&v| v > 0.0).collect()
}

/// Node → hyperedge attention, `[M x N]`: row `j` is a softmax over the
/// members of hyperedge `j`. `xa` are attention-transformed nodes, `ua`
/// attention-transformed hyperedge vectors.
pub fn attention_v2e(tape: &mut Tape, xa: Var, ua: Var, h: Var) -> Var {
    let mask = support_mask(tape.value(h), true);
    let sim = cosine_matrix(tape, ua, xa);
    let score = tape.leaky_relu(sim, ATTENTION_SLOPE);
    tape.softmax_rows(score, Some(&mask))
}

/// Hyperedge → node attention, `[N x M]`: row `i` is a softmax over the
/// hyperedges containing node `i`.
pub fn attention_e2v(tape: &mut Tape, xa: Var, ua: Var, h: Var) -> Var {
    let mask = support_mask(tape.value(h), false);
    let sim = cosine_matrix(tape, xa, ua);
    let score = tape.leaky_relu(sim, ATTENTION_SLOPE);
    tape.softmax_rows(score, Some(&mask))
}

/// Result of the node → hyperedge stage.
#[derive(Debug, Clone, Copy)]
pub struct V2eOutput {
    /// Hyperedge embeddings `U`, `[M x d_h]`.
    pub u: Var,
    /// Nodes mapped by `W_1` (`x·W_1`), `[N x d_h]`.
    pub x_w1: Var,
    /// Nodes mapped by the attention transform, `[N x d_h]`.
    pub x_attn: Var,
    pub attention: Var,
}

/// `U = relu((Att_v2e ⊙ Hᵀ)·X·W_1)`.
pub fn v2e_layer(
    tape: &mut Tape,
    store: &ParamStore,
    ids: &HgLayerIds,
    x: Var,
    h: Var,
) -> V2eOutput {
    let w_attn = tape.param(store, ids.attn);
    let w1 = tape.param(store, ids.w1);
    let x_attn = tape.matmul(x, w_attn);
    let seed = hyperedge_seed(tape, x_attn, h);
    let attention = attention_v2e(tape, x_attn, seed, h);
    let ht = tape.transpose(h);
    let weights = tape.mul(attention, ht);
    let x_w1 = tape.matmul(x, w1);
    let msg = tape.matmul(weights, x_w1);
    let u = tape.relu(msg);
    V2eOutput {
        u,
        x_w1,
        x_attn,
        attention,
    }
}

/// `X' = relu((Att_e2v ⊙ H)·U·W_2)`; `x_attn` are the layer's
/// attention-transformed node embeddings.
pub fn e2v_layer(
    tape: &mut Tape,
    store: &ParamStore,
    ids: &HgLayerIds,
    x_attn: Var,
    u: Var,
    h: Var,
) -> (Var, Var) {
    let w2 = tape.param(store, ids.w2);
    let seed = hyperedge_seed(tape, x_attn, h);
    let attention = attention_e2v(tape, x_attn, seed, h);
    let weights = tape.mul(attention, h);
    let agg = tape.matmul(weights, u);
    let pre = tape.matmul(agg, w2);
    (tape.relu(pre), attention)
}

/// Structure learning inputs shared by every layer.
#[derive(Debug, Clone, Copy)]
pub struct DhslContext<'a> {
    pub params: &'a DhslParams,
    /// Text features projected to the hidden size, `[N x d_h]`.
    pub text_proj: Var,
    pub p_thd: f64,
}

#[derive(Debug, Clone)]
pub struct HgnnOutput {
    pub x_hg: Var,
    /// Structure after the last layer.
    pub structure: Var,
    /// Structure each layer's hyperedge → node stage ran on.
    pub layer_structures: Vec<Var>,
}

/// Full hypergraph encoder. Per layer:
/// 1. `U = v2e(X, H_l)`
/// 2. `H_re = DHSL(X, U, H_l)`
/// 3. `X' = e2v(U, H_re)`
/// 4. `H_{l+1} = DHSL(X, U, H_re)`
///
/// With `dhsl = None` both structure steps are the identity. Dropout follows
/// every layer in train mode.
#[allow(clippy::too_many_arguments)]
pub fn hgnn_forward(
    tape: &mut Tape,
    store: &ParamStore,
    params: &HyperEncoderParams,
    x_text: Var,
    h: Var,
    dhsl: Option<DhslContext<'_>>,
    dropout: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> HgnnOutput {
    let mut x = x_text;
    let mut h_l = h;
    let mut layer_structures = Vec::with_capacity(params.layers.len());
    for ids in &params.layers {
        let v2e = v2e_layer(tape, store, ids, x, h_l);
        let learn = |tape: &mut Tape, current: Var| match &dhsl {
            Some(ctx) => dhsl::reconstruct(
                tape,
                store,
                ctx.params,
                v2e.x_w1,
                v2e.u,
                ctx.text_proj,
                current,
                ctx.p_thd,
            ),
            None => current,
        };
        let h_re = learn(tape, h_l);
        let (mut x_next, _) = e2v_layer(tape, store, ids, v2e.x_attn, v2e.u, h_re);
        h_l = learn(tape, h_re);
        if mode == Mode::Train && dropout > 0.0 {
            let mask = dropout_mask(tape.value(x_next).shape(), dropout, rng);
            x_next = tape.mul_const(x_next, mask);
        }
        layer_structures.push(h_re);
        x = x_next;
    }
    HgnnOutput {
        x_hg: x,
        structure: h_l,
        layer_structures,
    }
}
