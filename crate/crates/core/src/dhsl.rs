//! Dynamic hypergraph structure learning.
//!
//! From node embeddings and hyperedge embeddings of the current layer a
//! weighted-cosine similarity matrix is built; each hyperedge keeps its
//! `ceil(p_thd * N)` most similar nodes (`H_ebd`). The same is done with
//! projected text features anchored on the current structure (`H_text`).
//! The predefined structure and both learned ones are mixed by a softmax
//! over three logits. When both learned structures are empty the input
//! structure is passed through untouched, so `p_thd = 0` is exactly the
//! model without structure learning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::hyper_encoder::hyperedge_seed;
use crate::ops::NORM_EPS;
use crate::params::{glorot, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhslParams {
    /// `[1 x d_h]` weights of the embedding similarity.
    pub w_ebd: ParamId,
    /// `[1 x d_h]` weights of the text similarity.
    pub w_text: ParamId,
    /// `[1 x 3]` logits over (given, embedding, text) structures.
    pub alpha: ParamId,
    /// `[d_in x d_h]` projection of text features.
    pub p_text: ParamId,
}

impl DhslParams {
    pub fn init(store: &mut ParamStore, d_in: usize, d_h: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_ebd: store.insert("dhsl.w_ebd", Tensor::full(&[1, d_h], 1.0)),
            w_text: store.insert("dhsl.w_text", Tensor::full(&[1, d_h], 1.0)),
            alpha: store.insert("dhsl.alpha", Tensor::zeros(&[1, 3])),
            p_text: store.insert("dhsl.p_text", glorot(d_in, d_h, rng)),
        }
    }
}

/// Nodes kept per hyperedge: `ceil(p_thd * n)`, tolerant of float noise
/// such as `0.3 * 10 = 3.0000000000000004`.
pub fn keep_count(p_thd: f64, n: usize) -> usize {
    let k = (p_thd * n as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

/// `s[i][j] = cos(w ⊙ x_i, w ⊙ u_j)`, zero where either side vanishes.
pub fn weighted_cosine(tape: &mut Tape, x: Var, u: Var, w: Var) -> Var {
    let xw = tape.mul_row(x, w);
    let uw = tape.mul_row(u, w);
    let xn = tape.normalize_rows(xw, NORM_EPS);
    let un = tape.normalize_rows(uw, NORM_EPS);
    let ut = tape.transpose(un);
    tape.matmul(xn, ut)
}

/// Resolution at which similarities are ranked; values closer than this
/// count as tied.
pub const TIE_RESOLUTION: f64 = 1e-12;

fn rank_key(v: f64) -> i64 {
    (v / TIE_RESOLUTION).round() as i64
}

/// 0/1 mask choosing, per column, the `k` largest entries; ties (equal up
/// to [`TIE_RESOLUTION`]) go to the lower row index.
pub fn topk_mask(s: &Tensor, k: usize) -> Tensor {
    let (n, m) = (s.rows(), s.cols());
    let mut mask = Tensor::zeros(&[n, m]);
    if k == 0 {
        return mask;
    }
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..m {
        order.sort_by_key(|&i| (std::cmp::Reverse(rank_key(s.get(i, j))), i));
        for &i in order.iter().take(k) {
            mask.set(i, j, 1.0);
        }
    }
    mask
}

/// Sparsified structure: selected entries carry `max(s, 0)`, the rest 0.
/// Selection itself is not differentiated; gradients reach `s` through the
/// kept entries.
pub fn topk_structure(tape: &mut Tape, s: Var, p_thd: f64) -> Var {
    let sv = tape.value(s);
    let k = keep_count(p_thd, sv.rows());
    if k == 0 {
        let zeros = Tensor::zeros(sv.shape());
        return tape.constant(zeros);
    }
    let mask = topk_mask(sv, k);
    let pos = tape.relu(s);
    tape.mul_const(pos, mask)
}

/// Structure from projected text: hyperedge anchors are the
/// incidence-weighted means of projected text under `h_current`.
pub fn text_structure(
    tape: &mut Tape,
    text_proj: Var,
    h_current: Var,
    w_text: Var,
    p_thd: f64,
) -> Var {
    if keep_count(p_thd, tape.value(text_proj).rows()) == 0 {
        let zeros = Tensor::zeros(tape.value(h_current).shape());
        return tape.constant(zeros);
    }
    let anchors = hyperedge_seed(tape, text_proj, h_current);
    let s = weighted_cosine(tape, text_proj, anchors, w_text);
    topk_structure(tape, s, p_thd)
}

/// Softmax-weighted mix of the three structures, clamped to `[0, 1]`.
/// Returns `h` itself when both learned structures are all zero.
pub fn fuse_structures(tape: &mut Tape, h: Var, h_ebd: Var, h_text: Var, alpha: Var) -> Var {
    let empty = |t: &Tensor| t.data().iter().all(|&v| v == 0.0);
    if empty(tape.value(h_ebd)) && empty(tape.value(h_text)) {
        return h;
    }
    let weights = tape.softmax_rows(alpha, None);
    let mut acc = None;
    for (slot, part) in [h, h_ebd, h_text].into_iter().enumerate() {
        let w = tape.element(weights, slot);
        let term = tape.mul_scalar(part, w);
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term),
        });
    }
    tape.clamp(acc.expect("three terms"), 0.0, 1.0)
}

/// One structure-learning step: `x_tilde` are node embeddings and `u`
/// hyperedge embeddings in the hidden space, `text_proj` the projected
/// text features, `h_current` the structure being refined.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct(
    tape: &mut Tape,
    store: &ParamStore,
    params: &DhslParams,
    x_tilde: Var,
    u: Var,
    text_proj: Var,
    h_current: Var,
    p_thd: f64,
) -> Var {
    let h_ebd = if keep_count(p_thd, tape.value(x_tilde).rows()) == 0 {
        let zeros = Tensor::zeros(tape.value(h_current).shape());
        tape.constant(zeros)
    } else {
        let w = tape.param(store, params.w_ebd);
        let s = weighted_cosine(tape, x_tilde, u, w);
        topk_structure(tape, s, p_thd)
    };
    let h_text = if keep_count(p_thd, tape.value(text_proj).rows()) == 0 {
        let zeros = Tensor::zeros(tape.value(h_current).shape());
        tape.constant(zeros)
    } else {
        let w = tape.param(store, params.w_text);
        text_structure(tape, text_proj, h_current, w, p_thd)
    };
    let alpha = tape.param(store, params.alpha);
    fuse_structures(tape, h_current, h_ebd, h_text, alpha)
}
