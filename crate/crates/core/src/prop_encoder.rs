//! Propagation-tree view: mean-aggregation graph layers over each tree,
//! reading out the root (source news) embedding.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dataset::PropagationTree;
use crate::ops::{dropout_mask, Mode};
use crate::params::{glorot, ParamId, ParamStore};
use crate::tensor::{Csr, Tensor};

/// Self and neighbour transforms of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SageLayerIds {
    pub w_self: ParamId,
    pub w_nbr: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropEncoderParams {
    pub layers: Vec<SageLayerIds>,
}

impl PropEncoderParams {
    /// Registers `layers` layers mapping `d_in -> d_h -> ... -> d_h`.
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
                SageLayerIds {
                    w_self: store.insert(format!("prop.{l}.w_self"), glorot(din, d_h, rng)),
                    w_nbr: store.insert(format!("prop.{l}.w_nbr"), glorot(din, d_h, rng)),
                }
            })
            .collect();
        Self { layers }
    }
}

/// Several trees laid out as one disjoint graph.
#[derive(Debug, Clone)]
pub struct TreeBatch {
    pub features: Tensor,
    /// Row-normalised symmetric adjacency: row `v` averages `v`'s neighbours.
    pub mean_adj: Arc<Csr>,
    /// Row of each tree's root in `features`.
    pub roots: Vec<usize>,
}

impl TreeBatch {
    pub fn new<'a>(trees: impl IntoIterator<Item = &'a PropagationTree>) -> Self {
        let mut feats: Vec<f64> = Vec::new();
        let mut adj_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut roots = Vec::new();
        let mut d = 0;
        for tree in trees {
            let offset = adj_rows.len();
            roots.push(offset);
            let n = tree.num_nodes();
            let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
            for &(p, c) in &tree.edges {
                nbrs[p].push(c);
                nbrs[c].push(p);
            }
            for (v, row) in tree.node_features.iter().enumerate() {
                d = row.len();
                feats.extend_from_slice(row);
                let mut ns = nbrs[v].clone();
                ns.sort_unstable();
                let w = 1.0 / ns.len().max(1) as f64;
                adj_rows.push(ns.into_iter().map(|u| (u + offset, w)).collect());
            }
        }
        let total = adj_rows.len();
        Self {
            features: Tensor::matrix(total, d, feats),
            mean_adj: Arc::new(Csr::from_rows(total, &adj_rows)),
            roots,
        }
    }
}

/// `relu(x·W_self + mean_nbr(x)·W_nbr)`; nodes without neighbours get a
/// zero neighbour term.
pub fn sage_layer(
    tape: &mut Tape,
    store: &ParamStore,
    x: Var,
    mean_adj: &Arc<Csr>,
    ids: &SageLayerIds,
) -> Var {
    let w_self = tape.param(store, ids.w_self);
    let w_nbr = tape.param(store, ids.w_nbr);
    let own = tape.matmul(x, w_self);
    let agg = tape.spmm(mean_adj.clone(), x);
    let nbr = tape.matmul(agg, w_nbr);
    let pre = tape.add(own, nbr);
    tape.relu(pre)
}

/// Root embedding of every tree in `batch`, one row per tree. Dropout is
/// applied between layers in train mode.
pub fn encode_trees(
    tape: &mut Tape,
    store: &ParamStore,
    params: &PropEncoderParams,
    batch: &TreeBatch,
    dropout: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Var {
    let mut x = tape.constant(batch.features.clone());
    let last = params.layers.len() - 1;
    for (l, ids) in params.layers.iter().enumerate() {
        x = sage_layer(tape, store, x, &batch.mean_adj, ids);
        if l < last && mode == Mode::Train && dropout > 0.0 {
            let mask = dropout_mask(tape.value(x).shape(), dropout, rng);
            x = tape.mul_const(x, mask);
        }
    }
    tape.gather_rows(x, &batch.roots)
}
