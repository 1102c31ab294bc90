//! Measured quantities behind the numbered acceptance checks. Each returns
//! the worst deviation seen so callers can compare it to a tolerance.

use hypernews::dataset::PropagationTree;
use hypernews::dhsl::DhslParams;
use hypernews::hyper_encoder::{
    attention_e2v, attention_v2e, hgnn_forward, hyperedge_seed, DhslContext, HyperEncoderParams,
};
use hypernews::model::{forward, infonce_loss, ModelConfig, ModelInputs, ModelParams, ViewToggles};
use hypernews::prop_encoder::{encode_trees, PropEncoderParams, TreeBatch};
use hypernews::{Mode, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::instances::{generic_incidence, random_dataset, random_incidence, random_tree, uniform};
use super::oracle::{self, to_mat, DhslW, LayerW};

/// Worst `|row sum - 1|` over rows with nonempty support, both attention
/// directions, on `instances` random real-weighted incidences.
pub fn attention_row_sums(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..12);
        let m = rng.random_range(1..6);
        let d = rng.random_range(1..8);
        let mut h = random_incidence(&mut rng, n, m);
        for v in h.data_mut() {
            if *v > 0.0 {
                *v = rng.random_range(0.05..1.0);
            }
        }
        let mut tape = Tape::new();
        let x = tape.constant(uniform(&mut rng, n, d));
        let hv = tape.constant(h.clone());
        let u = hyperedge_seed(&mut tape, x, hv);
        let a = attention_v2e(&mut tape, x, u, hv);
        let b = attention_e2v(&mut tape, x, u, hv);
        let (a, b) = (tape.value(a), tape.value(b));
        for j in 0..m {
            worst = worst.max((a.row(j).iter().sum::<f64>() - 1.0).abs());
        }
        for v in 0..n {
            if h.row(v).iter().any(|&w| w > 0.0) {
                worst = worst.max((b.row(v).iter().sum::<f64>() - 1.0).abs());
            } else {
                worst = worst.max(b.row(v).iter().map(|x| x.abs()).sum::<f64>());
            }
        }
    }
    worst
}

struct HgSetup {
    store: ParamStore,
    hg: HyperEncoderParams,
    dhsl: DhslParams,
}

fn hg_setup(rng: &mut ChaCha8Rng, d_in: usize, d_h: usize) -> HgSetup {
    let mut store = ParamStore::new();
    let hg = HyperEncoderParams::init(&mut store, d_in, d_h, 2, rng);
    let dhsl = DhslParams::init(&mut store, d_in, d_h, rng);
    // move the structure weights off their initial values
    for id in [dhsl.w_ebd, dhsl.w_text, dhsl.alpha] {
        for v in store.get_mut(id).data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    HgSetup { store, hg, dhsl }
}

fn run_hg(s: &HgSetup, x: &Tensor, h: &Tensor, p_thd: Option<f64>) -> Tensor {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let hv = tape.constant(h.clone());
    let ctx = p_thd.map(|p| {
        let pt = tape.param(&s.store, s.dhsl.p_text);
        DhslContext {
            params: &s.dhsl,
            text_proj: tape.matmul(xv, pt),
            p_thd: p,
        }
    });
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = hgnn_forward(
        &mut tape,
        &s.store,
        &s.hg,
        xv,
        hv,
        ctx,
        0.5,
        Mode::Eval,
        &mut rng,
    );
    tape.value(out.x_hg).clone()
}

fn oracle_hg(s: &HgSetup, x: &Tensor, h: &Tensor, p_thd: Option<f64>) -> oracle::Mat {
    let layers: Vec<LayerW> =
        s.hg.layers
            .iter()
            .map(|l| LayerW {
                w1: oracle::p(&s.store, l.w1),
                w2: oracle::p(&s.store, l.w2),
                attn: oracle::p(&s.store, l.attn),
            })
            .collect();
    let dw = DhslW {
        w_ebd: oracle::p(&s.store, s.dhsl.w_ebd)[0].clone(),
        w_text: oracle::p(&s.store, s.dhsl.w_text)[0].clone(),
        alpha: oracle::p(&s.store, s.dhsl.alpha)[0].clone(),
        p_text: oracle::p(&s.store, s.dhsl.p_text),
    };
    oracle::hgnn(&layers, &to_mat(x), &to_mat(h), p_thd.map(|p| (&dw, p))).0
}

/// Worst entry gap between the two-layer encoder and the dense oracle on
/// `instances` random 5-node / 2-hyperedge inputs, with structure learning
/// off and on.
pub fn hgnn_oracle_gap(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let s = hg_setup(&mut rng, 4, 3);
        let x = uniform(&mut rng, 5, 4);
        let h = random_incidence(&mut rng, 5, 2);
        for p in [None, Some(0.4), Some(1.0)] {
            let got = to_mat(&run_hg(&s, &x, &h, p));
            worst = worst.max(oracle::max_diff(&got, &oracle_hg(&s, &x, &h, p)));
        }
    }
    worst
}

/// (worst gap to the double-sum oracle over random batches, gap of the
/// equal-similarity balanced batch to ln 2).
pub fn infonce_gaps(instances: u64) -> (f64, f64) {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let b = rng.random_range(2..10);
        let d = rng.random_range(1..6);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
        let tau = rng.random_range(0.1..2.0);
        let (p, h) = (uniform(&mut rng, b, d), uniform(&mut rng, b, d));
        let mut tape = Tape::new();
        let (pv, hv) = (tape.constant(p.clone()), tape.constant(h.clone()));
        let l = infonce_loss(&mut tape, pv, hv, &labels, tau);
        let expect = oracle::infonce(&to_mat(&p), &to_mat(&h), &labels, tau);
        worst = worst.max((tape.value(l).item() - expect).abs());
    }
    let mut tape = Tape::new();
    let same = tape.constant(Tensor::matrix(4, 3, [0.2, -0.4, 0.9].repeat(4)));
    let l = infonce_loss(&mut tape, same, same, &[0, 0, 1, 1], 0.5);
    (worst, (tape.value(l).item() - 2f64.ln()).abs())
}

/// Worst change of root embeddings when non-root tree nodes are relabelled.
pub fn tree_relabel_gap(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let mut store = ParamStore::new();
        let params = PropEncoderParams::init(&mut store, 4, 5, 2, &mut rng);
        let n = rng.random_range(2..15);
        let tree = random_tree(&mut rng, "a", n, 4);
        let mut perm: Vec<usize> = (1..n).collect();
        perm.shuffle(&mut rng);
        // old index -> new index, root fixed
        let mut to_new = vec![0; n];
        for (k, &old) in perm.iter().enumerate() {
            to_new[old] = k + 1;
        }
        let mut feats = vec![Vec::new(); n];
        for (old, f) in tree.node_features.iter().enumerate() {
            feats[to_new[old]] = f.clone();
        }
        let relabelled = PropagationTree {
            news_id: "a".into(),
            node_features: feats,
            edges: tree
                .edges
                .iter()
                .map(|&(a, b)| (to_new[a], to_new[b]))
                .collect(),
        };
        let embed = |t: &PropagationTree| {
            let mut tape = Tape::new();
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let out = encode_trees(
                &mut tape,
                &store,
                &params,
                &TreeBatch::new([t]),
                0.5,
                Mode::Eval,
                &mut r,
            );
            tape.value(out).clone()
        };
        worst = worst.max(embed(&tree).max_abs_diff(&embed(&relabelled)));
    }
    worst
}

/// Worst gap between `X_hg` of permuted inputs and permuted `X_hg`, under a
/// joint node and hyperedge permutation, structure learning off and on.
pub fn hg_equivariance_gap(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let s = hg_setup(&mut rng, 4, 16);
        let (n, m) = (rng.random_range(4..10), rng.random_range(3..6));
        let x = uniform(&mut rng, n, 4);
        // Distinct hyperedges and two or more per node keep similarities
        // free of exact ties, whose lower-index rule depends on node order.
        // A node fed by one hyperedge (or by copies of one) gets a multiple
        // of that hyperedge's message, tying its cosines with its peers.
        let h = generic_incidence(&mut rng, n, m, 2);
        let mut pn: Vec<usize> = (0..n).collect();
        let mut pm: Vec<usize> = (0..m).collect();
        pn.shuffle(&mut rng);
        pm.shuffle(&mut rng);
        // row i of the permuted input is row pn[i] of the original
        let xp = Tensor::matrix(n, 4, pn.iter().flat_map(|&i| x.row(i).to_vec()).collect());
        let mut hp = Tensor::zeros(&[n, m]);
        for i in 0..n {
            for j in 0..m {
                hp.set(i, j, h.get(pn[i], pm[j]));
            }
        }
        for p in [None, Some(0.5)] {
            let a = run_hg(&s, &x, &h, p);
            let b = run_hg(&s, &xp, &hp, p);
            for i in 0..n {
                for (u, v) in b.row(i).iter().zip(a.row(pn[i])) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
    }
    worst
}

/// Worst gap between the model's eval-mode probabilities and the scripted
/// pipeline on random 8-news instances, structure learning off and on.
pub fn pipeline_gap(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let data = random_dataset(&mut rng, 8, 6, 3, 5);
        for dhsl in [false, true] {
            let cfg = ModelConfig {
                d_in: 6,
                d_h: 5,
                p_thd: 0.4,
                dhsl,
                ..ModelConfig::default()
            };
            let (mut store, params) = ModelParams::init(&cfg, &mut rng);
            for v in store.get_mut(params.beta).data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let inputs = ModelInputs::new(&data);
            let batch = [6, 1, 3, 0];
            let got = hypernews::model::predict(&store, &params, &cfg, &inputs, &batch).unwrap();
            let expect = oracle::pipeline(
                &store,
                &params,
                &cfg,
                &to_mat(&inputs.text),
                &to_mat(&inputs.incidence),
                &data.trees,
                &batch,
            );
            worst = worst.max(oracle::max_diff(&to_mat(&got), &expect.probs));
        }
    }
    worst
}

/// Largest gradient magnitude reaching any parameter of a disabled view,
/// over every single-view-off configuration on `instances` random inputs.
pub fn disabled_view_gradient(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
        let data = random_dataset(&mut rng, 8, 6, 3, 4);
        let inputs = ModelInputs::new(&data);
        let batch: Vec<usize> = (0..8).collect();
        for off in 0..3 {
            let mut on = [true; 3];
            on[off] = false;
            let cfg = ModelConfig {
                d_in: 6,
                d_h: 5,
                p_thd: 0.4,
                views: ViewToggles {
                    text: on[0],
                    pro: on[1],
                    hg: on[2],
                },
                ..ModelConfig::default()
            };
            let (store, params) = ModelParams::init(&cfg, &mut rng);
            let mut fp = forward(
                &store,
                &params,
                &cfg,
                &inputs,
                &batch,
                Mode::Train,
                &mut rng,
            )
            .unwrap();
            let parts = fp.loss(&inputs.labels, &cfg);
            let g = fp.tape.grad(parts.total, &store).unwrap();
            for id in &params.view_params()[off] {
                worst = g.get(*id).data().iter().fold(worst, |w, v| w.max(v.abs()));
            }
        }
    }
    worst
}
