//! Central finite-difference checks of tape gradients.

use std::sync::Arc;

use hypernews::dhsl::{fuse_structures, topk_structure, weighted_cosine};
use hypernews::hyper_encoder::{attention_e2v, attention_v2e, cosine_matrix, hyperedge_seed};
use hypernews::model::{
    ce_loss, classify, forward, fuse_views, infonce_loss, ModelConfig, ModelInputs, ModelParams,
};
use hypernews::{Csr, Gradients, Mode, ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::instances::{covering_incidence, dataset_on, random_incidence, uniform};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error over every parameter entry of `store`.
pub fn check<F>(store: &ParamStore, f: F) -> f64
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    check_with(store, |s| {
        let mut tape = Tape::new();
        let out = f(&mut tape, s);
        let grads = tape.grad(out, s).expect("scalar output");
        (tape.value(out).item(), grads)
    })
}

/// As [`check`] for a function that records on its own tape.
pub fn check_with<F>(store: &ParamStore, f: F) -> f64
where
    F: Fn(&ParamStore) -> (f64, Gradients),
{
    let (_, grads) = f(store);
    let mut worst = 0.0f64;
    let mut probe = store.clone();
    for id in store.ids() {
        for k in 0..store.get(id).numel() {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + STEP;
            let up = f(&probe).0;
            probe.get_mut(id).data_mut()[k] = orig - STEP;
            let down = f(&probe).0;
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(grads.get(id).data()[k], numeric));
        }
    }
    worst
}

/// Random linear read-out so every output entry carries gradient.
fn readout(tape: &mut Tape, v: Var, rng_seed: u64) -> Var {
    let shape = tape.value(v).shape().to_vec();
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let m = tape.mul_const(v, w);
    tape.sum_all(m)
}

fn in_range(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(lo..hi)).collect())
}

type OpCase = (
    &'static str,
    ParamStore,
    Box<dyn Fn(&mut Tape, &ParamStore) -> Var>,
);

fn params(tensors: Vec<Tensor>) -> ParamStore {
    let mut s = ParamStore::new();
    for (i, t) in tensors.into_iter().enumerate() {
        s.insert(format!("p{i}"), t);
    }
    s
}

fn ids(s: &ParamStore) -> Vec<hypernews::ParamId> {
    s.ids().collect()
}

/// Every tape operation and the composite layers, each as (name, worst
/// relative error).
pub fn op_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut cases: Vec<OpCase> = Vec::new();

    macro_rules! case {
        ($name:expr, [$($t:expr),*], |$tape:ident, $v:ident| $body:expr) => {{
            let store = params(vec![$($t),*]);
            let f = move |$tape: &mut Tape, s: &ParamStore| {
                let $v: Vec<Var> = ids(s).into_iter().map(|id| $tape.param(s, id)).collect();
                let out = $body;
                readout($tape, out, 99)
            };
            cases.push(($name, store, Box::new(f)));
        }};
    }

    case!("matmul", [uniform(r, 3, 4), uniform(r, 4, 2)], |t, v| t
        .matmul(v[0], v[1]));
    case!("transpose", [uniform(r, 3, 4)], |t, v| t.transpose(v[0]));
    case!("add", [uniform(r, 3, 2), uniform(r, 3, 2)], |t, v| t
        .add(v[0], v[1]));
    case!("sub", [uniform(r, 3, 2), uniform(r, 3, 2)], |t, v| t
        .sub(v[0], v[1]));
    case!("mul", [uniform(r, 3, 2), uniform(r, 3, 2)], |t, v| t
        .mul(v[0], v[1]));
    case!("add_row", [uniform(r, 3, 2), uniform(r, 1, 2)], |t, v| t
        .add_row(v[0], v[1]));
    case!("mul_row", [uniform(r, 3, 2), uniform(r, 1, 2)], |t, v| t
        .mul_row(v[0], v[1]));
    case!("mul_col", [uniform(r, 3, 2), uniform(r, 3, 1)], |t, v| t
        .mul_col(v[0], v[1]));
    case!(
        "mul_scalar",
        [uniform(r, 3, 2), Tensor::scalar(0.7)],
        |t, v| t.mul_scalar(v[0], v[1])
    );
    case!("scale", [uniform(r, 3, 2)], |t, v| t.scale(v[0], -1.3));
    let m = uniform(r, 3, 2);
    case!("mul_const", [uniform(r, 3, 2)], |t, v| t
        .mul_const(v[0], m.clone()));
    case!("relu", [uniform(r, 4, 3)], |t, v| t.relu(v[0]));
    case!("leaky_relu", [uniform(r, 4, 3)], |t, v| t
        .leaky_relu(v[0], 0.2));
    case!("exp", [uniform(r, 3, 3)], |t, v| t.exp(v[0]));
    case!("ln_clamped", [in_range(r, 3, 3, 0.2, 2.0)], |t, v| t
        .ln_clamped(v[0], 1e-12));
    case!("recip_guarded", [in_range(r, 3, 3, 0.2, 2.0)], |t, v| t
        .recip_guarded(v[0], 0.0));
    case!("clamp", [in_range(r, 4, 3, -0.9, 1.9)], |t, v| t
        .clamp(v[0], 0.0, 1.0));
    case!("softmax_rows", [uniform(r, 3, 4)], |t, v| t
        .softmax_rows(v[0], None));
    let mask = vec![
        true, false, true, true, false, true, true, false, false, false, true, true,
    ];
    case!("softmax_rows_masked", [uniform(r, 3, 4)], |t, v| t
        .softmax_rows(v[0], Some(&mask)));
    case!("normalize_rows", [uniform(r, 3, 4)], |t, v| t
        .normalize_rows(v[0], 1e-12));
    case!("sum_all", [uniform(r, 3, 4)], |t, v| t.sum_all(v[0]));
    case!("mean_all", [uniform(r, 3, 4)], |t, v| t.mean_all(v[0]));
    case!("sum_cols", [uniform(r, 3, 4)], |t, v| t.sum_cols(v[0]));
    case!("sum_rows", [uniform(r, 3, 4)], |t, v| t.sum_rows(v[0]));
    case!("gather_rows", [uniform(r, 4, 3)], |t, v| t
        .gather_rows(v[0], &[2, 0, 2]));
    case!("gather_cols", [uniform(r, 3, 4)], |t, v| t
        .gather_cols(v[0], &[3, 1]));
    case!("pick", [uniform(r, 3, 2)], |t, v| t.pick(v[0], &[1, 0, 1]));
    case!("element", [uniform(r, 3, 2)], |t, v| t.element(v[0], 4));
    let csr = Arc::new(Csr::from_rows(
        4,
        &[vec![(1, 0.5), (3, 0.5)], vec![], vec![(0, 1.0)]],
    ));
    case!("spmm", [uniform(r, 4, 2)], |t, v| t.spmm(csr.clone(), v[0]));

    case!(
        "cosine_matrix",
        [uniform(r, 4, 3), uniform(r, 2, 3)],
        |t, v| cosine_matrix(t, v[0], v[1])
    );
    case!(
        "weighted_cosine",
        [uniform(r, 4, 3), uniform(r, 2, 3), uniform(r, 1, 3)],
        |t, v| { weighted_cosine(t, v[0], v[1], v[2]) }
    );
    let h = random_incidence(r, 5, 3);
    let (h1, h2, h3) = (h.clone(), h.clone(), h.clone());
    case!("hyperedge_seed", [uniform(r, 5, 3)], |t, v| {
        let hc = t.constant(h1.clone());
        hyperedge_seed(t, v[0], hc)
    });
    case!("attention_v2e", [uniform(r, 5, 3)], |t, v| {
        let hc = t.constant(h2.clone());
        let u = hyperedge_seed(t, v[0], hc);
        attention_v2e(t, v[0], u, hc)
    });
    case!("attention_e2v", [uniform(r, 5, 3)], |t, v| {
        let hc = t.constant(h3.clone());
        let u = hyperedge_seed(t, v[0], hc);
        attention_e2v(t, v[0], u, hc)
    });
    case!("topk_structure", [uniform(r, 5, 3)], |t, v| topk_structure(
        t, v[0], 0.4
    ));
    case!(
        "fuse_structures",
        [
            in_range(r, 4, 2, 0.0, 0.5),
            in_range(r, 4, 2, 0.0, 0.5),
            in_range(r, 4, 2, 0.0, 0.5),
            uniform(r, 1, 3)
        ],
        |t, v| fuse_structures(t, v[0], v[1], v[2], v[3])
    );
    case!(
        "classify",
        [uniform(r, 3, 4), uniform(r, 4, 2), uniform(r, 1, 2)],
        |t, v| { classify(t, v[0], v[1], v[2]) }
    );
    case!(
        "fuse_views",
        [
            uniform(r, 3, 2),
            uniform(r, 3, 2),
            uniform(r, 3, 2),
            uniform(r, 1, 3)
        ],
        |t, v| { fuse_views(t, [Some(v[0]), Some(v[1]), Some(v[2])], v[3]).unwrap() }
    );

    let mut results: Vec<(&'static str, f64)> = cases
        .iter()
        .map(|(name, store, f)| (*name, check(store, |t, s| f(t, s))))
        .collect();

    // losses are scalar already; no read-out
    let probs = params(vec![uniform(r, 4, 2)]);
    results.push((
        "ce_loss",
        check(&probs, |t, s| {
            let x = t.param(s, ids(s)[0]);
            let p = t.softmax_rows(x, None);
            ce_loss(t, p, &[0, 1, 1, 0])
        }),
    ));
    let emb = params(vec![uniform(r, 6, 3), uniform(r, 6, 3)]);
    results.push((
        "infonce_loss",
        check(&emb, |t, s| {
            let i = ids(s);
            let (a, b) = (t.param(s, i[0]), t.param(s, i[1]));
            infonce_loss(t, a, b, &[0, 1, 1, 0, 1, 0], 0.5)
        }),
    ));
    results
}

/// Whole-model loss (cross-entropy plus weighted contrastive term) on a
/// random 8-news / 3-hyperedge / `d_in = 8` instance.
///
/// Every node gets at least two hyperedges. A node whose structure support
/// is a single hyperedge receives a positive multiple of that hyperedge's
/// message, so such nodes have exactly tied cosines and top-k selection is
/// not differentiable there.
pub fn end_to_end(seed: u64, dhsl: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = covering_incidence(&mut rng, 8, 3, 2);
    let data = dataset_on(&mut rng, &h, 8, 4);
    let cfg = ModelConfig {
        d_in: 8,
        d_h: 16,
        dropout: 0.0,
        p_thd: 0.5,
        dhsl,
        ..ModelConfig::default()
    };
    let (store, params) = ModelParams::init(&cfg, &mut rng);
    let inputs = ModelInputs::new(&data);
    let batch: Vec<usize> = (0..8).collect();
    check_with(&store, |s| {
        // dropout is off, so the generator is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut fp = forward(s, &params, &cfg, &inputs, &batch, Mode::Train, &mut rng).unwrap();
        let parts = fp.loss(&inputs.labels, &cfg);
        let grads = fp.tape.grad(parts.total, s).unwrap();
        (fp.tape.value(parts.total).item(), grads)
    })
}
