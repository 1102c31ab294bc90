//! Straight-line reimplementations over nested vectors, sharing no code
//! with the library's kernels.

use hypernews::dataset::PropagationTree;
use hypernews::model::{ModelConfig, ModelParams};
use hypernews::{ParamId, ParamStore, Tensor};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn p(store: &ParamStore, id: ParamId) -> Mat {
    to_mat(store.get(id))
}

pub fn mm(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn relu(a: &Mat) -> Mat {
    a.iter()
        .map(|r| r.iter().map(|v| v.max(0.0)).collect())
        .collect()
}

fn lrelu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.2 * v
    }
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Incidence-weighted member mean per hyperedge.
pub fn seed(x: &Mat, h: &Mat) -> Mat {
    let (n, m, d) = (x.len(), h[0].len(), x[0].len());
    (0..m)
        .map(|j| {
            let size: f64 = (0..n).map(|v| h[v][j]).sum();
            let mut out = vec![0.0; d];
            if size > 0.0 {
                for v in 0..n {
                    for c in 0..d {
                        out[c] += h[v][j] * x[v][c] / size;
                    }
                }
            }
            out
        })
        .collect()
}

pub struct LayerW {
    pub w1: Mat,
    pub w2: Mat,
    pub attn: Mat,
}

/// Row `j`: attention of hyperedge `j` over its members.
pub fn att_v2e(xa: &Mat, h: &Mat) -> Mat {
    let s = seed(xa, h);
    let (n, m) = (xa.len(), h[0].len());
    let mut out = vec![vec![0.0; n]; m];
    for j in 0..m {
        let members: Vec<usize> = (0..n).filter(|&v| h[v][j] > 0.0).collect();
        let scores: Vec<f64> = members.iter().map(|&v| lrelu(cos(&s[j], &xa[v]))).collect();
        for (&v, a) in members.iter().zip(softmax(&scores)) {
            out[j][v] = a;
        }
    }
    out
}

/// Row `v`: attention of node `v` over its hyperedges.
pub fn att_e2v(xa: &Mat, h: &Mat) -> Mat {
    let s = seed(xa, h);
    let (n, m) = (xa.len(), h[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for v in 0..n {
        let edges: Vec<usize> = (0..m).filter(|&j| h[v][j] > 0.0).collect();
        let scores: Vec<f64> = edges.iter().map(|&j| lrelu(cos(&xa[v], &s[j]))).collect();
        for (&j, a) in edges.iter().zip(softmax(&scores)) {
            out[v][j] = a;
        }
    }
    out
}

pub struct DhslW {
    pub w_ebd: Vec<f64>,
    pub w_text: Vec<f64>,
    pub alpha: Vec<f64>,
    pub p_text: Mat,
}

fn k_of(p_thd: f64, n: usize) -> usize {
    // smallest k with k >= p·n, forgiving representation noise
    (0..=n)
        .find(|&k| k as f64 >= p_thd * n as f64 - 1e-9)
        .unwrap_or(n)
}

fn topk(sim: &Mat, k: usize) -> Mat {
    let (n, m) = (sim.len(), sim[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for j in 0..m {
        let mut idx: Vec<usize> = (0..n).collect();
        // values equal to 1e-12 are ties; the stable sort keeps lower indices first
        let grid = |v: f64| (v * 1e12).round();
        idx.sort_by(|&a, &b| grid(sim[b][j]).partial_cmp(&grid(sim[a][j])).unwrap());
        for &i in idx.iter().take(k) {
            out[i][j] = sim[i][j].max(0.0);
        }
    }
    out
}

fn wsim(x: &Mat, u: &Mat, w: &[f64]) -> Mat {
    let scale = |r: &Vec<f64>| r.iter().zip(w).map(|(a, b)| a * b).collect::<Vec<f64>>();
    x.iter()
        .map(|xi| u.iter().map(|uj| cos(&scale(xi), &scale(uj))).collect())
        .collect()
}

pub fn dhsl(dw: &DhslW, xt: &Mat, u: &Mat, t: &Mat, h: &Mat, p_thd: f64) -> Mat {
    let k = k_of(p_thd, xt.len());
    let h_ebd = topk(&wsim(xt, u, &dw.w_ebd), k);
    let h_text = topk(&wsim(t, &seed(t, h), &dw.w_text), k);
    let empty = |m: &Mat| m.iter().flatten().all(|&v| v == 0.0);
    if empty(&h_ebd) && empty(&h_text) {
        return h.clone();
    }
    let a = softmax(&dw.alpha);
    h.iter()
        .zip(&h_ebd)
        .zip(&h_text)
        .map(|((r0, r1), r2)| {
            (0..r0.len())
                .map(|c| (a[0] * r0[c] + a[1] * r1[c] + a[2] * r2[c]).clamp(0.0, 1.0))
                .collect()
        })
        .collect()
}

/// Eval-mode hypergraph encoder; returns node embeddings and per-layer
/// relearned structures.
pub fn hgnn(layers: &[LayerW], x: &Mat, h: &Mat, dhsl_w: Option<(&DhslW, f64)>) -> (Mat, Vec<Mat>) {
    let t = dhsl_w.map(|(dw, _)| mm(x, &dw.p_text));
    let mut x = x.clone();
    let mut h_l = h.clone();
    let mut structures = Vec::new();
    for lw in layers {
        let (n, m) = (x.len(), h_l[0].len());
        let xa = mm(&x, &lw.attn);
        let xw = mm(&x, &lw.w1);
        let a = att_v2e(&xa, &h_l);
        let d = xw[0].len();
        let mut u = vec![vec![0.0; d]; m];
        for j in 0..m {
            for v in 0..n {
                for c in 0..d {
                    u[j][c] += a[j][v] * h_l[v][j] * xw[v][c];
                }
            }
        }
        let u = relu(&u);
        let h_re = match (dhsl_w, &t) {
            (Some((dw, p)), Some(t)) => dhsl(dw, &xw, &u, t, &h_l, p),
            _ => h_l.clone(),
        };
        let b = att_e2v(&xa, &h_re);
        let mut agg = vec![vec![0.0; d]; n];
        for v in 0..n {
            for j in 0..m {
                for c in 0..d {
                    agg[v][c] += b[v][j] * h_re[v][j] * u[j][c];
                }
            }
        }
        let next = relu(&mm(&agg, &lw.w2));
        h_l = match (dhsl_w, &t) {
            (Some((dw, p)), Some(t)) => dhsl(dw, &xw, &u, t, &h_re, p),
            _ => h_re.clone(),
        };
        structures.push(h_re);
        x = next;
    }
    (x, structures)
}

/// Root embedding after the tree layers.
pub fn tree_root(layers: &[(Mat, Mat)], tree: &PropagationTree) -> Vec<f64> {
    let n = tree.node_features.len();
    let mut nbrs = vec![Vec::new(); n];
    for &(a, b) in &tree.edges {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    let mut x = tree.node_features.clone();
    for (ws, wn) in layers {
        let own = mm(&x, ws);
        let mean: Mat = (0..n)
            .map(|v| {
                let mut m = vec![0.0; x[0].len()];
                for &u in &nbrs[v] {
                    for c in 0..m.len() {
                        m[c] += x[u][c] / nbrs[v].len() as f64;
                    }
                }
                m
            })
            .collect();
        let nb = mm(&mean, wn);
        x = relu(
            &own.iter()
                .zip(&nb)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
                .collect(),
        );
    }
    x[0].clone()
}

pub fn infonce(xp: &Mat, xh: &Mat, labels: &[usize], tau: f64) -> f64 {
    let b = labels.len();
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..b {
        let pos: Vec<usize> = (0..b)
            .filter(|&k| k != i && labels[k] == labels[i])
            .collect();
        let neg: Vec<usize> = (0..b).filter(|&t| labels[t] != labels[i]).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let num: f64 = pos
            .iter()
            .map(|&k| (cos(&xp[i], &xh[k]) / tau).exp())
            .sum::<f64>()
            / pos.len() as f64;
        let den: f64 = neg.iter().map(|&t| (cos(&xp[i], &xh[t]) / tau).exp()).sum();
        total += -(num / den).ln();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

pub fn ce(probs: &Mat, labels: &[usize]) -> f64 {
    -probs
        .iter()
        .zip(labels)
        .map(|(r, &y)| r[y].max(1e-12).ln())
        .sum::<f64>()
        / labels.len() as f64
}

pub struct PipelineOut {
    pub probs: Mat,
    pub x_pro: Mat,
    pub x_hg: Mat,
}

/// Eval-mode model on `batch`.
pub fn pipeline(
    store: &ParamStore,
    params: &ModelParams,
    cfg: &ModelConfig,
    text: &Mat,
    incidence: &Mat,
    trees: &[PropagationTree],
    batch: &[usize],
) -> PipelineOut {
    let mut views: Vec<(usize, Mat)> = Vec::new();
    if cfg.views.text {
        let xb: Mat = batch.iter().map(|&i| text[i].clone()).collect();
        let b = p(store, params.text_b)[0].clone();
        let proj = mm(&xb, &p(store, params.text_w))
            .into_iter()
            .map(|r| r.iter().zip(&b).map(|(x, y)| x + y).collect())
            .collect();
        views.push((0, proj));
    }
    let mut x_pro = Vec::new();
    if cfg.views.pro {
        let layers: Vec<(Mat, Mat)> = params
            .prop
            .layers
            .iter()
            .map(|l| (p(store, l.w_self), p(store, l.w_nbr)))
            .collect();
        x_pro = batch
            .iter()
            .map(|&i| tree_root(&layers, &trees[i]))
            .collect();
        views.push((1, x_pro.clone()));
    }
    let mut x_hg = Vec::new();
    if cfg.views.hg {
        let layers: Vec<LayerW> = params
            .hg
            .layers
            .iter()
            .map(|l| LayerW {
                w1: p(store, l.w1),
                w2: p(store, l.w2),
                attn: p(store, l.attn),
            })
            .collect();
        let dw = DhslW {
            w_ebd: p(store, params.dhsl.w_ebd)[0].clone(),
            w_text: p(store, params.dhsl.w_text)[0].clone(),
            alpha: p(store, params.dhsl.alpha)[0].clone(),
            p_text: p(store, params.dhsl.p_text),
        };
        let d = if cfg.dhsl {
            Some((&dw, cfg.p_thd))
        } else {
            None
        };
        let (full, _) = hgnn(&layers, text, incidence, d);
        x_hg = batch.iter().map(|&i| full[i].clone()).collect();
        views.push((2, x_hg.clone()));
    }
    let fused = if views.len() == 1 {
        views[0].1.clone()
    } else {
        let beta = &p(store, params.beta)[0];
        let w = softmax(&views.iter().map(|(k, _)| beta[*k]).collect::<Vec<_>>());
        let (r, c) = (views[0].1.len(), views[0].1[0].len());
        let mut out = vec![vec![0.0; c]; r];
        for ((_, v), wk) in views.iter().zip(&w) {
            for i in 0..r {
                for j in 0..c {
                    out[i][j] += wk * v[i][j];
                }
            }
        }
        out
    };
    let hb = &p(store, params.head_b)[0];
    let logits = mm(&fused, &p(store, params.head_w));
    let probs = logits
        .iter()
        .map(|r| softmax(&r.iter().zip(hb).map(|(a, b)| a + b).collect::<Vec<_>>()))
        .collect();
    PipelineOut { probs, x_pro, x_hg }
}

pub fn max_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
