use hypernews::dataset::{Dataset, Hyperedge, HyperedgeKind, NewsRecord, PropagationTree};
use hypernews::Tensor;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(
        r,
        c,
        (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

pub fn random_tree(rng: &mut ChaCha8Rng, id: &str, n: usize, d: usize) -> PropagationTree {
    PropagationTree {
        news_id: id.to_string(),
        node_features: (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
        edges: (1..n).map(|c| (rng.random_range(0..c), c)).collect(),
    }
}

/// Random 0/1 incidence with every hyperedge nonempty.
pub fn random_incidence(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Tensor {
    let mut h = Tensor::zeros(&[n, m]);
    for j in 0..m {
        let size = rng.random_range(1..=n);
        for v in sample(rng, n, size) {
            h.set(v, j, 1.0);
        }
    }
    h
}

/// Random incidence in which every node sits in at least `min_degree`
/// hyperedges.
pub fn covering_incidence(rng: &mut ChaCha8Rng, n: usize, m: usize, min_degree: usize) -> Tensor {
    let mut h = Tensor::zeros(&[n, m]);
    for v in 0..n {
        let degree = rng.random_range(min_degree..=m);
        for j in sample(rng, m, degree) {
            h.set(v, j, 1.0);
        }
    }
    h
}

/// [`covering_incidence`] with pairwise distinct hyperedges.
pub fn generic_incidence(rng: &mut ChaCha8Rng, n: usize, m: usize, min_degree: usize) -> Tensor {
    loop {
        let h = covering_incidence(rng, n, m, min_degree);
        let t = h.transpose();
        let distinct = (0..m).all(|a| (a + 1..m).all(|b| t.row(a) != t.row(b)));
        if distinct {
            return h;
        }
    }
}

/// Balanced labels, random text, trees of 1..=max_tree nodes and `m`
/// random hyperedges.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    d_in: usize,
    m: usize,
    max_tree: usize,
) -> Dataset {
    let h = random_incidence(rng, n, m);
    dataset_on(rng, &h, d_in, max_tree)
}

/// Random news and trees over a given incidence.
pub fn dataset_on(rng: &mut ChaCha8Rng, h: &Tensor, d_in: usize, max_tree: usize) -> Dataset {
    let (n, m) = (h.rows(), h.cols());
    let news: Vec<NewsRecord> = (0..n)
        .map(|i| NewsRecord {
            id: format!("n{i}"),
            label: (i % 2) as u8,
            text_vec: (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let trees = (0..n)
        .map(|i| {
            let size = rng.random_range(1..=max_tree);
            let mut t = random_tree(rng, &format!("n{i}"), size, d_in);
            t.node_features[0] = news[i].text_vec.clone();
            t
        })
        .collect();
    let edges: Vec<Hyperedge> = (0..m)
        .map(|j| Hyperedge {
            id: format!("e{j}"),
            kind: HyperedgeKind::User,
            members: (0..n)
                .filter(|&v| h.get(v, j) > 0.0)
                .map(|v| format!("n{v}"))
                .collect(),
        })
        .collect();
    Dataset::new(news, trees, &edges, d_in).unwrap()
}
