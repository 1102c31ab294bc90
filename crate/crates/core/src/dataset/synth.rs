//! Seeded synthetic datasets for desk-scale runs.
//!
//! Text vectors of class `y` are drawn around `±(delta/2)·mu` for a fixed
//! random unit direction `mu` (fake `+`, true `-`) with isotropic Gaussian
//! noise of unit total variance (per-coordinate variance `1/d_in`). Users
//! carry a preferred label; each user's profile leans towards that label's
//! side of `mu`, and users mostly join trees of news with their preferred
//! label, so tree features, shared-user hyperedges and shared-entity
//! hyperedges all carry label signal. `delta = 0` removes all signal.
//!
//! RNG stream order: direction, news vectors, user profiles, trees (per news:
//! size, then per node user, parent, feature noise), timestamps, entities.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    build_entity_hyperedges, build_time_hyperedges, build_user_hyperedges, save_dataset,
    save_interactions, Dataset, FileNames, Hyperedge, Interaction, NewsRecord, PropagationTree,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_news: usize,
    pub d_in: usize,
    pub delta: f64,
    /// Inclusive range of tree sizes (root included).
    pub tree_size: (usize, usize),
    pub n_users: usize,
    pub time_window: f64,
    pub entity_min_shared: usize,
    /// Probability that a user (or entity) is drawn from the news' own class.
    pub homophily: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_news: 200,
            d_in: 768,
            delta: 2.0,
            tree_size: (2, 12),
            n_users: 40,
            time_window: 1.0,
            entity_min_shared: 1,
            homophily: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub interactions: Vec<Interaction>,
}

impl SyntheticData {
    /// Writes the three dataset files plus `interactions.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_dataset(&self.dataset, dir)?;
        save_interactions(&self.interactions, &dir.join(FileNames::INTERACTIONS))
    }
}

fn sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    if cfg.n_news < 2 || !cfg.n_news.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "n_news must be even and at least 2, got {}",
            cfg.n_news
        )));
    }
    if cfg.delta.is_nan() || cfg.delta < 0.0 || cfg.d_in == 0 || cfg.n_users < 2 {
        return Err(Error::Config(
            "need delta >= 0, d_in >= 1, n_users >= 2".into(),
        ));
    }
    let (tmin, tmax) = cfg.tree_size;
    if tmin < 1 || tmax < tmin {
        return Err(Error::Config(format!(
            "bad tree size range {tmin}..={tmax}"
        )));
    }
    if cfg.time_window.is_nan() || cfg.time_window <= 0.0 || cfg.entity_min_shared == 0 {
        return Err(Error::Config(
            "time_window and entity_min_shared must be positive".into(),
        ));
    }

    let d = cfg.d_in;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let coord_noise = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("noise");

    let mut mu: Vec<f64> = (0..d).map(|_| std_normal.sample(&mut rng)).collect();
    let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    mu.iter_mut().for_each(|x| *x /= norm);
    let half = cfg.delta / 2.0;

    let around = |s: f64, scale: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        mu.iter()
            .map(|m| s * half * scale * m + coord_noise.sample(rng))
            .collect()
    };

    let width = cfg.n_news.to_string().len();
    let news: Vec<NewsRecord> = (0..cfg.n_news)
        .map(|i| {
            let label = (i % 2) as u8;
            NewsRecord {
                id: format!("n{i:0width$}"),
                label,
                text_vec: around(sign(label), 1.0, &mut rng),
            }
        })
        .collect();

    let user_pref: Vec<u8> = (0..cfg.n_users).map(|u| (u % 2) as u8).collect();
    let profiles: Vec<Vec<f64>> = user_pref
        .iter()
        .map(|&p| around(sign(p), 0.5, &mut rng))
        .collect();
    let users_of = |label: u8| -> Vec<usize> {
        (0..cfg.n_users)
            .filter(|&u| user_pref[u] == label)
            .collect()
    };
    let pools = [users_of(0), users_of(1)];
    let uname = |u: usize| format!("u{u}");

    let mut trees = Vec::with_capacity(cfg.n_news);
    let mut tree_users: Vec<Vec<usize>> = Vec::with_capacity(cfg.n_news);
    for r in &news {
        let size = rng.random_range(tmin..=tmax);
        let mut features = vec![r.text_vec.clone()];
        let mut edges = Vec::with_capacity(size - 1);
        let mut users = Vec::with_capacity(size - 1);
        for node in 1..size {
            let pool = if rng.random::<f64>() < cfg.homophily {
                &pools[r.label as usize]
            } else {
                &pools[1 - r.label as usize]
            };
            let u = pool[rng.random_range(0..pool.len())];
            let parent = rng.random_range(0..node);
            let feat = profiles[u]
                .iter()
                .map(|p| p + coord_noise.sample(&mut rng))
                .collect();
            features.push(feat);
            edges.push((parent, node));
            users.push(u);
        }
        trees.push(PropagationTree {
            news_id: r.id.clone(),
            node_features: features,
            edges,
        });
        tree_users.push(users);
    }

    // Guarantee at least one user shared by two news.
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (r, users) in news.iter().zip(&tree_users) {
        pairs.extend(users.iter().map(|&u| (uname(u), r.id.clone())));
    }
    if build_user_hyperedges(&pairs).is_empty() {
        let u = tree_users[0].first().copied().unwrap_or(0);
        for k in 0..2 {
            if !tree_users[k].contains(&u) {
                let t = &mut trees[k];
                let node = t.node_features.len();
                t.node_features.push(profiles[u].clone());
                t.edges.push((0, node));
                tree_users[k].push(u);
                pairs.push((uname(u), news[k].id.clone()));
            }
        }
    }

    let span = cfg.n_news as f64 * cfg.time_window / 2.0;
    let mut times: Vec<f64> = (0..cfg.n_news)
        .map(|_| rng.random_range(0.0..span))
        .collect();
    let time_map = |times: &[f64]| -> HashMap<String, f64> {
        news.iter()
            .zip(times)
            .map(|(r, &t)| (r.id.clone(), t))
            .collect()
    };
    if build_time_hyperedges(&time_map(&times), cfg.time_window).is_empty() {
        times[1] = times[0];
    }

    let vocab = (cfg.n_news / 5).max(4) & !1;
    let mut entities: Vec<BTreeSet<String>> = news
        .iter()
        .map(|r| {
            let k = rng.random_range(1..=3);
            (0..k)
                .map(|_| {
                    let own = rng.random::<f64>() < cfg.homophily;
                    let class = if own { r.label } else { 1 - r.label } as usize;
                    let j = rng.random_range(0..vocab / 2) * 2 + class;
                    format!("ent{j}")
                })
                .collect()
        })
        .collect();
    let ent_map = |ents: &[BTreeSet<String>]| -> HashMap<String, BTreeSet<String>> {
        news.iter()
            .zip(ents)
            .map(|(r, e)| (r.id.clone(), e.clone()))
            .collect()
    };
    if build_entity_hyperedges(&ent_map(&entities), cfg.entity_min_shared).is_empty() {
        let shared = entities[0].clone();
        entities[1].extend(shared);
    }

    let mut interactions = Vec::new();
    for (i, r) in news.iter().enumerate() {
        let ents: Vec<String> = entities[i].iter().cloned().collect();
        for &u in &tree_users[i] {
            interactions.push(Interaction {
                user: uname(u),
                news_id: r.id.clone(),
                time: times[i],
                entities: ents.clone(),
            });
        }
    }

    let mut hyperedges: Vec<Hyperedge> = build_user_hyperedges(&pairs);
    hyperedges.extend(build_time_hyperedges(&time_map(&times), cfg.time_window));
    hyperedges.extend(build_entity_hyperedges(
        &ent_map(&entities),
        cfg.entity_min_shared,
    ));

    let dataset = Dataset::new(news, trees, &hyperedges, d)?;
    Ok(SyntheticData {
        dataset,
        interactions,
    })
}
