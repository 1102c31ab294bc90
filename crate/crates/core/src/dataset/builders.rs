//! Predefined hyperedge constructors: shared users, publication time, shared
//! entities. Outputs are canonical (sorted members, deterministic order) so
//! they do not depend on input order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;

use super::{Hyperedge, HyperedgeKind};

/// One hyperedge per user who interacted with at least two distinct news,
/// ordered by user id.
pub fn build_user_hyperedges<U, N>(interactions: &[(U, N)]) -> Vec<Hyperedge>
where
    U: AsRef<str>,
    N: AsRef<str>,
{
    let mut by_user: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (user, news) in interactions {
        by_user
            .entry(user.as_ref())
            .or_default()
            .insert(news.as_ref());
    }
    by_user
        .into_iter()
        .filter(|(_, news)| news.len() >= 2)
        .map(|(user, news)| Hyperedge {
            id: format!("user:{user}"),
            kind: HyperedgeKind::User,
            members: news.into_iter().map(str::to_owned).collect(),
        })
        .collect()
}

/// Groups news into maximal runs whose consecutive timestamps differ by at
/// most `window`; runs of two or more become hyperedges.
pub fn build_time_hyperedges(times: &HashMap<String, f64>, window: f64) -> Vec<Hyperedge> {
    assert!(window > 0.0, "time window must be positive");
    let mut sorted: Vec<(&str, f64)> = times.iter().map(|(k, &t)| (k.as_str(), t)).collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));

    let mut runs: Vec<Vec<&str>> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (id, t) in sorted {
        match runs.last_mut() {
            Some(run) if t - last <= window => run.push(id),
            _ => runs.push(vec![id]),
        }
        last = t;
    }
    runs.into_iter()
        .filter(|r| r.len() >= 2)
        .enumerate()
        .map(|(k, run)| Hyperedge {
            id: format!("time:{k}"),
            kind: HyperedgeKind::Time,
            members: run.into_iter().map(str::to_owned).sorted().collect(),
        })
        .collect()
}

/// Inverted index over entity sets. With `min_shared == 1` every entity
/// seen in two or more news yields a hyperedge; larger values key on each
/// unordered combination of `min_shared` entities. Hyperedges with identical
/// member sets are kept once (the first key in sorted order).
pub fn build_entity_hyperedges(
    entities: &HashMap<String, BTreeSet<String>>,
    min_shared: usize,
) -> Vec<Hyperedge> {
    assert!(min_shared >= 1, "min_shared must be at least 1");
    let mut index: BTreeMap<Vec<&str>, BTreeSet<&str>> = BTreeMap::new();
    for (news, ents) in entities {
        for key in ents.iter().map(String::as_str).combinations(min_shared) {
            index.entry(key).or_default().insert(news.as_str());
        }
    }
    let mut seen: BTreeSet<Vec<&str>> = BTreeSet::new();
    let mut out = Vec::new();
    for (key, members) in index {
        if members.len() < 2 {
            continue;
        }
        let members: Vec<&str> = members.into_iter().collect();
        if !seen.insert(members.clone()) {
            continue;
        }
        out.push(Hyperedge {
            id: format!("entity:{}", key.join("+")),
            kind: HyperedgeKind::Entity,
            members: members.into_iter().map(str::to_owned).collect(),
        });
    }
    out
}
