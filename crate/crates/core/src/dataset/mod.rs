//! News records, propagation trees, the news hypergraph, and the file
//! formats they are stored in.

mod builders;
mod io;
mod split;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Error, Result};
use crate::tensor::Tensor;

pub use builders::{build_entity_hyperedges, build_time_hyperedges, build_user_hyperedges};
pub use io::{
    load_dataset, load_dataset_dir, load_interactions, save_dataset, save_interactions, FileNames,
};
pub use split::{split_dataset, DatasetSplit, SplitRatios};
pub use synth::{generate_synthetic, SynthConfig, SyntheticData};

/// Label value for fake news.
pub const FAKE: u8 = 1;
/// Label value for true news.
pub const TRUE: u8 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsRecord {
    pub id: String,
    pub label: u8,
    pub text_vec: Vec<f64>,
}

/// Rooted interaction tree of one news item. Node 0 is the news itself; the
/// other nodes are users who shared or replied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationTree {
    pub news_id: String,
    pub node_features: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
}

impl PropagationTree {
    pub fn num_nodes(&self) -> usize {
        self.node_features.len()
    }

    /// Checks that `edges` form a tree rooted at node 0 spanning every node
    /// and that every feature row has length `d_in`.
    pub fn validate(&self, d_in: usize) -> Result<(), DataError> {
        let invalid = |reason: String| DataError::InvalidTree {
            news_id: self.news_id.clone(),
            reason,
        };
        let n = self.num_nodes();
        if n == 0 {
            return Err(invalid("no nodes".into()));
        }
        for (i, row) in self.node_features.iter().enumerate() {
            if row.len() != d_in {
                return Err(DataError::DimensionMismatch {
                    what: format!("tree {:?} node {i}", self.news_id),
                    expected: d_in,
                    found: row.len(),
                });
            }
        }
        if self.edges.len() != n - 1 {
            return Err(invalid(format!("{} edges for {n} nodes", self.edges.len())));
        }
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for &(p, c) in &self.edges {
            if p >= n || c >= n {
                return Err(invalid(format!("edge ({p}, {c}) out of range")));
            }
            if c == 0 {
                return Err(invalid("root has a parent".into()));
            }
            if parent[c].replace(p).is_some() {
                return Err(invalid(format!("node {c} has two parents")));
            }
            children[p].push(c);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                if seen[c] {
                    return Err(invalid(format!("cycle through node {c}")));
                }
                seen[c] = true;
                stack.push(c);
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(invalid(format!(
                "node {orphan} is unreachable from the root"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperedgeKind {
    User,
    Time,
    Entity,
    Learned,
}

impl fmt::Display for HyperedgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HyperedgeKind::User => "user",
            HyperedgeKind::Time => "time",
            HyperedgeKind::Entity => "entity",
            HyperedgeKind::Learned => "learned",
        })
    }
}

impl FromStr for HyperedgeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "user" => Ok(HyperedgeKind::User),
            "time" => Ok(HyperedgeKind::Time),
            "entity" => Ok(HyperedgeKind::Entity),
            "learned" => Ok(HyperedgeKind::Learned),
            other => Err(format!("unknown hyperedge type {other:?}")),
        }
    }
}

/// A named group of news ids; members are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: HyperedgeKind,
    pub members: Vec<String>,
}

/// Incidence structure over the dataset's news (rows) and hyperedges
/// (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    incidence: Tensor,
    kinds: Vec<HyperedgeKind>,
    ids: Vec<String>,
}

impl Hypergraph {
    /// Builds the binary incidence matrix: entry `(v, e)` is 1 iff news `v`
    /// belongs to hyperedge `e`.
    pub fn build(news_ids: &[String], hyperedges: &[Hyperedge]) -> Result<Self, DataError> {
        if news_ids.is_empty() {
            return Err(DataError::Empty);
        }
        if hyperedges.is_empty() {
            return Err(DataError::EmptyHyperedge(
                "<none: dataset has no hyperedges>".into(),
            ));
        }
        let index: HashMap<&str, usize> = news_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let (n, m) = (news_ids.len(), hyperedges.len());
        let mut incidence = Tensor::zeros(&[n, m]);
        for (j, e) in hyperedges.iter().enumerate() {
            if e.members.is_empty() {
                return Err(DataError::EmptyHyperedge(e.id.clone()));
            }
            for member in &e.members {
                let &i = index
                    .get(member.as_str())
                    .ok_or_else(|| DataError::UnknownMember {
                        hyperedge: e.id.clone(),
                        member: member.clone(),
                    })?;
                incidence.set(i, j, 1.0);
            }
        }
        Ok(Self {
            incidence,
            kinds: hyperedges.iter().map(|e| e.kind).collect(),
            ids: hyperedges.iter().map(|e| e.id.clone()).collect(),
        })
    }

    pub fn incidence(&self) -> &Tensor {
        &self.incidence
    }

    pub fn kinds(&self) -> &[HyperedgeKind] {
        &self.kinds
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn num_nodes(&self) -> usize {
        self.incidence.rows()
    }

    pub fn num_hyperedges(&self) -> usize {
        self.incidence.cols()
    }

    /// Hyperedges back in list form, members named by `news_ids`.
    pub fn to_hyperedges(&self, news_ids: &[String]) -> Vec<Hyperedge> {
        (0..self.num_hyperedges())
            .map(|j| {
                let mut members: Vec<String> = (0..self.num_nodes())
                    .filter(|&i| self.incidence.get(i, j) > 0.0)
                    .map(|i| news_ids[i].clone())
                    .collect();
                members.sort();
                Hyperedge {
                    id: self.ids[j].clone(),
                    kind: self.kinds[j],
                    members,
                }
            })
            .collect()
    }

    pub fn kind_histogram(&self) -> Vec<(HyperedgeKind, usize)> {
        let mut counts: HashMap<HyperedgeKind, usize> = HashMap::new();
        for k in &self.kinds {
            *counts.entry(*k).or_default() += 1;
        }
        let mut out: Vec<_> = counts.into_iter().collect();
        out.sort();
        out
    }
}

/// One row of the optional interaction log consumed by the hyperedge
/// builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub news_id: String,
    pub time: f64,
    #[serde(default)]
    pub entities: Vec<String>,
}

/// A validated dataset: news, one tree per news (same order) and the
/// hypergraph over them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub news: Vec<NewsRecord>,
    pub trees: Vec<PropagationTree>,
    pub hypergraph: Hypergraph,
    d_in: usize,
}

impl Dataset {
    /// Aligns trees to the news order and validates every invariant.
    pub fn new(
        news: Vec<NewsRecord>,
        trees: Vec<PropagationTree>,
        hyperedges: &[Hyperedge],
        d_in: usize,
    ) -> Result<Self> {
        if news.is_empty() {
            return Err(DataError::Empty.into());
        }
        let mut seen = HashSet::new();
        for r in &news {
            if !seen.insert(r.id.as_str()) {
                return Err(DataError::DuplicateId(r.id.clone()).into());
            }
            if r.label > 1 {
                return Err(DataError::InvalidLabel {
                    id: r.id.clone(),
                    label: r.label as i64,
                }
                .into());
            }
            if r.text_vec.len() != d_in {
                return Err(DataError::DimensionMismatch {
                    what: format!("text_vec of {:?}", r.id),
                    expected: d_in,
                    found: r.text_vec.len(),
                }
                .into());
            }
        }

        let mut by_id: HashMap<String, PropagationTree> = HashMap::new();
        for t in trees {
            if !seen.contains(t.news_id.as_str()) {
                return Err(DataError::UnknownTree(t.news_id).into());
            }
            if by_id.contains_key(&t.news_id) {
                return Err(DataError::DuplicateTree(t.news_id).into());
            }
            t.validate(d_in)?;
            by_id.insert(t.news_id.clone(), t);
        }
        let trees = news
            .iter()
            .map(|r| {
                by_id
                    .remove(&r.id)
                    .ok_or_else(|| Error::from(DataError::MissingTree(r.id.clone())))
            })
            .collect::<Result<Vec<_>>>()?;

        let ids: Vec<String> = news.iter().map(|r| r.id.clone()).collect();
        let hypergraph = Hypergraph::build(&ids, hyperedges)?;
        Ok(Self {
            news,
            trees,
            hypergraph,
            d_in,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn len(&self) -> usize {
        self.news.len()
    }

    pub fn is_empty(&self) -> bool {
        self.news.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.news.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.news.iter().map(|r| r.id.clone()).collect()
    }

    /// Text vectors stacked as an `N x d_in` matrix.
    pub fn text_matrix(&self) -> Tensor {
        let data = self
            .news
            .iter()
            .flat_map(|r| r.text_vec.iter().copied())
            .collect();
        Tensor::matrix(self.len(), self.d_in, data)
    }

    pub fn stats(&self) -> DatasetStats {
        let fake = self.news.iter().filter(|r| r.label == FAKE).count();
        DatasetStats {
            graphs: self.len(),
            true_count: self.len() - fake,
            fake_count: fake,
            nodes: self.trees.iter().map(PropagationTree::num_nodes).sum(),
            edges: self.trees.iter().map(|t| t.edges.len()).sum(),
            hyperedges: self.hypergraph.num_hyperedges(),
            hyperedge_kinds: self.hypergraph.kind_histogram(),
        }
    }
}

/// Summary counts in the layout of the usual dataset statistics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub graphs: usize,
    pub true_count: usize,
    pub fake_count: usize,
    pub nodes: usize,
    pub edges: usize,
    pub hyperedges: usize,
    pub hyperedge_kinds: Vec<(HyperedgeKind, usize)>,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plural = |n: usize, word: &str| {
            if n == 1 {
                format!("{n} {word}")
            } else {
                format!("{n} {word}s")
            }
        };
        writeln!(
            f,
            "{}, {} true, {} fake, {}, {}",
            plural(self.graphs, "graph"),
            self.true_count,
            self.fake_count,
            plural(self.nodes, "node"),
            plural(self.edges, "edge"),
        )?;
        write!(f, "{}", plural(self.hyperedges, "hyperedge"))?;
        let kinds: Vec<String> = self
            .hyperedge_kinds
            .iter()
            .map(|(k, n)| format!("{k}={n}"))
            .collect();
        if !kinds.is_empty() {
            write!(f, " ({})", kinds.join(", "))?;
        }
        Ok(())
    }
}
