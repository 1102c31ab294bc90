//! JSON-lines readers and writers for the dataset files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Dataset, Hyperedge, Interaction, NewsRecord, PropagationTree};
use crate::error::{DataError, Error, Result};

/// Standard file names inside a dataset directory.
pub struct FileNames;

impl FileNames {
    pub const NEWS: &'static str = "news.jsonl";
    pub const TREES: &'static str = "trees.jsonl";
    pub const HYPEREDGES: &'static str = "hyperedges.jsonl";
    pub const INTERACTIONS: &'static str = "interactions.jsonl";
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            file: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads and validates the three dataset files.
pub fn load_dataset(
    news_path: &Path,
    trees_path: &Path,
    hyperedges_path: &Path,
    d_in: usize,
) -> Result<Dataset> {
    let news: Vec<NewsRecord> = read_jsonl(news_path)?;
    let trees: Vec<PropagationTree> = read_jsonl(trees_path)?;
    let hyperedges: Vec<Hyperedge> = read_jsonl(hyperedges_path)?;
    Dataset::new(news, trees, &hyperedges, d_in)
}

/// [`load_dataset`] on the standard file names inside `dir`.
pub fn load_dataset_dir(dir: &Path, d_in: usize) -> Result<Dataset> {
    load_dataset(
        &dir.join(FileNames::NEWS),
        &dir.join(FileNames::TREES),
        &dir.join(FileNames::HYPEREDGES),
        d_in,
    )
}

pub fn load_interactions(path: &Path) -> Result<Vec<Interaction>> {
    read_jsonl(path)
}

/// Writes news, trees and hyperedges under `dir` using the standard names.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join(FileNames::NEWS), &dataset.news)?;
    write_jsonl(&dir.join(FileNames::TREES), &dataset.trees)?;
    let edges = dataset.hypergraph.to_hyperedges(&dataset.ids());
    write_jsonl(&dir.join(FileNames::HYPEREDGES), &edges)
}

pub fn save_interactions(interactions: &[Interaction], path: &Path) -> Result<()> {
    write_jsonl(path, interactions)
}
