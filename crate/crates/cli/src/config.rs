//! Dotted-key view of [`TrainConfig`].
//!
//! Keys are derived from the serialized default config: `model.*` for the
//! model block (with `model.views.*` nested), `train.*` for everything else.
//! Values are type-checked against the default they replace.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use hypernews::TrainConfig;
use serde_json::Value;

use crate::error::CliError;

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&format!("{prefix}.{k}"), child, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.clone())),
    }
}

fn entries(value: &Value) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    if let Value::Object(map) = value {
        for (k, child) in map {
            if k == "model" {
                flatten("model", child, &mut out);
            } else {
                flatten(&format!("train.{k}"), child, &mut out);
            }
        }
    }
    out
}

fn pointer(key: &str) -> String {
    let path = key.strip_prefix("train.").unwrap_or(key);
    format!("/{}", path.replace('.', "/"))
}

/// Every recognized key with its default, in sorted order.
pub fn default_keys() -> Vec<(String, Value)> {
    let mut keys =
        entries(&serde_json::to_value(TrainConfig::default()).expect("config serializes"));
    keys.sort_by(|a, b| a.0.cmp(&b.0));
    keys
}

fn describe(key: &str) -> &'static str {
    match key {
        "model.d_in" => "text vector width (taken from the data unless set)",
        "model.d_h" => "hidden width of every view",
        "model.layers_gnn" => "propagation-tree layers",
        "model.layers_hgnn" => "hypergraph layers",
        "model.dropout" => "dropout rate after each layer",
        "model.p_thd" => "fraction of nodes kept per relearned hyperedge",
        "model.tau" => "contrastive temperature",
        "model.lambda" => "weight of the contrastive term",
        "model.views.text" => "use the text view",
        "model.views.pro" => "use the propagation view",
        "model.views.hg" => "use the hypergraph view",
        "model.contrastive" => "add the contrastive term",
        "model.dhsl" => "relearn the hypergraph structure",
        "train.epochs" => "training epochs",
        "train.batch_size" => "mini-batch size",
        "train.lr" => "Adam learning rate",
        "train.seed" => "seed for splits, init, shuffling and dropout",
        "train.repeats" => "runs used by --repeat without a count",
        _ => "",
    }
}

/// Help text listing every key and its default.
pub fn keys_help() -> String {
    let mut s = String::from(
        "Configuration keys (--set KEY=VALUE or [model]/[train] tables in --config):\n",
    );
    for (key, default) in default_keys() {
        let _ = writeln!(
            s,
            "  {key:<20} {:<8} {}",
            default.to_string(),
            describe(&key)
        );
    }
    s
}

/// Merged configuration plus the set of keys given explicitly.
#[derive(Debug, Clone)]
pub struct CliConfig {
    value: Value,
    explicit: BTreeSet<String>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self::from_config(&TrainConfig::default())
    }
}

impl CliConfig {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            value: serde_json::to_value(cfg).expect("config serializes"),
            explicit: BTreeSet::new(),
        }
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let known = entries(&self.value).into_iter().any(|(k, _)| k == key);
        let slot = known
            .then(|| self.value.pointer_mut(&pointer(key)))
            .flatten()
            .ok_or_else(|| {
                let names: Vec<String> = default_keys().into_iter().map(|(k, _)| k).collect();
                CliError::Usage(format!(
                    "unknown config key {key:?}; valid keys: {}",
                    names.join(", ")
                ))
            })?;
        let bad = |what: &str| CliError::Usage(format!("{key} expects {what}, got {raw:?}"));
        let raw = raw.trim();
        *slot = match slot {
            Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad("true or false"))?),
            Value::Number(n) if n.is_u64() => Value::from(
                raw.parse::<u64>()
                    .map_err(|_| bad("a non-negative integer"))?,
            ),
            Value::Number(_) => {
                let x: f64 = raw.parse().map_err(|_| bad("a number"))?;
                if !x.is_finite() {
                    return Err(bad("a finite number"));
                }
                Value::from(x)
            }
            _ => return Err(bad("a scalar")),
        };
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Applies a `KEY=VALUE` override.
    pub fn apply_override(&mut self, arg: &str) -> Result<(), CliError> {
        let (key, raw) = arg
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override {arg:?} is not KEY=VALUE")))?;
        self.set(key.trim(), raw)
    }

    /// Reads `[model]` and `[train]` tables from a TOML file.
    pub fn load_toml(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            CliError::Usage(format!("{}: {}", path.display(), e.message()))
        })?;
        let mut leaves = Vec::new();
        flatten_toml("", &table, &mut leaves);
        for (key, v) in leaves {
            let raw = match v {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                other => {
                    return Err(CliError::Usage(format!(
                        "{}: unsupported value for {key}: {other}",
                        path.display()
                    )))
                }
            };
            self.set(&key, &raw)?;
        }
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        serde_json::from_value(self.value.clone()).map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn flatten_toml(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten_toml(&key, t, out),
            leaf => out.push((key, leaf.clone())),
        }
    }
}
