use std::io::{BufRead, BufReader};
use std::path::Path;

use hypernews::dataset::{
    generate_synthetic, load_dataset_dir, split_dataset, FileNames, SplitRatios, SynthConfig,
};
use hypernews::harness::{
    default_grid, evaluate, repeat_runs, run_ablation, run_trained, sweep_pthd, RepeatReport,
    TrainOptions,
};
use hypernews::{Dataset, MetricsReport, ModelParams, ParamStore, RunResult, TrainConfig, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::CliConfig;
use crate::error::CliError;
use crate::output::{ensure_dir, pct, write_json, write_jsonl, Table};
use crate::{Command, Common, SplitChoice};

/// Contents of `params.json`.
#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    config: TrainConfig,
    best_epoch: usize,
    params: ModelParams,
    store: ParamStore,
}

#[derive(Debug, Serialize)]
struct Report<'a, R: Serialize> {
    command: &'a str,
    config: &'a TrainConfig,
    #[serde(flatten)]
    results: R,
}

#[derive(Debug, Serialize)]
struct Runs<'a> {
    runs: &'a [RunResult],
}

#[derive(Debug, Serialize)]
struct VariantRow<'a> {
    variant: &'a str,
    #[serde(flatten)]
    run: &'a RunResult,
}

#[derive(Debug, Serialize)]
struct SweepEntry<'a> {
    p_thd: f64,
    #[serde(flatten)]
    run: &'a RunResult,
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth {
            n,
            delta,
            d_in,
            common,
        } => synth(n, delta, d_in, &common),
        Command::Train {
            data,
            repeat,
            record_structures,
            common,
        } => train(&data.data, repeat, record_structures, &common),
        Command::Eval {
            data,
            params,
            split,
            common,
        } => eval(&data.data, &params, split, &common),
        Command::Ablate {
            data,
            variants,
            common,
        } => ablate(&data.data, variants, &common),
        Command::Sweep { data, grid, common } => sweep(&data.data, grid, &common),
        Command::Inspect { data, common } => inspect(&data.data, &common),
    }
}

/// Width of the first text vector in `news.jsonl`, if readable.
fn news_width(dir: &Path) -> Option<usize> {
    let file = std::fs::File::open(dir.join(FileNames::NEWS)).ok()?;
    let line = BufReader::new(file)
        .lines()
        .map_while(Result::ok)
        .find(|l| !l.trim().is_empty())?;
    let value: serde_json::Value = serde_json::from_str(&line).ok()?;
    value.get("text_vec")?.as_array().map(Vec::len)
}

/// Loads the dataset; `model.d_in` follows the data unless set explicitly.
fn load(dir: &Path, cfg: &mut CliConfig) -> Result<Dataset, CliError> {
    if !cfg.is_explicit("model.d_in") {
        if let Some(d) = news_width(dir) {
            cfg.set("model.d_in", &d.to_string())?;
        }
    }
    let d_in = cfg.train_config()?.model.d_in;
    let ds = load_dataset_dir(dir, d_in)?;
    log::info!("loaded {} news from {}", ds.len(), dir.display());
    Ok(ds)
}

fn metrics_table(m: &MetricsReport) -> Table {
    let mut t = Table::new(["metric", "value"]);
    t.row(["accuracy".to_string(), pct(m.accuracy)]);
    t.row(["macro F1".to_string(), pct(m.f1)]);
    t.row(["fake F1".to_string(), pct(m.f1_fake)]);
    t.row(["fake precision".to_string(), pct(m.fake_class.precision)]);
    t.row(["fake recall".to_string(), pct(m.fake_class.recall)]);
    t.row(["true precision".to_string(), pct(m.true_class.precision)]);
    t.row(["true recall".to_string(), pct(m.true_class.recall)]);
    let c = m.confusion;
    t.row([
        "TP/FP/FN/TN".to_string(),
        format!("{}/{}/{}/{}", c.tp, c.fp, c.fn_, c.tn),
    ]);
    t
}

fn synth(n: usize, delta: f64, d_in: Option<usize>, common: &Common) -> Result<(), CliError> {
    let cfg = common.resolve(CliConfig::default())?.train_config()?;
    let synth = SynthConfig {
        n_news: n,
        delta,
        d_in: d_in.unwrap_or(cfg.model.d_in),
        seed: cfg.seed,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&synth)?;
    let out = common.out_or("data");
    data.save(&out)?;
    println!("wrote {}", out.display());
    println!("{}", data.dataset.stats());
    Ok(())
}

fn train(
    data: &Path,
    repeat: Option<Option<usize>>,
    record_structures: bool,
    common: &Common,
) -> Result<(), CliError> {
    let mut cli_cfg = common.resolve(CliConfig::default())?;
    let ds = load(data, &mut cli_cfg)?;
    let cfg = cli_cfg.train_config()?;
    let out = common.out_or("out");
    ensure_dir(&out)?;

    if let Some(n) = repeat {
        if record_structures {
            return Err(CliError::Usage(
                "--record-structures needs a single run".into(),
            ));
        }
        let n = n.unwrap_or(cfg.repeats);
        let report = repeat_runs(&cfg, &ds, n)?;
        return write_repeats(&out, &cfg, &report);
    }

    let options = TrainOptions { record_structures };
    let (run, trained) = run_trained(&cfg, &ds, options)?;
    write_jsonl(&out.join("run_log.jsonl"), &run.log)?;
    write_json(&out.join("metrics.json"), &run.test)?;
    write_json(
        &out.join("report.json"),
        &Report {
            command: "train",
            config: &cfg,
            results: Runs {
                runs: std::slice::from_ref(&run),
            },
        },
    )?;
    if record_structures {
        write_jsonl(&out.join("structures.jsonl"), &trained.structures)?;
    }
    write_json(
        &out.join("params.json"),
        &SavedModel {
            config: cfg.clone(),
            best_epoch: trained.best_epoch,
            params: trained.params,
            store: trained.store,
        },
    )?;
    println!(
        "seed {}, best epoch {} of {}",
        run.seed, run.best_epoch, cfg.epochs
    );
    println!("{}", metrics_table(&run.test).render());
    Ok(())
}

fn write_repeats(out: &Path, cfg: &TrainConfig, report: &RepeatReport) -> Result<(), CliError> {
    let logs = out.join("run_logs");
    ensure_dir(&logs)?;
    for r in &report.runs {
        write_jsonl(&logs.join(format!("seed-{}.jsonl", r.seed)), &r.log)?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        runs: &'a [RunResult],
        accuracy: hypernews::MeanStd,
        f1: hypernews::MeanStd,
    }
    let summary = Summary {
        runs: &report.runs,
        accuracy: report.accuracy,
        f1: report.f1,
    };
    write_json(
        &out.join("metrics.json"),
        &serde_json::json!({ "accuracy": report.accuracy, "f1": report.f1 }),
    )?;
    write_json(
        &out.join("report.json"),
        &Report {
            command: "train",
            config: cfg,
            results: summary,
        },
    )?;
    let mut t = Table::new(["seed", "best epoch", "Acc", "F1"]);
    for r in &report.runs {
        t.row([
            r.seed.to_string(),
            r.best_epoch.to_string(),
            pct(r.test.accuracy),
            pct(r.test.f1),
        ]);
    }
    println!("{}", t.render());
    println!();
    let mut s = Table::new(["", "mean ± std"]);
    s.row(["Acc".to_string(), report.accuracy.to_string()]);
    s.row(["F1".to_string(), report.f1.to_string()]);
    println!("{}", s.render());
    Ok(())
}

fn eval(data: &Path, params: &Path, split: SplitChoice, common: &Common) -> Result<(), CliError> {
    let text = std::fs::read_to_string(params).map_err(|e| CliError::io(params, e))?;
    let saved: SavedModel = serde_json::from_str(&text)?;
    let mut cli_cfg = common.resolve(CliConfig::from_config(&saved.config))?;
    let ds = load(data, &mut cli_cfg)?;
    let cfg = cli_cfg.train_config()?;
    let shape = |m: &hypernews::ModelConfig| (m.d_in, m.d_h, m.layers_gnn, m.layers_hgnn);
    if shape(&cfg.model) != shape(&saved.config.model) {
        return Err(CliError::Usage(format!(
            "{}: saved parameters do not fit the configured model widths or depths",
            params.display()
        )));
    }

    let n = ds.len();
    let indices: Vec<usize> = match split {
        SplitChoice::All => (0..n).collect(),
        s => {
            let parts = split_dataset(&ds.labels(), SplitRatios::default(), cfg.seed)?;
            match s {
                SplitChoice::Train => parts.train,
                SplitChoice::Val => parts.val,
                _ => parts.test,
            }
        }
    };
    let report = evaluate(&saved.store, &saved.params, &cfg.model, &ds, &indices)?;
    let out = common.out_or("out");
    ensure_dir(&out)?;
    write_json(&out.join("eval.json"), &report)?;
    println!("{} items", indices.len());
    println!("{}", metrics_table(&report).render());
    Ok(())
}

fn slug(v: Variant) -> String {
    v.name().replace("w/o ", "wo-").to_lowercase()
}

fn ablate(data: &Path, variants: Vec<Variant>, common: &Common) -> Result<(), CliError> {
    let mut cli_cfg = common.resolve(CliConfig::default())?;
    let ds = load(data, &mut cli_cfg)?;
    let cfg = cli_cfg.train_config()?;
    let variants = if variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        variants
    };
    let runs: Vec<RunResult> = variants
        .par_iter()
        .map(|&v| run_ablation(&cfg, &ds, v))
        .collect::<Result<_, _>>()?;

    let out = common.out_or("out");
    for (v, r) in variants.iter().zip(&runs) {
        let dir = out.join(slug(*v));
        ensure_dir(&dir)?;
        write_jsonl(&dir.join("run_log.jsonl"), &r.log)?;
        write_json(&dir.join("metrics.json"), &r.test)?;
    }
    let rows: Vec<VariantRow> = variants
        .iter()
        .zip(&runs)
        .map(|(v, run)| VariantRow {
            variant: v.name(),
            run,
        })
        .collect();
    write_json(
        &out.join("report.json"),
        &Report {
            command: "ablate",
            config: &cfg,
            results: serde_json::json!({ "variants": rows }),
        },
    )?;
    let mut t = Table::new(["variant", "best epoch", "Acc", "F1"]);
    for (v, r) in variants.iter().zip(&runs) {
        t.row([
            v.name().to_string(),
            r.best_epoch.to_string(),
            pct(r.test.accuracy),
            pct(r.test.f1),
        ]);
    }
    println!("{}", t.render());
    Ok(())
}

fn sweep(data: &Path, grid: Vec<f64>, common: &Common) -> Result<(), CliError> {
    let mut cli_cfg = common.resolve(CliConfig::default())?;
    let ds = load(data, &mut cli_cfg)?;
    let cfg = cli_cfg.train_config()?;
    let grid = if grid.is_empty() {
        default_grid()
    } else {
        grid
    };
    let rows = sweep_pthd(&cfg, &ds, &grid)?;

    let out = common.out_or("out");
    ensure_dir(&out)?;
    let entries: Vec<SweepEntry> = rows
        .iter()
        .map(|r| SweepEntry {
            p_thd: r.p_thd,
            run: &r.result,
        })
        .collect();
    write_json(
        &out.join("report.json"),
        &Report {
            command: "sweep",
            config: &cfg,
            results: serde_json::json!({ "rows": entries }),
        },
    )?;
    let mut t = Table::new(["p_thd", "best epoch", "Acc", "F1"]);
    for r in &rows {
        t.row([
            format!("{:.1}", r.p_thd),
            r.result.best_epoch.to_string(),
            pct(r.result.test.accuracy),
            pct(r.result.test.f1),
        ]);
    }
    println!("{}", t.render());
    Ok(())
}

fn inspect(data: &Path, common: &Common) -> Result<(), CliError> {
    let mut cli_cfg = common.resolve(CliConfig::default())?;
    let ds = load(data, &mut cli_cfg)?;
    let stats = ds.stats();
    println!("{stats}");
    if let Some(out) = &common.out {
        ensure_dir(out)?;
        write_json(&out.join("stats.json"), &stats)?;
    }
    Ok(())
}
