//! Training and evaluation runs and the files they leave behind.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use grande::data::DatasetBundle;
use grande::metrics::MetricsReport;
use grande::model::{GrandeModel, ModelConfig};
use grande::train::{evaluate_split, train, EvalPoint, PreparedSplit, TrainOutcome};
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;

pub const METRICS_FILE: &str = "metrics.json";
pub const PR_CURVE_FILE: &str = "pr_curve.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.json";

/// The six rows of the ablation table, in order.
pub fn ablation_variants(base: &ModelConfig) -> Vec<(&'static str, ModelConfig)> {
    vec![
        ("full", base.clone()),
        ("reduced", base.reduced()),
        (
            "no_causal_pruning",
            ModelConfig {
                use_causal_pruning: false,
                ..base.clone()
            },
        ),
        (
            "no_time_encoding",
            ModelConfig {
                use_time_encoding: false,
                ..base.clone()
            },
        ),
        (
            "no_cross_query",
            ModelConfig {
                use_cross_query: false,
                ..base.clone()
            },
        ),
        (
            "line_graph",
            ModelConfig {
                dual_mode: grande::dual::DualMode::PlainLine,
                ..base.clone()
            },
        ),
    ]
}

fn write_pr_curve(dir: &Path, report: &MetricsReport) -> Result<()> {
    let mut csv = String::from("precision,recall\n");
    for p in &report.pr_curve {
        csv.push_str(&format!("{},{}\n", p.precision, p.recall));
    }
    let path = dir.join(PR_CURVE_FILE);
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))
}

fn metric_fields(report: &MetricsReport) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("auc".into(), json!(report.auc));
    m.insert("ks".into(), json!(report.ks));
    m.insert("f1_at_half".into(), json!(report.f1_at_half));
    m.insert("f1_best".into(), json!(report.f1_best));
    m.insert("best_threshold".into(), json!(report.best_threshold));
    m
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes the flat metrics report and the PR curve; `extra` entries are
/// appended to the report.
pub fn write_report(dir: &Path, report: &MetricsReport, extra: Map<String, Value>) -> Result<Map<String, Value>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut flat = metric_fields(report);
    flat.extend(extra);
    write_json(&dir.join(METRICS_FILE), &Value::Object(flat.clone()))?;
    write_pr_curve(dir, report)?;
    Ok(flat)
}

fn prepare(
    data: &DatasetBundle,
    cfg: &ExperimentConfig,
    model: &GrandeModel,
) -> Result<(PreparedSplit, PreparedSplit, PreparedSplit)> {
    let s = cfg.sampler();
    Ok((
        PreparedSplit::new(&data.graph, &data.train, &s, model)?,
        PreparedSplit::new(&data.graph, &data.val, &s, model)?,
        PreparedSplit::new(&data.graph, &data.test, &s, model)?,
    ))
}

fn log_point(p: &EvalPoint) {
    let loss = p.train_loss.map_or_else(|| "-".to_string(), |l| format!("{l:.5}"));
    eprintln!(
        "step {:>6} epoch {:>3} train_loss {loss} val_auc {:.5}{}",
        p.step,
        p.epoch,
        p.val_auc,
        if p.improved { " *" } else { "" }
    );
}

/// Trains one model and writes every artifact into `cfg.output_dir`.
/// `cfg` must already carry the dataset's feature widths.
pub fn train_and_report(data: &DatasetBundle, cfg: &ExperimentConfig, quiet: bool) -> Result<(TrainOutcome, Map<String, Value>)> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.write(dir)?;
    let mut model = GrandeModel::new(cfg.model())?;
    let (tr, va, te) = prepare(data, cfg, &model)?;
    let outcome = train(&mut model, &tr, &va, &te, &cfg.train(), |p| {
        if !quiet {
            log_point(p)
        }
    })?;
    model.save(&dir.join(CHECKPOINT_FILE))?;
    write_json(&dir.join(HISTORY_FILE), &serde_json::to_value(&outcome.history)?)?;

    let mut extra = Map::new();
    extra.insert("config_hash".into(), json!(cfg.hash()));
    extra.insert("split".into(), json!("test"));
    extra.insert("best_val_auc".into(), json!(outcome.best_val_auc));
    extra.insert("best_step".into(), json!(outcome.best_step));
    extra.insert("steps".into(), json!(outcome.steps));
    extra.insert("last_batch_bce".into(), json!(outcome.last_batch_bce));
    extra.insert("train_targets".into(), json!(tr.len()));
    extra.insert("val_targets".into(), json!(va.len()));
    extra.insert("test_targets".into(), json!(te.len()));
    extra.insert("parameters".into(), json!(model.params().scalar_count()));
    let flat = write_report(dir, &outcome.test, extra)?;
    Ok((outcome, flat))
}

/// Scores one split with a saved checkpoint.
pub fn evaluate_checkpoint(
    data: &DatasetBundle,
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    split: &str,
) -> Result<Map<String, Value>> {
    let mut model = GrandeModel::new(cfg.model())?;
    model
        .load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let targets = match split {
        "train" => &data.train,
        "val" => &data.val,
        _ => &data.test,
    };
    let prepared = PreparedSplit::new(&data.graph, targets, &cfg.sampler(), &model)?;
    let report = evaluate_split(&model, &prepared, cfg.batch_size)?;
    let mut extra = Map::new();
    extra.insert("config_hash".into(), json!(cfg.hash()));
    extra.insert("split".into(), json!(split));
    extra.insert("targets".into(), json!(prepared.len()));
    extra.insert("checkpoint".into(), json!(checkpoint.display().to_string()));
    write_report(&cfg.output_dir, &report, extra)
}

/// Runs every ablation variant into its own subdirectory and writes a
/// summary table next to them.
pub fn ablate(data: &DatasetBundle, cfg: &ExperimentConfig, quiet: bool) -> Result<Vec<Map<String, Value>>> {
    let mut rows = Vec::new();
    for (name, model) in ablation_variants(&cfg.model()) {
        let variant = ExperimentConfig {
            output_dir: cfg.output_dir.join(name),
            ..cfg.with_model(&model)
        };
        if !quiet {
            eprintln!("== {name}");
        }
        let (_, flat) = train_and_report(data, &variant, quiet)?;
        let mut row = Map::new();
        row.insert("variant".into(), json!(name));
        row.extend(flat);
        rows.push(row);
    }
    let mut csv = String::from("variant,config_hash,auc,ks,f1_at_half,f1_best\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r["variant"].as_str().unwrap_or_default(),
            r["config_hash"].as_str().unwrap_or_default(),
            r["auc"],
            r["ks"],
            r["f1_at_half"],
            r["f1_best"]
        ));
    }
    let path = cfg.output_dir.join("ablation.csv");
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    write_json(
        &cfg.output_dir.join("ablation.json"),
        &Value::Array(rows.iter().cloned().map(Value::Object).collect()),
    )?;
    Ok(rows)
}
