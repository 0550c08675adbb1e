//! Report files: one JSON document per run plus flat CSVs for plotting.

use std::fs;
use std::path::{Path, PathBuf};

use hcgst_core::orchestrator::{RunReport, Variant};

use crate::error::{Error, Result};
use crate::io::{csv_err, csv_writer, read_json, write_json};

pub const AGGREGATE: &str = "aggregate.csv";
pub const STAGES: &str = "stages.csv";
pub const BINS: &str = "bins.csv";

pub fn run_file_name(variant: Variant, seed: u64) -> String {
    format!("run_{variant}_{seed}.json")
}

pub fn trace_file_name(variant: Variant, seed: u64) -> String {
    format!("trace_{variant}_{seed}.csv")
}

pub fn write_run(dir: &Path, report: &RunReport) -> Result<PathBuf> {
    let path = dir.join(run_file_name(report.variant, report.config.seed));
    write_json(&path, report)?;
    Ok(path)
}

/// Every `run_*.json` in `dir`, ordered by variant then seed.
pub fn read_runs(dir: &Path) -> Result<Vec<RunReport>> {
    let mut reports = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::read(dir))? {
        let path = entry.map_err(Error::read(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("run_") && name.ends_with(".json") {
            reports.push(read_json::<RunReport>(&path)?);
        }
    }
    reports.sort_by_key(|r| (r.variant, r.config.seed));
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub variant: Variant,
    pub runs: usize,
    pub acc: MeanStd,
    pub tpv: MeanStd,
    pub npv: MeanStd,
    pub ppv: MeanStd,
}

/// One row per variant, in first-seen order.
pub fn aggregate(reports: &[RunReport]) -> Vec<AggregateRow> {
    let mut variants: Vec<Variant> = Vec::new();
    for r in reports {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    variants
        .into_iter()
        .map(|variant| {
            let runs: Vec<&RunReport> = reports.iter().filter(|r| r.variant == variant).collect();
            let col = |f: fn(&RunReport) -> f64| MeanStd::of(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                variant,
                runs: runs.len(),
                acc: col(|r| r.bins.accuracy),
                tpv: col(|r| r.bins.metrics.tpv),
                npv: col(|r| r.bins.metrics.npv),
                ppv: col(|r| r.bins.metrics.ppv),
            }
        })
        .collect()
}

const AGGREGATE_HEADER: [&str; 10] = [
    "variant", "runs", "acc_mean", "acc_std", "tpv_mean", "tpv_std", "npv_mean", "npv_std", "ppv_mean", "ppv_std",
];

fn aggregate_fields(row: &AggregateRow) -> Vec<String> {
    let mut out = vec![row.variant.to_string(), row.runs.to_string()];
    for m in [row.acc, row.tpv, row.npv, row.ppv] {
        out.push(m.mean.to_string());
        out.push(m.std.to_string());
    }
    out
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(AGGREGATE_HEADER).map_err(&err)?;
    for row in rows {
        w.write_record(aggregate_fields(row)).map_err(&err)?;
    }
    w.flush().map_err(Error::write(path))
}

/// Aggregate rows prefixed by the swept parameter and its value.
pub fn write_sweep_csv(path: &Path, param: &str, rows: &[(f64, Vec<AggregateRow>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    let mut header = vec!["param", "value"];
    header.extend(AGGREGATE_HEADER);
    w.write_record(header).map_err(&err)?;
    for (value, group) in rows {
        for row in group {
            let mut fields = vec![param.to_string(), value.to_string()];
            fields.extend(aggregate_fields(row));
            w.write_record(fields).map_err(&err)?;
        }
    }
    w.flush().map_err(Error::write(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_stages_csv(path: &Path, reports: &[RunReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record([
        "variant",
        "seed",
        "stage",
        "skipped",
        "candidates",
        "selected",
        "multi_hop_routed",
        "pseudo_total",
        "pseudo_mean_est_homophily",
        "pseudo_mean_true_homophily",
        "global_mean_est_homophily",
        "kl_local_global",
        "kl_local_global_true",
        "cmd_local_global",
        "selection_loss",
        "validation_accuracy",
        "test_accuracy",
    ])
    .map_err(&err)?;
    for r in reports {
        for s in &r.stages {
            w.write_record([
                r.variant.to_string(),
                r.config.seed.to_string(),
                s.stage.to_string(),
                s.skipped.to_string(),
                s.candidates.to_string(),
                s.selected.len().to_string(),
                s.multi_hop_routed.to_string(),
                s.pseudo_total.to_string(),
                opt(s.pseudo_mean_est_homophily),
                opt(s.pseudo_mean_true_homophily),
                s.global_mean_est_homophily.to_string(),
                s.kl_local_global.to_string(),
                opt(s.kl_local_global_true),
                s.cmd_local_global.to_string(),
                opt(s.selection_loss.map(|l| l.total)),
                opt(s.validation_accuracy),
                s.test_accuracy.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(Error::write(path))
}

pub fn write_bins_csv(path: &Path, reports: &[RunReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record([
        "variant",
        "seed",
        "bin_index",
        "count",
        "backbone_accuracy",
        "self_trained_accuracy",
        "delta",
    ])
    .map_err(&err)?;
    for r in reports {
        let b = &r.bins;
        for (i, ((bb, st), d)) in b.backbone.iter().zip(&b.self_trained).zip(&b.deltas).enumerate() {
            w.write_record([
                r.variant.to_string(),
                r.config.seed.to_string(),
                i.to_string(),
                bb.count.to_string(),
                opt(bb.accuracy),
                opt(st.accuracy),
                opt(*d),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(Error::write(path))
}

/// Per-iteration selection losses of every stage of one run.
pub fn write_trace_csv(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["stage", "iteration", "loss", "cmd", "kl", "penalty", "l1"])
        .map_err(&err)?;
    for s in &report.stages {
        for t in &s.selection_trace {
            let l = t.loss;
            w.write_record([
                s.stage.to_string(),
                t.iteration.to_string(),
                l.total.to_string(),
                l.cmd.to_string(),
                l.kl.to_string(),
                l.penalty.to_string(),
                l.l1.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(Error::write(path))
}

/// Rewrites `aggregate.csv`, `stages.csv` and `bins.csv` in `dir` from the
/// given reports.
pub fn write_summaries(dir: &Path, reports: &[RunReport]) -> Result<Vec<AggregateRow>> {
    let rows = aggregate(reports);
    write_aggregate_csv(&dir.join(AGGREGATE), &rows)?;
    write_stages_csv(&dir.join(STAGES), reports)?;
    write_bins_csv(&dir.join(BINS), reports)?;
    Ok(rows)
}
