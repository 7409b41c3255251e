//! Run reports, the files written next to them, and the long-format merge.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig, SCHEMA_VERSION};
use crate::experiment::{summarize, AccuracyRecord, CurveRecord, SeedOutcome, SelectorMassRecord, SummaryCell};
use crate::verify::{ClaimResult, Verdict};

pub const TRAIN_REPORT: &str = "report.json";
pub const VERIFY_REPORT: &str = "verify.json";
pub const METADATA: &str = "metadata.json";

/// Deterministic part of a run. Wall-clock data lives in [`Metadata`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub run_id: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub claims: Vec<ClaimResult>,
    pub accuracies: Vec<AccuracyRecord>,
    pub summary: Vec<SummaryCell>,
    pub selector_mass: Vec<SelectorMassRecord>,
}

impl RunReport {
    fn new(cfg: &ExperimentConfig, command: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            run_id: cfg.run_id.clone(),
            command: command.into(),
            config: cfg.clone(),
            seeds: Vec::new(),
            claims: Vec::new(),
            accuracies: Vec::new(),
            summary: Vec::new(),
            selector_mass: Vec::new(),
        }
    }

    pub fn for_verify(cfg: &ExperimentConfig, claims: Vec<ClaimResult>) -> Self {
        Self { seeds: vec![cfg.verify.seed], claims, ..Self::new(cfg, "verify") }
    }

    pub fn for_train(cfg: &ExperimentConfig, outcomes: &[SeedOutcome]) -> Self {
        let accuracies: Vec<AccuracyRecord> = outcomes.iter().flat_map(|o| o.accuracies.iter().cloned()).collect();
        Self {
            seeds: outcomes.iter().map(|o| o.seed).collect(),
            summary: summarize(&accuracies),
            selector_mass: outcomes.iter().flat_map(|o| o.selector_mass.iter().cloned()).collect(),
            accuracies,
            ..Self::new(cfg, "train")
        }
    }

    pub fn any_failed(&self) -> bool {
        self.claims.iter().any(|c| c.verdict == Verdict::Fail)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Parses a report, rejecting other schema versions before decoding the rest.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        match raw.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => Ok(serde_json::from_value(raw)?),
            Some(v) => Err(ConfigError(format!("report schema_version {v} differs from supported {SCHEMA_VERSION}")).into()),
            None => Err(ConfigError("report has no schema_version".into()).into()),
        }
    }
}

/// Non-reproducible run facts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metadata {
    pub run_id: String,
    pub command: String,
    pub total_seconds: f64,
    pub seed_seconds: Vec<(u64, f64)>,
    pub finished_unix: u64,
}

impl Metadata {
    pub fn new(cfg: &ExperimentConfig, command: &str, total_seconds: f64, seed_seconds: Vec<(u64, f64)>) -> Self {
        let finished_unix =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self { run_id: cfg.run_id.clone(), command: command.into(), total_seconds, seed_seconds, finished_unix }
    }
}

pub fn run_dir(out: &Path, run_id: &str) -> PathBuf {
    out.join(run_id)
}

/// Creates the run directory, refusing to reuse a run id unless `overwrite`.
pub fn prepare_run_dir(out: &Path, run_id: &str, report_name: &str, overwrite: bool) -> anyhow::Result<PathBuf> {
    let dir = run_dir(out, run_id);
    if dir.join(report_name).exists() && !overwrite {
        return Err(ConfigError(format!(
            "run id {run_id:?} already has a {report_name} in {}; pick another run_id or pass --overwrite",
            out.display()
        ))
        .into());
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn write_json(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

const SHIFT_COLUMNS: [&str; 4] = ["id", "zs_random", "zf_random", "both"];

/// Method rows by shift columns, each cell `mean ± std` in percent.
pub fn accuracy_table(summary: &[SummaryCell]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "id", "zs_random", "zf_random", "both"])?;
    let mut methods: Vec<&str> = Vec::new();
    for c in summary {
        if !methods.contains(&c.method.as_str()) {
            methods.push(&c.method);
        }
    }
    for m in methods {
        let mut row = vec![m.to_string()];
        for shift in SHIFT_COLUMNS {
            let cell = summary.iter().find(|c| c.method == m && c.shift == shift);
            row.push(cell.map_or(String::new(), |c| format!("{:.2} ± {:.2}", 100.0 * c.mean, 100.0 * c.std)));
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn curves_csv(curves: &[CurveRecord]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "seed", "epoch", "phase", "main_loss", "aux_loss", "penalty", "id_accuracy"])?;
    for c in curves {
        let p = &c.point;
        w.write_record([
            c.method.clone(),
            c.seed.to_string(),
            p.epoch.to_string(),
            p.phase.clone(),
            p.main_loss.to_string(),
            p.aux_loss.to_string(),
            p.penalty.to_string(),
            p.id_accuracy.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// One row of the merged long-format table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub run_id: String,
    pub method: String,
    pub shift: String,
    pub seed: u64,
    pub accuracy: f64,
}

/// Loads `<out>/<id>/report.json` for each id.
pub fn load_runs(out: &Path, run_ids: &[String]) -> anyhow::Result<Vec<RunReport>> {
    run_ids
        .iter()
        .map(|id| {
            let path = run_dir(out, id).join(TRAIN_REPORT);
            if !path.exists() {
                return Err(ConfigError(format!("run id {id:?} has no {TRAIN_REPORT} under {}", out.display())).into());
            }
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            RunReport::from_json(&text).with_context(|| format!("loading {}", path.display()))
        })
        .collect()
}

/// Long-format rows of every report, sorted so the merge is order-independent.
pub fn merge(reports: &[RunReport]) -> Vec<LongRow> {
    let mut rows: Vec<LongRow> = reports
        .iter()
        .flat_map(|r| {
            r.accuracies.iter().map(|a| LongRow {
                run_id: r.run_id.clone(),
                method: a.method.clone(),
                shift: a.shift.clone(),
                seed: a.seed,
                accuracy: a.accuracy,
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        (&a.run_id, &a.method, &a.shift, a.seed).cmp(&(&b.run_id, &b.method, &b.shift, b.seed))
    });
    rows
}

pub fn long_csv(rows: &[LongRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
