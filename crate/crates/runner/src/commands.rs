//! Subcommand bodies shared by the binary and the integration tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{
    accuracy_table, curves_csv, load_runs, long_csv, merge, prepare_run_dir, write_json, Metadata, RunReport,
    METADATA, TRAIN_REPORT, VERIFY_REPORT,
};
use crate::verify::Verdict;
use crate::{experiment, generate, verify};

/// Command-line settings layered over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub run_id: Option<String>,
    pub fake_branch: Option<bool>,
    pub num_classes: Option<usize>,
    pub tol: Option<f64>,
    pub instances: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub ablate_lambda: Option<Vec<f64>>,
    pub ablate_mi: Option<bool>,
}

pub fn load_config(o: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| ConfigError(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.benchmark.seed = s;
        cfg.verify.seed = s;
    }
    if let Some(id) = &o.run_id {
        cfg.run_id = id.clone();
    }
    if let Some(f) = o.fake_branch {
        cfg.benchmark.fake_branch = f;
        cfg.verify.desk.fake_branch = f;
    }
    if let Some(k) = o.num_classes {
        cfg.benchmark.num_classes = k;
        cfg.benchmark.obs_dim = cfg.benchmark.obs_dim.max(k);
    }
    if let Some(t) = o.tol {
        cfg.verify.tolerances.positive = t;
    }
    if let Some(n) = o.instances {
        cfg.verify.random_instances = n;
    }
    if let Some(s) = &o.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(l) = &o.ablate_lambda {
        cfg.ablate_lambda = l.clone();
    }
    if let Some(m) = o.ablate_mi {
        cfg.ablate_mi = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// What a command prints, and whether any claim failed.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub message: String,
    pub claims_failed: bool,
}

impl Outcome {
    fn ok(message: String) -> Self {
        Self { message, claims_failed: false }
    }
}

pub fn generate(cfg: &ExperimentConfig, out: &Path, exact: bool) -> anyhow::Result<Outcome> {
    let files = generate::write(cfg, out, exact)?;
    Ok(Outcome::ok(format!("wrote {} files to {}", files.len(), out.display())))
}

pub fn verify(cfg: &ExperimentConfig, out: &Path, overwrite: bool) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let dir = prepare_run_dir(out, &cfg.run_id, VERIFY_REPORT, overwrite)?;
    let claims = verify::run_suite(&cfg.verify)?;
    let report = RunReport::for_verify(cfg, claims);
    write_json(&dir.join(VERIFY_REPORT), &report.to_json())?;
    let meta = Metadata::new(cfg, "verify", start.elapsed().as_secs_f64(), Vec::new());
    write_json(&dir.join(METADATA), &serde_json::to_string_pretty(&meta)?)?;
    let mut lines: Vec<String> = report
        .claims
        .iter()
        .map(|c| {
            let v = match c.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::PremiseAbsent => "PREMISE ABSENT",
            };
            format!("{v:<15}{}", c.claim)
        })
        .collect();
    lines.push(format!("report: {}", dir.join(VERIFY_REPORT).display()));
    Ok(Outcome { message: lines.join("\n"), claims_failed: report.any_failed() })
}

pub fn train(cfg: &ExperimentConfig, out: &Path, data: Option<&Path>, overwrite: bool) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let dir = prepare_run_dir(out, &cfg.run_id, TRAIN_REPORT, overwrite)?;
    let bench = match data {
        Some(d) => {
            let echo = ExperimentConfig::load(&d.join("config.json"))?;
            if echo.benchmark != cfg.benchmark || echo.samples_per_env != cfg.samples_per_env {
                return Err(ConfigError(format!("datasets in {} were generated from a different benchmark", d.display())).into());
            }
            generate::read(cfg, d)?
        }
        None => generate::build(cfg)?,
    };
    let outcomes = experiment::run(cfg, &bench)?;
    let report = RunReport::for_train(cfg, &outcomes);
    write_json(&dir.join(TRAIN_REPORT), &report.to_json())?;
    fs::write(dir.join("accuracy.csv"), accuracy_table(&report.summary)?)?;
    let curves: Vec<_> = outcomes.iter().flat_map(|o| o.curves.iter().cloned()).collect();
    fs::write(dir.join("curves.csv"), curves_csv(&curves)?)?;
    let models = dir.join("models");
    fs::create_dir_all(&models)?;
    for o in &outcomes {
        for (name, bundle) in &o.models {
            fs::write(models.join(format!("{name}_seed{}.json", o.seed)), bundle.to_json())?;
        }
    }
    let seconds = outcomes.iter().map(|o| (o.seed, o.seconds)).collect();
    let meta = Metadata::new(cfg, "train", start.elapsed().as_secs_f64(), seconds);
    write_json(&dir.join(METADATA), &serde_json::to_string_pretty(&meta)?)?;
    Ok(Outcome::ok(format!("{}\nreport: {}", accuracy_table(&report.summary)?.trim_end(), dir.join(TRAIN_REPORT).display())))
}

pub fn report(out: &Path, run_ids: &[String], dest: &Path) -> anyhow::Result<Outcome> {
    let reports = load_runs(out, run_ids)?;
    let rows = merge(&reports);
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(dest, long_csv(&rows)?)?;
    Ok(Outcome::ok(format!("wrote {} rows to {}", rows.len(), dest.display())))
}
