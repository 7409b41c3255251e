//! Benchmark dataset generation.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use fakeinv_core::dataset::{Codebook, EnvironmentDataset};
use fakeinv_core::scm::{
    generate_dataset, make_rs_benchmark, make_test_benchmark, shift_environment, Environments, Shift,
};

use crate::config::ExperimentConfig;

/// In-memory training and test sets for one benchmark configuration.
pub struct Benchmark {
    pub codebook: Codebook,
    pub train: Vec<EnvironmentDataset>,
    /// One held-out set per shift, in [`Shift::ALL`] order.
    pub test: Vec<(Shift, EnvironmentDataset)>,
}

pub fn train_file(env: usize) -> String {
    format!("train_env{env}.csv")
}

pub fn test_file(shift: Shift) -> String {
    format!("test_{}.csv", shift.label())
}

pub fn build(cfg: &ExperimentConfig) -> anyhow::Result<Benchmark> {
    let b = &cfg.benchmark;
    let codebook = b.codebook()?;
    let scm = make_rs_benchmark(b)?;
    let train = (0..b.train_envs.len())
        .map(|env| generate_dataset(&scm, &codebook, env, cfg.samples_per_env, b.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let test_scm = make_test_benchmark(b)?;
    let test_env = b.train_envs.len();
    let test = Shift::ALL
        .iter()
        .map(|&shift| {
            let shifted = shift_environment(&test_scm, shift)?;
            Ok((shift, generate_dataset(&shifted, &codebook, test_env, cfg.test_samples, b.seed)?))
        })
        .collect::<Result<Vec<_>, fakeinv_core::Error>>()?;
    Ok(Benchmark { codebook, train, test })
}

fn write_dataset(path: &Path, d: &EnvironmentDataset) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    d.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

/// Writes every dataset, the codebook and the config echo into `dir`.
/// With `exact`, also writes the pooled exact joint of the training environments.
pub fn write(cfg: &ExperimentConfig, dir: &Path, exact: bool) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let bench = build(cfg)?;
    let mut written = Vec::new();
    for d in &bench.train {
        let p = dir.join(train_file(d.env_id));
        write_dataset(&p, d)?;
        written.push(p);
    }
    for (shift, d) in &bench.test {
        let p = dir.join(test_file(*shift));
        write_dataset(&p, d)?;
        written.push(p);
    }
    let p = dir.join("codebook.json");
    fs::write(&p, bench.codebook.to_json())?;
    written.push(p);
    let p = dir.join("config.json");
    fs::write(&p, cfg.to_json())?;
    written.push(p);
    if exact {
        let joint = make_rs_benchmark(&cfg.benchmark)?.exact_joint(Environments::Pooled)?;
        let p = dir.join("exact_joint.json");
        fs::write(&p, joint.to_json())?;
        written.push(p);
    }
    Ok(written)
}

/// Reads datasets written by [`write`].
pub fn read(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<Benchmark> {
    let k = cfg.benchmark.num_classes;
    let load = |name: String| -> anyhow::Result<EnvironmentDataset> {
        let p = dir.join(&name);
        let f = fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
        Ok(EnvironmentDataset::read_csv(std::io::BufReader::new(f), k)?)
    };
    let train = (0..cfg.benchmark.train_envs.len()).map(|e| load(train_file(e))).collect::<anyhow::Result<Vec<_>>>()?;
    let test = Shift::ALL.iter().map(|&s| Ok((s, load(test_file(s))?))).collect::<anyhow::Result<Vec<_>>>()?;
    let codebook = Codebook::from_json(&fs::read_to_string(dir.join("codebook.json"))?)?;
    Ok(Benchmark { codebook, train, test })
}
