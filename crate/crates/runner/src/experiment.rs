//! Multi-seed training of every method and evaluation on ID and the three shifts.

use std::time::Instant;

use fakeinv_core::dataset::EnvironmentDataset;
use fakeinv_learn::bundle::ModelBundle;
use fakeinv_learn::train::{
    evaluate, evaluate_data, train_erm, train_iil, train_invrat, CurvePoint, TrainConfig, TrainingData,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::generate::Benchmark;

pub const ID_SHIFT: &str = "id";

/// One trained model and how it is evaluated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub use_selector: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub method: String,
    pub shift: String,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorMassRecord {
    pub method: String,
    pub seed: u64,
    pub z_c: f64,
    pub z_f: f64,
    pub z_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub method: String,
    pub seed: u64,
    #[serde(flatten)]
    pub point: CurvePoint,
}

/// Everything one seed produces.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub accuracies: Vec<AccuracyRecord>,
    pub selector_mass: Vec<SelectorMassRecord>,
    pub curves: Vec<CurveRecord>,
    pub models: Vec<(String, ModelBundle)>,
    pub seconds: f64,
}

fn lambda_tag(l: f64) -> String {
    format!("iil_lambda_{l}")
}

struct Trainee {
    name: String,
    bundle: ModelBundle,
    curve: Vec<CurvePoint>,
    /// Evaluated with the selector on, plus an `_unmasked` row without it.
    selective: bool,
}

fn evaluate_all(
    t: &Trainee,
    use_selector: bool,
    suffix: &str,
    seed: u64,
    data: &TrainingData,
    test: &[(fakeinv_core::scm::Shift, EnvironmentDataset)],
) -> anyhow::Result<Vec<AccuracyRecord>> {
    let method = format!("{}{suffix}", t.name);
    let mut out = vec![AccuracyRecord {
        method: method.clone(),
        shift: ID_SHIFT.into(),
        seed,
        accuracy: evaluate_data(&t.bundle, &data.pooled_validation(), use_selector),
    }];
    for (shift, d) in test {
        out.push(AccuracyRecord {
            method: method.clone(),
            shift: shift.label().into(),
            seed,
            accuracy: evaluate(&t.bundle, d, use_selector)?,
        });
    }
    Ok(out)
}

/// Trains ERM, the invariance game, its bottleneck variant and the
/// alternating loop (plus requested ablations) for one seed.
pub fn run_seed(cfg: &ExperimentConfig, bench: &Benchmark, seed: u64) -> anyhow::Result<SeedOutcome> {
    let start = Instant::now();
    let base = TrainConfig { seed, ..cfg.train.clone() };
    let data = TrainingData::from_datasets(&bench.train, base.validation_fraction)?;
    let context = |m: &str| format!("method {m}, seed {seed}");
    use anyhow::Context;

    let erm = train_erm(&data, &base).with_context(|| context("erm"))?;
    let invrat = train_invrat(&data, &base).with_context(|| context("invrat"))?;
    let iib_cfg = TrainConfig { bottleneck_weight: cfg.iib_bottleneck_weight, ..base.clone() };
    let iib = train_invrat(&data, &iib_cfg).with_context(|| context("iib"))?;
    let iil = train_iil(invrat.bundle.clone(), &data, &base).with_context(|| context("iil"))?;

    let mut trainees = vec![
        Trainee { name: "erm".into(), bundle: erm.bundle, curve: erm.curve, selective: false },
        Trainee { name: "invrat".into(), bundle: invrat.bundle.clone(), curve: invrat.curve, selective: false },
        Trainee { name: "iib".into(), bundle: iib.bundle, curve: iib.curve, selective: false },
        Trainee { name: "iil".into(), bundle: iil.bundle, curve: iil.curve, selective: true },
    ];
    if cfg.ablate_mi {
        let c = TrainConfig { mi_weight: 0.0, ..base.clone() };
        let t = train_iil(invrat.bundle.clone(), &data, &c).with_context(|| context("iil_no_mi"))?;
        trainees.push(Trainee { name: "iil_no_mi".into(), bundle: t.bundle, curve: t.curve, selective: true });
    }
    for &lambda in &cfg.ablate_lambda {
        let name = lambda_tag(lambda);
        let c = TrainConfig { lambda, ..base.clone() };
        let t = train_iil(invrat.bundle.clone(), &data, &c).with_context(|| context(&name))?;
        trainees.push(Trainee { name, bundle: t.bundle, curve: t.curve, selective: true });
    }

    let pooled = data.pooled_validation();
    let mut accuracies = Vec::new();
    let mut selector_mass = Vec::new();
    let mut curves = Vec::new();
    for t in &trainees {
        accuracies.extend(evaluate_all(t, t.selective, "", seed, &data, &bench.test)?);
        if t.selective {
            accuracies.extend(evaluate_all(t, false, "_unmasked", seed, &data, &bench.test)?);
            let [z_c, z_f, z_s] = t.bundle.selector_mass(&pooled.x);
            selector_mass.push(SelectorMassRecord { method: t.name.clone(), seed, z_c, z_f, z_s });
        }
        curves.extend(t.curve.iter().map(|p| CurveRecord { method: t.name.clone(), seed, point: p.clone() }));
    }
    let models = trainees.into_iter().map(|t| (t.name, t.bundle)).collect();
    Ok(SeedOutcome { seed, accuracies, selector_mass, curves, models, seconds: start.elapsed().as_secs_f64() })
}

/// Runs every configured seed on its own thread; results come back in seed order.
pub fn run(cfg: &ExperimentConfig, bench: &Benchmark) -> anyhow::Result<Vec<SeedOutcome>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg.seeds.iter().map(|&seed| scope.spawn(move || run_seed(cfg, bench, seed))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("training thread panicked"))))
            .collect()
    })
}

/// Mean and population standard deviation of one (method, shift) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub method: String,
    pub shift: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(records: &[AccuracyRecord]) -> Vec<SummaryCell> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.method.clone(), r.shift.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, shift)| {
            let v: Vec<f64> =
                records.iter().filter(|r| r.method == method && r.shift == shift).map(|r| r.accuracy).collect();
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            SummaryCell { method, shift, mean, std, n }
        })
        .collect()
}
