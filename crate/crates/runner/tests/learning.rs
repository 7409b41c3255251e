use std::path::Path;

use fakeinv_runner::config::ExperimentConfig;
use fakeinv_runner::experiment::run_seed;
use fakeinv_runner::generate;

fn golden() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/learning.json");
    ExperimentConfig { ablate_mi: false, ..ExperimentConfig::load(&path).unwrap() }
}

#[test]
fn golden_seed_zero() {
    let cfg = golden();
    let bench = generate::build(&cfg).unwrap();
    let o = run_seed(&cfg, &bench, 0).unwrap();
    let acc = |method: &str, shift: &str| {
        o.accuracies.iter().find(|a| a.method == method && a.shift == shift).unwrap().accuracy
    };
    assert!(acc("erm", "id") >= 0.85, "{}", acc("erm", "id"));
    assert!(acc("erm", "both") <= 0.15, "{}", acc("erm", "both"));
    assert!(acc("invrat", "id") >= 0.85, "{}", acc("invrat", "id"));
    assert!(acc("iil", "zf_random") >= acc("iil_unmasked", "zf_random"));
    let mass = o.selector_mass.iter().find(|m| m.method == "iil").unwrap();
    assert!([mass.z_c, mass.z_f, mass.z_s].iter().all(|v| (0.0..=1.0).contains(v)));
}
