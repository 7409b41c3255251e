//! Decode-and-reencode properties for every parser entry point, shared by the
//! fuzz targets and the corpus replay test. Each panics only on a violation.

use fakeinv_core::dataset::{Codebook, EnvironmentDataset};
use fakeinv_core::graph::CausalGraph;
use fakeinv_core::info::JointTable;
use fakeinv_core::scm::BenchmarkConfig;
use fakeinv_learn::bundle::ModelBundle;

use crate::config::ExperimentConfig;
use crate::report::RunReport;

/// Parser names, matching the fuzz target and corpus directory names.
pub const TARGETS: [&str; 8] =
    ["graph_json", "joint_json", "codebook_json", "benchmark_json", "dataset_csv", "bundle_json", "config_json", "report_json"];

macro_rules! json_roundtrip {
    ($text:expr, $ty:ty) => {{
        let Ok(v) = <$ty>::from_json($text) else { return false };
        let again = <$ty>::from_json(&v.to_json()).expect("re-encoded value parses");
        assert_eq!(again, v, "round trip changed the value");
        true
    }};
}

/// Runs the property for `target` on `data`; returns whether the input parsed.
pub fn check(target: &str, data: &[u8]) -> bool {
    if target == "dataset_csv" {
        return dataset_csv(data);
    }
    let Ok(text) = std::str::from_utf8(data) else { return false };
    match target {
        "graph_json" => json_roundtrip!(text, CausalGraph),
        "joint_json" => json_roundtrip!(text, JointTable),
        "codebook_json" => json_roundtrip!(text, Codebook),
        "benchmark_json" => json_roundtrip!(text, BenchmarkConfig),
        "bundle_json" => json_roundtrip!(text, ModelBundle),
        "config_json" => json_roundtrip!(text, ExperimentConfig),
        "report_json" => json_roundtrip!(text, RunReport),
        other => panic!("unknown target {other}"),
    }
}

/// The first byte picks the class count; the rest is the CSV body.
fn dataset_csv(data: &[u8]) -> bool {
    let Some((&k, body)) = data.split_first() else { return false };
    let k = usize::from(k % 16) + 1;
    let Ok(d) = EnvironmentDataset::read_csv(body, k) else { return false };
    let mut out = Vec::new();
    d.write_csv(&mut out).expect("writing to memory succeeds");
    let again = EnvironmentDataset::read_csv(out.as_slice(), k).expect("re-encoded dataset parses");
    assert_eq!(again, d, "round trip changed the dataset");
    true
}
