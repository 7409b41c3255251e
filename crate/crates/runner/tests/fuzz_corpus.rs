use std::fs;
use std::path::Path;

use fakeinv_runner::roundtrip::{check, TARGETS};

#[test]
fn corpus_seeds_replay_without_panics() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    for target in TARGETS {
        let dir = corpus.join(target);
        let mut parsed = 0;
        let mut seeds = 0;
        for entry in fs::read_dir(&dir).unwrap_or_else(|e| panic!("{}: {e}", dir.display())) {
            let data = fs::read(entry.unwrap().path()).unwrap();
            seeds += 1;
            parsed += usize::from(check(target, &data));
        }
        assert!(parsed >= 1, "{target}: no seed parses ({seeds} seeds)");
    }
}

#[test]
fn malformed_seeds_are_rejected() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    for (target, seed) in [("graph_json", "cycle"), ("report_json", "wrong_schema"), ("dataset_csv", "header_wrong_k")] {
        assert!(!check(target, &fs::read(corpus.join(target).join(seed)).unwrap()), "{target}/{seed}");
    }
}

#[test]
fn arbitrary_bytes_do_not_panic() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for target in TARGETS {
        for len in [0, 1, 7, 64] {
            let data: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            check(target, &data);
        }
    }
}

#[test]
fn well_formed_seeds_parse() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    for (target, seed) in [
        ("graph_json", "rs_scm_fake_off"),
        ("graph_json", "collider"),
        ("joint_json", "desk_pooled"),
        ("joint_json", "copy"),
        ("codebook_json", "desk"),
        ("benchmark_json", "desk"),
        ("dataset_csv", "desk_k4"),
        ("bundle_json", "tiny_iil"),
        ("config_json", "echo"),
        ("config_json", "learning"),
        ("config_json", "partial"),
        ("report_json", "verify"),
    ] {
        assert!(check(target, &fs::read(corpus.join(target).join(seed)).unwrap()), "{target}/{seed}");
    }
}
