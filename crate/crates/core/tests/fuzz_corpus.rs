//! Replays the checked-in fuzz corpus through the fuzz properties.

use std::path::PathBuf;

use maxsive::fuzz_checks::TARGETS;

fn corpus_dir(target: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target)
}

#[test]
fn every_target_has_seeds_and_they_hold() {
    for (target, check) in TARGETS {
        let dir = corpus_dir(target);
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        assert!(files.len() >= 3, "{target} has {} seeds", files.len());
        for f in files {
            let data = std::fs::read(&f).unwrap();
            check(&data);
        }
    }
}

#[test]
fn valid_seeds_parse() {
    let read = |t: &str, n: &str| std::fs::read_to_string(corpus_dir(t).join(n)).unwrap();
    maxsive::codec::KeyFile::from_json(&read("key_file", "valid")).unwrap();
    assert_eq!(maxsive::codec::registry_from_json(&read("registry_file", "valid")).unwrap().len(), 4);
    maxsive::harness::ExperimentConfig::from_toml(&read("experiment_config", "full")).unwrap();
    assert_eq!(maxsive::attacks::parse_preset(&read("attack_preset", "stirmark_rst")).unwrap().len(), 25);
    for i in 0..16 {
        maxsive::attacks::parse_pipeline(&read("attack_pipeline", &format!("ok_{i:02}"))).unwrap();
    }
    let bytes = std::fs::read(corpus_dir("mxlt_decode").join("eight_4ch")).unwrap();
    assert_eq!(maxsive::io::decode_mxlt(&bytes).unwrap().shape(), (8, 8, 4));
}
