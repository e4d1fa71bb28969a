use std::path::Path;
use std::process::{Command, Output};

use maxsive::harness::random_latent;
use maxsive::io::write_mxlt;

fn maxsive(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxsive"))
        .args(args)
        .current_dir(dir)
        .env("MAXSIVE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = maxsive(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

const SEED_HEX: &str = "0123456789abcdef0123456789abcdef0123456789abcdef0123456789abcdef";

#[test]
fn keygen_embed_extract_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["keygen", "--seed-hex", SEED_HEX, "-o", "key.json"]);
    let key: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("key.json")).unwrap()).unwrap();
    assert_eq!(key["version"], 1);
    assert_eq!(key["master_seed"], SEED_HEX);
    assert_eq!(key["kdf"], "sha256-concat");
    assert_eq!(key["tiling"], "cgm-rowmajor");
    ok(d, &["embed", "--key", "key.json", "-o", "zt.mxlt"]);
    assert!(ok(d, &["extract", "--key", "key.json", "zt.mxlt"]).contains("score 1.0000"));
    assert_eq!(maxsive(d, &["verify", "--key", "key.json", "zt.mxlt"]).status.code(), Some(0));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["keygen", "--seed", "3", "-o", "key.json"]);
    write_mxlt(d.join("plain.mxlt"), &random_latent((64, 64, 4), 11)).unwrap();
    let o = maxsive(d, &["verify", "--key", "key.json", "plain.mxlt"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("not detected"));
    assert_eq!(maxsive(d, &["verify", "--key", "missing.json", "plain.mxlt"]).status.code(), Some(1));
    write_mxlt(d.join("small.mxlt"), &random_latent((32, 32, 4), 1)).unwrap();
    let o = maxsive(d, &["verify", "--key", "key.json", "small.mxlt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("shape"));
    std::fs::write(d.join("junk.mxlt"), b"MXLTjunk").unwrap();
    assert_eq!(maxsive(d, &["extract", "--key", "key.json", "junk.mxlt"]).status.code(), Some(1));
}

#[test]
fn generated_and_rotated_latent_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["keygen", "--seed", "9", "-o", "key.json"]);
    ok(d, &["embed", "--key", "key.json", "--channel", "ddim", "-o", "z0.mxlt"]);
    ok(d, &["attack", "z0.mxlt", "--attacks", "rotate_crop_rescale(theta=30)", "-o", "z0r.mxlt"]);
    let out = ok(d, &["verify", "--key", "key.json", "--channel", "ddim", "z0r.mxlt", "--dump-profile", "p.csv"]);
    assert!(out.contains("detected") && !out.contains("not detected"), "{out}");
    assert!(out.contains("rotation 30.0"), "{out}");
    let profile = std::fs::read_to_string(d.join("p.csv")).unwrap();
    assert!(profile.starts_with("theta,"));
    assert_eq!(profile.lines().count(), 181);
    let json: serde_json::Value =
        serde_json::from_str(&ok(d, &["extract", "--key", "key.json", "--channel", "ddim", "z0r.mxlt", "--json"])).unwrap();
    assert!(json["score"].as_f64().unwrap() > json["threshold"].as_f64().unwrap());
}

#[test]
fn identify_against_registry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["keygen", "--users", "20", "--seed", "100", "-o", "reg.json"]);
    // synthetic user 7 has seed 107
    ok(d, &["keygen", "--seed", "107", "-o", "u7.json"]);
    ok(d, &["embed", "--key", "u7.json", "-o", "zt.mxlt"]);
    let out = ok(d, &["identify", "zt.mxlt", "--registry", "reg.json"]);
    assert!(out.starts_with("user 7 score 1.0000"), "{out}");
    let out = ok(d, &["identify", "--users", "8", "--out", "ident.json"]);
    assert!(out.starts_with("accuracy 1.0000 (8/8)"), "{out}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("ident.json")).unwrap()).unwrap();
    assert_eq!(report["users"], 8);
    assert_eq!(maxsive(d, &["identify", "zt.mxlt"]).status.code(), Some(1));
}

#[test]
fn capacity_and_calibrate() {
    let d = std::env::temp_dir();
    let json: serde_json::Value = serde_json::from_str(&ok(&d, &["capacity", "--L", "4096", "--dist", "normal"])).unwrap();
    assert_eq!(json, serde_json::json!({"L": 4096, "dist": "standard_normal", "bits": 8384.9216}));
    let json: serde_json::Value = serde_json::from_str(&ok(&d, &["capacity", "--L", "256", "--dist", "ber"])).unwrap();
    assert_eq!(json["bits"], 256.0);
    let table = ok(&d, &["capacity", "--table"]);
    assert_eq!(table.lines().count(), 6);
    assert!(table.contains("20.4710") && table.contains("8384.9216"));
    assert_eq!(maxsive(&d, &["capacity", "--L", "0"]).status.code(), Some(1));
    let tau: f64 = ok(&d, &["calibrate", "--L", "4096", "--fpr", "1e-3"]).trim().parse().unwrap();
    assert!((tau - 0.0483).abs() < 0.002);
    assert_eq!(maxsive(&d, &["calibrate", "--L", "4096", "--fpr", "1e-3", "--trials", "1000"]).status.code(), Some(1));
}

#[test]
fn attacks_list_covers_every_kind() {
    let out = ok(&std::env::temp_dir(), &["attacks", "list"]);
    for kind in maxsive::attacks::KINDS {
        assert!(out.contains(kind.name), "{}", kind.name);
    }
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["bench", "--attacks", "jpeg_proxy(q=50)", "--channel", "identity", "--trials", "5", "--negatives", "20", "-o", "rep", "--histogram"]);
    assert!(out.contains("fpr check"), "{out}");
    let csv = std::fs::read_to_string(d.join("rep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "attack,params,trials,tpr,threshold,mean_score,mean_theta_err_deg,seconds");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("clean,,5,1.0000,"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("rep.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["trials"], 5);
    assert!(d.join("rep.hist").exists());
    let toml = ok(d, &["bench", "--trials", "7", "--print-config"]);
    assert!(toml.contains("trials = 7"));
    assert_eq!(maxsive(d, &["bench", "--attacks", "bogus(x=1)"]).status.code(), Some(1));
}
