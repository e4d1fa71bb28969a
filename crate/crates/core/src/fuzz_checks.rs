//! Properties checked by the fuzz targets, shared with the corpus replay test.
//! Each function must never panic except on a violated property.

use crate::attacks::{format_pipeline, parse_pipeline, parse_preset, AttackDomain};
use crate::capacity::ElementDist;
use crate::channel::ChannelMode;
use crate::codec::{registry_from_json, registry_to_json, KeyFile, MasterSeed};
use crate::grid::LatentTensor;
use crate::harness::{candidates, ExperimentConfig};
use crate::io::{decode_mxlt, encode_mxlt, MXLT_HEADER_LEN};
use crate::template::TemplateConfig;

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

/// Small latent the attack targets run on.
fn probe() -> LatentTensor {
    let values = (0..16 * 16 * 2).map(|i| ((i * 37 % 101) as f64 - 50.0) / 25.0).collect();
    LatentTensor::from_values(16, 2, values).expect("static shape")
}

pub fn mxlt_decode(data: &[u8]) {
    let Ok(t) = decode_mxlt(data) else { return };
    let bytes = encode_mxlt(&t).expect("decoded latents re-encode");
    assert_eq!(&bytes[MXLT_HEADER_LEN..], &data[MXLT_HEADER_LEN..]);
    assert_eq!(decode_mxlt(&bytes).expect("re-encoded bytes decode"), t);
    // the template decoder must cope with any decodable latent
    if t.size() <= 32 {
        let _ = candidates(&t, Some(&TemplateConfig::default()));
    }
}

pub fn key_file(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let Ok(key) = KeyFile::from_json(s) else { return };
    assert_eq!(KeyFile::from_json(&key.to_json()).expect("key round-trips"), key);
}

pub fn registry_file(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let Ok(reg) = registry_from_json(s) else { return };
    let again = registry_from_json(&registry_to_json(&reg)).expect("registry round-trips");
    assert_eq!(again.entries(), reg.entries());
}

pub fn attack_pipeline(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let Ok(p) = parse_pipeline(s) else { return };
    let canonical = format_pipeline(&p);
    let reparsed = parse_pipeline(&canonical).expect("canonical form parses");
    assert_eq!(format_pipeline(&reparsed), canonical);
    let z = probe();
    if let Ok(out) = p.apply(&z, AttackDomain::Latent) {
        assert_eq!(out.shape(), z.shape());
    }
}

pub fn attack_preset(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let Ok(rows) = parse_preset(s) else { return };
    for p in rows {
        let canonical = format_pipeline(&p);
        assert_eq!(format_pipeline(&parse_pipeline(&canonical).expect("canonical form parses")), canonical);
    }
}

pub fn experiment_config(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let Ok(cfg) = ExperimentConfig::from_toml(s) else { return };
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).expect("config round-trips"), cfg);
}

/// The small `FromStr` surfaces: seeds, domains, channel modes, distributions.
pub fn scalar_parsers(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(seed) = MasterSeed::from_hex(s) {
        assert_eq!(MasterSeed::from_hex(&seed.to_hex()).expect("hex round-trips"), seed);
    }
    if let Ok(d) = s.parse::<AttackDomain>() {
        assert_eq!(d.to_string().parse::<AttackDomain>().expect("domain round-trips"), d);
    }
    let _ = s.parse::<ChannelMode>();
    if let Ok(d) = s.parse::<ElementDist>() {
        assert_eq!(d.name().parse::<ElementDist>().expect("dist round-trips"), d);
    }
}

/// Target name to check, for the corpus replay.
pub const TARGETS: &[(&str, fn(&[u8]))] = &[
    ("mxlt_decode", mxlt_decode),
    ("key_file", key_file),
    ("registry_file", registry_file),
    ("attack_pipeline", attack_pipeline),
    ("attack_preset", attack_preset),
    ("experiment_config", experiment_config),
    ("scalar_parsers", scalar_parsers),
];
