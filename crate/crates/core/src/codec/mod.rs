//! Watermark payload, keyed shuffle layout, and detection.

mod detect;
mod files;
mod keys;
mod payload;

pub use detect::{
    calibrate_threshold, identify, identify_batch, null_scores, score, score_values, verify, CalibrationMethod,
    Decision, Identification, Score, UserEntry, UserKeyMaterial, UserRegistry,
};
pub use files::{
    read_registry, registry_from_json, registry_to_json, write_registry, KeyFile, KDF_NAME, KEY_FILE_VERSION,
    TILING_NAME,
};
pub use keys::{derive_keys, keyed_permutation, MasterSeed, ShuffleKeySet};
pub use payload::{
    assemble_initial_noise, extract_watermark, sample_watermark, ExtractionPlan, PayloadDims, ReplicationConfig,
    WatermarkVector, MIN_PAYLOAD_LEN,
};
