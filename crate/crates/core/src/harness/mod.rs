//! Experiment runner: verification (TPR at a calibrated threshold) and
//! identification (argmax accuracy) campaigns over simulated channels.

mod config;
mod detector;
mod report;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::attacks::AttackPipeline;
use crate::channel::{Channel, ChannelConfig};
use crate::codec::{
    assemble_initial_noise, calibrate_threshold, derive_keys, identify_batch, sample_watermark, CalibrationMethod,
    MasterSeed, ReplicationConfig, ShuffleKeySet, UserRegistry, WatermarkVector,
};
use crate::error::{Error, Result};
use crate::grid::LatentTensor;

pub use config::{resolve_attacks, ExperimentConfig, DEFAULT_FPR, DEFAULT_TRIALS};
pub use detector::{angle_error_mod180, candidates, verify_latent, Candidates, VerifyOutcome};
pub use report::{score_histogram, IdentificationReport, Report, ReportRow, CSV_HEADER};

const NOISE_STREAM: u64 = 0x6e6f_6973_655f_7374;
const NEGATIVE_STREAM: u64 = 0x6e65_6761_7469_7665;

/// Mixes `(base, index)` into a well-spread 64-bit seed.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key material and initial noise for one watermarked image.
pub struct Embedded {
    pub master: MasterSeed,
    pub watermark: WatermarkVector,
    pub keys: ShuffleKeySet,
    pub z_t: LatentTensor,
}

pub fn embed(master: MasterSeed, replication: &ReplicationConfig, shape: (usize, usize, usize)) -> Result<Embedded> {
    let dims = replication.payload_dims(shape)?;
    let watermark = sample_watermark(&master, dims)?;
    let keys = derive_keys(&master, replication.replica_count(), dims.len())?;
    let z_t = assemble_initial_noise(&watermark, &keys, replication, shape)?;
    Ok(Embedded { master, watermark, keys, z_t })
}

/// Unwatermarked `N(0, 1)` initial noise.
pub fn random_latent(shape: (usize, usize, usize), seed: u64) -> LatentTensor {
    let (h, _, c) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..h * h * c)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x
        })
        .collect();
    LatentTensor::from_values(h, c, values).expect("square shape")
}

/// Per-trial record, kept for replay and histograms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub score: Option<f64>,
    pub detected: bool,
    pub theta_error_deg: Option<f64>,
    pub error: Option<String>,
}

/// Runs one trial of one row: embed with the trial's key, transmit, decode.
pub fn run_trial(
    cfg: &ExperimentConfig,
    channel: &Channel,
    rotation: Option<f64>,
    threshold: f64,
    trial: usize,
) -> TrialRecord {
    let seed = trial_seed(cfg.seed_base, trial as u64);
    let outcome = (|| -> Result<VerifyOutcome> {
        let e = embed(MasterSeed::from_u64(seed), &cfg.replication, cfg.latent_shape())?;
        let received = channel.transmit(&e.z_t, seed ^ NOISE_STREAM)?;
        verify_latent(&received, &e.watermark, &e.keys, &cfg.replication, cfg.template(), threshold)
    })();
    match outcome {
        Ok(o) => TrialRecord {
            trial,
            seed,
            score: Some(o.score),
            detected: o.detected,
            theta_error_deg: rotation.zip(o.attack_angle).map(|(truth, est)| angle_error_mod180(est, truth)),
            error: None,
        },
        Err(e) => TrialRecord { trial, seed, score: None, detected: false, theta_error_deg: None, error: Some(e.to_string()) },
    }
}

fn row_channel(cfg: &ExperimentConfig, attacks: Option<&AttackPipeline>) -> Result<Channel> {
    let channel_cfg = cfg.channel.clone().with_attacks(attacks.cloned());
    Channel::new(&channel_cfg, cfg.latent_size, cfg.template())
}

/// Runs all trials of one attack row.
pub fn run_row(cfg: &ExperimentConfig, attacks: Option<&AttackPipeline>, threshold: f64) -> Result<(ReportRow, Vec<TrialRecord>)> {
    let start = Instant::now();
    let channel = row_channel(cfg, attacks)?;
    let rotation = attacks.and_then(AttackPipeline::rotation);
    let records: Vec<TrialRecord> =
        (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, &channel, rotation, threshold, i)).collect();
    let row = ReportRow::from_records(attacks, threshold, &records, start.elapsed().as_secs_f64());
    Ok((row, records))
}

/// Empirical false-positive rate on unwatermarked latents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FprCheck {
    pub negatives: usize,
    pub false_positives: usize,
    pub empirical_fpr: f64,
    pub target_fpr: f64,
    pub threshold: f64,
    /// Central 95% range of the false-positive count under the target rate.
    pub acceptance: (u64, u64),
    pub within: bool,
}

/// Central `level` range of `Binomial(n, p)`.
pub fn binomial_interval(n: usize, p: f64, level: f64) -> Result<(u64, u64)> {
    let b = Binomial::new(p, n as u64).map_err(|e| Error::Config(e.to_string()))?;
    let tail = (1.0 - level) / 2.0;
    Ok((b.inverse_cdf(tail), b.inverse_cdf(1.0 - tail)))
}

/// Pushes unwatermarked latents through the clean channel without template
/// and scores each against a fresh key.
pub fn run_negatives(cfg: &ExperimentConfig, count: usize, threshold: f64) -> Result<FprCheck> {
    let channel = Channel::new(&cfg.channel.clone().with_attacks(None), cfg.latent_size, None)?;
    let base = cfg.seed_base ^ NEGATIVE_STREAM;
    let false_positives = (0..count)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let seed = trial_seed(base, i as u64);
            let e = embed(MasterSeed::from_u64(seed), &cfg.replication, cfg.latent_shape())?;
            let received = channel.transmit(&random_latent(cfg.latent_shape(), seed ^ 1), seed ^ NOISE_STREAM)?;
            Ok(verify_latent(&received, &e.watermark, &e.keys, &cfg.replication, cfg.template(), threshold)?.detected)
        })
        .try_fold(|| 0usize, |acc, hit| hit.map(|h| acc + h as usize))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let acceptance = binomial_interval(count, cfg.fpr, 0.95)?;
    Ok(FprCheck {
        negatives: count,
        false_positives,
        empirical_fpr: false_positives as f64 / count.max(1) as f64,
        target_fpr: cfg.fpr,
        threshold,
        acceptance,
        within: (acceptance.0..=acceptance.1).contains(&(false_positives as u64)),
    })
}

pub fn threshold_for(cfg: &ExperimentConfig) -> Result<f64> {
    let len = cfg.replication.payload_dims(cfg.latent_shape())?.len();
    calibrate_threshold(len, cfg.fpr, CalibrationMethod::Analytic)
}

/// The verification campaign: one row per attack pipeline, plus an optional FPR check.
pub fn run_verification(cfg: &ExperimentConfig) -> Result<Report> {
    run_verification_with_trials(cfg).map(|(report, _)| report)
}

/// As [`run_verification`], also returning each row's trial records.
pub fn run_verification_with_trials(cfg: &ExperimentConfig) -> Result<(Report, Vec<Vec<TrialRecord>>)> {
    cfg.validate()?;
    let threshold = threshold_for(cfg)?;
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for attacks in cfg.attack_rows()? {
        let (row, records) = run_row(cfg, attacks.as_ref(), threshold)?;
        rows.push(row);
        trials.push(records);
    }
    let fpr_check = match cfg.negatives {
        0 => None,
        n => Some(run_negatives(cfg, n, threshold)?),
    };
    Ok((Report::new(cfg.clone(), threshold, rows, fpr_check), trials))
}

/// The identification campaign: `images_per_user` images from every user of a
/// synthetic registry, each identified against the whole registry.
pub fn run_identification(
    cfg: &ExperimentConfig,
    attacks: Option<&AttackPipeline>,
    n_users: usize,
    images_per_user: usize,
) -> Result<IdentificationReport> {
    if n_users < 2 {
        return Err(Error::Config("identification needs at least 2 users".into()));
    }
    if images_per_user == 0 {
        return Err(Error::Config("images_per_user must be at least 1".into()));
    }
    cfg.replication.payload_dims(cfg.latent_shape())?;
    cfg.template.validate()?;
    let start = Instant::now();
    let registry = UserRegistry::synthetic(n_users, cfg.seed_base);
    let channel = row_channel(cfg, attacks)?;
    let jobs: Vec<(usize, usize)> =
        (0..n_users).flat_map(|u| (0..images_per_user).map(move |j| (u, j))).collect();
    let candidate_sets: Vec<Vec<LatentTensor>> = jobs
        .par_iter()
        .map(|&(u, j)| -> Result<Vec<LatentTensor>> {
            let entry = &registry.entries()[u];
            let e = embed(entry.master_seed.clone(), &cfg.replication, cfg.latent_shape())?;
            let noise_seed = trial_seed(cfg.seed_base ^ NOISE_STREAM, (u * images_per_user + j) as u64);
            let received = channel.transmit(&e.z_t, noise_seed)?;
            Ok(candidates(&received, cfg.template())?.latents)
        })
        .collect::<Result<_>>()?;
    let ids = identify_batch(&candidate_sets, &registry, &cfg.replication)?;
    let correct = ids
        .iter()
        .zip(&jobs)
        .filter(|(id, &(u, _))| id.user_id == registry.entries()[u].user_id)
        .count();
    Ok(IdentificationReport {
        users: n_users,
        images_per_user,
        images: jobs.len(),
        correct,
        accuracy: correct as f64 / jobs.len() as f64,
        attacks: attacks.map(|p| p.to_string()),
        channel: cfg.channel.clone(),
        seed_base: cfg.seed_base,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Convenience for tests and the CLI: a default config on a given channel and attack string.
pub fn quick_config(channel: ChannelConfig, attacks: &str, trials: usize, seed_base: u64) -> ExperimentConfig {
    ExperimentConfig { channel, attacks: attacks.to_string(), trials, seed_base, ..ExperimentConfig::default() }
}
