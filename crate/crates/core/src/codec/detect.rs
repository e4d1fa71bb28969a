//! Scoring, threshold calibration, verification and identification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::keys::{derive_keys, MasterSeed};
use super::payload::{extract_watermark, interleave_block, sample_watermark, ExtractionPlan, BLOCK, ReplicationConfig, WatermarkVector};
use crate::error::{Error, Result};
use crate::grid::{normalize_unit, pearson, LatentTensor};

/// A Pearson score; `degenerate` marks an extraction with zero variance, scored as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

pub fn score(w: &WatermarkVector, extracted: &WatermarkVector) -> Result<Score> {
    score_values(w.values(), extracted.values())
}

pub fn score_values(w: &[f64], extracted: &[f64]) -> Result<Score> {
    match pearson(w, extracted) {
        Ok(value) => Ok(Score { value, degenerate: false }),
        Err(Error::Degenerate(_)) => Ok(Score { value: 0.0, degenerate: true }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Detected,
    NotDetected,
}

/// Detection is one-sided and strict: `score > threshold`.
pub fn verify(score: f64, threshold: f64) -> Decision {
    if score > threshold {
        Decision::Detected
    } else {
        Decision::NotDetected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    /// Student-t null of `r sqrt((L-2)/(1-r^2))` with `L-2` degrees of freedom.
    Analytic,
    /// Empirical `1 - fpr` quantile of simulated null scores.
    MonteCarlo { trials: usize, seed: u64 },
}

fn check_calibration_args(payload_len: usize, target_fpr: f64) -> Result<()> {
    if payload_len < 16 {
        return Err(Error::Config(format!("payload length {payload_len} below 16")));
    }
    if !(target_fpr > 0.0 && target_fpr <= 0.5) {
        return Err(Error::Config(format!("target fpr {target_fpr} outside (0, 0.5]")));
    }
    Ok(())
}

/// Score threshold `tau` such that a null score exceeds it with probability `target_fpr`.
pub fn calibrate_threshold(payload_len: usize, target_fpr: f64, method: CalibrationMethod) -> Result<f64> {
    check_calibration_args(payload_len, target_fpr)?;
    match method {
        CalibrationMethod::Analytic => {
            let dof = (payload_len - 2) as f64;
            let t_dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Config(e.to_string()))?;
            let t = t_dist.inverse_cdf(1.0 - target_fpr);
            Ok(t / (dof + t * t).sqrt())
        }
        CalibrationMethod::MonteCarlo { trials, seed } => {
            if (trials as f64) * target_fpr < 100.0 {
                return Err(Error::CalibrationPrecision { trials, fpr: target_fpr });
            }
            let mut scores = null_scores(payload_len, trials, seed)?;
            scores.sort_by(f64::total_cmp);
            let exceed = (target_fpr * trials as f64).round() as usize;
            Ok(scores[trials - exceed - 1])
        }
    }
}

/// Pearson scores between a fixed random vector and fresh IID normal vectors.
pub fn null_scores(payload_len: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed: Vec<f64> = (0..payload_len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let fixed = normalize_unit(&fixed)?;
    const CHUNK: usize = 1024;
    let chunks: Vec<Vec<f64>> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (chunk as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
            let count = CHUNK.min(trials - chunk * CHUNK);
            let mut sample = vec![0.0; payload_len];
            (0..count)
                .map(|_| {
                    sample.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                    pearson(&fixed, &sample).unwrap_or(0.0)
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// One registered user. The watermark is re-derived from the seed on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserEntry {
    pub user_id: u64,
    pub master_seed: MasterSeed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserRegistry {
    entries: Vec<UserEntry>,
}

impl UserRegistry {
    pub fn new(entries: Vec<UserEntry>) -> Result<Self> {
        let mut ids: Vec<u64> = entries.iter().map(|e| e.user_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Config("duplicate user id in registry".into()));
        }
        let mut seeds: Vec<MasterSeed> = entries.iter().map(|e| e.master_seed).collect();
        seeds.sort_unstable();
        if seeds.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Config("duplicate master seed in registry".into()));
        }
        Ok(Self { entries })
    }

    /// Users `0..n` with seeds expanded from `seed_base + id`.
    pub fn synthetic(n: usize, seed_base: u64) -> Self {
        let entries = (0..n as u64)
            .map(|id| UserEntry { user_id: id, master_seed: MasterSeed::from_u64(seed_base.wrapping_add(id)) })
            .collect();
        Self::new(entries).expect("synthetic registry ids and seeds are unique")
    }

    pub fn entries(&self) -> &[UserEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, user_id: u64) -> Option<&UserEntry> {
        self.entries.iter().find(|e| e.user_id == user_id)
    }
}

/// Everything needed to score one user's watermark against latents.
pub struct UserKeyMaterial {
    pub user_id: u64,
    pub watermark: WatermarkVector,
    pub plan: ExtractionPlan,
}

impl UserKeyMaterial {
    pub fn derive(entry: &UserEntry, cfg: &ReplicationConfig, latent_shape: (usize, usize, usize)) -> Result<Self> {
        let dims = cfg.payload_dims(latent_shape)?;
        let watermark = sample_watermark(&entry.master_seed, dims)?;
        let keys = derive_keys(&entry.master_seed, cfg.replica_count(), dims.len())?;
        let plan = ExtractionPlan::new(&keys, cfg, latent_shape)?;
        Ok(Self { user_id: entry.user_id, watermark, plan })
    }

    /// Best score over a set of candidate latents (flattened channel-major, f32).
    pub fn best_score(&self, candidates: &[Vec<f32>]) -> f64 {
        candidates
            .iter()
            .map(|c| self.plan.correlate_flat(c, self.watermark.values()).unwrap_or(0.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub user_id: u64,
    pub score: f64,
}

fn better(candidate: Identification, current: Option<Identification>) -> bool {
    match current {
        None => true,
        Some(cur) => {
            candidate.score > cur.score || (candidate.score == cur.score && candidate.user_id < cur.user_id)
        }
    }
}

/// Argmax of the keyed score over the registry; ties go to the lowest user id.
pub fn identify(z: &LatentTensor, registry: &UserRegistry, cfg: &ReplicationConfig) -> Result<Identification> {
    if registry.is_empty() {
        return Err(Error::Config("identification needs a nonempty registry".into()));
    }
    let dims = cfg.payload_dims(z.shape())?;
    let mut best: Option<Identification> = None;
    for entry in registry.entries() {
        let w = sample_watermark(&entry.master_seed, dims)?;
        let keys = derive_keys(&entry.master_seed, cfg.replica_count(), dims.len())?;
        let s = score(&w, &extract_watermark(z, &keys, cfg)?)?;
        let cand = Identification { user_id: entry.user_id, score: s.value };
        if better(cand, best) {
            best = Some(cand);
        }
    }
    Ok(best.expect("registry is nonempty"))
}

/// Identifies many images at once. Each image contributes a set of candidate
/// latents (e.g. correction branches); a user's score is its best over the set.
/// Users are derived once each and scored against every image.
pub fn identify_batch(
    images: &[Vec<LatentTensor>],
    registry: &UserRegistry,
    cfg: &ReplicationConfig,
) -> Result<Vec<Identification>> {
    if registry.is_empty() {
        return Err(Error::Config("identification needs a nonempty registry".into()));
    }
    let Some(shape) = images.iter().flatten().next().map(|z| z.shape()) else {
        return Ok(Vec::new());
    };
    if images.iter().any(|set| set.is_empty()) {
        return Err(Error::InvalidInput("image with no candidate latents".into()));
    }
    if let Some(bad) = images.iter().flatten().find(|z| z.shape() != shape) {
        return Err(Error::ShapeMismatch(format!("candidate {:?} vs {:?}", bad.shape(), shape)));
    }
    // every candidate of every image, tagged with its image, packed into blocks;
    // blocks stay cache resident while all users sweep over them
    let tagged: Vec<(usize, Vec<f32>)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, set)| set.iter().map(move |z| (i, z.to_values().into_iter().map(|v| v as f32).collect())))
        .collect();
    let users = registry
        .entries()
        .par_iter()
        .map(|entry| UserKeyMaterial::derive(entry, cfg, shape))
        .collect::<Result<Vec<_>>>()?;

    let per_block: Vec<Vec<(usize, Identification)>> = tagged
        .par_chunks(BLOCK)
        .map(|chunk| {
            let flats: Vec<&[f32]> = chunk.iter().map(|(_, f)| f.as_slice()).collect();
            let block = interleave_block(&flats);
            let mut best: Vec<Option<Identification>> = vec![None; chunk.len()];
            for user in &users {
                let scores = user.plan.correlate_block(&block, user.watermark.values());
                for (b, slot) in best.iter_mut().enumerate() {
                    let cand = Identification { user_id: user.user_id, score: scores[b].unwrap_or(0.0) };
                    if better(cand, *slot) {
                        *slot = Some(cand);
                    }
                }
            }
            chunk.iter().map(|(i, _)| *i).zip(best.into_iter().map(|b| b.expect("registry is nonempty"))).collect()
        })
        .collect();

    let mut out: Vec<Option<Identification>> = vec![None; images.len()];
    for (i, cand) in per_block.into_iter().flatten() {
        if better(cand, out[i]) {
            out[i] = Some(cand);
        }
    }
    Ok(out.into_iter().map(|b| b.expect("every image has a candidate")).collect())
}
