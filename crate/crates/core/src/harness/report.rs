use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{FprCheck, TrialRecord};
use crate::attacks::AttackPipeline;
use crate::channel::ChannelConfig;
use crate::error::Result;

pub const CSV_HEADER: &str = "attack,params,trials,tpr,threshold,mean_score,mean_theta_err_deg,seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Kind of the first attack, `clean` for the unattacked row.
    pub attack: String,
    /// Canonical pipeline text, empty for the clean row.
    pub params: String,
    pub trials: usize,
    pub tpr: f64,
    pub threshold: f64,
    /// Over trials that produced a score.
    pub mean_score: f64,
    /// Only when the pipeline has a known rotation.
    pub mean_theta_err_deg: Option<f64>,
    /// Fraction of trials with `|theta error| <= 1`.
    pub theta_within_1deg: Option<f64>,
    pub errors: usize,
    pub seconds: f64,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ReportRow {
    pub fn from_records(attacks: Option<&AttackPipeline>, threshold: f64, records: &[TrialRecord], seconds: f64) -> Self {
        let scores: Vec<f64> = records.iter().filter_map(|r| r.score).collect();
        let theta: Vec<f64> = records.iter().filter_map(|r| r.theta_error_deg).collect();
        let rotation_known = attacks.and_then(AttackPipeline::rotation).is_some();
        let n = records.len();
        Self {
            attack: attacks.map(|p| p.attacks()[0].name().to_string()).unwrap_or_else(|| "clean".into()),
            params: attacks.map(|p| p.to_string()).unwrap_or_default(),
            trials: n,
            tpr: records.iter().filter(|r| r.detected).count() as f64 / n.max(1) as f64,
            threshold,
            mean_score: mean(&scores).unwrap_or(f64::NAN),
            // trials without an estimate count as misses for the 1-degree rate
            mean_theta_err_deg: if rotation_known { mean(&theta) } else { None },
            theta_within_1deg: rotation_known
                .then(|| theta.iter().filter(|&&e| e <= 1.0).count() as f64 / n.max(1) as f64),
            errors: records.iter().filter(|r| r.error.is_some()).count(),
            seconds,
        }
    }

    pub fn csv_line(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        format!(
            "{},{},{},{:.4},{:.6},{:.4},{},{:.2}",
            quote(&self.attack),
            quote(&self.params),
            self.trials,
            self.tpr,
            self.threshold,
            self.mean_score,
            self.mean_theta_err_deg.map(|e| format!("{e:.3}")).unwrap_or_default(),
            self.seconds
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub threshold: f64,
    pub rows: Vec<ReportRow>,
    /// Unweighted mean TPR over attacked rows; the clean row is excluded.
    pub mean_attacked_tpr: Option<f64>,
    pub fpr_check: Option<FprCheck>,
    pub seed_rule: String,
}

impl Report {
    pub fn new(config: ExperimentConfig, threshold: f64, rows: Vec<ReportRow>, fpr_check: Option<FprCheck>) -> Self {
        let attacked: Vec<f64> = rows.iter().filter(|r| !r.params.is_empty()).map(|r| r.tpr).collect();
        Self {
            config,
            threshold,
            mean_attacked_tpr: mean(&attacked),
            rows,
            fpr_check,
            seed_rule: "trial i uses MasterSeed::from_u64(trial_seed(seed_base, i)); channel noise seed is that \
                        value xor a fixed stream tag; rows share trial seeds"
                .into(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.csv` and the `<stem>.json` sidecar.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::write(out.with_extension("csv"), self.to_csv())?;
        std::fs::write(out.with_extension("json"), self.to_json())?;
        Ok(())
    }

    /// Plain-text summary for terminals.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let name = if r.params.is_empty() { "clean" } else { &r.params };
            let _ = write!(s, "{name:<48} tpr {:.3}  mean score {:.4}", r.tpr, r.mean_score);
            if let Some(e) = r.mean_theta_err_deg {
                let _ = write!(s, "  theta err {e:.2}");
            }
            s.push('\n');
        }
        if let Some(m) = self.mean_attacked_tpr {
            let _ = writeln!(s, "unweighted mean attacked tpr {m:.3}");
        }
        if let Some(f) = &self.fpr_check {
            let _ = writeln!(
                s,
                "fpr check: {}/{} false positives (accept {}..={}) {}",
                f.false_positives,
                f.negatives,
                f.acceptance.0,
                f.acceptance.1,
                if f.within { "ok" } else { "OUTSIDE" }
            );
        }
        s
    }
}

/// Score histogram in gnuplot-friendly `bin_center count` lines.
pub fn score_histogram(records: &[TrialRecord], bins: usize) -> String {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for s in records.iter().filter_map(|r| r.score) {
        let i = (((s + 1.0) / 2.0) * bins as f64).floor().clamp(0.0, bins as f64 - 1.0) as usize;
        counts[i] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{:.4} {c}\n", -1.0 + (i as f64 + 0.5) * 2.0 / bins as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub users: usize,
    pub images_per_user: usize,
    pub images: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub attacks: Option<String>,
    pub channel: ChannelConfig,
    pub seed_base: u64,
    pub seconds: f64,
}
