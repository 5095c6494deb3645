//! Activity decisions and error metrics: per-device thresholds, detected
//! sets, miss-detection / false-alarm rates, ROC sweeps over the threshold
//! scale, and the estimation MSE.

use std::collections::BTreeSet;

use crate::CVector;

/// Detection outcome for one configuration of estimate and threshold.
#[derive(Debug, Clone)]
pub struct DetectionReport {
    /// Devices declared active.
    pub estimated_active: BTreeSet<usize>,
    /// Probability of miss detection in [0, 1].
    pub p_md: f64,
    /// Probability of false alarm in [0, 1].
    pub p_fa: f64,
    /// Threshold scale in dB that produced this report.
    pub v_db: f64,
    /// Mean squared error of the activity estimate, when ground truth known.
    pub mse: f64,
}

impl DetectionReport {
    /// Thresholds an estimate at `v_db` and scores it against ground truth.
    pub fn evaluate(
        gamma_hat: &CVector,
        gamma_true: &CVector,
        true_active: &BTreeSet<usize>,
        snr_per_device: &[f64],
        v_db: f64,
    ) -> Self {
        let thresholds: Vec<f64> = snr_per_device
            .iter()
            .map(|&s| threshold_for(v_db, s))
            .collect();
        let estimated_active = detect(gamma_hat, &thresholds);
        let (p_md, p_fa) = rates(true_active, &estimated_active, gamma_hat.len());
        DetectionReport {
            estimated_active,
            p_md,
            p_fa,
            v_db,
            mse: mse(gamma_hat, gamma_true),
        }
    }
}

/// One aggregated point of an ROC sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub v_db: f64,
    pub p_md: f64,
    pub p_fa: f64,
}

/// Default threshold sweep: 81 points, 1 dB apart, over [-40, 40] dB.
pub fn default_v_grid_db() -> Vec<f64> {
    (0..81).map(|i| -40.0 + i as f64).collect()
}

/// Per-device activity threshold `v / sqrt(SNR_k)` with `v = 10^(v_db / 20)`
/// (amplitude-scale decibels).
pub fn threshold_for(v_db: f64, snr_k: f64) -> f64 {
    10f64.powf(v_db / 20.0) / snr_k.sqrt()
}

/// Devices whose estimated amplitude reaches their threshold:
/// `{k : |gamma_hat_k| >= threshold_k}`.
pub fn detect(gamma_hat: &CVector, thresholds: &[f64]) -> BTreeSet<usize> {
    assert_eq!(gamma_hat.len(), thresholds.len(), "length mismatch");
    gamma_hat
        .iter()
        .zip(thresholds)
        .enumerate()
        .filter_map(|(k, (g, &th))| (g.norm() >= th).then_some(k))
        .collect()
}

/// Miss-detection and false-alarm rates of an estimated active set.
///
/// `p_md = 1 - |true ∩ est| / |true|` and `p_fa = |est \ true| / (K - |true|)`.
/// Degenerate denominators follow the convention: no active devices means
/// p_md = 0, all devices active means p_fa = 0.
pub fn rates(
    true_active: &BTreeSet<usize>,
    estimated_active: &BTreeSet<usize>,
    k: usize,
) -> (f64, f64) {
    let n_active = true_active.len();
    let hits = true_active.intersection(estimated_active).count();
    let false_alarms = estimated_active.difference(true_active).count();
    let p_md = if n_active == 0 {
        0.0
    } else {
        1.0 - hits as f64 / n_active as f64
    };
    let p_fa = if n_active == k {
        0.0
    } else {
        false_alarms as f64 / (k - n_active) as f64
    };
    (p_md, p_fa)
}

/// ROC sweep: applies the per-device thresholds at every grid value of v and
/// averages the per-trial rates.
///
/// `snr_per_device` holds the realization-specific per-device SNRs of each
/// trial (they depend on the drawn CSI).
pub fn roc(
    gamma_hat_trials: &[CVector],
    true_sets: &[BTreeSet<usize>],
    snr_per_device: &[Vec<f64>],
    v_grid_db: &[f64],
) -> Vec<RocPoint> {
    assert_eq!(gamma_hat_trials.len(), true_sets.len());
    assert_eq!(gamma_hat_trials.len(), snr_per_device.len());
    let n_trials = gamma_hat_trials.len();
    let mut points = Vec::with_capacity(v_grid_db.len());
    for &v_db in v_grid_db {
        let mut sum_md = 0.0;
        let mut sum_fa = 0.0;
        for ((gamma_hat, truth), snr) in gamma_hat_trials.iter().zip(true_sets).zip(snr_per_device)
        {
            let thresholds: Vec<f64> = snr.iter().map(|&s| threshold_for(v_db, s)).collect();
            let detected = detect(gamma_hat, &thresholds);
            let (p_md, p_fa) = rates(truth, &detected, gamma_hat.len());
            sum_md += p_md;
            sum_fa += p_fa;
        }
        points.push(RocPoint {
            v_db,
            p_md: sum_md / n_trials as f64,
            p_fa: sum_fa / n_trials as f64,
        });
    }
    points
}

/// Mean squared error `(1/K) sum_k |gamma_hat_k - gamma_k|^2`.
pub fn mse(gamma_hat: &CVector, gamma_true: &CVector) -> f64 {
    assert_eq!(gamma_hat.len(), gamma_true.len(), "length mismatch");
    (gamma_hat - gamma_true).norm_squared() / gamma_hat.len() as f64
}

/// Miss-detection probability at a target false-alarm probability, read off
/// an ROC curve.
///
/// p_fa is non-increasing in v, so the curve is scanned for the bracket
/// containing the target and p_md is interpolated linearly in log(p_fa)
/// (falling back to linear interpolation when a bracket endpoint is zero).
/// Targets outside the curve's range clamp to the nearest endpoint.
pub fn pmd_at_target_pfa(curve: &[RocPoint], target_pfa: f64) -> f64 {
    assert!(!curve.is_empty(), "empty ROC curve");
    assert!(target_pfa > 0.0 && target_pfa < 1.0, "target out of (0, 1)");
    // Order by descending p_fa (ascending v).
    let mut pts: Vec<&RocPoint> = curve.iter().collect();
    pts.sort_by(|a, b| a.v_db.partial_cmp(&b.v_db).unwrap());

    if target_pfa >= pts[0].p_fa {
        return pts[0].p_md;
    }
    if target_pfa <= pts.last().unwrap().p_fa {
        return pts.last().unwrap().p_md;
    }
    for pair in pts.windows(2) {
        let (hi, lo) = (pair[0], pair[1]);
        if hi.p_fa >= target_pfa && target_pfa >= lo.p_fa {
            if hi.p_fa == lo.p_fa {
                return 0.5 * (hi.p_md + lo.p_md);
            }
            let w = if lo.p_fa > 0.0 {
                (target_pfa.ln() - lo.p_fa.ln()) / (hi.p_fa.ln() - lo.p_fa.ln())
            } else {
                (target_pfa - lo.p_fa) / (hi.p_fa - lo.p_fa)
            };
            return lo.p_md + w * (hi.p_md - lo.p_md);
        }
    }
    pts.last().unwrap().p_md
}
