//! Independent oracles and statistics helpers for the acceptance suite.
//!
//! The likelihood oracle and the 2-D objective search are written against
//! the model definitions with explicit loops and LU factorizations, sharing
//! no code path with the maintained Sherman-Morrison machinery they check.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use grantfree_core::model::{ChannelSet, PilotMatrix, ReceivedBlock};
use grantfree_core::montecarlo::TrialResult;
use grantfree_core::{CMatrix, CVector};

/// Explicit covariance build: `sum_k lambda_k^2 |gamma_k|^2 s_k s_k^H +
/// sigma^2 I`, entry by entry.
pub fn dense_c(gamma: &CVector, lambda: &[f64], pilots: &PilotMatrix, sigma2: f64) -> CMatrix {
    let t = pilots.t();
    let mut c = DMatrix::zeros(t, t);
    for i in 0..t {
        c[(i, i)] = Complex64::new(sigma2, 0.0);
    }
    for dev in 0..pilots.k() {
        let w = lambda[dev] * lambda[dev] * gamma[dev].norm_sqr();
        if w == 0.0 {
            continue;
        }
        for i in 0..t {
            for j in 0..t {
                c[(i, j)] += pilots.entry(dev, i) * pilots.entry(dev, j).conj() * w;
            }
        }
    }
    c
}

/// Dense log-likelihood: explicit means, LU determinant and LU solves.
pub fn dense_log_likelihood(
    received: &ReceivedBlock,
    gamma: &CVector,
    channels: &ChannelSet,
    pilots: &PilotMatrix,
) -> f64 {
    let (k, m, t) = (pilots.k(), received.m(), received.t());
    let c = dense_c(gamma, &channels.lambda_k, pilots, received.sigma2);
    let lu = c.lu();
    let log_det = lu.determinant().re.ln();
    let mut quad = 0.0;
    for ant in 0..m {
        let mut theta = DVector::zeros(t);
        for sym in 0..t {
            let mut mean = Complex64::ZERO;
            for dev in 0..k {
                mean += channels.g[(dev, ant)] * pilots.entry(dev, sym) * gamma[dev];
            }
            theta[sym] = received.y[(sym, ant)] - mean;
        }
        let solved = lu.solve(&theta).expect("C is positive definite");
        quad += theta.dotc(&solved).re;
    }
    -(m as f64) * log_det - (m as f64) * (t as f64) * std::f64::consts::PI.ln() - quad
}

/// Dense per-device objective `f(r, phi)` for device `k_prime` given the
/// current estimates of the other devices (constant terms included).
pub struct DeviceObjective {
    /// Residuals after cancelling the other devices, one column per antenna.
    residual: CMatrix,
    /// Covariance with device k' removed.
    c_minus: CMatrix,
    pilot: CVector,
    csi: CVector,
    lambda: f64,
    m: usize,
}

impl DeviceObjective {
    pub fn new(
        received: &ReceivedBlock,
        gamma: &CVector,
        channels: &ChannelSet,
        pilots: &PilotMatrix,
        k_prime: usize,
    ) -> Self {
        let (k, m, t) = (pilots.k(), received.m(), received.t());
        let mut residual = received.y.clone();
        for ant in 0..m {
            for sym in 0..t {
                for dev in 0..k {
                    if dev != k_prime {
                        residual[(sym, ant)] -=
                            channels.g[(dev, ant)] * pilots.entry(dev, sym) * gamma[dev];
                    }
                }
            }
        }
        let mut gamma_minus = gamma.clone();
        gamma_minus[k_prime] = Complex64::ZERO;
        let c_minus = dense_c(&gamma_minus, &channels.lambda_k, pilots, received.sigma2);
        Self {
            residual,
            c_minus,
            pilot: CVector::from_fn(t, |sym, _| pilots.entry(k_prime, sym)),
            csi: CVector::from_fn(m, |ant, _| channels.g[(k_prime, ant)]),
            lambda: channels.lambda_k[k_prime],
            m,
        }
    }

    /// Evaluates `-M ln|C(r)| - sum_m (y - g s r e^{j phi})^H C(r)^-1 (...)`.
    pub fn eval(&self, r: f64, phi: f64) -> f64 {
        let t = self.pilot.len();
        let mut c = self.c_minus.clone();
        let w = self.lambda * self.lambda * r * r;
        for i in 0..t {
            for j in 0..t {
                c[(i, j)] += self.pilot[i] * self.pilot[j].conj() * w;
            }
        }
        let lu = c.lu();
        let log_det = lu.determinant().re.ln();
        let gk = Complex64::from_polar(r, phi);
        let mut quad = 0.0;
        for ant in 0..self.m {
            let mut theta = DVector::zeros(t);
            for sym in 0..t {
                theta[sym] = self.residual[(sym, ant)] - self.csi[ant] * self.pilot[sym] * gk;
            }
            let solved = lu.solve(&theta).expect("C is positive definite");
            quad += theta.dotc(&solved).re;
        }
        -(self.m as f64) * log_det - quad
    }

    /// Grid search with successive refinement, returning the maximizing
    /// `(r, phi)`.
    pub fn grid_maximize(&self, r_max: f64) -> (f64, f64) {
        let tau = std::f64::consts::TAU;
        let mut r_lo = 0.0f64;
        let mut r_hi = r_max;
        let mut phi_lo = 0.0f64;
        let mut phi_hi = tau;
        let mut best = (0.0, 0.0);
        for round in 0..4 {
            let (nr, nphi) = if round == 0 { (81, 64) } else { (33, 25) };
            let mut best_val = f64::NEG_INFINITY;
            for i in 0..nr {
                let r = r_lo + (r_hi - r_lo) * i as f64 / (nr - 1) as f64;
                for j in 0..nphi {
                    let phi = phi_lo + (phi_hi - phi_lo) * j as f64 / (nphi - 1) as f64;
                    let val = self.eval(r, phi.rem_euclid(tau));
                    if val > best_val {
                        best_val = val;
                        best = (r, phi.rem_euclid(tau));
                    }
                }
            }
            let r_step = (r_hi - r_lo) / (nr - 1) as f64;
            let phi_step = (phi_hi - phi_lo) / (nphi - 1) as f64;
            r_lo = (best.0 - 1.5 * r_step).max(0.0);
            r_hi = (best.0 + 1.5 * r_step).min(r_max);
            phi_lo = best.1 - 1.5 * phi_step;
            phi_hi = best.1 + 1.5 * phi_step;
        }
        best
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Miss-detection probability at a target false-alarm rate per block of
/// trials, for block-based standard errors of the interpolated statistic.
pub fn block_pmds(
    trials: &[TrialResult],
    label: &str,
    grid: &[f64],
    target_pfa: f64,
    n_blocks: usize,
) -> Vec<f64> {
    let block = trials.len() / n_blocks;
    (0..n_blocks)
        .map(|b| {
            let slice = &trials[b * block..(b + 1) * block];
            let curve = grantfree_core::montecarlo::roc_for_label(slice, label, grid);
            grantfree_core::decision::pmd_at_target_pfa(&curve, target_pfa)
        })
        .collect()
}

/// Total missed and falsely-alarmed device counts at a fixed threshold
/// scale, summed over trials.
pub fn error_counts_at(trials: &[TrialResult], label: &str, v_db: f64) -> (usize, usize) {
    let mut misses = 0;
    let mut alarms = 0;
    for trial in trials {
        let est = trial
            .estimates
            .iter()
            .find(|e| e.detector == label)
            .expect("label present");
        let thresholds: Vec<f64> = est
            .snr
            .iter()
            .map(|&s| grantfree_core::decision::threshold_for(v_db, s))
            .collect();
        let detected = grantfree_core::decision::detect(&est.gamma_hat, &thresholds);
        misses += trial.true_active.difference(&detected).count();
        alarms += detected.difference(&trial.true_active).count();
    }
    (misses, alarms)
}

/// Detected set per (trial, v) for exact nesting checks.
pub fn detected_sets(trial: &TrialResult, label: &str, grid: &[f64]) -> Vec<BTreeSet<usize>> {
    let est = trial
        .estimates
        .iter()
        .find(|e| e.detector == label)
        .expect("label present");
    grid.iter()
        .map(|&v| {
            let thresholds: Vec<f64> = est
                .snr
                .iter()
                .map(|&s| grantfree_core::decision::threshold_for(v, s))
                .collect();
            grantfree_core::decision::detect(&est.gamma_hat, &thresholds)
        })
        .collect()
}
