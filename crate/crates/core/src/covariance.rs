//! The T x T preamble covariance
//! `C = sum_k lambda_k^2 |gamma_k|^2 s_k s_k^H + sigma^2 I`, its inverse
//! maintained through Sherman-Morrison rank-one downdates/updates, a running
//! log-determinant kept consistent via the matrix-determinant lemma, and the
//! aggregate log-likelihood of a received block.
//!
//! Removing device k' from C subtracts a rank-one term; the downdate
//! denominator `1 - w s^H C^-1 s` is mathematically positive but can cancel
//! numerically, in which case [`downdate_inverse`] reports
//! [`CovarianceError::DenominatorUnderflow`] and the caller falls back to a
//! direct inversion of the reconstructed matrix.

use nalgebra::Cholesky;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ChannelSet, PilotMatrix, ReceivedBlock};
use crate::{CMatrix, CVector};

/// Scale factor for the downdate denominator guard; the guard threshold is
/// `DENOMINATOR_GUARD_SCALE / sigma^2`.
pub const DENOMINATOR_GUARD_SCALE: f64 = 1e-12;

/// Errors from covariance construction and rank-one maintenance.
#[derive(Debug, Error)]
pub enum CovarianceError {
    #[error("non-finite input to covariance construction")]
    NonFinite,
    #[error("covariance not positive definite (degenerate input)")]
    NotPositiveDefinite,
    #[error("rank-one downdate denominator {denominator} at or below guard {guard}")]
    DenominatorUnderflow { denominator: f64, guard: f64 },
}

/// Maintained inverse and log-determinant of the preamble covariance.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    /// Current C^-1, kept Hermitian by symmetrization after each update.
    pub c_inv: CMatrix,
    /// Current ln |C|.
    pub log_det_c: f64,
    /// Noise variance sigma^2.
    pub sigma2: f64,
    /// Rank-one updates applied since the last direct recomputation.
    pub refresh_counter: usize,
}

impl CovarianceState {
    /// Preamble length T.
    pub fn t(&self) -> usize {
        self.c_inv.nrows()
    }

    /// Downdate denominator guard for this state.
    pub fn denominator_guard(&self) -> f64 {
        DENOMINATOR_GUARD_SCALE / self.sigma2
    }
}

/// Forces exact Hermitian symmetry, `(a + a^H) / 2`.
fn symmetrize(a: &mut CMatrix) {
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
}

/// Builds C directly from the activity amplitudes.
fn build_c(gamma: &CVector, lambda_k: &[f64], pilots: &PilotMatrix, sigma2: f64) -> CMatrix {
    let t = pilots.t();
    let mut c = CMatrix::from_diagonal_element(t, t, Complex64::new(sigma2, 0.0));
    for dev in 0..pilots.k() {
        let weight = lambda_k[dev] * lambda_k[dev] * gamma[dev].norm_sqr();
        if weight > 0.0 {
            c.gerc(
                Complex64::new(weight, 0.0),
                &pilots.pilot(dev),
                &pilots.pilot(dev),
                Complex64::ONE,
            );
        }
    }
    c
}

/// Hermitian inverse and log-determinant by Cholesky factorization.
fn invert_hermitian(c: CMatrix) -> Result<(CMatrix, f64), CovarianceError> {
    let t = c.nrows();
    let chol = Cholesky::new(c).ok_or(CovarianceError::NotPositiveDefinite)?;
    let log_det = (0..t).map(|i| 2.0 * chol.l_dirty()[(i, i)].re.ln()).sum();
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok((inv, log_det))
}

/// Constructs the covariance state for the given activity vector.
///
/// C is assembled directly from its definition and inverted with a Cholesky
/// factorization; the log-determinant comes from the factor diagonal.
pub fn build_covariance(
    gamma: &CVector,
    lambda_k: &[f64],
    pilots: &PilotMatrix,
    sigma2: f64,
) -> Result<CovarianceState, CovarianceError> {
    if !sigma2.is_finite()
        || sigma2 <= 0.0
        || gamma.iter().any(|g| !g.re.is_finite() || !g.im.is_finite())
        || lambda_k.iter().any(|l| !l.is_finite())
    {
        return Err(CovarianceError::NonFinite);
    }
    let c = build_c(gamma, lambda_k, pilots, sigma2);
    let (c_inv, log_det_c) = invert_hermitian(c)?;
    Ok(CovarianceState {
        c_inv,
        log_det_c,
        sigma2,
        refresh_counter: 0,
    })
}

/// Inverse and log-determinant with one device's rank-one term removed.
#[derive(Debug, Clone)]
pub struct Downdated {
    /// C^-1 with device k' removed.
    pub c_minus_inv: CMatrix,
    /// ln |C| with device k' removed.
    pub log_det_minus: f64,
}

/// Removes the rank-one contribution of device k' from the maintained
/// inverse:
///
/// `C_minus^-1 = C^-1 + w (C^-1 s)(C^-1 s)^H / (1 - w s^H C^-1 s)` with
/// `w = lambda^2 |gamma|^2`, and `ln|C_minus| = ln|C| + ln(1 - w s^H C^-1 s)`.
pub fn downdate_inverse(
    state: &CovarianceState,
    lambda: f64,
    gamma: Complex64,
    pilot: &nalgebra::DVectorView<'_, Complex64>,
) -> Result<Downdated, CovarianceError> {
    let weight = lambda * lambda * gamma.norm_sqr();
    if weight == 0.0 {
        return Ok(Downdated {
            c_minus_inv: state.c_inv.clone(),
            log_det_minus: state.log_det_c,
        });
    }
    let u = &state.c_inv * pilot;
    let quad = pilot.dotc(&u).re;
    let denominator = 1.0 - weight * quad;
    let guard = state.denominator_guard();
    if denominator <= guard {
        return Err(CovarianceError::DenominatorUnderflow { denominator, guard });
    }
    let mut c_minus_inv = state.c_inv.clone();
    c_minus_inv.gerc(
        Complex64::new(weight / denominator, 0.0),
        &u,
        &u,
        Complex64::ONE,
    );
    symmetrize(&mut c_minus_inv);
    Ok(Downdated {
        c_minus_inv,
        log_det_minus: state.log_det_c + denominator.ln(),
    })
}

/// Re-inserts device k' with a new amplitude:
///
/// `C^-1 = C_minus^-1 - w (C_minus^-1 s)(C_minus^-1 s)^H /
/// (1 + w s^H C_minus^-1 s)` with `w = r_new^2 lambda^2`, and
/// `ln|C| = ln|C_minus| + ln(1 + w s^H C_minus^-1 s)`. The denominator is
/// always >= 1, so this direction cannot fail.
pub fn update_inverse(
    downdated: &Downdated,
    r_new: f64,
    lambda: f64,
    pilot: &nalgebra::DVectorView<'_, Complex64>,
) -> (CMatrix, f64) {
    let weight = r_new * r_new * lambda * lambda;
    if weight == 0.0 {
        return (downdated.c_minus_inv.clone(), downdated.log_det_minus);
    }
    let u = &downdated.c_minus_inv * pilot;
    let quad = pilot.dotc(&u).re;
    let denominator = 1.0 + weight * quad;
    let mut c_inv = downdated.c_minus_inv.clone();
    c_inv.gerc(
        Complex64::new(-weight / denominator, 0.0),
        &u,
        &u,
        Complex64::ONE,
    );
    symmetrize(&mut c_inv);
    (c_inv, downdated.log_det_minus + denominator.ln())
}

/// Rebuilds C from scratch, re-inverts directly and resets the refresh
/// counter. Used once per detector sweep to bound accumulated drift from the
/// rank-one updates.
pub fn refresh(
    state: &mut CovarianceState,
    gamma: &CVector,
    lambda_k: &[f64],
    pilots: &PilotMatrix,
) -> Result<(), CovarianceError> {
    let rebuilt = build_covariance(gamma, lambda_k, pilots, state.sigma2)?;
    state.c_inv = rebuilt.c_inv;
    state.log_det_c = rebuilt.log_det_c;
    state.refresh_counter = 0;
    Ok(())
}

/// Mean received matrix `sum_k g_{k,m} gamma_k s_k` per antenna (T x M).
pub(crate) fn mean_matrix(gamma: &CVector, g: &CMatrix, pilots: &PilotMatrix) -> CMatrix {
    let (k, m) = (g.nrows(), g.ncols());
    let mut weighted_g = CMatrix::zeros(k, m);
    for dev in 0..k {
        let gd = gamma[dev];
        if gd != Complex64::ZERO {
            for ant in 0..m {
                weighted_g[(dev, ant)] = g[(dev, ant)] * gd;
            }
        }
    }
    &pilots.symbols * weighted_g
}

/// Quadratic-form part of the likelihood, `sum_m theta_m^H C^-1 theta_m`,
/// where theta is the T x M matrix of per-antenna residuals.
pub(crate) fn quadratic_form(c_inv: &CMatrix, theta: &CMatrix) -> f64 {
    let tmp = c_inv * theta;
    theta
        .iter()
        .zip(tmp.iter())
        .map(|(a, b)| (a.conj() * b).re)
        .sum()
}

/// Log-likelihood of the received block under the given activity vector:
///
/// `-M ln|C| - M T ln(pi) - sum_m theta_m^H C^-1 theta_m` with
/// `theta_m = y_m - sum_k g_{k,m} s_k gamma_k`, using the inverse and
/// log-determinant maintained in `state`.
pub fn log_likelihood(
    received: &ReceivedBlock,
    gamma: &CVector,
    partial_csi: &ChannelSet,
    pilots: &PilotMatrix,
    state: &CovarianceState,
) -> f64 {
    let m = received.m() as f64;
    let t = received.t() as f64;
    let theta = &received.y - mean_matrix(gamma, &partial_csi.g, pilots);
    -m * state.log_det_c - m * t * std::f64::consts::PI.ln() - quadratic_form(&state.c_inv, &theta)
}
