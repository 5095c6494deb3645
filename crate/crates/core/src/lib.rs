//! Device-activity detection for grant-free random access in massive MIMO
//! with partial channel state information.
//!
//! A base station with `M` antennas observes a length-`T` preamble block in
//! which an unknown subset of `K` known devices transmit simultaneously. Each
//! device `k` is described by a complex activity indicator
//! `gamma_k = sqrt(rho_k) * a_k * exp(j phi_k)`; the channel decomposes into a
//! known part `g` and an unknown residual scaled by `lambda_k`. The modules
//! cover:
//!
//! * [`model`] — pilots, channels, activity and received-block synthesis,
//!   per-device SNR and channel correlation.
//! * [`covariance`] — the T x T preamble covariance, its inverse maintained
//!   through rank-one downdates/updates, and the aggregate log-likelihood.
//! * [`detector`] — cyclic coordinate-descent maximum-likelihood estimation
//!   of the activity indicators (amplitude via a cubic, phase in closed form).
//! * [`init`] — zero, zero-forcing, LMMSE, matched-filter and genie
//!   initializers for the iterative detector.
//! * [`decision`] — per-device activity thresholds, miss-detection /
//!   false-alarm rates, ROC sweeps and MSE.
//! * [`montecarlo`] — seeded, trial-parallel experiments (convergence,
//!   CSI-quality sweep, SNR sweep).

pub mod covariance;
pub mod decision;
pub mod detector;
pub mod init;
pub mod model;
pub mod montecarlo;

mod cubic;

use num_complex::Complex64;

/// Dynamically sized complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dynamically sized complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
