//! Iterative maximum-likelihood activity detector: cyclic coordinate descent
//! over the per-device activity indicators. Each step removes device k' from
//! the maintained covariance inverse, solves a degree-3 stationarity
//! condition for the amplitude (with linear and no-CSI special cases),
//! estimates the phase in closed form, and re-inserts the device with a
//! rank-one update.

use num_complex::Complex64;

use crate::covariance::{
    self, build_covariance, downdate_inverse, update_inverse, CovarianceError, CovarianceState,
    Downdated,
};
use crate::cubic::solve_cubic;
use crate::model::{ActivityVector, ChannelSet, PilotMatrix, ReceivedBlock};
use crate::{CMatrix, CVector};

/// Dispatch threshold on delta (quadratic-form weight) below which the
/// amplitude update degenerates to the linear, full-CSI form.
pub const EPS_DELTA: f64 = 1e-12;
/// Dispatch threshold on beta (cross-term weight) below which the amplitude
/// update degenerates to the no-CSI form.
pub const EPS_BETA: f64 = 1e-12;
/// Magnitude floor below which the phase argument is treated as
/// underdetermined and the phase estimate is 0.
pub const PHASE_MAGNITUDE_FLOOR: f64 = 1e-300;

/// Known-CSI view handed to the detector: the known channel part and the
/// per-device uncertainty scales, never the true channels.
#[derive(Debug, Clone, Copy)]
pub struct PartialCsi<'a> {
    /// K x M known channel part g.
    pub g: &'a CMatrix,
    /// Per-device uncertainty scales lambda_k.
    pub lambda: &'a [f64],
}

impl<'a> PartialCsi<'a> {
    pub fn from_channels(channels: &'a ChannelSet) -> Self {
        Self {
            g: &channels.g,
            lambda: &channels.lambda_k,
        }
    }
}

/// Device visit order for the coordinate sweeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DeviceOrdering {
    /// Devices 0..K-1 in index order, every sweep.
    #[default]
    Cyclic,
}

/// Detector options.
#[derive(Debug, Clone, Default)]
pub struct DetectorOptions {
    /// Full passes over all K devices.
    pub n_sweeps: usize,
    /// Early stop when the largest per-device change over a full sweep falls
    /// below this; None runs all sweeps.
    pub early_stop_tol: Option<f64>,
    /// Device visit order.
    pub ordering: DeviceOrdering,
    /// Record per-update log-likelihood (and MSE when a reference is given).
    pub trace: bool,
    /// Rebuild the covariance inverse directly between sweeps to bound
    /// rank-one drift.
    pub refresh_every_sweep: bool,
    /// Ground-truth activity vector for the trace MSE column.
    pub mse_reference: Option<CVector>,
}

impl DetectorOptions {
    /// Standard settings: 4 sweeps, no early stop, per-sweep refresh, no
    /// trace.
    pub fn standard() -> Self {
        Self {
            n_sweeps: 4,
            early_stop_tol: None,
            ordering: DeviceOrdering::Cyclic,
            trace: false,
            refresh_every_sweep: true,
            mse_reference: None,
        }
    }

    pub fn with_sweeps(mut self, n_sweeps: usize) -> Self {
        self.n_sweeps = n_sweeps;
        self
    }

    pub fn with_trace(mut self, reference: Option<CVector>) -> Self {
        self.trace = true;
        self.mse_reference = reference;
        self
    }
}

/// Constants of the amplitude objective
/// `-M ln(1 + delta r^2) + (alpha r^2 + beta r) / (1 + delta r^2)`.
///
/// Named `beta_c` / `delta_c` to avoid collision with the large-scale fading
/// coefficients.
#[derive(Debug, Clone, Copy)]
pub struct CubicConstants {
    pub alpha: f64,
    /// Twice an absolute value, hence >= 0.
    pub beta_c: f64,
    /// Quadratic form in a positive-definite matrix times lambda^2, >= 0.
    pub delta_c: f64,
}

/// One trace record: which device was updated and the log-likelihood (and
/// optionally MSE against ground truth) after the update. The first record
/// has `device = None` and describes the initial point.
#[derive(Debug, Clone, Copy)]
pub struct TraceEntry {
    pub device: Option<usize>,
    pub log_likelihood: f64,
    pub mse: Option<f64>,
}

/// Counters for numerical fallbacks taken during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FallbackCounters {
    /// Downdate denominator underflows resolved by direct re-inversion.
    pub direct_inversions: u64,
    /// Amplitude updates where an epsilon threshold (not an exact zero)
    /// forced a special-case dispatch.
    pub degenerate_cubics: u64,
}

impl FallbackCounters {
    pub fn merge(&mut self, other: &FallbackCounters) {
        self.direct_inversions += other.direct_inversions;
        self.degenerate_cubics += other.degenerate_cubics;
    }
}

/// Per-run trace and diagnostics.
#[derive(Debug, Clone, Default)]
pub struct DetectorTrace {
    /// Per-update records; empty when tracing is off.
    pub entries: Vec<TraceEntry>,
    /// Sweeps actually executed (early stop can cut this short).
    pub sweeps_completed: usize,
    /// Numerical-fallback counters for the run.
    pub fallbacks: FallbackCounters,
}

/// Interference-cancelled residuals for device k':
/// `y_{k',m} = y_m - sum_{k != k'} g_{k,m} s_k gamma_k`, one column per
/// antenna.
pub fn residual(
    received: &ReceivedBlock,
    gamma: &CVector,
    partial_csi: &PartialCsi<'_>,
    pilots: &PilotMatrix,
    k_prime: usize,
) -> CMatrix {
    let mut gamma_minus = gamma.clone();
    gamma_minus[k_prime] = Complex64::ZERO;
    &received.y - covariance::mean_matrix(&gamma_minus, partial_csi.g, pilots)
}

/// Evaluates the three amplitude-objective constants for device k' given the
/// interference-cancelled residuals and the covariance inverse with device
/// k' removed. `csi_k` is the length-M known CSI of device k'.
pub fn cubic_constants(
    residuals: &CMatrix,
    c_minus_inv: &CMatrix,
    pilot: &nalgebra::DVectorView<'_, Complex64>,
    csi_k: &CVector,
    lambda: f64,
) -> CubicConstants {
    let m = residuals.ncols();
    let u = c_minus_inv * pilot;
    let quad = pilot.dotc(&u).re;

    let mut sum_z_sq = 0.0;
    let mut cross = Complex64::ZERO;
    let mut csi_energy = 0.0;
    for ant in 0..m {
        // z = y_{k',m}^H C_minus^-1 s.
        let z = residuals.column(ant).dotc(&u);
        sum_z_sq += z.norm_sqr();
        cross += z * csi_k[ant];
        csi_energy += csi_k[ant].norm_sqr();
    }

    CubicConstants {
        alpha: lambda * lambda * sum_z_sq - quad * csi_energy,
        beta_c: 2.0 * cross.norm(),
        delta_c: lambda * lambda * quad,
    }
}

/// Amplitude objective at r, including the log-determinant carried over from
/// the device-removed covariance:
/// `-M (ln|C_minus| + ln(1 + delta r^2)) + (alpha r^2 + beta r) /
/// (1 + delta r^2)`.
pub fn objective_amplitude(
    r: f64,
    constants: &CubicConstants,
    m_antennas: usize,
    log_det_minus: f64,
) -> f64 {
    -(m_antennas as f64) * log_det_minus + amplitude_score(r, constants, m_antennas)
}

/// The r-dependent part of [`objective_amplitude`]; the argmax over r is the
/// same.
fn amplitude_score(r: f64, constants: &CubicConstants, m_antennas: usize) -> f64 {
    let r2 = r * r;
    let denom = 1.0 + constants.delta_c * r2;
    -(m_antennas as f64) * (constants.delta_c * r2).ln_1p()
        + (constants.alpha * r2 + constants.beta_c * r) / denom
}

/// Coefficients `[c3, c2, c1, c0]` of the amplitude stationarity cubic
/// `0 = -2 M delta^2 r^3 - beta delta r^2 + (2 alpha - 2 M delta) r + beta`.
pub fn amplitude_cubic_coefficients(constants: &CubicConstants, m_antennas: usize) -> [f64; 4] {
    let m = m_antennas as f64;
    let CubicConstants {
        alpha,
        beta_c,
        delta_c,
    } = *constants;
    [
        -2.0 * m * delta_c * delta_c,
        -beta_c * delta_c,
        2.0 * alpha - 2.0 * m * delta_c,
        beta_c,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AmplitudeCase {
    /// delta below threshold: linear stationarity condition.
    Linear { degenerate: bool },
    /// beta below threshold: no-CSI closed form.
    NoCsi { degenerate: bool },
    /// Full cubic.
    General,
}

fn solve_amplitude_with_case(
    constants: &CubicConstants,
    m_antennas: usize,
) -> (f64, AmplitudeCase) {
    let CubicConstants {
        alpha,
        beta_c,
        delta_c,
    } = *constants;
    let m = m_antennas as f64;

    if delta_c <= EPS_DELTA {
        let r = if alpha >= 0.0 {
            0.0
        } else {
            (-beta_c / (2.0 * alpha)).max(0.0)
        };
        return (
            r,
            AmplitudeCase::Linear {
                degenerate: delta_c > 0.0,
            },
        );
    }
    if beta_c <= EPS_BETA {
        let radicand = (alpha - m * delta_c) / (m * delta_c * delta_c);
        let r = if radicand > 0.0 { radicand.sqrt() } else { 0.0 };
        return (
            r,
            AmplitudeCase::NoCsi {
                degenerate: beta_c > 0.0,
            },
        );
    }

    let [c3, c2, c1, c0] = amplitude_cubic_coefficients(constants, m_antennas);
    let roots = solve_cubic(c3, c2, c1, c0);
    let mut best_r = 0.0;
    let mut best_score = amplitude_score(0.0, constants, m_antennas);
    for &root in roots.as_slice() {
        if root > 0.0 && root.is_finite() {
            let score = amplitude_score(root, constants, m_antennas);
            if score > best_score {
                best_score = score;
                best_r = root;
            }
        }
    }
    (best_r, AmplitudeCase::General)
}

/// Maximizing amplitude of the per-device objective.
///
/// Dispatches on the constants: `delta <= EPS_DELTA` uses the linear form
/// `max(0, -beta / (2 alpha))`; `beta <= EPS_BETA` uses the no-CSI form
/// `sqrt((alpha - M delta) / (M delta^2))` (0 when the radicand is not
/// positive); otherwise all nonnegative real roots of the cubic plus r = 0
/// are scored and the argmax returned.
pub fn solve_amplitude(constants: &CubicConstants, m_antennas: usize) -> f64 {
    solve_amplitude_with_case(constants, m_antennas).0
}

/// Closed-form phase estimate
/// `angle(s^H C^-1 sum_m conj(g_{k',m}) y_{k',m})`, in [0, 2 pi).
///
/// Returns 0 when the argument magnitude is at or below the floor (in
/// particular when the device has no known CSI, where the phase is
/// underdetermined).
pub fn phase_estimate(
    c_inv: &CMatrix,
    pilot: &nalgebra::DVectorView<'_, Complex64>,
    csi_k: &CVector,
    residuals: &CMatrix,
) -> f64 {
    let t = residuals.nrows();
    let mut v = CVector::zeros(t);
    for ant in 0..residuals.ncols() {
        let g_conj = csi_k[ant].conj();
        if g_conj != Complex64::ZERO {
            v.axpy(g_conj, &residuals.column(ant), Complex64::ONE);
        }
    }
    let u = c_inv * pilot;
    let val = u.dotc(&v);
    if val.norm() <= PHASE_MAGNITUDE_FLOOR {
        return 0.0;
    }
    let angle = val.arg();
    if angle < 0.0 {
        angle + std::f64::consts::TAU
    } else {
        angle
    }
}

/// Mutable state of one detector run: current estimate, maintained
/// covariance inverse, and the running interference mean.
#[derive(Debug, Clone)]
pub struct DetectorState<'a> {
    received: &'a ReceivedBlock,
    csi: PartialCsi<'a>,
    pilots: &'a PilotMatrix,
    /// Current activity estimate.
    pub gamma: CVector,
    /// Maintained covariance inverse and log-determinant.
    pub cov: CovarianceState,
    /// Running `sum_k g_{k,m} gamma_k s_k` (T x M), updated incrementally.
    mean: CMatrix,
    /// Scratch residual buffer (T x M).
    resid: CMatrix,
    /// Fallback counters accumulated so far.
    pub fallbacks: FallbackCounters,
}

impl<'a> DetectorState<'a> {
    /// Builds the run state for an initial estimate.
    pub fn new(
        received: &'a ReceivedBlock,
        csi: PartialCsi<'a>,
        pilots: &'a PilotMatrix,
        sigma2: f64,
        init_gamma: CVector,
    ) -> Result<Self, CovarianceError> {
        let cov = build_covariance(&init_gamma, csi.lambda, pilots, sigma2)?;
        let mean = covariance::mean_matrix(&init_gamma, csi.g, pilots);
        let resid = CMatrix::zeros(received.t(), received.m());
        Ok(Self {
            received,
            csi,
            pilots,
            gamma: init_gamma,
            cov,
            mean,
            resid,
            fallbacks: FallbackCounters::default(),
        })
    }

    /// Device count K.
    pub fn k(&self) -> usize {
        self.gamma.len()
    }

    /// Log-likelihood at the current estimate from the maintained state.
    pub fn log_likelihood(&self) -> f64 {
        let m = self.received.m() as f64;
        let t = self.received.t() as f64;
        let theta = &self.received.y - &self.mean;
        -m * self.cov.log_det_c
            - m * t * std::f64::consts::PI.ln()
            - covariance::quadratic_form(&self.cov.c_inv, &theta)
    }

    /// Rebuilds the covariance inverse and interference mean directly.
    pub fn refresh(&mut self) -> Result<(), CovarianceError> {
        covariance::refresh(&mut self.cov, &self.gamma, self.csi.lambda, self.pilots)?;
        self.mean = covariance::mean_matrix(&self.gamma, self.csi.g, self.pilots);
        Ok(())
    }

    /// Residuals for device k' from the maintained mean:
    /// `y_m - mean_m + g_{k',m} gamma_{k'} s_{k'}`.
    fn fill_residual(&mut self, k_prime: usize) {
        let gamma_old = self.gamma[k_prime];
        let pilot = self.pilots.pilot(k_prime);
        for ant in 0..self.received.m() {
            let add_back = self.csi.g[(k_prime, ant)] * gamma_old;
            for sym in 0..self.received.t() {
                self.resid[(sym, ant)] =
                    self.received.y[(sym, ant)] - self.mean[(sym, ant)] + add_back * pilot[sym];
            }
        }
    }

    /// Downdate with direct-inversion fallback on denominator underflow.
    fn downdate(&mut self, k_prime: usize) -> Result<Downdated, CovarianceError> {
        match downdate_inverse(
            &self.cov,
            self.csi.lambda[k_prime],
            self.gamma[k_prime],
            &self.pilots.pilot(k_prime),
        ) {
            Ok(down) => Ok(down),
            Err(CovarianceError::DenominatorUnderflow { .. }) => {
                self.fallbacks.direct_inversions += 1;
                let mut gamma_minus = self.gamma.clone();
                gamma_minus[k_prime] = Complex64::ZERO;
                let rebuilt =
                    build_covariance(&gamma_minus, self.csi.lambda, self.pilots, self.cov.sigma2)?;
                Ok(Downdated {
                    c_minus_inv: rebuilt.c_inv,
                    log_det_minus: rebuilt.log_det_c,
                })
            }
            Err(other) => Err(other),
        }
    }
}

/// One coordinate-descent step for device k': residuals, covariance
/// downdate, amplitude and phase updates, then the rank-one re-insertion.
/// The phase uses the covariance inverse held before the amplitude update.
pub fn coordinate_update(
    state: &mut DetectorState<'_>,
    k_prime: usize,
) -> Result<(), CovarianceError> {
    let lambda = state.csi.lambda[k_prime];
    let m_antennas = state.received.m();

    state.fill_residual(k_prime);
    let down = state.downdate(k_prime)?;

    let csi_k = CVector::from_fn(m_antennas, |ant, _| state.csi.g[(k_prime, ant)]);
    let constants = cubic_constants(
        &state.resid,
        &down.c_minus_inv,
        &state.pilots.pilot(k_prime),
        &csi_k,
        lambda,
    );
    let (r_hat, case) = solve_amplitude_with_case(&constants, m_antennas);
    if matches!(
        case,
        AmplitudeCase::Linear { degenerate: true } | AmplitudeCase::NoCsi { degenerate: true }
    ) {
        state.fallbacks.degenerate_cubics += 1;
    }

    let phi_hat = phase_estimate(
        &state.cov.c_inv,
        &state.pilots.pilot(k_prime),
        &csi_k,
        &state.resid,
    );

    let gamma_new = Complex64::from_polar(r_hat, phi_hat);
    let gamma_old = state.gamma[k_prime];
    state.gamma[k_prime] = gamma_new;

    // Maintain the interference mean incrementally.
    let delta = gamma_new - gamma_old;
    if delta != Complex64::ZERO {
        let pilot = state.pilots.pilot(k_prime);
        for ant in 0..m_antennas {
            let scale = csi_k[ant] * delta;
            if scale != Complex64::ZERO {
                for sym in 0..state.received.t() {
                    state.mean[(sym, ant)] += scale * pilot[sym];
                }
            }
        }
    }

    let (c_inv, log_det) = update_inverse(&down, r_hat, lambda, &state.pilots.pilot(k_prime));
    state.cov.c_inv = c_inv;
    state.cov.log_det_c = log_det;
    state.cov.refresh_counter += 1;
    Ok(())
}

/// Runs cyclic coordinate-descent sweeps from the given initial estimate and
/// returns the final activity estimate and the run trace.
pub fn run_detector(
    received: &ReceivedBlock,
    csi: PartialCsi<'_>,
    pilots: &PilotMatrix,
    sigma2: f64,
    init_gamma: &CVector,
    options: &DetectorOptions,
) -> Result<(ActivityVector, DetectorTrace), CovarianceError> {
    assert_eq!(
        init_gamma.len(),
        pilots.k(),
        "init_gamma must have length K"
    );
    if let Some(tol) = options.early_stop_tol {
        assert!(tol > 0.0, "early_stop_tol must be positive when set");
    }
    let k = pilots.k();
    let mut state = DetectorState::new(received, csi, pilots, sigma2, init_gamma.clone())?;
    let mut trace = DetectorTrace::default();

    let record = |state: &DetectorState<'_>, device: Option<usize>, trace: &mut DetectorTrace| {
        let mse = options
            .mse_reference
            .as_ref()
            .map(|truth| crate::decision::mse(&state.gamma, truth));
        trace.entries.push(TraceEntry {
            device,
            log_likelihood: state.log_likelihood(),
            mse,
        });
    };
    if options.trace {
        record(&state, None, &mut trace);
    }

    for sweep in 0..options.n_sweeps {
        let mut max_delta: f64 = 0.0;
        let DeviceOrdering::Cyclic = options.ordering;
        for k_prime in 0..k {
            let before = state.gamma[k_prime];
            coordinate_update(&mut state, k_prime)?;
            max_delta = max_delta.max((state.gamma[k_prime] - before).norm());
            if options.trace {
                record(&state, Some(k_prime), &mut trace);
            }
        }
        trace.sweeps_completed = sweep + 1;
        if let Some(tol) = options.early_stop_tol {
            if max_delta < tol {
                break;
            }
        }
        // Refresh between sweeps; the final state keeps its maintained
        // (pre-refresh) values so drift remains observable.
        if options.refresh_every_sweep && sweep + 1 < options.n_sweeps {
            state.refresh()?;
        }
    }

    trace.fallbacks = state.fallbacks;
    Ok((ActivityVector::estimate(state.gamma), trace))
}
