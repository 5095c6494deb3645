//! System model: pilots, channels, device activity and received preamble
//! blocks, plus per-device SNR and channel correlation.
//!
//! All draw_* operations are pure functions of the RNG they are handed;
//! [`trial_rng`] derives order-independent per-trial streams from one master
//! seed so Monte-Carlo trials can run on any number of workers.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{CMatrix, CVector};

/// Errors from model construction and validation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config field `{field}` out of range: {message}")]
    InvalidConfig {
        field: &'static str,
        message: String,
    },
    #[error(
        "device {device}: uncertainty lambda^2 = {lambda_sq} exceeds channel energy beta = {beta}"
    )]
    UncertaintyExceedsEnergy {
        device: usize,
        lambda_sq: f64,
        beta: f64,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("channel correlation requires nonzero vectors")]
    ZeroNorm,
}

/// All simulation knobs.
///
/// Defaults mirror the standard parameter set: K = 500 devices, M = 64
/// antennas, T = 10 pilot symbols, 20 dB SNR, activity probability 0.1,
/// CSI-uncertainty scale 0.3, unit transmit power and 4 detector sweeps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemConfig {
    /// Device count K.
    pub k: usize,
    /// BS antenna count M.
    pub m: usize,
    /// Preamble length T in symbols.
    pub t: usize,
    /// Per-device SNR in dB (post-array, `M beta_k / sigma^2`).
    pub snr_db: f64,
    /// Activity probability in [0, 1].
    pub epsilon_a: f64,
    /// Default CSI-uncertainty scale lambda_k >= 0.
    pub lambda: f64,
    /// Per-device transmit power rho_k > 0.
    pub rho: f64,
    /// Monte-Carlo trial count.
    pub n_trials: usize,
    /// Full coordinate-descent passes over all K devices.
    pub n_sweeps: usize,
    /// Master RNG seed.
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            k: 500,
            m: 64,
            t: 10,
            snr_db: 20.0,
            epsilon_a: 0.1,
            lambda: 0.3,
            rho: 1.0,
            n_trials: 10_000,
            n_sweeps: 4,
            seed: 0,
        }
    }
}

impl SystemConfig {
    /// Checks every invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), ModelError> {
        fn fail(field: &'static str, message: String) -> Result<(), ModelError> {
            Err(ModelError::InvalidConfig { field, message })
        }
        if self.k < 1 {
            return fail("k", format!("must be >= 1, got {}", self.k));
        }
        if self.m < 1 {
            return fail("m", format!("must be >= 1, got {}", self.m));
        }
        if self.t < 1 {
            return fail("t", format!("must be >= 1, got {}", self.t));
        }
        if !self.snr_db.is_finite() {
            return fail("snr_db", format!("must be finite, got {}", self.snr_db));
        }
        if !(0.0..=1.0).contains(&self.epsilon_a) {
            return fail(
                "epsilon_a",
                format!("must be in [0, 1], got {}", self.epsilon_a),
            );
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return fail("lambda", format!("must be >= 0, got {}", self.lambda));
        }
        if !self.rho.is_finite() || self.rho <= 0.0 {
            return fail("rho", format!("must be > 0, got {}", self.rho));
        }
        if self.n_sweeps < 1 {
            return fail("n_sweeps", format!("must be >= 1, got {}", self.n_sweeps));
        }
        Ok(())
    }

    /// Linear SNR, `10^(snr_db / 10)`.
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Noise variance calibrated per receive antenna: `sigma^2 = beta /
    /// SNR_lin` with beta = 1.
    ///
    /// The configured SNR is the per-antenna link quality; the array-combined
    /// per-device quantity `M beta_k / sigma^2` used by the activity
    /// threshold (see [`device_snr`]) is larger by a factor M.
    pub fn sigma2(&self) -> f64 {
        1.0 / self.snr_linear()
    }

    /// Per-device uncertainty scales (uniform lambda).
    pub fn lambda_vec(&self) -> Vec<f64> {
        vec![self.lambda; self.k]
    }

    /// Per-device transmit powers (uniform rho).
    pub fn rho_vec(&self) -> Vec<f64> {
        vec![self.rho; self.k]
    }

    /// Per-device large-scale fading coefficients (beta = 1 for all devices).
    pub fn beta_vec(&self) -> Vec<f64> {
        vec![1.0; self.k]
    }
}

/// Reserved stream index for draws shared across trials (fixed pilots).
pub const SHARED_STREAM: u64 = u64::MAX;

/// Derives the RNG stream for one Monte-Carlo trial.
///
/// The master seed selects the ChaCha key and the trial index selects the
/// stream, so any subset of trials can be generated in any order, on any
/// worker, with identical output.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// One draw of a circularly-symmetric complex Gaussian with unit variance
/// (each component has variance 1/2).
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// The K device preambles, each a length-T sequence of complex pilot symbols.
///
/// Stored with one column per device so that `pilot(k)` is a contiguous view.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    /// T x K matrix, column k is the preamble of device k.
    pub symbols: CMatrix,
}

impl PilotMatrix {
    /// Device count K.
    pub fn k(&self) -> usize {
        self.symbols.ncols()
    }

    /// Preamble length T.
    pub fn t(&self) -> usize {
        self.symbols.nrows()
    }

    /// Preamble of device k as a column view.
    pub fn pilot(&self, k: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.symbols.column(k)
    }

    /// Pilot symbol of device k at symbol time t.
    pub fn entry(&self, k: usize, t: usize) -> Complex64 {
        self.symbols[(t, k)]
    }
}

/// Draws K preambles of length T, entries i.i.d. CN(0, 1).
///
/// Entries are drawn device-major (all symbols of device 0, then device 1,
/// ...), so output is bitwise reproducible for a given RNG state.
pub fn draw_pilots<R: Rng + ?Sized>(rng: &mut R, k: usize, t: usize) -> PilotMatrix {
    let mut symbols = CMatrix::zeros(t, k);
    for dev in 0..k {
        for sym in 0..t {
            symbols[(sym, dev)] = standard_complex(rng);
        }
    }
    PilotMatrix { symbols }
}

/// True channels, known partial CSI and per-device uncertainty scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// K x M known partial CSI g.
    pub g: CMatrix,
    /// K x M true channels h = g + lambda (elementwise per row) * epsilon.
    pub h: CMatrix,
    /// Per-device uncertainty scales lambda_k.
    pub lambda_k: Vec<f64>,
    /// Per-device large-scale fading, recomputed per realization as
    /// `||g_k||^2 / M + lambda_k^2`.
    pub beta_k: Vec<f64>,
}

impl ChannelSet {
    /// Device count K.
    pub fn k(&self) -> usize {
        self.g.nrows()
    }

    /// Antenna count M.
    pub fn m(&self) -> usize {
        self.g.ncols()
    }
}

/// Draws channels with the known/unknown CSI split.
///
/// `g` entries are i.i.d. CN(0, beta_k - lambda_k^2), the residuals are unit
/// variance, and `h = g + lambda_k * epsilon`. When `lambda_k = 0` the h row
/// is a bitwise copy of the g row. Rejects `lambda_k^2 > beta_k`.
pub fn draw_channels<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    m: usize,
    lambda_k: &[f64],
    beta_k: &[f64],
) -> Result<ChannelSet, ModelError> {
    if lambda_k.len() != k || beta_k.len() != k {
        return Err(ModelError::DimensionMismatch(
            "lambda_k and beta_k must have length K",
        ));
    }
    for (dev, (&lam, &beta)) in lambda_k.iter().zip(beta_k).enumerate() {
        if lam * lam > beta {
            return Err(ModelError::UncertaintyExceedsEnergy {
                device: dev,
                lambda_sq: lam * lam,
                beta,
            });
        }
    }

    let mut g = CMatrix::zeros(k, m);
    let mut h = CMatrix::zeros(k, m);
    for dev in 0..k {
        let lam = lambda_k[dev];
        let g_std = (beta_k[dev] - lam * lam).sqrt();
        for ant in 0..m {
            let known = standard_complex(rng) * g_std;
            g[(dev, ant)] = known;
            if lam == 0.0 {
                h[(dev, ant)] = known;
            } else {
                h[(dev, ant)] = known + standard_complex(rng) * lam;
            }
        }
    }

    let beta_stored = (0..k)
        .map(|dev| g.row(dev).norm_squared() / m as f64 + lambda_k[dev] * lambda_k[dev])
        .collect();

    Ok(ChannelSet {
        g,
        h,
        lambda_k: lambda_k.to_vec(),
        beta_k: beta_stored,
    })
}

/// Complex activity indicators, optionally with ground-truth activity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityVector {
    /// Length-K vector gamma; zero for inactive devices.
    pub gamma: CVector,
    /// Ground-truth activity flags (None for detector estimates).
    pub active: Option<Vec<bool>>,
}

impl ActivityVector {
    /// Estimate without ground-truth flags.
    pub fn estimate(gamma: CVector) -> Self {
        Self {
            gamma,
            active: None,
        }
    }

    /// Device count K.
    pub fn k(&self) -> usize {
        self.gamma.len()
    }

    /// Amplitude r_k = |gamma_k|.
    pub fn amplitude(&self, k: usize) -> f64 {
        self.gamma[k].norm()
    }

    /// Phase phi_k in [0, 2 pi).
    pub fn phase(&self, k: usize) -> f64 {
        let a = self.gamma[k].arg();
        if a < 0.0 {
            a + std::f64::consts::TAU
        } else {
            a
        }
    }

    /// Indices of truly active devices, if ground truth is attached.
    pub fn true_active_set(&self) -> Option<std::collections::BTreeSet<usize>> {
        self.active.as_ref().map(|flags| {
            flags
                .iter()
                .enumerate()
                .filter_map(|(k, &a)| a.then_some(k))
                .collect()
        })
    }
}

/// Draws ground-truth activity: a_k i.i.d. Bernoulli(epsilon_a), active
/// devices get `gamma_k = sqrt(rho_k) * exp(j phi_k)` with phi_k uniform on
/// [0, 2 pi), inactive devices get zero.
pub fn draw_activity<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    epsilon_a: f64,
    rho: &[f64],
) -> ActivityVector {
    assert_eq!(rho.len(), k, "rho must have length K");
    let mut gamma = CVector::zeros(k);
    let mut active = vec![false; k];
    for dev in 0..k {
        let is_active = rng.random::<f64>() < epsilon_a;
        // Phase drawn unconditionally so the stream layout does not depend
        // on the activity outcome.
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        if is_active {
            gamma[dev] = Complex64::from_polar(rho[dev].sqrt(), phi);
            active[dev] = true;
        }
    }
    ActivityVector {
        gamma,
        active: Some(active),
    }
}

/// Received preamble block: one length-T observation per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBlock {
    /// T x M matrix, column m is the observation y_m at antenna m.
    pub y: CMatrix,
    /// Noise variance sigma^2 > 0.
    pub sigma2: f64,
}

impl ReceivedBlock {
    /// Antenna count M.
    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// Preamble length T.
    pub fn t(&self) -> usize {
        self.y.nrows()
    }
}

/// Synthesizes the received block
/// `y_{t,m} = sum_k h_{k,m} s_{k,t} gamma_k + w_{t,m}` with w i.i.d.
/// CN(0, sigma^2).
pub fn synthesize_received<R: Rng + ?Sized>(
    channels: &ChannelSet,
    pilots: &PilotMatrix,
    gamma_true: &ActivityVector,
    sigma2: f64,
    rng: &mut R,
) -> Result<ReceivedBlock, ModelError> {
    let (k, m, t) = (channels.k(), channels.m(), pilots.t());
    if pilots.k() != k {
        return Err(ModelError::DimensionMismatch("pilots vs channels K"));
    }
    if gamma_true.k() != k {
        return Err(ModelError::DimensionMismatch("gamma vs channels K"));
    }
    if !sigma2.is_finite() || sigma2 < 0.0 {
        return Err(ModelError::InvalidConfig {
            field: "sigma2",
            message: format!("must be finite and >= 0, got {sigma2}"),
        });
    }

    // weighted_h[dev, ant] = gamma_dev * h[dev, ant]; then y = S * weighted_h.
    let mut weighted_h = channels.h.clone();
    for dev in 0..k {
        let gamma = gamma_true.gamma[dev];
        for ant in 0..m {
            weighted_h[(dev, ant)] *= gamma;
        }
    }
    let mut y = &pilots.symbols * weighted_h;

    if sigma2 > 0.0 {
        let noise_std = sigma2.sqrt();
        for ant in 0..m {
            for sym in 0..t {
                y[(sym, ant)] += standard_complex(rng) * noise_std;
            }
        }
    }

    Ok(ReceivedBlock { y, sigma2 })
}

/// Per-device SNR `(||g_k||^2 + M lambda_k^2) / sigma^2`.
pub fn device_snr(channels: &ChannelSet, sigma2: f64, k: usize) -> f64 {
    let m = channels.m() as f64;
    let lam = channels.lambda_k[k];
    (channels.g.row(k).norm_squared() + m * lam * lam) / sigma2
}

/// Normalized channel correlation `|h_i^H h_j| / (||h_i|| ||h_j||)` in [0, 1].
pub fn channel_correlation(h_i: &CVector, h_j: &CVector) -> Result<f64, ModelError> {
    if h_i.len() != h_j.len() {
        return Err(ModelError::DimensionMismatch(
            "correlation vectors must have equal length",
        ));
    }
    let ni = h_i.norm();
    let nj = h_j.norm();
    if ni == 0.0 || nj == 0.0 {
        return Err(ModelError::ZeroNorm);
    }
    Ok(h_i.dotc(h_j).norm() / (ni * nj))
}
