//! Initializers for the iterative detector: zero, zero-forcing, LMMSE,
//! matched filter and genie-aided. The linear estimators work on the stacked
//! design matrix whose column k is the known CSI of device k times its
//! pilot, stacked over antennas.

use nalgebra::{Cholesky, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ActivityVector, PilotMatrix, ReceivedBlock};
use crate::{CMatrix, CVector};

/// Reciprocal-condition floor for the zero-forcing normal matrix.
pub const ZF_RCOND_FLOOR: f64 = 1e-10;

/// Activity priors below this are clamped so the LMMSE/MF prior matrix stays
/// invertible even when the configured activity probability is zero.
pub const MIN_PRIOR_ACTIVITY: f64 = 1e-3;

/// Errors from the linear initializers.
#[derive(Debug, Error)]
pub enum InitError {
    #[error("zero-forcing normal matrix ill-conditioned (rcond = {rcond:.3e})")]
    IllConditioned { rcond: f64 },
    #[error("prior second moment for device {device} is zero")]
    ZeroPriorEntry { device: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("normal matrix not positive definite")]
    NotPositiveDefinite,
}

/// Stacked linear observation model `y = design * gamma + noise`.
///
/// Rows are antenna-major: row `ant * T + sym` holds antenna `ant`, pilot
/// symbol `sym`. Column k is the stack over antennas of `g_{k,m} s_k`; it is
/// all-zero exactly when device k has no known CSI.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// (M T) x K stacked design matrix.
    pub matrix: CMatrix,
    /// Length-(M T) stacked observation.
    pub y_stacked: CVector,
}

impl DesignMatrix {
    /// Device count K.
    pub fn k(&self) -> usize {
        self.matrix.ncols()
    }

    /// Stacked dimension M T.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// `design^H design` (K x K Hermitian).
    pub fn normal_matrix(&self) -> CMatrix {
        self.matrix.ad_mul(&self.matrix)
    }

    /// `design^H y` (length K).
    pub fn matched_output(&self) -> CVector {
        let mut b = CVector::zeros(self.k());
        b.gemv_ad(
            Complex64::ONE,
            &self.matrix,
            &self.y_stacked,
            Complex64::ZERO,
        );
        b
    }
}

/// Assembles the stacked design matrix and observation vector from the known
/// CSI, the pilots and the received block.
pub fn build_design_matrix(
    partial_csi: &CMatrix,
    pilots: &PilotMatrix,
    received: &ReceivedBlock,
) -> Result<DesignMatrix, InitError> {
    let (k, m, t) = (pilots.k(), received.m(), pilots.t());
    if partial_csi.nrows() != k || partial_csi.ncols() != m {
        return Err(InitError::DimensionMismatch("csi must be K x M"));
    }
    if received.t() != t {
        return Err(InitError::DimensionMismatch("received vs pilots T"));
    }
    let mut matrix = CMatrix::zeros(m * t, k);
    let mut y_stacked = CVector::zeros(m * t);
    for ant in 0..m {
        for sym in 0..t {
            let row = ant * t + sym;
            y_stacked[row] = received.y[(sym, ant)];
            for dev in 0..k {
                matrix[(row, dev)] = partial_csi[(dev, ant)] * pilots.entry(dev, sym);
            }
        }
    }
    Ok(DesignMatrix { matrix, y_stacked })
}

/// Diagonal second moments of the activity prior,
/// `D_k = E(a_k) E(rho_k)`.
#[derive(Debug, Clone)]
pub struct PriorMoments {
    /// Diagonal entries, all >= 0.
    pub d: Vec<f64>,
}

impl PriorMoments {
    pub fn new(d: Vec<f64>) -> Self {
        Self { d }
    }

    /// Prior from an activity probability and per-device powers. The
    /// activity prior is clamped to [`MIN_PRIOR_ACTIVITY`] so the LMMSE and
    /// matched-filter regularizers stay finite.
    pub fn from_activity(epsilon_a: f64, rho: &[f64]) -> Self {
        let eps = epsilon_a.max(MIN_PRIOR_ACTIVITY);
        Self {
            d: rho.iter().map(|&r| eps * r).collect(),
        }
    }

    fn require_positive(&self) -> Result<(), InitError> {
        match self.d.iter().position(|&d| d <= 0.0) {
            Some(device) => Err(InitError::ZeroPriorEntry { device }),
            None => Ok(()),
        }
    }
}

/// All-zero initializer.
pub fn init_zero(k: usize) -> ActivityVector {
    ActivityVector::estimate(CVector::zeros(k))
}

/// Genie-aided initializer: a copy of the true activity vector.
pub fn init_genie(true_gamma: &ActivityVector) -> ActivityVector {
    true_gamma.clone()
}

/// Zero-forcing estimate `(design^H design)^-1 design^H y`.
///
/// Requires K <= M T and a reciprocal condition number of the normal matrix
/// above [`ZF_RCOND_FLOOR`]; otherwise the estimate would amplify noise
/// unboundedly and [`InitError::IllConditioned`] tells the caller to pick
/// the LMMSE or matched-filter initializer instead.
pub fn init_zf(design: &DesignMatrix) -> Result<ActivityVector, InitError> {
    let k = design.k();
    if k > design.rows() {
        return Err(InitError::IllConditioned { rcond: 0.0 });
    }
    let normal = design.normal_matrix();
    let eigen = SymmetricEigen::new(normal);
    let max = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eigen
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let rcond = if max > 0.0 { (min / max).max(0.0) } else { 0.0 };
    if rcond <= ZF_RCOND_FLOOR {
        return Err(InitError::IllConditioned { rcond });
    }
    // Solve through the eigendecomposition already in hand.
    let b = design.matched_output();
    let mut coeffs = eigen
        .eigenvectors
        .ad_mul(&CMatrix::from_column_slice(k, 1, b.as_slice()));
    for i in 0..k {
        coeffs[(i, 0)] /= Complex64::new(eigen.eigenvalues[i], 0.0);
    }
    let gamma = &eigen.eigenvectors * coeffs;
    Ok(ActivityVector::estimate(CVector::from_column_slice(
        gamma.as_slice(),
    )))
}

/// LMMSE estimate `(design^H design + sigma^2 D^-1)^-1 design^H y`.
pub fn init_lmmse(
    design: &DesignMatrix,
    sigma2: f64,
    prior: &PriorMoments,
) -> Result<ActivityVector, InitError> {
    let k = design.k();
    if prior.d.len() != k {
        return Err(InitError::DimensionMismatch("prior vs design K"));
    }
    prior.require_positive()?;
    let mut normal = design.normal_matrix();
    for dev in 0..k {
        normal[(dev, dev)] += Complex64::new(sigma2 / prior.d[dev], 0.0);
    }
    let chol = Cholesky::new(normal).ok_or(InitError::NotPositiveDefinite)?;
    let gamma = chol.solve(&design.matched_output());
    Ok(ActivityVector::estimate(gamma))
}

/// Matched-filter estimate `(diag(design^H design) + sigma^2 D^-1)^-1
/// design^H y` -- a diagonal solve, no matrix inversion.
pub fn init_mf(
    design: &DesignMatrix,
    sigma2: f64,
    prior: &PriorMoments,
) -> Result<ActivityVector, InitError> {
    let k = design.k();
    if prior.d.len() != k {
        return Err(InitError::DimensionMismatch("prior vs design K"));
    }
    prior.require_positive()?;
    let b = design.matched_output();
    let gamma = CVector::from_fn(k, |dev, _| {
        let diag = design.matrix.column(dev).norm_squared() + sigma2 / prior.d[dev];
        b[dev] / diag
    });
    Ok(ActivityVector::estimate(gamma))
}
