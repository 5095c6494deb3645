//! Seeded, trial-parallel experiments: initializer convergence, CSI-quality
//! (lambda) sweep, and SNR sweep with a full-CSI baseline.
//!
//! Every trial derives its own RNG stream from (seed, trial index), so
//! results are independent of execution order and worker count. Sweep points
//! reuse the same trial streams (common random numbers), which sharpens
//! cross-point comparisons.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{self, RocPoint};
use crate::detector::{run_detector, DetectorOptions, FallbackCounters, PartialCsi, TraceEntry};
use crate::init::{
    build_design_matrix, init_genie, init_lmmse, init_mf, init_zero, init_zf, PriorMoments,
};
use crate::model::{
    device_snr, draw_activity, draw_channels, draw_pilots, synthesize_received, trial_rng,
    ActivityVector, SystemConfig, SHARED_STREAM,
};
use crate::CVector;

/// Which experiment a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Convergence,
    LambdaSweep,
    SnrSweep,
    Single,
}

/// Initializer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zero,
    Zf,
    Lmmse,
    Mf,
    Genie,
}

impl InitKind {
    pub fn label(&self) -> &'static str {
        match self {
            InitKind::Zero => "zero",
            InitKind::Zf => "zf",
            InitKind::Lmmse => "lmmse",
            InitKind::Mf => "mf",
            InitKind::Genie => "genie",
        }
    }

    /// All initializers, in the order used by the convergence study.
    pub fn all() -> Vec<InitKind> {
        vec![
            InitKind::Zero,
            InitKind::Zf,
            InitKind::Lmmse,
            InitKind::Mf,
            InitKind::Genie,
        ]
    }
}

/// Detector selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    IterativeMl,
    LmmseThresholdBaseline,
}

impl DetectorKind {
    pub fn label(&self) -> &'static str {
        match self {
            DetectorKind::IterativeMl => "iterative_ml",
            DetectorKind::LmmseThresholdBaseline => "lmmse_threshold_baseline",
        }
    }
}

/// CSV label of the full-CSI baseline row in the SNR study.
pub const FULL_CSI_BASELINE_LABEL: &str = "lmmse_threshold_baseline_full_csi";

/// Full description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub study: Study,
    /// Lambda values or SNR dB values, depending on the study.
    pub sweep_values: Vec<f64>,
    /// Initializers; the first one seeds the iterative detector in
    /// detection studies, the convergence study runs all of them.
    pub initializers: Vec<InitKind>,
    pub detectors: Vec<DetectorKind>,
    /// False-alarm targets for the sweep slice tables.
    pub target_pfa: Vec<f64>,
    /// Draw pilots once per experiment instead of per trial.
    pub fixed_pilots: bool,
    /// Threshold sweep grid in dB.
    pub v_grid_db: Vec<f64>,
}

impl ExperimentSpec {
    /// Spec with study-appropriate defaults around a base config.
    pub fn new(base: SystemConfig, study: Study) -> Self {
        let sweep_values = match study {
            Study::LambdaSweep => vec![0.1, 0.3, 0.6, 0.9],
            Study::SnrSweep => vec![-6.67, -3.33, 0.0, 3.33, 6.67, 10.0, 13.33, 16.67, 20.0],
            Study::Convergence | Study::Single => Vec::new(),
        };
        let initializers = match study {
            Study::Convergence => InitKind::all(),
            _ => vec![InitKind::Lmmse],
        };
        Self {
            base,
            study,
            sweep_values,
            initializers,
            detectors: vec![
                DetectorKind::IterativeMl,
                DetectorKind::LmmseThresholdBaseline,
            ],
            target_pfa: vec![1e-1, 1e-2, 1e-3],
            fixed_pilots: false,
            v_grid_db: decision::default_v_grid_db(),
        }
    }

    /// Validates the base config and the study-specific constraints.
    pub fn validate(&self) -> Result<(), crate::model::ModelError> {
        self.base.validate()?;
        let fail = |field: &'static str, message: String| {
            Err(crate::model::ModelError::InvalidConfig { field, message })
        };
        if matches!(self.study, Study::LambdaSweep | Study::SnrSweep)
            && self.sweep_values.is_empty()
        {
            return fail("sweep_values", "must be non-empty for sweep studies".into());
        }
        if self.study == Study::LambdaSweep {
            for &v in &self.sweep_values {
                if !(0.0..=1.0).contains(&v) {
                    return fail("sweep_values", format!("lambda {v} outside [0, 1]"));
                }
            }
        }
        for &p in &self.target_pfa {
            if !(p > 0.0 && p < 1.0) {
                return fail("target_pfa", format!("{p} outside (0, 1)"));
            }
        }
        if self.initializers.is_empty() {
            return fail("initializers", "must name at least one".into());
        }
        if self.v_grid_db.is_empty() {
            return fail("v_grid_db", "must be non-empty".into());
        }
        Ok(())
    }

    /// Copy with one swept field replaced, for one sweep point.
    fn at_point(&self, value: f64) -> ExperimentSpec {
        let mut point = self.clone();
        match self.study {
            Study::LambdaSweep => point.base.lambda = value,
            Study::SnrSweep => point.base.snr_db = value,
            _ => {}
        }
        point
    }
}

/// One labelled activity estimate produced inside a trial, together with the
/// per-device SNRs of the scene it observed.
#[derive(Debug, Clone)]
pub struct EstimateRecord {
    pub detector: String,
    pub gamma_hat: CVector,
    pub snr: Vec<f64>,
}

/// Per-initializer detector trace from a convergence trial.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub initializer: String,
    pub entries: Vec<TraceEntry>,
}

/// Everything recorded for one Monte-Carlo trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial_index: u64,
    pub gamma_true: CVector,
    pub true_active: BTreeSet<usize>,
    pub estimates: Vec<EstimateRecord>,
    pub traces: Vec<TraceRecord>,
    pub wall_secs: f64,
    pub fallbacks: FallbackCounters,
    /// Zero-forcing initializations replaced by LMMSE after an
    /// ill-conditioning rejection.
    pub zf_ill_conditioned: u64,
}

fn make_initial(
    kind: InitKind,
    design: &crate::init::DesignMatrix,
    sigma2: f64,
    prior: &PriorMoments,
    truth: &ActivityVector,
    zf_fallbacks: &mut u64,
) -> CVector {
    match kind {
        InitKind::Zero => init_zero(truth.k()).gamma,
        InitKind::Genie => init_genie(truth).gamma,
        InitKind::Lmmse => {
            init_lmmse(design, sigma2, prior)
                .expect("LMMSE initializer with positive prior cannot fail")
                .gamma
        }
        InitKind::Mf => {
            init_mf(design, sigma2, prior)
                .expect("MF initializer with positive prior cannot fail")
                .gamma
        }
        InitKind::Zf => match init_zf(design) {
            Ok(est) => est.gamma,
            Err(_) => {
                // Ill-conditioned normal matrix: fall back to LMMSE.
                *zf_fallbacks += 1;
                init_lmmse(design, sigma2, prior)
                    .expect("LMMSE fallback cannot fail")
                    .gamma
            }
        },
    }
}

/// Runs one seeded trial.
///
/// Draw order within the trial stream is fixed: pilots (unless the
/// experiment pins them to the shared stream), channels, activity, noise,
/// then for the SNR study a second full-CSI channel set and noise block.
/// Detector numerical fallbacks are counted, never fatal.
pub fn run_trial(spec: &ExperimentSpec, trial_index: u64) -> TrialResult {
    let start = Instant::now();
    let cfg = &spec.base;
    let sigma2 = cfg.sigma2();
    let mut rng = trial_rng(cfg.seed, trial_index);

    let pilots = if spec.fixed_pilots {
        draw_pilots(&mut trial_rng(cfg.seed, SHARED_STREAM), cfg.k, cfg.t)
    } else {
        draw_pilots(&mut rng, cfg.k, cfg.t)
    };
    let channels = draw_channels(&mut rng, cfg.k, cfg.m, &cfg.lambda_vec(), &cfg.beta_vec())
        .expect("validated config cannot violate the channel split");
    let truth = draw_activity(&mut rng, cfg.k, cfg.epsilon_a, &cfg.rho_vec());
    let received = synthesize_received(&channels, &pilots, &truth, sigma2, &mut rng)
        .expect("dimensions agree by construction");

    let design = build_design_matrix(&channels.g, &pilots, &received)
        .expect("dimensions agree by construction");
    let prior = PriorMoments::from_activity(cfg.epsilon_a, &cfg.rho_vec());
    let snr: Vec<f64> = (0..cfg.k)
        .map(|k| device_snr(&channels, sigma2, k))
        .collect();

    let mut estimates = Vec::new();
    let mut traces = Vec::new();
    let mut fallbacks = FallbackCounters::default();
    let mut zf_ill_conditioned = 0u64;

    match spec.study {
        Study::Convergence => {
            for &kind in &spec.initializers {
                let initial = make_initial(
                    kind,
                    &design,
                    sigma2,
                    &prior,
                    &truth,
                    &mut zf_ill_conditioned,
                );
                let options = DetectorOptions {
                    n_sweeps: cfg.n_sweeps,
                    trace: true,
                    mse_reference: Some(truth.gamma.clone()),
                    ..DetectorOptions::standard()
                };
                let (estimate, trace) = run_detector(
                    &received,
                    PartialCsi::from_channels(&channels),
                    &pilots,
                    sigma2,
                    &initial,
                    &options,
                )
                .expect("finite inputs keep the detector well-posed");
                fallbacks.merge(&trace.fallbacks);
                traces.push(TraceRecord {
                    initializer: kind.label().to_string(),
                    entries: trace.entries,
                });
                estimates.push(EstimateRecord {
                    detector: kind.label().to_string(),
                    gamma_hat: estimate.gamma,
                    snr: snr.clone(),
                });
            }
        }
        Study::LambdaSweep | Study::SnrSweep | Study::Single => {
            for &detector in &spec.detectors {
                match detector {
                    DetectorKind::LmmseThresholdBaseline => {
                        let est = init_lmmse(&design, sigma2, &prior)
                            .expect("positive prior keeps LMMSE well-posed");
                        estimates.push(EstimateRecord {
                            detector: detector.label().to_string(),
                            gamma_hat: est.gamma,
                            snr: snr.clone(),
                        });
                    }
                    DetectorKind::IterativeMl => {
                        let initial = make_initial(
                            spec.initializers[0],
                            &design,
                            sigma2,
                            &prior,
                            &truth,
                            &mut zf_ill_conditioned,
                        );
                        let options = DetectorOptions {
                            n_sweeps: cfg.n_sweeps,
                            ..DetectorOptions::standard()
                        };
                        let (estimate, trace) = run_detector(
                            &received,
                            PartialCsi::from_channels(&channels),
                            &pilots,
                            sigma2,
                            &initial,
                            &options,
                        )
                        .expect("finite inputs keep the detector well-posed");
                        fallbacks.merge(&trace.fallbacks);
                        estimates.push(EstimateRecord {
                            detector: detector.label().to_string(),
                            gamma_hat: estimate.gamma,
                            snr: snr.clone(),
                        });
                    }
                }
            }
            if spec.study == Study::SnrSweep {
                // Full-CSI reference scene: same activity, fresh channels
                // with lambda = 0 and fresh noise.
                let channels_full =
                    draw_channels(&mut rng, cfg.k, cfg.m, &vec![0.0; cfg.k], &cfg.beta_vec())
                        .expect("lambda = 0 always satisfies the split");
                let received_full =
                    synthesize_received(&channels_full, &pilots, &truth, sigma2, &mut rng)
                        .expect("dimensions agree by construction");
                let design_full = build_design_matrix(&channels_full.g, &pilots, &received_full)
                    .expect("dimensions agree by construction");
                let est = init_lmmse(&design_full, sigma2, &prior)
                    .expect("positive prior keeps LMMSE well-posed");
                let snr_full: Vec<f64> = (0..cfg.k)
                    .map(|k| device_snr(&channels_full, sigma2, k))
                    .collect();
                estimates.push(EstimateRecord {
                    detector: FULL_CSI_BASELINE_LABEL.to_string(),
                    gamma_hat: est.gamma,
                    snr: snr_full,
                });
            }
        }
    }

    TrialResult {
        trial_index,
        true_active: truth.true_active_set().unwrap_or_default(),
        gamma_true: truth.gamma,
        estimates,
        traces,
        wall_secs: start.elapsed().as_secs_f64(),
        fallbacks,
        zf_ill_conditioned,
    }
}

/// Runs all trials of a spec in parallel and returns them in trial order.
pub fn run_trials(spec: &ExperimentSpec) -> Vec<TrialResult> {
    (0..spec.base.n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(spec, i))
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub initializer: String,
    pub update_index: usize,
    pub mean_loglik: f64,
    pub mean_mse: f64,
}

/// Aggregated convergence study output.
#[derive(Debug, Clone)]
pub struct ConvergenceOutput {
    pub rows: Vec<ConvergenceRow>,
    pub n_trials: usize,
    pub fallbacks: FallbackCounters,
    pub zf_ill_conditioned: u64,
}

/// Mean log-likelihood and MSE trajectories per initializer.
pub fn convergence_study(spec: &ExperimentSpec) -> ConvergenceOutput {
    assert_eq!(spec.study, Study::Convergence, "study must be convergence");
    let trials = run_trials(spec);
    let n = trials.len();
    let mut fallbacks = FallbackCounters::default();
    let mut zf_ill = 0;

    let mut rows = Vec::new();
    for &kind in &spec.initializers {
        let label = kind.label();
        let len = trials[0]
            .traces
            .iter()
            .find(|t| t.initializer == label)
            .map(|t| t.entries.len())
            .unwrap_or(0);
        let mut loglik_sum = vec![0.0; len];
        let mut mse_sum = vec![0.0; len];
        for trial in &trials {
            let trace = trial
                .traces
                .iter()
                .find(|t| t.initializer == label)
                .expect("every trial records every initializer");
            for (i, entry) in trace.entries.iter().enumerate() {
                loglik_sum[i] += entry.log_likelihood;
                mse_sum[i] += entry.mse.unwrap_or(0.0);
            }
        }
        for i in 0..len {
            rows.push(ConvergenceRow {
                initializer: label.to_string(),
                update_index: i,
                mean_loglik: loglik_sum[i] / n as f64,
                mean_mse: mse_sum[i] / n as f64,
            });
        }
    }
    for trial in &trials {
        fallbacks.merge(&trial.fallbacks);
        zf_ill += trial.zf_ill_conditioned;
    }
    ConvergenceOutput {
        rows,
        n_trials: n,
        fallbacks,
        zf_ill_conditioned: zf_ill,
    }
}

/// One row of an aggregated ROC table.
#[derive(Debug, Clone, PartialEq)]
pub struct RocRow {
    pub detector: String,
    pub sweep_value: f64,
    pub v_db: f64,
    pub p_fa: f64,
    pub p_md: f64,
}

/// One row of the miss-detection-at-target-false-alarm slice table.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRow {
    pub detector: String,
    pub sweep_value: f64,
    pub target_pfa: f64,
    pub p_md: f64,
}

/// Aggregated sweep output: full ROC rows and the slice table.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub roc: Vec<RocRow>,
    pub slices: Vec<SliceRow>,
    pub trials_per_point: usize,
    pub fallbacks: FallbackCounters,
    pub zf_ill_conditioned: u64,
}

/// Detector labels present in a trial batch, in first-seen order.
fn detector_labels(trials: &[TrialResult]) -> Vec<String> {
    let mut labels = Vec::new();
    for trial in trials {
        for est in &trial.estimates {
            if !labels.contains(&est.detector) {
                labels.push(est.detector.clone());
            }
        }
    }
    labels
}

/// ROC curve of one detector label over a trial batch.
pub fn roc_for_label(trials: &[TrialResult], label: &str, v_grid_db: &[f64]) -> Vec<RocPoint> {
    let mut gammas = Vec::with_capacity(trials.len());
    let mut truths = Vec::with_capacity(trials.len());
    let mut snrs = Vec::with_capacity(trials.len());
    for trial in trials {
        let est = trial
            .estimates
            .iter()
            .find(|e| e.detector == label)
            .expect("label present in every trial");
        gammas.push(est.gamma_hat.clone());
        truths.push(trial.true_active.clone());
        snrs.push(est.snr.clone());
    }
    decision::roc(&gammas, &truths, &snrs, v_grid_db)
}

fn sweep_point(
    spec: &ExperimentSpec,
    value: f64,
    roc_rows: &mut Vec<RocRow>,
    slice_rows: &mut Vec<SliceRow>,
    fallbacks: &mut FallbackCounters,
    zf_ill: &mut u64,
) -> usize {
    let point_spec = spec.at_point(value);
    let trials = run_trials(&point_spec);
    for label in detector_labels(&trials) {
        let curve = roc_for_label(&trials, &label, &spec.v_grid_db);
        for p in &curve {
            roc_rows.push(RocRow {
                detector: label.clone(),
                sweep_value: value,
                v_db: p.v_db,
                p_fa: p.p_fa,
                p_md: p.p_md,
            });
        }
        for &target in &spec.target_pfa {
            slice_rows.push(SliceRow {
                detector: label.clone(),
                sweep_value: value,
                target_pfa: target,
                p_md: decision::pmd_at_target_pfa(&curve, target),
            });
        }
    }
    for trial in &trials {
        fallbacks.merge(&trial.fallbacks);
        *zf_ill += trial.zf_ill_conditioned;
    }
    trials.len()
}

/// CSI-quality sweep: ROC and slice tables for every lambda in
/// `sweep_values`.
pub fn lambda_sweep(spec: &ExperimentSpec) -> SweepOutput {
    assert_eq!(spec.study, Study::LambdaSweep, "study must be lambda_sweep");
    sweep_impl(spec)
}

/// SNR sweep with the full-CSI LMMSE reference alongside the partial-CSI
/// detectors.
pub fn snr_sweep(spec: &ExperimentSpec) -> SweepOutput {
    assert_eq!(spec.study, Study::SnrSweep, "study must be snr_sweep");
    sweep_impl(spec)
}

fn sweep_impl(spec: &ExperimentSpec) -> SweepOutput {
    let mut roc_rows = Vec::new();
    let mut slice_rows = Vec::new();
    let mut fallbacks = FallbackCounters::default();
    let mut zf_ill = 0;
    let mut trials_per_point = 0;
    for &value in &spec.sweep_values {
        trials_per_point = sweep_point(
            spec,
            value,
            &mut roc_rows,
            &mut slice_rows,
            &mut fallbacks,
            &mut zf_ill,
        );
    }
    SweepOutput {
        roc: roc_rows,
        slices: slice_rows,
        trials_per_point,
        fallbacks,
        zf_ill_conditioned: zf_ill,
    }
}

/// Single-configuration study: one ROC table at the base config, with the
/// configured lambda as the sweep value.
pub fn single_study(spec: &ExperimentSpec) -> SweepOutput {
    assert_eq!(spec.study, Study::Single, "study must be single");
    let mut roc_rows = Vec::new();
    let mut slice_rows = Vec::new();
    let mut fallbacks = FallbackCounters::default();
    let mut zf_ill = 0;
    let trials_per_point = sweep_point(
        spec,
        spec.base.lambda,
        &mut roc_rows,
        &mut slice_rows,
        &mut fallbacks,
        &mut zf_ill,
    );
    SweepOutput {
        roc: roc_rows,
        slices: slice_rows,
        trials_per_point,
        fallbacks,
        zf_ill_conditioned: zf_ill,
    }
}

/// Per-detector operating point for the `simulate` report.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateRow {
    pub detector: String,
    pub p_md: f64,
    pub p_fa: f64,
    pub mean_mse: f64,
}

/// Summary of a single-configuration run at one threshold scale.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub v_db: f64,
    pub rows: Vec<SimulateRow>,
    pub n_trials: usize,
    pub direct_inversions: u64,
    pub degenerate_cubics: u64,
    pub zf_ill_conditioned: u64,
}

/// Runs the base configuration and reports the operating point at `v_db`:
/// per-trial [`decision::DetectionReport`]s averaged per detector.
pub fn simulate_report(spec: &ExperimentSpec, v_db: f64) -> SimulateReport {
    let trials = run_trials(spec);
    let mut rows = Vec::new();
    for label in detector_labels(&trials) {
        let reports: Vec<decision::DetectionReport> = trials
            .iter()
            .map(|tr| {
                let est = tr
                    .estimates
                    .iter()
                    .find(|e| e.detector == label)
                    .expect("label present");
                decision::DetectionReport::evaluate(
                    &est.gamma_hat,
                    &tr.gamma_true,
                    &tr.true_active,
                    &est.snr,
                    v_db,
                )
            })
            .collect();
        let n = reports.len() as f64;
        rows.push(SimulateRow {
            detector: label,
            p_md: reports.iter().map(|r| r.p_md).sum::<f64>() / n,
            p_fa: reports.iter().map(|r| r.p_fa).sum::<f64>() / n,
            mean_mse: reports.iter().map(|r| r.mse).sum::<f64>() / n,
        });
    }
    let mut fallbacks = FallbackCounters::default();
    let mut zf_ill = 0;
    for trial in &trials {
        fallbacks.merge(&trial.fallbacks);
        zf_ill += trial.zf_ill_conditioned;
    }
    SimulateReport {
        v_db,
        rows,
        n_trials: trials.len(),
        direct_inversions: fallbacks.direct_inversions,
        degenerate_cubics: fallbacks.degenerate_cubics,
        zf_ill_conditioned: zf_ill,
    }
}
