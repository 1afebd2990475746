//! Scenario execution: builds phantoms and field models from a config,
//! runs the controller and the acquisition with and without correction,
//! computes metrics and writes all output files.
//!
//! Every run writes a `manifest.cfg` echoing the fully resolved
//! configuration plus the tool version, which is sufficient to reproduce
//! the outputs byte for byte. Files are written atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use drtz_core::controller::{
    event_log_csv, run_controller, ControllerConfig, ControllerRun, ExcitationSchedule,
};
use drtz_core::field::{
    inplane_std, make_body_cord_phantom, make_cylinder_phantom, make_radial_riro, mask_mean,
    FieldModel, Mask2D, ScalarField2D,
};
use drtz_core::metrics::{auto_ghost_masks, psg, psg_background, snr, GhostMetricMasks};
use drtz_core::mgre::{acquire_kspace, reconstruct, CorrectionSchedule, SequenceParams};
use drtz_core::training::{
    build_shim_plan, regress_gz_vs_pressure, synth_fieldmap_series, synth_pressure_trace_starting,
    zgradient, PressureTrace, RegressionMaps, ShimPlan, ShimPlanEntry, FIELDMAP_SLICES,
};

use crate::config::{PhantomKind, ScenarioConfig};
use crate::error::CliError;
use crate::pgm::{encode_pgm16, encode_pgm_mask, write_atomic};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// PSG values below this floor (in percent) are treated as zero ghosting:
/// they sit at the double-precision reconstruction noise level, so a
/// relative reduction is undefined.
pub const PSG_ZERO_FLOOR_PERCENT: f64 = 1e-9;

/// Phase-encode array axis used by all scenarios.
pub const PE_AXIS: usize = 0;

/// Margin between the object and the ghost ROIs, in pixels.
pub const GHOST_MARGIN_PX: usize = 2;

/// Fixed cylinder-phantom geometry.
pub const CYLINDER_RADIUS_MM: f64 = 10.0;
pub const CYLINDER_DENSITY: f64 = 1.0;

/// Everything needed to simulate one slice.
pub struct Scenario {
    pub rho: ScalarField2D,
    pub object_mask: Mask2D,
    /// ROI whose mean RIRO amplitude drives the correction (the whole
    /// object for the cylinder, the cord ROI for the body phantom).
    pub corr_roi_mask: Mask2D,
    pub riro: ScalarField2D,
    pub model: FieldModel,
    pub seq: SequenceParams,
    pub ghost_masks: GhostMetricMasks,
}

pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario, CliError> {
    let (rho, object_mask, corr_roi_mask) = match cfg.phantom {
        PhantomKind::Cylinder => {
            let (rho, mask) = make_cylinder_phantom(
                cfg.nx,
                cfg.ny,
                cfg.spacing_mm,
                CYLINDER_RADIUS_MM,
                CYLINDER_DENSITY,
            )?;
            (rho, mask.clone(), mask)
        }
        PhantomKind::BodyCord => {
            let (rho, object, cord) = make_body_cord_phantom(cfg.nx, cfg.ny, cfg.spacing_mm)?;
            (rho, object, cord)
        }
    };
    let riro = make_radial_riro(&object_mask, cfg.spacing_mm, cfg.riro_peak_hz, cfg.riro_target_std_hz)?;
    let statics = ScalarField2D::uniform(cfg.ny, cfg.nx, [cfg.spacing_mm; 2], cfg.static_field_hz)?;
    let model = FieldModel::new(statics, riro.clone(), cfg.resp_period_s)?;
    let seq = SequenceParams::new(cfg.nx, cfg.ny, cfg.tr_ms, cfg.te_ms.clone())?;
    let ghost_masks = auto_ghost_masks(&object_mask, PE_AXIS, GHOST_MARGIN_PX)?;
    Ok(Scenario { rho, object_mask, corr_roi_mask, riro, model, seq, ghost_masks })
}

/// Noiseless bellows trace covering the whole acquisition, starting early
/// enough that latency-shifted lookups stay in span.
fn scenario_trace(cfg: &ScenarioConfig) -> Result<PressureTrace, CliError> {
    let span_s = cfg.ny as f64 * cfg.tr_ms * 1e-3;
    let start = -(cfg.latency_s + 1.0);
    let duration = (span_s + cfg.latency_s + 2.0).max(cfg.resp_period_s);
    Ok(synth_pressure_trace_starting(start, cfg.resp_period_s, duration, 0.0, cfg.seed)?)
}

/// Runs the realtime loop for one slice and returns the correction
/// schedule plus the event log.
pub fn run_scenario_controller(
    cfg: &ScenarioConfig,
    scenario: &Scenario,
    plan: &ShimPlan,
) -> Result<ControllerRun, CliError> {
    let trace = scenario_trace(cfg)?;
    let schedule = ExcitationSchedule::single_slice(0, cfg.ny, scenario.seq.tr_s(), 0.0)?;
    let roi_riro_corr_hz = mask_mean(&scenario.riro, &scenario.corr_roi_mask)?;
    let controller_cfg = ControllerConfig::new(
        cfg.latency_s,
        roi_riro_corr_hz,
        cfg.static_field_hz,
        cfg.te_ms.clone(),
    )?;
    Ok(run_controller(&schedule, &trace, plan, &controller_cfg, cfg.resp_period_s)?)
}

fn zero_plan() -> ShimPlan {
    ShimPlan::new(vec![ShimPlanEntry { slice_index: 0, gz_static_mean: 0.0, rigo_max_mean: 0.0 }])
        .expect("static plan")
}

/// Metrics of one reconstructed condition.
#[derive(Debug, Clone, Copy)]
pub struct ConditionMetrics {
    pub psg_percent: f64,
    /// `None` encodes the infinite-SNR sentinel (zero background spread).
    pub snr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EchoMetrics {
    pub echo_index: usize,
    pub te_ms: f64,
    pub uncorrected: ConditionMetrics,
    pub corrected: Option<ConditionMetrics>,
    /// `100 * (psg_off - psg_on) / psg_off`; `None` when the corrected
    /// condition was not run or the uncorrected PSG is zero.
    pub reduction_percent: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub echoes: Vec<EchoMetrics>,
    pub in_plane_std_hz: f64,
    pub out_dir: PathBuf,
}

fn condition_metrics(
    magnitude: &ScalarField2D,
    scenario: &Scenario,
) -> Result<ConditionMetrics, CliError> {
    let psg_percent = psg(magnitude, &scenario.ghost_masks)?;
    let background = scenario.ghost_masks.above.union(&scenario.ghost_masks.below)?;
    let snr = match snr(magnitude, &scenario.ghost_masks.object, &background) {
        Ok(v) => Some(v),
        Err(drtz_core::Error::ZeroDenominator(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(ConditionMetrics { psg_percent, snr })
}

fn fmt_snr(snr: Option<f64>) -> String {
    match snr {
        Some(v) => format!("{v}"),
        None => "inf".into(),
    }
}

fn manifest_text(cfg: &ScenarioConfig) -> String {
    format!(
        "# run manifest (tool version {TOOL_VERSION})\n# re-run with: drtz <command> --config <this file>\n{}",
        cfg.to_config_text()
    )
}

/// Simulates the scenario and writes images, metrics and logs.
///
/// The uncorrected condition always runs; the corrected condition runs
/// when `correction = on`. Each echo's image pair shares one linear gray
/// scale so the two conditions are directly comparable.
pub fn run_simulate(cfg: &ScenarioConfig) -> Result<SimulateReport, CliError> {
    let scenario = build_scenario(cfg)?;
    let controller_run = run_scenario_controller(cfg, &scenario, &zero_plan())?;
    let corr_schedule: &CorrectionSchedule = controller_run
        .schedule_for(0)
        .expect("single-slice schedule present");

    let frames_off = acquire_kspace(&scenario.rho, &scenario.model, &scenario.seq, None)?;
    let frames_on = if cfg.correction {
        Some(acquire_kspace(&scenario.rho, &scenario.model, &scenario.seq, Some(corr_schedule))?)
    } else {
        None
    };

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut metrics_csv = String::from("echo,te_ms,condition,psg_percent,snr\n");
    let mut echoes = Vec::new();
    for (e, frame_off) in frames_off.iter().enumerate() {
        let mag_off = reconstruct(frame_off).magnitude();
        let mag_on = frames_on.as_ref().map(|f| reconstruct(&f[e]).magnitude());

        let peak = |m: &ScalarField2D| m.values().iter().cloned().fold(0.0, f64::max);
        let scale = match &mag_on {
            Some(on) => peak(&mag_off).max(peak(on)),
            None => peak(&mag_off),
        };
        write_atomic(
            &cfg.out_dir.join(format!("echo{}_off.pgm", e + 1)),
            &encode_pgm16(&mag_off, scale),
        )?;
        if let Some(on) = &mag_on {
            write_atomic(
                &cfg.out_dir.join(format!("echo{}_on.pgm", e + 1)),
                &encode_pgm16(on, scale),
            )?;
        }

        let uncorrected = condition_metrics(&mag_off, &scenario)?;
        let corrected = match &mag_on {
            Some(on) => Some(condition_metrics(on, &scenario)?),
            None => None,
        };
        let te_ms = cfg.te_ms[e];
        let _ = writeln!(
            metrics_csv,
            "{},{},off,{},{}",
            e + 1,
            te_ms,
            uncorrected.psg_percent,
            fmt_snr(uncorrected.snr)
        );
        if let Some(c) = &corrected {
            let _ = writeln!(metrics_csv, "{},{},on,{},{}", e + 1, te_ms, c.psg_percent, fmt_snr(c.snr));
        }
        let reduction_percent = corrected.as_ref().and_then(|c| {
            (uncorrected.psg_percent >= PSG_ZERO_FLOOR_PERCENT).then(|| {
                100.0 * (uncorrected.psg_percent - c.psg_percent) / uncorrected.psg_percent
            })
        });
        echoes.push(EchoMetrics { echo_index: e, te_ms, uncorrected, corrected, reduction_percent });
    }

    write_atomic(&cfg.out_dir.join("metrics.csv"), metrics_csv.as_bytes())?;
    write_atomic(
        &cfg.out_dir.join("controller_log.csv"),
        event_log_csv(&controller_run.events, cfg.te_ms.len()).as_bytes(),
    )?;
    write_atomic(&cfg.out_dir.join("mask_object.pgm"), &encode_pgm_mask(&scenario.object_mask))?;
    write_atomic(&cfg.out_dir.join("manifest.cfg"), manifest_text(cfg).as_bytes())?;

    let in_plane_std_hz = inplane_std(&scenario.riro, &scenario.object_mask)?;
    Ok(SimulateReport { echoes, in_plane_std_hz, out_dir: cfg.out_dir.clone() })
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub std_hz: f64,
    pub psg_off: f64,
    pub psg_on: f64,
    /// `None` when the uncorrected PSG is zero (reduction undefined).
    pub reduction_percent: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub out_dir: PathBuf,
}

fn sweep_csv(rows: &[SweepRow], aborted: Option<&str>) -> String {
    let mut out = String::from("std_hz,psg_off,psg_on,relative_reduction_percent\n");
    for r in rows {
        let red = match r.reduction_percent {
            Some(v) => format!("{v}"),
            None => "nan".into(),
        };
        let _ = writeln!(out, "{},{},{},{red}", r.std_hz, r.psg_off, r.psg_on);
    }
    if let Some(msg) = aborted {
        let _ = writeln!(out, "# aborted: {msg}");
    }
    out
}

/// One correction-off/on pair per target in-plane standard deviation,
/// using the first echo's PSG. A calibration failure writes the completed
/// rows with an abort marker and returns the error.
pub fn run_sweep(cfg: &ScenarioConfig, std_list: &[f64]) -> Result<SweepReport, CliError> {
    if std_list.is_empty() {
        return Err(CliError::Config("sweep needs at least one std value".into()));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join("sweep.csv");
    let mut rows: Vec<SweepRow> = Vec::new();
    for &std_hz in std_list {
        let mut point_cfg = cfg.clone();
        point_cfg.riro_target_std_hz = std_hz;
        point_cfg.correction = true;
        let scenario = match build_scenario(&point_cfg) {
            Ok(s) => s,
            Err(e) => {
                let msg = format!("std = {std_hz} Hz: {e}");
                write_atomic(&csv_path, sweep_csv(&rows, Some(&msg)).as_bytes())?;
                write_atomic(&cfg.out_dir.join("manifest.cfg"), manifest_text(cfg).as_bytes())?;
                return Err(CliError::Numeric(msg));
            }
        };
        let controller_run = run_scenario_controller(&point_cfg, &scenario, &zero_plan())?;
        let corr = controller_run.schedule_for(0).expect("single slice");
        let frames_off = acquire_kspace(&scenario.rho, &scenario.model, &scenario.seq, None)?;
        let frames_on = acquire_kspace(&scenario.rho, &scenario.model, &scenario.seq, Some(corr))?;
        let psg_off = psg(&reconstruct(&frames_off[0]).magnitude(), &scenario.ghost_masks)?;
        let psg_on = psg(&reconstruct(&frames_on[0]).magnitude(), &scenario.ghost_masks)?;
        let reduction_percent =
            (psg_off >= PSG_ZERO_FLOOR_PERCENT).then(|| 100.0 * (psg_off - psg_on) / psg_off);
        rows.push(SweepRow { std_hz, psg_off, psg_on, reduction_percent });
    }
    write_atomic(&csv_path, sweep_csv(&rows, None).as_bytes())?;
    write_atomic(&cfg.out_dir.join("manifest.cfg"), manifest_text(cfg).as_bytes())?;
    Ok(SweepReport { rows, out_dir: cfg.out_dir.clone() })
}

/// Sagittal training-volume geometry (x rows, z columns).
pub const TRAIN_NX: usize = 96;
pub const TRAIN_NZ: usize = 40;
pub const TRAIN_SPACING_MM: f64 = 1.25;

/// Ground-truth gradient coefficients for the synthetic training session:
/// the static field is `(a + b*x_norm) * z_mm` so its z-gradient is
/// `a + b*x_norm`, exactly recoverable by the finite-difference stencil.
const TRUTH_STATIC_GRAD: (f64, f64) = (0.8, 0.3);
const TRUTH_RIGO: (f64, f64) = (0.5, -0.2);

fn train_truth_volume((a, b): (f64, f64)) -> Vec<ScalarField2D> {
    (0..FIELDMAP_SLICES)
        .map(|_| {
            ScalarField2D::from_fn(TRAIN_NX, TRAIN_NZ, [TRAIN_SPACING_MM; 2], |x, z| {
                let x_norm = x as f64 / TRAIN_NX as f64;
                (a + b * x_norm) * (z as f64 * TRAIN_SPACING_MM)
            })
            .expect("finite truth volume")
        })
        .collect()
}

fn train_roi() -> Mask2D {
    Mask2D::from_fn(TRAIN_NX, TRAIN_NZ, |x, z| {
        (TRAIN_NX / 4..3 * TRAIN_NX / 4).contains(&x) && (TRAIN_NZ / 4..3 * TRAIN_NZ / 4).contains(&z)
    })
    .expect("non-empty ROI")
}

fn truth_roi_mean((a, b): (f64, f64), roi: &Mask2D) -> f64 {
    let grad = ScalarField2D::from_fn(TRAIN_NX, TRAIN_NZ, [TRAIN_SPACING_MM; 2], |x, _| {
        a + b * (x as f64 / TRAIN_NX as f64)
    })
    .expect("finite gradient");
    mask_mean(&grad, roi).expect("roi mean")
}

#[derive(Debug, Clone)]
pub struct TrainSliceReport {
    pub slice_index: usize,
    pub gz_static_mean: f64,
    pub rigo_max_mean: f64,
    pub err_gz_static: f64,
    pub err_rigo_max: f64,
    pub mean_residual_rms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub plan: ShimPlan,
    pub slices: Vec<TrainSliceReport>,
    /// Largest coefficient recovery error across slices, Hz/mm.
    pub max_recovery_error: f64,
    pub out_dir: PathBuf,
}

/// Runs the synthetic training session: pressure trace, field-map series,
/// z-gradients, per-voxel regression, ROI averaging and plan export.
pub fn run_train(cfg: &ScenarioConfig) -> Result<TrainReport, CliError> {
    let duration = (cfg.train_frames as f64 * cfg.train_frame_interval_s + 2.0)
        .max(cfg.resp_period_s);
    let trace = synth_pressure_trace_starting(0.0, cfg.resp_period_s, duration, 0.0, cfg.seed)?;
    let truth_static = train_truth_volume(TRUTH_STATIC_GRAD);
    let truth_riro = train_truth_volume(TRUTH_RIGO);
    let frames = synth_fieldmap_series(
        &truth_static,
        &truth_riro,
        &trace,
        cfg.train_frames,
        cfg.train_frame_interval_s,
        cfg.train_noise_std_hz,
        cfg.seed,
    )?;
    let times: Vec<f64> = frames.iter().map(|f| f.timestamp_s).collect();
    let pressures = drtz_core::training::associate_timestamps(&trace, &times)?;

    let gz_series: Vec<Vec<ScalarField2D>> = frames
        .iter()
        .map(|f| zgradient(f, TRAIN_SPACING_MM))
        .collect::<Result<_, _>>()?;
    let mut maps: Vec<RegressionMaps> = Vec::with_capacity(FIELDMAP_SLICES);
    for slice in 0..FIELDMAP_SLICES {
        let per_slice: Vec<ScalarField2D> = gz_series.iter().map(|g| g[slice].clone()).collect();
        maps.push(regress_gz_vs_pressure(&per_slice, &pressures)?);
    }
    let roi = train_roi();
    let rois = vec![roi.clone(); FIELDMAP_SLICES];
    let plan = build_shim_plan(&maps, &rois)?;

    let want_static = truth_roi_mean(TRUTH_STATIC_GRAD, &roi);
    let want_rigo = truth_roi_mean(TRUTH_RIGO, &roi);
    let mut quality_csv = String::from(
        "slice,gz_static_mean,rigo_max_mean,truth_gz_static_mean,truth_rigo_max_mean,\
         err_gz_static,err_rigo_max,mean_residual_rms\n",
    );
    let mut slices = Vec::new();
    let mut max_err: f64 = 0.0;
    for (entry, m) in plan.entries().iter().zip(maps.iter()) {
        let err_gz_static = (entry.gz_static_mean - want_static).abs();
        let err_rigo_max = (entry.rigo_max_mean - want_rigo).abs();
        let mean_residual_rms = mask_mean(&m.residual_rms, &roi)?;
        max_err = max_err.max(err_gz_static).max(err_rigo_max);
        let _ = writeln!(
            quality_csv,
            "{},{},{},{},{},{},{},{}",
            entry.slice_index,
            entry.gz_static_mean,
            entry.rigo_max_mean,
            want_static,
            want_rigo,
            err_gz_static,
            err_rigo_max,
            mean_residual_rms
        );
        slices.push(TrainSliceReport {
            slice_index: entry.slice_index,
            gz_static_mean: entry.gz_static_mean,
            rigo_max_mean: entry.rigo_max_mean,
            err_gz_static,
            err_rigo_max,
            mean_residual_rms,
        });
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    write_atomic(&cfg.out_dir.join("shim_plan.txt"), plan.to_text().as_bytes())?;
    write_atomic(&cfg.out_dir.join("train_quality.csv"), quality_csv.as_bytes())?;
    write_atomic(&cfg.out_dir.join("trace.csv"), trace.to_csv().as_bytes())?;
    write_atomic(&cfg.out_dir.join("manifest.cfg"), manifest_text(cfg).as_bytes())?;

    Ok(TrainReport { plan, slices, max_recovery_error: max_err, out_dir: cfg.out_dir.clone() })
}

/// Standalone PSG computation on an image file and an object-mask file.
pub fn run_psg(
    image_path: &Path,
    mask_path: &Path,
    pe_axis: usize,
    margin_px: usize,
) -> Result<f64, CliError> {
    let image = crate::pgm::read_pgm(image_path)?;
    let object = crate::pgm::read_pgm_mask(mask_path)?;
    if image.shape() != object.shape() {
        return Err(CliError::Config(format!(
            "image {:?} and mask {:?} differ in shape",
            image.shape(),
            object.shape()
        )));
    }
    let masks = auto_ghost_masks(&object, pe_axis, margin_px)?;
    Ok(psg(&image, &masks)?)
}

/// In-vivo style PSG on a simulated magnitude image, included for
/// completeness of the metric family.
pub fn psg_background_of(
    magnitude: &ScalarField2D,
    object_roi: &Mask2D,
    background: &Mask2D,
) -> Result<f64, CliError> {
    Ok(psg_background(magnitude, object_roi, background)?)
}
