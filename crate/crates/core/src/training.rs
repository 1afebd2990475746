//! Calibration ("training") pipeline: pressure traces, field-map time
//! series, dual-echo field mapping, z-gradient extraction, voxel-wise
//! regression against pressure and shim-plan export.
//!
//! Sagittal field-map slices are stored as x-z planes: array axis 0 is the
//! x direction, axis 1 the z (slice-select) direction, so the field
//! z-gradient is an in-plane derivative along axis 1.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::field::{Mask2D, ScalarField2D};
use crate::mgre::ComplexImage2D;

/// Pressure sampling rate of the physiological monitoring unit.
pub const PRESSURE_SAMPLE_RATE_HZ: f64 = 50.0;

/// Normalized bellows-pressure log sampled at 50 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureTrace {
    samples: Vec<f64>,
    start_time_s: f64,
}

impl PressureTrace {
    pub fn new(samples: Vec<f64>, start_time_s: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("pressure trace must be non-empty".into()));
        }
        if !samples.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(
                "pressure samples must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { samples, start_time_s })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn end_time_s(&self) -> f64 {
        self.start_time_s + (self.samples.len() - 1) as f64 / PRESSURE_SAMPLE_RATE_HZ
    }

    pub fn sample_time_s(&self, index: usize) -> f64 {
        self.start_time_s + index as f64 / PRESSURE_SAMPLE_RATE_HZ
    }

    /// Index of the sample nearest to `t_s`; an exact half-sample tie goes
    /// to the earlier sample.
    pub fn nearest_sample_index(&self, t_s: f64) -> Result<usize> {
        let end = self.end_time_s();
        if t_s < self.start_time_s || t_s > end {
            return Err(Error::OutOfSpan {
                time_s: t_s,
                start_s: self.start_time_s,
                end_s: end,
            });
        }
        let r = (t_s - self.start_time_s) * PRESSURE_SAMPLE_RATE_HZ;
        let k = r.floor();
        let frac = r - k;
        let mut idx = k as usize;
        if frac > 0.5 {
            idx += 1;
        }
        Ok(idx.min(self.samples.len() - 1))
    }

    pub fn value_at(&self, t_s: f64) -> Result<f64> {
        Ok(self.samples[self.nearest_sample_index(t_s)?])
    }

    /// CSV rendering with a `time_s,pressure` header, one sample per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,pressure\n");
        for (k, p) in self.samples.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.sample_time_s(k), p));
        }
        out
    }
}

/// Synthesizes a bellows-like trace starting at `start_time_s`:
/// `P(t) = 0.5 + 0.5 * sin(2pi * t / resp_period_s) + noise`, clamped to
/// `[0, 1]`. Deterministic for a fixed seed.
pub fn synth_pressure_trace_starting(
    start_time_s: f64,
    resp_period_s: f64,
    duration_s: f64,
    noise_std: f64,
    seed: u64,
) -> Result<PressureTrace> {
    if !(resp_period_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "respiration period must be positive, got {resp_period_s}"
        )));
    }
    if duration_s < resp_period_s {
        return Err(Error::InvalidParameter(format!(
            "trace duration ({duration_s} s) must cover at least one respiration period \
             ({resp_period_s} s)"
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise std must be >= 0, got {noise_std}")));
    }
    let n = (duration_s * PRESSURE_SAMPLE_RATE_HZ).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let samples = (0..n)
        .map(|k| {
            let t = start_time_s + k as f64 / PRESSURE_SAMPLE_RATE_HZ;
            let clean = 0.5 + 0.5 * (TAU * t / resp_period_s).sin();
            let noisy = if noise_std > 0.0 { clean + normal.sample(&mut rng) } else { clean };
            noisy.clamp(0.0, 1.0)
        })
        .collect();
    PressureTrace::new(samples, start_time_s)
}

/// Synthetic pressure trace starting at t = 0.
pub fn synth_pressure_trace(
    resp_period_s: f64,
    duration_s: f64,
    noise_std: f64,
    seed: u64,
) -> Result<PressureTrace> {
    synth_pressure_trace_starting(0.0, resp_period_s, duration_s, noise_std, seed)
}

/// Looks up the pressure nearest to each acquisition time.
pub fn associate_timestamps(trace: &PressureTrace, acquisition_times_s: &[f64]) -> Result<Vec<f64>> {
    acquisition_times_s.iter().map(|&t| trace.value_at(t)).collect()
}

/// One time point of the sagittal field-map series: three x-z slices.
#[derive(Debug, Clone)]
pub struct FieldMapFrame {
    pub timestamp_s: f64,
    pub slices: Vec<ScalarField2D>,
}

/// Number of sagittal slices per field-map frame.
pub const FIELDMAP_SLICES: usize = 3;

impl FieldMapFrame {
    pub fn new(timestamp_s: f64, slices: Vec<ScalarField2D>) -> Result<Self> {
        if slices.len() != FIELDMAP_SLICES {
            return Err(Error::InvalidParameter(format!(
                "field-map frame needs exactly {FIELDMAP_SLICES} slices, got {}",
                slices.len()
            )));
        }
        let shape = slices[0].shape();
        if !slices.iter().all(|s| s.shape() == shape) {
            return Err(Error::ShapeMismatch("field-map slices differ in shape".into()));
        }
        Ok(Self { timestamp_s, slices })
    }
}

/// Synthesizes a field-map time series from a ground-truth static volume
/// and RIRO volume: `frame_i = static + riro * P(t_i) + noise` with
/// `t_i = i * frame_interval_s`. Pressure is read from the trace with the
/// nearest-sample rule.
pub fn synth_fieldmap_series(
    truth_static: &[ScalarField2D],
    truth_riro: &[ScalarField2D],
    trace: &PressureTrace,
    n_frames: usize,
    frame_interval_s: f64,
    noise_std_hz: f64,
    seed: u64,
) -> Result<Vec<FieldMapFrame>> {
    if truth_static.len() != FIELDMAP_SLICES || truth_riro.len() != FIELDMAP_SLICES {
        return Err(Error::InvalidParameter(format!(
            "ground-truth volumes need {FIELDMAP_SLICES} slices"
        )));
    }
    if truth_static
        .iter()
        .zip(truth_riro.iter())
        .any(|(s, r)| s.shape() != r.shape())
    {
        return Err(Error::ShapeMismatch("static and RIRO truth volumes differ".into()));
    }
    if n_frames == 0 {
        return Err(Error::InvalidParameter("need at least one frame".into()));
    }
    if !(frame_interval_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frame interval must be positive, got {frame_interval_s}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std_hz.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(format!("noise std: {e}")))?;
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let t = i as f64 * frame_interval_s;
        let pressure = trace.value_at(t)?;
        let slices = truth_static
            .iter()
            .zip(truth_riro.iter())
            .map(|(st, ri)| {
                let mut values = Array2::zeros(st.values().raw_dim());
                for (out, (&s, &r)) in values
                    .iter_mut()
                    .zip(st.values().iter().zip(ri.values().iter()))
                {
                    let noise = if noise_std_hz > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    *out = s + r * pressure + noise;
                }
                ScalarField2D::new(values, st.spacing_mm())
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(FieldMapFrame::new(t, slices)?);
    }
    Ok(frames)
}

/// Field map plus the validity mask marking voxels with usable signal.
#[derive(Debug, Clone)]
pub struct DualEchoFieldMap {
    pub field_hz: ScalarField2D,
    pub valid: Mask2D,
}

/// Dual-echo field map: `dB0 = arg(echo2 * conj(echo1)) / (2pi * dTE)`.
/// Offsets beyond `1/(2 * dTE)` alias to the principal value. Voxels where
/// either echo has zero magnitude map to 0 Hz and are flagged invalid.
pub fn dual_echo_fieldmap(
    echo1: &ComplexImage2D,
    echo2: &ComplexImage2D,
    delta_te_ms: f64,
) -> Result<DualEchoFieldMap> {
    if echo1.data.dim() != echo2.data.dim() {
        return Err(Error::ShapeMismatch(format!(
            "echo images differ: {:?} vs {:?}",
            echo1.data.dim(),
            echo2.data.dim()
        )));
    }
    if !(delta_te_ms > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "echo-time difference must be positive, got {delta_te_ms} ms"
        )));
    }
    let delta_te_s = delta_te_ms * 1e-3;
    let mut field = Array2::zeros(echo1.data.raw_dim());
    let mut valid = Array2::from_elem(echo1.data.raw_dim(), true);
    for (idx, (&e1, &e2)) in echo1.data.indexed_iter().zip(echo2.data.iter()).map(|((idx, a), b)| (idx, (a, b))) {
        if e1.norm() == 0.0 || e2.norm() == 0.0 {
            field[idx] = 0.0;
            valid[idx] = false;
        } else {
            field[idx] = (e2 * e1.conj()).arg() / (TAU * delta_te_s);
        }
    }
    Ok(DualEchoFieldMap {
        field_hz: ScalarField2D::new(field, echo1.spacing_mm)?,
        valid: Mask2D::new(valid)?,
    })
}

/// Unit-magnitude echo pair accruing phase `+2pi * offset * TE`, the
/// counterpart of [`dual_echo_fieldmap`] for round-trip tests and
/// synthetic training data.
pub fn synth_dual_echoes(
    offset_hz: &ScalarField2D,
    te1_ms: f64,
    te2_ms: f64,
) -> (ComplexImage2D, ComplexImage2D) {
    let echo = |te_ms: f64| {
        let te_s = te_ms * 1e-3;
        let data = offset_hz.values().mapv(|f| Complex64::from_polar(1.0, TAU * f * te_s));
        ComplexImage2D { data, spacing_mm: offset_hz.spacing_mm() }
    };
    (echo(te1_ms), echo(te2_ms))
}

/// Per-slice field gradient along z: central differences along array
/// axis 1, one-sided at the boundaries. Exact for fields linear in z.
pub fn zgradient(frame: &FieldMapFrame, dz_mm: f64) -> Result<Vec<ScalarField2D>> {
    if !(dz_mm > 0.0) {
        return Err(Error::InvalidParameter(format!("dz must be positive, got {dz_mm} mm")));
    }
    frame
        .slices
        .iter()
        .map(|slice| {
            let (n_x, n_z) = slice.shape();
            if n_z < 2 {
                return Err(Error::InvalidParameter(format!(
                    "z-gradient needs at least 2 samples along z, got {n_z}"
                )));
            }
            let v = slice.values();
            let grad = Array2::from_shape_fn((n_x, n_z), |(r, z)| {
                if z == 0 {
                    (v[(r, 1)] - v[(r, 0)]) / dz_mm
                } else if z == n_z - 1 {
                    (v[(r, n_z - 1)] - v[(r, n_z - 2)]) / dz_mm
                } else {
                    (v[(r, z + 1)] - v[(r, z - 1)]) / (2.0 * dz_mm)
                }
            });
            ScalarField2D::new(grad, slice.spacing_mm())
        })
        .collect()
}

/// Voxel-wise regression output: intercept map, slope map and residual
/// RMS, all in the input's units (Hz/mm for gradient input).
#[derive(Debug, Clone)]
pub struct RegressionMaps {
    pub gz_static: ScalarField2D,
    pub rigo_max: ScalarField2D,
    pub residual_rms: ScalarField2D,
}

/// Per-voxel ordinary least squares of the gradient time series against
/// pressure: intercept is the static gradient, slope the maximum
/// respiration-induced gradient offset per unit pressure.
pub fn regress_gz_vs_pressure(
    gz_frames: &[ScalarField2D],
    pressures: &[f64],
) -> Result<RegressionMaps> {
    let n = gz_frames.len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "regression needs at least 3 frames, got {n}"
        )));
    }
    if pressures.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} frames vs {} pressures",
            pressures.len()
        )));
    }
    let shape = gz_frames[0].shape();
    if !gz_frames.iter().all(|f| f.shape() == shape) {
        return Err(Error::ShapeMismatch("gradient frames differ in shape".into()));
    }
    let nf = n as f64;
    let p_mean = pressures.iter().sum::<f64>() / nf;
    let sp: f64 = pressures.iter().map(|p| (p - p_mean) * (p - p_mean)).sum();
    if sp == 0.0 {
        return Err(Error::DegenerateDesign(
            "pressure has zero variance across frames".into(),
        ));
    }
    let dim = gz_frames[0].values().raw_dim();
    let mut mean = Array2::<f64>::zeros(dim.clone());
    for f in gz_frames {
        mean += f.values();
    }
    mean.mapv_inplace(|v| v / nf);
    let mut cov = Array2::<f64>::zeros(dim.clone());
    for (f, &p) in gz_frames.iter().zip(pressures.iter()) {
        let w = p - p_mean;
        cov.zip_mut_with(f.values(), |acc, &v| *acc += w * v);
    }
    let slope = cov.mapv(|v| v / sp);
    let intercept = &mean - &(&slope * p_mean);
    let mut ss = Array2::<f64>::zeros(dim);
    for (f, &p) in gz_frames.iter().zip(pressures.iter()) {
        for ((acc, &v), (&a, &b)) in ss
            .iter_mut()
            .zip(f.values().iter())
            .zip(intercept.iter().zip(slope.iter()))
        {
            let r = v - (a + b * p);
            *acc += r * r;
        }
    }
    let rms = ss.mapv(|v| (v / nf).sqrt());
    let spacing = gz_frames[0].spacing_mm();
    Ok(RegressionMaps {
        gz_static: ScalarField2D::new(intercept, spacing)?,
        rigo_max: ScalarField2D::new(slope, spacing)?,
        residual_rms: ScalarField2D::new(rms, spacing)?,
    })
}

/// Calibration result for one target slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShimPlanEntry {
    pub slice_index: usize,
    pub gz_static_mean: f64,
    pub rigo_max_mean: f64,
}

/// Per-slice calibration coefficients consumed by the realtime controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ShimPlan {
    entries: Vec<ShimPlanEntry>,
}

impl ShimPlan {
    pub fn new(entries: Vec<ShimPlanEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("shim plan must be non-empty".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.slice_index != i {
                return Err(Error::InvalidParameter(format!(
                    "slice indices must be contiguous from 0, entry {i} has index {}",
                    e.slice_index
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ShimPlanEntry] {
        &self.entries
    }

    pub fn entry(&self, slice_index: usize) -> Result<&ShimPlanEntry> {
        self.entries
            .get(slice_index)
            .ok_or_else(|| Error::OutOfRange(format!("no shim-plan entry for slice {slice_index}")))
    }

    /// Plain-text rendering: one line per slice,
    /// `slice_index gz_static_mean rigo_max_mean`, no header, LF endings.
    /// Floats carry 17 significant digits so the file round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} {:.16e} {:.16e}\n",
                e.slice_index, e.gz_static_mean, e.rigo_max_mean
            ));
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::InvalidParameter(format!(
                    "shim-plan line {}: expected 3 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse().map_err(|e| {
                    Error::InvalidParameter(format!(
                        "shim-plan line {}: bad {what} ({e})",
                        lineno + 1
                    ))
                })
            };
            entries.push(ShimPlanEntry {
                slice_index: fields[0].parse().map_err(|e| {
                    Error::InvalidParameter(format!("shim-plan line {}: bad index ({e})", lineno + 1))
                })?,
                gz_static_mean: parse(fields[1], "static gradient")?,
                rigo_max_mean: parse(fields[2], "RIGO amplitude")?,
            });
        }
        Self::new(entries)
    }
}

/// ROI means of the regression maps, one entry per slice.
pub fn build_shim_plan(maps: &[RegressionMaps], roi_per_slice: &[Mask2D]) -> Result<ShimPlan> {
    if maps.len() != roi_per_slice.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} regression maps vs {} ROIs",
            maps.len(),
            roi_per_slice.len()
        )));
    }
    let entries = maps
        .iter()
        .zip(roi_per_slice.iter())
        .enumerate()
        .map(|(slice_index, (m, roi))| {
            Ok(ShimPlanEntry {
                slice_index,
                gz_static_mean: crate::field::mask_mean(&m.gz_static, roi)?,
                rigo_max_mean: crate::field::mask_mean(&m.rigo_max, roi)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ShimPlan::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pressure_trace_follows_sine_law() {
        let trace = synth_pressure_trace(2.5, 5.0, 0.0, 1).unwrap();
        // quarter period: nearest representable sample to 0.625 s
        let k = trace.nearest_sample_index(0.625).unwrap();
        let t = trace.sample_time_s(k);
        let expected = 0.5 + 0.5 * (TAU * t / 2.5).sin();
        assert_eq!(trace.samples()[k], expected);
        assert!((trace.samples()[k] - 1.0).abs() < 1e-3);
        // min ~0 and max ~1 over a full period
        let max = trace.samples().iter().cloned().fold(f64::MIN, f64::max);
        let min = trace.samples().iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 1.0).abs() < 1e-3, "max {max}");
        assert!(min.abs() < 1e-3, "min {min}");
    }

    #[test]
    fn pressure_trace_deterministic_for_fixed_seed() {
        let a = synth_pressure_trace(2.5, 10.0, 0.02, 99).unwrap();
        let b = synth_pressure_trace(2.5, 10.0, 0.02, 99).unwrap();
        assert_eq!(a, b);
        let c = synth_pressure_trace(2.5, 10.0, 0.02, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nearest_sample_rules() {
        let trace = synth_pressure_trace(2.5, 5.0, 0.0, 1).unwrap();
        // exactly on a sample
        assert_eq!(trace.nearest_sample_index(0.26).unwrap(), 13);
        // 9 ms past a sample rounds back
        assert_eq!(trace.nearest_sample_index(0.26 + 0.009).unwrap(), 13);
        // 0.25 s is exactly 12.5 sample periods: tie goes to the earlier one
        assert_eq!(trace.nearest_sample_index(0.25).unwrap(), 12);
        // out of span
        assert!(trace.nearest_sample_index(-0.01).is_err());
        assert!(trace.nearest_sample_index(5.5).is_err());
    }

    fn truth_volume(f: impl Fn(usize, usize) -> f64) -> Vec<ScalarField2D> {
        (0..FIELDMAP_SLICES)
            .map(|s| {
                ScalarField2D::from_fn(8, 10, [1.25, 1.25], |r, z| f(r, z) + s as f64)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn fieldmap_series_reproduces_truth_extremes() {
        let statics = truth_volume(|r, z| r as f64 + 0.5 * z as f64);
        let riro = truth_volume(|_, z| 2.0 * z as f64);
        // trace pinned at zero pressure
        let trace = PressureTrace::new(vec![0.0; 200], 0.0).unwrap();
        let frames = synth_fieldmap_series(&statics, &riro, &trace, 3, 1.0, 0.0, 0).unwrap();
        for frame in &frames {
            for (sl, truth) in frame.slices.iter().zip(statics.iter()) {
                assert_eq!(sl.values(), truth.values());
            }
        }
        // pinned at full pressure
        let trace = PressureTrace::new(vec![1.0; 200], 0.0).unwrap();
        let frames = synth_fieldmap_series(&statics, &riro, &trace, 3, 1.0, 0.0, 0).unwrap();
        for frame in &frames {
            for ((sl, st), ri) in frame.slices.iter().zip(statics.iter()).zip(riro.iter()) {
                for ((&v, &s), &r) in sl
                    .values()
                    .iter()
                    .zip(st.values().iter())
                    .zip(ri.values().iter())
                {
                    assert!((v - (s + r)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fieldmap_series_noise_mean_converges() {
        let statics = truth_volume(|_, _| 5.0);
        let riro = truth_volume(|_, _| 0.0);
        let trace = PressureTrace::new(vec![0.0; 4000], 0.0).unwrap();
        let n = 60;
        let noise = 0.5;
        let frames = synth_fieldmap_series(&statics, &riro, &trace, n, 1.0, noise, 7).unwrap();
        // per-voxel sample means approach the truth within the 3-standard-error
        // bound; with 240 voxels a few excursions are expected, so check the
        // hit rate rather than every voxel
        let bound = 3.0 * noise / (n as f64).sqrt();
        let (rows, cols) = frames[0].slices[0].shape();
        let mut within = 0usize;
        let mut total = 0usize;
        for s in 0..FIELDMAP_SLICES {
            for r in 0..rows {
                for z in 0..cols {
                    let mean: f64 =
                        frames.iter().map(|f| f.slices[s].get(r, z)).sum::<f64>() / n as f64;
                    let truth = statics[s].get(r, z);
                    total += 1;
                    if (mean - truth).abs() < bound {
                        within += 1;
                    }
                }
            }
        }
        assert!(
            within as f64 >= 0.95 * total as f64,
            "{within}/{total} voxel means within 3 standard errors"
        );
    }

    #[test]
    fn dual_echo_recovers_uniform_offset() {
        let offset = ScalarField2D::uniform(6, 6, [1.0; 2], 50.0).unwrap();
        let (e1, e2) = synth_dual_echoes(&offset, 2.46, 4.92);
        let map = dual_echo_fieldmap(&e1, &e2, 4.92 - 2.46).unwrap();
        for &v in map.field_hz.values().iter() {
            assert!((v - 50.0).abs() < 1e-9, "{v}");
        }
        assert_eq!(map.valid.count(), 36);
    }

    #[test]
    fn dual_echo_zero_offset() {
        let offset = ScalarField2D::uniform(4, 4, [1.0; 2], 0.0).unwrap();
        let (e1, e2) = synth_dual_echoes(&offset, 2.46, 4.92);
        let map = dual_echo_fieldmap(&e1, &e2, 2.46).unwrap();
        assert!(map.field_hz.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn dual_echo_aliases_beyond_nyquist() {
        let offset = ScalarField2D::uniform(4, 4, [1.0; 2], 250.0).unwrap();
        let (e1, e2) = synth_dual_echoes(&offset, 2.46, 4.92);
        let map = dual_echo_fieldmap(&e1, &e2, 2.46).unwrap();
        let expected = 250.0 - 1.0 / 2.46e-3; // about -156.5 Hz
        for &v in map.field_hz.values().iter() {
            assert!((v - expected).abs() < 1e-6, "{v} vs {expected}");
        }
    }

    #[test]
    fn dual_echo_flags_zero_magnitude() {
        let offset = ScalarField2D::uniform(2, 2, [1.0; 2], 10.0).unwrap();
        let (mut e1, e2) = synth_dual_echoes(&offset, 2.46, 4.92);
        e1.data[(0, 0)] = Complex64::new(0.0, 0.0);
        let map = dual_echo_fieldmap(&e1, &e2, 2.46).unwrap();
        assert_eq!(map.field_hz.get(0, 0), 0.0);
        assert!(!map.valid.get(0, 0));
        assert!(map.valid.get(1, 1));
    }

    #[test]
    fn zgradient_exact_for_linear_field() {
        let slope = 1.7;
        let slices: Vec<_> = (0..3)
            .map(|_| {
                ScalarField2D::from_fn(4, 7, [1.0, 2.4], |_, z| slope * (z as f64 * 2.4)).unwrap()
            })
            .collect();
        let frame = FieldMapFrame::new(0.0, slices).unwrap();
        let grads = zgradient(&frame, 2.4).unwrap();
        for g in &grads {
            for &v in g.values().iter() {
                assert!((v - slope).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn zgradient_constant_field_is_zero() {
        let slices: Vec<_> = (0..3)
            .map(|_| ScalarField2D::uniform(4, 5, [1.0; 2], 3.0).unwrap())
            .collect();
        let frame = FieldMapFrame::new(0.0, slices).unwrap();
        let grads = zgradient(&frame, 1.0).unwrap();
        assert!(grads.iter().all(|g| g.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zgradient_quadratic_matches_hand_stencil() {
        let b = 0.3;
        let dz = 2.4;
        let slices: Vec<_> = (0..3)
            .map(|_| {
                ScalarField2D::from_fn(2, 5, [1.0, dz], |_, z| {
                    let zm = z as f64 * dz;
                    b * zm * zm
                })
                .unwrap()
            })
            .collect();
        let frame = FieldMapFrame::new(0.0, slices).unwrap();
        let grads = zgradient(&frame, dz).unwrap();
        // interior central differences of b*z^2 evaluate to 2*b*z exactly
        for z in 1..4usize {
            let zm = z as f64 * dz;
            let expected = 2.0 * b * zm;
            assert!((grads[0].get(0, z) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_recovers_noiseless_coefficients() {
        let a = 4.0;
        let b = -2.5;
        let pressures: Vec<f64> = (0..10).map(|i| 0.5 + 0.4 * (i as f64 * 0.7).sin()).collect();
        let frames: Vec<_> = pressures
            .iter()
            .map(|&p| {
                ScalarField2D::from_fn(3, 3, [1.0; 2], |r, c| {
                    let aa = a + r as f64;
                    let bb = b + c as f64;
                    aa + bb * p
                })
                .unwrap()
            })
            .collect();
        let maps = regress_gz_vs_pressure(&frames, &pressures).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((maps.gz_static.get(r, c) - (a + r as f64)).abs() < 1e-9);
                assert!((maps.rigo_max.get(r, c) - (b + c as f64)).abs() < 1e-9);
                assert!(maps.residual_rms.get(r, c) < 1e-9);
            }
        }
    }

    #[test]
    fn regression_rejects_constant_pressure() {
        let frames: Vec<_> = (0..5)
            .map(|_| ScalarField2D::uniform(2, 2, [1.0; 2], 1.0).unwrap())
            .collect();
        let err = regress_gz_vs_pressure(&frames, &[0.5; 5]).unwrap_err();
        assert!(matches!(err, Error::DegenerateDesign(_)));
    }

    #[test]
    fn shim_plan_roi_means() {
        let uniform = |v: f64| ScalarField2D::uniform(4, 4, [1.0; 2], v).unwrap();
        let maps = vec![RegressionMaps {
            gz_static: uniform(5.0),
            rigo_max: uniform(2.0),
            residual_rms: uniform(0.0),
        }];
        let roi = Mask2D::from_fn(4, 4, |r, c| r == 1 && c == 2).unwrap();
        let plan = build_shim_plan(&maps, &[roi]).unwrap();
        assert_eq!(plan.entries()[0].gz_static_mean, 5.0);
        assert_eq!(plan.entries()[0].rigo_max_mean, 2.0);

        // checkerboard of 1 and 3 averages to 2 under a full mask
        let checker = ScalarField2D::from_fn(4, 4, [1.0; 2], |r, c| {
            if (r + c) % 2 == 0 {
                1.0
            } else {
                3.0
            }
        })
        .unwrap();
        let maps = vec![RegressionMaps {
            gz_static: checker.clone(),
            rigo_max: checker,
            residual_rms: uniform(0.0),
        }];
        let full = Mask2D::from_fn(4, 4, |_, _| true).unwrap();
        let plan = build_shim_plan(&maps, &[full]).unwrap();
        assert_eq!(plan.entries()[0].gz_static_mean, 2.0);
    }

    #[test]
    fn shim_plan_text_round_trips() {
        let plan = ShimPlan::new(vec![
            ShimPlanEntry { slice_index: 0, gz_static_mean: 0.123456789012345, rigo_max_mean: -2.5 },
            ShimPlanEntry { slice_index: 1, gz_static_mean: 1e-12, rigo_max_mean: 3.0e4 },
        ])
        .unwrap();
        let text = plan.to_text();
        let parsed = ShimPlan::parse_text(&text).unwrap();
        assert_eq!(plan, parsed);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn shim_plan_requires_contiguous_indices() {
        let entries = vec![ShimPlanEntry { slice_index: 1, gz_static_mean: 0.0, rigo_max_mean: 0.0 }];
        assert!(ShimPlan::new(entries).is_err());
    }
}
