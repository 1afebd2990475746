//! Deterministic per-excitation realtime loop.
//!
//! Before every excitation the controller looks up the bellows pressure
//! (shifted by the configured pipeline latency), predicts the
//! slice-averaged field z-gradient from the shim plan and converts it into
//! one compensation-gradient moment per echo. In parallel it emits the
//! field-domain correction value realized by that gradient blip,
//! `RIRO_max_corr * sin(omega_resp * (t - latency))`, which is what the
//! acquisition model consumes.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::mgre::{CorrectionLine, CorrectionSchedule};
use crate::training::{PressureTrace, ShimPlan, ShimPlanEntry};

/// One excitation event: which slice and phase-encode line is acquired,
/// and when the RF pulse plays out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    pub slice_index: usize,
    pub line_index: usize,
    pub time_s: f64,
}

/// Ordered list of excitations. Within each slice the times must be
/// strictly increasing and the line indices must cover `0..ny` exactly
/// once.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSchedule {
    excitations: Vec<Excitation>,
}

impl ExcitationSchedule {
    pub fn new(excitations: Vec<Excitation>) -> Result<Self> {
        if excitations.is_empty() {
            return Err(Error::InvalidParameter("excitation schedule must be non-empty".into()));
        }
        let max_slice = excitations.iter().map(|e| e.slice_index).max().unwrap();
        for slice in 0..=max_slice {
            let per_slice: Vec<&Excitation> =
                excitations.iter().filter(|e| e.slice_index == slice).collect();
            if per_slice.is_empty() {
                continue;
            }
            if !per_slice.windows(2).all(|w| w[0].time_s < w[1].time_s) {
                return Err(Error::InvalidParameter(format!(
                    "excitation times must be strictly increasing within slice {slice}"
                )));
            }
            let mut seen = vec![false; per_slice.len()];
            for e in &per_slice {
                if e.line_index >= seen.len() || seen[e.line_index] {
                    return Err(Error::InvalidParameter(format!(
                        "slice {slice} must cover lines 0..{} exactly once",
                        seen.len()
                    )));
                }
                seen[e.line_index] = true;
            }
        }
        Ok(Self { excitations })
    }

    /// Line-ordered schedule for one slice: line `j` fires at
    /// `j * tr_s + start_offset_s`.
    pub fn single_slice(slice_index: usize, ny: usize, tr_s: f64, start_offset_s: f64) -> Result<Self> {
        if ny == 0 {
            return Err(Error::InvalidParameter("need at least one line".into()));
        }
        Self::new(
            (0..ny)
                .map(|j| Excitation {
                    slice_index,
                    line_index: j,
                    time_s: j as f64 * tr_s + start_offset_s,
                })
                .collect(),
        )
    }

    pub fn excitations(&self) -> &[Excitation] {
        &self.excitations
    }

    fn lines_in_slice(&self, slice_index: usize) -> usize {
        self.excitations.iter().filter(|e| e.slice_index == slice_index).count()
    }

    fn slice_indices(&self) -> Vec<usize> {
        let mut slices: Vec<usize> = self.excitations.iter().map(|e| e.slice_index).collect();
        slices.sort_unstable();
        slices.dedup();
        slices
    }
}

/// Controller configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Pressure-to-gradient pipeline delay in seconds.
    pub latency_s: f64,
    /// Amplitude of the field-domain correction (the slice-ROI average of
    /// the RIRO amplitude), in Hz.
    pub roi_riro_corr_hz: f64,
    /// Static component of the field-domain correction, in Hz.
    pub static_corr_hz: f64,
    /// Echo times for the per-echo compensation moments, in ms.
    pub te_ms: Vec<f64>,
}

impl ControllerConfig {
    pub fn new(latency_s: f64, roi_riro_corr_hz: f64, static_corr_hz: f64, te_ms: Vec<f64>) -> Result<Self> {
        if !(latency_s >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "latency must be >= 0, got {latency_s}"
            )));
        }
        if te_ms.is_empty() {
            return Err(Error::InvalidParameter("controller needs at least one echo time".into()));
        }
        Ok(Self { latency_s, roi_riro_corr_hz, static_corr_hz, te_ms })
    }
}

/// Slice-average gradient predicted from the shim plan at the given
/// pressure: `gz_static_mean + rigo_max_mean * pressure`, in Hz/mm.
pub fn predict_gz(entry: &ShimPlanEntry, pressure: f64) -> f64 {
    entry.gz_static_mean + entry.rigo_max_mean * pressure
}

/// Moment (amplitude times duration) of the compensation gradient for one
/// echo: `-gz_avg * te`, in Hz*ms/mm.
pub fn compensation_moment(gz_avg_hz_per_mm: f64, te_ms: f64) -> f64 {
    -gz_avg_hz_per_mm * te_ms
}

/// Nearest 50 Hz pressure sample at `t_s - latency_s`.
pub fn sample_pressure(trace: &PressureTrace, t_s: f64, latency_s: f64) -> Result<f64> {
    trace.value_at(t_s - latency_s)
}

/// One logged controller decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerEvent {
    pub slice_index: usize,
    pub line_index: usize,
    pub time_s: f64,
    pub pressure: f64,
    pub gz_hz_per_mm: f64,
    /// One compensation moment per echo, Hz*ms/mm.
    pub moments: Vec<f64>,
}

/// Output of a controller run: the field-domain correction schedule per
/// slice (ascending slice index) plus the per-excitation event log.
#[derive(Debug, Clone)]
pub struct ControllerRun {
    pub schedules: Vec<(usize, CorrectionSchedule)>,
    pub events: Vec<ControllerEvent>,
}

impl ControllerRun {
    pub fn schedule_for(&self, slice_index: usize) -> Option<&CorrectionSchedule> {
        self.schedules
            .iter()
            .find(|(s, _)| *s == slice_index)
            .map(|(_, sched)| sched)
    }
}

/// Runs the realtime loop over the excitation schedule.
///
/// Per excitation: pressure lookup at `t - latency`, gradient prediction
/// from the plan, one moment per echo, and the field-domain correction
/// entry for the acquired line. The run is a pure function of its inputs.
pub fn run_controller(
    schedule: &ExcitationSchedule,
    trace: &PressureTrace,
    plan: &ShimPlan,
    cfg: &ControllerConfig,
    resp_period_s: f64,
) -> Result<ControllerRun> {
    if !(resp_period_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "respiration period must be positive, got {resp_period_s}"
        )));
    }
    let omega = TAU / resp_period_s;
    let mut events = Vec::with_capacity(schedule.excitations().len());
    let mut corrections: Vec<(usize, Vec<Option<CorrectionLine>>)> = schedule
        .slice_indices()
        .into_iter()
        .map(|s| (s, vec![None; schedule.lines_in_slice(s)]))
        .collect();
    for exc in schedule.excitations() {
        let pressure = sample_pressure(trace, exc.time_s, cfg.latency_s)?;
        let entry = plan.entry(exc.slice_index)?;
        let gz = predict_gz(entry, pressure);
        let moments = cfg.te_ms.iter().map(|&te| compensation_moment(gz, te)).collect();
        events.push(ControllerEvent {
            slice_index: exc.slice_index,
            line_index: exc.line_index,
            time_s: exc.time_s,
            pressure,
            gz_hz_per_mm: gz,
            moments,
        });
        let line = CorrectionLine {
            static_corr_hz: cfg.static_corr_hz,
            riro_corr_value_hz: cfg.roi_riro_corr_hz
                * (omega * (exc.time_s - cfg.latency_s)).sin(),
        };
        let slot = corrections
            .iter_mut()
            .find(|(s, _)| *s == exc.slice_index)
            .expect("slice present by construction");
        slot.1[exc.line_index] = Some(line);
    }
    let schedules = corrections
        .into_iter()
        .map(|(s, lines)| {
            let filled: Vec<CorrectionLine> =
                lines.into_iter().map(|l| l.expect("all lines visited")).collect();
            Ok((s, CorrectionSchedule::new(filled)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ControllerRun { schedules, events })
}

/// CSV rendering of the event log with one `moment_echo<k>` column per
/// echo: `slice,line,time_s,pressure,gz_hz_per_mm,moment_echo1,...`.
pub fn event_log_csv(events: &[ControllerEvent], n_echoes: usize) -> String {
    let mut out = String::from("slice,line,time_s,pressure,gz_hz_per_mm");
    for e in 1..=n_echoes {
        out.push_str(&format!(",moment_echo{e}"));
    }
    out.push('\n');
    for ev in events {
        out.push_str(&format!(
            "{},{},{},{},{}",
            ev.slice_index, ev.line_index, ev.time_s, ev.pressure, ev.gz_hz_per_mm
        ));
        for m in &ev.moments {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
    }
    out
}
