//! Scenario configuration: flat `key = value` text, one pair per line,
//! `#` comments. Keys are lowercase snake case; unknown keys are rejected
//! with the offending line number.

use std::collections::HashMap;
use std::path::PathBuf;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Cylinder,
    BodyCord,
}

impl PhantomKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhantomKind::Cylinder => "cylinder",
            PhantomKind::BodyCord => "body_cord",
        }
    }
}

/// Resolved scenario parameters. Defaults fill every optional key, so a
/// config echoed back (see the run manifest) reproduces the run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub phantom: PhantomKind,
    pub nx: usize,
    pub ny: usize,
    pub spacing_mm: f64,
    pub tr_ms: f64,
    pub te_ms: Vec<f64>,
    pub resp_period_s: f64,
    pub riro_peak_hz: f64,
    pub riro_target_std_hz: f64,
    pub static_field_hz: f64,
    pub correction: bool,
    pub latency_s: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub train_frames: usize,
    pub train_frame_interval_s: f64,
    pub train_noise_std_hz: f64,
}

const REQUIRED_KEYS: &[&str] = &[
    "phantom",
    "nx",
    "ny",
    "spacing_mm",
    "tr_ms",
    "te_ms",
    "resp_period_s",
    "riro_peak_hz",
    "riro_target_std_hz",
];

const OPTIONAL_KEYS: &[&str] = &[
    "static_field_hz",
    "correction",
    "latency_s",
    "seed",
    "out_dir",
    "train_frames",
    "train_frame_interval_s",
    "train_noise_std_hz",
];

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut seen: HashMap<&str, (usize, String)> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {lineno}: expected `key = value`, got `{line}`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            let canonical = REQUIRED_KEYS
                .iter()
                .chain(OPTIONAL_KEYS.iter())
                .find(|k| **k == key)
                .ok_or_else(|| CliError::Config(format!("line {lineno}: unknown key `{key}`")))?;
            if seen.insert(canonical, (lineno, value.to_string())).is_some() {
                return Err(CliError::Config(format!("line {lineno}: duplicate key `{key}`")));
            }
        }
        for key in REQUIRED_KEYS {
            if !seen.contains_key(key) {
                return Err(CliError::Config(format!("missing required key `{key}`")));
            }
        }

        let get = |key: &str| seen.get(key).cloned();
        let parse_f64 = |key: &str| -> Result<Option<(usize, f64)>, CliError> {
            match get(key) {
                None => Ok(None),
                Some((lineno, v)) => v
                    .parse::<f64>()
                    .map(|x| Some((lineno, x)))
                    .map_err(|e| CliError::Config(format!("line {lineno}: `{key}`: {e}"))),
            }
        };
        let parse_usize = |key: &str| -> Result<Option<(usize, usize)>, CliError> {
            match get(key) {
                None => Ok(None),
                Some((lineno, v)) => v
                    .parse::<usize>()
                    .map(|x| Some((lineno, x)))
                    .map_err(|e| CliError::Config(format!("line {lineno}: `{key}`: {e}"))),
            }
        };

        let (phantom_line, phantom_raw) = get("phantom").unwrap();
        let phantom = match phantom_raw.as_str() {
            "cylinder" => PhantomKind::Cylinder,
            "body_cord" => PhantomKind::BodyCord,
            other => {
                return Err(CliError::Config(format!(
                    "line {phantom_line}: `phantom` must be `cylinder` or `body_cord`, got `{other}`"
                )))
            }
        };

        let (nx_line, nx) = parse_usize("nx")?.unwrap();
        let (ny_line, ny) = parse_usize("ny")?.unwrap();
        let (spacing_line, spacing_mm) = parse_f64("spacing_mm")?.unwrap();
        let (tr_line, tr_ms) = parse_f64("tr_ms")?.unwrap();
        let (te_line, te_raw) = get("te_ms").unwrap();
        let te_ms: Vec<f64> = te_raw
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Config(format!("line {te_line}: `te_ms`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        let (period_line, resp_period_s) = parse_f64("resp_period_s")?.unwrap();
        let (peak_line, riro_peak_hz) = parse_f64("riro_peak_hz")?.unwrap();
        let (std_line, riro_target_std_hz) = parse_f64("riro_target_std_hz")?.unwrap();

        let static_field_hz = parse_f64("static_field_hz")?.map(|(_, v)| v).unwrap_or(0.0);
        let correction = match get("correction") {
            None => true,
            Some((lineno, v)) => match v.as_str() {
                "on" | "true" => true,
                "off" | "false" => false,
                other => {
                    return Err(CliError::Config(format!(
                        "line {lineno}: `correction` must be `on` or `off`, got `{other}`"
                    )))
                }
            },
        };
        let latency = parse_f64("latency_s")?;
        let latency_s = latency.map(|(_, v)| v).unwrap_or(0.0);
        let seed = match get("seed") {
            None => 0,
            Some((lineno, v)) => v
                .parse::<u64>()
                .map_err(|e| CliError::Config(format!("line {lineno}: `seed`: {e}")))?,
        };
        let out_dir = get("out_dir").map(|(_, v)| PathBuf::from(v)).unwrap_or_else(|| "out".into());
        let train_frames = parse_usize("train_frames")?.map(|(_, v)| v).unwrap_or(60);
        let train_frame_interval_s =
            parse_f64("train_frame_interval_s")?.map(|(_, v)| v).unwrap_or(1.0);
        let train_noise_std_hz = parse_f64("train_noise_std_hz")?.map(|(_, v)| v).unwrap_or(0.0);

        // validation with line-precise messages
        let fail = |lineno: usize, msg: String| Err(CliError::Config(format!("line {lineno}: {msg}")));
        if nx == 0 {
            return fail(nx_line, "nx must be positive".into());
        }
        if ny == 0 || ny % 2 != 0 {
            return fail(ny_line, format!("ny must be positive and even, got {ny}"));
        }
        if !(spacing_mm > 0.0) {
            return fail(spacing_line, format!("spacing_mm must be positive, got {spacing_mm}"));
        }
        if !(tr_ms > 0.0) {
            return fail(tr_line, format!("tr_ms must be positive, got {tr_ms}"));
        }
        if te_ms.is_empty() || te_ms[0] <= 0.0 || !te_ms.windows(2).all(|w| w[0] < w[1]) {
            return fail(
                te_line,
                format!("te_ms must be a strictly increasing list of positive times, got {te_ms:?}"),
            );
        }
        if *te_ms.last().unwrap() >= tr_ms {
            return fail(te_line, format!("te_ms must stay below tr_ms ({tr_ms} ms)"));
        }
        if !(resp_period_s > 0.0) {
            return fail(period_line, format!("resp_period_s must be positive, got {resp_period_s}"));
        }
        if !(riro_peak_hz >= 0.0) {
            return fail(peak_line, format!("riro_peak_hz must be >= 0, got {riro_peak_hz}"));
        }
        if !(riro_target_std_hz >= 0.0) {
            return fail(std_line, format!("riro_target_std_hz must be >= 0, got {riro_target_std_hz}"));
        }
        if let Some((lineno, v)) = latency {
            if !(v >= 0.0) {
                return fail(lineno, format!("latency_s must be >= 0, got {v}"));
            }
        }
        if train_frames < 3 {
            return Err(CliError::Config(format!(
                "train_frames must be at least 3, got {train_frames}"
            )));
        }
        if !(train_frame_interval_s > 0.0) {
            return Err(CliError::Config(format!(
                "train_frame_interval_s must be positive, got {train_frame_interval_s}"
            )));
        }
        if !(train_noise_std_hz >= 0.0) {
            return Err(CliError::Config(format!(
                "train_noise_std_hz must be >= 0, got {train_noise_std_hz}"
            )));
        }

        Ok(Self {
            phantom,
            nx,
            ny,
            spacing_mm,
            tr_ms,
            te_ms,
            resp_period_s,
            riro_peak_hz,
            riro_target_std_hz,
            static_field_hz,
            correction,
            latency_s,
            seed,
            out_dir,
            train_frames,
            train_frame_interval_s,
            train_noise_std_hz,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Echoes the resolved configuration in the config file format, so a
    /// manifest can be fed back as a config.
    pub fn to_config_text(&self) -> String {
        let te: Vec<String> = self.te_ms.iter().map(|t| t.to_string()).collect();
        format!(
            "phantom = {}\n\
             nx = {}\n\
             ny = {}\n\
             spacing_mm = {}\n\
             tr_ms = {}\n\
             te_ms = {}\n\
             resp_period_s = {}\n\
             riro_peak_hz = {}\n\
             riro_target_std_hz = {}\n\
             static_field_hz = {}\n\
             correction = {}\n\
             latency_s = {}\n\
             seed = {}\n\
             out_dir = {}\n\
             train_frames = {}\n\
             train_frame_interval_s = {}\n\
             train_noise_std_hz = {}\n",
            self.phantom.as_str(),
            self.nx,
            self.ny,
            self.spacing_mm,
            self.tr_ms,
            te.join(","),
            self.resp_period_s,
            self.riro_peak_hz,
            self.riro_target_std_hz,
            self.static_field_hz,
            if self.correction { "on" } else { "off" },
            self.latency_s,
            self.seed,
            self.out_dir.display(),
            self.train_frames,
            self.train_frame_interval_s,
            self.train_noise_std_hz,
        )
    }
}
