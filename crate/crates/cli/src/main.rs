use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use drtz_cli::config::ScenarioConfig;
use drtz_cli::error::CliError;
use drtz_cli::runner;

/// Simulation toolkit for dynamic realtime z-shimming of 2D multi-echo
/// gradient-echo MRI.
#[derive(Parser)]
#[command(name = "drtz", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario with and without correction.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one correction-off/on pair per RIRO in-plane std target.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated std targets in Hz, e.g. "0.5,1.0,2.1".
        #[arg(long = "std-list")]
        std_list: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the synthetic calibration pipeline and export the shim plan.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Percent Signal Ghosting of an image given its object mask.
    Psg {
        /// 16-bit binary PGM magnitude image.
        #[arg(long)]
        image: PathBuf,
        /// PGM mask of the imaged object (nonzero = inside).
        #[arg(long = "object-mask")]
        object_mask: PathBuf,
        /// Phase-encode array axis (0 = rows, 1 = columns).
        #[arg(long, default_value_t = runner::PE_AXIS)]
        pe_axis: usize,
        /// Gap between the object and the ghost ROIs, in pixels.
        #[arg(long, default_value_t = runner::GHOST_MARGIN_PX)]
        margin: usize,
    },
}

fn load_config(
    path: &PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Simulate { config, out, seed } => {
            let cfg = load_config(&config, out, seed)?;
            let report = runner::run_simulate(&cfg)?;
            println!(
                "simulated {} ({} x {}), RIRO in-plane std {:.4} Hz",
                cfg.phantom.as_str(),
                cfg.nx,
                cfg.ny,
                report.in_plane_std_hz
            );
            for echo in &report.echoes {
                println!(
                    "echo {} (TE {} ms): PSG off {:.4} %, PSG on {} %, reduction {} %",
                    echo.echo_index + 1,
                    echo.te_ms,
                    echo.uncorrected.psg_percent,
                    fmt_opt(echo.corrected.as_ref().map(|c| c.psg_percent)),
                    fmt_opt(echo.reduction_percent),
                );
            }
            println!("outputs in {}", report.out_dir.display());
        }
        Command::Sweep { config, std_list, out, seed } => {
            let cfg = load_config(&config, out, seed)?;
            let stds: Vec<f64> = std_list
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Config(format!("--std-list: `{tok}`: {e}")))
                })
                .collect::<Result<_, _>>()?;
            let report = runner::run_sweep(&cfg, &stds)?;
            for row in &report.rows {
                println!(
                    "std {:.4} Hz: PSG off {:.4} %, on {:.4} %, reduction {} %",
                    row.std_hz,
                    row.psg_off,
                    row.psg_on,
                    row.reduction_percent
                        .map(|r| format!("{r:.2}"))
                        .unwrap_or_else(|| "nan".into())
                );
            }
            println!("outputs in {}", report.out_dir.display());
        }
        Command::Train { config, out, seed } => {
            let cfg = load_config(&config, out, seed)?;
            let report = runner::run_train(&cfg)?;
            for s in &report.slices {
                println!(
                    "slice {}: <Gz,static> {:.6} Hz/mm (err {:.3e}), <RIGOz,max> {:.6} Hz/mm (err {:.3e})",
                    s.slice_index, s.gz_static_mean, s.err_gz_static, s.rigo_max_mean, s.err_rigo_max
                );
            }
            println!(
                "max recovery error {:.3e} Hz/mm; outputs in {}",
                report.max_recovery_error,
                report.out_dir.display()
            );
        }
        Command::Psg { image, object_mask, pe_axis, margin } => {
            let value = runner::run_psg(&image, &object_mask, pe_axis, margin)?;
            println!("{value}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
