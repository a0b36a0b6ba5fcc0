//! Command-line driver, file formats and metrics for the `qis` tool.

pub mod config;
pub mod error;
pub mod formats;
pub mod metrics;
pub mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use qis_core::denoise::DenoiserRegistry;
use qis_core::recon::{reconstruct_fast_with, reconstruct_iterative_with};
use qis_core::stats::InverseKind;
use qis_core::{
    fit_color_correction, simulate_stack, test_scene, ReconParams, Readout, SceneImage, SensorConfig,
};

use config::{parse_list, Settings};
use error::{CliError, Result};
use formats::{read_image, read_stack, write_image, write_stack, BitDepth, ReadOptions};

pub use error::CliError as Error;

#[derive(Debug, Parser)]
#[command(name = "qis", version, about = "Photon-counting color sensor simulation and reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scene image to QISF frame stack (written to --stack, else --out).
    Simulate,
    /// QISF stack to display-encoded 8-bit PPM.
    Reconstruct,
    /// Print the PSNR between two images.
    Evaluate {
        image: PathBuf,
        /// Defaults to the `reference` setting.
        other: Option<PathBuf>,
    },
    /// PSNR table over bit depths, photon levels and seeds.
    Sweep,
}

/// Parse `argv` and run; returns the process exit status.
pub fn run<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(stderr, "qis: {}", first.trim_start_matches("error: "));
            return 1;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "qis: {}", one_line(&e));
            e.exit_code()
        }
    }
}

fn one_line(e: &CliError) -> String {
    e.to_string().replace('\n', " ")
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let s = cli.settings.resolve()?;
    match cli.command {
        Command::Simulate => simulate(&s),
        Command::Reconstruct => reconstruct(&s, stdout),
        Command::Evaluate { image, other } => {
            let other = other
                .or_else(|| s.reference.clone())
                .ok_or_else(|| CliError::Usage("evaluate needs two images".into()))?;
            let a = read_image(&image, ReadOptions::default())?;
            let b = read_image(&other, ReadOptions::default())?;
            let db = metrics::psnr(&a, &b, s.peak.unwrap_or(1.0))?;
            writeln!(stdout, "{}", metrics::format_db(db)).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
        Command::Sweep => sweep(&s, stdout),
    }
}

fn require<'a, T>(v: &'a Option<T>, name: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| CliError::Usage(format!("missing --{name}")))
}

fn load_scene(s: &Settings) -> Result<SceneImage> {
    match s.scene.as_deref() {
        None | Some("builtin") => {
            let n = s.size.unwrap_or(256);
            if n == 0 {
                return Err(CliError::Usage("--size must be positive".into()));
            }
            Ok(test_scene(n, n))
        }
        Some(path) => {
            let img = read_image(
                Path::new(path),
                ReadOptions {
                    decode_gamma: s.scene_gamma,
                },
            )?;
            Ok(SceneImage::try_from(img)?)
        }
    }
}

fn readout(s: &Settings) -> Result<Readout> {
    let bits = s.bits.unwrap_or(1);
    if bits != 1 && s.threshold.is_some() {
        return Err(CliError::Usage("--threshold only applies to 1-bit readout".into()));
    }
    Ok(sweep::readout_for(bits, s.threshold.unwrap_or(1)).validate()?)
}

fn recon_params(s: &Settings, bits: u32) -> Result<ReconParams> {
    let mut p = ReconParams {
        lambda: s.lambda.unwrap_or_else(|| sweep::default_lambda(bits)),
        ..ReconParams::default()
    };
    if let Some(v) = s.lambda_frames {
        p.lambda_frames = v;
    }
    if let Some(v) = s.rho {
        p.rho = v;
    }
    if let Some(v) = s.max_iters {
        p.max_iters = v;
    }
    if let Some(v) = s.tol {
        p.primal_tol = v;
    }
    if let Some(v) = s.gamma {
        p.gamma = v;
    }
    if let Some(kind) = &s.denoiser {
        p.denoiser.kind = kind.clone();
    }
    p.inverse = match s.inverse.as_deref() {
        None | Some("algebraic") => InverseKind::Algebraic,
        Some("unbiased") => InverseKind::Unbiased,
        Some(other) => return Err(CliError::Usage(format!("unknown inverse '{other}'"))),
    };
    if let Some(path) = &s.ccm {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let chart = formats::parse_patch_chart(&text).map_err(|e| CliError::format(path, e))?;
        p.ccm = Some(fit_color_correction(&chart.measured, &chart.reference)?);
    }
    p.validate()?;
    Ok(p)
}

fn simulate(s: &Settings) -> Result<()> {
    // a config shared with `reconstruct` names the stack in `stack`
    let out = s
        .stack
        .as_ref()
        .or(s.out.as_ref())
        .ok_or_else(|| CliError::Usage("missing --stack or --out".into()))?;
    let scene = load_scene(s)?;
    let (w, h) = scene.dims();
    let mut cfg = SensorConfig::new(
        sweep::gain_for(&scene, s.photons.unwrap_or(1.0)),
        s.frames.unwrap_or(sweep::DEFAULT_FRAMES),
        readout(s)?,
        s.seed.unwrap_or(1),
    );
    cfg.read_noise_sigma = s.read_noise.unwrap_or(0.0);
    cfg.dark_count_rate = s.dark_rate.unwrap_or(0.0);
    let stack = simulate_stack(&scene, &qis_core::CfaMask::rggb(w, h), &cfg)?;
    write_stack(out, &stack)
}

fn reconstruct(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let stack_path = require(&s.stack, "stack")?;
    let out = require(&s.out, "out")?;
    let stack = read_stack(stack_path)?;
    let bits = match stack.readout() {
        Readout::SingleBit { .. } => 1,
        Readout::MultiBit { bits } => bits,
    };
    let params = recon_params(s, bits)?;
    let registry = DenoiserRegistry::with_builtins();
    let rec = if s.fast {
        reconstruct_fast_with(&stack, &params, &registry)?
    } else {
        reconstruct_iterative_with(&stack, &params, &registry)?
    };
    if let Some(r) = &rec.report {
        log::info!(
            "admm: {} iterations, converged {}, denoiser sigma {:.4}",
            r.iterations,
            r.converged,
            r.sigma
        );
    }
    write_image(out, &rec.display, BitDepth::Eight)?;
    if let (Some(reference), true) = (&s.reference, s.psnr.unwrap_or(true)) {
        let truth = read_image(reference, ReadOptions::default())?;
        let db = metrics::psnr(&rec.display, &truth, s.peak.unwrap_or(1.0))?;
        writeln!(stdout, "PSNR {}", metrics::format_db(db)).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    }
    Ok(())
}

fn sweep(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let levels = match &s.levels {
        Some(t) => parse_list("levels", t)?,
        None => sweep::DEFAULT_LEVELS.to_vec(),
    };
    let seeds = match &s.seeds {
        Some(t) => parse_list("seeds", t)?,
        None => sweep::DEFAULT_SEEDS.to_vec(),
    };
    let params = recon_params(s, 1)?;
    let spec = sweep::SweepSpec {
        scene: load_scene(s)?,
        levels,
        frames: s.frames.unwrap_or(sweep::DEFAULT_FRAMES),
        seeds,
        threshold: s.threshold.unwrap_or(1),
        read_noise: s.read_noise.unwrap_or(0.0),
        dark_rate: s.dark_rate.unwrap_or(0.0),
        params,
        lambda: s.lambda,
        fast: s.fast,
    };
    let table = sweep::format_table(&sweep::run_sweep(&spec)?);
    match &s.out {
        Some(path) => formats::write_atomic(path, table.as_bytes()).map_err(|e| CliError::io(path, e)),
        None => stdout
            .write_all(table.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}
