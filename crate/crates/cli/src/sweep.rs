//! Bit-depth sweep: PSNR of reconstructions over photon levels and seeds.

use qis_core::denoise::DenoiserRegistry;
use qis_core::recon::{reconstruct_fast_with, reconstruct_iterative_with};
use qis_core::{
    simulate_stack, CfaMask, ColorImage, ColorSpace, ReconParams, Readout, SceneImage, SensorConfig,
};

use crate::error::{CliError, Result};
use crate::metrics::psnr;

pub const DEFAULT_LEVELS: [f64; 4] = [0.25, 0.75, 1.75, 3.75];
pub const DEFAULT_FRAMES: u32 = 20;
pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

/// Regularization weight used for `bits`-bit data unless overridden.
pub fn default_lambda(bits: u32) -> f64 {
    const SCHEDULE: [f64; 4] = [0.007, 0.003, 0.002, 0.0007];
    SCHEDULE[(bits.clamp(1, 4) - 1) as usize]
}

/// Gain that puts `photons` mean photons per jot per frame on `scene`.
pub fn gain_for(scene: &SceneImage, photons: f64) -> f64 {
    let m = scene.mean();
    if m > 0.0 {
        photons / m
    } else {
        photons
    }
}

pub fn readout_for(bits: u32, threshold: u32) -> Readout {
    if bits == 1 {
        Readout::SingleBit { threshold }
    } else {
        Readout::MultiBit { bits }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub scene: SceneImage,
    /// Photon level for bit depth `i + 1`.
    pub levels: Vec<f64>,
    pub frames: u32,
    pub seeds: Vec<u64>,
    pub threshold: u32,
    pub read_noise: f64,
    pub dark_rate: f64,
    pub params: ReconParams,
    /// Fixed weight for every depth; `None` uses [`default_lambda`].
    pub lambda: Option<f64>,
    pub fast: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub bits: u32,
    pub photons: f64,
    pub frames: u32,
    pub psnr_mean: f64,
    pub psnr_std: f64,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.levels.is_empty() || spec.levels.len() > 16 {
        return Err(CliError::Usage(format!("sweep needs 1..=16 photon levels, got {}", spec.levels.len())));
    }
    if spec.seeds.is_empty() {
        return Err(CliError::Usage("sweep needs at least one seed".into()));
    }
    let registry = DenoiserRegistry::with_builtins();
    let truth = display_truth(&spec.scene, spec.params.gamma)?;
    let (w, h) = spec.scene.dims();
    let cfa = CfaMask::rggb(w, h);

    let mut rows = Vec::with_capacity(spec.levels.len());
    for (i, &photons) in spec.levels.iter().enumerate() {
        let bits = i as u32 + 1;
        let params = ReconParams {
            lambda: spec.lambda.unwrap_or_else(|| default_lambda(bits)),
            ..spec.params.clone()
        };
        let mut scores = Vec::with_capacity(spec.seeds.len());
        for &seed in &spec.seeds {
            let mut cfg = SensorConfig::new(
                gain_for(&spec.scene, photons),
                spec.frames,
                readout_for(bits, spec.threshold),
                seed,
            );
            cfg.read_noise_sigma = spec.read_noise;
            cfg.dark_count_rate = spec.dark_rate;
            let stack = simulate_stack(&spec.scene, &cfa, &cfg)?;
            let rec = if spec.fast {
                reconstruct_fast_with(&stack, &params, &registry)?
            } else {
                reconstruct_iterative_with(&stack, &params, &registry)?
            };
            let score = if spec.fast {
                psnr(&rec.display, &display_truth(&half_scene(&spec.scene)?, params.gamma)?, 1.0)?
            } else {
                psnr(&rec.display, &truth, 1.0)?
            };
            log::info!("bits {bits} photons {photons} seed {seed}: {score:.3} dB");
            scores.push(score);
        }
        let (psnr_mean, psnr_std) = mean_std(&scores);
        rows.push(SweepRow {
            bits,
            photons,
            frames: spec.frames,
            psnr_mean,
            psnr_std,
        });
    }
    Ok(rows)
}

pub fn format_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("bits photons_per_frame T PSNR_mean PSNR_std\n");
    for r in rows {
        s.push_str(&format!(
            "{} {} {} {:.4} {:.4}\n",
            r.bits, r.photons, r.frames, r.psnr_mean, r.psnr_std
        ));
    }
    s
}

/// Mean and sample standard deviation.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scene as it would be displayed: gamma-encoded linear values.
pub fn display_truth(scene: &SceneImage, gamma: f64) -> Result<ColorImage> {
    let inv = 1.0 / gamma;
    let planes = scene.to_color_image().into_planes().map(|p| p.map(|v| v.powf(inv)));
    Ok(ColorImage::from_planes(planes, ColorSpace::GammaEncoded)?)
}

/// 2x2 box average, the ground truth for the four-jot path.
fn half_scene(scene: &SceneImage) -> Result<SceneImage> {
    let planes = scene.to_color_image().into_planes().map(|p| {
        let (w, h) = (p.width() / 2, p.height() / 2);
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = (2 * (i % w), 2 * (i / w));
                0.25 * (p.get(x, y) + p.get(x + 1, y) + p.get(x, y + 1) + p.get(x + 1, y + 1))
            })
            .collect();
        qis_core::Plane::new(w, h, data).expect("sizes match")
    });
    Ok(SceneImage::from_planes(planes)?)
}
