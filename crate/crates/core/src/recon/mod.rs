//! Reconstruction pipelines: temporal binning, variance stabilization,
//! joint demosaic-denoise (iterative or four-jot), inverse transform,
//! maximum-likelihood tone map and display encoding.

pub mod admm;
mod ccm;

use crate::cfa::Channel;
use crate::denoise::{DenoiserRegistry, DenoiserSpec};
use crate::error::{QisError, Result};
use crate::image::{ColorImage, ColorSpace, Plane};
use crate::sensor::FrameStack;
use crate::stats::{anscombe, BinnedImage, InverseKind, MleMap, StabilizedImage, ToneTables, Vst};

pub use admm::{AdmmOutput, AdmmReport, AdmmSettings, Observation};
pub use ccm::{fit_color_correction, ColorCorrectionMatrix};

/// Largest sum range for which lookup tables are built.
const MAX_TABLE_ENTRIES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconParams {
    /// ADMM penalty.
    pub rho: f64,
    /// Regularization weight.
    pub lambda: f64,
    /// Frame count `lambda` is tuned for. The weight applied to a T-frame
    /// stack is `lambda * lambda_frames / T`, which keeps the denoiser
    /// strength fixed relative to the stabilized noise as T changes.
    pub lambda_frames: u32,
    pub max_iters: usize,
    /// Relative primal residual `|x - v| / |x|` at which ADMM stops.
    pub primal_tol: f64,
    /// Denoiser kind and tuning; its strength is set by the pipeline.
    pub denoiser: DenoiserSpec,
    /// Display gamma.
    pub gamma: f64,
    /// Applied in linear light before gamma encoding when present.
    pub ccm: Option<ColorCorrectionMatrix>,
    pub inverse: InverseKind,
    /// Multiplier on the four-jot path's per-channel noise levels.
    pub fast_strength: f64,
    /// Percentile used for display normalization when the gain is unknown.
    pub normalize_percentile: f64,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            lambda: 0.007,
            lambda_frames: 20,
            max_iters: 50,
            primal_tol: 1e-4,
            denoiser: DenoiserSpec::new("tv", 1.0),
            gamma: 2.2,
            ccm: None,
            inverse: InverseKind::Algebraic,
            fast_strength: 1.0,
            normalize_percentile: 99.5,
        }
    }
}

impl ReconParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(QisError::InvalidParameter(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("rho", self.rho)?;
        positive("lambda", self.lambda)?;
        positive("gamma", self.gamma)?;
        positive("fast_strength", self.fast_strength)?;
        if self.max_iters == 0 {
            return Err(QisError::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.primal_tol.is_finite() && self.primal_tol >= 0.0) {
            return Err(QisError::InvalidParameter(format!("primal_tol must be >= 0, got {}", self.primal_tol)));
        }
        if self.lambda_frames == 0 {
            return Err(QisError::InvalidParameter("lambda_frames must be >= 1".into()));
        }
        if !(self.normalize_percentile > 0.0 && self.normalize_percentile <= 100.0) {
            return Err(QisError::InvalidParameter(format!(
                "normalization percentile {} outside (0, 100]",
                self.normalize_percentile
            )));
        }
        Ok(())
    }

    /// ADMM settings for a stack of `frames` frames.
    pub fn admm_settings(&self, frames: u32) -> AdmmSettings {
        AdmmSettings {
            rho: self.rho,
            lambda: self.lambda * f64::from(self.lambda_frames) / f64::from(frames.max(1)),
            max_iters: self.max_iters,
            primal_tol: self.primal_tol,
            denoiser: self.denoiser.clone(),
        }
    }
}

/// Output of a reconstruction with intermediate products.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Normalized linear intensity before color correction and gamma.
    pub linear: ColorImage,
    /// Gamma-encoded image clipped to [0, 1].
    pub display: ColorImage,
    /// ADMM trace (iterative path only).
    pub report: Option<AdmmReport>,
}

/// Sum the frames of a stack per jot.
pub fn bin_frames(stack: &FrameStack) -> BinnedImage {
    let n = stack.width() * stack.height();
    let mut sums = vec![0u32; n];
    for t in 0..stack.frames() {
        for (s, &b) in sums.iter_mut().zip(stack.frame(t)) {
            *s += u32::from(b);
        }
    }
    BinnedImage::new(stack.cfa().clone(), stack.frames(), stack.readout(), sums)
        .expect("stack values respect the readout range")
}

/// Joint demosaic-denoise of a stabilized mosaic; returns the full-color
/// estimate in the stabilized domain.
pub fn admm_demosaic(
    beta: &StabilizedImage,
    params: &ReconParams,
    registry: &DenoiserRegistry,
) -> Result<(ColorImage, AdmmReport)> {
    params.validate()?;
    let denoiser = registry.get(&params.denoiser.kind)?;
    let obs = Observation::from_mosaic(beta);
    let out = admm::solve(&obs, &params.admm_settings(beta.frames()), denoiser.as_ref(), None)?;
    let img = ColorImage::from_planes(out.planes, ColorSpace::Stabilized)?;
    Ok((img, out.report))
}

pub fn reconstruct_iterative(stack: &FrameStack, params: &ReconParams) -> Result<ColorImage> {
    reconstruct_iterative_with(stack, params, &DenoiserRegistry::with_builtins()).map(|r| r.display)
}

pub fn reconstruct_iterative_with(
    stack: &FrameStack,
    params: &ReconParams,
    registry: &DenoiserRegistry,
) -> Result<Reconstruction> {
    params.validate()?;
    let binned = bin_frames(stack);
    let beta = anscombe(&binned);
    let (x, report) = admm_demosaic(&beta, params, registry)?;
    let theta = exposure_from_stabilized(x.into_planes(), stack, params.inverse, None);
    let linear = normalize(theta, stack.alpha(), params.normalize_percentile)?;
    let display = finish(&linear, params)?;
    Ok(Reconstruction {
        linear,
        display,
        report: Some(report),
    })
}

pub fn reconstruct_fast(stack: &FrameStack, params: &ReconParams) -> Result<ColorImage> {
    reconstruct_fast_with(stack, params, &DenoiserRegistry::with_builtins()).map(|r| r.display)
}

/// Four-jot path: each 2x2 RGGB cell becomes one output pixel, the two green
/// jots averaged, followed by a single per-channel denoise.
pub fn reconstruct_fast_with(
    stack: &FrameStack,
    params: &ReconParams,
    registry: &DenoiserRegistry,
) -> Result<Reconstruction> {
    params.validate()?;
    let (w, h) = stack.dims();
    if w % 2 != 0 || h % 2 != 0 || w == 0 || h == 0 {
        return Err(QisError::InvalidParameter(format!(
            "four-jot reconstruction needs even dimensions, got {w}x{h}"
        )));
    }
    if !stack.cfa().is_rggb() {
        return Err(QisError::InvalidParameter(
            "four-jot reconstruction needs an RGGB mosaic".into(),
        ));
    }
    let binned = bin_frames(stack);
    let vst = Vst::new(stack.frames(), stack.readout());
    let tables = ToneTables::build(stack.frames(), stack.readout(), MAX_TABLE_ENTRIES);
    let beta: Vec<f64> = match &tables {
        Some(t) => binned.sums().iter().map(|&z| t.vst[z as usize]).collect(),
        None => binned.sums().iter().map(|&z| vst.forward(f64::from(z))).collect(),
    };

    let (hw, hh) = (w / 2, h / 2);
    let mut cells: [Plane; 3] = std::array::from_fn(|_| Plane::filled(hw, hh, 0.0));
    for cy in 0..hh {
        for cx in 0..hw {
            let i = 2 * cy * w + 2 * cx;
            cells[0].set(cx, cy, beta[i]);
            cells[1].set(cx, cy, 0.5 * (beta[i + 1] + beta[i + w]));
            cells[2].set(cx, cy, beta[i + w + 1]);
        }
    }
    // stabilized noise std is 1/2; averaging two greens halves the variance
    let s = params.fast_strength;
    let sigmas = [0.5 * s, 0.5 * s / std::f64::consts::SQRT_2, 0.5 * s];
    let denoised = registry.denoise_per_channel(&cells, sigmas, &params.denoiser)?;

    let theta = exposure_from_stabilized(denoised, stack, params.inverse, tables.as_ref());
    let linear = normalize(theta, stack.alpha(), params.normalize_percentile)?;
    let display = finish(&linear, params)?;
    Ok(Reconstruction {
        linear,
        display,
        report: None,
    })
}

/// Inverse transform followed by the per-jot ML exposure estimate.
fn exposure_from_stabilized(
    planes: [Plane; 3],
    stack: &FrameStack,
    kind: InverseKind,
    tables: Option<&ToneTables>,
) -> [Plane; 3] {
    let vst = Vst::new(stack.frames(), stack.readout());
    let mle = MleMap::new(stack.frames(), stack.readout());
    planes.map(|p| {
        p.map(|b| {
            let z = vst.inverse(b, kind);
            // exact integer sums can use the table
            match tables {
                Some(t) if z >= 0.0 && z.fract() == 0.0 && (z as usize) < t.mle.len() => t.mle[z as usize],
                _ => mle.estimate(z),
            }
        })
    })
}

/// Divide by the capture gain when known, else by a high percentile.
fn normalize(theta: [Plane; 3], alpha: Option<f64>, percentile: f64) -> Result<ColorImage> {
    let scale = match alpha {
        Some(a) => a,
        None => {
            let p = percentile_of(theta.iter().flat_map(|p| p.data().iter().copied()), percentile);
            if p > 0.0 {
                p
            } else {
                1.0
            }
        }
    };
    let planes = theta.map(|p| p.map(|v| v / scale));
    ColorImage::from_planes(planes, ColorSpace::Linear)
}

fn percentile_of(values: impl Iterator<Item = f64>, pct: f64) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * (v.len() - 1) as f64).round() as usize;
    v[rank.min(v.len() - 1)]
}

/// Color correction, clip, gamma encode.
pub fn finish(linear: &ColorImage, params: &ReconParams) -> Result<ColorImage> {
    let (w, h) = linear.dims();
    let mut planes: [Plane; 3] = std::array::from_fn(|_| Plane::filled(w, h, 0.0));
    let inv_gamma = 1.0 / params.gamma;
    for y in 0..h {
        for x in 0..w {
            let mut rgb = linear.pixel(x, y);
            if let Some(ccm) = &params.ccm {
                rgb = ccm.apply(rgb);
            }
            for c in Channel::ALL {
                let v = rgb[c.index()].clamp(0.0, 1.0).powf(inv_gamma);
                planes[c.index()].set(x, y, v);
            }
        }
    }
    ColorImage::from_planes(planes, ColorSpace::GammaEncoded)
}
