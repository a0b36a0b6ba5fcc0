//! Simulation and reconstruction for photon-counting color image sensors.
//!
//! The forward model ([`sensor`]) turns a linear RGB scene into stacks of
//! single-bit or multi-bit frames behind an RGGB color filter. The inverse
//! path ([`recon`]) sums frames, stabilizes their variance ([`stats`]),
//! demosaics and denoises with plug-and-play ADMM or a four-jot shortcut
//! ([`denoise`]), and maps the result back to exposure.

// NaN must fail range checks, so `!(x > lo)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cfa;
pub mod denoise;
mod error;
pub mod image;
pub mod recon;
pub mod sensor;
pub mod stats;

pub use cfa::{CfaMask, Channel};
pub use error::{QisError, Result};
pub use image::{test_scene, ColorImage, ColorSpace, Plane, SceneImage};
pub use recon::{
    admm_demosaic, bin_frames, fit_color_correction, reconstruct_fast, reconstruct_iterative,
    ColorCorrectionMatrix, ReconParams, Reconstruction,
};
pub use sensor::{simulate_stack, FrameStack, Readout, SensorConfig};
