//! Pluggable Gaussian-noise denoisers used as the proximal step of
//! plug-and-play ADMM, plus three deterministic baselines.

mod gaussian;
mod nlm;
mod tv;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::error::{QisError, Result};
use crate::image::Plane;

pub use gaussian::GaussianSmoother;
pub use nlm::NonLocalMeans;
pub use tv::{total_variation, TotalVariation};

/// How samples outside the image are synthesized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Boundary {
    /// Half-sample symmetric reflection (`d c b a | a b c d`).
    #[default]
    Mirror,
    /// Toroidal wrap-around.
    Periodic,
}

impl Boundary {
    /// Map a possibly out-of-range coordinate onto `0..n`.
    #[inline]
    pub fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        match self {
            Boundary::Periodic => i.rem_euclid(n) as usize,
            Boundary::Mirror => {
                let m = i.rem_euclid(2 * n);
                (if m < n { m } else { 2 * n - 1 - m }) as usize
            }
        }
    }
}

/// Kind-specific tuning knobs. Each baseline reads only its own fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    /// NLM patch half-width.
    pub patch_radius: usize,
    /// NLM search window half-width.
    pub search_radius: usize,
    /// NLM filtering parameter in units of sigma.
    pub nlm_h: f64,
    /// Gaussian kernel standard deviation in pixels per unit of sigma.
    pub gaussian_bandwidth: f64,
    /// TV regularization weight per unit of sigma.
    pub tv_weight: f64,
    pub tv_iterations: usize,
    pub tv_step: f64,
}

impl Default for DenoiserParams {
    fn default() -> Self {
        Self {
            patch_radius: 1,
            search_radius: 4,
            nlm_h: 0.4,
            gaussian_bandwidth: 4.0,
            tv_weight: 1.0,
            tv_iterations: 50,
            tv_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserSpec {
    /// Registry key, e.g. `"nlm"`.
    pub kind: String,
    /// Hypothesized noise standard deviation.
    pub sigma: f64,
    /// Per-channel override of `sigma` for three-plane images.
    pub channel_sigmas: Option<[f64; 3]>,
    pub boundary: Boundary,
    pub params: DenoiserParams,
}

impl DenoiserSpec {
    pub fn new(kind: impl Into<String>, sigma: f64) -> Self {
        Self {
            kind: kind.into(),
            sigma,
            channel_sigmas: None,
            boundary: Boundary::Mirror,
            params: DenoiserParams::default(),
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            sigma,
            channel_sigmas: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        if !ok(self.sigma) {
            return Err(QisError::InvalidParameter(format!(
                "denoiser sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if let Some(s) = self.channel_sigmas {
            if !s.iter().all(|&v| ok(v)) {
                return Err(QisError::InvalidParameter(format!(
                    "per-channel sigmas must be > 0, got {s:?}"
                )));
            }
        }
        Ok(())
    }
}

/// A denoiser for one plane under i.i.d. Gaussian noise of standard
/// deviation `sigma`. Implementations must be deterministic.
pub trait Denoiser: Send + Sync {
    fn denoise_plane(&self, plane: &Plane, sigma: f64, spec: &DenoiserSpec) -> Plane;
}

/// Returns its input. Handy for checking the outer iteration in isolation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Identity;

impl Denoiser for Identity {
    fn denoise_plane(&self, plane: &Plane, _sigma: f64, _spec: &DenoiserSpec) -> Plane {
        plane.clone()
    }
}

/// Denoisers keyed by name.
#[derive(Clone, Default)]
pub struct DenoiserRegistry {
    entries: BTreeMap<String, Arc<dyn Denoiser>>,
}

impl std::fmt::Debug for DenoiserRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl DenoiserRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `gaussian`, `nlm`, `tv` and `identity`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("gaussian", GaussianSmoother);
        r.register("nlm", NonLocalMeans);
        r.register("tv", TotalVariation);
        r.register("identity", Identity);
        r
    }

    pub fn register(&mut self, name: impl Into<String>, denoiser: impl Denoiser + 'static) {
        self.entries.insert(name.into(), Arc::new(denoiser));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Denoiser>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| QisError::UnknownDenoiser(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Denoise a 1- or 3-plane image. Per-channel sigmas in `spec` apply to
    /// three-plane input.
    pub fn denoise(&self, planes: &[Plane], spec: &DenoiserSpec) -> Result<Vec<Plane>> {
        spec.validate()?;
        if planes.len() != 1 && planes.len() != 3 {
            return Err(QisError::InvalidParameter(format!(
                "expected 1 or 3 planes, got {}",
                planes.len()
            )));
        }
        let dims = planes[0].dims();
        for p in planes {
            crate::error::check_dims(dims, p.dims())?;
            p.check_finite()?;
        }
        let d = self.get(&spec.kind)?;
        let sigmas: Vec<f64> = match (planes.len(), spec.channel_sigmas) {
            (3, Some(s)) => s.to_vec(),
            (n, _) => vec![spec.sigma; n],
        };
        Ok(planes
            .iter()
            .zip(sigmas)
            .map(|(p, s)| d.denoise_plane(p, s, spec))
            .collect())
    }

    /// Three-plane denoising with channel-specific strengths.
    pub fn denoise_per_channel(
        &self,
        planes: &[Plane; 3],
        sigmas: [f64; 3],
        spec: &DenoiserSpec,
    ) -> Result<[Plane; 3]> {
        let spec = DenoiserSpec {
            channel_sigmas: Some(sigmas),
            ..spec.clone()
        };
        let out = self.denoise(planes, &spec)?;
        let [r, g, b]: [Plane; 3] = out.try_into().expect("three planes in, three out");
        Ok([r, g, b])
    }
}

fn builtins() -> &'static DenoiserRegistry {
    static REGISTRY: OnceLock<DenoiserRegistry> = OnceLock::new();
    REGISTRY.get_or_init(DenoiserRegistry::with_builtins)
}

/// Denoise with one of the built-in denoisers.
pub fn denoise(planes: &[Plane], spec: &DenoiserSpec) -> Result<Vec<Plane>> {
    builtins().denoise(planes, spec)
}

pub fn denoise_per_channel(planes: &[Plane; 3], sigmas: [f64; 3], spec: &DenoiserSpec) -> Result<[Plane; 3]> {
    builtins().denoise_per_channel(planes, sigmas, spec)
}
