//! Plug-and-play ADMM for joint demosaicing and denoising in the stabilized
//! domain.

use std::collections::VecDeque;

use crate::cfa::Channel;
use crate::denoise::{Denoiser, DenoiserSpec};
use crate::error::{QisError, Result};
use crate::image::Plane;
use crate::stats::StabilizedImage;

/// Partially observed three-channel image: `values[c]` is meaningful only
/// where `observed[c]` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: [Plane; 3],
    pub observed: [Vec<bool>; 3],
}

impl Observation {
    /// One observed channel per jot, as laid out by the CFA.
    pub fn from_mosaic(beta: &StabilizedImage) -> Self {
        let (w, h) = (beta.width(), beta.height());
        let cfa = beta.cfa();
        let mut values = [
            Plane::filled(w, h, 0.0),
            Plane::filled(w, h, 0.0),
            Plane::filled(w, h, 0.0),
        ];
        for (m, &b) in beta.values().iter().enumerate() {
            values[cfa.channel(m).index()].data_mut()[m] = b;
        }
        let observed = Channel::ALL.map(|c| cfa.selection(c));
        Self { values, observed }
    }

    /// Every channel observed at every pixel.
    pub fn full(values: [Plane; 3]) -> Self {
        let n = values[0].len();
        Self {
            values,
            observed: [vec![true; n], vec![true; n], vec![true; n]],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values[0].dims()
    }

    fn observed_norm(&self) -> f64 {
        let mut s = 0.0;
        for c in 0..3 {
            for (v, &o) in self.values[c].data().iter().zip(&self.observed[c]) {
                if o {
                    s += v * v;
                }
            }
        }
        s.sqrt()
    }

    fn observed_peak(&self) -> f64 {
        let mut peak = 0.0f64;
        for c in 0..3 {
            for (v, &o) in self.values[c].data().iter().zip(&self.observed[c]) {
                if o {
                    peak = peak.max(*v);
                }
            }
        }
        peak
    }

    /// Fill each channel's unobserved pixels with the value of the nearest
    /// observed pixel (4-connected breadth-first order).
    pub fn nearest_fill(&self) -> [Plane; 3] {
        let (w, h) = self.dims();
        std::array::from_fn(|c| {
            let src = self.values[c].data();
            let mask = &self.observed[c];
            let mut out = vec![0.0; w * h];
            let mut seen = vec![false; w * h];
            let mut queue = VecDeque::new();
            for i in 0..w * h {
                if mask[i] {
                    out[i] = src[i];
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
            while let Some(i) = queue.pop_front() {
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if !seen[j] {
                        seen[j] = true;
                        out[j] = out[i];
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            Plane::new(w, h, out).expect("shape preserved")
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmSettings {
    pub rho: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub denoiser: DenoiserSpec,
}

/// Convergence trace of one solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdmmReport {
    pub iterations: usize,
    /// `|x^k - v^k|` after each iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Denoiser strength actually used.
    pub sigma: f64,
}

impl AdmmReport {
    /// Final primal residual does not exceed the first one.
    pub fn residual_decreased(&self) -> bool {
        match (self.residuals.first(), self.residuals.last()) {
            (Some(first), Some(last)) => last <= first,
            _ => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutput {
    /// The denoised iterate `v` at termination.
    pub planes: [Plane; 3],
    pub report: AdmmReport,
}

/// Denoiser strength in the stabilized domain: `sqrt(lambda / rho)` relative
/// to the peak observed value.
pub fn denoiser_sigma(lambda: f64, rho: f64, peak: f64) -> f64 {
    let scale = if peak > 0.0 { peak } else { 1.0 };
    (lambda / rho).sqrt() * scale
}

/// Pointwise data step `(S^T S + rho I)^-1 (S^T beta + rho (v - u))`.
pub fn data_step(obs: &Observation, v_minus_u: &[Plane; 3], rho: f64) -> [Plane; 3] {
    let inv = 1.0 / (1.0 + rho);
    std::array::from_fn(|c| {
        let (w, h) = obs.dims();
        let data = obs.values[c]
            .data()
            .iter()
            .zip(&obs.observed[c])
            .zip(v_minus_u[c].data())
            .map(|((&b, &o), &d)| if o { (b + rho * d) * inv } else { d })
            .collect();
        Plane::new(w, h, data).expect("shape preserved")
    })
}

fn norm(planes: &[Plane; 3]) -> f64 {
    planes
        .iter()
        .flat_map(|p| p.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

fn diff_norm(a: &[Plane; 3], b: &[Plane; 3]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| p.data().iter().zip(q.data()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn zip_planes(a: &[Plane; 3], b: &[Plane; 3], f: impl Fn(f64, f64) -> f64) -> [Plane; 3] {
    std::array::from_fn(|c| {
        let (w, h) = a[c].dims();
        let data = a[c].data().iter().zip(b[c].data()).map(|(&x, &y)| f(x, y)).collect();
        Plane::new(w, h, data).expect("shape preserved")
    })
}

/// Run PnP-ADMM from `v = init` (nearest-neighbor fill when `None`), `u = 0`.
pub fn solve(
    obs: &Observation,
    settings: &AdmmSettings,
    denoiser: &dyn Denoiser,
    init: Option<[Plane; 3]>,
) -> Result<AdmmOutput> {
    if !(settings.rho.is_finite() && settings.rho > 0.0) {
        return Err(QisError::InvalidParameter(format!("rho must be > 0, got {}", settings.rho)));
    }
    if !(settings.lambda.is_finite() && settings.lambda > 0.0) {
        return Err(QisError::InvalidParameter(format!(
            "lambda must be > 0, got {}",
            settings.lambda
        )));
    }
    if settings.max_iters == 0 {
        return Err(QisError::InvalidParameter("max_iters must be >= 1".into()));
    }
    for p in &obs.values {
        p.check_finite()?;
    }

    let rho = settings.rho;
    let sigma = denoiser_sigma(settings.lambda, rho, obs.observed_peak());
    let spec = settings.denoiser.with_sigma(sigma);
    spec.validate()?;
    let limit = 1e6 * obs.observed_norm().max(f64::MIN_POSITIVE);

    let (w, h) = obs.dims();
    let mut v = init.unwrap_or_else(|| obs.nearest_fill());
    let mut u: [Plane; 3] = std::array::from_fn(|_| Plane::filled(w, h, 0.0));
    let mut report = AdmmReport {
        sigma,
        ..AdmmReport::default()
    };

    for k in 1..=settings.max_iters {
        let target = zip_planes(&v, &u, |a, b| a - b);
        let x = data_step(obs, &target, rho);
        let x_norm = norm(&x);
        if !(x_norm <= limit) {
            return Err(QisError::Divergence {
                iteration: k,
                norm: x_norm,
                limit,
            });
        }
        let shifted = zip_planes(&x, &u, |a, b| a + b);
        let v_next: [Plane; 3] = std::array::from_fn(|c| denoiser.denoise_plane(&shifted[c], sigma, &spec));
        // scaled dual ascent: u <- u + (x - v)
        u = zip_planes(&u, &zip_planes(&x, &v_next, |a, b| a - b), |a, b| a + b);
        v = v_next;

        let r = diff_norm(&x, &v);
        report.residuals.push(r);
        report.iterations = k;
        let rel = if x_norm > 0.0 { r / x_norm } else { r };
        if rel <= settings.primal_tol {
            report.converged = true;
            break;
        }
    }
    if !report.residual_decreased() {
        log::warn!(
            "denoiser contract: primal residual rose from {:.3e} to {:.3e}",
            report.residuals[0],
            report.residuals[report.residuals.len() - 1]
        );
    }
    Ok(AdmmOutput { planes: v, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::CfaMask;
    use crate::denoise::{DenoiserRegistry, Identity};
    use crate::sensor::Readout;

    fn settings(kind: &str, lambda: f64) -> AdmmSettings {
        AdmmSettings {
            rho: 1.0,
            lambda,
            max_iters: 50,
            primal_tol: 1e-4,
            denoiser: DenoiserSpec::new(kind, 1.0),
        }
    }

    fn mosaic(w: usize, h: usize) -> StabilizedImage {
        let vals = (0..w * h).map(|i| 1.0 + ((i * 7) % 5) as f64 * 0.5).collect();
        StabilizedImage::new(CfaMask::rggb(w, h), 10, Readout::MultiBit { bits: 4 }, vals).unwrap()
    }

    #[test]
    fn full_observation_first_step() {
        let obs = Observation::full(std::array::from_fn(|_| Plane::filled(3, 3, 2.0)));
        let zero = std::array::from_fn(|_| Plane::filled(3, 3, 0.0));
        let x = data_step(&obs, &zero, 1.0);
        for p in &x {
            assert!(p.data().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn unobserved_entry_takes_v_minus_u() {
        let beta = mosaic(2, 2);
        let obs = Observation::from_mosaic(&beta);
        let target = std::array::from_fn(|_| Plane::filled(2, 2, 3.0));
        let x = data_step(&obs, &target, 0.7);
        // jot 0 is red: green and blue are unobserved there
        assert_eq!(x[1].data()[0], 3.0);
        assert_eq!(x[2].data()[0], 3.0);
        let b0 = beta.values()[0];
        assert!((x[0].data()[0] - (b0 + 0.7 * 3.0) / 1.7).abs() < 1e-15);
    }

    #[test]
    fn nearest_fill_on_bayer() {
        // hand-derived fill of a 4x2 RGGB mosaic
        let vals = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let beta = StabilizedImage::new(CfaMask::rggb(4, 2), 4, Readout::MultiBit { bits: 4 }, vals).unwrap();
        let fill = Observation::from_mosaic(&beta).nearest_fill();
        assert_eq!(fill[0].data(), &[1.0, 1.0, 3.0, 3.0, 1.0, 1.0, 3.0, 3.0]);
        assert_eq!(fill[1].data(), &[2.0, 2.0, 2.0, 4.0, 5.0, 2.0, 7.0, 4.0]);
        assert_eq!(fill[2].data(), &[6.0, 6.0, 6.0, 8.0, 6.0, 6.0, 6.0, 8.0]);
    }

    #[test]
    fn identity_denoiser_reaches_data_filling_solution() {
        let beta = mosaic(6, 4);
        let obs = Observation::from_mosaic(&beta);
        let expected = obs.nearest_fill();
        let out = solve(&obs, &settings("identity", 0.01), &Identity, None).unwrap();
        assert!(out.report.iterations <= 3);
        assert!(out.report.converged);
        for c in 0..3 {
            for (a, b) in out.planes[c].data().iter().zip(expected[c].data()) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
        // observed entries reproduce the data exactly
        for m in 0..24 {
            let c = beta.cfa().channel(m).index();
            assert!((out.planes[c].data()[m] - beta.values()[m]).abs() <= 1e-8);
        }
    }

    #[test]
    fn identity_iterates_hand_checked() {
        // from v0 = 0: x1 = beta/2, v1 = x1, u1 = 0; restarting from v = x1
        // gives x = 3 beta / 4
        let obs = Observation::full(std::array::from_fn(|_| Plane::filled(2, 2, 4.0)));
        let mut s = settings("identity", 0.01);
        s.max_iters = 1;
        let zero: [Plane; 3] = std::array::from_fn(|_| Plane::filled(2, 2, 0.0));
        let first = solve(&obs, &s, &Identity, Some(zero)).unwrap();
        assert!(first.planes[0].data().iter().all(|&v| v == 2.0));
        assert_eq!(first.report.residuals, vec![0.0]);
        let second = solve(&obs, &s, &Identity, Some(first.planes)).unwrap();
        assert!(second.planes[0].data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn full_observation_small_lambda_is_idempotent() {
        let reg = DenoiserRegistry::with_builtins();
        let vals: Vec<f64> = (0..64).map(|i| 1.0 + (i as f64 * 0.3).sin()).collect();
        let planes: [Plane; 3] = std::array::from_fn(|c| {
            Plane::new(8, 8, vals.iter().map(|v| v + c as f64).collect()).unwrap()
        });
        let obs = Observation::full(planes.clone());
        for kind in ["gaussian", "nlm", "tv"] {
            let d = reg.get(kind).unwrap();
            let out = solve(&obs, &settings(kind, 1e-12), d.as_ref(), None).unwrap();
            for c in 0..3 {
                for (a, b) in out.planes[c].data().iter().zip(planes[c].data()) {
                    assert!((a - b).abs() < 1e-3, "{kind}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn divergence_guard_trips() {
        struct Explode;
        impl Denoiser for Explode {
            fn denoise_plane(&self, p: &Plane, _: f64, _: &DenoiserSpec) -> Plane {
                p.map(|v| v * 1e4 + 1.0)
            }
        }
        let obs = Observation::from_mosaic(&mosaic(4, 4));
        let r = solve(&obs, &settings("x", 0.01), &Explode, None);
        assert!(matches!(r, Err(QisError::Divergence { .. })));
    }

    #[test]
    fn rejects_bad_settings() {
        let obs = Observation::from_mosaic(&mosaic(4, 4));
        let mut s = settings("identity", 0.01);
        s.rho = 0.0;
        assert!(solve(&obs, &s, &Identity, None).is_err());
        let mut s = settings("identity", 0.01);
        s.max_iters = 0;
        assert!(solve(&obs, &s, &Identity, None).is_err());
    }
}
