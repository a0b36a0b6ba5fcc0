use super::{Boundary, Denoiser, DenoiserSpec};
use crate::image::Plane;

/// Separable Gaussian smoother whose spatial bandwidth grows with sigma.
#[derive(Debug, Default, Clone, Copy)]
pub struct GaussianSmoother;

impl Denoiser for GaussianSmoother {
    fn denoise_plane(&self, plane: &Plane, sigma: f64, spec: &DenoiserSpec) -> Plane {
        let std_px = spec.params.gaussian_bandwidth * sigma;
        let kernel = kernel(std_px);
        if kernel.len() == 1 {
            return plane.clone();
        }
        let (w, h) = plane.dims();
        let horiz = convolve(plane.data(), w, h, &kernel, spec.boundary, true);
        let out = convolve(&horiz, w, h, &kernel, spec.boundary, false);
        Plane::new(w, h, out).expect("shape preserved")
    }
}

/// Symmetric kernel truncated at three standard deviations.
fn kernel(std_px: f64) -> Vec<f64> {
    if !(std_px > 1e-3) {
        return vec![1.0];
    }
    let radius = (3.0 * std_px).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * std_px * std_px)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn convolve(src: &[f64], w: usize, h: usize, k: &[f64], boundary: Boundary, horizontal: bool) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let center = src[y * w + x];
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let o = j as isize - r;
                let v = if horizontal {
                    src[y * w + boundary.index(x as isize + o, w)]
                } else {
                    src[boundary.index(y as isize + o, h) * w + x]
                };
                acc += kv * (v - center);
            }
            out[y * w + x] = center + acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::denoise;

    fn ramp(w: usize, h: usize) -> Plane {
        let data = (0..w * h)
            .map(|i| ((i * 37) % 101) as f64 / 100.0 + (i % w) as f64 * 0.01)
            .collect();
        Plane::new(w, h, data).unwrap()
    }

    #[test]
    fn flat_field_fixed_point() {
        let p = Plane::filled(9, 7, 0.42);
        let out = denoise(&[p.clone()], &DenoiserSpec::new("gaussian", 0.5)).unwrap();
        assert_eq!(out[0], p);
    }

    #[test]
    fn mean_preserved_with_mirror_padding() {
        let p = ramp(23, 17);
        for sigma in [0.1, 0.5, 2.0] {
            let out = denoise(&[p.clone()], &DenoiserSpec::new("gaussian", sigma)).unwrap();
            assert!((out[0].mean() - p.mean()).abs() < 1e-6);
        }
    }

    #[test]
    fn shift_equivariant_on_torus() {
        let p = ramp(16, 12);
        let mut spec = DenoiserSpec::new("gaussian", 0.4);
        spec.boundary = Boundary::Periodic;
        let a = denoise(&[p.roll(3, -2)], &spec).unwrap().remove(0);
        let b = denoise(&[p], &spec).unwrap().remove(0).roll(3, -2);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let p = ramp(8, 8);
        let out = denoise(&[p.clone()], &DenoiserSpec::new("gaussian", 1e-6)).unwrap();
        assert_eq!(out[0], p);
    }
}
