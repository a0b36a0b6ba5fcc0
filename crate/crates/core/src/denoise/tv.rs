use super::{Boundary, Denoiser, DenoiserSpec};
use crate::image::Plane;

/// Isotropic total-variation proximal step
/// `argmin_u 1/2 |u - f|^2 + weight * TV(u)` solved by a fixed number of
/// dual projection steps, with `weight = tv_weight * sigma`.
#[derive(Debug, Default, Clone, Copy)]
pub struct TotalVariation;

impl Denoiser for TotalVariation {
    fn denoise_plane(&self, plane: &Plane, sigma: f64, spec: &DenoiserSpec) -> Plane {
        let weight = spec.params.tv_weight * sigma;
        let (w, h) = plane.dims();
        if weight <= 0.0 || w == 0 || h == 0 {
            return plane.clone();
        }
        let grid = Grid {
            w,
            h,
            boundary: spec.boundary,
        };
        let f = plane.data();
        let tau = spec.params.tv_step;
        let n = w * h;
        let mut px = vec![0.0; n];
        let mut py = vec![0.0; n];
        let mut div = vec![0.0; n];
        let mut g = vec![0.0; n];
        let inv_weight = 1.0 / weight;

        for _ in 0..spec.params.tv_iterations {
            grid.divergence(&px, &py, &mut div);
            for i in 0..n {
                g[i] = div[i] - f[i] * inv_weight;
            }
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let (gx, gy) = grid.gradient(&g, x, y);
                    let mag = (gx * gx + gy * gy).sqrt();
                    let denom = 1.0 + tau * mag;
                    px[i] = (px[i] + tau * gx) / denom;
                    py[i] = (py[i] + tau * gy) / denom;
                }
            }
        }
        grid.divergence(&px, &py, &mut div);
        let out = f.iter().zip(&div).map(|(&fv, &d)| fv - weight * d).collect();
        Plane::new(w, h, out).expect("shape preserved")
    }
}

struct Grid {
    w: usize,
    h: usize,
    boundary: Boundary,
}

impl Grid {
    /// Forward differences; zero across the border for mirror boundaries.
    #[inline]
    fn gradient(&self, u: &[f64], x: usize, y: usize) -> (f64, f64) {
        let i = y * self.w + x;
        let gx = if x + 1 < self.w {
            u[i + 1] - u[i]
        } else if self.boundary == Boundary::Periodic {
            u[y * self.w] - u[i]
        } else {
            0.0
        };
        let gy = if y + 1 < self.h {
            u[i + self.w] - u[i]
        } else if self.boundary == Boundary::Periodic {
            u[x] - u[i]
        } else {
            0.0
        };
        (gx, gy)
    }

    /// Negative adjoint of [`Grid::gradient`].
    fn divergence(&self, px: &[f64], py: &[f64], out: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        let periodic = self.boundary == Boundary::Periodic;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let dx = if periodic {
                    px[i] - px[y * w + (x + w - 1) % w]
                } else {
                    let cur = if x + 1 < w { px[i] } else { 0.0 };
                    let prev = if x > 0 { px[i - 1] } else { 0.0 };
                    cur - prev
                };
                let dy = if periodic {
                    py[i] - py[((y + h - 1) % h) * w + x]
                } else {
                    let cur = if y + 1 < h { py[i] } else { 0.0 };
                    let prev = if y > 0 { py[i - w] } else { 0.0 };
                    cur - prev
                };
                out[i] = dx + dy;
            }
        }
    }
}

/// Isotropic total variation with forward differences and mirror borders.
pub fn total_variation(p: &Plane) -> f64 {
    let grid = Grid {
        w: p.width(),
        h: p.height(),
        boundary: Boundary::Mirror,
    };
    let mut tv = 0.0;
    for y in 0..p.height() {
        for x in 0..p.width() {
            let (gx, gy) = grid.gradient(p.data(), x, y);
            tv += (gx * gx + gy * gy).sqrt();
        }
    }
    tv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::denoise;
    use proptest::prelude::*;

    fn plane_from(w: usize, h: usize, v: Vec<f64>) -> Plane {
        Plane::new(w, h, v).unwrap()
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        // <grad u, p> = -<u, div p>
        for boundary in [Boundary::Mirror, Boundary::Periodic] {
            let (w, h) = (7, 5);
            let grid = Grid { w, h, boundary };
            let u: Vec<f64> = (0..w * h).map(|i| ((i * 13) % 7) as f64 - 2.5).collect();
            let px: Vec<f64> = (0..w * h).map(|i| ((i * 5) % 11) as f64 * 0.1).collect();
            let py: Vec<f64> = (0..w * h).map(|i| ((i * 3) % 4) as f64 - 1.0).collect();
            let mut lhs = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let (gx, gy) = grid.gradient(&u, x, y);
                    lhs += gx * px[y * w + x] + gy * py[y * w + x];
                }
            }
            let mut div = vec![0.0; w * h];
            grid.divergence(&px, &py, &mut div);
            let rhs: f64 = -u.iter().zip(&div).map(|(a, b)| a * b).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_field_fixed_point() {
        let p = Plane::filled(10, 6, 0.7);
        assert_eq!(denoise(&[p.clone()], &DenoiserSpec::new("tv", 0.3)).unwrap()[0], p);
    }

    #[test]
    fn vanishing_weight_is_identity() {
        let p = plane_from(8, 8, (0..64).map(|i| (i as f64 * 0.37).sin()).collect());
        let out = denoise(&[p.clone()], &DenoiserSpec::new("tv", 1e-6)).unwrap();
        let err = out[0]
            .data()
            .iter()
            .zip(p.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3);
    }

    #[test]
    fn shift_equivariant_on_torus() {
        let p = plane_from(12, 10, (0..120).map(|i| ((i * 7919) % 97) as f64 / 97.0).collect());
        let mut spec = DenoiserSpec::new("tv", 0.2);
        spec.boundary = Boundary::Periodic;
        let a = denoise(&[p.roll(-4, 3)], &spec).unwrap().remove(0);
        let b = denoise(&[p], &spec).unwrap().remove(0).roll(-4, 3);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn total_variation_never_increases(
            vals in prop::collection::vec(0.0f64..1.0, 16 * 12),
            sigma in 0.01f64..0.5,
        ) {
            let p = plane_from(16, 12, vals);
            let out = denoise(&[p.clone()], &DenoiserSpec::new("tv", sigma)).unwrap().remove(0);
            prop_assert!(total_variation(&out) <= total_variation(&p) + 1e-9);
        }
    }
}
