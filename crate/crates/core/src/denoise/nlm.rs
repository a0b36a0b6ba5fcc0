use rayon::prelude::*;

use super::{Boundary, Denoiser, DenoiserSpec};
use crate::image::Plane;

/// Non-local means with noise-adaptive weights
/// `exp(-max(d^2 - 2 sigma^2, 0) / h^2)`, `h = nlm_h * sigma`, where `d^2`
/// is the mean squared difference between patches.
///
/// Patch distances are computed per search offset with running box sums, so
/// the cost does not depend on the patch size.
#[derive(Debug, Default, Clone, Copy)]
pub struct NonLocalMeans;

const BAND_ROWS: usize = 32;

impl Denoiser for NonLocalMeans {
    fn denoise_plane(&self, plane: &Plane, sigma: f64, spec: &DenoiserSpec) -> Plane {
        let (w, h) = plane.dims();
        if w == 0 || h == 0 {
            return plane.clone();
        }
        let pr = spec.params.patch_radius;
        let sr = spec.params.search_radius;
        let pad = pr + sr;
        let padded = Padded::new(plane, pad, spec.boundary);
        let hh = (spec.params.nlm_h * sigma).powi(2);
        let offset2 = 2.0 * sigma * sigma;
        let norm = 1.0 / ((2 * pr + 1) * (2 * pr + 1)) as f64;

        let mut out = vec![0.0; w * h];
        out.par_chunks_mut(BAND_ROWS * w)
            .enumerate()
            .for_each(|(band, dst)| {
                let y0 = band * BAND_ROWS;
                let rows = dst.len() / w;
                let ctx = BandCtx {
                    padded: &padded,
                    w,
                    y0,
                    rows,
                    pr,
                    sr,
                    hh,
                    offset2,
                    norm,
                };
                ctx.run(dst);
            });
        Plane::new(w, h, out).expect("shape preserved")
    }
}

struct Padded {
    data: Vec<f64>,
    stride: usize,
    pad: usize,
}

impl Padded {
    fn new(p: &Plane, pad: usize, boundary: Boundary) -> Self {
        let (w, h) = p.dims();
        let stride = w + 2 * pad;
        let rows = h + 2 * pad;
        let mut data = Vec::with_capacity(stride * rows);
        for py in 0..rows {
            let y = boundary.index(py as isize - pad as isize, h);
            for px in 0..stride {
                let x = boundary.index(px as isize - pad as isize, w);
                data.push(p.get(x, y));
            }
        }
        Self { data, stride, pad }
    }

    /// Sample at image coordinates, which may reach `pad` outside the image.
    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let px = (x + self.pad as isize) as usize;
        let py = (y + self.pad as isize) as usize;
        self.data[py * self.stride + px]
    }
}

struct BandCtx<'a> {
    padded: &'a Padded,
    w: usize,
    y0: usize,
    rows: usize,
    pr: usize,
    sr: usize,
    hh: f64,
    offset2: f64,
    norm: f64,
}

impl BandCtx<'_> {
    fn run(&self, dst: &mut [f64]) {
        let (w, rows, pr) = (self.w, self.rows, self.pr as isize);
        let ext_rows = rows + 2 * self.pr;
        let ext_cols = w + 2 * self.pr;
        let mut diff = vec![0.0; ext_rows * ext_cols];
        let mut hsum = vec![0.0; ext_rows * w];
        let mut wsum = vec![0.0; rows * w];
        let mut vsum = vec![0.0; rows * w];
        let sr = self.sr as isize;

        for dy in -sr..=sr {
            for dx in -sr..=sr {
                // squared differences over the band plus a patch-radius margin
                for r in 0..ext_rows {
                    let y = (self.y0 + r) as isize - pr;
                    let row = &mut diff[r * ext_cols..(r + 1) * ext_cols];
                    for (c, d) in row.iter_mut().enumerate() {
                        let x = c as isize - pr;
                        let e = self.padded.at(x, y) - self.padded.at(x + dx, y + dy);
                        *d = e * e;
                    }
                }
                // horizontal box sums
                let k = 2 * self.pr + 1;
                for r in 0..ext_rows {
                    let src = &diff[r * ext_cols..(r + 1) * ext_cols];
                    let dstr = &mut hsum[r * w..(r + 1) * w];
                    let mut acc: f64 = src[..k].iter().sum();
                    dstr[0] = acc;
                    for x in 1..w {
                        acc += src[x + k - 1] - src[x - 1];
                        dstr[x] = acc;
                    }
                }
                // vertical box sums, weights and accumulation
                for x in 0..w {
                    let mut acc: f64 = (0..k).map(|r| hsum[r * w + x]).sum();
                    for r in 0..rows {
                        if r > 0 {
                            acc += hsum[(r + k - 1) * w + x] - hsum[(r - 1) * w + x];
                        }
                        let d2 = acc * self.norm;
                        let excess = d2 - self.offset2;
                        let wt = if excess <= 0.0 {
                            1.0
                        } else {
                            let a = excess / self.hh;
                            if a > 40.0 {
                                continue;
                            }
                            (-a).exp()
                        };
                        let y = (self.y0 + r) as isize;
                        let xi = x as isize;
                        let delta = self.padded.at(xi + dx, y + dy) - self.padded.at(xi, y);
                        wsum[r * w + x] += wt;
                        vsum[r * w + x] += wt * delta;
                    }
                }
            }
        }
        for r in 0..rows {
            let y = (self.y0 + r) as isize;
            for x in 0..w {
                let i = r * w + x;
                // the zero offset always contributes weight 1
                dst[i] = self.padded.at(x as isize, y) + vsum[i] / wsum[i];
            }
        }
    }
}
