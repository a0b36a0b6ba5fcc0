//! Planar image containers.

use crate::cfa::Channel;
use crate::error::{check_dims, QisError, Result};

/// Single-channel real image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(QisError::InvalidParameter(format!(
                "plane of {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(QisError::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Circular shift by (dx, dy).
    pub fn roll(&self, dx: isize, dy: isize) -> Plane {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = vec![0.0; self.data.len()];
        for y in 0..h {
            let ty = (y + dy).rem_euclid(h);
            for x in 0..w {
                let tx = (x + dx).rem_euclid(w);
                out[(ty * w + tx) as usize] = self.data[(y * w + x) as usize];
            }
        }
        Plane {
            width: self.width,
            height: self.height,
            data: out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Linear,
    GammaEncoded,
    /// Values live in the variance-stabilized domain.
    Stabilized,
}

/// Three-plane real image (R, G, B).
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    planes: [Plane; 3],
    space: ColorSpace,
}

impl ColorImage {
    pub fn from_planes(planes: [Plane; 3], space: ColorSpace) -> Result<Self> {
        let dims = planes[0].dims();
        check_dims(dims, planes[1].dims())?;
        check_dims(dims, planes[2].dims())?;
        for p in &planes {
            p.check_finite()?;
        }
        if space == ColorSpace::GammaEncoded {
            let out_of_range = planes
                .iter()
                .flat_map(|p| p.data())
                .any(|&v| !(0.0..=1.0).contains(&v));
            if out_of_range {
                return Err(QisError::InvalidParameter(
                    "gamma-encoded image values must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(Self { planes, space })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3], space: ColorSpace) -> Self {
        Self {
            planes: rgb.map(|v| Plane::filled(width, height, v)),
            space,
        }
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn plane(&self, c: Channel) -> &Plane {
        &self.planes[c.index()]
    }

    pub fn planes(&self) -> &[Plane; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Plane; 3] {
        self.planes
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        [
            self.planes[0].get(x, y),
            self.planes[1].get(x, y),
            self.planes[2].get(x, y),
        ]
    }

    pub fn channel_means(&self) -> [f64; 3] {
        [
            self.planes[0].mean(),
            self.planes[1].mean(),
            self.planes[2].mean(),
        ]
    }
}

/// Ground-truth linear-light scene with every value in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    planes: [Plane; 3],
}

impl SceneImage {
    pub fn from_planes(planes: [Plane; 3]) -> Result<Self> {
        let dims = planes[0].dims();
        check_dims(dims, planes[1].dims())?;
        check_dims(dims, planes[2].dims())?;
        for p in &planes {
            if let Some(i) = p.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(QisError::InvalidParameter(format!(
                    "scene value {} at index {} outside [0, 1]",
                    p.data()[i],
                    i
                )));
            }
        }
        Ok(Self { planes })
    }

    pub fn uniform(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_planes(rgb.map(|v| Plane::filled(width, height, v)))
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn plane(&self, c: Channel) -> &Plane {
        &self.planes[c.index()]
    }

    /// Mean intensity over all channels and pixels.
    pub fn mean(&self) -> f64 {
        self.planes.iter().map(Plane::mean).sum::<f64>() / 3.0
    }

    pub fn to_color_image(&self) -> ColorImage {
        ColorImage {
            planes: self.planes.clone(),
            space: ColorSpace::Linear,
        }
    }
}

impl TryFrom<ColorImage> for SceneImage {
    type Error = QisError;

    fn try_from(img: ColorImage) -> Result<Self> {
        SceneImage::from_planes(img.into_planes())
    }
}

/// Deterministic synthetic color scene: smooth gradients, saturated color
/// patches, disks and a fine stripe texture. Values sit on the 8-bit grid
/// (k / 255) so the scene survives a PPM round trip unchanged.
pub fn test_scene(width: usize, height: usize) -> SceneImage {
    let mut planes = [
        Plane::filled(width, height, 0.0),
        Plane::filled(width, height, 0.0),
        Plane::filled(width, height, 0.0),
    ];
    const PATCHES: [[f64; 3]; 12] = [
        [0.45, 0.32, 0.26],
        [0.76, 0.58, 0.50],
        [0.36, 0.48, 0.61],
        [0.35, 0.42, 0.26],
        [0.51, 0.50, 0.69],
        [0.38, 0.74, 0.67],
        [0.85, 0.47, 0.17],
        [0.27, 0.36, 0.65],
        [0.76, 0.33, 0.38],
        [0.36, 0.24, 0.42],
        [0.62, 0.73, 0.25],
        [0.88, 0.63, 0.18],
    ];
    let (wf, hf) = (width.max(1) as f64, height.max(1) as f64);
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 + 0.5) / wf;
            let v = (y as f64 + 0.5) / hf;
            // background gradient
            let mut rgb = [0.15 + 0.6 * u, 0.2 + 0.5 * v, 0.7 - 0.5 * u * v];
            // 4x3 patch grid in the upper-left quadrant
            if u < 0.5 && v < 0.375 {
                let col = (u / 0.125) as usize;
                let row = (v / 0.125) as usize;
                let inner_u = (u / 0.125).fract();
                let inner_v = (v / 0.125).fract();
                if (0.1..0.9).contains(&inner_u) && (0.1..0.9).contains(&inner_v) {
                    rgb = PATCHES[row * 4 + col];
                } else {
                    rgb = [0.08, 0.08, 0.08];
                }
            }
            // disks
            let disks = [
                (0.72, 0.28, 0.14, [0.9, 0.15, 0.12]),
                (0.78, 0.7, 0.12, [0.1, 0.75, 0.2]),
                (0.3, 0.72, 0.16, [0.15, 0.25, 0.9]),
            ];
            for (cx, cy, r, color) in disks {
                let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                if d2 < r * r {
                    rgb = color;
                }
            }
            // stripe texture band along the bottom
            if v > 0.9 {
                let s = 0.5 + 0.4 * (u * 40.0 * std::f64::consts::PI).sin();
                rgb = [s, s, s];
            }
            for (c, plane) in planes.iter_mut().enumerate() {
                let q = (rgb[c].clamp(0.0, 1.0) * 255.0).round() / 255.0;
                plane.set(x, y, q);
            }
        }
    }
    SceneImage { planes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_range_enforced() {
        let bad = Plane::new(1, 1, vec![1.5]).unwrap();
        let ok = Plane::filled(1, 1, 0.5);
        assert!(SceneImage::from_planes([bad, ok.clone(), ok]).is_err());
    }

    #[test]
    fn mismatched_planes_rejected() {
        let a = Plane::filled(2, 2, 0.1);
        let b = Plane::filled(2, 3, 0.1);
        assert!(matches!(
            SceneImage::from_planes([a.clone(), b, a]),
            Err(QisError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gamma_encoded_range_enforced() {
        let p = Plane::filled(2, 2, 1.2);
        let r = ColorImage::from_planes([p.clone(), p.clone(), p], ColorSpace::GammaEncoded);
        assert!(r.is_err());
    }

    #[test]
    fn roll_wraps() {
        let p = Plane::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.roll(1, 0).data(), &[3.0, 1.0, 2.0]);
        assert_eq!(p.roll(-1, 0).data(), &[2.0, 3.0, 1.0]);
    }

    #[test]
    fn test_scene_on_8bit_grid() {
        let s = test_scene(64, 64);
        for c in Channel::ALL {
            for &v in s.plane(c).data() {
                let k = v * 255.0;
                assert!((k - k.round()).abs() < 1e-9);
            }
        }
        assert_eq!(s, test_scene(64, 64));
    }
}
