//! Forward imaging model: gain, color filtering, photon arrival, read noise
//! and quantization.
//!
//! Every random draw is keyed by `(seed, frame, jot, stream)`, so a stack is a
//! pure function of its inputs and frames can be produced in any order or on
//! any number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::cfa::CfaMask;
use crate::error::{check_dims, QisError, Result};
use crate::image::SceneImage;

/// Read noise of the prototype sensor, electrons rms at room temperature.
pub const PROTOTYPE_READ_NOISE_E: f64 = 0.24;

/// Mean dark count rate of the prototype sensor, electrons per jot per second.
pub const PROTOTYPE_DARK_COUNT_RATE: f64 = 0.068;

/// Largest supported multi-bit depth.
pub const MAX_BITS: u32 = 16;

/// Jot readout mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// One bit per jot: 1 iff the photon count reaches `threshold`.
    SingleBit { threshold: u32 },
    /// Photon count clamped at `2^bits - 1`.
    MultiBit { bits: u32 },
}

impl Readout {
    pub fn validate(self) -> Result<Self> {
        match self {
            Readout::SingleBit { threshold } if !(1..=255).contains(&threshold) => Err(
                QisError::InvalidParameter(format!("threshold q = {threshold} outside [1, 255]")),
            ),
            Readout::MultiBit { bits } if !(1..=MAX_BITS).contains(&bits) => Err(
                QisError::InvalidParameter(format!("bit depth L = {bits} outside [1, {MAX_BITS}]")),
            ),
            r => Ok(r),
        }
    }

    /// Largest value a single frame can hold.
    pub fn max_value(self) -> u32 {
        match self {
            Readout::SingleBit { .. } => 1,
            Readout::MultiBit { bits } => (1u32 << bits) - 1,
        }
    }

    pub fn is_single_bit(self) -> bool {
        matches!(self, Readout::SingleBit { .. })
    }

    #[inline]
    pub fn quantize(self, count: u32) -> u16 {
        match self {
            Readout::SingleBit { threshold } => u16::from(count >= threshold),
            Readout::MultiBit { bits } => count.min((1u32 << bits) - 1) as u16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    /// Expected photons per unit intensity per frame.
    pub alpha: f64,
    pub frames: u32,
    pub readout: Readout,
    /// Gaussian read noise, electrons rms.
    pub read_noise_sigma: f64,
    /// Expected dark electrons per jot per frame, added to the photon mean.
    pub dark_count_rate: f64,
    pub seed: u64,
}

impl SensorConfig {
    pub fn new(alpha: f64, frames: u32, readout: Readout, seed: u64) -> Self {
        Self {
            alpha,
            frames,
            readout,
            read_noise_sigma: 0.0,
            dark_count_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(QisError::InvalidParameter(format!(
                "gain alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.frames == 0 || self.frames > u32::from(u16::MAX) {
            return Err(QisError::InvalidParameter(format!(
                "frame count {} outside [1, {}]",
                self.frames,
                u16::MAX
            )));
        }
        self.readout.validate()?;
        if !(self.read_noise_sigma.is_finite() && self.read_noise_sigma >= 0.0) {
            return Err(QisError::InvalidParameter("read noise sigma must be >= 0".into()));
        }
        if !(self.dark_count_rate.is_finite() && self.dark_count_rate >= 0.0) {
            return Err(QisError::InvalidParameter("dark count rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-jot expected photon count for one frame (the mosaiced image).
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Gain-scale the scene and keep, at each jot, the channel its filter passes.
pub fn expose(scene: &SceneImage, cfa: &CfaMask, alpha: f64) -> Result<ExposureMap> {
    check_dims(scene.dims(), cfa.dims())?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(QisError::InvalidParameter(format!(
            "gain alpha must be positive, got {alpha}"
        )));
    }
    let values = cfa
        .labels()
        .iter()
        .enumerate()
        .map(|(m, &c)| alpha * scene.plane(c).data()[m])
        .collect();
    Ok(ExposureMap {
        width: cfa.width(),
        height: cfa.height(),
        values,
    })
}

const STREAM_PHOTONS: u64 = 0;
const STREAM_READ_NOISE: u64 = 1;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, frame, jot, stream)` key.
pub fn jot_rng(seed: u64, frame: u32, jot: usize, stream: u64) -> ChaCha8Rng {
    let mut k = splitmix64(seed);
    k = splitmix64(k ^ u64::from(frame));
    k = splitmix64(k ^ jot as u64);
    k = splitmix64(k ^ stream);
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(k.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

#[inline]
fn draw_poisson<R: Rng>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only rejects non-positive or non-finite means, handled above.
    let d = Poisson::new(mean).expect("positive finite mean");
    let v: f64 = d.sample(rng);
    v.min(u32::MAX as f64) as u32
}

#[inline]
fn photon_count(theta: f64, config: &SensorConfig, frame: u32, jot: usize) -> u32 {
    let mut rng = jot_rng(config.seed, frame, jot, STREAM_PHOTONS);
    draw_poisson(&mut rng, theta + config.dark_count_rate)
}

/// Poisson photon arrivals for one frame; mean at jot m is `theta_m + dark`.
pub fn sample_photons(theta: &ExposureMap, config: &SensorConfig, frame: u32) -> Vec<u32> {
    theta
        .values
        .par_iter()
        .enumerate()
        .map(|(m, &t)| photon_count(t, config, frame, m))
        .collect()
}

/// Single-bit readout: `B_m = 1` iff `Y_m >= q`.
pub fn quantize_single_bit(counts: &[u32], q: u32) -> Vec<u16> {
    counts.iter().map(|&y| u16::from(y >= q)).collect()
}

/// Multi-bit readout: `B_m = min(Y_m, 2^L - 1)`.
pub fn quantize_multi_bit(counts: &[u32], bits: u32) -> Vec<u16> {
    let cap = (1u32 << bits.min(MAX_BITS)) - 1;
    counts.iter().map(|&y| y.min(cap) as u16).collect()
}

/// Analog readout `Y + eta` with `eta ~ N(0, sigma^2)` drawn from the
/// read-noise stream of each jot.
pub fn add_read_noise(counts: &[u32], sigma: f64, seed: u64, frame: u32) -> Vec<f64> {
    if sigma == 0.0 {
        return counts.iter().map(|&y| f64::from(y)).collect();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    counts
        .par_iter()
        .enumerate()
        .map(|(m, &y)| {
            let mut rng = jot_rng(seed, frame, m, STREAM_READ_NOISE);
            f64::from(y) + normal.sample(&mut rng)
        })
        .collect()
}

/// Nearest-integer photon count recovered from an analog readout.
#[inline]
pub fn recount(analog: f64) -> u32 {
    analog.round().max(0.0) as u32
}

/// Quantized photon-count frames with acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    width: usize,
    height: usize,
    frames: u32,
    readout: Readout,
    cfa: CfaMask,
    alpha: Option<f64>,
    seed: u64,
    data: Vec<u16>,
}

impl FrameStack {
    /// Build a stack from `frames` row-major planes laid end to end.
    pub fn new(
        cfa: CfaMask,
        frames: u32,
        readout: Readout,
        alpha: Option<f64>,
        seed: u64,
        data: Vec<u16>,
    ) -> Result<Self> {
        readout.validate()?;
        if frames == 0 {
            return Err(QisError::InvalidParameter("stack needs at least one frame".into()));
        }
        let jots = cfa.len();
        if data.len() != jots * frames as usize {
            return Err(QisError::InvalidParameter(format!(
                "stack payload has {} values, expected {} frames x {} jots",
                data.len(),
                frames,
                jots
            )));
        }
        let cap = readout.max_value();
        if let Some(i) = data.iter().position(|&v| u32::from(v) > cap) {
            return Err(QisError::InvalidParameter(format!(
                "value {} at index {} exceeds readout maximum {}",
                data[i], i, cap
            )));
        }
        if let Some(a) = alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(QisError::InvalidParameter(format!("invalid gain {a}")));
            }
        }
        Ok(Self {
            width: cfa.width(),
            height: cfa.height(),
            frames,
            readout,
            cfa,
            alpha,
            seed,
            data,
        })
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

    pub fn frames(&self) -> u32 {
        self.frames
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    pub fn cfa(&self) -> &CfaMask {
        &self.cfa
    }

    /// Gain used at capture, when known.
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frame(&self, t: u32) -> &[u16] {
        let n = self.width * self.height;
        let start = t as usize * n;
        &self.data[start..start + n]
    }

    /// All frames, frame-major.
    pub fn data(&self) -> &[u16] {
        &self.data
    }
}

/// Run the full forward model for `config.frames` frames.
pub fn simulate_stack(scene: &SceneImage, cfa: &CfaMask, config: &SensorConfig) -> Result<FrameStack> {
    config.validate()?;
    let theta = expose(scene, cfa, config.alpha)?;
    let jots = theta.values.len();
    let mut data = vec![0u16; jots * config.frames as usize];
    let readout = config.readout;
    let sigma = config.read_noise_sigma;
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"));

    if jots > 0 {
        data.par_chunks_mut(jots)
            .enumerate()
            .for_each(|(t, frame)| {
                let t = t as u32;
                for (m, out) in frame.iter_mut().enumerate() {
                    let mut y = photon_count(theta.values[m], config, t, m);
                    if let Some(normal) = &normal {
                        let mut rng = jot_rng(config.seed, t, m, STREAM_READ_NOISE);
                        y = recount(f64::from(y) + normal.sample(&mut rng));
                    }
                    *out = readout.quantize(y);
                }
            });
    }

    FrameStack::new(
        cfa.clone(),
        config.frames,
        readout,
        Some(config.alpha),
        config.seed,
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Plane;

    fn gray(w: usize, h: usize, v: f64) -> SceneImage {
        SceneImage::uniform(w, h, [v, v, v]).unwrap()
    }

    #[test]
    fn expose_uniform_scene() {
        let cfa = CfaMask::rggb(4, 4);
        let theta = expose(&gray(4, 4, 0.5), &cfa, 10.0).unwrap();
        assert!(theta.values.iter().all(|&t| t == 5.0));
    }

    #[test]
    fn expose_selects_red_jots() {
        let cfa = CfaMask::rggb(4, 2);
        let one = Plane::filled(4, 2, 1.0);
        let zero = Plane::filled(4, 2, 0.0);
        let scene = SceneImage::from_planes([one, zero.clone(), zero]).unwrap();
        let theta = expose(&scene, &cfa, 2.0).unwrap();
        for (m, &t) in theta.values.iter().enumerate() {
            let expected = if cfa.channel(m) == crate::cfa::Channel::Red { 2.0 } else { 0.0 };
            assert_eq!(t, expected);
        }
    }

    #[test]
    fn expose_green_jot_scalar() {
        let cfa = CfaMask::rggb(2, 2);
        let mut g = Plane::filled(2, 2, 0.0);
        g.set(1, 0, 0.3);
        let z = Plane::filled(2, 2, 0.0);
        let scene = SceneImage::from_planes([z.clone(), g, z]).unwrap();
        let theta = expose(&scene, &cfa, 7.0).unwrap();
        assert!((theta.values[1] - 2.1).abs() < 1e-12);
    }

    #[test]
    fn expose_rejects_mismatch() {
        let cfa = CfaMask::rggb(4, 4);
        assert!(matches!(
            expose(&gray(4, 2, 0.1), &cfa, 1.0),
            Err(QisError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_exposure_gives_zero_counts() {
        let theta = ExposureMap {
            width: 8,
            height: 8,
            values: vec![0.0; 64],
        };
        let cfg = SensorConfig::new(1.0, 1, Readout::MultiBit { bits: 8 }, 3);
        for t in 0..10 {
            assert!(sample_photons(&theta, &cfg, t).iter().all(|&y| y == 0));
        }
    }

    #[test]
    fn single_bit_examples() {
        assert_eq!(quantize_single_bit(&[0, 3, 4, 9], 4), vec![0, 0, 1, 1]);
        assert_eq!(quantize_single_bit(&[0], 1), vec![0]);
    }

    #[test]
    fn multi_bit_examples() {
        assert_eq!(quantize_multi_bit(&[10], 3), vec![7]);
        assert_eq!(quantize_multi_bit(&[6], 3), vec![6]);
        assert_eq!(quantize_multi_bit(&[7], 3), vec![7]);
        assert_eq!(quantize_multi_bit(&[70_000], 16), vec![65535]);
    }

    #[test]
    fn zero_read_noise_is_identity() {
        let y = [0, 1, 5, 1000];
        assert_eq!(add_read_noise(&y, 0.0, 1, 0), vec![0.0, 1.0, 5.0, 1000.0]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SensorConfig::new(1.0, 4, Readout::SingleBit { threshold: 1 }, 0);
        assert!(cfg.validate().is_ok());
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 1.0;
        cfg.readout = Readout::MultiBit { bits: 17 };
        assert!(cfg.validate().is_err());
        cfg.readout = Readout::SingleBit { threshold: 0 };
        assert!(cfg.validate().is_err());
        cfg.readout = Readout::MultiBit { bits: 4 };
        cfg.frames = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn black_scene_gives_empty_frames() {
        let cfa = CfaMask::rggb(16, 16);
        for readout in [Readout::SingleBit { threshold: 1 }, Readout::MultiBit { bits: 4 }] {
            let cfg = SensorConfig::new(5.0, 6, readout, 11);
            let stack = simulate_stack(&gray(16, 16, 0.0), &cfa, &cfg).unwrap();
            assert!(stack.data().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn stack_rejects_out_of_range_values() {
        let cfa = CfaMask::rggb(2, 1);
        let r = FrameStack::new(cfa, 1, Readout::SingleBit { threshold: 1 }, None, 0, vec![0, 2]);
        assert!(r.is_err());
    }

    #[test]
    fn raising_threshold_never_sets_bits() {
        let counts: Vec<u32> = (0..50).collect();
        for q in 1..10 {
            let lo = quantize_single_bit(&counts, q);
            let hi = quantize_single_bit(&counts, q + 1);
            assert!(lo.iter().zip(&hi).all(|(a, b)| b <= a));
        }
    }
}
