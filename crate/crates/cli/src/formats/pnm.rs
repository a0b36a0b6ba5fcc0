//! Binary portable graymap (P5) and pixmap (P6) with maxval 255 or 65535.

use std::path::Path;

use qis_core::{ColorImage, ColorSpace, Plane};

use super::{write_atomic, FormatError};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReadOptions {
    /// Undo a display gamma after scaling to [0, 1].
    pub decode_gamma: Option<f64>,
}

/// Raw samples of a decoded file.
#[derive(Debug, Clone, PartialEq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u32,
    pub samples: Vec<u16>,
}

impl PnmImage {
    pub fn to_color_image(&self, opts: ReadOptions) -> ColorImage {
        let n = self.width * self.height;
        let maxval = f64::from(self.maxval);
        let decode = |v: u16| {
            let x = f64::from(v) / maxval;
            match opts.decode_gamma {
                Some(g) => x.powf(g),
                None => x,
            }
        };
        let planes: [Plane; 3] = std::array::from_fn(|c| {
            let src = if self.channels == 1 { 0 } else { c };
            let data = (0..n).map(|i| decode(self.samples[i * self.channels + src])).collect();
            Plane::new(self.width, self.height, data).expect("sample count checked")
        });
        ColorImage::from_planes(planes, ColorSpace::Linear).expect("values in [0, 1]")
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, FormatError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FormatError::Header(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::Header(format!("{what} out of range")))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<PnmImage, FormatError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => {
            return Err(FormatError::BadMagic {
                expected: "P5 or P6".into(),
                found: String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned(),
            })
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(FormatError::Header(format!("empty image {width}x{height}")));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(FormatError::Maxval(maxval));
    }
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(FormatError::Header("missing whitespace after maxval".into())),
    }
    let bps: u64 = if maxval == 255 { 1 } else { 2 };
    let expected = (width as u64)
        .checked_mul(height as u64)
        .and_then(|v| v.checked_mul(channels as u64))
        .and_then(|v| v.checked_mul(bps))
        .ok_or_else(|| FormatError::Overflow(format!("{width} x {height} x {channels}")))?;
    let payload = &bytes[cur.pos..];
    if payload.len() as u64 != expected {
        return Err(FormatError::PayloadLength {
            expected,
            actual: payload.len() as u64,
        });
    }
    let samples = if bps == 1 {
        payload.iter().map(|&b| u16::from(b)).collect()
    } else {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(PnmImage {
        width,
        height,
        channels,
        maxval,
        samples,
    })
}

/// Encode as P6; values are clipped to [0, 1] and rounded to the grid.
pub fn encode_ppm(img: &ColorImage, depth: BitDepth) -> Vec<u8> {
    let (w, h) = img.dims();
    let maxval = depth.maxval();
    let mut out = format!("P6\n{w} {h}\n{maxval}\n").into_bytes();
    let m = f64::from(maxval);
    for y in 0..h {
        for x in 0..w {
            for v in img.pixel(x, y) {
                let q = (v.clamp(0.0, 1.0) * m).round() as u16;
                match depth {
                    BitDepth::Eight => out.push(q as u8),
                    BitDepth::Sixteen => out.extend_from_slice(&q.to_be_bytes()),
                }
            }
        }
    }
    out
}

pub fn read_image(path: &Path, opts: ReadOptions) -> Result<ColorImage> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let pnm = decode_pnm(&bytes).map_err(|e| CliError::format(path, e))?;
    Ok(pnm.to_color_image(opts))
}

pub fn write_image(path: &Path, img: &ColorImage, depth: BitDepth) -> Result<()> {
    write_atomic(path, &encode_ppm(img, depth)).map_err(|e| CliError::io(path, e))
}
