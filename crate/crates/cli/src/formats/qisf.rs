//! QISF: little-endian frame-stack container.
//!
//! ```text
//! offset size field
//!      0    4 magic "QISF"
//!      4    2 version (1)
//!      6    4 width
//!     10    4 height
//!     14    2 frame count T
//!     16    1 mode (0 single-bit, 1 multi-bit)
//!     17    1 threshold q (mode 0) or bit depth L (mode 1)
//!     18    1 CFA code (0 = RGGB)
//!     19    8 gain alpha, f64 (0 when unknown)
//!     27    8 seed
//!     35      T row-major frames: u8 per jot (mode 0), u16 LE per jot (mode 1)
//! ```

use std::path::Path;

use qis_core::{CfaMask, FrameStack, Readout};

use super::{write_atomic, FormatError};
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"QISF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 35;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QisfHeader {
    pub version: u16,
    pub width: u32,
    pub height: u32,
    pub frames: u16,
    pub mode: u8,
    pub q_or_l: u8,
    pub cfa_code: u8,
    pub alpha: f64,
    pub seed: u64,
}

impl QisfHeader {
    pub fn for_stack(stack: &FrameStack) -> Self {
        let (mode, q_or_l) = match stack.readout() {
            Readout::SingleBit { threshold } => (0, threshold as u8),
            Readout::MultiBit { bits } => (1, bits as u8),
        };
        Self {
            version: VERSION,
            width: stack.width() as u32,
            height: stack.height() as u32,
            frames: stack.frames() as u16,
            mode,
            q_or_l,
            cfa_code: 0,
            alpha: stack.alpha().unwrap_or(0.0),
            seed: stack.seed(),
        }
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&self.width.to_le_bytes());
        b[10..14].copy_from_slice(&self.height.to_le_bytes());
        b[14..16].copy_from_slice(&self.frames.to_le_bytes());
        b[16] = self.mode;
        b[17] = self.q_or_l;
        b[18] = self.cfa_code;
        b[19..27].copy_from_slice(&self.alpha.to_le_bytes());
        b[27..35].copy_from_slice(&self.seed.to_le_bytes());
        b
    }

    fn parse(bytes: &[u8]) -> Result<Self, FormatError> {
        let magic_len = bytes.len().min(4);
        if bytes[..magic_len] != MAGIC[..magic_len] {
            return Err(FormatError::BadMagic {
                expected: "QISF".into(),
                found: String::from_utf8_lossy(&bytes[..magic_len]).into_owned(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::TruncatedHeader {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let h = Self {
            version: u16_at(4),
            width: u32_at(6),
            height: u32_at(10),
            frames: u16_at(14),
            mode: bytes[16],
            q_or_l: bytes[17],
            cfa_code: bytes[18],
            alpha: f64::from_bits(u64_at(19)),
            seed: u64_at(27),
        };
        if h.version != VERSION {
            return Err(FormatError::Version(h.version));
        }
        if h.width == 0 || h.height == 0 {
            return Err(FormatError::Header(format!("empty frame {}x{}", h.width, h.height)));
        }
        if h.frames == 0 {
            return Err(FormatError::Header("frame count is 0".into()));
        }
        if h.cfa_code != 0 {
            return Err(FormatError::Header(format!("unknown CFA code {}", h.cfa_code)));
        }
        if !(h.alpha.is_finite() && h.alpha >= 0.0) {
            return Err(FormatError::Header(format!("invalid gain {}", h.alpha)));
        }
        h.readout()?;
        Ok(h)
    }

    pub fn readout(&self) -> Result<Readout, FormatError> {
        let r = match self.mode {
            0 => Readout::SingleBit {
                threshold: u32::from(self.q_or_l),
            },
            1 => Readout::MultiBit {
                bits: u32::from(self.q_or_l),
            },
            m => return Err(FormatError::Header(format!("unknown mode {m}"))),
        };
        r.validate()
            .map_err(|e| FormatError::Header(e.to_string()))
    }

    fn bytes_per_jot(&self) -> u64 {
        if self.mode == 0 {
            1
        } else {
            2
        }
    }

    /// Payload size implied by the header, `None` on overflow.
    pub fn payload_len(&self) -> Option<u64> {
        u64::from(self.width)
            .checked_mul(u64::from(self.height))?
            .checked_mul(u64::from(self.frames))?
            .checked_mul(self.bytes_per_jot())
    }
}

pub fn encode_stack(stack: &FrameStack) -> Vec<u8> {
    let header = QisfHeader::for_stack(stack);
    let mut out = Vec::with_capacity(HEADER_LEN + stack.data().len() * 2);
    out.extend_from_slice(&header.to_bytes());
    match stack.readout() {
        Readout::SingleBit { .. } => out.extend(stack.data().iter().map(|&v| v as u8)),
        Readout::MultiBit { .. } => {
            for &v in stack.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Parse and validate a QISF byte buffer. Sizes are checked against the
/// buffer before anything is allocated.
pub fn decode_stack(bytes: &[u8]) -> Result<FrameStack, FormatError> {
    let header = QisfHeader::parse(bytes)?;
    let expected = header.payload_len().ok_or_else(|| {
        FormatError::Overflow(format!(
            "{} x {} x {} frames",
            header.width, header.height, header.frames
        ))
    })?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if expected != actual {
        return Err(FormatError::PayloadLength { expected, actual });
    }
    let readout = header.readout()?;
    let max = readout.max_value();
    let payload = &bytes[HEADER_LEN..];
    let data: Vec<u16> = match readout {
        Readout::SingleBit { .. } => payload.iter().map(|&b| u16::from(b)).collect(),
        Readout::MultiBit { .. } => payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect(),
    };
    if let Some(i) = data.iter().position(|&v| u32::from(v) > max) {
        return Err(FormatError::Range {
            value: u32::from(data[i]),
            offset: HEADER_LEN + i * header.bytes_per_jot() as usize,
            max,
        });
    }
    let cfa = CfaMask::rggb(header.width as usize, header.height as usize);
    let alpha = (header.alpha > 0.0).then_some(header.alpha);
    FrameStack::new(
        cfa,
        u32::from(header.frames),
        readout,
        alpha,
        header.seed,
        data,
    )
    .map_err(|e| FormatError::Header(e.to_string()))
}

pub fn read_stack(path: &Path) -> Result<FrameStack> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_stack(&bytes).map_err(|e| CliError::format(path, e))
}

pub fn write_stack(path: &Path, stack: &FrameStack) -> Result<()> {
    if stack.frames() > u32::from(u16::MAX) {
        return Err(CliError::format(
            path,
            FormatError::Header(format!("{} frames exceed the u16 field", stack.frames())),
        ));
    }
    if !stack.cfa().is_rggb() {
        return Err(CliError::format(path, FormatError::Header("only RGGB stacks can be stored".into())));
    }
    write_atomic(path, &encode_stack(stack)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(readout: Readout) -> FrameStack {
        let cap = readout.max_value();
        let data = (0..2 * 4 * 2u32).map(|i| ((i * 5) % (cap + 1)) as u16).collect();
        FrameStack::new(CfaMask::rggb(4, 2), 2, readout, Some(3.5), 42, data).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_stack(&tiny(Readout::MultiBit { bits: 5 }));
        assert_eq!(&bytes[0..4], b"QISF");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes([bytes[14], bytes[15]]), 2);
        assert_eq!((bytes[16], bytes[17], bytes[18]), (1, 5, 0));
        assert_eq!(f64::from_le_bytes(bytes[19..27].try_into().unwrap()), 3.5);
        assert_eq!(u64::from_le_bytes(bytes[27..35].try_into().unwrap()), 42);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 8 * 2);
    }

    #[test]
    fn round_trip_both_modes() {
        for r in [Readout::SingleBit { threshold: 3 }, Readout::MultiBit { bits: 16 }] {
            let s = tiny(r);
            let bytes = encode_stack(&s);
            let back = decode_stack(&bytes).unwrap();
            assert_eq!(back, s);
            assert_eq!(encode_stack(&back), bytes);
        }
    }

    #[test]
    fn rejects_range_violation_in_single_bit() {
        let mut bytes = encode_stack(&tiny(Readout::SingleBit { threshold: 1 }));
        bytes[HEADER_LEN + 3] = 2;
        assert!(matches!(
            decode_stack(&bytes),
            Err(FormatError::Range { value: 2, .. })
        ));
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = encode_stack(&tiny(Readout::SingleBit { threshold: 1 }));
        bytes[0] = b'X';
        assert!(matches!(decode_stack(&bytes), Err(FormatError::BadMagic { .. })));
        let mut bytes = encode_stack(&tiny(Readout::SingleBit { threshold: 1 }));
        bytes[4] = 2;
        assert_eq!(decode_stack(&bytes), Err(FormatError::Version(2)));
    }

    #[test]
    fn rejects_size_at_u32_boundary_without_allocating() {
        let mut bytes = encode_stack(&tiny(Readout::MultiBit { bits: 4 }));
        // 65536 x 65536 jots = 2^32
        bytes[6..10].copy_from_slice(&65536u32.to_le_bytes());
        bytes[10..14].copy_from_slice(&65536u32.to_le_bytes());
        match decode_stack(&bytes) {
            Err(FormatError::PayloadLength { expected, .. }) => assert_eq!(expected, (1u64 << 32) * 2 * 2),
            other => panic!("unexpected {other:?}"),
        }
        bytes[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[14..16].copy_from_slice(&u16::MAX.to_le_bytes());
        assert!(matches!(decode_stack(&bytes), Err(FormatError::Overflow(_))));
    }

    #[test]
    fn rejects_invalid_mode_fields() {
        let base = encode_stack(&tiny(Readout::MultiBit { bits: 4 }));
        let mut b = base.clone();
        b[17] = 17;
        assert!(matches!(decode_stack(&b), Err(FormatError::Header(_))));
        let mut b = base.clone();
        b[16] = 7;
        assert!(matches!(decode_stack(&b), Err(FormatError::Header(_))));
        let mut b = base;
        b[18] = 1;
        assert!(matches!(decode_stack(&b), Err(FormatError::Header(_))));
    }
}
