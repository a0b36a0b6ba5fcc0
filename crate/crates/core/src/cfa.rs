//! Color filter array layout.

use crate::error::{QisError, Result};

/// Color channel sensed by a jot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Red = 0,
    Green = 1,
    Blue = 2,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Red, Channel::Green, Channel::Blue];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-jot channel assignment. Every jot carries exactly one label, so the
/// three selection masks are disjoint and cover the sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfaMask {
    width: usize,
    height: usize,
    labels: Vec<Channel>,
}

impl CfaMask {
    /// Standard Bayer layout with red at (0, 0): every aligned 2x2 cell reads
    /// `R G / G B`.
    pub fn rggb(width: usize, height: usize) -> Self {
        let labels = (0..height)
            .flat_map(|y| (0..width).map(move |x| rggb_label(x, y)))
            .collect();
        Self {
            width,
            height,
            labels,
        }
    }

    /// Arbitrary layout, row-major.
    pub fn from_labels(width: usize, height: usize, labels: Vec<Channel>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(QisError::InvalidParameter(format!(
                "CFA label count {} does not match {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
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

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn channel_at(&self, x: usize, y: usize) -> Channel {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn channel(&self, index: usize) -> Channel {
        self.labels[index]
    }

    pub fn labels(&self) -> &[Channel] {
        &self.labels
    }

    /// True when the mask is the RGGB layout.
    pub fn is_rggb(&self) -> bool {
        self.labels
            .iter()
            .enumerate()
            .all(|(i, &c)| c == rggb_label(i % self.width, i / self.width))
    }

    /// Diagonal of the selection mask for `channel`, as 0/1 flags.
    pub fn selection(&self, channel: Channel) -> Vec<bool> {
        self.labels.iter().map(|&c| c == channel).collect()
    }
}

#[inline]
fn rggb_label(x: usize, y: usize) -> Channel {
    match (y & 1, x & 1) {
        (0, 0) => Channel::Red,
        (1, 1) => Channel::Blue,
        _ => Channel::Green,
    }
}
