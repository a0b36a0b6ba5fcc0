//! 3x3 color correction fitted to patch measurements.

use nalgebra::{Matrix3, Vector3};

use crate::error::{QisError, Result};

/// Largest accepted condition number.
pub const MAX_CONDITION: f64 = 1e6;

/// Linear map applied to linear RGB by left multiplication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorCorrectionMatrix(Matrix3<f64>);

impl ColorCorrectionMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        let m = Matrix3::from_fn(|r, c| rows[r][c]);
        if !m.iter().all(|v| v.is_finite()) {
            return Err(QisError::InvalidParameter("color matrix has non-finite entries".into()));
        }
        let cond = condition_number(&m);
        if !(cond < MAX_CONDITION) {
            return Err(QisError::RankDeficient(format!(
                "color matrix condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}"
            )));
        }
        Ok(Self(m))
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.0[(r, c)]))
    }

    #[inline]
    pub fn apply(&self, rgb: [f64; 3]) -> [f64; 3] {
        let v = self.0 * Vector3::from(rgb);
        [v[0], v[1], v[2]]
    }
}

fn condition_number(m: &Matrix3<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares fit of `A` minimizing `sum |A m_i - r_i|^2` through the
/// normal equations `A = (sum r m^T)(sum m m^T)^-1`.
pub fn fit_color_correction(measured: &[[f64; 3]], reference: &[[f64; 3]]) -> Result<ColorCorrectionMatrix> {
    if measured.len() != reference.len() {
        return Err(QisError::InvalidParameter(format!(
            "{} measured patches but {} reference patches",
            measured.len(),
            reference.len()
        )));
    }
    if measured.len() < 3 {
        return Err(QisError::InvalidParameter(format!(
            "need at least 3 patches, got {}",
            measured.len()
        )));
    }
    let mut mtm = Matrix3::zeros();
    let mut rtm = Matrix3::zeros();
    for (m, r) in measured.iter().zip(reference) {
        let mv = Vector3::from(*m);
        let rv = Vector3::from(*r);
        mtm += mv * mv.transpose();
        rtm += rv * mv.transpose();
    }
    if !mtm.iter().chain(rtm.iter()).all(|v| v.is_finite()) {
        return Err(QisError::InvalidParameter("patch values must be finite".into()));
    }
    let eig = mtm.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(QisError::RankDeficient(format!(
            "measured patches span fewer than 3 dimensions (eigenvalues {lo:.3e} .. {hi:.3e})"
        )));
    }
    let inv = mtm
        .try_inverse()
        .ok_or_else(|| QisError::RankDeficient("measured Gram matrix is singular".into()))?;
    let a = rtm * inv;
    ColorCorrectionMatrix::from_rows(std::array::from_fn(|r| std::array::from_fn(|c| a[(r, c)])))
}
