use qis_core::{ColorImage, QisError};

use crate::error::Result;

/// Peak signal-to-noise ratio in dB over all channels and pixels.
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &ColorImage, b: &ColorImage, peak: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        let (ew, eh) = a.dims();
        let (aw, ah) = b.dims();
        return Err(QisError::DimensionMismatch {
            expected_width: ew,
            expected_height: eh,
            actual_width: aw,
            actual_height: ah,
        }
        .into());
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(QisError::InvalidParameter(format!("peak {peak} must be positive")).into());
    }
    let mut sse = 0.0;
    let mut n = 0usize;
    for (pa, pb) in a.planes().iter().zip(b.planes()) {
        for (x, y) in pa.data().iter().zip(pb.data()) {
            sse += (x - y) * (x - y);
        }
        n += pa.len();
    }
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}
