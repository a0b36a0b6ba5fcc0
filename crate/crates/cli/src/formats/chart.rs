use super::FormatError;

/// Matched color samples: measured and reference linear RGB per patch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchChart {
    pub measured: Vec<[f64; 3]>,
    pub reference: Vec<[f64; 3]>,
}

/// One patch per line: `mR mG mB rR rG rB`. Text after `#` is ignored.
pub fn parse_patch_chart(text: &str) -> Result<PatchChart, FormatError> {
    let mut chart = PatchChart::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FormatError::Chart {
                line: i + 1,
                msg: e.to_string(),
            })?;
        if vals.len() != 6 || !vals.iter().all(|v| v.is_finite()) {
            return Err(FormatError::Chart {
                line: i + 1,
                msg: format!("expected six finite reals, got {}", vals.len()),
            });
        }
        chart.measured.push([vals[0], vals[1], vals[2]]);
        chart.reference.push([vals[3], vals[4], vals[5]]);
    }
    Ok(chart)
}
