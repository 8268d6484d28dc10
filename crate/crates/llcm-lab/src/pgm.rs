//! Binary PGM (P5, 8-bit) output and 2-D histogram binning.

use std::path::Path;

use llcm_core::Tensor;

use crate::error::{LabError, Result};

/// Writes a `bins × bins` 8-bit P5 image, row-major, top row first.
pub fn write_pgm(path: &Path, bins: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != bins * bins {
        return Err(LabError::usage(format!(
            "{} pixels for a {bins}x{bins} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{bins} {bins}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    std::fs::write(path, out)?;
    Ok(())
}

/// Axis range for the histogram: either data-driven or fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Range {
    Auto,
    Fixed { x: (f64, f64), y: (f64, f64) },
}

impl Range {
    /// `auto` or `x_min,x_max,y_min,y_max`.
    pub fn parse(text: &str) -> Result<Range> {
        if text == "auto" {
            return Ok(Range::Auto);
        }
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != 4 {
            return Err(LabError::usage(format!(
                "range must be `auto` or `x_min,x_max,y_min,y_max`, got `{text}`"
            )));
        }
        let mut vals = [0.0f64; 4];
        for (i, p) in parts.iter().enumerate() {
            vals[i] = p.trim().parse::<f64>().map_err(|_| {
                LabError::usage(format!("range component `{p}` is not a number"))
            })?;
        }
        let ordered = vals.iter().all(|v| v.is_finite()) && vals[0] < vals[1] && vals[2] < vals[3];
        if !ordered {
            return Err(LabError::usage(format!(
                "range `{text}` must satisfy x_min < x_max and y_min < y_max"
            )));
        }
        Ok(Range::Fixed {
            x: (vals[0], vals[1]),
            y: (vals[2], vals[3]),
        })
    }
}

fn data_range(points: &Tensor, col: usize) -> (f64, f64) {
    let n = points.n_rows();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let v = points.at(i, col);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        // A degenerate cloud still deserves a well-formed image.
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Counts the first two coordinates into a `bins × bins` grid and scales
/// linearly so the fullest bin is 255. Rows run top-to-bottom in decreasing
/// y, the usual image orientation.
pub fn histogram(points: &Tensor, bins: usize, range: Range) -> Result<Vec<u8>> {
    if bins == 0 {
        return Err(LabError::usage("bins must be >= 1"));
    }
    if points.n_cols() < 2 {
        return Err(LabError::usage(format!(
            "histogram needs at least 2 columns, got {}",
            points.n_cols()
        )));
    }
    let (xr, yr) = match range {
        Range::Auto => (data_range(points, 0), data_range(points, 1)),
        Range::Fixed { x, y } => (x, y),
    };
    let mut counts = vec![0u64; bins * bins];
    let n = points.n_rows();
    for i in 0..n {
        let x = points.at(i, 0);
        let y = points.at(i, 1);
        if x < xr.0 || x > xr.1 || y < yr.0 || y > yr.1 {
            continue;
        }
        let bx = (((x - xr.0) / (xr.1 - xr.0)) * bins as f64) as usize;
        let by = (((y - yr.0) / (yr.1 - yr.0)) * bins as f64) as usize;
        let bx = bx.min(bins - 1);
        let by = by.min(bins - 1);
        // Row 0 is the top of the image = largest y.
        counts[(bins - 1 - by) * bins + bx] += 1;
    }
    let max = *counts.iter().max().unwrap_or(&0);
    if max == 0 {
        return Err(LabError::usage("no points fall inside the histogram range"));
    }
    Ok(counts
        .iter()
        .map(|&c| ((c as f64 / max as f64) * 255.0).round() as u8)
        .collect())
}
