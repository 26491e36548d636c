//! Heatmap rendering: PNG picture plus an exact numeric sidecar.
//!
//! Palette: values are min-max normalized to v in [0, 1] (a flat grid maps
//! to 0), then ramped black -> red -> yellow -> white:
//! r = clamp(3v), g = clamp(3v - 1), b = clamp(3v - 2), each scaled to 255.
//! Encoding is fully deterministic, so equal grids give equal bytes.

use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric twin of a rendered heatmap; round-trips the grid exactly.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HeatmapSidecar {
    pub rows: usize,
    pub cols: usize,
    /// Normalization bounds used by the palette.
    pub lo: f64,
    pub hi: f64,
    /// Row-major grid, `rows * cols` values.
    pub values: Vec<f64>,
}

fn check_grid(values: &[f64], rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return Err(Error::Contract(format!(
            "{} values do not fill a {rows} x {cols} grid",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite heatmap value {v}")));
    }
    Ok(())
}

fn ramp(v: f64) -> [u8; 3] {
    let chan = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [chan(3.0 * v), chan(3.0 * v - 1.0), chan(3.0 * v - 2.0)]
}

/// Encodes the grid as PNG bytes with `cell`-pixel square blocks per value.
pub fn encode_heatmap(values: &[f64], rows: usize, cols: usize, cell: usize) -> Result<Vec<u8>> {
    check_grid(values, rows, cols)?;
    if cell == 0 {
        return Err(Error::Contract("cell size must be >= 1 pixel".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut img = image::RgbImage::new((cols * cell) as u32, (rows * cell) as u32);
    for r in 0..rows {
        for c in 0..cols {
            let v = if span == 0.0 {
                0.0
            } else {
                (values[r * cols + c] - lo) / span
            };
            let px = image::Rgb(ramp(v));
            for dy in 0..cell {
                for dx in 0..cell {
                    img.put_pixel((c * cell + dx) as u32, (r * cell + dy) as u32, px);
                }
            }
        }
    }
    let mut bytes = Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Data(format!("png encoding failed: {e}")))?;
    Ok(bytes.into_inner())
}

/// Writes the PNG and its `.json` sidecar next to each other. Returns the
/// sidecar path.
pub fn render_heatmap(
    values: &[f64],
    rows: usize,
    cols: usize,
    cell: usize,
    path: &Path,
) -> Result<std::path::PathBuf> {
    let bytes = encode_heatmap(values, rows, cols, cell)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sidecar = HeatmapSidecar {
        rows,
        cols,
        lo,
        hi,
        values: values.to_vec(),
    };
    let sidecar_path = path.with_extension("json");
    let doc = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Data(format!("sidecar encoding failed: {e}")))?;
    std::fs::write(&sidecar_path, doc).map_err(|e| Error::io(&sidecar_path, e))?;
    Ok(sidecar_path)
}

pub fn read_sidecar(path: &Path) -> Result<HeatmapSidecar> {
    let doc = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sidecar: HeatmapSidecar = serde_json::from_str(&doc)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
    check_grid(&sidecar.values, sidecar.rows, sidecar.cols)?;
    Ok(sidecar)
}
