//! 2D spectra of feature maps.
//!
//! A temporal-stage feature map `[C, T]` with `C = J * d` is viewed as `d`
//! separate joint-by-time grids (channel `k` collects rows `j * d + k`).
//! Spectra are unnormalized forward DFT magnitudes, shifted so the zero
//! frequency sits at the grid center.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::Tensor;

/// DC-centered magnitude grid for one channel of a feature map.
#[derive(Clone, Debug)]
pub struct SpectrumMap {
    pub channel: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` nonnegative magnitudes.
    pub magnitude: Vec<f64>,
}

/// Extracts channel `k`'s joint-by-time grid from a `[C, T]` feature map
/// with `C = J * d`. Returns `(rows, grid)` where `rows = J`.
pub fn joint_time_map(feature: &Tensor, d: usize, k: usize) -> Result<(usize, Vec<f64>)> {
    let shape = feature.shape();
    if shape.len() != 2 {
        return Err(Error::Contract(format!(
            "expected a [C, T] feature map, got shape {shape:?}"
        )));
    }
    let (c, t) = (shape[0], shape[1]);
    if d == 0 || c % d != 0 {
        return Err(Error::Contract(format!(
            "feature map has {c} channels, not divisible into d = {d} per joint"
        )));
    }
    if k >= d {
        return Err(Error::Config(format!("channel {k} out of range (d = {d})")));
    }
    let j = c / d;
    let data = feature.data();
    let mut grid = Vec::with_capacity(j * t);
    for ji in 0..j {
        let row = (ji * d + k) * t;
        grid.extend_from_slice(&data[row..row + t]);
    }
    Ok((j, grid))
}

/// Unnormalized 2D DFT magnitude of a real row-major grid (rows first, then
/// columns). DC lands at index (0, 0); see [`fftshift`].
pub fn fft2_magnitude(grid: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 || grid.len() != rows * cols {
        return Err(Error::Contract(format!(
            "grid of {} values does not fill {rows} x {cols}",
            grid.len()
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(cols);
    let col_fft = planner.plan_fft_forward(rows);

    let mut field: Vec<Complex<f64>> = grid.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for r in 0..rows {
        row_fft.process(&mut field[r * cols..(r + 1) * cols]);
    }
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = field[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            field[r * cols + c] = column[r];
        }
    }
    Ok(field.into_iter().map(|z| z.norm()).collect())
}

/// Rotates a spectrum so the zero-frequency bin moves from (0, 0) to
/// (rows / 2, cols / 2).
pub fn fftshift(grid: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for r in 0..rows {
        for c in 0..cols {
            let rr = (r + rows / 2) % rows;
            let cc = (c + cols / 2) % cols;
            out[rr * cols + cc] = grid[r * cols + c];
        }
    }
    out
}

/// Full pipeline for one channel: extract, transform, center.
pub fn spectrum_of_channel(feature: &Tensor, d: usize, k: usize) -> Result<SpectrumMap> {
    let (rows, grid) = joint_time_map(feature, d, k)?;
    let cols = grid.len() / rows;
    let mag = fft2_magnitude(&grid, rows, cols)?;
    Ok(SpectrumMap {
        channel: k,
        rows,
        cols,
        magnitude: fftshift(&mag, rows, cols),
    })
}

/// `ln(1 + x)` per value, for rendering spectra with dominant DC bins.
pub fn log1p_scale(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v.ln_1p()).collect()
}

/// Fraction of spectral energy (squared magnitude) outside the central
/// low-frequency band of a DC-centered spectrum. The band spans indices
/// within `axis / 4` of the center along each axis, i.e. the central
/// quarter-band per axis. An all-zero spectrum counts as all-low (0.0).
pub fn high_freq_fraction(shifted: &[f64], rows: usize, cols: usize) -> f64 {
    let (cr, cc) = (rows / 2, cols / 2);
    let (hr, hc) = (rows / 4, cols / 4);
    let mut total = 0.0;
    let mut outside = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let e = shifted[r * cols + c].powi(2);
            total += e;
            let low = r.abs_diff(cr) <= hr && c.abs_diff(cc) <= hc;
            if !low {
                outside += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

/// Channels ranked by the population variance of their joint-by-time grid,
/// highest first, ties to the lower index. Returns the top `count`.
pub fn select_channels_by_variance(feature: &Tensor, d: usize, count: usize) -> Result<Vec<usize>> {
    if count > d {
        return Err(Error::Config(format!(
            "requested {count} channels but the map has only {d}"
        )));
    }
    let mut ranked: Vec<(usize, f64)> = (0..d)
        .map(|k| {
            let (_, grid) = joint_time_map(feature, d, k)?;
            let mean = grid.iter().sum::<f64>() / grid.len() as f64;
            let var = grid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / grid.len() as f64;
            Ok((k, var))
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(count).map(|(k, _)| k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_map_is_pure_dc() {
        let (rows, cols) = (8, 16);
        let grid = vec![2.5; rows * cols];
        let mag = fft2_magnitude(&grid, rows, cols).unwrap();
        assert!((mag[0] - 2.5 * (rows * cols) as f64).abs() < 1e-9);
        for (i, &m) in mag.iter().enumerate().skip(1) {
            assert!(m < 1e-9, "bin {i} holds {m}");
        }
        let shifted = fftshift(&mag, rows, cols);
        let center = (rows / 2) * cols + cols / 2;
        assert!((shifted[center] - 2.5 * (rows * cols) as f64).abs() < 1e-9);
        assert_eq!(high_freq_fraction(&shifted, rows, cols), 0.0);
    }

    #[test]
    fn sinusoid_along_time_peaks_at_its_frequency() {
        let (rows, cols) = (6, 32);
        let f = 5usize;
        let mut grid = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            for t in 0..cols {
                grid.push((2.0 * std::f64::consts::PI * f as f64 * t as f64 / cols as f64).cos());
            }
        }
        let mag = fft2_magnitude(&grid, rows, cols).unwrap();
        // Energy sits in row frequency 0, column frequencies +-f, at
        // magnitude rows * cols / 2 each.
        let want = rows as f64 * cols as f64 / 2.0;
        for r in 0..rows {
            for c in 0..cols {
                let m = mag[r * cols + c];
                if r == 0 && (c == f || c == cols - f) {
                    assert!((m - want).abs() < 1e-9, "peak at ({r}, {c}) is {m}");
                } else {
                    assert!(m < 1e-9, "leakage {m} at ({r}, {c})");
                }
            }
        }
        // Shifted, the two peaks straddle the center column symmetrically.
        let shifted = fftshift(&mag, rows, cols);
        let cr = rows / 2;
        let cc = cols / 2;
        assert!((shifted[cr * cols + cc + f] - want).abs() < 1e-9);
        assert!((shifted[cr * cols + cc - f] - want).abs() < 1e-9);
    }

    #[test]
    fn parseval_and_conjugate_symmetry_on_random_grids() {
        let mut rng = crate::seeds::stream(23, "fft-parseval", 0);
        for (rows, cols) in [(4, 8), (17, 60), (5, 7), (1, 16)] {
            let grid: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mag = fft2_magnitude(&grid, rows, cols).unwrap();
            let input_energy: f64 = grid.iter().map(|v| v * v).sum();
            let spectral: f64 =
                mag.iter().map(|m| m * m).sum::<f64>() / (rows * cols) as f64;
            assert!(
                (spectral - input_energy).abs() <= 1e-9 * input_energy.max(1.0),
                "Parseval violated on {rows} x {cols}: {spectral} vs {input_energy}"
            );
            for r in 0..rows {
                for c in 0..cols {
                    let twin = ((rows - r) % rows) * cols + (cols - c) % cols;
                    let a = mag[r * cols + c];
                    let b = mag[twin];
                    assert!(
                        (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                        "conjugate symmetry broken at ({r}, {c})"
                    );
                }
            }
        }
    }

    #[test]
    fn checkerboard_is_all_high_frequency() {
        let (rows, cols) = (8, 8);
        let mut grid = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                grid.push(if (r + c) % 2 == 0 { 1.0 } else { -1.0 });
            }
        }
        let mag = fft2_magnitude(&grid, rows, cols).unwrap();
        let shifted = fftshift(&mag, rows, cols);
        // Single peak at the Nyquist corner of both axes, far from center.
        assert!((high_freq_fraction(&shifted, rows, cols) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_extraction_follows_row_layout() {
        // C = 3 joints * 2 channels, T = 4; channel k takes rows j*2 + k.
        let c = 6;
        let t = 4;
        let data: Vec<f64> = (0..c * t).map(|i| i as f64).collect();
        let feature = Tensor::new(vec![c, t], data).unwrap();
        let (rows, grid) = joint_time_map(&feature, 2, 1).unwrap();
        assert_eq!(rows, 3);
        let want: Vec<f64> = [1, 3, 5]
            .iter()
            .flat_map(|&j| (0..t).map(move |i| (j * t + i) as f64))
            .collect();
        assert_eq!(grid, want);
        assert!(joint_time_map(&feature, 4, 0).is_err());
        assert!(joint_time_map(&feature, 2, 2).is_err());
    }

    #[test]
    fn variance_ranking_prefers_spread_channels() {
        // d = 3: channel 0 constant, channel 1 mild, channel 2 wild.
        let (j, t) = (2, 5);
        let mut data = vec![0.0; j * 3 * t];
        for ji in 0..j {
            for ti in 0..t {
                data[(ji * 3) * t + ti] = 7.0;
                data[(ji * 3 + 1) * t + ti] = (ti as f64) * 0.1;
                data[(ji * 3 + 2) * t + ti] = (ti as f64) * 10.0;
            }
        }
        let feature = Tensor::new(vec![j * 3, t], data).unwrap();
        let picked = select_channels_by_variance(&feature, 3, 2).unwrap();
        assert_eq!(picked, vec![2, 1]);
        assert!(select_channels_by_variance(&feature, 3, 4).is_err());
    }

    #[test]
    fn spectrum_of_channel_wires_the_steps_together() {
        let (j, d, t) = (4, 2, 16);
        let mut data = vec![0.0; j * d * t];
        for ji in 0..j {
            for ti in 0..t {
                data[(ji * d + 1) * t + ti] =
                    (2.0 * std::f64::consts::PI * 3.0 * ti as f64 / t as f64).cos();
            }
        }
        let feature = Tensor::new(vec![j * d, t], data).unwrap();
        let spec = spectrum_of_channel(&feature, d, 1).unwrap();
        assert_eq!((spec.rows, spec.cols), (j, t));
        let center = (spec.rows / 2) * spec.cols + spec.cols / 2;
        let peak = center + 3;
        assert!(spec.magnitude[peak] > 1.0);
        // Channel 0 is silent.
        let silent = spectrum_of_channel(&feature, d, 0).unwrap();
        assert!(silent.magnitude.iter().all(|&m| m < 1e-12));
    }
}
