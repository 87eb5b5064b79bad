//! Spectral residual saliency.
//!
//! The texture is converted to grayscale and shrunk to a small working
//! image. Its log-amplitude spectrum minus a local box average (the
//! "residual") is recombined with the original phase and inverted; the
//! squared magnitude, Gaussian-smoothed and resized back to the view, is
//! the saliency. Frequencies carrying no energy stay at zero amplitude, so
//! a uniform image yields uniform saliency.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{normalize_occupied, SaliencyModel};
use crate::grid::Grid;
use crate::projection::ProjectedView;
use crate::{Error, Result};

const LEVELS: f64 = u16::MAX as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralResidual {
    /// Side of the box filter averaging the log-amplitude spectrum.
    pub average_kernel: usize,
    /// Standard deviation of the Gaussian smoothing, in working-image pixels.
    pub smoothing_sigma: f64,
    /// Longest side of the working image.
    pub working_side: usize,
}

impl Default for SpectralResidual {
    fn default() -> Self {
        Self { average_kernel: 3, smoothing_sigma: 3.0, working_side: 64 }
    }
}

impl SaliencyModel for SpectralResidual {
    /// Output is already normalized over occupied pixels and snapped to the
    /// 16-bit grid `k / 65535`, so it survives a 16-bit PGM round trip
    /// bit-exactly.
    fn raw_saliency(&self, view: &ProjectedView) -> Result<Grid<f64>> {
        if self.average_kernel == 0 || self.working_side == 0 {
            return Err(Error::Config("spectral residual kernel and working side must be positive".into()));
        }
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(Error::Config("spectral residual smoothing sigma must be non-negative".into()));
        }
        let gray = view.texture.map(|&[r, g, b]| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0);
        let (w, h) = (gray.width(), gray.height());
        let scale = (self.working_side as f64 / w.max(h) as f64).min(1.0);
        let ww = ((w as f64 * scale).round() as usize).clamp(1, w);
        let wh = ((h as f64 * scale).round() as usize).clamp(1, h);

        let small = area_downsample(&gray, ww, wh);
        let residual = spectral_residual_map(&small, self.average_kernel);
        let smoothed = gaussian_blur(&residual, self.smoothing_sigma);
        let full = bilinear_resize(&smoothed, w, h);

        Ok(normalize_occupied(&full, view).map(|v| (v * LEVELS).round() / LEVELS))
    }
}

fn area_downsample(src: &Grid<f64>, w: usize, h: usize) -> Grid<f64> {
    let (sw, sh) = (src.width(), src.height());
    let mut out = Grid::filled(w, h, 0.0);
    for y in 0..h {
        let (y0, y1) = (y * sh / h, ((y + 1) * sh / h).max(y * sh / h + 1));
        for x in 0..w {
            let (x0, x1) = (x * sw / w, ((x + 1) * sw / w).max(x * sw / w + 1));
            let mut sum = 0.0;
            for sy in y0..y1 {
                for sx in x0..x1 {
                    sum += src.get(sx, sy);
                }
            }
            *out.get_mut(x, y) = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

fn bilinear_resize(src: &Grid<f64>, w: usize, h: usize) -> Grid<f64> {
    let (sw, sh) = (src.width(), src.height());
    if (sw, sh) == (w, h) {
        return src.clone();
    }
    let sample = |pos: f64, len: usize| -> (usize, usize, f64) {
        let p = pos.clamp(0.0, (len - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, p - i0 as f64)
    };
    let mut out = Grid::filled(w, h, 0.0);
    for y in 0..h {
        let (y0, y1, fy) = sample((y as f64 + 0.5) * sh as f64 / h as f64 - 0.5, sh);
        for x in 0..w {
            let (x0, x1, fx) = sample((x as f64 + 0.5) * sw as f64 / w as f64 - 0.5, sw);
            let top = src.get(x0, y0) * (1.0 - fx) + src.get(x1, y0) * fx;
            let bottom = src.get(x0, y1) * (1.0 - fx) + src.get(x1, y1) * fx;
            *out.get_mut(x, y) = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

/// In-place 2D DFT (rows, then columns). The inverse is unnormalized.
fn fft_2d(data: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row_fft.process(data);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}

fn spectral_residual_map(image: &Grid<f64>, kernel: usize) -> Grid<f64> {
    let (w, h) = (image.width(), image.height());
    let mut spectrum: Vec<Complex<f64>> = image.as_slice().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_2d(&mut spectrum, w, h, false);

    let amplitude: Vec<f64> = spectrum.iter().map(|c| c.norm()).collect();
    let peak = amplitude.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Grid::filled(w, h, 0.0);
    }
    let floor = peak * 1e-9;
    let live: Vec<bool> = amplitude.iter().map(|&a| a > floor).collect();
    let log_amp: Vec<f64> = amplitude.iter().map(|&a| a.max(floor).ln()).collect();

    // box average with wrap-around, the spectrum being periodic; dead
    // frequencies are left out so they do not drag the average to ln(floor)
    let half = (kernel / 2) as isize;
    let mut filtered = spectrum;
    for y in 0..h {
        for x in 0..w {
            let o = y * w + x;
            if !live[o] {
                filtered[o] = Complex::new(0.0, 0.0);
                continue;
            }
            let (mut avg, mut count) = (0.0, 0usize);
            for dy in -half..(kernel as isize - half) {
                let yy = (y as isize + dy).rem_euclid(h as isize) as usize;
                for dx in -half..(kernel as isize - half) {
                    let xx = (x as isize + dx).rem_euclid(w as isize) as usize;
                    if live[yy * w + xx] {
                        avg += log_amp[yy * w + xx];
                        count += 1;
                    }
                }
            }
            let residual = log_amp[o] - avg / count as f64;
            filtered[o] = filtered[o] / amplitude[o] * residual.exp();
        }
    }
    fft_2d(&mut filtered, w, h, true);
    Grid::from_vec(w, h, filtered.iter().map(|c| c.norm_sqr()).collect())
}

/// Separable Gaussian blur with edge clamping; kernel radius is ⌈3σ⌉.
fn gaussian_blur(src: &Grid<f64>, sigma: f64) -> Grid<f64> {
    if sigma == 0.0 {
        return src.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let (w, h) = (src.width(), src.height());
    let pass = |input: &Grid<f64>, horizontal: bool| -> Grid<f64> {
        let mut out = Grid::filled(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let d = k as isize - radius;
                    let (sx, sy) = if horizontal {
                        ((x as isize + d).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + d).clamp(0, h as isize - 1) as usize)
                    };
                    acc += weight * input.get(sx, sy);
                }
                *out.get_mut(x, y) = acc;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}
