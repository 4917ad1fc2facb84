//! Small numeric helpers shared by the analysis and synthesis stages.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse FFT pair of a fixed size.
pub struct FftPair {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Spectrum of a real sequence zero-padded (or truncated) to `size`.
    pub fn forward_real(&self, input: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..self.size)
            .map(|i| Complex64::new(input.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform scaled by `1/size`, real part only.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.size as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Running median of odd width; the window shrinks symmetrically at the edges.
pub fn median_filter(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let reach = half.min(i).min(n - 1 - i);
            let mut win = values[i - reach..=i + reach].to_vec();
            median_in_place(&mut win)
        })
        .collect()
}

pub fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn median(values: &[f64]) -> f64 {
    median_in_place(&mut values.to_vec())
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}
