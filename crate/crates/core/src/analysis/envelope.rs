//! Mel-cepstral envelope by warped cepstral truncation.
//!
//! The frame amplitude spectrum (normalized so white noise of unit variance
//! reads 1 per bin) is peak-held over +-[`PEAK_HOLD_HZ`] to ride over the
//! harmonic ripple, floored, and its log is resampled onto a uniform grid of
//! the all-pass warped frequency `beta(omega)`. A cosine transform of that
//! warped log-spectrum, truncated at `order`, gives coefficients with
//!
//! ```text
//! ln |H(omega)| = c0 + sum_{m=1..order} c_m cos(m * beta(omega))
//! ```

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::AnalysisError;
use crate::dsp::{next_pow2, FftPair};
use crate::signal_io::{segment_frames, FrameSpec, Waveform};

/// Absolute amplitude floor; a silent frame has `c0 = ln(ABS_AMPLITUDE_FLOOR)`.
pub const ABS_AMPLITUDE_FLOOR: f64 = 1e-8;
/// Floor relative to the frame peak (-100 dB).
const REL_AMPLITUDE_FLOOR: f64 = 1e-5;
const PEAK_HOLD_HZ: f64 = 100.0;

/// All-pass warping `omega -> beta`.
pub fn frequency_warp(omega: f64, alpha: f64) -> f64 {
    omega + 2.0 * (alpha * omega.sin()).atan2(1.0 - alpha * omega.cos())
}

/// Inverse of [`frequency_warp`].
pub fn frequency_unwarp(beta: f64, alpha: f64) -> f64 {
    frequency_warp(beta, -alpha)
}

pub fn estimate_envelope(
    w: &Waveform,
    spec: &FrameSpec,
    order: usize,
    warp: f64,
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    if order < 1 {
        return Err(AnalysisError::InvalidOrder);
    }
    if !(0.0..1.0).contains(&warp) {
        return Err(AnalysisError::InvalidWarp(warp));
    }
    let n_fft = next_pow2(spec.window_len()) * 2;
    let half = n_fft / 2;
    let fft = FftPair::new(n_fft);
    let norm = spec
        .window()
        .coefficients(spec.window_len())
        .iter()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    let hold = (PEAK_HOLD_HZ * n_fft as f64 / w.sample_rate() as f64).round() as usize;

    // Warped grid: K points uniform in beta, mapped back to fractional bins.
    let k_points = half + 1;
    let grid: Vec<(usize, f64)> = (0..k_points)
        .map(|j| {
            let beta = PI * j as f64 / (k_points - 1) as f64;
            let pos = frequency_unwarp(beta, warp) / PI * half as f64;
            let i = (pos.floor() as usize).min(half - 1);
            (i, (pos - i as f64).clamp(0.0, 1.0))
        })
        .collect();
    let basis: Vec<Vec<f64>> = (0..=order)
        .map(|m| {
            (0..k_points)
                .map(|j| {
                    let trap = if j == 0 || j == k_points - 1 { 0.5 } else { 1.0 };
                    let scale = if m == 0 { 1.0 } else { 2.0 };
                    scale * trap * (PI * (m * j) as f64 / (k_points - 1) as f64).cos()
                        / (k_points - 1) as f64
                })
                .collect()
        })
        .collect();

    Ok(segment_frames(w, spec)
        .iter()
        .map(|frame| {
            let spectrum = fft.forward_real(frame);
            let amp: Vec<f64> = spectrum[..=half].iter().map(|c| c.norm() / norm).collect();
            let held = peak_hold(&amp, hold);
            let peak = held.iter().copied().fold(0.0, f64::max);
            let floor = ABS_AMPLITUDE_FLOOR.max(peak * REL_AMPLITUDE_FLOOR);
            let log_amp: Vec<f64> = held.iter().map(|a| a.max(floor).ln()).collect();
            let warped: Vec<f64> = grid
                .iter()
                .map(|&(i, t)| log_amp[i] * (1.0 - t) + log_amp[i + 1] * t)
                .collect();
            basis
                .iter()
                .map(|row| row.iter().zip(&warped).map(|(b, l)| b * l).sum())
                .collect()
        })
        .collect())
}

/// Sliding maximum over `+-half_width` bins with mirror extension at both ends.
fn peak_hold(amp: &[f64], half_width: usize) -> Vec<f64> {
    if half_width == 0 {
        return amp.to_vec();
    }
    let n = amp.len() as isize;
    let reflect = |i: isize| -> usize {
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
        i.clamp(0, n - 1) as usize
    };
    (0..n)
        .map(|i| {
            (i - half_width as isize..=i + half_width as isize)
                .map(|j| amp[reflect(j)])
                .fold(0.0, f64::max)
        })
        .collect()
}

/// `ln |H|` at angular frequency `omega` in `[0, pi]`.
pub fn envelope_log_amplitude(coeffs: &[f64], warp: f64, omega: f64) -> f64 {
    let beta = frequency_warp(omega, warp);
    coeffs
        .iter()
        .enumerate()
        .map(|(m, c)| c * (m as f64 * beta).cos())
        .sum()
}

/// Minimum-phase frequency response `exp(sum_m c_m e^{-j m beta(omega)})` on
/// the full `n_fft` grid (conjugate-symmetric).
pub fn min_phase_response(coeffs: &[f64], warp: f64, n_fft: usize) -> Vec<Complex64> {
    let half = n_fft / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); n_fft];
    for k in 0..=half {
        let beta = frequency_warp(2.0 * PI * k as f64 / n_fft as f64, warp);
        let log_h: Complex64 = coeffs
            .iter()
            .enumerate()
            .map(|(m, &c)| Complex64::from_polar(c, -(m as f64) * beta))
            .sum();
        out[k] = log_h.exp();
    }
    for k in half + 1..n_fft {
        out[k] = out[n_fft - k].conj();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::WindowKind;
    use crate::testsignals::{sine, white_noise};

    const SR: u32 = 16000;

    #[test]
    fn warp_round_trip() {
        for i in 0..=20 {
            let w = PI * i as f64 / 20.0;
            assert!((frequency_unwarp(frequency_warp(w, 0.42), 0.42) - w).abs() < 1e-12);
        }
        assert!((frequency_warp(PI, 0.42) - PI).abs() < 1e-12);
    }

    #[test]
    fn impulse_has_flat_envelope() {
        let spec = FrameSpec::new(400, 400, WindowKind::Rectangular).unwrap();
        let mut samples = vec![0.0; 400];
        samples[123] = 0.5;
        let w = Waveform::new(samples, SR).unwrap();
        let env = estimate_envelope(&w, &spec, 24, 0.42).unwrap();
        let c = &env[0];
        assert_eq!(c.len(), 25);
        let expected_c0 = (0.5 / 400f64.sqrt()).ln();
        assert!((c[0] - expected_c0).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-6), "{c:?}");
    }

    #[test]
    fn silent_frame_gives_floor() {
        let w = Waveform::new(vec![0.0; 800], SR).unwrap();
        let spec = FrameSpec::for_sample_rate(SR);
        let env = estimate_envelope(&w, &spec, 24, 0.42).unwrap();
        for c in env {
            assert!((c[0] - ABS_AMPLITUDE_FLOOR.ln()).abs() < 1e-9);
            assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn white_noise_mean_envelope_is_flat() {
        let w = white_noise(3.0, SR, 0.2, 99);
        let spec = FrameSpec::for_sample_rate(SR);
        let env = estimate_envelope(&w, &spec, 24, 0.42).unwrap();
        let frames = &env[5..env.len() - 5];
        assert!(frames.len() >= 500);
        for m in 1..=24 {
            let mean = frames.iter().map(|c| c[m]).sum::<f64>() / frames.len() as f64;
            assert!(mean.abs() <= 0.05, "c{m} mean {mean}");
        }
    }

    #[test]
    fn sine_envelope_peaks_near_its_frequency() {
        let w = sine(1000.0, 0.5, SR, 0.5);
        let spec = FrameSpec::for_sample_rate(SR);
        let env = estimate_envelope(&w, &spec, 24, 0.42).unwrap();
        let c = &env[env.len() / 2];
        let (peak_hz, _) = (0..=4000)
            .map(|i| {
                let f = i as f64 * 2.0;
                (f, envelope_log_amplitude(c, 0.42, 2.0 * PI * f / SR as f64))
            })
            .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let band = mel(SR as f64 / 2.0) / 25.0;
        assert!((mel(peak_hz) - mel(1000.0)).abs() <= band, "peak at {peak_hz} Hz");
    }

    #[test]
    fn polarity_flip_leaves_envelope_unchanged() {
        let w = white_noise(0.3, SR, 0.2, 5);
        let flipped = Waveform::new(w.samples().iter().map(|x| -x).collect(), SR).unwrap();
        let spec = FrameSpec::for_sample_rate(SR);
        let a = estimate_envelope(&w, &spec, 24, 0.42).unwrap();
        let b = estimate_envelope(&flipped, &spec, 24, 0.42).unwrap();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn min_phase_response_magnitude_matches_cosine_series() {
        let coeffs = [0.3, -0.5, 0.2, 0.1, -0.05];
        let h = min_phase_response(&coeffs, 0.42, 256);
        for k in 0..=128 {
            let omega = 2.0 * PI * k as f64 / 256.0;
            let expected = envelope_log_amplitude(&coeffs, 0.42, omega);
            assert!((h[k].norm().ln() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_order_and_warp() {
        let w = white_noise(0.1, SR, 0.2, 5);
        let spec = FrameSpec::for_sample_rate(SR);
        assert_eq!(
            estimate_envelope(&w, &spec, 0, 0.42),
            Err(AnalysisError::InvalidOrder)
        );
        assert_eq!(
            estimate_envelope(&w, &spec, 24, 1.0),
            Err(AnalysisError::InvalidWarp(1.0))
        );
    }
}
