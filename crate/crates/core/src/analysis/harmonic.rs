use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::AnalysisError;
use crate::dsp::wrap_phase;
use crate::signal_io::{hann, padded_slice, FrameSpec, Waveform};

/// Projection window length in pitch periods.
const PERIODS_PER_WINDOW: f64 = 3.0;

/// Harmonic amplitudes and phases of one frame, referenced to `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFrame {
    pub f0: f64,
    pub amplitudes: Vec<f64>,
    /// Wrapped to `(-pi, pi]`.
    pub phases: Vec<f64>,
    /// Phase reference time in seconds.
    pub center: f64,
    /// Duration of the projection window in seconds.
    pub span: f64,
}

impl HarmonicFrame {
    pub fn harmonic_count(&self) -> usize {
        self.amplitudes.len()
    }
}

/// Windowed projection onto `exp(-j 2 pi h f0 t)` for `h = 1..=H` with
/// `H = floor(min(mvf, nyquist) / f0)` (at least 1).
pub fn harmonic_analysis(
    w: &Waveform,
    cont_f0: &[f64],
    mvf: &[f64],
    spec: &FrameSpec,
) -> Result<Vec<HarmonicFrame>, AnalysisError> {
    let frames = spec.frame_count(w.len());
    for got in [cont_f0.len(), mvf.len()] {
        if got != frames {
            return Err(AnalysisError::TrackLengthMismatch {
                expected: frames,
                got,
            });
        }
    }
    let sr = w.sample_rate() as f64;
    let nyquist = w.nyquist();

    cont_f0
        .iter()
        .zip(mvf)
        .enumerate()
        .map(|(k, (&f0, &ceiling))| {
            if !(f0.is_finite() && f0 > 0.0 && f0 <= nyquist) {
                return Err(AnalysisError::F0OutOfRange { frame: k, f0 });
            }
            let count = ((ceiling.min(nyquist) / f0).floor() as usize).max(1);
            let len = ((PERIODS_PER_WINDOW * sr / f0).round() as usize).max(4);
            let window = hann(len);
            let start = spec.frame_center(k).round() as isize - (len / 2) as isize;
            let reference = start as f64 + len as f64 / 2.0;
            let seg = padded_slice(w.samples(), start, len);
            let gain = 2.0 / window.iter().sum::<f64>();

            let mut acc = vec![Complex64::new(0.0, 0.0); count];
            for (n, (&x, &g)) in seg.iter().zip(&window).enumerate() {
                let v = x * g;
                if v == 0.0 {
                    continue;
                }
                let t = start as f64 + n as f64 - reference;
                let step = Complex64::from_polar(1.0, -2.0 * PI * f0 * t / sr);
                let mut rot = step;
                for slot in acc.iter_mut() {
                    *slot += v * rot;
                    rot *= step;
                }
            }
            Ok(HarmonicFrame {
                f0,
                amplitudes: acc.iter().map(|c| gain * c.norm()).collect(),
                phases: acc.iter().map(|c| wrap_phase(c.arg())).collect(),
                center: reference / sr,
                span: len as f64 / sr,
            })
        })
        .collect()
}
