//! Extraction of the continuous vocoder parameters: contF0, maximum voiced
//! frequency and a mel-cepstral envelope, plus per-harmonic amplitudes and
//! phases for the phase-distortion statistics.

mod envelope;
mod harmonic;
mod mvf;
mod pitch;

pub use envelope::{
    envelope_log_amplitude, estimate_envelope, frequency_warp, frequency_unwarp,
    min_phase_response, ABS_AMPLITUDE_FLOOR,
};
pub use harmonic::{harmonic_analysis, HarmonicFrame};
pub use mvf::{estimate_mvf, estimate_mvf_with_floor, DEFAULT_MVF_MIN};
pub use pitch::{estimate_cont_f0, raw_pitch, PitchCandidate, VOICING_THRESHOLD};

use thiserror::Error;

use crate::signal_io::FrameSpec;

pub const DEFAULT_F0_MIN: f64 = 50.0;
pub const DEFAULT_F0_MAX: f64 = 500.0;
pub const DEFAULT_ORDER: usize = 24;
pub const DEFAULT_WARP: f64 = 0.42;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("invalid f0 range [{min}, {max}] for nyquist {nyquist} Hz")]
    InvalidF0Range { min: f64, max: f64, nyquist: f64 },
    #[error("signal of {len} samples is shorter than one period at f0_min ({needed} samples)")]
    SignalTooShort { len: usize, needed: usize },
    #[error("track has {got} frames, expected {expected}")]
    TrackLengthMismatch { expected: usize, got: usize },
    #[error("frame {frame}: f0 {f0} Hz is not in (0, nyquist]")]
    F0OutOfRange { frame: usize, f0: f64 },
    #[error("cepstral order must be at least 1")]
    InvalidOrder,
    #[error("warp {0} outside [0, 1)")]
    InvalidWarp(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Per-frame continuous parameters of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousParams {
    pub cont_f0: Vec<f64>,
    pub mvf: Vec<f64>,
    /// `order + 1` mel-cepstral coefficients per frame, natural-log amplitude.
    pub envelope: Vec<Vec<f64>>,
    pub frame_spec: FrameSpec,
    pub sample_rate: u32,
    pub warp: f64,
}

impl ContinuousParams {
    pub fn frame_count(&self) -> usize {
        self.cont_f0.len()
    }

    pub fn order(&self) -> usize {
        self.envelope.first().map_or(0, |c| c.len().saturating_sub(1))
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    /// Checks the structural and range invariants.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let n = self.cont_f0.len();
        for got in [self.mvf.len(), self.envelope.len()] {
            if got != n {
                return Err(AnalysisError::TrackLengthMismatch { expected: n, got });
            }
        }
        if !(0.0..1.0).contains(&self.warp) {
            return Err(AnalysisError::InvalidWarp(self.warp));
        }
        let nyquist = self.nyquist();
        for (frame, &f0) in self.cont_f0.iter().enumerate() {
            if !(f0.is_finite() && f0 > 0.0 && f0 <= nyquist) {
                return Err(AnalysisError::F0OutOfRange { frame, f0 });
            }
        }
        for (frame, &m) in self.mvf.iter().enumerate() {
            if !(m.is_finite() && (0.0..=nyquist).contains(&m)) {
                return Err(AnalysisError::InvalidParams(format!(
                    "frame {frame}: mvf {m} outside [0, {nyquist}]"
                )));
            }
        }
        let width = self.envelope.first().map_or(0, Vec::len);
        if n > 0 && width < 2 {
            return Err(AnalysisError::InvalidOrder);
        }
        for (frame, c) in self.envelope.iter().enumerate() {
            if c.len() != width || c.iter().any(|v| !v.is_finite()) {
                return Err(AnalysisError::InvalidParams(format!(
                    "frame {frame}: malformed envelope row"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_f0_range(f0_min: f64, f0_max: f64, nyquist: f64) -> Result<(), AnalysisError> {
    if !(f0_min > 0.0 && f0_min < f0_max && f0_max <= nyquist) {
        return Err(AnalysisError::InvalidF0Range {
            min: f0_min,
            max: f0_max,
            nyquist,
        });
    }
    Ok(())
}
