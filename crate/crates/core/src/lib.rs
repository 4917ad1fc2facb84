//! Continuous-parameter speech vocoder.
//!
//! Analysis extracts a continuous F0 track, the maximum voiced frequency and
//! a mel-cepstral envelope; the phase-distortion deviation of the harmonics
//! drives a continuous noise mask that gates the voiced excitation and scales
//! the noise excitation during synthesis. Objective metrics and a small
//! recurrent sequence model for the parameter tracks complete the toolkit.

pub mod acoustic_model;
pub mod analysis;
pub mod archive;
pub mod cli;
pub mod dsp;
pub mod mask;
pub mod metrics;
pub mod signal_io;
pub mod synthesis;
pub mod testsignals;
pub mod vocoder;

pub use analysis::ContinuousParams;
pub use mask::{MaskConvention, NoiseMask};
pub use signal_io::{FrameSpec, Waveform, WindowKind};
pub use vocoder::{AnalysisConfig, Analysis};
