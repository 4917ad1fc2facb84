//! End-to-end analysis and resynthesis.

use thiserror::Error;

use crate::analysis::{
    estimate_cont_f0, estimate_envelope, estimate_mvf_with_floor, harmonic_analysis, AnalysisError,
    ContinuousParams, DEFAULT_F0_MAX, DEFAULT_F0_MIN, DEFAULT_MVF_MIN, DEFAULT_ORDER, DEFAULT_WARP,
};
use crate::mask::{
    compute_cnm, pdd_estimate, phase_distortion, regularize_pdd, MaskConvention, MaskError,
    NoiseMask, DEFAULT_PDD_WINDOW, DEFAULT_THRESHOLD,
};
use crate::signal_io::{FrameSpec, Waveform};
use crate::synthesis::{apply_mask, synthesize, ExcitationPlan, SynthesisError};

#[derive(Debug, Error, PartialEq)]
pub enum VocoderError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub frame_spec: FrameSpec,
    pub f0_min: f64,
    pub f0_max: f64,
    pub order: usize,
    pub warp: f64,
    pub mvf_min: f64,
    pub pdd_window: usize,
    pub threshold: f64,
    pub convention: MaskConvention,
}

impl AnalysisConfig {
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        Self {
            frame_spec: FrameSpec::for_sample_rate(sample_rate),
            f0_min: DEFAULT_F0_MIN,
            f0_max: DEFAULT_F0_MAX,
            order: DEFAULT_ORDER,
            warp: DEFAULT_WARP,
            mvf_min: DEFAULT_MVF_MIN,
            pdd_window: DEFAULT_PDD_WINDOW,
            threshold: DEFAULT_THRESHOLD,
            convention: MaskConvention::Direct,
        }
    }
}

/// Parameters and mask of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub params: ContinuousParams,
    pub mask: NoiseMask,
}

/// Full analysis chain: contF0, MVF, envelope, harmonic phases, PDD and cNM.
pub fn analyze(w: &Waveform, cfg: &AnalysisConfig) -> Result<Analysis, VocoderError> {
    let spec = &cfg.frame_spec;
    let cont_f0 = estimate_cont_f0(w, spec, cfg.f0_min, cfg.f0_max)?;
    let mvf = estimate_mvf_with_floor(w, &cont_f0, spec, cfg.mvf_min)?;
    let envelope = estimate_envelope(w, spec, cfg.order, cfg.warp)?;
    let harmonics = harmonic_analysis(w, &cont_f0, &mvf, spec)?;
    let track = phase_distortion(&harmonics);
    let raw = pdd_estimate(&track, cfg.pdd_window)?;
    let synthesis_times = spec.frame_times(cont_f0.len(), w.sample_rate());
    let pdd = regularize_pdd(&raw, &track.frame_times, &synthesis_times)?;
    let mask = compute_cnm(&pdd, cfg.convention, cfg.threshold)?;
    let params = ContinuousParams {
        cont_f0,
        mvf,
        envelope,
        frame_spec: *spec,
        sample_rate: w.sample_rate(),
        warp: cfg.warp,
    };
    params.validate()?;
    Ok(Analysis { params, mask })
}

/// Excitation, masking and overlap-add synthesis.
pub fn resynthesize(params: &ContinuousParams, mask: &NoiseMask, seed: u64) -> Result<Waveform, VocoderError> {
    let plan = ExcitationPlan::from_params(params, seed)?;
    let masked = apply_mask(&plan, mask)?;
    Ok(synthesize(&masked, params)?)
}

/// Analysis immediately followed by resynthesis.
pub fn copy_synthesize(w: &Waveform, cfg: &AnalysisConfig, seed: u64) -> Result<(Analysis, Waveform), VocoderError> {
    let analysis = analyze(w, cfg)?;
    let out = resynthesize(&analysis.params, &analysis.mask, seed)?;
    Ok((analysis, out))
}
