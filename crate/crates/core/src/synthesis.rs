//! Pulse-plus-noise excitation, noise masking and envelope-filtered
//! overlap-add.
//!
//! The speech signal is the overlap-add of per-frame voiced segments (a
//! band-limited pulse train below the MVF) and unvoiced segments (white noise
//! above the MVF). The mask removes the voiced segment of a frame whose cNM
//! exceeds the threshold and scales the unvoiced segment by cNM.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::analysis::{min_phase_response, AnalysisError, ContinuousParams};
use crate::dsp::{next_pow2, FftPair};
use crate::mask::NoiseMask;
use crate::signal_io::{hann, FrameSpec, Waveform};

/// Width of the raised-cosine roll-off at the MVF boundary, in Hz.
pub const TRANSITION_HZ: f64 = 100.0;
/// Output peak after normalization.
pub const OUTPUT_PEAK: f64 = 0.99;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error, PartialEq)]
pub enum SynthesisError {
    #[error("mask has {mask} frames, plan has {plan}")]
    FrameCountMismatch { mask: usize, plan: usize },
    #[error("voiced and unvoiced parts disagree at frame {0}")]
    MalformedPlan(usize),
    #[error(transparent)]
    Params(#[from] AnalysisError),
}

/// Per-frame voiced and unvoiced excitation, each `window_len` samples
/// starting at `n * hop`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationPlan {
    pub voiced: Vec<Vec<f64>>,
    pub unvoiced: Vec<Vec<f64>>,
    pub frame_spec: FrameSpec,
}

impl ExcitationPlan {
    pub fn new(
        voiced: Vec<Vec<f64>>,
        unvoiced: Vec<Vec<f64>>,
        frame_spec: FrameSpec,
    ) -> Result<Self, SynthesisError> {
        if voiced.len() != unvoiced.len() {
            return Err(SynthesisError::MalformedPlan(voiced.len().min(unvoiced.len())));
        }
        if let Some(n) = voiced
            .iter()
            .zip(&unvoiced)
            .position(|(v, u)| v.len() != frame_spec.window_len() || u.len() != v.len())
        {
            return Err(SynthesisError::MalformedPlan(n));
        }
        Ok(Self {
            voiced,
            unvoiced,
            frame_spec,
        })
    }

    /// Voiced and unvoiced excitation generated from the parameters.
    pub fn from_params(params: &ContinuousParams, seed: u64) -> Result<Self, SynthesisError> {
        Self::new(
            gen_voiced_excitation(params)?,
            gen_unvoiced_excitation(params, seed)?,
            params.frame_spec,
        )
    }

    pub fn frame_count(&self) -> usize {
        self.voiced.len()
    }

    pub fn voiced_only(&self) -> Self {
        Self {
            unvoiced: zeros_like(&self.unvoiced),
            ..self.clone()
        }
    }

    pub fn unvoiced_only(&self) -> Self {
        Self {
            voiced: zeros_like(&self.voiced),
            ..self.clone()
        }
    }
}

fn zeros_like(frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    frames.iter().map(|f| vec![0.0; f.len()]).collect()
}

/// Weight of a voiced harmonic at `freq`: 1 well below the MVF, raised-cosine
/// down to 0 at the MVF.
pub fn voiced_gain(freq: f64, mvf: f64) -> f64 {
    if freq >= mvf {
        0.0
    } else if freq <= mvf - TRANSITION_HZ {
        1.0
    } else {
        0.5 - 0.5 * (PI * (mvf - freq) / TRANSITION_HZ).cos()
    }
}

/// Weight of the noise at `freq`: 0 up to the MVF, raised-cosine up to 1.
pub fn unvoiced_gain(freq: f64, mvf: f64) -> f64 {
    if freq <= mvf {
        0.0
    } else if freq >= mvf + TRANSITION_HZ {
        1.0
    } else {
        0.5 - 0.5 * (PI * (freq - mvf) / TRANSITION_HZ).cos()
    }
}

/// Running pulse phase over `len` samples, contF0 linearly interpolated
/// between frame centres. Wrapped to `[0, 2 pi)`; a pulse sits at each wrap.
pub fn pulse_phase(params: &ContinuousParams, len: usize) -> Vec<f64> {
    let spec = &params.frame_spec;
    let sr = params.sample_rate as f64;
    let f0 = &params.cont_f0;
    let mut theta = 0.0f64;
    let mut k = 0usize;
    (0..len)
        .map(|t| {
            let pos = t as f64;
            while k + 1 < f0.len() && spec.frame_center(k + 1) <= pos {
                k += 1;
            }
            let freq = if f0.len() == 1 || pos <= spec.frame_center(0) {
                f0[0]
            } else if k + 1 >= f0.len() {
                f0[f0.len() - 1]
            } else {
                let (c0, c1) = (spec.frame_center(k), spec.frame_center(k + 1));
                f0[k] + (f0[k + 1] - f0[k]) * (pos - c0) / (c1 - c0)
            };
            let current = theta;
            theta = (theta + 2.0 * PI * freq / sr).rem_euclid(2.0 * PI);
            current
        })
        .collect()
}

fn total_len(spec: &FrameSpec, frames: usize) -> usize {
    frames.saturating_sub(1) * spec.hop() + spec.window_len()
}

/// Band-limited pulse train `g * sum_h a_h cos(h theta)` per frame, with
/// `a_h` from [`voiced_gain`] at `h * f0` and `g` chosen for unit RMS.
pub fn gen_voiced_excitation(params: &ContinuousParams) -> Result<Vec<Vec<f64>>, SynthesisError> {
    params.validate()?;
    let spec = params.frame_spec;
    let theta = pulse_phase(params, total_len(&spec, params.frame_count()));
    let nyquist = params.nyquist();
    Ok(params
        .cont_f0
        .iter()
        .zip(&params.mvf)
        .enumerate()
        .map(|(n, (&f0, &mvf))| {
            let weights: Vec<f64> = (1..)
                .map(|h| h as f64 * f0)
                .take_while(|&f| f < nyquist.min(mvf))
                .map(|f| voiced_gain(f, mvf))
                .collect();
            let energy: f64 = weights.iter().map(|a| a * a).sum();
            let start = n * spec.hop();
            if energy <= 0.0 {
                return vec![0.0; spec.window_len()];
            }
            let gain = (2.0 / energy).sqrt();
            theta[start..start + spec.window_len()]
                .iter()
                .map(|&th| {
                    // cos(h th) by the Chebyshev recurrence
                    let two_cos = 2.0 * th.cos();
                    let (mut prev, mut cur) = (1.0, th.cos());
                    let mut acc = 0.0;
                    for &a in &weights {
                        acc += a * cur;
                        let next = two_cos * cur - prev;
                        prev = cur;
                        cur = next;
                    }
                    gain * acc
                })
                .collect()
        })
        .collect())
}

/// One seeded white-noise stream, cut into frames and high-passed above each
/// frame's MVF by circular filtering; each frame is scaled to unit RMS.
pub fn gen_unvoiced_excitation(
    params: &ContinuousParams,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SynthesisError> {
    params.validate()?;
    let spec = params.frame_spec;
    let len = spec.window_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..total_len(&spec, params.frame_count()))
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let fft = FftPair::new(len);
    let sr = params.sample_rate as f64;
    Ok(params
        .mvf
        .iter()
        .enumerate()
        .map(|(n, &mvf)| {
            let start = n * spec.hop();
            let mut bins = fft.forward_real(&noise[start..start + len]);
            for (k, c) in bins.iter_mut().enumerate() {
                let freq = k.min(len - k) as f64 * sr / len as f64;
                *c *= unvoiced_gain(freq, mvf);
            }
            let mut seg = fft.inverse_real(bins);
            let rms = crate::dsp::rms(&seg);
            if rms > 1e-12 {
                seg.iter_mut().for_each(|x| *x /= rms);
            } else {
                seg.fill(0.0);
            }
            seg
        })
        .collect())
}

/// Zeroes voiced frames with `cnm > threshold`; scales unvoiced frames by cnm.
pub fn apply_mask(plan: &ExcitationPlan, mask: &NoiseMask) -> Result<ExcitationPlan, SynthesisError> {
    if mask.len() != plan.frame_count() {
        return Err(SynthesisError::FrameCountMismatch {
            mask: mask.len(),
            plan: plan.frame_count(),
        });
    }
    let voiced = plan
        .voiced
        .iter()
        .enumerate()
        .map(|(n, v)| {
            if mask.keeps_voiced(n) {
                v.clone()
            } else {
                vec![0.0; v.len()]
            }
        })
        .collect();
    let unvoiced = plan
        .unvoiced
        .iter()
        .zip(&mask.cnm)
        .map(|(u, &g)| u.iter().map(|x| x * g).collect())
        .collect();
    Ok(ExcitationPlan {
        voiced,
        unvoiced,
        frame_spec: plan.frame_spec,
    })
}

/// Envelope-filtered overlap-add without output normalization;
/// `frame_count * hop` samples, linear in the plan.
pub fn synthesize_raw(plan: &ExcitationPlan, params: &ContinuousParams) -> Result<Vec<f64>, SynthesisError> {
    params.validate()?;
    if plan.frame_count() != params.frame_count() {
        return Err(SynthesisError::FrameCountMismatch {
            mask: params.frame_count(),
            plan: plan.frame_count(),
        });
    }
    let spec = plan.frame_spec;
    let (hop, len) = (spec.hop(), spec.window_len());
    let frames = plan.frame_count();
    let fft = FftPair::new(next_pow2(2 * len));
    let window = hann(len);
    let full = total_len(&spec, frames);
    let mut out = vec![0.0; full];
    let mut weight = vec![0.0; full];

    for n in 0..frames {
        let start = n * hop;
        for (i, g) in window.iter().enumerate() {
            weight[start + i] += g;
        }
        let excitation: Vec<f64> = plan.voiced[n]
            .iter()
            .zip(&plan.unvoiced[n])
            .map(|(v, u)| v + u)
            .collect();
        if excitation.iter().all(|&x| x == 0.0) {
            continue;
        }
        let response = min_phase_response(&params.envelope[n], params.warp, fft.size());
        let spectrum = fft
            .forward_real(&excitation)
            .into_iter()
            .zip(response)
            .map(|(x, h)| x * h)
            .collect();
        let filtered = fft.inverse_real(spectrum);
        for i in 0..len {
            out[start + i] += filtered[i] * window[i];
        }
    }

    let peak_weight = weight.iter().copied().fold(0.0, f64::max);
    let guard = 0.25 * peak_weight;
    out.truncate(frames * hop);
    Ok(out
        .iter()
        .zip(&weight)
        .map(|(y, w)| y / w.max(guard))
        .collect())
}

/// Scales to a peak of [`OUTPUT_PEAK`]; silence stays silent.
pub fn peak_normalize(samples: Vec<f64>) -> Vec<f64> {
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return samples;
    }
    samples.into_iter().map(|x| x * OUTPUT_PEAK / peak).collect()
}

pub fn synthesize(plan: &ExcitationPlan, params: &ContinuousParams) -> Result<Waveform, SynthesisError> {
    let raw = synthesize_raw(plan, params)?;
    Ok(Waveform::new(peak_normalize(raw), params.sample_rate)
        .expect("normalized output is finite and within [-1, 1]"))
}
