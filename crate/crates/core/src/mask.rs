//! Phase distortion, its deviation over time, and the continuous noise mask.
//!
//! Phase distortion removes the translation-dependent linear phase from the
//! harmonic phases: `pd[h] = wrap(phi[h+1] - phi[h] - phi[1])`. It is stable
//! over time for periodic signals and uniformly random for noise.
//!
//! The deviation statistic estimates the squared mean resultant length of
//! `exp(j pd)` per harmonic over a sliding window of frames,
//!
//! ```text
//! rho = sum w_k[h] w_k'[h] cos(pd_k[h] - pd_k'[h]) / sum w_k[h] w_k'[h]
//! ```
//!
//! where `w_k[h]` is the smallest amplitude among the three harmonics that
//! enter `pd_k[h]`. Sums run only over frame pairs whose projection windows
//! do not overlap. With the circular standard deviation
//! `sigma = sqrt(-2 ln R)` and `R^2 = rho`, the normalized deviation is
//! `1 - exp(-sigma^2) = 1 - rho`, clamped through `R >= 1e-6` and rescaled
//! so the clamp maps to exactly 1.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::HarmonicFrame;
use crate::dsp::wrap_phase;

/// Lower clamp on the mean resultant length.
pub const RESULTANT_FLOOR: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 0.77;
pub const DEFAULT_PDD_WINDOW: usize = 11;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("pooling window must be odd and at least 3, got {0}")]
    InvalidWindow(usize),
    #[error("source track is empty")]
    EmptySource,
    #[error("{which} times are not strictly increasing at index {index}")]
    NotIncreasing { which: &'static str, index: usize },
    #[error("{values} values but {times} times")]
    LengthMismatch { values: usize, times: usize },
    #[error("value {value} at frame {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("unknown mask convention '{0}'")]
    UnknownConvention(String),
}

/// Per-frame phase distortion; row `k` holds `harmonic_count - 1` values.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDistortionTrack {
    pub pd: Vec<Vec<f64>>,
    /// Pooling weight of each `pd` value, same shape as `pd`.
    pub weights: Vec<Vec<f64>>,
    /// Frame centres in seconds.
    pub frame_times: Vec<f64>,
    /// Projection window length of each frame in seconds; frames closer than
    /// the mean of their spans are statistically dependent.
    pub spans: Vec<f64>,
}

impl PhaseDistortionTrack {
    pub fn len(&self) -> usize {
        self.pd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pd.is_empty()
    }

    fn independent(&self, a: usize, b: usize) -> bool {
        let gap = (self.frame_times[a] - self.frame_times[b]).abs();
        gap + 1e-9 >= 0.5 * (self.spans[a] + self.spans[b])
    }
}

pub fn phase_distortion(frames: &[HarmonicFrame]) -> PhaseDistortionTrack {
    PhaseDistortionTrack {
        pd: frames
            .iter()
            .map(|f| {
                let phi = &f.phases;
                (1..phi.len())
                    .map(|h| wrap_phase(phi[h] - phi[h - 1] - phi[0]))
                    .collect()
            })
            .collect(),
        weights: frames
            .iter()
            .map(|f| {
                let a = &f.amplitudes;
                (1..a.len()).map(|h| a[h].min(a[h - 1]).min(a[0])).collect()
            })
            .collect(),
        frame_times: frames.iter().map(|f| f.center).collect(),
        spans: frames.iter().map(|f| f.span).collect(),
    }
}

/// Maps the resultant-length estimate `rho = R^2` to `[0, 1]`.
pub fn normalized_deviation(rho: f64) -> f64 {
    let floor = RESULTANT_FLOOR * RESULTANT_FLOOR;
    ((1.0 - rho.clamp(floor, 1.0)) / (1.0 - floor)).clamp(0.0, 1.0)
}

/// Circular standard deviation in radians for a resultant-length estimate.
pub fn deviation_radians(rho: f64) -> f64 {
    let r = rho.max(0.0).sqrt().clamp(RESULTANT_FLOOR, 1.0);
    (-2.0 * r.ln()).sqrt()
}

/// Squared-resultant estimate `rho` for every frame, or `None` when the
/// window holds no usable pair or only zero weights.
pub fn resultant_estimate(
    track: &PhaseDistortionTrack,
    window_frames: usize,
) -> Result<Vec<Option<f64>>, MaskError> {
    if window_frames < 3 || window_frames % 2 == 0 {
        return Err(MaskError::InvalidWindow(window_frames));
    }
    let n = track.len();
    let half = window_frames / 2;
    Ok((0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(n.saturating_sub(1));
            let mut sum = 0.0;
            let mut total = 0.0;
            for a in lo..=hi {
                for b in a + 1..=hi {
                    if !track.independent(a, b) {
                        continue;
                    }
                    let values = track.pd[a].iter().zip(&track.pd[b]);
                    let weights = track.weights[a].iter().zip(&track.weights[b]);
                    for ((x, y), (wa, wb)) in values.zip(weights) {
                        let w = wa * wb;
                        sum += w * (x - y).cos();
                        total += w;
                    }
                }
            }
            (total > 0.0).then(|| sum / total)
        })
        .collect())
}

/// Per-frame normalized deviation in `[0, 1]`; 1 where nothing can be pooled.
pub fn pdd_estimate(track: &PhaseDistortionTrack, window_frames: usize) -> Result<Vec<f64>, MaskError> {
    Ok(resultant_estimate(track, window_frames)?
        .into_iter()
        .map(|rho| rho.map_or(1.0, normalized_deviation))
        .collect())
}

fn check_increasing(times: &[f64], which: &'static str) -> Result<(), MaskError> {
    match times.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(MaskError::NotIncreasing { which, index: i + 1 }),
        None => Ok(()),
    }
}

/// Nearest-neighbour resampling onto `target_times`; ties go to the earlier
/// source frame.
pub fn regularize_pdd(
    raw: &[f64],
    source_times: &[f64],
    target_times: &[f64],
) -> Result<Vec<f64>, MaskError> {
    if raw.is_empty() {
        return Err(MaskError::EmptySource);
    }
    if raw.len() != source_times.len() {
        return Err(MaskError::LengthMismatch {
            values: raw.len(),
            times: source_times.len(),
        });
    }
    check_increasing(source_times, "source")?;
    check_increasing(target_times, "target")?;
    let mut j = 0;
    Ok(target_times
        .iter()
        .map(|&t| {
            while j + 1 < source_times.len()
                && (source_times[j + 1] - t).abs() < (source_times[j] - t).abs()
            {
                j += 1;
            }
            raw[j].clamp(0.0, 1.0)
        })
        .collect())
}

/// How the deviation maps onto the mask value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskConvention {
    /// `cnm = pdd`: low in voiced frames, high in noise. CLI name
    /// `fig1-operational`.
    #[default]
    Direct,
    /// `cnm = 1 - pdd`, the complement form. CLI name `eq1-literal`.
    Complement,
}

impl MaskConvention {
    pub fn name(self) -> &'static str {
        match self {
            MaskConvention::Direct => "fig1-operational",
            MaskConvention::Complement => "eq1-literal",
        }
    }

    pub fn apply(self, pdd: f64) -> f64 {
        match self {
            MaskConvention::Direct => pdd,
            MaskConvention::Complement => 1.0 - pdd,
        }
    }
}

impl fmt::Display for MaskConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskConvention {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1-operational" => Ok(MaskConvention::Direct),
            "eq1-literal" => Ok(MaskConvention::Complement),
            other => Err(MaskError::UnknownConvention(other.to_string())),
        }
    }
}

/// Per-frame deviation and mask values with the voicing threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMask {
    pub pdd: Vec<f64>,
    pub cnm: Vec<f64>,
    pub threshold: f64,
    pub convention: MaskConvention,
}

impl NoiseMask {
    pub fn len(&self) -> usize {
        self.cnm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cnm.is_empty()
    }

    /// The voiced component of frame `n` survives iff `cnm[n] <= threshold`.
    pub fn keeps_voiced(&self, n: usize) -> bool {
        self.cnm[n] <= self.threshold
    }
}

pub fn compute_cnm(
    pdd: &[f64],
    convention: MaskConvention,
    threshold: f64,
) -> Result<NoiseMask, MaskError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MaskError::InvalidThreshold(threshold));
    }
    if let Some((index, &value)) = pdd
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(MaskError::OutOfRange { index, value });
    }
    Ok(NoiseMask {
        pdd: pdd.to_vec(),
        cnm: pdd.iter().map(|&v| convention.apply(v)).collect(),
        threshold,
        convention,
    })
}
