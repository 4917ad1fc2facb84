//! Maximum voiced frequency from per-harmonic contrast.
//!
//! For every harmonic `h` the mean power in a narrow band around `h * f0` is
//! compared with the mean power around the inter-harmonic point
//! `(h + 1/2) * f0`. The contrast `(E_h - E_i) / (E_h + E_i)` is near 1 for a
//! clean harmonic and near 0 for noise. Bands are scanned upward from the
//! fundamental; the MVF sits half a harmonic above the last band of the
//! initial run that exceeds [`CONTRAST_THRESHOLD`] (a single failing band is
//! bridged when the next one passes). A 5-frame median smooths the track.

use super::AnalysisError;
use crate::dsp::{median_filter, next_pow2, FftPair};
use crate::signal_io::{hann, padded_slice, FrameSpec, Waveform};

/// Lower clamp of the MVF track in Hz; noise-dominated frames settle here.
pub const DEFAULT_MVF_MIN: f64 = 1000.0;

const CONTRAST_THRESHOLD: f64 = 0.5;
const PERIODS_PER_WINDOW: f64 = 5.0;
/// Half-width of each measurement band as a fraction of f0.
const BAND_HALF_WIDTH: f64 = 0.125;
/// Local f0 refinement: +-2% in 0.05% steps.
const REFINE_STEPS: i32 = 40;
const REFINE_STEP: f64 = 0.0005;
const MEDIAN_WIDTH: usize = 5;

pub fn estimate_mvf(
    w: &Waveform,
    f0_track: &[f64],
    spec: &FrameSpec,
) -> Result<Vec<f64>, AnalysisError> {
    estimate_mvf_with_floor(w, f0_track, spec, DEFAULT_MVF_MIN)
}

pub fn estimate_mvf_with_floor(
    w: &Waveform,
    f0_track: &[f64],
    spec: &FrameSpec,
    mvf_min: f64,
) -> Result<Vec<f64>, AnalysisError> {
    let frames = spec.frame_count(w.len());
    if f0_track.len() != frames {
        return Err(AnalysisError::TrackLengthMismatch {
            expected: frames,
            got: f0_track.len(),
        });
    }
    let sr = w.sample_rate() as f64;
    let nyquist = w.nyquist();
    let floor = mvf_min.clamp(0.0, nyquist);

    let mut ffts: Vec<FftPair> = Vec::new();
    let mut raw = Vec::with_capacity(frames);
    for (k, &f0) in f0_track.iter().enumerate() {
        if !(f0.is_finite() && f0 > 0.0 && f0 <= nyquist) {
            return Err(AnalysisError::F0OutOfRange { frame: k, f0 });
        }
        let len = ((PERIODS_PER_WINDOW * sr / f0).round() as usize).max(16);
        let n_fft = next_pow2(len) * 4;
        let fft = match ffts.iter().position(|f| f.size() == n_fft) {
            Some(i) => &ffts[i],
            None => {
                ffts.push(FftPair::new(n_fft));
                ffts.last().expect("just pushed")
            }
        };
        let start = spec.frame_center(k).round() as isize - (len / 2) as isize;
        let mut seg = padded_slice(w.samples(), start, len);
        seg.iter_mut().zip(hann(len)).for_each(|(x, g)| *x *= g);
        let power: Vec<f64> = fft.forward_real(&seg)[..=n_fft / 2]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        let mvf = frame_mvf(&power, sr, f0, nyquist).unwrap_or(floor);
        raw.push(mvf.clamp(floor, nyquist));
    }
    Ok(median_filter(&raw, MEDIAN_WIDTH))
}

/// Linear interpolation of the half spectrum at frequency `f`.
fn power_at(power: &[f64], bin_hz: f64, f: f64) -> f64 {
    let pos = f / bin_hz;
    let i = pos.floor() as usize;
    if i + 1 >= power.len() {
        return power[power.len() - 1];
    }
    let t = pos - i as f64;
    power[i] * (1.0 - t) + power[i + 1] * t
}

fn band_mean(power: &[f64], bin_hz: f64, center: f64, half_width: f64) -> f64 {
    let lo = ((center - half_width) / bin_hz).ceil().max(0.0) as usize;
    let hi = (((center + half_width) / bin_hz).floor() as usize).min(power.len() - 1);
    if hi < lo {
        return power_at(power, bin_hz, center);
    }
    power[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
}

fn refine_f0(power: &[f64], bin_hz: f64, f0: f64, nyquist: f64) -> f64 {
    let peak = power.iter().copied().fold(0.0, f64::max);
    let floor = peak * 1e-6 + 1e-30;
    let score = |f: f64| -> f64 {
        let count = (nyquist / f).floor() as usize;
        (1..=count)
            .map(|h| (power_at(power, bin_hz, h as f64 * f) + floor).ln())
            .sum::<f64>()
            / count.max(1) as f64
    };
    (-REFINE_STEPS..=REFINE_STEPS)
        .map(|i| f0 * (1.0 + REFINE_STEP * i as f64))
        .filter(|&f| f < nyquist)
        .map(|f| (f, score(f)))
        .fold((f0, f64::NEG_INFINITY), |best, cand| {
            if cand.1 > best.1 {
                cand
            } else {
                best
            }
        })
        .0
}

fn frame_mvf(power: &[f64], sr: f64, f0: f64, nyquist: f64) -> Option<f64> {
    let bin_hz = sr / (2 * (power.len() - 1)) as f64;
    if power.iter().all(|&p| p <= 0.0) {
        return None;
    }
    let f = refine_f0(power, bin_hz, f0, nyquist);
    let half = BAND_HALF_WIDTH * f;
    let count = ((nyquist - half) / f).floor() as usize;
    let contrast = |h: usize| -> f64 {
        let center = h as f64 * f;
        let harmonic = band_mean(power, bin_hz, center, half);
        let between = if center + 0.5 * f + half <= nyquist {
            band_mean(power, bin_hz, center + 0.5 * f, half)
        } else {
            band_mean(power, bin_hz, center - 0.5 * f, half)
        };
        let total = harmonic + between;
        if total <= 0.0 {
            0.0
        } else {
            (harmonic - between) / total
        }
    };
    let passes: Vec<bool> = (1..=count).map(|h| contrast(h) > CONTRAST_THRESHOLD).collect();
    let mut last = None;
    let mut h = 0;
    while h < passes.len() {
        if passes[h] {
            last = Some(h + 1);
            h += 1;
        } else if h + 1 < passes.len() && passes[h + 1] && last.is_some() {
            h += 1;
        } else {
            break;
        }
    }
    last.map(|h| ((h as f64 + 0.5) * f).min(nyquist))
}
