//! Continuous F0 from normalized cross-correlation.
//!
//! Each frame picks the shortest lag whose correlation peak reaches 90% of the
//! best peak. Frames whose peak correlation falls below
//! [`VOICING_THRESHOLD`] are treated as unreliable and filled by linear
//! interpolation from the surrounding reliable frames, so the track is
//! positive and finite everywhere. A 3-frame median removes isolated octave
//! slips.

use super::{check_f0_range, AnalysisError};
use crate::dsp::{median_filter, next_pow2, FftPair};
use crate::signal_io::{padded_slice, FrameSpec, Waveform};

/// Minimum peak correlation for a frame's raw estimate to be trusted.
pub const VOICING_THRESHOLD: f64 = 0.5;

/// Peaks within this fraction of the best peak compete on shortest lag.
const OCTAVE_TOLERANCE: f64 = 0.9;

/// Pitch periods (at `f0_min`) covered by the correlation window.
const PERIODS_PER_WINDOW: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchCandidate {
    /// `None` when the frame has no correlation peak at all (e.g. silence).
    pub f0: Option<f64>,
    pub periodicity: f64,
}

/// Per-frame raw estimates before interpolation.
pub fn raw_pitch(
    w: &Waveform,
    spec: &FrameSpec,
    f0_min: f64,
    f0_max: f64,
) -> Result<Vec<PitchCandidate>, AnalysisError> {
    let sr = w.sample_rate() as f64;
    check_f0_range(f0_min, f0_max, w.nyquist())?;
    let needed = (sr / f0_min).ceil() as usize;
    if w.len() < needed {
        return Err(AnalysisError::SignalTooShort {
            len: w.len(),
            needed,
        });
    }

    let max_lag = (sr / f0_min).ceil() as usize;
    let min_lag = ((sr / f0_max).floor() as usize).max(2);
    let seg_len = ((PERIODS_PER_WINDOW * sr / f0_min).ceil() as usize)
        .max(spec.window_len())
        .max(max_lag + 2);
    let fft = FftPair::new(next_pow2(2 * seg_len));

    let frames = spec.frame_count(w.len());
    Ok((0..frames)
        .map(|k| {
            let start = spec.frame_center(k).round() as isize - (seg_len / 2) as isize;
            let mut seg = padded_slice(w.samples(), start, seg_len);
            let mean = seg.iter().sum::<f64>() / seg_len as f64;
            seg.iter_mut().for_each(|x| *x -= mean);
            frame_candidate(&seg, &fft, min_lag, max_lag, sr, f0_min, f0_max)
        })
        .collect())
}

fn frame_candidate(
    seg: &[f64],
    fft: &FftPair,
    min_lag: usize,
    max_lag: usize,
    sr: f64,
    f0_min: f64,
    f0_max: f64,
) -> PitchCandidate {
    let n = seg.len();
    let energy: f64 = seg.iter().map(|x| x * x).sum();
    if energy <= 1e-20 {
        return PitchCandidate {
            f0: None,
            periodicity: 0.0,
        };
    }
    let spectrum = fft.forward_real(seg);
    let power = spectrum.into_iter().map(|c| c * c.conj()).collect();
    let acf = fft.inverse_real(power);

    let mut prefix = vec![0.0; n + 1];
    for (i, x) in seg.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x * x;
    }
    // r(lag) over the overlapping part x[0..n-lag] . x[lag..n]
    let nccf = |lag: usize| -> f64 {
        let head = prefix[n - lag];
        let tail = prefix[n] - prefix[lag];
        let denom = (head * tail).sqrt();
        if denom <= 1e-20 {
            0.0
        } else {
            acf[lag] / denom
        }
    };
    let lo = min_lag.saturating_sub(1).max(1);
    let hi = (max_lag + 1).min(n - 1);
    let r: Vec<f64> = (lo..=hi).map(nccf).collect();
    let at = |lag: usize| r[lag - lo];

    let mut peaks = Vec::new();
    for lag in min_lag..=max_lag.min(hi - 1) {
        let v = at(lag);
        if v > 0.0 && v >= at(lag - 1) && v > at(lag + 1) {
            peaks.push((lag, v));
        }
    }
    let Some(best) = peaks.iter().map(|p| p.1).reduce(f64::max) else {
        return PitchCandidate {
            f0: None,
            periodicity: 0.0,
        };
    };
    let (lag, value) = *peaks
        .iter()
        .find(|p| p.1 >= OCTAVE_TOLERANCE * best)
        .expect("best peak satisfies its own tolerance");

    let (a, b, c) = (at(lag - 1), value, at(lag + 1));
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let f0 = (sr / (lag as f64 + offset)).clamp(f0_min, f0_max);
    PitchCandidate {
        f0: Some(f0),
        periodicity: value.min(1.0),
    }
}

/// Continuous F0 track: strictly positive, finite, within `[f0_min, f0_max]`.
pub fn estimate_cont_f0(
    w: &Waveform,
    spec: &FrameSpec,
    f0_min: f64,
    f0_max: f64,
) -> Result<Vec<f64>, AnalysisError> {
    let raw = raw_pitch(w, spec, f0_min, f0_max)?;
    let filled = fill_unreliable(&raw, f0_min, f0_max);
    Ok(median_filter(&filled, 3)
        .into_iter()
        .map(|f| f.clamp(f0_min, f0_max))
        .collect())
}

fn fill_unreliable(raw: &[PitchCandidate], f0_min: f64, f0_max: f64) -> Vec<f64> {
    let anchors: Vec<(usize, f64)> = raw
        .iter()
        .enumerate()
        .filter_map(|(k, c)| match c.f0 {
            Some(f) if c.periodicity >= VOICING_THRESHOLD => Some((k, f)),
            _ => None,
        })
        .collect();

    if anchors.is_empty() {
        // No trustworthy frame: a constant at the periodicity-weighted mean
        // of whatever raw estimates exist.
        let (sum, weight) = raw.iter().fold((0.0, 0.0), |(s, wsum), c| match c.f0 {
            Some(f) if c.periodicity > 0.0 => (s + c.periodicity * f, wsum + c.periodicity),
            _ => (s, wsum),
        });
        let value = if weight > 0.0 {
            sum / weight
        } else {
            (f0_min * f0_max).sqrt()
        };
        return vec![value; raw.len()];
    }

    let mut out = vec![0.0; raw.len()];
    let (first, first_f) = anchors[0];
    let (last, last_f) = anchors[anchors.len() - 1];
    out[..=first].fill(first_f);
    out[last..].fill(last_f);
    for pair in anchors.windows(2) {
        let ((a, fa), (b, fb)) = (pair[0], pair[1]);
        for (k, slot) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let t = (k - a) as f64 / (b - a) as f64;
            *slot = fa + t * (fb - fa);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsignals::{chirp, sawtooth, white_noise};

    const SR: u32 = 16000;

    #[test]
    fn sawtooth_200hz_tracked_within_2hz() {
        let w = sawtooth(200.0, 1.0, SR, 0.5);
        let spec = FrameSpec::for_sample_rate(SR);
        let f0 = estimate_cont_f0(&w, &spec, 50.0, 500.0).unwrap();
        assert_eq!(f0.len(), 200);
        for (k, f) in f0.iter().enumerate() {
            assert!((f - 200.0).abs() <= 2.0, "frame {k}: {f}");
        }
    }

    #[test]
    fn white_noise_gives_continuous_in_range_track() {
        let w = white_noise(1.0, SR, 0.3, 7);
        let spec = FrameSpec::for_sample_rate(SR);
        let f0 = estimate_cont_f0(&w, &spec, 50.0, 500.0).unwrap();
        assert!(f0.iter().all(|f| f.is_finite() && (50.0..=500.0).contains(f)));
    }

    #[test]
    fn chirp_track_rises_monotonically() {
        let w = chirp(150.0, 300.0, 1.0, SR, 0.5);
        let spec = FrameSpec::for_sample_rate(SR);
        let f0 = estimate_cont_f0(&w, &spec, 50.0, 500.0).unwrap();
        let n = f0.len();
        // frames whose correlation window lies fully inside the signal
        let first = 8;
        let last = n - 10;
        let expect = |k: usize| {
            let t = spec.frame_center(k) / SR as f64;
            150.0 + 150.0 * t
        };
        assert!((f0[first] - expect(first)).abs() <= 0.05 * expect(first));
        assert!((f0[last] - expect(last)).abs() <= 0.05 * expect(last));
        for k in first + 1..=last {
            assert!(f0[k] >= 0.95 * f0[k - 1], "frame {k}: {} after {}", f0[k], f0[k - 1]);
        }
        for k in 1..n {
            assert!((f0[k] - f0[k - 1]).abs() <= 0.3 * f0[k - 1]);
        }
    }

    #[test]
    fn rejects_short_signal_and_bad_range() {
        let w = Waveform::new(vec![0.1; 100], SR).unwrap();
        let spec = FrameSpec::for_sample_rate(SR);
        assert!(matches!(
            estimate_cont_f0(&w, &spec, 50.0, 500.0),
            Err(AnalysisError::SignalTooShort { .. })
        ));
        let w = sawtooth(200.0, 0.2, SR, 0.5);
        assert!(matches!(
            estimate_cont_f0(&w, &spec, 300.0, 200.0),
            Err(AnalysisError::InvalidF0Range { .. })
        ));
        assert!(matches!(
            estimate_cont_f0(&w, &spec, 50.0, 9000.0),
            Err(AnalysisError::InvalidF0Range { .. })
        ));
    }

    #[test]
    fn silence_falls_back_to_geometric_mean() {
        let w = Waveform::new(vec![0.0; 4000], SR).unwrap();
        let spec = FrameSpec::for_sample_rate(SR);
        let f0 = estimate_cont_f0(&w, &spec, 50.0, 450.0).unwrap();
        assert!(f0.iter().all(|&f| (f - 150.0).abs() < 1e-9));
    }

    #[test]
    fn gaps_are_bridged_linearly() {
        let c = |f: Option<f64>, p: f64| PitchCandidate { f0: f, periodicity: p };
        let raw = [
            c(Some(300.0), 0.1),
            c(Some(100.0), 0.9),
            c(None, 0.0),
            c(Some(400.0), 0.2),
            c(Some(160.0), 0.9),
            c(Some(50.0), 0.3),
        ];
        let out = fill_unreliable(&raw, 50.0, 500.0);
        assert_eq!(out, vec![100.0, 100.0, 120.0, 140.0, 160.0, 160.0]);
    }
}
