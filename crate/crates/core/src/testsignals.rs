//! Deterministic synthetic signals with known ground truth: harmonic
//! complexes, sawtooth vowels, chirps and noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsp::FftPair;
use crate::signal_io::Waveform;

fn samples_for(duration: f64, sample_rate: u32) -> usize {
    (duration * sample_rate as f64).round() as usize
}

fn wave(samples: Vec<f64>, sample_rate: u32) -> Waveform {
    Waveform::new(samples, sample_rate).expect("generator output is bounded")
}

pub fn sine(freq: f64, duration: f64, sample_rate: u32, amplitude: f64) -> Waveform {
    let sr = sample_rate as f64;
    wave(
        (0..samples_for(duration, sample_rate))
            .map(|n| amplitude * (2.0 * PI * freq * n as f64 / sr).sin())
            .collect(),
        sample_rate,
    )
}

/// Band-limited sawtooth (all harmonics below nyquist, `1/h` amplitudes).
pub fn sawtooth(f0: f64, duration: f64, sample_rate: u32, amplitude: f64) -> Waveform {
    let count = ((sample_rate as f64 / 2.0) / f0).ceil() as usize - 1;
    let amps: Vec<f64> = (1..=count).map(|h| 1.0 / h as f64).collect();
    let phases: Vec<f64> = (1..=count)
        .map(|h| if h % 2 == 1 { -PI / 2.0 } else { PI / 2.0 })
        .collect();
    let raw = additive(&|_| f0, &amps, &phases, samples_for(duration, sample_rate), sample_rate);
    wave(peak_scale(raw, amplitude), sample_rate)
}

/// Sum of harmonics `sum_h a_h cos(2 pi h f0 t + phi_h)` divided by
/// `sum_h a_h` and scaled by `level`, so `|x| <= level`. Phases are drawn
/// from `seed` when not given.
pub fn harmonic_complex(
    f0: f64,
    amplitudes: &[f64],
    phases: Option<&[f64]>,
    duration: f64,
    sample_rate: u32,
    level: f64,
    seed: u64,
) -> Waveform {
    let phases: Vec<f64> = match phases {
        Some(p) => p.to_vec(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..amplitudes.len())
                .map(|_| rng.random_range(-PI..PI))
                .collect()
        }
    };
    let raw = additive(
        &|_| f0,
        amplitudes,
        &phases,
        samples_for(duration, sample_rate),
        sample_rate,
    );
    let scale = level / harmonic_complex_scale(amplitudes);
    wave(raw.into_iter().map(|x| x * scale).collect(), sample_rate)
}

/// Divisor applied by [`harmonic_complex`] before `level`.
pub fn harmonic_complex_scale(amplitudes: &[f64]) -> f64 {
    amplitudes.iter().sum()
}

fn additive(
    f0_at: &dyn Fn(f64) -> f64,
    amplitudes: &[f64],
    phases: &[f64],
    len: usize,
    sample_rate: u32,
) -> Vec<f64> {
    let sr = sample_rate as f64;
    let mut theta = 0.0;
    (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            let f0 = f0_at(t);
            let v = amplitudes
                .iter()
                .zip(phases)
                .enumerate()
                .filter(|(i, _)| (*i + 1) as f64 * f0 < sr / 2.0)
                .map(|(i, (a, p))| a * ((i + 1) as f64 * theta + p).cos())
                .sum();
            theta = (theta + 2.0 * PI * f0 / sr) % (2.0 * PI);
            v
        })
        .collect()
}

fn peak_scale(samples: Vec<f64>, peak: f64) -> Vec<f64> {
    let max = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return samples;
    }
    samples.into_iter().map(|x| x * peak / max).collect()
}

/// Linear chirp sine from `f_start` to `f_end` Hz.
pub fn chirp(f_start: f64, f_end: f64, duration: f64, sample_rate: u32, amplitude: f64) -> Waveform {
    let sr = sample_rate as f64;
    let rate = (f_end - f_start) / duration;
    wave(
        (0..samples_for(duration, sample_rate))
            .map(|n| {
                let t = n as f64 / sr;
                amplitude * (2.0 * PI * (f_start * t + 0.5 * rate * t * t)).sin()
            })
            .collect(),
        sample_rate,
    )
}

/// Gaussian white noise with standard deviation `std`, clipped to `[-1, 1]`.
pub fn white_noise(duration: f64, sample_rate: u32, std: f64, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    wave(
        (0..samples_for(duration, sample_rate))
            .map(|_| (std * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0))
            .collect(),
        sample_rate,
    )
}

/// White noise with everything below `cutoff` Hz removed, scaled to `std`.
pub fn highpass_noise(cutoff: f64, duration: f64, sample_rate: u32, std: f64, seed: u64) -> Waveform {
    let noise = white_noise(duration, sample_rate, 1.0, seed);
    let n = noise.len();
    let fft = FftPair::new(n);
    let mut spec = fft.forward_real(noise.samples());
    for (k, c) in spec.iter_mut().enumerate() {
        let bin = k.min(n - k);
        if (bin as f64) * sample_rate as f64 / n as f64 <= cutoff {
            *c = 0.0.into();
        }
    }
    let x = fft.inverse_real(spec);
    let rms = crate::dsp::rms(&x);
    wave(
        x.into_iter()
            .map(|v| (v * std / rms).clamp(-1.0, 1.0))
            .collect(),
        sample_rate,
    )
}

/// Sample-wise sum, clipped to `[-1, 1]`; length of the shortest input.
pub fn mix(parts: &[&Waveform]) -> Waveform {
    let len = parts.iter().map(|w| w.len()).min().unwrap_or(0);
    let sr = parts.first().map_or(16000, |w| w.sample_rate());
    wave(
        (0..len)
            .map(|i| parts.iter().map(|w| w.samples()[i]).sum::<f64>().clamp(-1.0, 1.0))
            .collect(),
        sr,
    )
}

/// Adds white noise at the given signal-to-noise ratio (dB, by power).
pub fn add_noise_snr(w: &Waveform, snr_db: f64, seed: u64) -> Waveform {
    let power = w.samples().iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
    let std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    wave(
        w.samples()
            .iter()
            .map(|x| (x + std * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0))
            .collect(),
        w.sample_rate(),
    )
}

/// Resonance of the all-pole formant filter.
#[derive(Debug, Clone, Copy)]
pub struct Formant {
    pub freq: f64,
    pub bandwidth: f64,
}

/// Band-limited sawtooth at `f0` (with an optional linear glide to
/// `f0 * (1 + glide)`) passed through a cascade of two-pole resonators with
/// unit DC gain, peak-normalized to `level`.
pub fn vowel(
    f0: f64,
    glide: f64,
    formants: &[Formant],
    duration: f64,
    sample_rate: u32,
    level: f64,
) -> Waveform {
    let sr = sample_rate as f64;
    let count = ((sr / 2.0) / (f0 * (1.0 + glide.max(0.0)))).ceil() as usize - 1;
    let amps: Vec<f64> = (1..=count).map(|h| 1.0 / h as f64).collect();
    let phases: Vec<f64> = (1..=count)
        .map(|h| if h % 2 == 1 { -PI / 2.0 } else { PI / 2.0 })
        .collect();
    let len = samples_for(duration, sample_rate);
    let glide_f0 = move |t: f64| f0 * (1.0 + glide * t / duration);
    let mut x = additive(&glide_f0, &amps, &phases, len, sample_rate);
    for f in formants {
        let r = (-PI * f.bandwidth / sr).exp();
        let a1 = 2.0 * r * (2.0 * PI * f.freq / sr).cos();
        let a2 = -r * r;
        let g = 1.0 - a1 - a2;
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = g * *v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
    wave(peak_scale(x, level), sample_rate)
}

/// Five vowel-like formant sets.
pub fn vowel_formants() -> [[Formant; 3]; 5] {
    let f = |freq, bandwidth| Formant { freq, bandwidth };
    [
        [f(730.0, 90.0), f(1090.0, 110.0), f(2440.0, 170.0)],
        [f(270.0, 60.0), f(2290.0, 100.0), f(3010.0, 120.0)],
        [f(530.0, 60.0), f(1840.0, 100.0), f(2480.0, 120.0)],
        [f(570.0, 80.0), f(840.0, 90.0), f(2410.0, 150.0)],
        [f(300.0, 60.0), f(870.0, 90.0), f(2240.0, 150.0)],
    ]
}

/// Alternating segments: harmonic complex at `f0` up to `harmonic_limit` Hz,
/// then white noise, each `segment` seconds long, `segments` in total
/// starting with the harmonic part. Returns the waveform and the per-sample
/// voiced flag.
pub fn alternating_voicing(
    f0: f64,
    harmonic_limit: f64,
    segment: f64,
    segments: usize,
    sample_rate: u32,
    seed: u64,
) -> (Waveform, Vec<bool>) {
    let count = (harmonic_limit / f0).floor() as usize;
    let amps = vec![1.0; count];
    let total = segment * segments as f64;
    let harm = harmonic_complex(f0, &amps, None, total, sample_rate, 0.6, seed);
    let harm_rms = crate::dsp::rms(harm.samples());
    let noise = white_noise(total, sample_rate, harm_rms, seed.wrapping_add(1));
    let seg_len = samples_for(segment, sample_rate);
    let voiced: Vec<bool> = (0..harm.len()).map(|i| (i / seg_len) % 2 == 0).collect();
    let samples = voiced
        .iter()
        .enumerate()
        .map(|(i, &v)| if v { harm.samples()[i] } else { noise.samples()[i] })
        .collect();
    (wave(samples, sample_rate), voiced)
}
