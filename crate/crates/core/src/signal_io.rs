//! Waveform container, RIFF/WAVE linear-PCM I/O, framing and windowing.

use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors from audio file I/O and waveform construction.
#[derive(Debug, Error)]
pub enum WavError {
    #[error("audio file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported encoding: {0}")]
    Unsupported(String),
    #[error("audio file contains no samples")]
    Empty,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample {index} has magnitude {value} > 1")]
    Clipped { index: usize, value: f64 },
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

/// Mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, WavError> {
        if sample_rate == 0 {
            return Err(WavError::InvalidSampleRate);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(WavError::NonFinite { index });
            }
            if value.abs() > 1.0 {
                return Err(WavError::Clipped { index, value });
            }
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a linear-PCM WAV file, averaging all channels to mono.
///
/// Integer samples of bit depth `b` are scaled by `1 / 2^(b-1)`, so 16-bit
/// data maps through `1/32768`. IEEE-float files are rejected.
pub fn load_waveform(path: impl AsRef<Path>) -> Result<Waveform, WavError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(WavError::NotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::FormatError(msg) => WavError::Unsupported(msg.to_string()),
        hound::Error::Unsupported => WavError::Unsupported("unsupported WAV layout".into()),
        source => WavError::Read {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(WavError::Unsupported(format!(
            "{}-bit IEEE float samples; only linear PCM is accepted",
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels.max(1) as usize;
    let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
    let raw: Vec<i32> = reader
        .into_samples::<i32>()
        .collect::<Result<_, _>>()
        .map_err(|source| WavError::Read {
            path: path.to_path_buf(),
            source,
        })?;
    if raw.len() < channels {
        return Err(WavError::Empty);
    }
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 * scale).sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Quantizes one sample to 16-bit PCM; `1.0` maps to `32767`.
pub fn quantize_i16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes 16-bit PCM mono.
pub fn save_waveform(w: &Waveform, path: impl AsRef<Path>) -> Result<(), WavError> {
    let path = path.as_ref();
    if let Some(index) = w.samples.iter().position(|s| !s.is_finite()) {
        return Err(WavError::NonFinite { index });
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |source| WavError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    {
        let mut pcm = writer.get_i16_writer(w.samples.len() as u32);
        for &s in &w.samples {
            pcm.write_sample(quantize_i16(s));
        }
        pcm.flush().map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

/// Tapering function applied to each analysis frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Rectangular,
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    Hann,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hann => hann(len),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Rectangular => "rectangular",
            WindowKind::Hann => "hann",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "rectangular" => Some(WindowKind::Rectangular),
            "hann" => Some(WindowKind::Hann),
            _ => None,
        }
    }
}

pub fn hann(len: usize) -> Vec<f64> {
    let n = len as f64;
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())
        .collect()
}

/// Frame layout: frame `k` covers samples `[k * hop, k * hop + window_len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    hop: usize,
    window_len: usize,
    window: WindowKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid frame spec: hop {hop}, window {window_len} (need 0 < hop <= window)")]
pub struct FrameSpecError {
    pub hop: usize,
    pub window_len: usize,
}

impl FrameSpec {
    pub const DEFAULT_HOP_MS: f64 = 5.0;
    pub const DEFAULT_WINDOW_MS: f64 = 25.0;

    pub fn new(hop: usize, window_len: usize, window: WindowKind) -> Result<Self, FrameSpecError> {
        if hop == 0 || hop > window_len {
            return Err(FrameSpecError { hop, window_len });
        }
        Ok(Self {
            hop,
            window_len,
            window,
        })
    }

    /// Hop and window given in milliseconds, Hann taper.
    pub fn from_ms(sample_rate: u32, hop_ms: f64, window_ms: f64) -> Result<Self, FrameSpecError> {
        let to_samples = |ms: f64| (ms * sample_rate as f64 / 1000.0).round().max(0.0) as usize;
        Self::new(to_samples(hop_ms), to_samples(window_ms), WindowKind::Hann)
    }

    /// 5 ms hop, 25 ms Hann window.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        Self::from_ms(sample_rate, Self::DEFAULT_HOP_MS, Self::DEFAULT_WINDOW_MS)
            .expect("default frame spec is valid for any positive sample rate")
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn window(&self) -> WindowKind {
        self.window
    }

    pub fn with_window(mut self, window: WindowKind) -> Self {
        self.window = window;
        self
    }

    pub fn frame_count(&self, signal_len: usize) -> usize {
        signal_len.div_ceil(self.hop)
    }

    /// Centre of frame `k`, in samples.
    pub fn frame_center(&self, k: usize) -> f64 {
        (k * self.hop) as f64 + self.window_len as f64 / 2.0
    }

    pub fn frame_times(&self, frame_count: usize, sample_rate: u32) -> Vec<f64> {
        (0..frame_count)
            .map(|k| self.frame_center(k) / sample_rate as f64)
            .collect()
    }
}

/// Copies `len` samples starting at `start` (possibly negative), zero-padding
/// outside the signal.
pub fn padded_slice(samples: &[f64], start: isize, len: usize) -> Vec<f64> {
    (0..len as isize)
        .map(|i| {
            let idx = start + i;
            if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Cuts the waveform into windowed frames; frame count is `ceil(len / hop)`.
pub fn segment_frames(w: &Waveform, spec: &FrameSpec) -> Vec<Vec<f64>> {
    let window = spec.window.coefficients(spec.window_len);
    (0..spec.frame_count(w.len()))
        .map(|k| {
            let mut frame = padded_slice(&w.samples, (k * spec.hop) as isize, spec.window_len);
            frame.iter_mut().zip(&window).for_each(|(x, g)| *x *= g);
            frame
        })
        .collect()
}

/// Adds each frame back at `k * hop`, truncating to `out_len`.
pub fn overlap_add(frames: &[Vec<f64>], hop: usize, out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    for (k, frame) in frames.iter().enumerate() {
        let start = k * hop;
        for (i, &v) in frame.iter().enumerate() {
            if let Some(slot) = out.get_mut(start + i) {
                *slot += v;
            }
        }
    }
    out
}
