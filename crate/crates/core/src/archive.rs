//! On-disk parameter archives.
//!
//! An archive is a directory with `manifest.txt` (one `key=value` per line)
//! and one CSV per track: `cont_f0.csv`, `mvf.csv`, `envelope.csv`,
//! `pdd.csv` and `cnm.csv`, plus `mask_vs_mvf.csv` with the per-frame mask
//! and MVF side by side for plotting. Every CSV starts with a header row and has one
//! row per frame, led by the frame index. Numbers are written in the
//! shortest decimal form that parses back to the identical `f64`, so a
//! reload reproduces every value exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::ContinuousParams;
use crate::mask::{MaskConvention, NoiseMask};
use crate::signal_io::{FrameSpec, WindowKind};
use crate::vocoder::Analysis;

pub const MANIFEST: &str = "manifest.txt";
pub const FORMAT: &str = "contvoc-archive-1";
/// Per-frame mask and MVF export written alongside the tracks.
pub const MASK_CURVE: &str = "mask_vs_mvf.csv";
pub const TRACKS: [&str; 5] = ["cont_f0", "mvf", "envelope", "pdd", "cnm"];

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{track}.csv line {line}: {message}")]
    Track {
        track: String,
        line: usize,
        message: String,
    },
    #[error("{track}.csv has {got} rows but the manifest declares {expected} frames")]
    RowCount {
        track: String,
        expected: usize,
        got: usize,
    },
    #[error("inconsistent archive: {0}")]
    Inconsistent(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a CSV with a header and one row per entry of `rows`.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ArchiveError> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn fmt_f64(v: f64) -> String {
    v.to_string()
}

fn manifest_text(a: &Analysis) -> String {
    let p = &a.params;
    let mut out = String::new();
    let _ = writeln!(out, "format={FORMAT}");
    let _ = writeln!(out, "sample_rate={}", p.sample_rate);
    let _ = writeln!(out, "hop={}", p.frame_spec.hop());
    let _ = writeln!(out, "window_len={}", p.frame_spec.window_len());
    let _ = writeln!(out, "window={}", p.frame_spec.window().name());
    let _ = writeln!(out, "order={}", p.order());
    let _ = writeln!(out, "warp={}", fmt_f64(p.warp));
    let _ = writeln!(out, "mask_convention={}", a.mask.convention);
    let _ = writeln!(out, "threshold={}", fmt_f64(a.mask.threshold));
    let _ = writeln!(out, "frame_count={}", p.frame_count());
    out
}

fn scalar_rows(values: &[f64]) -> Vec<Vec<String>> {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| vec![k.to_string(), fmt_f64(*v)])
        .collect()
}

fn write_contents(a: &Analysis, dir: &Path) -> Result<(), ArchiveError> {
    let p = &a.params;
    fs::write(dir.join(MANIFEST), manifest_text(a)).map_err(io_err(&dir.join(MANIFEST)))?;
    write_csv(&dir.join("cont_f0.csv"), &["frame", "cont_f0_hz"], &scalar_rows(&p.cont_f0))?;
    write_csv(&dir.join("mvf.csv"), &["frame", "mvf_hz"], &scalar_rows(&p.mvf))?;
    write_csv(&dir.join("pdd.csv"), &["frame", "pdd"], &scalar_rows(&a.mask.pdd))?;
    write_csv(&dir.join("cnm.csv"), &["frame", "cnm"], &scalar_rows(&a.mask.cnm))?;
    let names: Vec<String> = (0..=p.order()).map(|i| format!("c{i}")).collect();
    let mut header = vec!["frame"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = p
        .envelope
        .iter()
        .enumerate()
        .map(|(k, c)| std::iter::once(k.to_string()).chain(c.iter().map(|v| fmt_f64(*v))).collect())
        .collect();
    write_csv(&dir.join("envelope.csv"), &header, &rows)?;
    write_mask_curve(a, dir.join(MASK_CURVE))
}

/// Writes the archive into a temporary sibling directory and renames it into
/// place, so `dir` is never left half-written.
pub fn save_archive(a: &Analysis, dir: impl AsRef<Path>) -> Result<(), ArchiveError> {
    let dir = dir.as_ref();
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let name = dir
        .file_name()
        .ok_or_else(|| ArchiveError::Inconsistent(format!("{} has no directory name", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir(&staging).map_err(io_err(&staging))?;
    if let Err(e) = write_contents(a, &staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::rename(&staging, dir).map_err(io_err(dir))
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>, ArchiveError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ArchiveError::Manifest(format!("line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn manifest_value<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, ArchiveError> {
    let raw = map
        .get(key)
        .ok_or_else(|| ArchiveError::Manifest(format!("missing key '{key}'")))?;
    raw.parse()
        .map_err(|_| ArchiveError::Manifest(format!("bad value '{raw}' for '{key}'")))
}

/// Reads a CSV written by [`write_csv`]; returns the rows without the
/// leading frame column.
fn read_track(dir: &Path, track: &str, width: Option<usize>, frames: usize) -> Result<Vec<Vec<f64>>, ArchiveError> {
    let path = dir.join(format!("{track}.csv"));
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let err = |line: usize, message: String| ArchiveError::Track {
        track: track.to_string(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(i + 1, format!("bad frame index '{}'", fields[0])))?;
        if index != rows.len() {
            return Err(err(i + 1, format!("frame index {index}, expected {}", rows.len())));
        }
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(i + 1, format!("bad number '{f}'")))
            })
            .collect::<Result<_, _>>()?;
        if let Some(w) = width {
            if values.len() != w {
                return Err(err(i + 1, format!("expected {w} values, got {}", values.len())));
            }
        }
        rows.push(values);
    }
    if rows.len() != frames {
        return Err(ArchiveError::RowCount {
            track: track.to_string(),
            expected: frames,
            got: rows.len(),
        });
    }
    Ok(rows)
}

fn scalar_track(dir: &Path, track: &str, frames: usize) -> Result<Vec<f64>, ArchiveError> {
    Ok(read_track(dir, track, Some(1), frames)?
        .into_iter()
        .map(|r| r[0])
        .collect())
}

pub fn load_archive(dir: impl AsRef<Path>) -> Result<Analysis, ArchiveError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let m = parse_manifest(&text)?;
    let format: String = manifest_value(&m, "format")?;
    if format != FORMAT {
        return Err(ArchiveError::Manifest(format!("unknown format '{format}'")));
    }
    let sample_rate: u32 = manifest_value(&m, "sample_rate")?;
    let hop: usize = manifest_value(&m, "hop")?;
    let window_len: usize = manifest_value(&m, "window_len")?;
    let window_name: String = manifest_value(&m, "window")?;
    let window = WindowKind::from_name(&window_name)
        .ok_or_else(|| ArchiveError::Manifest(format!("unknown window '{window_name}'")))?;
    let frame_spec =
        FrameSpec::new(hop, window_len, window).map_err(|e| ArchiveError::Manifest(e.to_string()))?;
    let order: usize = manifest_value(&m, "order")?;
    let warp: f64 = manifest_value(&m, "warp")?;
    let convention_name: String = manifest_value(&m, "mask_convention")?;
    let convention: MaskConvention = convention_name
        .parse()
        .map_err(|e: crate::mask::MaskError| ArchiveError::Manifest(e.to_string()))?;
    let threshold: f64 = manifest_value(&m, "threshold")?;
    let frames: usize = manifest_value(&m, "frame_count")?;

    let params = ContinuousParams {
        cont_f0: scalar_track(dir, "cont_f0", frames)?,
        mvf: scalar_track(dir, "mvf", frames)?,
        envelope: read_track(dir, "envelope", Some(order + 1), frames)?,
        frame_spec,
        sample_rate,
        warp,
    };
    params
        .validate()
        .map_err(|e| ArchiveError::Inconsistent(e.to_string()))?;
    let pdd = scalar_track(dir, "pdd", frames)?;
    let cnm = scalar_track(dir, "cnm", frames)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ArchiveError::Manifest(format!("threshold {threshold} outside [0, 1]")));
    }
    for (name, track) in [("pdd", &pdd), ("cnm", &cnm)] {
        if let Some(k) = track.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(ArchiveError::Inconsistent(format!(
                "{name} frame {k} outside [0, 1]"
            )));
        }
    }
    Ok(Analysis {
        params,
        mask: NoiseMask {
            pdd,
            cnm,
            threshold,
            convention,
        },
    })
}

/// Per-frame mask against MVF, for plotting the voicing decision over time.
pub fn write_mask_curve(a: &Analysis, path: impl AsRef<Path>) -> Result<(), ArchiveError> {
    let p = &a.params;
    let times = p.frame_spec.frame_times(p.frame_count(), p.sample_rate);
    let rows: Vec<Vec<String>> = (0..p.frame_count())
        .map(|k| {
            vec![
                k.to_string(),
                fmt_f64(times[k]),
                fmt_f64(p.mvf[k]),
                fmt_f64(p.mvf[k] / p.nyquist()),
                fmt_f64(a.mask.pdd[k]),
                fmt_f64(a.mask.cnm[k]),
                u8::from(a.mask.keeps_voiced(k)).to_string(),
            ]
        })
        .collect();
    write_csv(
        path.as_ref(),
        &["frame", "time_s", "mvf_hz", "mvf_norm", "pdd", "cnm", "voiced"],
        &rows,
    )
}
