//! Command-line interface: analysis, synthesis, evaluation, ECDF export and
//! toy model training.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::acoustic_model::{
    save_model, toy_dataset, train_with_validation, CellKind, ModelError, SequenceModelParams, ToyConfig,
    TrainConfig,
};
use crate::analysis::{DEFAULT_F0_MAX, DEFAULT_F0_MIN, DEFAULT_MVF_MIN, DEFAULT_ORDER, DEFAULT_WARP};
use crate::archive::{fmt_f64, load_archive, save_archive, write_csv, ArchiveError};
use crate::mask::{compute_cnm, MaskConvention, MaskError, DEFAULT_PDD_WINDOW, DEFAULT_THRESHOLD};
use crate::metrics::{ecdf, MetricError, MetricReport};
use crate::signal_io::{load_waveform, save_waveform, FrameSpec, WavError, Waveform};
use crate::synthesis::DEFAULT_SEED;
use crate::vocoder::{analyze, resynthesize, Analysis, AnalysisConfig, VocoderError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Vocoder(#[from] VocoderError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "contvoc", version, about = "Continuous-parameter vocoder with continuous noise masking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a WAV file into a parameter archive directory.
    Analyze {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Synthesize a WAV file from a parameter archive.
    Synth {
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the threshold stored in the archive.
        #[arg(long)]
        threshold: Option<f64>,
        /// Recomputes cnm from the stored pdd under this convention.
        #[arg(long)]
        mask_convention: Option<MaskConvention>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Analyze and resynthesize in one pass.
    Copysynth {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also keep the intermediate archive here.
        #[arg(long)]
        archive: Option<PathBuf>,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Compare reference and test WAV files (or directories paired by stem).
    Eval {
        reference: PathBuf,
        test: PathBuf,
        /// Report CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Export the empirical CDF of a track from one or more archives.
    Ecdf {
        #[arg(required = true)]
        archives: Vec<PathBuf>,
        /// Merged CSV; per-archive files are written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "pdd", value_parser = ["pdd", "cnm"])]
        track: String,
    },
    /// Train a small recurrent model on a synthetic phone-to-parameter corpus.
    TrainToy {
        /// Output directory for `loss.csv` and `model.txt`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "vanilla-bidirectional")]
        cell: CellKind,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        val_samples: usize,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 6)]
        phones: usize,
        #[arg(long, default_value_t = 4)]
        outputs: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

/// Flags shared by every command that runs analysis.
#[derive(Debug, Clone, Args)]
pub struct AnalysisOpts {
    /// Expected input sample rate; inputs at another rate are rejected.
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long, default_value_t = FrameSpec::DEFAULT_HOP_MS)]
    pub hop_ms: f64,
    #[arg(long, default_value_t = FrameSpec::DEFAULT_WINDOW_MS)]
    pub window_ms: f64,
    #[arg(long, default_value_t = DEFAULT_F0_MIN)]
    pub f0_min: f64,
    #[arg(long, default_value_t = DEFAULT_F0_MAX)]
    pub f0_max: f64,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = DEFAULT_WARP)]
    pub warp: f64,
    #[arg(long, default_value_t = DEFAULT_MVF_MIN)]
    pub mvf_min: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = MaskConvention::Direct)]
    pub mask_convention: MaskConvention,
    #[arg(long, default_value_t = DEFAULT_PDD_WINDOW)]
    pub pdd_window: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl Default for AnalysisOpts {
    fn default() -> Self {
        Self {
            sample_rate: None,
            hop_ms: FrameSpec::DEFAULT_HOP_MS,
            window_ms: FrameSpec::DEFAULT_WINDOW_MS,
            f0_min: DEFAULT_F0_MIN,
            f0_max: DEFAULT_F0_MAX,
            order: DEFAULT_ORDER,
            warp: DEFAULT_WARP,
            mvf_min: DEFAULT_MVF_MIN,
            threshold: DEFAULT_THRESHOLD,
            mask_convention: MaskConvention::Direct,
            pdd_window: DEFAULT_PDD_WINDOW,
            seed: DEFAULT_SEED,
        }
    }
}

impl AnalysisOpts {
    pub fn config(&self, sample_rate: u32) -> Result<AnalysisConfig, CliError> {
        if let Some(expected) = self.sample_rate {
            if expected != sample_rate {
                return Err(CliError::Usage(format!(
                    "input sample rate {sample_rate} Hz differs from --sample-rate {expected}"
                )));
            }
        }
        let frame_spec = FrameSpec::from_ms(sample_rate, self.hop_ms, self.window_ms)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(AnalysisConfig {
            frame_spec,
            f0_min: self.f0_min,
            f0_max: self.f0_max,
            order: self.order,
            warp: self.warp,
            mvf_min: self.mvf_min,
            pdd_window: self.pdd_window,
            threshold: self.threshold,
            convention: self.mask_convention,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `path` through a temporary sibling so readers never see a partial
/// file.
fn write_atomically(path: &Path, write: impl FnOnce(&Path) -> Result<(), CliError>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    let staging = path.with_file_name(format!(".{name}.partial-{}", std::process::id()));
    if let Err(e) = write(&staging) {
        let _ = fs::remove_file(&staging);
        return Err(e);
    }
    fs::rename(&staging, path).map_err(io_err(path))
}

fn write_wav(w: &Waveform, path: &Path) -> Result<(), CliError> {
    write_atomically(path, |tmp| Ok(save_waveform(w, tmp)?))
}

fn analyze_file(path: &Path, opts: &AnalysisOpts) -> Result<Analysis, CliError> {
    let w = load_waveform(path)?;
    let cfg = opts.config(w.sample_rate())?;
    Ok(analyze(&w, &cfg)?)
}

pub fn cmd_analyze(input: &Path, out: &Path, opts: &AnalysisOpts) -> Result<(), CliError> {
    let analysis = analyze_file(input, opts)?;
    save_archive(&analysis, out)?;
    Ok(())
}

/// Applies command-line overrides of the stored mask settings.
pub fn override_mask(
    analysis: &mut Analysis,
    threshold: Option<f64>,
    convention: Option<MaskConvention>,
) -> Result<(), CliError> {
    let threshold = threshold.unwrap_or(analysis.mask.threshold);
    match convention {
        Some(c) => analysis.mask = compute_cnm(&analysis.mask.pdd, c, threshold)?,
        None if (0.0..=1.0).contains(&threshold) => analysis.mask.threshold = threshold,
        None => return Err(MaskError::InvalidThreshold(threshold).into()),
    }
    Ok(())
}

pub fn cmd_synth(
    archive: &Path,
    out: &Path,
    threshold: Option<f64>,
    convention: Option<MaskConvention>,
    seed: u64,
) -> Result<(), CliError> {
    let mut analysis = load_archive(archive)?;
    override_mask(&mut analysis, threshold, convention)?;
    let w = resynthesize(&analysis.params, &analysis.mask, seed)?;
    write_wav(&w, out)
}

pub fn cmd_copysynth(input: &Path, out: &Path, archive: Option<&Path>, opts: &AnalysisOpts) -> Result<(), CliError> {
    let analysis = analyze_file(input, opts)?;
    let w = resynthesize(&analysis.params, &analysis.mask, opts.seed)?;
    if let Some(dir) = archive {
        save_archive(&analysis, dir)?;
    }
    write_wav(&w, out)
}

fn wav_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if path.is_file() && is_wav {
            if let Some(stem) = path.file_stem() {
                out.insert(stem.to_string_lossy().into_owned(), path);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("no .wav files in {}", dir.display())));
    }
    Ok(out)
}

/// Reference/test pairs, by file stem when both paths are directories.
pub fn pair_inputs(reference: &Path, test: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, CliError> {
    match (reference.is_dir(), test.is_dir()) {
        (false, false) => {
            let stem = reference
                .file_stem()
                .map_or_else(|| "utterance".to_string(), |s| s.to_string_lossy().into_owned());
            Ok(vec![(stem, reference.to_path_buf(), test.to_path_buf())])
        }
        (true, true) => {
            let refs = wav_stems(reference)?;
            let tests = wav_stems(test)?;
            let unmatched: Vec<&str> = refs
                .keys()
                .filter(|k| !tests.contains_key(*k))
                .chain(tests.keys().filter(|k| !refs.contains_key(*k)))
                .map(String::as_str)
                .collect();
            if !unmatched.is_empty() {
                return Err(CliError::Usage(format!(
                    "unmatched file stems: {}",
                    unmatched.join(", ")
                )));
            }
            Ok(refs
                .into_iter()
                .map(|(stem, r)| {
                    let t = tests[&stem].clone();
                    (stem, r, t)
                })
                .collect())
        }
        _ => Err(CliError::Usage(
            "reference and test must both be files or both be directories".into(),
        )),
    }
}

pub fn compare(reference: &Analysis, test: &Analysis) -> Result<MetricReport, CliError> {
    let (r, t) = (&reference.params, &test.params);
    if r.frame_count() != t.frame_count() {
        return Err(CliError::Usage(format!(
            "reference has {} frames, test has {}; inputs must be time-aligned",
            r.frame_count(),
            t.frame_count()
        )));
    }
    Ok(MetricReport::compute(
        &r.envelope,
        &t.envelope,
        &r.cont_f0,
        &t.cont_f0,
        &r.mvf,
        &t.mvf,
        r.nyquist(),
    )?)
}

pub const REPORT_HEADER: [&str; 7] = [
    "utterance",
    "mcd_db",
    "f0_rmse_hz",
    "mvf_rmse_hz",
    "mvf_rmse_norm",
    "corr",
    "frame_count",
];

pub fn report_row(name: &str, r: &MetricReport) -> Vec<String> {
    vec![
        name.to_string(),
        fmt_f64(r.mcd_db),
        fmt_f64(r.f0_rmse_hz),
        fmt_f64(r.mvf_rmse_hz),
        fmt_f64(r.mvf_rmse_norm),
        r.corr.map(fmt_f64).unwrap_or_default(),
        r.frame_count.to_string(),
    ]
}

/// Per-utterance reports followed by their mean, labelled `mean`.
pub fn evaluate(reference: &Path, test: &Path, opts: &AnalysisOpts) -> Result<Vec<(String, MetricReport)>, CliError> {
    let pairs = pair_inputs(reference, test)?;
    let mut rows = Vec::with_capacity(pairs.len() + 1);
    for (stem, r, t) in pairs {
        let report = compare(&analyze_file(&r, opts)?, &analyze_file(&t, opts)?)?;
        rows.push((stem, report));
    }
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    let mean = MetricReport::mean(&reports).expect("at least one pair");
    rows.push(("mean".to_string(), mean));
    Ok(rows)
}

pub fn cmd_eval(reference: &Path, test: &Path, out: Option<&Path>, opts: &AnalysisOpts) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = evaluate(reference, test, opts)?
        .iter()
        .map(|(name, r)| report_row(name, r))
        .collect();
    match out {
        Some(path) => write_atomically(path, |tmp| Ok(write_csv(tmp, &REPORT_HEADER, &rows)?)),
        None => {
            println!("{}", REPORT_HEADER.join(","));
            for row in rows {
                println!("{}", row.join(","));
            }
            Ok(())
        }
    }
}

fn archive_label(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| "archive".to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_ecdf(archives: &[PathBuf], out: &Path, track: &str) -> Result<(), CliError> {
    let stem = out
        .file_stem()
        .map_or_else(|| "ecdf".to_string(), |s| s.to_string_lossy().into_owned());
    let mut merged = Vec::new();
    let mut per_input = Vec::new();
    for path in archives {
        let a = load_archive(path)?;
        let values = match track {
            "cnm" => &a.mask.cnm,
            _ => &a.mask.pdd,
        };
        let curve = ecdf(values)?;
        let label = archive_label(path);
        let rows: Vec<Vec<String>> = curve
            .sorted_values
            .iter()
            .zip(&curve.cumulative)
            .map(|(v, c)| vec![fmt_f64(*v), fmt_f64(*c)])
            .collect();
        merged.extend(rows.iter().map(|r| {
            let mut row = vec![label.clone()];
            row.extend(r.iter().cloned());
            row
        }));
        per_input.push((out.with_file_name(format!("{stem}_{label}.csv")), rows));
    }
    for (path, rows) in &per_input {
        write_atomically(path, |tmp| Ok(write_csv(tmp, &["value", "cumulative"], rows)?))?;
    }
    write_atomically(out, |tmp| {
        Ok(write_csv(tmp, &["source", "value", "cumulative"], &merged)?)
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train_toy(
    out: &Path,
    cell: CellKind,
    epochs: usize,
    lr: f64,
    hidden: usize,
    samples: usize,
    val_samples: usize,
    frames: usize,
    phones: usize,
    outputs: usize,
    seed: u64,
) -> Result<(), CliError> {
    if samples == 0 || hidden == 0 || frames == 0 || phones == 0 || outputs == 0 {
        return Err(CliError::Usage("sizes must be positive".into()));
    }
    let toy = ToyConfig {
        samples: samples + val_samples,
        frames,
        phone_classes: phones,
        output_dim: outputs,
        seed,
    };
    let mut data = toy_dataset(&toy);
    let validation = data.split_off(samples);
    let params = SequenceModelParams::init(cell, toy.input_dim(), hidden, outputs, seed);
    let outcome = train_with_validation(params, &data, &validation, &TrainConfig::per_sequence(epochs, lr, seed))?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let rows: Vec<Vec<String>> = outcome
        .train_loss
        .iter()
        .enumerate()
        .map(|(e, l)| {
            vec![
                (e + 1).to_string(),
                fmt_f64(*l),
                outcome.val_loss.get(e).map(|v| fmt_f64(*v)).unwrap_or_default(),
            ]
        })
        .collect();
    let loss_path = out.join("loss.csv");
    write_atomically(&loss_path, |tmp| {
        Ok(write_csv(tmp, &["epoch", "train_loss", "val_loss"], &rows)?)
    })?;
    let model_path = out.join("model.txt");
    write_atomically(&model_path, |tmp| Ok(save_model(&outcome.params, tmp)?))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { input, out, opts } => cmd_analyze(&input, &out, &opts),
        Command::Synth {
            archive,
            out,
            threshold,
            mask_convention,
            seed,
        } => cmd_synth(&archive, &out, threshold, mask_convention, seed),
        Command::Copysynth {
            input,
            out,
            archive,
            opts,
        } => cmd_copysynth(&input, &out, archive.as_deref(), &opts),
        Command::Eval {
            reference,
            test,
            out,
            opts,
        } => cmd_eval(&reference, &test, out.as_deref(), &opts),
        Command::Ecdf { archives, out, track } => cmd_ecdf(&archives, &out, &track),
        Command::TrainToy {
            out,
            cell,
            epochs,
            lr,
            hidden,
            samples,
            val_samples,
            frames,
            phones,
            outputs,
            seed,
        } => cmd_train_toy(
            &out,
            cell,
            epochs,
            lr,
            hidden,
            samples,
            val_samples,
            frames,
            phones,
            outputs,
            seed,
        ),
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
