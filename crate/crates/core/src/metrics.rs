//! Objective measures: mel-cepstral distortion, RMSE, Pearson correlation
//! and the empirical CDF.

use std::f64::consts::LN_10;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("frame {frame}: order mismatch {left} vs {right}")]
    OrderMismatch { frame: usize, left: usize, right: usize },
    #[error("input is empty")]
    Empty,
    #[error("correlation needs at least two points")]
    TooShort,
    #[error("zero variance in the {0} track")]
    ZeroVariance(&'static str),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::LengthMismatch(a, b));
    }
    Ok(())
}

/// `10 sqrt(2) / ln 10`, the dB scale of a unit cepstral difference.
pub fn mcd_scale() -> f64 {
    10.0 * 2f64.sqrt() / LN_10
}

/// Mean over frames of `(10 / ln 10) sqrt(2 sum_{i>=1} (c_i - c'_i)^2)`;
/// the energy coefficient `c_0` is excluded.
pub fn mcd(reference: &[Vec<f64>], test: &[Vec<f64>]) -> Result<f64, MetricError> {
    check_lengths(reference.len(), test.len())?;
    if reference.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    for (frame, (a, b)) in reference.iter().zip(test).enumerate() {
        if a.len() != b.len() {
            return Err(MetricError::OrderMismatch {
                frame,
                left: a.len(),
                right: b.len(),
            });
        }
        let sq: f64 = a.iter().zip(b).skip(1).map(|(x, y)| (x - y) * (x - y)).sum();
        total += (10.0 / LN_10) * (2.0 * sq).sqrt();
    }
    Ok(total / reference.len() as f64)
}

pub fn rmse(reference: &[f64], test: &[f64]) -> Result<f64, MetricError> {
    check_lengths(reference.len(), test.len())?;
    if reference.is_empty() {
        return Err(MetricError::Empty);
    }
    let sq: f64 = reference.iter().zip(test).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / reference.len() as f64).sqrt())
}

pub fn pearson_corr(reference: &[f64], test: &[f64]) -> Result<f64, MetricError> {
    check_lengths(reference.len(), test.len())?;
    let n = reference.len();
    if n < 2 {
        return Err(MetricError::TooShort);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (ma, mb) = (mean(reference), mean(test));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in reference.iter().zip(test) {
        let (da, db) = (a - ma, b - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 {
        return Err(MetricError::ZeroVariance("reference"));
    }
    if sbb == 0.0 {
        return Err(MetricError::ZeroVariance("test"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Sorted sample values with the fraction of samples at or below each.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfCurve {
    pub sorted_values: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl EcdfCurve {
    pub fn len(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_values.is_empty()
    }
}

/// One point per sample; tied values share the cumulative fraction of the
/// last tie.
pub fn ecdf(values: &[f64]) -> Result<EcdfCurve, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cumulative = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        cumulative[i..=j].fill((j + 1) as f64 / n as f64);
        i = j + 1;
    }
    Ok(EcdfCurve {
        sorted_values: sorted,
        cumulative,
    })
}

/// Fraction of samples `<= x`.
pub fn evaluate_ecdf(curve: &EcdfCurve, x: f64) -> f64 {
    let count = curve.sorted_values.partition_point(|&v| v <= x);
    count as f64 / curve.len() as f64
}

/// Objective comparison of two analyses of the same utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mcd_db: f64,
    pub f0_rmse_hz: f64,
    pub mvf_rmse_hz: f64,
    /// MVF RMSE divided by the nyquist frequency.
    pub mvf_rmse_norm: f64,
    /// `None` when either contF0 track is constant.
    pub corr: Option<f64>,
    pub frame_count: usize,
}

impl MetricReport {
    pub fn compute(
        ref_envelope: &[Vec<f64>],
        test_envelope: &[Vec<f64>],
        ref_f0: &[f64],
        test_f0: &[f64],
        ref_mvf: &[f64],
        test_mvf: &[f64],
        nyquist: f64,
    ) -> Result<Self, MetricError> {
        let mvf_rmse_hz = rmse(ref_mvf, test_mvf)?;
        let corr = match pearson_corr(ref_f0, test_f0) {
            Ok(c) => Some(c),
            Err(MetricError::ZeroVariance(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            mcd_db: mcd(ref_envelope, test_envelope)?,
            f0_rmse_hz: rmse(ref_f0, test_f0)?,
            mvf_rmse_hz,
            mvf_rmse_norm: mvf_rmse_hz / nyquist,
            corr,
            frame_count: ref_f0.len(),
        })
    }

    /// Field-wise mean; `corr` averages over the reports that define it.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let corrs: Vec<f64> = reports.iter().filter_map(|r| r.corr).collect();
        Some(MetricReport {
            mcd_db: avg(|r| r.mcd_db),
            f0_rmse_hz: avg(|r| r.f0_rmse_hz),
            mvf_rmse_hz: avg(|r| r.mvf_rmse_hz),
            mvf_rmse_norm: avg(|r| r.mvf_rmse_norm),
            corr: (!corrs.is_empty()).then(|| corrs.iter().sum::<f64>() / corrs.len() as f64),
            frame_count: reports.iter().map(|r| r.frame_count).sum(),
        })
    }
}
