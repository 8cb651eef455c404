//! Objective measures: MCD, BAPD, F0 RMSE and correlation, voicing error
//! and STOI, plus per-system reports.

mod report;
mod stoi;

use std::f64::consts::LN_10;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocoder::F0Track;

pub use report::{evaluate_system, format_speaker_table, format_table, EvalError, EvalReport, EvalRow, Hypothesis, MetricMeans, Reference};
pub use stoi::{resample, stoi};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MetricsError {
    #[error("frame counts differ: {0} vs {1}")]
    FrameCount(usize, usize),
    #[error("dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("sample rates differ: {0} vs {1}")]
    SampleRate(u32, u32),
    #[error("no frame is voiced in both tracks")]
    NoVoicedFrames,
    #[error("correlation undefined: F0 is constant over the mutually voiced frames")]
    ZeroVariance,
    #[error("{frames} analysis frames after silence removal, need at least {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("empty input")]
    Empty,
}

fn same_shape(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<(), MetricsError> {
    if a.nrows() != b.nrows() {
        return Err(MetricsError::FrameCount(a.nrows(), b.nrows()));
    }
    if a.ncols() != b.ncols() {
        return Err(MetricsError::Dimension(a.ncols(), b.ncols()));
    }
    if a.nrows() == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mean cepstral distortion in dB over frame-aligned mel-cepstra,
/// `(10 / ln 10) sqrt(2 sum_{d >= 1} (a_d - b_d)^2)` per frame; the energy
/// coefficient is left out.
pub fn mcd(reference: ArrayView2<f64>, hypothesis: ArrayView2<f64>) -> Result<f64, MetricsError> {
    same_shape(reference, hypothesis)?;
    let k = 10.0 / LN_10;
    let total: f64 = reference
        .rows()
        .into_iter()
        .zip(hypothesis.rows())
        .map(|(r, h)| {
            let sq: f64 = r.iter().zip(h.iter()).skip(1).map(|(a, b)| (a - b).powi(2)).sum();
            k * (2.0 * sq).sqrt()
        })
        .sum();
    Ok(total / reference.nrows() as f64)
}

/// Band aperiodicity distortion: frame mean of the RMS dB difference over
/// the bands.
pub fn bapd(reference: ArrayView2<f64>, hypothesis: ArrayView2<f64>) -> Result<f64, MetricsError> {
    same_shape(reference, hypothesis)?;
    let total: f64 = reference
        .rows()
        .into_iter()
        .zip(hypothesis.rows())
        .map(|(r, h)| {
            let sq: f64 = r.iter().zip(h.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            (sq / r.len() as f64).sqrt()
        })
        .sum();
    Ok(total / reference.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Metrics {
    pub rmse_hz: f64,
    pub corr: f64,
    pub vuv_pct: f64,
}

fn check_len(a: &F0Track, b: &F0Track) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::FrameCount(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Percentage of frames whose voicing decisions differ.
pub fn vuv_error_pct(reference: &F0Track, hypothesis: &F0Track) -> Result<f64, MetricsError> {
    check_len(reference, hypothesis)?;
    let diff = reference.vuv.iter().zip(&hypothesis.vuv).filter(|(a, b)| a != b).count();
    Ok(100.0 * diff as f64 / reference.len() as f64)
}

/// RMSE (Hz) and Pearson correlation over frames voiced in both tracks.
pub fn f0_rmse_corr(reference: &F0Track, hypothesis: &F0Track) -> Result<(f64, f64), MetricsError> {
    check_len(reference, hypothesis)?;
    let pairs: Vec<(f64, f64)> = (0..reference.len())
        .filter(|&t| reference.vuv[t] && hypothesis.vuv[t])
        .map(|t| (reference.f0[t], hypothesis.f0[t]))
        .collect();
    if pairs.is_empty() {
        return Err(MetricsError::NoVoicedFrames);
    }
    let n = pairs.len() as f64;
    let rmse = (pairs.iter().map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma).powi(2);
        sbb += (b - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((rmse, (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

pub fn f0_metrics(reference: &F0Track, hypothesis: &F0Track) -> Result<F0Metrics, MetricsError> {
    let vuv_pct = vuv_error_pct(reference, hypothesis)?;
    let (rmse_hz, corr) = f0_rmse_corr(reference, hypothesis)?;
    Ok(F0Metrics { rmse_hz, corr, vuv_pct })
}
