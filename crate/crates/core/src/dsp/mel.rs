use ndarray::{Array2, ArrayView2};

use super::{DspError, FrameConfig, Spectrogram};

/// Floor applied to mel-band power before taking the log.
pub const POWER_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with centers equally spaced on the mel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_mels x n_bins`, each row peak-normalized to 1.
    pub weights: Array2<f64>,
    pub f_min: f64,
    pub f_max: f64,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, cfg: &FrameConfig, f_min: f64, f_max: f64) -> Result<Self, DspError> {
        cfg.validate()?;
        let nyquist = cfg.sample_rate as f64 / 2.0;
        if n_mels < 2 {
            return Err(DspError::FrequencyRange(format!(
                "need at least 2 mel bands, got {n_mels}"
            )));
        }
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(DspError::FrequencyRange(format!(
                "require 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]"
            )));
        }
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = cfg.n_bins();
        let bin_hz = cfg.bin_hz();
        let mut weights = Array2::zeros((n_mels, n_bins));
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut row = weights.row_mut(m);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                row[k] = w;
            }
            let peak = row.iter().cloned().fold(0.0, f64::max);
            if peak <= 0.0 {
                return Err(DspError::FrequencyRange(format!(
                    "mel band {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; reduce n_mels or raise fft_size"
                )));
            }
            row.mapv_inplace(|w| w / peak);
        }
        Ok(Self {
            weights,
            f_min,
            f_max,
            centers_hz: edges[1..=n_mels].to_vec(),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    /// Center frequency of each filter in Hz.
    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// `T x n_bins` power to `T x n_mels` band power.
    pub fn apply_power(&self, power: ArrayView2<f64>) -> Result<Array2<f64>, DspError> {
        if power.ncols() != self.n_bins() {
            return Err(DspError::Dimension(format!(
                "power has {} bins, filterbank expects {}",
                power.ncols(),
                self.n_bins()
            )));
        }
        Ok(power.dot(&self.weights.t()))
    }

    /// Expands a `T x n_mels` band-domain quantity to `T x n_bins` through the
    /// column-normalized transpose of the filterbank. Bins no filter covers
    /// take the value of the band with the nearest center.
    pub fn expand(&self, bands: ArrayView2<f64>, bin_hz: f64) -> Result<Array2<f64>, DspError> {
        if bands.ncols() != self.n_mels() {
            return Err(DspError::Dimension(format!(
                "{} bands given, filterbank has {}",
                bands.ncols(),
                self.n_mels()
            )));
        }
        let mut out = bands.dot(&self.weights);
        let col_sums = self.weights.sum_axis(ndarray::Axis(0));
        for (k, &s) in col_sums.iter().enumerate() {
            if s > 1e-12 {
                out.column_mut(k).mapv_inplace(|v| v / s);
            } else {
                let f = k as f64 * bin_hz;
                let nearest = self
                    .centers_hz
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let src = bands.column(nearest).to_owned();
                out.column_mut(k).assign(&src);
            }
        }
        Ok(out)
    }

    /// Projects a `T x n_bins` quantity onto the bands as a filter-weighted
    /// average (row-normalized filterbank).
    pub fn project_average(&self, bins: ArrayView2<f64>) -> Result<Array2<f64>, DspError> {
        let mut out = self.apply_power(bins)?;
        let row_sums = self.weights.sum_axis(ndarray::Axis(1));
        for (m, &s) in row_sums.iter().enumerate() {
            out.column_mut(m).mapv_inplace(|v| v / s);
        }
        Ok(out)
    }
}

/// Natural log of filterbank-weighted power, floored at [`POWER_FLOOR`].
pub fn log_mel(spec: &Spectrogram, fb: &MelFilterbank) -> Result<Array2<f64>, DspError> {
    let mel = fb.apply_power(spec.power().view())?;
    Ok(mel.mapv(|p| p.max(POWER_FLOOR).ln()))
}
