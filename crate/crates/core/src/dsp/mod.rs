//! Framing, STFT/ISTFT and log-mel features shared by the rest of the crate.
//!
//! Frame `t` of every analysis in this crate is centered on sample
//! `t * hop`; the STFT reflection-pads `window_len / 2` samples on both sides
//! so the first frame is centered on sample 0. A signal of `n` samples
//! therefore yields `n / hop + 1` frames (equivalently `ceil((n + 1) / hop)`).

mod mel;
mod stft;

pub use mel::{hz_to_mel, log_mel, mel_to_hz, MelFilterbank, POWER_FLOOR};
pub use stft::{frame_count, hann_periodic, istft, stft, Spectrogram, StftPlan};
pub(crate) use stft::reflect_index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sample rate every pipeline entry point works at.
pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DspError {
    #[error("empty signal")]
    EmptySignal,
    #[error("sample rate {found} Hz does not match the expected {expected} Hz")]
    SampleRate { found: u32, expected: u32 },
    #[error("invalid frame configuration: {0}")]
    InvalidConfig(String),
    #[error("spectrogram has {found} bins, configuration expects {expected}")]
    BinCount { found: usize, expected: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("frequency bounds out of range: {0}")]
    FrequencyRange(String),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Checks the pipeline-entry invariants: expected rate, non-empty, finite.
    pub fn validate(&self, expected_rate: u32) -> Result<(), DspError> {
        if self.sample_rate != expected_rate {
            return Err(DspError::SampleRate {
                found: self.sample_rate,
                expected: expected_rate,
            });
        }
        if self.samples.is_empty() {
            return Err(DspError::EmptySignal);
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(())
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            (self.energy() / self.samples.len() as f64).sqrt()
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate,
        )
    }

    /// Scales the signal down so that its peak does not exceed `limit`.
    /// Quieter signals are returned unchanged.
    pub fn limit_peak(mut self, limit: f64) -> Self {
        let peak = self.peak();
        if peak > limit {
            let g = limit / peak;
            self.samples.iter_mut().for_each(|x| *x *= g);
        }
        self
    }

    /// Zero-pads or truncates to exactly `len` samples.
    pub fn fit_length(mut self, len: usize) -> Self {
        self.samples.resize(len, 0.0);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2 pi n / N)`.
    Hann,
}

/// Analysis framing shared by STFT, log-mel and the vocoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameConfig {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for FrameConfig {
    /// 64 ms windows at a 5 ms hop, 16 kHz.
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            window_len: 1024,
            hop: 80,
            fft_size: 1024,
            window: WindowKind::Hann,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: String| Err(DspError::InvalidConfig(m));
        if self.hop == 0 || self.window_len == 0 || self.fft_size == 0 {
            return bad("hop, window_len and fft_size must be positive".into());
        }
        if self.hop > self.window_len {
            return bad(format!("hop {} exceeds window {}", self.hop, self.window_len));
        }
        if self.window_len > self.fft_size {
            return bad(format!(
                "window {} exceeds fft size {}",
                self.window_len, self.fft_size
            ));
        }
        if self.window_len % 2 != 0 || self.fft_size % 2 != 0 {
            return bad("window_len and fft_size must be even".into());
        }
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frequency spacing of FFT bins in Hz.
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn hop_secs(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn frames_for(&self, n_samples: usize) -> usize {
        frame_count(n_samples, self.hop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = FrameConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_bins(), 513);
        assert!((cfg.hop_secs() - 0.005).abs() < 1e-12);
        assert!((cfg.window_len as f64 / cfg.sample_rate as f64 - 0.064).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = FrameConfig::default();
        for cfg in [
            FrameConfig { hop: 0, ..base },
            FrameConfig { hop: 2048, ..base },
            FrameConfig { fft_size: 512, ..base },
            FrameConfig { window_len: 1023, fft_size: 1023, ..base },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn waveform_validation() {
        assert_eq!(
            Waveform::new(vec![0.0], 44_100).validate(SAMPLE_RATE),
            Err(DspError::SampleRate {
                found: 44_100,
                expected: SAMPLE_RATE
            })
        );
        assert_eq!(
            Waveform::new(vec![], SAMPLE_RATE).validate(SAMPLE_RATE),
            Err(DspError::EmptySignal)
        );
        assert_eq!(
            Waveform::new(vec![0.0, f64::NAN], SAMPLE_RATE).validate(SAMPLE_RATE),
            Err(DspError::NonFinite(1))
        );
    }

    #[test]
    fn limit_peak_only_attenuates() {
        let w = Waveform::new(vec![0.1, -0.5], SAMPLE_RATE);
        assert_eq!(w.clone().limit_peak(0.99), w);
        let loud = Waveform::new(vec![2.0, -4.0], SAMPLE_RATE).limit_peak(0.99);
        assert!((loud.peak() - 0.99).abs() < 1e-12);
        assert!((loud.samples[0] - 0.495).abs() < 1e-12);
    }
}
