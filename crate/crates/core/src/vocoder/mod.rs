//! A compact source-filter vocoder.
//!
//! Analysis turns a 16 kHz waveform into an [`AcousticTrack`] with one row
//! per 5 ms frame: 60 mel-cepstral coefficients of the spectral envelope,
//! 5 band aperiodicities, log-F0 and a voicing flag. Synthesis drives a
//! minimum-phase filter built from the envelope with a mix of pulses and
//! noise. The parameter layout is the one WORLD/Merlin acoustic models use,
//! while the estimators are simpler:
//!
//! * F0: normalized cross-correlation peak search with a 5-point median
//!   filter over voiced frames.
//! * Envelope: the power spectrum of a three-period window smoothed twice
//!   with a rectangle one F0 wide, which cancels the harmonic ripple.
//! * Aperiodicity: per band, the share of power found between harmonics
//!   of a six-period Hann spectrum.

mod aperiodicity;
mod envelope;
mod f0;
mod mcep;
mod synthesis;
mod track;

pub use aperiodicity::estimate_band_aperiodicity;
pub use envelope::estimate_envelope;
pub use f0::estimate_f0;
pub use mcep::MelCepstrum;
pub use synthesis::synthesize;
pub use track::{AcousticTrack, F0Track, BAP_DIM, MCEP_DIM};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::BinError;
use crate::dsp::{DspError, FrameConfig, StftPlan, Waveform};

/// Frames whose `mcep[0]` (mean log power) lies below this are synthesized as
/// digital silence.
pub const SILENCE_LOG_POWER: f64 = -16.118_095_650_958_32; // ln(1e-7)

/// Lower bound applied to envelope power.
pub const ENVELOPE_FLOOR: f64 = 1e-12;

#[derive(Error, Debug)]
pub enum VocoderError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("frame count mismatch: {expected} expected, {found} found")]
    FrameCount { expected: usize, found: usize },
    #[error("envelope must be strictly positive (frame {frame}, bin {bin})")]
    NonPositiveEnvelope { frame: usize, bin: usize },
    #[error("non-finite {what} at frame {frame}")]
    NonFinite { what: &'static str, frame: usize },
    #[error("invalid vocoder configuration: {0}")]
    Config(String),
    #[error("track has {found} {what} columns, expected {expected}")]
    Columns {
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Bin(#[from] BinError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocoderConfig {
    pub frame: FrameConfig,
    pub f0_floor: f64,
    pub f0_ceil: f64,
    /// Minimum normalized cross-correlation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Minimum frame RMS for a voiced frame.
    pub silence_rms: f64,
    pub median_len: usize,
    /// All-pass warping coefficient of the mel-cepstrum.
    pub warp: f64,
    pub mcep_order: usize,
    /// Six edges delimiting the five aperiodicity bands.
    pub band_edges_hz: Vec<f64>,
    /// Envelope smoothing width on unvoiced frames.
    pub unvoiced_smoothing_hz: f64,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            f0_floor: 50.0,
            f0_ceil: 550.0,
            voicing_threshold: 0.45,
            silence_rms: 1e-4,
            median_len: 5,
            warp: 0.58,
            mcep_order: MCEP_DIM,
            band_edges_hz: vec![0.0, 1000.0, 2000.0, 4000.0, 6000.0, 8000.0],
            unvoiced_smoothing_hz: 200.0,
        }
    }
}

impl VocoderConfig {
    pub fn validate(&self) -> Result<(), VocoderError> {
        self.frame.validate()?;
        let bad = |m: String| Err(VocoderError::Config(m));
        if !(self.f0_floor > 0.0 && self.f0_floor < self.f0_ceil) {
            return bad(format!(
                "f0 range [{}, {}] is empty",
                self.f0_floor, self.f0_ceil
            ));
        }
        if self.f0_ceil >= self.frame.sample_rate as f64 / 4.0 {
            return bad(format!("f0 ceiling {} too high", self.f0_ceil));
        }
        if self.mcep_order != MCEP_DIM {
            return bad(format!("mcep order must be {MCEP_DIM}"));
        }
        if !(self.warp.abs() < 1.0) {
            return bad(format!("warp {} outside (-1, 1)", self.warp));
        }
        if self.band_edges_hz.len() != BAP_DIM + 1
            || self.band_edges_hz.windows(2).any(|w| w[0] >= w[1])
            || self.band_edges_hz[0] < 0.0
            || *self.band_edges_hz.last().unwrap() > self.frame.sample_rate as f64 / 2.0
        {
            return bad(format!(
                "need {} increasing band edges within [0, nyquist], got {:?}",
                BAP_DIM + 1,
                self.band_edges_hz
            ));
        }
        if self.median_len == 0 || self.median_len % 2 == 0 {
            return bad("median length must be odd".into());
        }
        Ok(())
    }

    /// Log-F0 used on tracks without any voiced frame: the geometric centre
    /// of the search range.
    pub fn default_lf0(&self) -> f64 {
        0.5 * (self.f0_floor.ln() + self.f0_ceil.ln())
    }
}

/// Full analysis: F0, envelope -> mel-cepstrum, band aperiodicity.
pub fn analyze(wave: &Waveform, cfg: &VocoderConfig) -> Result<AcousticTrack, VocoderError> {
    cfg.validate()?;
    wave.validate(cfg.frame.sample_rate)?;
    let f0 = estimate_f0(wave, cfg)?;
    let plan = StftPlan::new(cfg.frame)?;
    let env = envelope::estimate_envelope_with(&plan, wave, &f0, cfg)?;
    let mc = MelCepstrum::new(cfg.frame.n_bins(), cfg.mcep_order, cfg.warp);
    let mcep = mc.from_envelope(env.view())?;
    let bap = estimate_band_aperiodicity(wave, &f0, cfg)?;
    let lf0 = track::interpolate_lf0(&f0, cfg.default_lf0());
    Ok(AcousticTrack {
        mcep,
        bap,
        lf0,
        vuv: f0.vuv.clone(),
    })
}

/// Vocoder-encoded-decoded signal: `synthesize(analyze(wave))`, trimmed or
/// padded to the input length.
pub fn encode_decode(
    wave: &Waveform,
    cfg: &VocoderConfig,
    seed: u64,
) -> Result<Waveform, VocoderError> {
    let track = analyze(wave, cfg)?;
    Ok(synthesize(&track, cfg, seed)?.fit_length(wave.len()))
}
