//! Model inputs and targets.
//!
//! Inputs are log-mel frames stacked with four neighbours on each side.
//! Targets are 199 columns per frame: mel-cepstrum, log-F0 and band
//! aperiodicity, each followed by its deltas and delta-deltas, and a final
//! voicing column.

mod deltas;
mod normalize;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::BinError;
use crate::dsp::{DspError, FrameConfig, MelFilterbank, StftPlan, Waveform};
use crate::vocoder::{AcousticTrack, VocoderConfig, VocoderError, BAP_DIM, MCEP_DIM};

pub use deltas::{compute_deltas, mlpg_smooth};
pub use normalize::{Normalizer, STD_FLOOR};

/// First column of the mel-cepstral block (statics, deltas, delta-deltas).
pub const MCEP_OFFSET: usize = 0;
pub const LF0_OFFSET: usize = MCEP_OFFSET + 3 * MCEP_DIM;
pub const BAP_OFFSET: usize = LF0_OFFSET + 3;
pub const VUV_COLUMN: usize = BAP_OFFSET + 3 * BAP_DIM;
pub const TARGET_DIM: usize = VUV_COLUMN + 1;
pub const CONTEXT_RADIUS: usize = 4;

#[derive(Error, Debug)]
pub enum FeatureError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Vocoder(#[from] VocoderError),
    #[error(transparent)]
    Bin(#[from] BinError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How statics are recovered from predicted targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGen {
    /// Read the static columns directly.
    Static,
    /// Maximum-likelihood parameter generation with the target variances.
    #[default]
    Mlpg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub frame: FrameConfig,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub context_radius: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            n_mels: 80,
            f_min: 0.0,
            f_max: 8000.0,
            context_radius: CONTEXT_RADIUS,
        }
    }
}

impl FeatureConfig {
    pub fn input_dim(&self) -> usize {
        self.n_mels * (2 * self.context_radius + 1)
    }
}

/// Reusable log-mel context extractor.
pub struct InputExtractor {
    plan: StftPlan,
    fb: MelFilterbank,
    radius: usize,
}

impl InputExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self, FeatureError> {
        Ok(Self {
            plan: StftPlan::new(cfg.frame)?,
            fb: MelFilterbank::new(cfg.n_mels, &cfg.frame, cfg.f_min, cfg.f_max)?,
            radius: cfg.context_radius,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.fb
    }

    pub fn plan(&self) -> &StftPlan {
        &self.plan
    }

    /// `T x n_mels` log-mel spectrum.
    pub fn log_mel(&self, wave: &Waveform) -> Result<Array2<f64>, FeatureError> {
        let spec = self.plan.stft(wave)?;
        Ok(crate::dsp::log_mel(&spec, &self.fb)?)
    }

    /// `T x (n_mels * (2 radius + 1))` context-stacked log-mel.
    pub fn extract(&self, wave: &Waveform) -> Result<Array2<f64>, FeatureError> {
        Ok(stack_context(self.log_mel(wave)?.view(), self.radius))
    }
}

/// Row `t` becomes rows `t - radius ..= t + radius` side by side, with the
/// first and last rows repeated past the edges.
pub fn stack_context(x: ArrayView2<f64>, radius: usize) -> Array2<f64> {
    let (t, d) = x.dim();
    let width = 2 * radius + 1;
    let mut out = Array2::zeros((t, d * width));
    if t == 0 {
        return out;
    }
    for i in 0..t {
        for k in 0..width {
            let src = (i + k).saturating_sub(radius).min(t - 1);
            out.slice_mut(s![i, k * d..(k + 1) * d]).assign(&x.row(src));
        }
    }
    out
}

fn with_deltas(x: ArrayView2<f64>) -> Array2<f64> {
    let (d, dd) = compute_deltas(x);
    concatenate![Axis(1), x, d.view(), dd.view()]
}

/// `T x 199` target matrix of an acoustic track.
pub fn assemble_targets(track: &AcousticTrack) -> Result<Array2<f64>, FeatureError> {
    track.validate()?;
    let lf0 = track.lf0.view().insert_axis(Axis(1));
    let vuv: Array1<f64> = track.vuv.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let out = concatenate![
        Axis(1),
        with_deltas(track.mcep.view()),
        with_deltas(lf0),
        with_deltas(track.bap.view()),
        vuv.view().insert_axis(Axis(1))
    ];
    debug_assert_eq!(out.ncols(), TARGET_DIM);
    Ok(out)
}

/// Target normalizer fitted on training targets; the voicing column is
/// left as is.
pub fn fit_target_normalizer<'a, I>(targets: I) -> Result<Normalizer, FeatureError>
where
    I: IntoIterator<Item = ArrayView2<'a, f64>> + Clone,
{
    Normalizer::fit(targets, &[VUV_COLUMN])
}

/// Log-F0 range enforced on recovered tracks.
pub const LF0_RANGE: (f64, f64) = (3.912_023_005_428_146, 6.309_918_278_226_516);

/// Denormalizes a `T x 199` prediction and recovers an acoustic track.
/// In [`ParamGen::Mlpg`] mode each stream is smoothed with the squared
/// target standard deviations as variances.
pub fn disassemble_targets(
    pred: ArrayView2<f64>,
    norm: &Normalizer,
    mode: ParamGen,
) -> Result<AcousticTrack, FeatureError> {
    if pred.ncols() != TARGET_DIM {
        return Err(FeatureError::Shape(format!(
            "prediction has {} columns, expected {TARGET_DIM}",
            pred.ncols()
        )));
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite("prediction"));
    }
    let x = norm.invert(pred)?;
    let stream = |offset: usize, dim: usize| -> Array2<f64> {
        let block = x.slice(s![.., offset..offset + 3 * dim]);
        match mode {
            ParamGen::Static => block.slice(s![.., 0..dim]).to_owned(),
            ParamGen::Mlpg => {
                let var: Vec<f64> = norm
                    .std
                    .slice(s![offset..offset + 3 * dim])
                    .iter()
                    .map(|s| s * s)
                    .collect();
                mlpg_smooth(block, &var)
            }
        }
    };
    let mcep = stream(MCEP_OFFSET, MCEP_DIM);
    let lf0 = stream(LF0_OFFSET, 1)
        .column(0)
        .mapv(|v| v.clamp(LF0_RANGE.0, LF0_RANGE.1));
    let bap = stream(BAP_OFFSET, BAP_DIM).mapv(|v| v.min(0.0));
    let vuv = x.column(VUV_COLUMN).iter().map(|&v| v > 0.5).collect();
    Ok(AcousticTrack {
        mcep,
        bap,
        lf0,
        vuv,
    })
}

/// Vocoder settings consistent with a feature configuration.
pub fn vocoder_config_for(cfg: &FeatureConfig) -> VocoderConfig {
    VocoderConfig {
        frame: cfg.frame,
        ..VocoderConfig::default()
    }
}
