//! Enhancement systems: parametric resynthesis, VED, oracle Wiener mask,
//! DNN-IRM and the noisy passthrough.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{render_mixture, save_wav, CorpusError, Manifest, MixtureSpec, Split};
use crate::dsp::{DspError, FrameConfig, MelFilterbank, Spectrogram, StftPlan, Waveform};
use crate::features::{
    disassemble_targets, FeatureConfig, FeatureError, InputExtractor, Normalizer, ParamGen, TARGET_DIM,
};
use crate::nnet::{Model, NnetError};
use crate::vocoder::{encode_decode, synthesize, AcousticTrack, VocoderConfig, VocoderError};

/// Peak every system output is limited to.
pub const OUTPUT_PEAK: f64 = 0.99;

#[derive(Error, Debug)]
pub enum EnhanceError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration mismatch: {0}")]
    Config(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Vocoder(#[from] VocoderError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Pr,
    PrClean,
    Ved,
    Owm,
    DnnIrm,
    NoisyPassthrough,
}

impl SystemKind {
    pub const ALL: [SystemKind; 6] = [
        SystemKind::Pr,
        SystemKind::PrClean,
        SystemKind::Ved,
        SystemKind::Owm,
        SystemKind::DnnIrm,
        SystemKind::NoisyPassthrough,
    ];

    /// Name used in output file names and reports.
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Pr => "pr",
            SystemKind::PrClean => "pr_clean",
            SystemKind::Ved => "ved",
            SystemKind::Owm => "owm",
            SystemKind::DnnIrm => "dnn_irm",
            SystemKind::NoisyPassthrough => "noisy",
        }
    }

    /// Whether the system reads the clean signal rather than the mixture.
    pub fn uses_clean_input(self) -> bool {
        matches!(self, SystemKind::PrClean | SystemKind::Ved)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown system {s:?}"))
    }
}

/// Time-frequency gains in `[0, 1]`, one row per STFT frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub values: Array2<f64>,
    pub config: FrameConfig,
}

fn same_shape(a: &Spectrogram, b: &Spectrogram) -> Result<(), EnhanceError> {
    if a.frames.dim() != b.frames.dim() {
        return Err(EnhanceError::Shape(format!(
            "spectrograms {:?} and {:?}",
            a.frames.dim(),
            b.frames.dim()
        )));
    }
    Ok(())
}

/// `|S|^2 / (|S|^2 + |N|^2)` per bin; bins where both vanish get 0.
pub fn oracle_wiener_mask(clean: &Spectrogram, noise: &Spectrogram) -> Result<Mask, EnhanceError> {
    same_shape(clean, noise)?;
    let values = Zip::from(&clean.frames).and(&noise.frames).map_collect(|s, n| {
        let (ps, pn) = (s.norm_sqr(), n.norm_sqr());
        if ps + pn > 0.0 {
            ps / (ps + pn)
        } else {
            0.0
        }
    });
    Ok(Mask {
        values,
        config: clean.config,
    })
}

/// Scales the noisy magnitudes by the mask, keeps the noisy phase and
/// inverts the STFT.
pub fn apply_mask(noisy: &Spectrogram, mask: &Mask) -> Result<Waveform, EnhanceError> {
    if noisy.frames.dim() != mask.values.dim() {
        return Err(EnhanceError::Shape(format!(
            "mask {:?} for spectrogram {:?}",
            mask.values.dim(),
            noisy.frames.dim()
        )));
    }
    let mut spec = noisy.clone();
    Zip::from(&mut spec.frames)
        .and(&mask.values)
        .for_each(|c, &m| *c *= m.clamp(0.0, 1.0));
    Ok(StftPlan::new(noisy.config)?.istft(&spec)?)
}

/// Mel-domain ratio mask `mel(|S|^2) / (mel(|S|^2) + mel(|N|^2))`, the
/// DNN-IRM training target.
pub fn irm_training_targets(
    clean: &Spectrogram,
    noise: &Spectrogram,
    fb: &MelFilterbank,
) -> Result<Array2<f64>, EnhanceError> {
    same_shape(clean, noise)?;
    let s = fb.apply_power(clean.power().view())?;
    let n = fb.apply_power(noise.power().view())?;
    Ok(Zip::from(&s).and(&n).map_collect(|&s, &n| {
        if s + n > 0.0 {
            (s / (s + n)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }))
}

/// Linear-frequency mask from a mel-domain one.
pub fn expand_mel_mask(mel: &Array2<f64>, fb: &MelFilterbank, config: FrameConfig) -> Result<Mask, EnhanceError> {
    let values = fb.expand(mel.view(), config.bin_hz())?.mapv(|v| v.clamp(0.0, 1.0));
    Ok(Mask { values, config })
}

/// Synthesis seed of an utterance, independent of processing order.
pub fn utterance_seed(seed: u64, utt_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(utt_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest is 32 bytes"))
}

/// Vocoder-encoded-decoded speech.
pub fn ved(wave: &Waveform, cfg: &VocoderConfig, seed: u64) -> Result<Waveform, EnhanceError> {
    Ok(encode_decode(wave, cfg, seed)?.limit_peak(OUTPUT_PEAK))
}

/// Oracle Wiener mask computed from the mixture's own speech and noise.
pub fn owm_enhance(
    clean: &Waveform,
    noise: &Waveform,
    noisy: &Waveform,
    frame: FrameConfig,
) -> Result<Waveform, EnhanceError> {
    let plan = StftPlan::new(frame)?;
    let mask = oracle_wiener_mask(&plan.stft(clean)?, &plan.stft(noise)?)?;
    Ok(apply_mask(&plan.stft(noisy)?, &mask)?
        .fit_length(noisy.len())
        .limit_peak(OUTPUT_PEAK))
}

/// A parametric-resynthesis model with its normalizers.
#[derive(Debug, Clone)]
pub struct PrSystem {
    pub model: Model,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    pub features: FeatureConfig,
    pub vocoder: VocoderConfig,
    pub param_gen: ParamGen,
}

impl PrSystem {
    pub fn new(
        model: Model,
        input_norm: Normalizer,
        target_norm: Normalizer,
        features: FeatureConfig,
        param_gen: ParamGen,
    ) -> Result<Self, EnhanceError> {
        let (i, o) = (model.config.input_dim, model.config.output_dim);
        if i != features.input_dim() || o != TARGET_DIM {
            return Err(EnhanceError::Config(format!(
                "model maps {i} -> {o}, features need {} -> {TARGET_DIM}",
                features.input_dim()
            )));
        }
        if input_norm.dim() != i || target_norm.dim() != o {
            return Err(EnhanceError::Config(format!(
                "normalizers of width {} and {} for a {i} -> {o} model",
                input_norm.dim(),
                target_norm.dim()
            )));
        }
        let vocoder = crate::features::vocoder_config_for(&features);
        Ok(Self {
            model,
            input_norm,
            target_norm,
            features,
            vocoder,
            param_gen,
        })
    }

    /// Normalized network input of a waveform.
    pub fn input(&self, wave: &Waveform) -> Result<Array2<f64>, EnhanceError> {
        let x = InputExtractor::new(&self.features)?.extract(wave)?;
        Ok(self.input_norm.apply(x.view())?)
    }

    /// Predicted vocoder parameters.
    pub fn predict_track(&self, wave: &Waveform) -> Result<AcousticTrack, EnhanceError> {
        let pred = self.model.predict(self.input(wave)?.view())?;
        Ok(disassemble_targets(pred.view(), &self.target_norm, self.param_gen)?)
    }

    /// Resynthesizes a track at the given output length.
    pub fn resynthesize(&self, track: &AcousticTrack, len: usize, seed: u64) -> Result<Waveform, EnhanceError> {
        Ok(synthesize(track, &self.vocoder, seed)?
            .fit_length(len)
            .limit_peak(OUTPUT_PEAK))
    }

    pub fn enhance(&self, wave: &Waveform, seed: u64) -> Result<Waveform, EnhanceError> {
        let track = self.predict_track(wave)?;
        self.resynthesize(&track, wave.len(), seed)
    }
}

/// A mel-domain mask predictor.
#[derive(Debug, Clone)]
pub struct IrmSystem {
    pub model: Model,
    pub input_norm: Normalizer,
    pub features: FeatureConfig,
}

impl IrmSystem {
    pub fn new(model: Model, input_norm: Normalizer, features: FeatureConfig) -> Result<Self, EnhanceError> {
        let (i, o) = (model.config.input_dim, model.config.output_dim);
        if i != features.input_dim() || o != features.n_mels || input_norm.dim() != i {
            return Err(EnhanceError::Config(format!(
                "mask model maps {i} -> {o}, features need {} -> {}",
                features.input_dim(),
                features.n_mels
            )));
        }
        Ok(Self {
            model,
            input_norm,
            features,
        })
    }

    pub fn predict_mask(&self, noisy: &Waveform) -> Result<Mask, EnhanceError> {
        let ex = InputExtractor::new(&self.features)?;
        let x = self.input_norm.apply(ex.extract(noisy)?.view())?;
        let mel = self.model.predict(x.view())?.mapv(|v| v.clamp(0.0, 1.0));
        expand_mel_mask(&mel, ex.filterbank(), self.features.frame)
    }

    pub fn enhance(&self, noisy: &Waveform) -> Result<Waveform, EnhanceError> {
        let mask = self.predict_mask(noisy)?;
        let spec = StftPlan::new(self.features.frame)?.stft(noisy)?;
        Ok(apply_mask(&spec, &mask)?
            .fit_length(noisy.len())
            .limit_peak(OUTPUT_PEAK))
    }
}

/// One runnable system.
#[derive(Debug, Clone)]
pub enum Enhancer {
    Pr(PrSystem),
    PrClean(PrSystem),
    Ved(VocoderConfig),
    Owm(FrameConfig),
    DnnIrm(IrmSystem),
    NoisyPassthrough,
}

impl Enhancer {
    pub fn kind(&self) -> SystemKind {
        match self {
            Enhancer::Pr(_) => SystemKind::Pr,
            Enhancer::PrClean(_) => SystemKind::PrClean,
            Enhancer::Ved(_) => SystemKind::Ved,
            Enhancer::Owm(_) => SystemKind::Owm,
            Enhancer::DnnIrm(_) => SystemKind::DnnIrm,
            Enhancer::NoisyPassthrough => SystemKind::NoisyPassthrough,
        }
    }

    /// Output for one manifest entry.
    pub fn run(&self, entry: &MixtureSpec, seed: u64) -> Result<Waveform, EnhanceError> {
        let (clean, m) = render_mixture(entry)?;
        let seed = utterance_seed(seed, &entry.utt_id);
        match self {
            Enhancer::Pr(s) => s.enhance(&m.noisy, seed),
            Enhancer::PrClean(s) => s.enhance(&clean, seed),
            Enhancer::Ved(cfg) => ved(&clean, cfg, seed),
            Enhancer::Owm(frame) => owm_enhance(
                &clean.scaled(entry.gain),
                &m.noise_segment.scaled(entry.gain),
                &m.noisy,
                *frame,
            ),
            Enhancer::DnnIrm(s) => s.enhance(&m.noisy),
            Enhancer::NoisyPassthrough => Ok(m.noisy.limit_peak(OUTPUT_PEAK)),
        }
    }
}

/// `{dir}/{utt_id}.{system}.wav`.
pub fn output_path(dir: &Path, utt_id: &str, kind: SystemKind) -> PathBuf {
    dir.join(format!("{utt_id}.{}.wav", kind.name()))
}

/// Runs a system over one split and writes its outputs; returns the paths
/// in manifest order.
pub fn enhance_split(
    manifest: &Manifest,
    split: Split,
    system: &Enhancer,
    out_dir: &Path,
    seed: u64,
    jobs: usize,
) -> Result<Vec<PathBuf>, EnhanceError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))?;
    let entries: Vec<&MixtureSpec> = manifest.split(split).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EnhanceError::Config(e.to_string()))?;
    pool.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let wave = system.run(e, seed)?;
                let path = output_path(out_dir, &e.utt_id, system.kind());
                save_wav(&path, &wave)?;
                Ok(path)
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use crate::features::{assemble_targets, fit_target_normalizer, vocoder_config_for};
    use crate::nnet::{ModelConfig, ModelKind, OutputActivation, Precision};
    use crate::signals::{self, NoiseColor, SpeakerProfile};
    use crate::vocoder::analyze;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_of(values: &[f64]) -> Spectrogram {
        let mut s = Spectrogram::zeros(1, 80, FrameConfig::default());
        for (k, &v) in values.iter().enumerate() {
            s.frames[[0, k]] = Complex64::new(v, 0.0);
        }
        s
    }

    #[test]
    fn wiener_mask_examples() {
        let s = spec_of(&[1.0, 3f64.sqrt(), 0.0, 2.0]);
        let n = spec_of(&[-1.0, 1.0, 0.0, 0.0]);
        let m = oracle_wiener_mask(&s, &n).unwrap();
        assert_eq!(m.values[[0, 0]], 0.5);
        assert!((m.values[[0, 1]] - 0.75).abs() < 1e-12);
        assert_eq!(m.values[[0, 2]], 0.0);
        assert_eq!(m.values[[0, 3]], 1.0);
        let bad = Spectrogram::zeros(2, 80, FrameConfig::default());
        assert!(matches!(oracle_wiener_mask(&s, &bad), Err(EnhanceError::Shape(_))));
    }

    #[test]
    fn identity_and_zero_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = signals::white_noise(&mut rng, 8000, 0.3, SAMPLE_RATE);
        let plan = StftPlan::new(FrameConfig::default()).unwrap();
        let spec = plan.stft(&x).unwrap();
        let ones = Mask {
            values: Array2::ones(spec.frames.dim()),
            config: spec.config,
        };
        let y = apply_mask(&spec, &ones).unwrap();
        let interior = 1024..x.len() - 1024;
        let err = interior.clone().map(|i| (y.samples[i] - x.samples[i]).abs()).fold(0.0, f64::max);
        let peak = interior.map(|i| x.samples[i].abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6 * peak, "{err}");
        let zeros = Mask {
            values: Array2::zeros(spec.frames.dim()),
            config: spec.config,
        };
        assert!(apply_mask(&spec, &zeros).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn irm_targets_at_the_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = FeatureConfig::default();
        let ex = InputExtractor::new(&cfg).unwrap();
        let speech = signals::colored_noise(&mut rng, NoiseColor::Pink, 4000, 0.1, SAMPLE_RATE);
        let silent = Waveform::zeros(4000, SAMPLE_RATE);
        let s = ex.plan().stft(&speech).unwrap();
        let z = ex.plan().stft(&silent).unwrap();
        let clean_only = irm_training_targets(&s, &z, ex.filterbank()).unwrap();
        assert!(clean_only.iter().all(|&v| v >= 0.999));
        let noise_only = irm_training_targets(&z, &s, ex.filterbank()).unwrap();
        assert!(noise_only.iter().all(|&v| v <= 0.001));
    }

    #[test]
    fn mel_checkerboard_survives_expand_and_project() {
        // cells two bands wide; below 250 Hz a band spans under two bins
        let cfg = FeatureConfig::default();
        let fb = MelFilterbank::new(cfg.n_mels, &cfg.frame, cfg.f_min, cfg.f_max).unwrap();
        let board = Array2::from_shape_fn((6, cfg.n_mels), |(t, m)| ((t + m / 2) % 2) as f64);
        let lin = expand_mel_mask(&board, &fb, cfg.frame).unwrap();
        let back = fb.project_average(lin.values.view()).unwrap();
        for m in 0..cfg.n_mels {
            let err = (0..6).map(|t| (back[[t, m]] - board[[t, m]]).abs()).fold(0.0, f64::max);
            let tol = if fb.centers_hz()[m] > 250.0 { 0.2 } else { 0.25 };
            assert!(err < tol, "band {m}: {err}");
        }
    }

    #[test]
    fn owm_improves_on_a_zero_db_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clean = signals::vowel_sequence(&mut rng, &SpeakerProfile::male(), 1.0);
        let noise = signals::white_noise(&mut rng, clean.len(), 1.0, SAMPLE_RATE);
        let noise = noise.scaled(clean.rms() / noise.rms());
        let noisy = Waveform::new(
            clean.samples.iter().zip(&noise.samples).map(|(a, b)| a + b).collect(),
            SAMPLE_RATE,
        );
        let out = owm_enhance(&clean, &noise, &noisy, FrameConfig::default()).unwrap();
        assert_eq!(out.len(), noisy.len());
        let err = |y: &Waveform| -> f64 { y.samples.iter().zip(&clean.samples).map(|(a, b)| (a - b).powi(2)).sum() };
        assert!(err(&out) < 0.5 * err(&noisy));
        assert!(out.peak() <= OUTPUT_PEAK);
    }

    fn truth_system(wave: &Waveform) -> (PrSystem, Array2<f64>) {
        let fc = FeatureConfig::default();
        let targets = assemble_targets(&analyze(wave, &vocoder_config_for(&fc)).unwrap()).unwrap();
        let norm = fit_target_normalizer(std::iter::once(targets.view())).unwrap();
        let mut mc = ModelConfig::feedforward(fc.input_dim(), TARGET_DIM);
        mc.hidden_layers = 1;
        mc.hidden_width = 4;
        let model = Model::new(mc).unwrap();
        let sys = PrSystem::new(
            model,
            Normalizer::identity(fc.input_dim()),
            norm.clone(),
            fc,
            ParamGen::Static,
        )
        .unwrap();
        (sys, norm.apply(targets.view()).unwrap())
    }

    #[test]
    fn ground_truth_targets_reproduce_ved() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let wave = signals::vowel_sequence(&mut rng, &SpeakerProfile::female(), 0.8);
        let (sys, truth) = truth_system(&wave);
        let track = disassemble_targets(truth.view(), &sys.target_norm, ParamGen::Static).unwrap();
        let via_pr = sys.resynthesize(&track, wave.len(), 9).unwrap();
        let direct = ved(&wave, &sys.vocoder, 9).unwrap();
        let d = via_pr.samples.iter().zip(&direct.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-3, "{d}");
        assert_eq!(via_pr.len(), wave.len());
    }

    #[test]
    fn silent_stretches_stay_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let speech = signals::vowel_sequence(&mut rng, &SpeakerProfile::male(), 0.6);
        let pad = vec![0.0; 4800];
        let samples: Vec<f64> = pad.iter().chain(&speech.samples).chain(&pad).copied().collect();
        let wave = Waveform::new(samples, SAMPLE_RATE);
        let (sys, truth) = truth_system(&wave);
        let track = disassemble_targets(truth.view(), &sys.target_norm, ParamGen::Static).unwrap();
        let out = sys.resynthesize(&track, wave.len(), 2).unwrap();
        let hop = sys.features.frame.hop;
        let mut checked = 0;
        for t in 0..track.n_frames() {
            if track.vuv[t] || track.mcep[[t, 0]] >= crate::vocoder::SILENCE_LOG_POWER {
                continue;
            }
            let lo = (t * hop).saturating_sub(hop / 2);
            let hi = (lo + hop).min(out.len());
            let seg = &out.samples[lo..hi];
            let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64).sqrt();
            assert!(rms < 1e-3, "frame {t}: rms {rms}");
            checked += 1;
        }
        assert!(checked >= 80, "{checked}");
    }

    #[test]
    fn pr_output_is_deterministic_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let wave = signals::vowel_sequence(&mut rng, &SpeakerProfile::male(), 0.5);
        let (sys, _) = truth_system(&wave);
        let a = sys.enhance(&wave, 3).unwrap();
        assert_eq!(a, sys.enhance(&wave, 3).unwrap());
        assert!(a.peak() <= OUTPUT_PEAK);
        assert!(a.len().abs_diff(wave.len()) <= sys.features.frame.hop);
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let fc = FeatureConfig::default();
        let mut mc = ModelConfig::feedforward(fc.input_dim() - 1, TARGET_DIM);
        mc.hidden_layers = 0;
        let model = Model::new(mc).unwrap();
        let r = PrSystem::new(
            model,
            Normalizer::identity(fc.input_dim() - 1),
            Normalizer::identity(TARGET_DIM),
            fc.clone(),
            ParamGen::Mlpg,
        );
        assert!(matches!(r, Err(EnhanceError::Config(_))));
        let irm = ModelConfig {
            kind: ModelKind::Feedforward,
            hidden_layers: 0,
            hidden_width: 1,
            input_dim: fc.input_dim(),
            output_dim: 3,
            output: OutputActivation::Sigmoid,
            precision: Precision::F32,
            seed: 0,
        };
        let r = IrmSystem::new(Model::new(irm).unwrap(), Normalizer::identity(fc.input_dim()), fc);
        assert!(matches!(r, Err(EnhanceError::Config(_))));
    }

    #[test]
    fn system_names_round_trip() {
        for k in SystemKind::ALL {
            assert_eq!(k.name().parse::<SystemKind>().unwrap(), k);
        }
        assert_ne!(utterance_seed(1, "a"), utterance_seed(1, "b"));
    }
}
