use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{build_manifest, write_desk_corpus, DeskCorpusConfig, SplitCounts};
use crate::dsp::{FrameConfig, StftPlan, Waveform, SAMPLE_RATE};
use crate::metrics::{f0_rmse_corr, mcd, stoi};
use crate::nnet::{gradient_check, load_checkpoint, save_checkpoint, Model, ModelConfig, ModelKind};
use crate::signals::{self, SpeakerProfile};
use crate::vocoder::{analyze, encode_decode, VocoderConfig};

pub struct SelftestOutcome {
    pub checks: Vec<(&'static str, Result<(), String>)>,
}

impl SelftestOutcome {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|(_, r)| r.is_err()).count()
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradients(kind: ModelKind, trials: u64) -> Result<(), String> {
    for seed in 0..trials {
        let r = gradient_check(kind, seed).map_err(|e| e.to_string())?;
        ensure(r.max_rel_error < 1e-4, || {
            format!("seed {seed}: relative error {:.3e}", r.max_rel_error)
        })?;
    }
    Ok(())
}

fn stft_round_trip() -> Result<(), String> {
    let cfg = FrameConfig::default();
    let plan = StftPlan::new(cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for trial in 0..10 {
        let len = rng.random_range(3 * cfg.window_len..20_000);
        let x = Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), SAMPLE_RATE);
        let y = plan
            .istft(&plan.stft(&x).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let w = cfg.window_len;
        let (a, b) = (&x.samples[w..len - w], &y.samples[w..len - w]);
        let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = a.iter().map(|p| p * p).sum();
        let err = (num / den).sqrt();
        ensure(err < 1e-6, || format!("trial {trial}: relative error {err:.3e}"))?;
    }
    Ok(())
}

fn scratch_dir(tag: &str) -> Result<std::path::PathBuf, String> {
    let d = std::env::temp_dir().join(format!("parasynth-selftest-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&d).map_err(|e| format!("{}: {e}", d.display()))?;
    Ok(d)
}

fn checkpoint_round_trip() -> Result<(), String> {
    let dir = scratch_dir("ckpt")?;
    let result = (|| {
        for kind in [ModelKind::Feedforward, ModelKind::Recurrent] {
            let mut cfg = match kind {
                ModelKind::Feedforward => ModelConfig::feedforward(6, 3),
                ModelKind::Recurrent => ModelConfig::recurrent(6, 3),
            };
            cfg.hidden_width = 8;
            cfg.seed = 5;
            let m = Model::new(cfg).map_err(|e| e.to_string())?;
            let p = dir.join("m.pvc");
            save_checkpoint(&m, &p).map_err(|e| e.to_string())?;
            let back = load_checkpoint(&p).map_err(|e| e.to_string())?;
            let x = Array2::from_shape_fn((7, 6), |(t, d)| ((t * 6 + d) as f64 * 0.37).sin());
            let (a, b) = (m.predict(x.view()), back.predict(x.view()));
            ensure(a.ok() == b.ok(), || format!("{kind:?} predictions differ after reload"))?;
        }
        Ok(())
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result
}

fn manifest_determinism() -> Result<(), String> {
    let dir = scratch_dir("mix")?;
    let result = (|| {
        let cfg = DeskCorpusConfig {
            utterances_per_speaker: 4,
            secs: 0.5,
            noise_files: 2,
            noise_secs: 1.0,
            ..DeskCorpusConfig::default()
        };
        let c = write_desk_corpus(&dir, &cfg).map_err(|e| e.to_string())?;
        let counts = SplitCounts { train: 4, dev: 2, test: 2 };
        let a = build_manifest(&c.clean_dir, &c.noise_dir, 7, counts).map_err(|e| e.to_string())?;
        let b = build_manifest(&c.clean_dir, &c.noise_dir, 7, counts).map_err(|e| e.to_string())?;
        ensure(a == b, || "two builds with the same seed differ".into())
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result
}

fn mcd_oracle() -> Result<(), String> {
    let a = Array2::from_shape_fn((4, 60), |(t, d)| (t * d) as f64 * 0.01);
    let mut b = a.clone();
    b.column_mut(7).mapv_inplace(|v| v + 1.0);
    let v = mcd(a.view(), b.view()).map_err(|e| e.to_string())?;
    let want = 10.0 / std::f64::consts::LN_10 * 2f64.sqrt();
    ensure((v - want).abs() < 1e-9, || format!("{v} vs {want}"))
}

fn stoi_identity() -> Result<(), String> {
    let x = signals::vowel_sequence(&mut ChaCha8Rng::seed_from_u64(1), &SpeakerProfile::male(), 1.5);
    let s = stoi(&x, &x).map_err(|e| e.to_string())?;
    ensure((s - 1.0).abs() < 1e-6, || format!("stoi(x, x) = {s}"))?;
    let g = stoi(&x, &x.scaled(0.5)).map_err(|e| e.to_string())?;
    ensure((g - 1.0).abs() < 1e-6, || format!("stoi(x, x/2) = {g}"))
}

fn vocoder_f0() -> Result<(), String> {
    let cfg = VocoderConfig::default();
    let hop = cfg.frame.hop_secs();
    for (seed, sp) in [(21, SpeakerProfile::female()), (22, SpeakerProfile::male())] {
        let x = signals::vowel_sequence(&mut ChaCha8Rng::seed_from_u64(seed), &sp, 1.5);
        let y = encode_decode(&x, &cfg, seed).map_err(|e| e.to_string())?;
        let a = analyze(&x, &cfg).map_err(|e| e.to_string())?.f0_track(hop);
        let b = analyze(&y, &cfg).map_err(|e| e.to_string())?.f0_track(hop);
        let (rmse, _) = f0_rmse_corr(&a, &b).map_err(|e| e.to_string())?;
        ensure(rmse < 2.0, || format!("{}: F0 RMSE {rmse:.2} Hz", sp.name))?;
    }
    Ok(())
}

/// Gradient checks, round trips and metric oracles. `quick` drops the
/// vocoder and corpus checks and runs fewer gradient trials.
pub fn selftest(quick: bool) -> SelftestOutcome {
    let trials = if quick { 4 } else { 20 };
    let mut checks: Vec<(&'static str, Result<(), String>)> = vec![
        ("feedforward gradients", gradients(ModelKind::Feedforward, trials)),
        ("recurrent gradients", gradients(ModelKind::Recurrent, trials)),
        ("stft round trip", stft_round_trip()),
        ("checkpoint round trip", checkpoint_round_trip()),
        ("mcd oracle", mcd_oracle()),
        ("stoi identity and gain", stoi_identity()),
    ];
    if !quick {
        checks.push(("manifest determinism", manifest_determinism()));
        checks.push(("vocoder f0 fidelity", vocoder_f0()));
    }
    SelftestOutcome { checks }
}
