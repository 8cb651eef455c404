use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{save_wav, CorpusError};
use crate::dsp::SAMPLE_RATE;
use crate::signals::{colored_noise, vowel_sequence, NoiseColor, SpeakerProfile};

/// A seeded synthetic stand-in for a clean speech corpus and a noise corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskCorpusConfig {
    pub speakers: Vec<SpeakerProfile>,
    pub utterances_per_speaker: usize,
    pub secs: f64,
    pub noise_files: usize,
    pub noise_secs: f64,
    /// Noise RMS is drawn uniformly from this range per file; speech RMS
    /// sits around 0.08.
    pub noise_rms: (f64, f64),
    pub seed: u64,
}

impl Default for DeskCorpusConfig {
    fn default() -> Self {
        Self {
            speakers: vec![SpeakerProfile::female(), SpeakerProfile::male()],
            utterances_per_speaker: 35,
            secs: 1.5,
            noise_files: 8,
            noise_secs: 6.0,
            noise_rms: (0.012, 0.05),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeskCorpus {
    pub clean_dir: PathBuf,
    pub noise_dir: PathBuf,
    pub clean_files: Vec<PathBuf>,
    pub noise_files: Vec<PathBuf>,
}

/// Writes `root/clean/{speaker}/{nnnn}.wav` and `root/noise/{nn}_{colour}.wav`.
pub fn write_desk_corpus(root: &Path, cfg: &DeskCorpusConfig) -> Result<DeskCorpus, CorpusError> {
    let clean_dir = root.join("clean");
    let noise_dir = root.join("noise");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clean_files = Vec::new();
    for sp in &cfg.speakers {
        let dir = clean_dir.join(&sp.name);
        std::fs::create_dir_all(&dir).map_err(|e| CorpusError::io(&dir, e))?;
        for i in 0..cfg.utterances_per_speaker {
            let path = dir.join(format!("{i:04}.wav"));
            save_wav(&path, &vowel_sequence(&mut rng, sp, cfg.secs))?;
            clean_files.push(path);
        }
    }
    std::fs::create_dir_all(&noise_dir).map_err(|e| CorpusError::io(&noise_dir, e))?;
    let n = (cfg.noise_secs * SAMPLE_RATE as f64) as usize;
    let mut noise_files = Vec::new();
    for k in 0..cfg.noise_files {
        let color = NoiseColor::ALL[k % NoiseColor::ALL.len()];
        let rms = rng.random_range(cfg.noise_rms.0..=cfg.noise_rms.1);
        let name = serde_json::to_value(color).expect("plain enum");
        let path = noise_dir.join(format!("{k:02}_{}.wav", name.as_str().unwrap_or("noise")));
        save_wav(&path, &colored_noise(&mut rng, color, n, rms, SAMPLE_RATE))?;
        noise_files.push(path);
    }
    Ok(DeskCorpus {
        clean_dir,
        noise_dir,
        clean_files,
        noise_files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_wav;

    #[test]
    fn writes_the_layout_deterministically() {
        let cfg = DeskCorpusConfig {
            utterances_per_speaker: 2,
            secs: 0.3,
            noise_files: 2,
            noise_secs: 0.5,
            ..DeskCorpusConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ca = write_desk_corpus(a.path(), &cfg).unwrap();
        let cb = write_desk_corpus(b.path(), &cfg).unwrap();
        assert_eq!(ca.clean_files.len(), 4);
        assert!(ca.clean_files[0].ends_with("clean/female/0000.wav"));
        assert!(ca.noise_files[1].ends_with("noise/01_pink.wav"));
        for (x, y) in ca.clean_files.iter().chain(&ca.noise_files).zip(cb.clean_files.iter().chain(&cb.noise_files)) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        assert_eq!(load_wav(&ca.noise_files[0]).unwrap().len(), 8000);
    }
}
