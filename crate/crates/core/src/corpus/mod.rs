//! WAV ingestion, noisy mixtures, manifests and the on-disk feature store.

mod manifest;
mod mix;
mod store;
mod synth;
mod wav;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::binio::BinError;
use crate::dsp::DspError;
use crate::features::FeatureError;
use crate::vocoder::VocoderError;

pub use manifest::{
    build_manifest, render_mixture, utt_id_for, Manifest, MixtureSpec, Split, SplitCounts,
};
pub use mix::{mix, Mixture, MIX_GAIN};
pub use store::{
    load_matrix, prepare_features, read_matrix, save_matrix, write_matrix, FeatureStore,
    PrepareReport, Role, StoreMeta,
};
pub use synth::{write_desk_corpus, DeskCorpus, DeskCorpusConfig};
pub use wav::{load_wav, load_wav_channels, save_wav, wav_info};

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: unsupported {what} ({found}); expected 16-bit PCM mono at 16 kHz")]
    WavFormat {
        path: PathBuf,
        what: &'static str,
        found: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {0}")]
    Manifest(String),
    #[error("degenerate mixture: {0}")]
    DegenerateMixture(String),
    #[error("need {needed} {what}, found {found}")]
    InsufficientFiles {
        what: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("store {0}")]
    Store(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Vocoder(#[from] VocoderError),
    #[error(transparent)]
    Bin(#[from] BinError),
}

impl CorpusError {
    pub(crate) fn wav(path: &Path, source: hound::Error) -> Self {
        match source {
            hound::Error::IoError(e) => Self::io(path, e),
            source => Self::Wav {
                path: path.to_path_buf(),
                source,
            },
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// All `.wav` files under `dir`, recursively, in byte order of their paths.
pub fn find_wavs(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| CorpusError::io(&d, e))? {
            let path = entry.map_err(|e| CorpusError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}
