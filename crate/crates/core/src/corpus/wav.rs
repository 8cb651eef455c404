use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::CorpusError;
use crate::dsp::{Waveform, SAMPLE_RATE};

const SCALE: f64 = 32768.0;

fn open(path: &Path) -> Result<(WavReader<std::io::BufReader<std::fs::File>>, WavSpec), CorpusError> {
    let reader = WavReader::open(path).map_err(|e| CorpusError::wav(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(CorpusError::WavFormat {
            path: path.to_path_buf(),
            what: "encoding",
            found: format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample),
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(CorpusError::WavFormat {
            path: path.to_path_buf(),
            what: "sample rate",
            found: format!("{} Hz", spec.sample_rate),
        });
    }
    Ok((reader, spec))
}

/// Every channel of a 16-bit PCM, 16 kHz file as its own waveform.
pub fn load_wav_channels(path: &Path) -> Result<Vec<Waveform>, CorpusError> {
    let (mut reader, spec) = open(path)?;
    let ch = spec.channels as usize;
    let mut out = vec![Vec::with_capacity(reader.len() as usize / ch.max(1)); ch];
    for (i, s) in reader.samples::<i16>().enumerate() {
        let s = s.map_err(|e| CorpusError::wav(path, e))?;
        out[i % ch].push(s as f64 / SCALE);
    }
    Ok(out.into_iter().map(|v| Waveform::new(v, spec.sample_rate)).collect())
}

/// A mono 16-bit PCM, 16 kHz file scaled to `[-1, 1)`.
pub fn load_wav(path: &Path) -> Result<Waveform, CorpusError> {
    let (_, spec) = open(path)?;
    if spec.channels != 1 {
        return Err(CorpusError::WavFormat {
            path: path.to_path_buf(),
            what: "channel count",
            found: spec.channels.to_string(),
        });
    }
    Ok(load_wav_channels(path)?.remove(0))
}

/// Number of channels and frames of a WAV file, read from its header.
pub fn wav_info(path: &Path) -> Result<(u16, u32), CorpusError> {
    let (reader, spec) = open(path)?;
    Ok((spec.channels, reader.duration()))
}

/// Writes mono 16-bit PCM, rounding and saturating.
pub fn save_wav(path: &Path, wave: &Waveform) -> Result<(), CorpusError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| CorpusError::wav(path, e))?;
    for &s in &wave.samples {
        let q = (s * SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        w.write_sample(q).map_err(|e| CorpusError::wav(path, e))?;
    }
    w.finalize().map_err(|e| CorpusError::wav(path, e))?;
    Ok(())
}
