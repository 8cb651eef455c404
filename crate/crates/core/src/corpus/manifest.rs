use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{find_wavs, load_wav, load_wav_channels, mix, wav_info, CorpusError, Mixture, MIX_GAIN};
use crate::dsp::Waveform;

/// Offsets redrawn before a silent noise segment is reported.
const MAX_REDRAWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

impl FromStr for SplitCounts {
    type Err = String;

    /// `"1000,66,66"`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [train, dev, test] => Ok(Self { train, dev, test }),
            _ => Err(format!("expected train,dev,test counts, got {s:?}")),
        }
    }
}

/// One noisy mixture, fully determined by its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub utt_id: String,
    pub split: Split,
    pub clean_path: PathBuf,
    pub noise_path: PathBuf,
    /// Channel of `noise_path`; each channel is its own recording.
    pub noise_channel: u16,
    pub noise_offset: usize,
    pub gain: f64,
    pub snr_db: f64,
    pub clipped: bool,
    /// Seed of the manifest that produced the entry.
    pub seed: u64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(CorpusError::Manifest(format!("{}: gain {}", self.utt_id, self.gain)));
        }
        if !self.snr_db.is_finite() {
            return Err(CorpusError::Manifest(format!("{}: snr_db {}", self.utt_id, self.snr_db)));
        }
        Ok(())
    }

    /// Speaker label: the utterance id up to its first `_`, or the whole id.
    pub fn speaker(&self) -> &str {
        self.utt_id.split('_').next().unwrap_or(&self.utt_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// Train entries first, then dev, then test.
    pub entries: Vec<MixtureSpec>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &MixtureSpec> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn get(&self, utt_id: &str) -> Option<&MixtureSpec> {
        self.entries.iter().find(|e| e.utt_id == utt_id)
    }

    /// Distinct speakers, sorted.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.entries.iter().map(|e| e.speaker().to_string()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Entries of the given speakers only; the seed is kept.
    pub fn filter_speakers(&self, speakers: &[&str]) -> Manifest {
        Manifest {
            seed: self.seed,
            entries: self
                .entries
                .iter()
                .filter(|e| speakers.contains(&e.speaker()))
                .cloned()
                .collect(),
        }
    }

    /// Concatenates manifests; ids must stay unique.
    pub fn pooled(parts: &[Manifest]) -> Result<Manifest, CorpusError> {
        let mut entries: Vec<MixtureSpec> = parts.iter().flat_map(|m| m.entries.iter().cloned()).collect();
        entries.sort_by_key(|e| e.split);
        let m = Manifest {
            seed: parts.first().map_or(0, |m| m.seed),
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            e.validate()?;
            if !seen.insert(e.utt_id.as_str()) {
                return Err(CorpusError::Manifest(format!("duplicate utt_id {}", e.utt_id)));
            }
        }
        Ok(())
    }

    /// JSON lines, one entry per line.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), CorpusError> {
        let io = |e| CorpusError::Manifest(format!("write: {e}"));
        for e in &self.entries {
            let line = serde_json::to_string(e).map_err(|e| CorpusError::Manifest(e.to_string()))?;
            writeln!(w, "{line}").map_err(io)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Manifest, CorpusError> {
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| CorpusError::Manifest(format!("line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: MixtureSpec = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Manifest(format!("line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        let seed = entries.first().map_or(0, |e| e.seed);
        let m = Manifest { seed, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Manifest, CorpusError> {
        let f = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Manifest::read(std::io::BufReader::new(f))
    }
}

/// Relative path below `root` with separators turned into `_` and the
/// extension dropped: `female/0003.wav` becomes `female_0003`.
pub fn utt_id_for(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("_")
}

/// Seeded split of the clean files and a seeded noise recording and
/// offset per utterance. Generation is single-threaded and depends only on
/// the file contents and the seed.
pub fn build_manifest(
    clean_dir: &Path,
    noise_dir: &Path,
    seed: u64,
    counts: SplitCounts,
) -> Result<Manifest, CorpusError> {
    let clean = find_wavs(clean_dir)?;
    if clean.len() < counts.total() {
        return Err(CorpusError::InsufficientFiles {
            what: "clean files",
            needed: counts.total(),
            found: clean.len(),
        });
    }
    let mut noises: Vec<(PathBuf, u16, u32)> = Vec::new();
    for p in find_wavs(noise_dir)? {
        let (channels, frames) = wav_info(&p)?;
        if frames == 0 {
            continue;
        }
        noises.extend((0..channels).map(|c| (p.clone(), c, frames)));
    }
    if noises.is_empty() {
        return Err(CorpusError::InsufficientFiles {
            what: "noise recordings",
            needed: 1,
            found: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..clean.len()).collect();
    order.shuffle(&mut rng);
    let splits = std::iter::repeat_n(Split::Train, counts.train)
        .chain(std::iter::repeat_n(Split::Dev, counts.dev))
        .chain(std::iter::repeat_n(Split::Test, counts.test));

    let mut noise_cache: BTreeMap<PathBuf, Vec<Waveform>> = BTreeMap::new();
    let mut entries = Vec::with_capacity(counts.total());
    for (&ci, split) in order.iter().zip(splits) {
        let clean_path = clean[ci].clone();
        let wave = load_wav(&clean_path)?;
        let ni = rng.random_range(0..noises.len());
        let (noise_path, channel, frames) = noises[ni].clone();
        if !noise_cache.contains_key(&noise_path) {
            noise_cache.insert(noise_path.clone(), load_wav_channels(&noise_path)?);
        }
        let noise = &noise_cache[&noise_path][channel as usize];
        let mut drawn = None;
        for _ in 0..MAX_REDRAWS {
            let offset = rng.random_range(0..frames as usize);
            match mix(&wave, noise, offset, MIX_GAIN) {
                Ok(m) => {
                    drawn = Some((offset, m));
                    break;
                }
                Err(CorpusError::DegenerateMixture(msg)) if msg.contains("noise") => continue,
                Err(e) => return Err(e),
            }
        }
        let (noise_offset, m) = drawn.ok_or_else(|| {
            CorpusError::DegenerateMixture(format!(
                "{}: noise {} channel {channel} stays silent",
                clean_path.display(),
                noise_path.display()
            ))
        })?;
        entries.push(MixtureSpec {
            utt_id: utt_id_for(clean_dir, &clean_path),
            split,
            clean_path,
            noise_path,
            noise_channel: channel,
            noise_offset,
            gain: MIX_GAIN,
            snr_db: m.snr_db,
            clipped: m.clipped,
            seed,
        });
    }
    let m = Manifest { seed, entries };
    m.validate()?;
    Ok(m)
}

/// Clean signal and mixture of an entry.
pub fn render_mixture(entry: &MixtureSpec) -> Result<(Waveform, Mixture), CorpusError> {
    let clean = load_wav(&entry.clean_path)?;
    let mut channels = load_wav_channels(&entry.noise_path)?;
    let ch = entry.noise_channel as usize;
    if ch >= channels.len() {
        return Err(CorpusError::Manifest(format!(
            "{}: noise channel {ch} of {}",
            entry.utt_id,
            channels.len()
        )));
    }
    let noise = channels.swap_remove(ch);
    let m = mix(&clean, &noise, entry.noise_offset, entry.gain)?;
    Ok((clean, m))
}
