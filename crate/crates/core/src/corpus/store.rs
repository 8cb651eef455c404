use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{render_mixture, CorpusError, Manifest, MixtureSpec, Split};
use crate::binio::{self, BinError};
use crate::features::{
    assemble_targets, fit_target_normalizer, stack_context, vocoder_config_for, FeatureConfig,
    InputExtractor, Normalizer,
};
use crate::nnet::{Dataset, Sequence};
use crate::vocoder::{analyze, VocoderConfig};

const STORE_VERSION: u32 = 1;
const META_FILE: &str = "store.json";
const MAX_DIM: usize = 1 << 24;

/// `PVM1`: magic, `u32` rows, `u32` cols, row-major `f32`.
pub fn write_matrix<W: Write>(w: &mut W, m: ArrayView2<f64>) -> Result<(), BinError> {
    binio::write_magic(w, b"PVM1")?;
    binio::write_u32(w, m.nrows() as u32)?;
    binio::write_u32(w, m.ncols() as u32)?;
    binio::write_f32s(w, m.iter().map(|&v| v as f32))?;
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<Array2<f64>, BinError> {
    binio::read_magic(r, b"PVM1")?;
    let rows = binio::read_u32(r, "rows")? as usize;
    let cols = binio::read_u32(r, "cols")? as usize;
    if rows.saturating_mul(cols) > MAX_DIM {
        return Err(BinError::Corrupt(format!("implausible matrix {rows}x{cols}")));
    }
    let data = binio::read_f32s(r, rows * cols, "matrix data")?;
    binio::expect_eof(r)?;
    Ok(Array2::from_shape_vec((rows, cols), data.into_iter().map(f64::from).collect())
        .expect("length checked"))
}

pub fn save_matrix(path: &Path, m: ArrayView2<f64>) -> Result<(), CorpusError> {
    let f = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_matrix(&mut w, m)?;
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Array2<f64>, CorpusError> {
    let f = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(read_matrix(&mut BufReader::new(f))?)
}

/// Per-utterance matrices of the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Noisy log-mel, `T x n_mels`, without context.
    Noisy,
    /// Clean log-mel, `T x n_mels`, without context.
    Clean,
    /// Clean vocoder targets, `T x 199`.
    Target,
    /// Mel-domain ideal ratio mask, `T x n_mels`.
    Irm,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Noisy, Role::Clean, Role::Target, Role::Irm];

    pub fn extension(self) -> &'static str {
        match self {
            Role::Noisy => "in",
            Role::Clean => "cin",
            Role::Target => "tgt",
            Role::Irm => "irm",
        }
    }

    fn normalizer_file(self) -> Option<&'static str> {
        match self {
            Role::Noisy => Some("input.pvn"),
            Role::Clean => Some("clean_input.pvn"),
            Role::Target => Some("target.pvn"),
            Role::Irm => None,
        }
    }
}

/// Contents of `store.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub version: u32,
    pub features: FeatureConfig,
    pub vocoder: VocoderConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub processed: usize,
    pub skipped: usize,
    /// `(utt_id, error)` for utterances that could not be prepared.
    pub failed: Vec<(String, String)>,
    pub normalizers_written: bool,
}

/// A prepared directory: `{split}/{utt_id}.{role}.pvm` plus normalizers.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub root: PathBuf,
    pub meta: StoreMeta,
}

impl FeatureStore {
    pub fn open(root: &Path) -> Result<Self, CorpusError> {
        let p = root.join(META_FILE);
        let raw = std::fs::read(&p).map_err(|e| CorpusError::io(&p, e))?;
        let meta: StoreMeta =
            serde_json::from_slice(&raw).map_err(|e| CorpusError::Store(format!("{}: {e}", p.display())))?;
        if meta.version != STORE_VERSION {
            return Err(CorpusError::Store(format!("version {} unsupported", meta.version)));
        }
        Ok(Self {
            root: root.to_path_buf(),
            meta,
        })
    }

    pub fn path(&self, split: Split, utt_id: &str, role: Role) -> PathBuf {
        matrix_path(&self.root, split, utt_id, role)
    }

    pub fn load(&self, entry: &MixtureSpec, role: Role) -> Result<Array2<f64>, CorpusError> {
        load_matrix(&self.path(entry.split, &entry.utt_id, role))
    }

    /// Normalizer of an input role (already widened to the context width)
    /// or of the targets. Masks are not normalized.
    pub fn normalizer(&self, role: Role) -> Result<Normalizer, CorpusError> {
        match role.normalizer_file() {
            Some(f) => Ok(Normalizer::load(&self.root.join(f))?),
            None => Ok(Normalizer::identity(self.meta.features.n_mels)),
        }
    }

    /// Stacked, normalized network input of one utterance.
    pub fn input(&self, entry: &MixtureSpec, role: Role, norm: &Normalizer) -> Result<Array2<f64>, CorpusError> {
        let x = stack_context(self.load(entry, role)?.view(), self.meta.features.context_radius);
        Ok(norm.apply(x.view())?)
    }

    /// Normalized inputs and targets of every entry of a split.
    pub fn sequences(
        &self,
        manifest: &Manifest,
        split: Split,
        input: Role,
        target: Role,
    ) -> Result<Vec<Sequence>, CorpusError> {
        let in_norm = self.normalizer(input)?;
        let tgt_norm = match target {
            Role::Target => Some(self.normalizer(Role::Target)?),
            _ => None,
        };
        manifest
            .split(split)
            .map(|e| {
                let x = self.input(e, input, &in_norm)?;
                let y = self.load(e, target)?;
                let y = match &tgt_norm {
                    Some(n) => n.apply(y.view())?,
                    None => y,
                };
                if x.nrows() != y.nrows() {
                    return Err(CorpusError::Store(format!(
                        "{}: {} input frames, {} target frames",
                        e.utt_id,
                        x.nrows(),
                        y.nrows()
                    )));
                }
                Ok(Sequence { input: x, target: y })
            })
            .collect()
    }

    /// Train and dev sequences for a network mapping `input` to `target`.
    pub fn dataset(&self, manifest: &Manifest, input: Role, target: Role) -> Result<Dataset, CorpusError> {
        Ok(Dataset {
            train: self.sequences(manifest, Split::Train, input, target)?,
            dev: self.sequences(manifest, Split::Dev, input, target)?,
        })
    }
}

fn matrix_path(root: &Path, split: Split, utt_id: &str, role: Role) -> PathBuf {
    root.join(split.as_str()).join(format!("{utt_id}.{}.pvm", role.extension()))
}

fn hash_path(root: &Path, split: Split, utt_id: &str) -> PathBuf {
    root.join(split.as_str()).join(format!("{utt_id}.sha256"))
}

fn file_digest(path: &Path) -> Result<String, CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

type Digests = BTreeMap<PathBuf, Result<String, String>>;

fn entry_key(meta_json: &[u8], entry: &MixtureSpec, digests: &Digests) -> Result<String, String> {
    let mut h = Sha256::new();
    h.update(meta_json);
    h.update(serde_json::to_vec(entry).expect("plain struct"));
    h.update(digests[&entry.clean_path].as_ref()?.as_bytes());
    h.update(digests[&entry.noise_path].as_ref()?.as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn prepare_one(
    root: &Path,
    entry: &MixtureSpec,
    ex: &InputExtractor,
    vcfg: &VocoderConfig,
) -> Result<(), CorpusError> {
    let (clean, m) = render_mixture(entry)?;
    let noisy_mel = ex.log_mel(&m.noisy)?;
    let clean_mel = ex.log_mel(&clean)?;
    let target = assemble_targets(&analyze(&clean, vcfg)?)?;
    let s = ex.plan().stft(&clean.scaled(entry.gain))?;
    let n = ex.plan().stft(&m.noise_segment.scaled(entry.gain))?;
    let irm = crate::enhance::irm_training_targets(&s, &n, ex.filterbank())
        .map_err(|e| CorpusError::Store(format!("{}: {e}", entry.utt_id)))?;
    let t = noisy_mel.nrows();
    if [clean_mel.nrows(), target.nrows(), irm.nrows()].iter().any(|&r| r != t) {
        return Err(CorpusError::Store(format!("{}: frame counts disagree", entry.utt_id)));
    }
    for (role, mat) in [
        (Role::Noisy, &noisy_mel),
        (Role::Clean, &clean_mel),
        (Role::Target, &target),
        (Role::Irm, &irm),
    ] {
        save_matrix(&matrix_path(root, entry.split, &entry.utt_id, role), mat.view())?;
    }
    Ok(())
}

/// Repeats each column statistic once per context frame.
fn widen(n: Normalizer, radius: usize) -> Normalizer {
    let k = 2 * radius + 1;
    let tile = |a: &Array1<f64>| -> Array1<f64> { a.iter().cycle().take(a.len() * k).copied().collect() };
    Normalizer {
        mean: tile(&n.mean),
        std: tile(&n.std),
        excluded: Vec::new(),
    }
}

/// Writes every entry's matrices under `root` and fits the normalizers on
/// the train split. Utterances whose inputs and settings are unchanged
/// since the last run are skipped, so an interrupted run resumes and a
/// repeated run does nothing. Failures are collected, not fatal.
///
/// Input normalizers are fitted on log-mel frames without context and
/// widened to the context width.
pub fn prepare_features(
    manifest: &Manifest,
    root: &Path,
    features: &FeatureConfig,
    jobs: usize,
) -> Result<PrepareReport, CorpusError> {
    manifest.validate()?;
    let meta = StoreMeta {
        version: STORE_VERSION,
        features: features.clone(),
        vocoder: vocoder_config_for(features),
    };
    let meta_json = serde_json::to_vec_pretty(&meta).expect("plain struct");
    for split in Split::ALL {
        let d = root.join(split.as_str());
        std::fs::create_dir_all(&d).map_err(|e| CorpusError::io(&d, e))?;
    }
    let meta_path = root.join(META_FILE);
    if std::fs::read(&meta_path).ok().as_deref() != Some(meta_json.as_slice()) {
        std::fs::write(&meta_path, &meta_json).map_err(|e| CorpusError::io(&meta_path, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CorpusError::Store(e.to_string()))?;
    let mut files: Vec<&PathBuf> = manifest
        .entries
        .iter()
        .flat_map(|e| [&e.clean_path, &e.noise_path])
        .collect();
    files.sort();
    files.dedup();
    let digests: Digests = pool.install(|| {
        files
            .par_iter()
            .map(|p| ((*p).clone(), file_digest(p).map_err(|e| e.to_string())))
            .collect()
    });

    let ex = InputExtractor::new(features)?;
    let vcfg = &meta.vocoder;
    let outcomes: Vec<Result<bool, String>> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let key = entry_key(&meta_json, e, &digests)?;
                let hp = hash_path(root, e.split, &e.utt_id);
                let complete = Role::ALL
                    .iter()
                    .all(|&r| matrix_path(root, e.split, &e.utt_id, r).is_file());
                if complete && std::fs::read_to_string(&hp).ok().as_deref() == Some(key.as_str()) {
                    return Ok(false);
                }
                let _ = std::fs::remove_file(&hp);
                prepare_one(root, e, &ex, vcfg)
                    .and_then(|_| std::fs::write(&hp, &key).map_err(|err| CorpusError::io(&hp, err)))
                    .map(|_| true)
                    .map_err(|err| err.to_string())
            })
            .collect()
    });

    let mut report = PrepareReport::default();
    for (e, o) in manifest.entries.iter().zip(outcomes) {
        match o {
            Ok(true) => report.processed += 1,
            Ok(false) => report.skipped += 1,
            Err(msg) => report.failed.push((e.utt_id.clone(), msg)),
        }
    }

    let norm_files = ["input.pvn", "clean_input.pvn", "target.pvn"];
    let norms_present = norm_files.iter().all(|f| root.join(f).is_file());
    if report.processed > 0 || !norms_present {
        let failed: std::collections::HashSet<&str> = report.failed.iter().map(|f| f.0.as_str()).collect();
        let train: Vec<&MixtureSpec> = manifest
            .split(Split::Train)
            .filter(|e| !failed.contains(e.utt_id.as_str()))
            .collect();
        let load_all = |role: Role| -> Result<Vec<Array2<f64>>, CorpusError> {
            train
                .iter()
                .map(|e| load_matrix(&matrix_path(root, e.split, &e.utt_id, role)))
                .collect()
        };
        for role in [Role::Noisy, Role::Clean] {
            let mats = load_all(role)?;
            let n = Normalizer::fit(mats.iter().map(|m| m.view()), &[])?;
            widen(n, features.context_radius).save(&root.join(role.normalizer_file().expect("input role")))?;
        }
        let mats = load_all(Role::Target)?;
        fit_target_normalizer(mats.iter().map(|m| m.view()))?.save(&root.join("target.pvn"))?;
        report.normalizers_written = true;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_manifest, write_desk_corpus, DeskCorpusConfig, SplitCounts};
    use crate::features::TARGET_DIM;

    #[test]
    fn matrix_round_trip_and_corruption() {
        let m = Array2::from_shape_fn((3, 4), |(i, j)| i as f64 - 0.5 * j as f64);
        let mut buf = Vec::new();
        write_matrix(&mut buf, m.view()).unwrap();
        assert_eq!(buf.len(), 12 + 48);
        assert_eq!(read_matrix(&mut buf.as_slice()).unwrap(), m);
        assert!(matches!(read_matrix(&mut &buf[..20]), Err(BinError::Corrupt(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_matrix(&mut extra.as_slice()), Err(BinError::Corrupt(_))));
    }

    #[test]
    fn prepare_is_consistent_idempotent_and_train_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DeskCorpusConfig {
            utterances_per_speaker: 3,
            secs: 0.4,
            noise_files: 2,
            noise_secs: 1.0,
            ..DeskCorpusConfig::default()
        };
        let c = write_desk_corpus(dir.path(), &cfg).unwrap();
        let m = build_manifest(&c.clean_dir, &c.noise_dir, 3, SplitCounts { train: 3, dev: 2, test: 1 }).unwrap();
        let root = dir.path().join("store");
        let fc = FeatureConfig::default();
        let r = prepare_features(&m, &root, &fc, 2).unwrap();
        assert_eq!((r.processed, r.skipped), (6, 0));
        assert!(r.failed.is_empty());

        let store = FeatureStore::open(&root).unwrap();
        for e in &m.entries {
            let t = store.load(e, Role::Noisy).unwrap().nrows();
            for role in Role::ALL {
                assert_eq!(store.load(e, role).unwrap().nrows(), t, "{} {role:?}", e.utt_id);
            }
            assert_eq!(store.load(e, Role::Target).unwrap().ncols(), TARGET_DIM);
            let irm = store.load(e, Role::Irm).unwrap();
            assert!(irm.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        let stamp = std::fs::metadata(root.join("target.pvn")).unwrap().modified().unwrap();
        let again = prepare_features(&m, &root, &fc, 1).unwrap();
        assert_eq!((again.processed, again.skipped), (0, 6));
        assert!(!again.normalizers_written);
        assert_eq!(std::fs::metadata(root.join("target.pvn")).unwrap().modified().unwrap(), stamp);

        // normalizers come from the train split alone
        let train: Vec<_> = m.split(Split::Train).map(|e| store.load(e, Role::Target).unwrap()).collect();
        let all: Vec<_> = m.entries.iter().map(|e| store.load(e, Role::Target).unwrap()).collect();
        let from_train = fit_target_normalizer(train.iter().map(|a| a.view())).unwrap();
        let from_all = fit_target_normalizer(all.iter().map(|a| a.view())).unwrap();
        let stored = store.normalizer(Role::Target).unwrap();
        assert_eq!(stored.mean.mapv(|v| v as f32), from_train.mean.mapv(|v| v as f32));
        assert_ne!(from_all.mean, from_train.mean);

        let ds = store.dataset(&m, Role::Noisy, Role::Target).unwrap();
        assert_eq!((ds.train.len(), ds.dev.len()), (3, 2));
        assert_eq!(ds.train[0].input.ncols(), fc.input_dim());
    }

    #[test]
    fn missing_files_are_reported_and_resumed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DeskCorpusConfig {
            utterances_per_speaker: 2,
            secs: 0.5,
            noise_files: 1,
            noise_secs: 0.5,
            ..DeskCorpusConfig::default()
        };
        let c = write_desk_corpus(dir.path(), &cfg).unwrap();
        let mut m = build_manifest(&c.clean_dir, &c.noise_dir, 0, SplitCounts { train: 2, dev: 1, test: 1 }).unwrap();
        let good = m.entries[3].clean_path.clone();
        m.entries[3].clean_path = dir.path().join("missing.wav");
        let root = dir.path().join("store");
        let fc = FeatureConfig::default();
        let r = prepare_features(&m, &root, &fc, 1).unwrap();
        assert_eq!(r.processed, 3);
        assert_eq!(r.failed.len(), 1);
        assert!(r.failed[0].1.contains("missing.wav"), "{:?}", r.failed);
        m.entries[3].clean_path = good;
        let r = prepare_features(&m, &root, &fc, 1).unwrap();
        assert_eq!((r.processed, r.skipped), (1, 3));
        let again = prepare_features(&m, &root, &fc, 1).unwrap();
        assert_eq!(again.skipped, 4);
    }
}
