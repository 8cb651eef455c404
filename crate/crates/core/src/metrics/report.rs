use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{bapd, f0_rmse_corr, mcd, stoi, vuv_error_pct, MetricsError};
use crate::corpus::{load_wav, render_mixture, CorpusError, Manifest, MixtureSpec, Split};
use crate::dsp::Waveform;
use crate::vocoder::{analyze, VocoderConfig, VocoderError};

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("{utt_id}: {source}")]
    Metric {
        utt_id: String,
        #[source]
        source: MetricsError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Vocoder(#[from] VocoderError),
    #[error("{0}")]
    Io(String),
}

/// Signal the outputs are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    #[default]
    Clean,
    Noisy,
}

/// Where the signals under test come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    /// `{dir}/{utt_id}.{label}.wav`.
    Files { dir: PathBuf, label: String },
    /// The clean signals themselves.
    Clean,
    /// The mixtures, rendered from the manifest.
    Noisy,
}

impl Hypothesis {
    pub fn label(&self) -> &str {
        match self {
            Hypothesis::Files { label, .. } => label,
            Hypothesis::Clean => "clean",
            Hypothesis::Noisy => "noisy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub utt_id: String,
    pub speaker: String,
    pub mcd_db: f64,
    pub bapd_db: f64,
    /// `None` when no frame is voiced in both signals.
    pub f0_rmse_hz: Option<f64>,
    /// `None` when undefined (no mutually voiced frames or constant F0).
    pub f0_corr: Option<f64>,
    pub vuv_pct: f64,
    pub stoi: Option<f64>,
    /// SNR of the mixture the output was made from.
    pub snr_db: f64,
}

/// Arithmetic means over the rows where each value is defined.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub mcd_db: Option<f64>,
    pub bapd_db: Option<f64>,
    pub f0_rmse_hz: Option<f64>,
    pub f0_corr: Option<f64>,
    pub vuv_pct: Option<f64>,
    pub stoi: Option<f64>,
    pub snr_db: Option<f64>,
    pub n: usize,
}

fn mean<I: Iterator<Item = Option<f64>>>(it: I) -> Option<f64> {
    let (s, n) = it.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricMeans {
    pub fn of(rows: &[&EvalRow]) -> Self {
        Self {
            mcd_db: mean(rows.iter().map(|r| Some(r.mcd_db))),
            bapd_db: mean(rows.iter().map(|r| Some(r.bapd_db))),
            f0_rmse_hz: mean(rows.iter().map(|r| r.f0_rmse_hz)),
            f0_corr: mean(rows.iter().map(|r| r.f0_corr)),
            vuv_pct: mean(rows.iter().map(|r| Some(r.vuv_pct))),
            stoi: mean(rows.iter().map(|r| r.stoi)),
            snr_db: mean(rows.iter().map(|r| Some(r.snr_db))),
            n: rows.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub reference: Reference,
    pub split: Split,
    /// Manifest the report refers to, as given by the caller.
    pub manifest: String,
    pub expected: usize,
    pub evaluated: usize,
    /// Utterances whose output file was not found.
    pub missing: Vec<String>,
    pub rows: Vec<EvalRow>,
    pub mean: MetricMeans,
}

impl EvalReport {
    /// Means per speaker label, sorted by speaker.
    pub fn by_speaker(&self) -> BTreeMap<String, MetricMeans> {
        let mut groups: BTreeMap<String, Vec<&EvalRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry(r.speaker.clone()).or_default().push(r);
        }
        groups.into_iter().map(|(k, v)| (k, MetricMeans::of(&v))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        serde_json::from_str(s).map_err(|e| EvalError::Io(format!("report: {e}")))
    }

    /// Writes `{stem}.json` and `{stem}.txt`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::Io(format!("{}: {e}", dir.display())))?;
        let write = |name: String, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| EvalError::Io(format!("{}: {e}", p.display())))
        };
        write(format!("{stem}.json"), self.to_json() + "\n")?;
        let mut table = format_table(std::slice::from_ref(self));
        if self.by_speaker().len() > 1 {
            table.push('\n');
            table.push_str(&format_speaker_table(std::slice::from_ref(self)));
        }
        write(format!("{stem}.txt"), table)
    }
}

fn cell(v: Option<f64>, prec: usize) -> String {
    v.map_or("-".to_string(), |v| format!("{v:.prec$}"))
}

fn format_rows(rows: Vec<(String, &MetricMeans)>) -> String {
    let header = ["system", "MCD(dB)", "BAPD(dB)", "RMSE(Hz)", "CORR", "VUV(%)", "STOI", "SNR(dB)", "n"];
    let body: Vec<Vec<String>> = rows
        .into_iter()
        .map(|(name, m)| {
            vec![
                name,
                cell(m.mcd_db, 2),
                cell(m.bapd_db, 2),
                cell(m.f0_rmse_hz, 2),
                cell(m.f0_corr, 3),
                cell(m.vuv_pct, 2),
                cell(m.stoi, 3),
                cell(m.snr_db, 2),
                m.n.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        for (c, s) in cells.iter().enumerate() {
            if c == 0 {
                let _ = write!(out, "{s:<w$}", w = widths[c]);
            } else {
                let _ = write!(out, "  {s:>w$}", w = widths[c]);
            }
        }
        out.push('\n');
    };
    line(&mut out, header.to_vec());
    for r in &body {
        line(&mut out, r.iter().map(|s| s.as_str()).collect());
    }
    out
}

/// Systems as rows, metrics as columns.
pub fn format_table(reports: &[EvalReport]) -> String {
    format_rows(reports.iter().map(|r| (r.system.clone(), &r.mean)).collect())
}

/// One row per system and speaker, labelled `system/speaker`.
pub fn format_speaker_table(reports: &[EvalReport]) -> String {
    let groups: Vec<(String, MetricMeans)> = reports
        .iter()
        .flat_map(|r| r.by_speaker().into_iter().map(|(s, m)| (format!("{}/{s}", r.system), m)))
        .collect();
    format_rows(groups.iter().map(|(k, m)| (k.clone(), m)).collect())
}

fn score(
    entry: &MixtureSpec,
    hyp: &Waveform,
    reference: Reference,
    vcfg: &VocoderConfig,
) -> Result<EvalRow, EvalError> {
    let (clean, m) = render_mixture(entry)?;
    let refw = match reference {
        Reference::Clean => clean,
        Reference::Noisy => m.noisy,
    };
    let n = refw.len().min(hyp.len());
    let r = Waveform::new(refw.samples[..n].to_vec(), refw.sample_rate);
    let h = Waveform::new(hyp.samples[..n].to_vec(), hyp.sample_rate);
    let metric = |source| EvalError::Metric {
        utt_id: entry.utt_id.clone(),
        source,
    };
    let ta = analyze(&r, vcfg)?;
    let tb = analyze(&h, vcfg)?;
    let hop = vcfg.frame.hop_secs();
    let (fa, fb) = (ta.f0_track(hop), tb.f0_track(hop));
    let (f0_rmse_hz, f0_corr) = match f0_rmse_corr(&fa, &fb) {
        Ok((rmse, corr)) => (Some(rmse), Some(corr)),
        Err(MetricsError::NoVoicedFrames) => (None, None),
        Err(MetricsError::ZeroVariance) => {
            let (rmse, _) = rmse_only(&fa, &fb);
            (Some(rmse), None)
        }
        Err(e) => return Err(metric(e)),
    };
    let stoi = match stoi(&r, &h) {
        Ok(v) => Some(v),
        Err(MetricsError::TooShort { .. }) => None,
        Err(e) => return Err(metric(e)),
    };
    Ok(EvalRow {
        utt_id: entry.utt_id.clone(),
        speaker: entry.speaker().to_string(),
        mcd_db: mcd(ta.mcep.view(), tb.mcep.view()).map_err(metric)?,
        bapd_db: bapd(ta.bap.view(), tb.bap.view()).map_err(metric)?,
        f0_rmse_hz,
        f0_corr,
        vuv_pct: vuv_error_pct(&fa, &fb).map_err(metric)?,
        stoi,
        snr_db: entry.snr_db,
    })
}

fn rmse_only(a: &crate::vocoder::F0Track, b: &crate::vocoder::F0Track) -> (f64, usize) {
    let d: Vec<f64> = (0..a.len())
        .filter(|&t| a.vuv[t] && b.vuv[t])
        .map(|t| a.f0[t] - b.f0[t])
        .collect();
    ((d.iter().map(|v| v * v).sum::<f64>() / d.len().max(1) as f64).sqrt(), d.len())
}

/// Scores every utterance of a split. Vocoder-domain measures compare the
/// analyses of reference and output, STOI compares the waveforms. Missing
/// output files are listed and the report covers the rest.
pub fn evaluate_system(
    manifest: &Manifest,
    manifest_label: &str,
    split: Split,
    hypothesis: &Hypothesis,
    reference: Reference,
    vcfg: &VocoderConfig,
    jobs: usize,
) -> Result<EvalReport, EvalError> {
    let entries: Vec<&MixtureSpec> = manifest.split(split).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Io(e.to_string()))?;
    let results: Vec<Result<Option<EvalRow>, EvalError>> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let hyp = match hypothesis {
                    Hypothesis::Files { dir, label } => {
                        let p = dir.join(format!("{}.{label}.wav", e.utt_id));
                        if !p.is_file() {
                            return Ok(None);
                        }
                        load_wav(&p)?
                    }
                    Hypothesis::Clean => load_wav(&e.clean_path)?,
                    Hypothesis::Noisy => render_mixture(e)?.1.noisy,
                };
                score(e, &hyp, reference, vcfg).map(Some)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (e, r) in entries.iter().zip(results) {
        match r? {
            Some(row) => rows.push(row),
            None => missing.push(e.utt_id.clone()),
        }
    }
    let mean = MetricMeans::of(&rows.iter().collect::<Vec<_>>());
    Ok(EvalReport {
        system: hypothesis.label().to_string(),
        reference,
        split,
        manifest: manifest_label.to_string(),
        expected: entries.len(),
        evaluated: rows.len(),
        missing,
        rows,
        mean,
    })
}
