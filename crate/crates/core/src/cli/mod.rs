//! The `parasynth` command line: one subcommand per pipeline stage.

mod commands;
mod selftest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, DeskCorpusConfig, SplitCounts};
use crate::enhance::{EnhanceError, SystemKind};
use crate::features::{FeatureConfig, FeatureError, ParamGen};
use crate::metrics::{EvalError, Reference};
use crate::nnet::{ModelKind, NnetError, TrainConfig};
use crate::vocoder::VocoderError;

pub use selftest::{selftest, SelftestOutcome};

/// Environment variable overriding the feature store root.
pub const STORE_ENV: &str = "PARASYNTH_STORE";

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    MissingFile(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Training(String),
    #[error("{0} self-test check(s) failed")]
    Selftest(usize),
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    /// Process exit code; clap's own usage errors also exit with 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MissingFile(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::Data(_) => 5,
            CliError::Training(_) => 6,
            CliError::Selftest(_) => 7,
            CliError::Partial(_) => 8,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::MissingFile(e.to_string()),
            CorpusError::Feature(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Io(_) => CliError::MissingFile(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<NnetError> for CliError {
    fn from(e: NnetError) -> Self {
        match e {
            NnetError::Io(_) => CliError::MissingFile(e.to_string()),
            NnetError::KindMismatch { .. }
            | NnetError::Version(_)
            | NnetError::Config(_)
            | NnetError::Dimension(_) => CliError::Mismatch(e.to_string()),
            NnetError::Bin(_) => CliError::Data(e.to_string()),
            _ => CliError::Training(e.to_string()),
        }
    }
}

impl From<EnhanceError> for CliError {
    fn from(e: EnhanceError) -> Self {
        match e {
            EnhanceError::Config(_) => CliError::Mismatch(e.to_string()),
            EnhanceError::Corpus(c) => c.into(),
            EnhanceError::Nnet(n) => n.into(),
            EnhanceError::Feature(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Corpus(c) => c.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<VocoderError> for CliError {
    fn from(e: VocoderError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::MissingFile(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "parasynth", version, about = "Speech enhancement by parametric resynthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a manifest of noisy mixtures from clean and noise directories.
    Mix(MixArgs),
    /// Extract inputs, targets and normalizers into a feature store.
    Prepare(PrepareArgs),
    /// Train a PR, PR-clean or DNN-IRM model.
    Train(TrainArgs),
    /// Run an enhancement system over a split or a single file.
    Enhance(EnhanceArgs),
    /// Vocoder analysis and resynthesis (VED).
    Resynth(ResynthArgs),
    /// Score system outputs against the clean references.
    Eval(EvalArgs),
    /// Tabulate saved evaluation reports.
    Report(ReportArgs),
    /// Run the built-in correctness checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores); 1 is bitwise reproducible.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MixArgs {
    #[arg(long, required_unless_present = "synth_desk")]
    pub clean_dir: Option<PathBuf>,
    #[arg(long, required_unless_present = "synth_desk")]
    pub noise_dir: Option<PathBuf>,
    /// Write a synthetic desk corpus here first and mix from it.
    #[arg(long)]
    pub synth_desk: Option<PathBuf>,
    /// Synthetic utterances per speaker (with --synth-desk).
    #[arg(long)]
    pub desk_utterances: Option<usize>,
    /// Restrict the synthetic corpus to one speaker (female or male).
    #[arg(long)]
    pub desk_speaker: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train,dev,test counts, e.g. 1000,66,66.
    #[arg(long)]
    pub splits: SplitCounts,
    #[arg(long, default_value = "manifest.jsonl")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct StoreArg {
    /// Feature store root.
    #[arg(long, env = STORE_ENV, default_value = "store")]
    pub store: PathBuf,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub store: StoreArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TrainedSystem {
    Pr,
    PrClean,
    DnnIrm,
}

impl TrainedSystem {
    pub fn kind(self) -> SystemKind {
        match self {
            TrainedSystem::Pr => SystemKind::Pr,
            TrainedSystem::PrClean => SystemKind::PrClean,
            TrainedSystem::DnnIrm => SystemKind::DnnIrm,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindArg {
    Feedforward,
    Recurrent,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Feedforward => ModelKind::Feedforward,
            KindArg::Recurrent => ModelKind::Recurrent,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGenArg {
    Static,
    Mlpg,
}

impl From<ParamGenArg> for ParamGen {
    fn from(p: ParamGenArg) -> Self {
        match p {
            ParamGenArg::Static => ParamGen::Static,
            ParamGenArg::Mlpg => ParamGen::Mlpg,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
#[value(rename_all = "snake_case")]
pub enum SystemArg {
    Pr,
    PrClean,
    Ved,
    Owm,
    DnnIrm,
    Noisy,
}

impl From<SystemArg> for SystemKind {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Pr => SystemKind::Pr,
            SystemArg::PrClean => SystemKind::PrClean,
            SystemArg::Ved => SystemKind::Ved,
            SystemArg::Owm => SystemKind::Owm,
            SystemArg::DnnIrm => SystemKind::DnnIrm,
            SystemArg::Noisy => SystemKind::NoisyPassthrough,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for crate::corpus::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => crate::corpus::Split::Train,
            SplitArg::Dev => crate::corpus::Split::Dev,
            SplitArg::Test => crate::corpus::Split::Test,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub store: StoreArg,
    #[arg(long, value_enum, default_value = "pr")]
    pub system: TrainedSystem,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Checkpoint path; history and provenance are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(long, value_enum)]
    pub system: SystemArg,
    #[arg(long, required_unless_present = "input")]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub store: StoreArg,
    /// Model checkpoint (pr, pr-clean, dnn-irm).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Require the checkpoint to hold this model kind.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Output directory for `{utt_id}.{system}.wav`.
    #[arg(long, default_value = "enhanced")]
    pub out: PathBuf,
    /// Enhance a single WAV instead of a manifest split.
    #[arg(long, requires = "output")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub param_gen: Option<ParamGenArg>,
    /// Seed of the vocoder's noise excitation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ResynthArgs {
    #[arg(long, required_unless_present = "manifest", requires = "output")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value = "enhanced")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceArg {
    Clean,
    Noisy,
}

impl From<ReferenceArg> for Reference {
    fn from(r: ReferenceArg) -> Self {
        match r {
            ReferenceArg::Clean => Reference::Clean,
            ReferenceArg::Noisy => Reference::Noisy,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output label to score (`pr`, `owm`, ...); `clean` and `noisy` score
    /// the corpus signals themselves.
    #[arg(long)]
    pub system: String,
    /// Directory holding `{utt_id}.{system}.wav`.
    #[arg(long, default_value = "enhanced")]
    pub outputs: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "clean")]
    pub reference: ReferenceArg,
    /// Report directory; `{system}.json` and `{system}.txt` are written.
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report JSON files.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add per-speaker rows.
    #[arg(long)]
    pub by_speaker: bool,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Skip the slower vocoder and corpus checks.
    #[arg(long)]
    pub quick: bool,
}

/// Settings that may come from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub features: FeatureConfig,
    pub model: ModelOverrides,
    pub train: Option<TrainConfig>,
    pub param_gen: ParamGen,
    pub desk: Option<DeskCorpusConfig>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOverrides {
    pub kind: Option<ModelKind>,
    pub hidden_layers: Option<usize>,
    pub hidden_width: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let raw = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                serde_json::from_str(&raw).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }
}

fn resolve_jobs(common: &Common, cfg: &RunConfig) -> usize {
    common
        .jobs
        .or(cfg.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

/// Resolved settings of one run, printed and stored beside its artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub settings: &'a T,
}

fn provenance_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(OsString::from).unwrap_or_default();
    name.push(".provenance.json");
    artifact.with_file_name(name)
}

fn record<T: Serialize>(command: &'static str, artifact: &Path, settings: &T) -> Result<(), CliError> {
    let p = Provenance {
        tool: "parasynth",
        version: env!("CARGO_PKG_VERSION"),
        command,
        settings,
    };
    let json = serde_json::to_string_pretty(&p).expect("plain data");
    eprintln!("resolved configuration: {}", serde_json::to_string(&p).expect("plain data"));
    let path = provenance_path(artifact);
    std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mix(a) => commands::mix(a),
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Enhance(a) => commands::enhance(a),
        Command::Resynth(a) => commands::resynth(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
        Command::Selftest(a) => {
            let outcome = selftest(a.quick);
            for (name, result) in &outcome.checks {
                match result {
                    Ok(()) => println!("PASS  {name}"),
                    Err(msg) => println!("FAIL  {name}: {msg}"),
                }
            }
            match outcome.failures() {
                0 => Ok(()),
                n => Err(CliError::Selftest(n)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["parasynth", "mix", "--bogus"]), 2);
        assert_eq!(run(["parasynth", "frobnicate"]), 2);
        assert_eq!(run(["parasynth", "--help"]), 0);
    }

    #[test]
    fn missing_files_have_their_own_code() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("nope.jsonl");
        let code = run([
            "parasynth",
            "prepare",
            "--manifest",
            m.to_str().unwrap(),
            "--store",
            dir.path().join("s").to_str().unwrap(),
        ]);
        assert_eq!(code, 3);
    }

    #[test]
    fn config_file_is_parsed_with_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"model": {"hidden_width": 64}, "param_gen": "static"}"#).unwrap();
        assert_eq!(cfg.model.hidden_width, Some(64));
        assert_eq!(cfg.param_gen, ParamGen::Static);
        assert_eq!(cfg.features, FeatureConfig::default());
    }

    #[test]
    fn provenance_sits_beside_the_artifact() {
        assert_eq!(
            provenance_path(Path::new("/a/model.pvc")),
            PathBuf::from("/a/model.pvc.provenance.json")
        );
    }
}
