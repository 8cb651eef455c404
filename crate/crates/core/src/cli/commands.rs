use std::path::{Path, PathBuf};

use serde_json::json;

use super::{
    io_err, record, resolve_jobs, CliError, EnhanceArgs, EvalArgs, MixArgs, PrepareArgs, ReportArgs,
    ResynthArgs, RunConfig, SystemArg, TrainArgs, TrainedSystem,
};
use crate::corpus::{
    build_manifest, load_wav, prepare_features, save_wav, write_desk_corpus, FeatureStore, Manifest,
    Role, Split,
};
use crate::dsp::Waveform;
use crate::enhance::{enhance_split, ved, Enhancer, IrmSystem, PrSystem, SystemKind};
use crate::features::{vocoder_config_for, TARGET_DIM};
use crate::metrics::{evaluate_system, format_speaker_table, format_table, EvalReport, Hypothesis};
use crate::nnet::{
    load_checkpoint, load_checkpoint_as, save_checkpoint, train_with, Model, ModelConfig, ModelKind,
    OutputActivation, TrainConfig,
};

fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    Ok(Manifest::load(path)?)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| io_err(d, e)),
        _ => Ok(()),
    }
}

pub fn mix(a: MixArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let mut desk = None;
    let (clean_dir, noise_dir) = match &a.synth_desk {
        Some(root) => {
            let mut d = cfg.desk.clone().unwrap_or_default();
            if let Some(n) = a.desk_utterances {
                d.utterances_per_speaker = n;
            }
            if let Some(name) = &a.desk_speaker {
                d.speakers.retain(|s| &s.name == name);
                if d.speakers.is_empty() {
                    return Err(CliError::Usage(format!("unknown desk speaker {name:?}")));
                }
            }
            let corpus = write_desk_corpus(root, &d)?;
            eprintln!(
                "wrote {} clean and {} noise files under {}",
                corpus.clean_files.len(),
                corpus.noise_files.len(),
                root.display()
            );
            desk = Some(d);
            (corpus.clean_dir, corpus.noise_dir)
        }
        None => (
            a.clean_dir.clone().expect("required by clap"),
            a.noise_dir.clone().expect("required by clap"),
        ),
    };
    let manifest = build_manifest(&clean_dir, &noise_dir, a.seed, a.splits)?;
    ensure_parent(&a.out)?;
    manifest.save(&a.out)?;
    eprintln!(
        "{}: {} train, {} dev, {} test",
        a.out.display(),
        a.splits.train,
        a.splits.dev,
        a.splits.test
    );
    record(
        "mix",
        &a.out,
        &json!({
            "clean_dir": clean_dir,
            "noise_dir": noise_dir,
            "seed": a.seed,
            "splits": a.splits,
            "desk": desk,
        }),
    )
}

pub fn prepare(a: PrepareArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let jobs = resolve_jobs(&a.common, &cfg);
    let manifest = load_manifest(&a.manifest)?;
    let root = &a.store.store;
    std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    record(
        "prepare",
        &root.join("store"),
        &json!({ "manifest": a.manifest, "features": cfg.features, "jobs": jobs }),
    )?;
    let report = prepare_features(&manifest, root, &cfg.features, jobs)?;
    eprintln!(
        "prepared {}, skipped {} unchanged, {} failed{}",
        report.processed,
        report.skipped,
        report.failed.len(),
        if report.normalizers_written { "; normalizers refit" } else { "" }
    );
    if report.failed.is_empty() {
        return Ok(());
    }
    for (utt, err) in &report.failed {
        eprintln!("  {utt}: {err}");
    }
    Err(CliError::Partial(format!(
        "{} of {} utterances could not be prepared",
        report.failed.len(),
        manifest.entries.len()
    )))
}

/// Input and target roles, output activation and output width of a trained
/// system.
fn system_roles(system: TrainedSystem, n_mels: usize) -> (Role, Role, OutputActivation, usize) {
    match system {
        TrainedSystem::Pr => (Role::Noisy, Role::Target, OutputActivation::Linear, TARGET_DIM),
        TrainedSystem::PrClean => (Role::Clean, Role::Target, OutputActivation::Linear, TARGET_DIM),
        TrainedSystem::DnnIrm => (Role::Noisy, Role::Irm, OutputActivation::Sigmoid, n_mels),
    }
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let jobs = resolve_jobs(&a.common, &cfg);
    let manifest = load_manifest(&a.manifest)?;
    let store = FeatureStore::open(&a.store.store)?;
    let features = &store.meta.features;
    let (input, target, output, out_dim) = system_roles(a.system, features.n_mels);

    let kind = a
        .kind
        .map(ModelKind::from)
        .or(cfg.model.kind)
        .unwrap_or(ModelKind::Feedforward);
    let mut model_cfg = match kind {
        ModelKind::Feedforward => ModelConfig::feedforward(features.input_dim(), out_dim),
        ModelKind::Recurrent => ModelConfig::recurrent(features.input_dim(), out_dim),
    };
    model_cfg.output = output;
    if let Some(n) = a.hidden_layers.or(cfg.model.hidden_layers) {
        model_cfg.hidden_layers = n;
    }
    if let Some(n) = a.hidden_width.or(cfg.model.hidden_width) {
        model_cfg.hidden_width = n;
    }

    let mut tc = cfg.train.clone().unwrap_or_else(|| TrainConfig::for_kind(kind));
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut tc.adam.learning_rate, a.learning_rate);
    set(&mut tc.adam.beta1, a.beta1);
    set(&mut tc.adam.beta2, a.beta2);
    set(&mut tc.adam.epsilon, a.epsilon);
    tc.batch_size = a.batch_size.unwrap_or(tc.batch_size);
    tc.max_epochs = a.max_epochs.unwrap_or(tc.max_epochs);
    tc.patience = a.patience.unwrap_or(tc.patience);
    tc.seed = a.seed.unwrap_or(tc.seed);
    tc.jobs = jobs;
    model_cfg.seed = tc.seed;
    model_cfg.validate()?;
    tc.validate()?;

    ensure_parent(&a.out)?;
    record(
        "train",
        &a.out,
        &json!({
            "manifest": a.manifest,
            "store": a.store.store,
            "system": a.system,
            "features": features,
            "model": model_cfg,
            "train": tc,
        }),
    )?;
    let data = store.dataset(&manifest, input, target)?;
    let model = Model::new(model_cfg)?;
    eprintln!(
        "training {} {:?} model ({} parameters) on {} utterances, {} dev",
        a.system.kind().name(),
        kind,
        model.n_parameters(),
        data.train.len(),
        data.dev.len()
    );
    let (model, history) = train_with(model, &tc, &data, |r| {
        eprintln!("epoch {:3}  train {:.6}  dev {:.6}", r.epoch, r.train_loss, r.dev_loss)
    })?;
    eprintln!(
        "best dev loss {:.6} at epoch {}{}",
        history.best_dev_loss,
        history.best_epoch,
        if history.stopped_early { " (stopped early)" } else { "" }
    );
    save_checkpoint(&model, &a.out)?;
    let hist_path = with_suffix(&a.out, ".history.json");
    let body = serde_json::to_string_pretty(&history).expect("plain data") + "\n";
    std::fs::write(&hist_path, body).map_err(|e| io_err(&hist_path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn load_model(path: Option<&Path>, kind: Option<ModelKind>) -> Result<Model, CliError> {
    let path = path.ok_or_else(|| CliError::Usage("this system needs --checkpoint".into()))?;
    Ok(match kind {
        Some(k) => load_checkpoint_as(path, k)?,
        None => load_checkpoint(path)?,
    })
}

fn build_enhancer(a: &EnhanceArgs, cfg: &RunConfig) -> Result<(Enhancer, serde_json::Value), CliError> {
    let kind = SystemKind::from(a.system);
    let param_gen = a.param_gen.map(Into::into).unwrap_or(cfg.param_gen);
    let needs_model = matches!(a.system, SystemArg::Pr | SystemArg::PrClean | SystemArg::DnnIrm);
    if !needs_model {
        let features = cfg.features.clone();
        let settings = json!({ "features": features });
        let e = match kind {
            SystemKind::Ved => Enhancer::Ved(vocoder_config_for(&features)),
            SystemKind::Owm => Enhancer::Owm(features.frame),
            _ => Enhancer::NoisyPassthrough,
        };
        return Ok((e, settings));
    }
    let store = FeatureStore::open(&a.store.store)?;
    let features = store.meta.features.clone();
    let model = load_model(a.checkpoint.as_deref(), a.kind.map(Into::into))?;
    let settings = json!({
        "store": a.store.store,
        "checkpoint": a.checkpoint,
        "model": model.config,
        "features": features,
        "param_gen": param_gen,
    });
    let e = match a.system {
        SystemArg::Pr => Enhancer::Pr(PrSystem::new(
            model,
            store.normalizer(Role::Noisy)?,
            store.normalizer(Role::Target)?,
            features,
            param_gen,
        )?),
        SystemArg::PrClean => Enhancer::PrClean(PrSystem::new(
            model,
            store.normalizer(Role::Clean)?,
            store.normalizer(Role::Target)?,
            features,
            param_gen,
        )?),
        _ => Enhancer::DnnIrm(IrmSystem::new(model, store.normalizer(Role::Noisy)?, features)?),
    };
    Ok((e, settings))
}

/// Runs a system on one file. PR-clean and VED treat it as clean speech.
fn enhance_file(e: &Enhancer, wave: &Waveform, seed: u64) -> Result<Waveform, CliError> {
    Ok(match e {
        Enhancer::Pr(s) | Enhancer::PrClean(s) => s.enhance(wave, seed)?,
        Enhancer::Ved(v) => ved(wave, v, seed)?,
        Enhancer::DnnIrm(s) => s.enhance(wave)?,
        Enhancer::NoisyPassthrough => wave.clone().limit_peak(crate::enhance::OUTPUT_PEAK),
        Enhancer::Owm(_) => {
            return Err(CliError::Usage(
                "owm needs the separate speech and noise of a manifest entry".into(),
            ))
        }
    })
}

pub fn enhance(a: EnhanceArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let jobs = resolve_jobs(&a.common, &cfg);
    let (enhancer, settings) = build_enhancer(&a, &cfg)?;
    let name = enhancer.kind().name();
    run_enhancer(&enhancer, settings, a.input.as_deref(), a.output.as_deref(), a.manifest.as_deref(), a.split.into(), &a.out, a.seed, jobs, name)
}

#[allow(clippy::too_many_arguments)]
fn run_enhancer(
    enhancer: &Enhancer,
    settings: serde_json::Value,
    input: Option<&Path>,
    output: Option<&Path>,
    manifest: Option<&Path>,
    split: Split,
    out: &Path,
    seed: u64,
    jobs: usize,
    command: &'static str,
) -> Result<(), CliError> {
    let mut settings = settings;
    settings["system"] = json!(command);
    settings["seed"] = json!(seed);
    if let (Some(input), Some(output)) = (input, output) {
        settings["input"] = json!(input);
        let wave = load_wav(input)?;
        let y = enhance_file(enhancer, &wave, seed)?;
        ensure_parent(output)?;
        save_wav(output, &y)?;
        eprintln!("{} -> {}", input.display(), output.display());
        return record("enhance", output, &settings);
    }
    let mpath = manifest.ok_or_else(|| CliError::Usage("need --manifest or --input".into()))?;
    let manifest = load_manifest(mpath)?;
    settings["manifest"] = json!(mpath);
    settings["split"] = json!(split);
    let paths = enhance_split(&manifest, split, enhancer, out, seed, jobs)?;
    eprintln!("wrote {} {command} outputs to {}", paths.len(), out.display());
    record("enhance", &out.join(command), &settings)
}

pub fn resynth(a: ResynthArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let jobs = resolve_jobs(&a.common, &cfg);
    let e = Enhancer::Ved(vocoder_config_for(&cfg.features));
    let settings = json!({ "features": cfg.features });
    run_enhancer(&e, settings, a.input.as_deref(), a.output.as_deref(), a.manifest.as_deref(), a.split.into(), &a.out, a.seed, jobs, "ved")
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref())?;
    let jobs = resolve_jobs(&a.common, &cfg);
    let manifest = load_manifest(&a.manifest)?;
    let hyp = match a.system.as_str() {
        "clean" => Hypothesis::Clean,
        "noisy" => Hypothesis::Noisy,
        s => Hypothesis::Files {
            dir: a.outputs.clone(),
            label: s.to_string(),
        },
    };
    let vcfg = vocoder_config_for(&cfg.features);
    let label = a.manifest.display().to_string();
    let report = evaluate_system(&manifest, &label, a.split.into(), &hyp, a.reference.into(), &vcfg, jobs)?;
    if !report.missing.is_empty() {
        eprintln!(
            "warning: {} of {} outputs missing: {}",
            report.missing.len(),
            report.expected,
            report.missing.join(", ")
        );
    }
    if report.evaluated == 0 {
        return Err(CliError::MissingFile(format!(
            "no {} outputs found in {}",
            a.system,
            a.outputs.display()
        )));
    }
    report.save(&a.out, &a.system)?;
    print!("{}", format_table(std::slice::from_ref(&report)));
    record(
        "eval",
        &a.out.join(&a.system),
        &json!({
            "manifest": a.manifest,
            "system": a.system,
            "outputs": a.outputs,
            "split": Split::from(a.split),
            "reference": report.reference,
            "vocoder": vcfg,
        }),
    )
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    let reports: Vec<EvalReport> = a
        .reports
        .iter()
        .map(|p| {
            let raw = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            EvalReport::from_json(&raw).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut table = format_table(&reports);
    if a.by_speaker {
        table.push('\n');
        table.push_str(&format_speaker_table(&reports));
    }
    print!("{table}");
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        std::fs::write(out, &table).map_err(|e| io_err(out, e))?;
    }
    Ok(())
}
