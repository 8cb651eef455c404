//! Train a small DNN-IRM mask estimator and compare it with the oracle
//! Wiener mask on the test split.

use parasynth::corpus::{build_manifest, prepare_features, write_desk_corpus, DeskCorpusConfig, FeatureStore, Role, Split, SplitCounts};
use parasynth::dsp::FrameConfig;
use parasynth::enhance::{enhance_split, Enhancer, IrmSystem};
use parasynth::features::{vocoder_config_for, FeatureConfig};
use parasynth::metrics::{evaluate_system, format_table, Hypothesis, Reference};
use parasynth::nnet::{train, ModelConfig, OutputActivation, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("parasynth-irm-example");
    let desk = DeskCorpusConfig {
        utterances_per_speaker: 10,
        ..DeskCorpusConfig::default()
    };
    let corpus = write_desk_corpus(&root.join("corpus"), &desk)?;
    let manifest = build_manifest(&corpus.clean_dir, &corpus.noise_dir, 2, SplitCounts { train: 14, dev: 3, test: 3 })?;
    let features = FeatureConfig::default();
    prepare_features(&manifest, &root.join("store"), &features, 1)?;
    let store = FeatureStore::open(&root.join("store"))?;
    let data = store.dataset(&manifest, Role::Noisy, Role::Irm)?;

    let mut mc = ModelConfig::feedforward(features.input_dim(), features.n_mels);
    mc.hidden_width = 64;
    mc.output = OutputActivation::Sigmoid;
    let (model, history) = train(&mc, &TrainConfig { max_epochs: 10, ..TrainConfig::default() }, &data)?;
    println!("mask model: best dev MSE {:.4} at epoch {}", history.best_dev_loss, history.best_epoch);

    let irm = IrmSystem::new(model, store.normalizer(Role::Noisy)?, features.clone())?;
    let out = root.join("enhanced");
    let vcfg = vocoder_config_for(&features);
    let mut reports = Vec::new();
    for system in [Enhancer::DnnIrm(irm), Enhancer::Owm(FrameConfig::default()), Enhancer::NoisyPassthrough] {
        enhance_split(&manifest, Split::Test, &system, &out, 0, 1)?;
        let hyp = Hypothesis::Files {
            dir: out.clone(),
            label: system.kind().name().into(),
        };
        reports.push(evaluate_system(&manifest, "example", Split::Test, &hyp, Reference::Clean, &vcfg, 1)?);
    }
    print!("{}", format_table(&reports));
    Ok(())
}
