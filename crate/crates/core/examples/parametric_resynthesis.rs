//! The whole PR recipe through the library: synthetic corpus, feature
//! store, a feedforward model, enhancement of the test split and scoring
//! against the noisy input and the vocoder ceiling.

use parasynth::corpus::{build_manifest, prepare_features, write_desk_corpus, DeskCorpusConfig, FeatureStore, Role, Split, SplitCounts};
use parasynth::enhance::{enhance_split, Enhancer, PrSystem};
use parasynth::features::{FeatureConfig, ParamGen, TARGET_DIM};
use parasynth::metrics::{evaluate_system, format_table, Hypothesis, Reference};
use parasynth::nnet::{train, ModelConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("parasynth-pr-example");
    let desk = DeskCorpusConfig {
        utterances_per_speaker: 10,
        ..DeskCorpusConfig::default()
    };
    let corpus = write_desk_corpus(&root.join("corpus"), &desk)?;
    let manifest = build_manifest(&corpus.clean_dir, &corpus.noise_dir, 1, SplitCounts { train: 14, dev: 3, test: 3 })?;

    let features = FeatureConfig::default();
    let store_dir = root.join("store");
    let rep = prepare_features(&manifest, &store_dir, &features, 1)?;
    println!("prepared {} utterances ({} already up to date)", rep.processed, rep.skipped);
    let store = FeatureStore::open(&store_dir)?;
    let data = store.dataset(&manifest, Role::Noisy, Role::Target)?;

    let mut mc = ModelConfig::feedforward(features.input_dim(), TARGET_DIM);
    mc.hidden_width = 64;
    let tc = TrainConfig {
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let (model, history) = train(&mc, &tc, &data)?;
    println!("trained {} epochs, best dev loss {:.4}", history.epochs.len(), history.best_dev_loss);

    let pr = PrSystem::new(
        model,
        store.normalizer(Role::Noisy)?,
        store.normalizer(Role::Target)?,
        features.clone(),
        ParamGen::Mlpg,
    )?;
    let vocoder = pr.vocoder.clone();
    let out = root.join("enhanced");
    let mut reports = Vec::new();
    for system in [Enhancer::Pr(pr), Enhancer::Ved(vocoder.clone())] {
        enhance_split(&manifest, Split::Test, &system, &out, 0, 1)?;
        let hyp = Hypothesis::Files {
            dir: out.clone(),
            label: system.kind().name().into(),
        };
        reports.push(evaluate_system(&manifest, "example", Split::Test, &hyp, Reference::Clean, &vocoder, 1)?);
    }
    reports.push(evaluate_system(&manifest, "example", Split::Test, &Hypothesis::Noisy, Reference::Clean, &vocoder, 1)?);
    print!("{}", format_table(&reports));
    Ok(())
}
