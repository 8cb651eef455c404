//! Network input of a synthetic utterance: log-mel frames with context.

use parasynth::features::{FeatureConfig, InputExtractor};
use parasynth::signals::{vowel_sequence, SpeakerProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wave = vowel_sequence(&mut ChaCha8Rng::seed_from_u64(1), &SpeakerProfile::female(), 1.0);
    let cfg = FeatureConfig::default();
    let ex = InputExtractor::new(&cfg)?;

    let mel = ex.log_mel(&wave)?;
    let stacked = ex.extract(&wave)?;
    println!("log-mel {:?}, with +-{} frames of context {:?}", mel.dim(), cfg.context_radius, stacked.dim());

    // coarse spectrogram of a few bands
    for t in (0..mel.nrows()).step_by(mel.nrows() / 10) {
        let row: Vec<String> = [0, 10, 20, 40, 60, 79].iter().map(|&b| format!("{:7.2}", mel[[t, b]])).collect();
        println!("frame {t:4}: {}", row.join(" "));
    }
    Ok(())
}
