//! Oracle Wiener masking at 0 dB against the unprocessed mixture.

use parasynth::dsp::{FrameConfig, Waveform, SAMPLE_RATE};
use parasynth::enhance::owm_enhance;
use parasynth::metrics::stoi;
use parasynth::signals::{colored_noise, vowel_sequence, NoiseColor, SpeakerProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for color in NoiseColor::ALL {
        let clean = vowel_sequence(&mut rng, &SpeakerProfile::male(), 1.5);
        let noise = colored_noise(&mut rng, color, clean.len(), clean.rms(), SAMPLE_RATE);
        let noisy = Waveform::new(
            clean.samples.iter().zip(&noise.samples).map(|(a, b)| a + b).collect(),
            SAMPLE_RATE,
        );
        let owm = owm_enhance(&clean, &noise, &noisy, FrameConfig::default())?;
        println!(
            "{color:?}: STOI noisy {:.3}, OWM {:.3}",
            stoi(&clean, &noisy)?,
            stoi(&clean, &owm)?
        );
    }
    Ok(())
}
