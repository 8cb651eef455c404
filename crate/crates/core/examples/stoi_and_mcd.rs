//! Objective measures on a clean utterance degraded at several SNRs.

use parasynth::dsp::{Waveform, SAMPLE_RATE};
use parasynth::metrics::{bapd, mcd, stoi};
use parasynth::signals::{vowel_sequence, white_noise, SpeakerProfile};
use parasynth::vocoder::{analyze, VocoderConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let clean = vowel_sequence(&mut rng, &SpeakerProfile::female(), 2.0);
    let noise = white_noise(&mut rng, clean.len(), 1.0, SAMPLE_RATE);
    let cfg = VocoderConfig::default();
    let reference = analyze(&clean, &cfg)?;

    println!("{:>7} {:>8} {:>9} {:>6}", "SNR(dB)", "MCD(dB)", "BAPD(dB)", "STOI");
    for snr in [20.0, 10.0, 5.0, 0.0, -5.0] {
        let g = clean.rms() / noise.rms() * 10f64.powf(-snr / 20.0);
        let y = Waveform::new(
            clean.samples.iter().zip(&noise.samples).map(|(a, b)| a + g * b).collect(),
            SAMPLE_RATE,
        );
        let t = analyze(&y, &cfg)?;
        println!(
            "{snr:7.1} {:8.2} {:9.2} {:6.3}",
            mcd(reference.mcep.view(), t.mcep.view())?,
            bapd(reference.bap.view(), t.bap.view())?,
            stoi(&clean, &y)?
        );
    }
    Ok(())
}
